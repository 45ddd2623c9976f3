//! Exact and log-space probability kernels and the tail facts used by the
//! lower-bound constructions.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use statrs::function::factorial::ln_factorial;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Largest `n` for which binomial coefficients are computed in `u128`.
pub const EXACT_BINOMIAL_MAX_N: u64 = 60;

/// Natural logarithm of a nonnegative weight; `-inf` encodes zero.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct LogWeight(f64);

impl LogWeight {
    pub const ZERO: LogWeight = LogWeight(f64::NEG_INFINITY);
    pub const ONE: LogWeight = LogWeight(0.0);

    pub fn from_ln(value: f64) -> Self {
        LogWeight(value)
    }

    pub fn from_prob(p: f64) -> Self {
        if p <= 0.0 {
            Self::ZERO
        } else {
            LogWeight(p.ln())
        }
    }

    pub fn ln(self) -> f64 {
        self.0
    }

    pub fn prob(self) -> f64 {
        self.0.exp()
    }

    pub fn is_zero(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }

    /// Max-shifted log-sum-exp.
    pub fn sum<I: IntoIterator<Item = LogWeight>>(weights: I) -> LogWeight {
        let ws: Vec<f64> = weights.into_iter().map(|w| w.0).collect();
        let max = ws.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Self::ZERO;
        }
        LogWeight(max + ws.iter().map(|w| (w - max).exp()).sum::<f64>().ln())
    }
}

/// Multiplicities `k_j` of each domain point in a sample.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MultiplicityProfile {
    pub counts: Vec<u64>,
}

impl MultiplicityProfile {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// `C(n, k)` in `u128`; `None` above [`EXACT_BINOMIAL_MAX_N`].
pub fn binomial_u128(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    if n > EXACT_BINOMIAL_MAX_N {
        return None;
    }
    checked_binomial(n, k)
}

/// `C(n, k)` when it fits in `u128`.
fn checked_binomial(n: u64, k: u64) -> Option<u128> {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        // c·(n−i) = C(n, i+1)·(i+1), so overflow here is near-final
        c = c.checked_mul((n - i) as u128)? / (i + 1) as u128;
    }
    Some(c)
}

/// `C(n, k)` as an arbitrary-precision integer.
pub fn binomial_big(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut c = BigUint::one();
    for i in 0..k {
        c *= n - i;
        c /= i + 1;
    }
    c
}

/// `ln C(n, k)`, from the exact coefficient whenever it fits in `u128`.
/// Near the edges of a wide row this avoids cancelling large log-factorials.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    let approx = ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k);
    // ln(2^128) ≈ 88.7; skip the exact attempt when it must overflow
    if approx < 88.0 {
        if let Some(c) = checked_binomial(n, k) {
            return (c as f64).ln();
        }
    }
    approx
}

fn check_prob(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!("probability {p} outside [0, 1]")));
    }
    Ok(())
}

/// `P{Binom(n, p) = k}`.
pub fn binomial_pmf(n: u64, p: f64, k: u64) -> Result<LogWeight> {
    check_prob(p)?;
    if k > n {
        return Err(Error::domain(format!(
            "binomial pmf needs k <= n, got k = {k}, n = {n}"
        )));
    }
    if p == 0.0 {
        return Ok(if k == 0 { LogWeight::ONE } else { LogWeight::ZERO });
    }
    if p == 1.0 {
        return Ok(if k == n { LogWeight::ONE } else { LogWeight::ZERO });
    }
    Ok(LogWeight(
        ln_choose(n, k) + k as f64 * p.ln() + (n - k) as f64 * (-p).ln_1p(),
    ))
}

/// `P{Binom(n, p) >= k}`.
pub fn binomial_tail(n: u64, p: f64, k: u64) -> Result<f64> {
    check_prob(p)?;
    if k > n {
        return Err(Error::domain(format!(
            "binomial tail needs k <= n, got k = {k}, n = {n}"
        )));
    }
    let terms = (k..=n).map(|j| binomial_pmf(n, p, j)).collect::<Result<Vec<_>>>()?;
    Ok(LogWeight::sum(terms).prob().min(1.0))
}

fn check_hypergeometric(n: u64, successes: u64, draws: u64) -> Result<()> {
    if successes > n || draws > n {
        return Err(Error::domain(format!(
            "hypergeometric needs K <= N and u <= N, got N = {n}, K = {successes}, u = {draws}"
        )));
    }
    Ok(())
}

/// `P{k}` for `k` successes in `u` draws without replacement from `N` items
/// of which `K` are successes.
///
/// Exact integer arithmetic for `N <= 60`, log-factorials above.
pub fn hypergeometric_pmf(n: u64, successes: u64, draws: u64, k: u64) -> Result<LogWeight> {
    check_hypergeometric(n, successes, draws)?;
    if k > successes.min(draws) {
        return Err(Error::domain(format!(
            "hypergeometric needs k <= min(K, u), got k = {k}, K = {successes}, u = {draws}"
        )));
    }
    if draws - k > n - successes {
        return Ok(LogWeight::ZERO);
    }
    if n <= EXACT_BINOMIAL_MAX_N {
        let num = binomial_u128(successes, k).unwrap() * binomial_u128(n - successes, draws - k).unwrap();
        let den = binomial_u128(n, draws).unwrap();
        return Ok(LogWeight((num as f64 / den as f64).ln()));
    }
    Ok(LogWeight(
        ln_choose(successes, k) + ln_choose(n - successes, draws - k) - ln_choose(n, draws),
    ))
}

/// The same probability as an exact ratio of binomial coefficients.
pub fn hypergeometric_prob_exact(n: u64, successes: u64, draws: u64, k: u64) -> Result<BigRational> {
    check_hypergeometric(n, successes, draws)?;
    if k > successes.min(draws) {
        return Err(Error::domain("hypergeometric needs k <= min(K, u)"));
    }
    let num = binomial_big(successes, k) * binomial_big(n - successes, draws - k);
    Ok(BigRational::new(
        BigInt::from(num),
        BigInt::from(binomial_big(n, draws)),
    ))
}

/// Generic-scalar hypergeometric probability.
pub fn hypergeometric_prob<T: Scalar>(n: u64, successes: u64, draws: u64, k: u64) -> Result<T> {
    hypergeometric_prob_exact(n, successes, draws, k).map(|q| T::from_big_rational(&q))
}

/// Mean `uK/N` and variance `uK(N-K)(N-u) / (N^2 (N-1))`.
pub fn hypergeometric_moments(n: u64, successes: u64, draws: u64) -> Result<(f64, f64)> {
    check_hypergeometric(n, successes, draws)?;
    if n == 0 {
        return Ok((0.0, 0.0));
    }
    let (nf, kf, uf) = (n as f64, successes as f64, draws as f64);
    let mean = uf * kf / nf;
    let variance = if n == 1 {
        0.0
    } else {
        uf * kf * (nf - kf) * (nf - uf) / (nf * nf * (nf - 1.0))
    };
    Ok((mean, variance))
}

/// One multinomial draw of `n` trials over `probs`.
pub fn multinomial_sample<R: Rng + ?Sized>(probs: &[f64], n: u64, rng: &mut R) -> Result<MultiplicityProfile> {
    if probs.iter().any(|&p| !(p >= 0.0)) {
        return Err(Error::domain("multinomial probabilities must be nonnegative"));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::domain(format!(
            "multinomial probabilities sum to {total}, not 1"
        )));
    }
    let mut counts = vec![0u64; probs.len()];
    let mut left = n;
    let mut mass = 1.0f64;
    for (j, &p) in probs.iter().enumerate() {
        if left == 0 {
            break;
        }
        if j + 1 == probs.len() {
            counts[j] = left;
            break;
        }
        let q = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 1.0 };
        let draw = Binomial::new(left, q)
            .map_err(|e| Error::domain(e.to_string()))?
            .sample(rng);
        counts[j] = draw;
        left -= draw;
        mass -= p;
    }
    Ok(MultiplicityProfile { counts })
}

/// One-sided Chebyshev–Cantelli lower bound on `P{X >= threshold}`:
/// `1 - var / (var + (mean - threshold)^2)` when `threshold < mean`, else 0.
pub fn chebyshev_cantelli(mean: f64, variance: f64, threshold: f64) -> f64 {
    if !(threshold < mean) {
        return 0.0;
    }
    let gap = mean - threshold;
    let denom = variance + gap * gap;
    if denom == 0.0 {
        return 0.0;
    }
    (1.0 - variance / denom).clamp(0.0, 1.0)
}

/// Exact facts about `Binom(2k, 1/2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CentralFacts {
    pub k: u64,
    /// `P{Binom(2k, 1/2) >= k}`.
    pub at_least_half: f64,
    /// `P{Binom(2k, 1/2) = k}`.
    pub central_pmf: f64,
    /// `sqrt(1 / (4 pi k))`.
    pub central_bound: f64,
    pub at_least_half_holds: bool,
    pub central_bound_holds: bool,
}

pub fn binomial_central_facts(k: u64) -> Result<CentralFacts> {
    if k == 0 {
        return Err(Error::domain("binomial central facts need k >= 1"));
    }
    let central = BigRational::new(
        BigInt::from(binomial_big(2 * k, k)),
        BigInt::from(BigUint::one() << (2 * k) as usize),
    );
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    let at_least_half = (BigRational::one() + &central) * &half;
    let central_pmf = ToPrimitive::to_f64(&central).unwrap_or(f64::NAN);
    let central_bound = (1.0 / (4.0 * std::f64::consts::PI * k as f64)).sqrt();
    Ok(CentralFacts {
        k,
        at_least_half: ToPrimitive::to_f64(&at_least_half).unwrap_or(f64::NAN),
        central_pmf,
        central_bound,
        at_least_half_holds: at_least_half >= half,
        central_bound_holds: central_pmf <= central_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use approx::assert_relative_eq;

    #[test]
    fn binomial_pmf_examples() {
        assert_relative_eq!(binomial_pmf(2, 0.5, 1).unwrap().prob(), 0.5, epsilon = 1e-15);
        assert_eq!(binomial_pmf(0, 0.3, 0).unwrap().prob(), 1.0);
        // C(10,3) 0.3^3 0.7^7 = 120 * 0.027 * 0.0823543
        assert_relative_eq!(binomial_pmf(10, 0.3, 3).unwrap().prob(), 0.266_827_932, epsilon = 1e-9);
        assert!(binomial_pmf(3, 0.5, 4).is_err());
        assert!(binomial_pmf(3, 1.5, 1).is_err());
    }

    #[test]
    fn binomial_tail_matches_direct_sum() {
        let direct: f64 = (4..=10).map(|k| binomial_pmf(10, 0.3, k).unwrap().prob()).sum();
        assert_relative_eq!(binomial_tail(10, 0.3, 4).unwrap(), direct, epsilon = 1e-14);
        assert_relative_eq!(binomial_tail(10, 0.3, 0).unwrap(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn pmfs_sum_to_one() {
        for &(n, p) in &[(1u64, 0.2), (30, 0.5), (200, 0.01), (1000, 0.37)] {
            let s = LogWeight::sum((0..=n).map(|k| binomial_pmf(n, p, k).unwrap()));
            assert!((s.prob() - 1.0).abs() < 1e-12, "n={n} p={p}");
        }
        for &(n, big_k, u) in &[(10u64, 4u64, 5u64), (60, 13, 40), (61, 13, 40), (200, 77, 150)] {
            let lo = u.saturating_sub(n - big_k);
            let s = LogWeight::sum((lo..=big_k.min(u)).map(|k| hypergeometric_pmf(n, big_k, u, k).unwrap()));
            assert!((s.prob() - 1.0).abs() < 1e-12, "N={n} K={big_k} u={u}");
        }
    }

    #[test]
    fn hypergeometric_examples() {
        assert_relative_eq!(
            hypergeometric_pmf(10, 4, 5, 2).unwrap().prob(),
            10.0 / 21.0,
            epsilon = 1e-15
        );
        assert_eq!(hypergeometric_pmf(5, 0, 3, 0).unwrap().prob(), 1.0);
        assert_eq!(hypergeometric_pmf(6, 6, 2, 2).unwrap().prob(), 1.0);
        assert!(hypergeometric_pmf(5, 6, 3, 0).is_err());
        assert!(hypergeometric_pmf(5, 2, 3, 3).is_err());
        assert!(hypergeometric_pmf(5, 2, 6, 1).is_err());
        assert_eq!(
            hypergeometric_prob_exact(10, 4, 5, 2).unwrap(),
            BigRational::new(BigInt::from(10), BigInt::from(21))
        );
    }

    #[test]
    fn exact_and_log_paths_agree_across_the_switch() {
        for &(n, big_k, u, k) in &[(60u64, 20u64, 30u64, 10u64), (61, 20, 30, 10), (64, 4, 48, 4)] {
            let lw = hypergeometric_pmf(n, big_k, u, k).unwrap().prob();
            let ex: f64 = hypergeometric_prob(n, big_k, u, k).unwrap();
            assert_relative_eq!(lw, ex, max_relative = 1e-12);
        }
    }

    #[test]
    fn hypergeometric_moment_examples() {
        let (mean, var) = hypergeometric_moments(10, 4, 5).unwrap();
        assert_relative_eq!(mean, 2.0, epsilon = 1e-15);
        assert_relative_eq!(var, 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(hypergeometric_moments(9, 4, 9).unwrap().1, 0.0);
        assert_eq!(hypergeometric_moments(1, 1, 1).unwrap(), (1.0, 0.0));
        // pmf-weighted cross-check
        let pmf: Vec<f64> = (0..=4)
            .map(|k| hypergeometric_pmf(10, 4, 5, k).unwrap().prob())
            .collect();
        let m1: f64 = pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
        let m2: f64 = pmf.iter().enumerate().map(|(k, p)| (k as f64 - m1).powi(2) * p).sum();
        assert_relative_eq!(m1, 2.0, epsilon = 1e-14);
        assert_relative_eq!(m2, 2.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn chebyshev_cantelli_examples() {
        assert_eq!(chebyshev_cantelli(2.0, 1.0, 2.0), 0.0);
        assert_eq!(chebyshev_cantelli(2.0, 0.0, 1.0), 1.0);
        assert_relative_eq!(chebyshev_cantelli(2.0, 2.0 / 3.0, 1.0), 0.6, epsilon = 1e-15);
        let exact: f64 = (1..=4).map(|k| hypergeometric_pmf(10, 4, 5, k).unwrap().prob()).sum();
        assert!(0.6 <= exact);
    }

    #[test]
    fn chebyshev_cantelli_is_a_valid_lower_bound_on_grids() {
        for n in 1..=100u64 {
            for big_k in (0..=n).step_by(7) {
                for u in (1..=n).step_by(9) {
                    let (mean, var) = hypergeometric_moments(n, big_k, u).unwrap();
                    let lo = u.saturating_sub(n - big_k);
                    let hi = big_k.min(u);
                    let pmf: Vec<f64> = (lo..=hi)
                        .map(|k| hypergeometric_pmf(n, big_k, u, k).unwrap().prob())
                        .collect();
                    for t in lo..=hi {
                        if (t as f64) < mean {
                            let tail: f64 = pmf[(t - lo) as usize..].iter().sum();
                            assert!(chebyshev_cantelli(mean, var, t as f64) <= tail + 1e-12);
                        }
                    }
                }
            }
            for &p in &[0.1, 0.5, 0.83] {
                let mean = n as f64 * p;
                let var = mean * (1.0 - p);
                for t in 0..=n {
                    if (t as f64) < mean {
                        assert!(chebyshev_cantelli(mean, var, t as f64) <= binomial_tail(n, p, t).unwrap() + 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn multinomial_examples() {
        let mut rng = seeded(1);
        assert_eq!(
            multinomial_sample(&[1.0, 0.0, 0.0], 17, &mut rng).unwrap().counts,
            vec![17, 0, 0]
        );
        let n = 100_000u64;
        let c = multinomial_sample(&[0.5, 0.5], n, &mut rng).unwrap();
        assert_eq!(c.total(), n);
        assert!((c.counts[0] as f64 - n as f64 / 2.0).abs() < 4.0 * (n as f64 * 0.25).sqrt());
        assert!(multinomial_sample(&[1.2, -0.2], 3, &mut rng).is_err());
        assert!(multinomial_sample(&[0.5, 0.4], 3, &mut rng).is_err());
    }

    #[test]
    fn central_facts_record_the_small_k_failure() {
        let one = binomial_central_facts(1).unwrap();
        assert_eq!(one.at_least_half, 0.75);
        assert_eq!(one.central_pmf, 0.5);
        assert!(one.at_least_half_holds);
        assert!(!one.central_bound_holds);
        let four = binomial_central_facts(4).unwrap();
        assert_relative_eq!(four.central_pmf, 70.0 / 256.0, epsilon = 1e-15);
        assert_relative_eq!(
            four.central_bound,
            (1.0 / (16.0 * std::f64::consts::PI)).sqrt(),
            epsilon = 1e-15
        );
        assert!(!four.central_bound_holds);
        assert!(binomial_central_facts(0).is_err());
    }

    #[test]
    fn binomial_coefficients() {
        assert_eq!(binomial_u128(60, 30), Some(118_264_581_564_861_424));
        assert_eq!(binomial_u128(61, 30), None);
        assert_eq!(binomial_big(64, 16), BigUint::from(488_526_937_079_580u64));
        assert_eq!(binomial_u128(5, 7), Some(0));
    }
}
