//! Exhaustive check of the binomial-ratio lemma and re-evaluation of the
//! numeric waypoints in the lower-bound proofs.

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use serde::Serialize;

use crate::error::{Error, Result};

pub const LEMMA_MAX_N: u32 = 500;

/// Slack for the log-space comparison against the exponential term.
const EXP_GUARD: f64 = 1e-12;

/// One `(n, k, i)` triple of the lemma.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LemmaRow {
    pub n: u32,
    pub k: u32,
    pub i: u32,
    /// `C(n−i, k−i) / C(n, k)`.
    pub ratio: f64,
    /// `max{(1−(n−k)/(n−i+1))^i, (1−i/(k+1))^(n−k)}`.
    pub lower: f64,
    /// `exp(−(n−k)i/(k−i+1))`.
    pub exp_term: f64,
    /// `min{(1−(n−k)/n)^i, (1−i/n)^(n−k)}`.
    pub upper: f64,
    /// Names of the inequalities that fail.
    pub violations: Vec<&'static str>,
}

impl LemmaRow {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LemmaReport {
    pub n_max: u32,
    pub rows: Vec<LemmaRow>,
}

impl LemmaReport {
    pub fn violations(&self) -> impl Iterator<Item = &LemmaRow> {
        self.rows.iter().filter(|r| !r.holds())
    }

    pub fn violation_count(&self) -> usize {
        self.violations().count()
    }
}

/// Pascal triangle up to row `n_max`.
fn binomials(n_max: usize) -> Vec<Vec<BigUint>> {
    let mut rows: Vec<Vec<BigUint>> = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let mut row = vec![BigUint::one(); n + 1];
        for k in 1..n {
            row[k] = &rows[n - 1][k - 1] + &rows[n - 1][k];
        }
        rows.push(row);
    }
    rows
}

/// `pow[a][e] = a^e` for `a ≤ base_max`, `e ≤ exp_max`, with `0^0 = 1`.
fn powers(base_max: usize, exp_max: usize) -> Vec<Vec<BigUint>> {
    (0..=base_max)
        .map(|a| {
            let a = BigUint::from(a);
            let mut row = Vec::with_capacity(exp_max + 1);
            let mut acc = BigUint::one();
            for _ in 0..=exp_max {
                row.push(acc.clone());
                acc *= &a;
            }
            row
        })
        .collect()
}

fn ln_ratio_power(num: u32, den: u32, e: u32) -> f64 {
    if e == 0 {
        0.0
    } else {
        e as f64 * ((num as f64).ln() - (den as f64).ln())
    }
}

/// Checks, for every `0 ≤ i ≤ k ≤ n ≤ n_max`, that
/// `max{A, B} ≤ C(n−i,k−i)/C(n,k) ≤ min{U₁, U₂}` exactly and that
/// `max{A, B} ≥ exp(−(n−k)i/(k−i+1))` in log space.
pub fn verify_lemma_binomial_ratio(n_max: u32) -> Result<LemmaReport> {
    if n_max > LEMMA_MAX_N {
        return Err(Error::config(format!(
            "n_max must be at most {LEMMA_MAX_N}, got {n_max}"
        )));
    }
    let nm = n_max as usize;
    let c = binomials(nm);
    let p = powers(nm + 1, nm);
    let ln_c = |n: u32, k: u32| -> f64 { ln_binomial(&c[n as usize][k as usize]) };
    let mut rows = Vec::new();
    for n in 0..=n_max {
        for k in 0..=n {
            for i in 0..=k {
                let (nu, ku, iu) = (n as usize, k as usize, i as usize);
                let top = &c[nu - iu][ku - iu];
                let bottom = &c[nu][ku];
                let mut violations = Vec::new();
                // A = ((k−i+1)/(n−i+1))^i
                if top * &p[nu - iu + 1][iu] < bottom * &p[ku - iu + 1][iu] {
                    violations.push("ratio ≥ (1−(n−k)/(n−i+1))^i");
                }
                // B = ((k+1−i)/(k+1))^(n−k)
                if top * &p[ku + 1][nu - ku] < bottom * &p[ku + 1 - iu][nu - ku] {
                    violations.push("ratio ≥ (1−i/(k+1))^(n−k)");
                }
                // U₁ = (k/n)^i
                if top * &p[nu][iu] > bottom * &p[ku][iu] {
                    violations.push("ratio ≤ (1−(n−k)/n)^i");
                }
                // U₂ = ((n−i)/n)^(n−k)
                if top * &p[nu][nu - ku] > bottom * &p[nu - iu][nu - ku] {
                    violations.push("ratio ≤ (1−i/n)^(n−k)");
                }
                let ln_a = ln_ratio_power(k - i + 1, n - i + 1, i);
                let ln_b = ln_ratio_power(k + 1 - i, k + 1, n - k);
                let ln_lower = ln_a.max(ln_b);
                let ln_exp = -((n - k) as f64) * i as f64 / (k - i + 1) as f64;
                if ln_lower < ln_exp - EXP_GUARD {
                    violations.push("max{A, B} ≥ exp(−(n−k)i/(k−i+1))");
                }
                let ln_u1 = if i == 0 { 0.0 } else { ln_ratio_power(k, n, i) };
                let ln_u2 = if n == k { 0.0 } else { ln_ratio_power(n - i, n, n - k) };
                rows.push(LemmaRow {
                    n,
                    k,
                    i,
                    ratio: (ln_c(n - i, k - i) - ln_c(n, k)).exp(),
                    lower: ln_lower.exp(),
                    exp_term: ln_exp.exp(),
                    upper: ln_u1.min(ln_u2).exp(),
                    violations,
                });
            }
        }
    }
    Ok(LemmaReport { n_max, rows })
}

fn ln_binomial(x: &BigUint) -> f64 {
    // keep the top 64 bits; the shifted-out part is below f64 resolution
    let bits = x.bits();
    if bits <= 64 {
        return x.to_f64().unwrap_or(f64::INFINITY).ln();
    }
    let shift = bits - 64;
    (x >> shift).to_f64().unwrap_or(f64::INFINITY).ln() + shift as f64 * std::f64::consts::LN_2
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = "≥")]
    Ge,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "≤")]
    Le,
}

impl Relation {
    fn holds<T: PartialOrd>(self, lhs: &T, rhs: &T) -> bool {
        match self {
            Relation::Gt => lhs > rhs,
            Relation::Ge => lhs >= rhs,
            Relation::Eq => lhs == rhs,
            Relation::Le => lhs <= rhs,
        }
    }
}

/// One re-evaluated inequality.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConstantCheck {
    pub label: &'static str,
    pub lhs: f64,
    pub relation: Relation,
    pub rhs: f64,
    /// Compared as exact rationals rather than floats.
    pub exact: bool,
    pub pass: bool,
}

fn q(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

fn exact(label: &'static str, lhs: BigRational, relation: Relation, rhs: BigRational) -> ConstantCheck {
    ConstantCheck {
        label,
        lhs: lhs.to_f64().unwrap_or(f64::NAN),
        relation,
        rhs: rhs.to_f64().unwrap_or(f64::NAN),
        exact: true,
        pass: relation.holds(&lhs, &rhs),
    }
}

/// Irrational sides are compared in f64 and must clear `margin`, which is
/// far above the rounding error of the few operations involved.
fn float(label: &'static str, lhs: f64, relation: Relation, rhs: f64) -> ConstantCheck {
    let margin = 1e-9;
    let pass = match relation {
        Relation::Gt | Relation::Ge => lhs - rhs > margin,
        Relation::Le => rhs - lhs > margin,
        Relation::Eq => (lhs - rhs).abs() <= margin,
    };
    ConstantCheck {
        label,
        lhs,
        relation,
        rhs,
        exact: false,
        pass,
    }
}

/// The standalone numeric inequalities of the lower-bound proofs.
pub fn verify_proof_constants() -> Vec<ConstantCheck> {
    use Relation::*;
    let one = BigRational::one();
    let gap = q(2, 1) - q(4, 3);
    let cantelli = &one - (&one / (&one + &gap * &gap));
    vec![
        exact("6/(21²+6) = 6/447", q(6, 21 * 21 + 6), Eq, q(6, 447)),
        exact("6/447 > 1/75", q(6, 447), Gt, q(1, 75)),
        exact("(1/2)(1/75) = 1/150", q(1, 2) * q(1, 75), Eq, q(1, 150)),
        exact(
            "(112/7)/(1 − (112/7)/32) ≤ 32",
            q(112, 7) / (&one - q(112, 7) / q(32, 1)),
            Le,
            q(32, 1),
        ),
        exact("u(d−1)/N (2/7 + 2/3) = (20/21) E[Z]", q(2, 7) + q(2, 3), Eq, q(20, 21)),
        exact("1/8 + 14/32 ≤ 1", q(1, 8) + q(14, 32), Le, one.clone()),
        float(
            "(1/2)(1 − √(1/(4π))) > 1/3",
            0.5 * (1.0 - (1.0 / (4.0 * std::f64::consts::PI)).sqrt()),
            Gt,
            1.0 / 3.0,
        ),
        exact("(1/2)(1/2) = 1/4", q(1, 2) * q(1, 2), Eq, q(1, 4)),
        float(
            "(e⁻¹ · 7/16)^(9/8) > 1/8",
            ((-1.0f64).exp() * 7.0 / 16.0).powf(9.0 / 8.0),
            Gt,
            0.125,
        ),
        exact("1 − 1/(1 + (2 − 4/3)²) > 3/10", cantelli.clone(), Gt, q(3, 10)),
        exact("(1/3)(3/10) = 1/10 ≥ 1/16", q(1, 3) * q(3, 10), Ge, q(1, 16)),
        exact("1/2 − 7/16 = 1/16", q(1, 2) - q(7, 16), Eq, q(1, 16)),
    ]
}
