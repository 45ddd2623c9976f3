//! Monte Carlo estimates of error tails and expected test error.
//!
//! Trial `t` draws everything from `trial_rng(seed, t)`, per-trial results
//! are collected in index order and aggregated with integer arithmetic, so
//! estimates are bit-identical for any thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::data::{sample_iid, ExperimentConfig, Split};
use crate::error::{Error, Result};
use crate::hypothesis::HypothesisClass;
use crate::instances::{materialize_population, DiscreteDistribution, Labeling, PopulationSpec};
use crate::learners::{run_learner, LearnerSpec};
use crate::prob::hypergeometric_prob;
use crate::rng::trial_rng;
use crate::scalar::Scalar;

/// Two-sided 99% standard normal quantile.
pub const Z99: f64 = 2.575_829_303_548_901;

/// A family of instances sharing the point marginal; labels come from
/// `labeling`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "setting")]
pub enum Family {
    /// Finite population with `counts[j]` copies of point `j`.
    #[serde(rename = "TLSI")]
    Tlsi { counts: Vec<u64>, labeling: Labeling },
    /// iid draws with point masses `masses`.
    #[serde(rename = "TLSII")]
    Tlsii { masses: Vec<f64>, labeling: Labeling },
}

impl Family {
    pub fn d(&self) -> usize {
        match self {
            Family::Tlsi { counts, .. } => counts.len(),
            Family::Tlsii { masses, .. } => masses.len(),
        }
    }

    pub fn labeling(&self) -> &Labeling {
        match self {
            Family::Tlsi { labeling, .. } | Family::Tlsii { labeling, .. } => labeling,
        }
    }

    fn validate(&self, cfg: &ExperimentConfig) -> Result<()> {
        if let Labeling::Fixed(b) = self.labeling() {
            if b.len() != self.d() {
                return Err(Error::config(format!(
                    "fixed labeling has length {} but d = {}",
                    b.len(),
                    self.d()
                )));
            }
        }
        match self {
            Family::Tlsi { counts, .. } => {
                let n: u64 = counts.iter().sum();
                if n != cfg.n() as u64 {
                    return Err(Error::config(format!("population has N = {n} but m + u = {}", cfg.n())));
                }
            }
            Family::Tlsii { masses, .. } => {
                let atoms = masses
                    .iter()
                    .enumerate()
                    .map(|(j, &w)| (crate::PointId(j), false, w))
                    .collect();
                DiscreteDistribution::new(self.d(), atoms)?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalKind {
    /// Wilson score interval.
    #[default]
    Wilson,
    /// Exact Clopper–Pearson interval.
    ClopperPearson,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct McOptions {
    pub threads: usize,
    pub interval: IntervalKind,
}

impl Default for McOptions {
    fn default() -> Self {
        McOptions {
            threads: 1,
            interval: IntervalKind::Wilson,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub trials: u64,
    pub master_seed: u64,
}

/// Test-set mistake counts of `learner` for each trial, in trial order.
pub fn trial_mistakes(
    learner: &LearnerSpec,
    class: &HypothesisClass,
    family: &Family,
    cfg: &ExperimentConfig,
    threads: usize,
) -> Result<Vec<u64>> {
    cfg.validate()?;
    family.validate(cfg)?;
    if class.d() != family.d() {
        return Err(Error::config(format!(
            "class has d = {} but the family has d = {}",
            class.d(),
            family.d()
        )));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    let results: Vec<Result<u64>> = pool.install(|| {
        (0..cfg.trials)
            .into_par_iter()
            .map(|t| {
                one_trial(learner, class, family, cfg, t).map_err(|e| Error::Trial {
                    index: t,
                    source: Box::new(e),
                })
            })
            .collect()
    });
    results.into_iter().collect()
}

fn one_trial(
    learner: &LearnerSpec,
    class: &HypothesisClass,
    family: &Family,
    cfg: &ExperimentConfig,
    t: u64,
) -> Result<u64> {
    let mut rng = trial_rng(cfg.master_seed, t);
    let b = family.labeling().draw(family.d(), &mut rng);
    let (train, test) = match family {
        Family::Tlsi { counts, .. } => {
            let pop = materialize_population(&PopulationSpec::new(b, counts.clone())?);
            Split::random(pop.len(), cfg.m, &mut rng)?.apply(&pop)?
        }
        Family::Tlsii { masses, .. } => {
            let atoms = masses
                .iter()
                .zip(&b)
                .enumerate()
                .map(|(j, (&w, &y))| (crate::PointId(j), y, w))
                .collect();
            let dist = DiscreteDistribution::new(family.d(), atoms)?;
            (sample_iid(&dist, cfg.m, &mut rng)?, sample_iid(&dist, cfg.u, &mut rng)?)
        }
    };
    let h = run_learner(learner, class, &train, &test.points(), &mut rng)?;
    Ok(test.mistakes(&h))
}

fn wilson(hits: u64, n: u64) -> (f64, f64) {
    let nf = n as f64;
    let p = hits as f64 / nf;
    let z2 = Z99 * Z99;
    let centre = (p + z2 / (2.0 * nf)) / (1.0 + z2 / nf);
    let half = Z99 / (1.0 + z2 / nf) * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    ((centre - half).max(0.0).min(p), (centre + half).min(1.0).max(p))
}

fn clopper_pearson(hits: u64, n: u64) -> (f64, f64) {
    let alpha = 0.01;
    let lo = if hits == 0 {
        0.0
    } else {
        Beta::new(hits as f64, (n - hits + 1) as f64)
            .map(|b| b.inverse_cdf(alpha / 2.0))
            .unwrap_or(0.0)
    };
    let hi = if hits == n {
        1.0
    } else {
        Beta::new((hits + 1) as f64, (n - hits) as f64)
            .map(|b| b.inverse_cdf(1.0 - alpha / 2.0))
            .unwrap_or(1.0)
    };
    (lo, hi)
}

/// Estimate of a probability from `hits` successes in `n` trials.
pub fn probability_estimate(hits: u64, n: u64, interval: IntervalKind, master_seed: u64) -> McEstimate {
    let mean = hits as f64 / n as f64;
    let (ci_low, ci_high) = match interval {
        IntervalKind::Wilson => wilson(hits, n),
        IntervalKind::ClopperPearson => clopper_pearson(hits, n),
    };
    McEstimate {
        mean,
        stderr: (mean * (1.0 - mean) / n as f64).sqrt(),
        ci_low,
        ci_high,
        trials: n,
        master_seed,
    }
}

/// Estimate of `E[k/u]` from per-trial integer counts `k`.
pub fn mean_estimate(counts: &[u64], u: u64, master_seed: u64) -> McEstimate {
    let n = counts.len() as u128;
    let sum: u128 = counts.iter().map(|&k| k as u128).sum();
    let sum_sq: u128 = counts.iter().map(|&k| (k as u128) * (k as u128)).sum();
    let uf = u as f64;
    let mean = sum as f64 / (n as f64 * uf);
    // n·Σk² − (Σk)² is exact
    let stderr = if n > 1 {
        let centred = (n * sum_sq - sum * sum) as f64;
        (centred / (n as f64 * (n as f64 - 1.0)) / (uf * uf) / n as f64).sqrt()
    } else {
        0.0
    };
    McEstimate {
        mean,
        stderr,
        ci_low: mean - Z99 * stderr,
        ci_high: mean + Z99 * stderr,
        trials: n as u64,
        master_seed,
    }
}

/// `P{err(h_m, Z_u) ≥ ε}`.
pub fn mc_error_probability(
    learner: &LearnerSpec,
    class: &HypothesisClass,
    family: &Family,
    cfg: &ExperimentConfig,
    options: McOptions,
) -> Result<McEstimate> {
    let mistakes = trial_mistakes(learner, class, family, cfg, options.threads)?;
    let threshold = cfg.mistake_threshold();
    let hits = mistakes.iter().filter(|&&k| k >= threshold).count() as u64;
    Ok(probability_estimate(
        hits,
        cfg.trials,
        options.interval,
        cfg.master_seed,
    ))
}

/// `E[err(h_m, Z_u)]` with a normal-approximation interval.
pub fn mc_expected_error(
    learner: &LearnerSpec,
    class: &HypothesisClass,
    family: &Family,
    cfg: &ExperimentConfig,
    options: McOptions,
) -> Result<McEstimate> {
    let mistakes = trial_mistakes(learner, class, family, cfg, options.threads)?;
    Ok(mean_estimate(&mistakes, cfg.u as u64, cfg.master_seed))
}

/// Exact expected test error of ERM over the full class in TLSI with
/// uniform labels: `(1/(2u)) Σ_j i_j P{k_j = i_j}`.
///
/// A point missing from training is predicted 0 and its uniform label is
/// wrong with probability 1/2; a point seen in training is never wrong.
pub fn exact_expected_error_erm_tlsi<T: Scalar>(class: &HypothesisClass, counts: &[u64], m: u64) -> Result<T> {
    if !class.is_full() {
        return Err(Error::domain("exact ERM error needs the full class"));
    }
    if class.d() != counts.len() {
        return Err(Error::domain("class and population disagree on d"));
    }
    let n: u64 = counts.iter().sum();
    if m == 0 || m >= n {
        return Err(Error::domain(format!("need 1 <= m < N, got m = {m}, N = {n}")));
    }
    let u = n - m;
    let mut total = T::zero();
    for &i in counts {
        if i > 0 && i <= u {
            total = total + T::from_u64(i) * hypergeometric_prob::<T>(n, i, u, i)?;
        }
    }
    Ok(total / T::from_u64(2 * u))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Least-squares fit of `ln(value)` against `ln(m)`.
pub fn rate_fit(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(Error::domain("rate fit needs at least 3 points"));
    }
    if points.iter().any(|&(m, v)| !(m > 0.0 && v > 0.0)) {
        return Err(Error::domain("rate fit needs positive sizes and values"));
    }
    let xy: Vec<(f64, f64)> = points.iter().map(|&(m, v)| (m.ln(), v.ln())).collect();
    let k = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / k;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = xy.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::domain("rate fit needs at least two distinct sizes"));
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(RateFit {
        slope,
        intercept: my - slope * mx,
        r2,
    })
}

/// One JSON-lines result record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McRecord {
    pub estimator: String,
    pub learner: LearnerSpec,
    pub instance: Family,
    pub mean: f64,
    pub ci: [f64; 2],
    pub trials: u64,
    pub seed: u64,
}

impl McRecord {
    pub fn new(estimator: &str, learner: &LearnerSpec, instance: &Family, estimate: &McEstimate) -> Self {
        McRecord {
            estimator: estimator.to_string(),
            learner: learner.clone(),
            instance: instance.clone(),
            mean: estimate.mean,
            ci: [estimate.ci_low, estimate.ci_high],
            trials: estimate.trials,
            seed: estimate.master_seed,
        }
    }
}
