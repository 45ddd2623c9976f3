//! Named scenarios that pair Monte Carlo or exact estimates with bound
//! values and write one verdict row per comparison.

pub mod audit;

use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use clap::Parser;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    cm06_flaw_check, erm_upper_tlsi, erm_upper_tlsii, hanneke_upper_tlsii, lower_expect_tlsi, lower_expect_tlsii,
    lower_prob_tlsi, lower_prob_tlsii, run_batch, BoundEvaluation,
};
use crate::data::ExperimentConfig;
use crate::error::{Error, Result};
use crate::estimators::{
    exact_expected_error_erm_tlsi, mean_estimate, probability_estimate, rate_fit, trial_mistakes, Family, IntervalKind,
    McEstimate,
};
use crate::hypothesis::HypothesisClass;
use crate::instances::{
    labeling_grid, tlsi_hard_counts_expect, tlsi_hard_counts_prob, tlsii_hard_distribution_expect,
    tlsii_hard_distribution_p, DiscreteDistribution, Labeling,
};
use crate::learners::LearnerSpec;
use crate::oracle::{ssl_vs_sl_experiment, RiskMode};
use crate::Exact;

pub use audit::{verify_lemma_binomial_ratio, verify_proof_constants, ConstantCheck, LemmaReport, LemmaRow};

pub const SCHEMA_LINE: &str = "# schema=1";
pub const DEFAULT_SEED: u64 = 0x5eed;
pub const DEFAULT_N_MAX: u32 = 150;

/// Estimates may sit this many standard errors on the wrong side of a bound.
pub const SLACK_SIGMAS: f64 = 3.0;

pub const RATE_SLOPE_RANGE: (f64, f64) = (-1.3, -0.8);
pub const RATE_MIN_R2: f64 = 0.98;

const CSV_COLUMNS: [&str; 15] = [
    "scenario",
    "d",
    "m",
    "u",
    "epsilon",
    "delta",
    "trials",
    "seed",
    "estimate",
    "ci_low",
    "ci_high",
    "bound_name",
    "bound_value",
    "applicable",
    "verdict",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scenario {
    TlsiLowerProb,
    TlsiLowerExpect,
    TlsiiLowerProb,
    TlsiiLowerExpect,
    ErmUpperTlsi,
    ErmUpperTlsii,
    HannekeUpper,
    SslChain,
    LemmaVerify,
    RateSweep,
    Cm06Flaw,
}

impl Scenario {
    pub const ALL: [Scenario; 11] = [
        Scenario::TlsiLowerProb,
        Scenario::TlsiLowerExpect,
        Scenario::TlsiiLowerProb,
        Scenario::TlsiiLowerExpect,
        Scenario::ErmUpperTlsi,
        Scenario::ErmUpperTlsii,
        Scenario::HannekeUpper,
        Scenario::SslChain,
        Scenario::LemmaVerify,
        Scenario::RateSweep,
        Scenario::Cm06Flaw,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::TlsiLowerProb => "tlsi-lower-prob",
            Scenario::TlsiLowerExpect => "tlsi-lower-expect",
            Scenario::TlsiiLowerProb => "tlsii-lower-prob",
            Scenario::TlsiiLowerExpect => "tlsii-lower-expect",
            Scenario::ErmUpperTlsi => "erm-upper-tlsi",
            Scenario::ErmUpperTlsii => "erm-upper-tlsii",
            Scenario::HannekeUpper => "hanneke-upper",
            Scenario::SslChain => "ssl-chain",
            Scenario::LemmaVerify => "lemma-verify",
            Scenario::RateSweep => "rate-sweep",
            Scenario::Cm06Flaw => "cm06-flaw",
        }
    }

    /// Parameter points run when neither the config file nor flags change
    /// them.
    pub fn default_points(self) -> Vec<ExperimentConfig> {
        let p = |d, m, u, epsilon, delta, trials| ExperimentConfig {
            d,
            m,
            u,
            epsilon,
            delta,
            trials,
            master_seed: DEFAULT_SEED,
        };
        match self {
            Scenario::TlsiLowerProb => {
                vec![
                    p(8, 64, 64, 1.0 / 1024.0, 0.05, 1_000_000),
                    p(8, 64, 64, 1.0 / 256.0, 0.05, 1_000_000),
                ]
            }
            Scenario::TlsiLowerExpect => vec![p(5, 16, 48, 0.05, 0.05, 100_000)],
            Scenario::TlsiiLowerProb => vec![p(5, 32, 32, 1.0 / 256.0, 0.05, 100_000)],
            Scenario::TlsiiLowerExpect => vec![p(5, 16, 64, 0.05, 0.05, 100_000)],
            Scenario::ErmUpperTlsi | Scenario::ErmUpperTlsii => vec![p(4, 256, 256, 1.0 / 256.0, 0.05, 10_000)],
            Scenario::HannekeUpper => vec![p(4, 64, 64, 1.0 / 64.0, 0.05, 10_000)],
            Scenario::SslChain => vec![p(2, 2, 2, 0.5, 0.05, 1)],
            Scenario::LemmaVerify => vec![p(1, 1, 1, 1.0, 0.5, 1)],
            Scenario::RateSweep => [16, 32, 64, 128]
                .into_iter()
                .map(|m| p(4, m, m, 0.05, 0.05, 100_000))
                .collect(),
            Scenario::Cm06Flaw => vec![p(1, 100, 100, 0.01, 0.05, 1)],
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL.into_iter().find(|sc| sc.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Scenario::ALL.iter().map(|sc| sc.name()).collect();
            Error::config(format!("unknown scenario {s:?}; expected one of {}", names.join(", ")))
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Jsonl,
}

/// Per-point parameter overrides, from a config file or from flags.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub d: Option<usize>,
    pub m: Option<usize>,
    pub u: Option<usize>,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub trials: Option<u64>,
    pub seed: Option<u64>,
}

impl Overrides {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(v) = self.d {
            cfg.d = v;
        }
        if let Some(v) = self.m {
            cfg.m = v;
        }
        if let Some(v) = self.u {
            cfg.u = v;
        }
        if let Some(v) = self.epsilon {
            cfg.epsilon = v;
        }
        if let Some(v) = self.delta {
            cfg.delta = v;
        }
        if let Some(v) = self.trials {
            cfg.trials = v;
        }
        if let Some(v) = self.seed {
            cfg.master_seed = v;
        }
    }
}

/// JSON config file. Top-level parameters apply to every point; `points`
/// replaces the scenario's default point list.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub scenario: Option<String>,
    pub d: Option<usize>,
    pub m: Option<usize>,
    pub u: Option<usize>,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub trials: Option<u64>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub format: Option<Format>,
    #[serde(rename = "C")]
    pub constant: Option<f64>,
    pub n_max: Option<u32>,
    pub points: Option<Vec<Overrides>>,
}

impl ConfigFile {
    pub fn from_json(json: &str) -> Result<Self> {
        serde_json::from_str(json).map_err(|e| Error::config(format!("bad config file: {e}")))
    }

    fn base(&self) -> Overrides {
        Overrides {
            d: self.d,
            m: self.m,
            u: self.u,
            epsilon: self.epsilon,
            delta: self.delta,
            trials: self.trials,
            seed: self.seed,
        }
    }
}

/// A scenario with its resolved parameter points.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub points: Vec<ExperimentConfig>,
    /// Constant standing in for the unspecified `O(·)` of the optimal-learner
    /// bounds.
    pub constant: Option<f64>,
    pub n_max: u32,
}

impl ScenarioSpec {
    pub fn new(scenario: Scenario) -> Self {
        ScenarioSpec {
            scenario,
            points: scenario.default_points(),
            constant: None,
            n_max: DEFAULT_N_MAX,
        }
    }

    /// Defaults, then the file's top-level values, then its `points`, then
    /// `flags`. Identical neighbouring points are merged.
    pub fn resolve(scenario: Scenario, file: Option<&ConfigFile>, flags: &Overrides) -> Self {
        let mut spec = ScenarioSpec::new(scenario);
        if let Some(file) = file {
            let base = file.base();
            if let Some(points) = file.points.as_ref().filter(|p| !p.is_empty()) {
                let template = spec.points[0].clone();
                spec.points = points
                    .iter()
                    .map(|p| {
                        let mut cfg = template.clone();
                        base.apply(&mut cfg);
                        p.apply(&mut cfg);
                        cfg
                    })
                    .collect();
            } else {
                spec.points.iter_mut().for_each(|cfg| base.apply(cfg));
            }
            spec.constant = file.constant;
            if let Some(n) = file.n_max {
                spec.n_max = n;
            }
        }
        spec.points.iter_mut().for_each(|cfg| flags.apply(cfg));
        spec.points.dedup();
        spec
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inapplicable,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Inapplicable => "inapplicable",
        })
    }
}

/// One output row. Parameters that do not apply to a row are left empty.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Row {
    pub scenario: &'static str,
    pub d: Option<usize>,
    pub m: Option<usize>,
    pub u: Option<usize>,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub trials: Option<u64>,
    pub seed: Option<u64>,
    pub estimate: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub bound_name: String,
    pub bound_value: Option<f64>,
    pub applicable: bool,
    pub verdict: Verdict,
}

#[derive(Clone, Copy)]
enum Direction {
    /// The estimate should be at least the bound.
    Above,
    /// The estimate should be at most the bound.
    Below,
    /// The estimate should match the value.
    Equal,
}

fn slack_verdict(estimate: &McEstimate, value: f64, direction: Direction, applicable: bool) -> Verdict {
    if !applicable {
        return Verdict::Inapplicable;
    }
    let slack = SLACK_SIGMAS * estimate.stderr;
    let ok = match direction {
        Direction::Above => estimate.mean + slack >= value,
        Direction::Below => estimate.mean - slack <= value,
        Direction::Equal => (estimate.mean - value).abs() <= slack,
    };
    if ok {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

fn pass_if(ok: bool) -> Verdict {
    if ok {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

/// Builds rows for one scenario point.
struct RowBuilder<'a> {
    scenario: Scenario,
    cfg: &'a ExperimentConfig,
}

impl RowBuilder<'_> {
    fn bare(&self, bound_name: impl Into<String>) -> Row {
        Row {
            scenario: self.scenario.name(),
            d: None,
            m: None,
            u: None,
            epsilon: None,
            delta: None,
            trials: None,
            seed: None,
            estimate: None,
            ci_low: None,
            ci_high: None,
            bound_name: bound_name.into(),
            bound_value: None,
            applicable: true,
            verdict: Verdict::Pass,
        }
    }

    fn sizes(&self, bound_name: impl Into<String>) -> Row {
        Row {
            d: Some(self.cfg.d),
            m: Some(self.cfg.m),
            u: Some(self.cfg.u),
            ..self.bare(bound_name)
        }
    }

    fn mc(
        &self,
        estimate: &McEstimate,
        bound_name: impl Into<String>,
        value: f64,
        applicable: bool,
        direction: Direction,
    ) -> Row {
        Row {
            epsilon: Some(self.cfg.epsilon),
            delta: Some(self.cfg.delta),
            trials: Some(estimate.trials),
            seed: Some(estimate.master_seed),
            estimate: Some(estimate.mean),
            ci_low: Some(estimate.ci_low),
            ci_high: Some(estimate.ci_high),
            bound_value: Some(value),
            applicable,
            verdict: slack_verdict(estimate, value, direction, applicable),
            ..self.sizes(bound_name)
        }
    }

    fn exact(&self, bound_name: impl Into<String>, estimate: f64, value: f64, ok: bool) -> Row {
        Row {
            estimate: Some(estimate),
            bound_value: Some(value),
            verdict: pass_if(ok),
            ..self.sizes(bound_name)
        }
    }
}

fn masses(dist: &DiscreteDistribution<f64>) -> Vec<f64> {
    dist.atoms().iter().map(|a| a.2).collect()
}

fn point_mass_family(d: usize, p: f64) -> Result<Family> {
    let dist = tlsii_hard_distribution_p::<f64>(d, p, &vec![false; d])?;
    Ok(Family::Tlsii {
        masses: masses(&dist),
        labeling: Labeling::Uniform,
    })
}

fn p0_family(d: usize, m: usize) -> Result<Family> {
    let dist = tlsii_hard_distribution_expect::<f64>(d, m as u64, &vec![false; d])?;
    Ok(Family::Tlsii {
        masses: masses(&dist),
        labeling: Labeling::Uniform,
    })
}

/// Empirical `(1 − δ)`-quantile of the per-trial test error.
fn error_quantile(mistakes: &[u64], u: usize, delta: f64) -> f64 {
    let mut sorted = mistakes.to_vec();
    sorted.sort_unstable();
    let rank = ((1.0 - delta) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1] as f64 / u as f64
}

struct Runner<'a> {
    spec: &'a ScenarioSpec,
    threads: usize,
}

impl Runner<'_> {
    fn mistakes(&self, learner: &LearnerSpec, family: &Family, cfg: &ExperimentConfig) -> Result<Vec<u64>> {
        let class = HypothesisClass::full(cfg.d)?;
        trial_mistakes(learner, &class, family, cfg, self.threads)
    }

    fn probability(&self, family: &Family, cfg: &ExperimentConfig) -> Result<McEstimate> {
        let mistakes = self.mistakes(&LearnerSpec::Erm, family, cfg)?;
        let threshold = cfg.mistake_threshold();
        let hits = mistakes.iter().filter(|&&k| k >= threshold).count() as u64;
        Ok(probability_estimate(
            hits,
            cfg.trials,
            IntervalKind::Wilson,
            cfg.master_seed,
        ))
    }

    fn expectation(&self, family: &Family, cfg: &ExperimentConfig) -> Result<McEstimate> {
        let mistakes = self.mistakes(&LearnerSpec::Erm, family, cfg)?;
        Ok(mean_estimate(&mistakes, cfg.u as u64, cfg.master_seed))
    }

    /// Exceedance frequency of a probability bound and the error quantile it
    /// controls, plus the expectation bound.
    fn upper_rows(
        &self,
        rows: &RowBuilder,
        mistakes: &[u64],
        prob: &[&BoundEvaluation<f64>],
        expect: &BoundEvaluation<f64>,
    ) -> Vec<Row> {
        let cfg = rows.cfg;
        let mut out = Vec::new();
        for bound in prob {
            let exceed = mistakes
                .iter()
                .filter(|&&k| k as f64 > bound.value * cfg.u as f64)
                .count() as u64;
            let freq = probability_estimate(exceed, cfg.trials, IntervalKind::Wilson, cfg.master_seed);
            let quantile = error_quantile(mistakes, cfg.u, cfg.delta);
            out.push(Row {
                estimate: Some(quantile),
                ci_low: None,
                ci_high: None,
                verdict: if bound.applicable {
                    pass_if(quantile <= bound.value)
                } else {
                    Verdict::Inapplicable
                },
                ..rows.mc(&freq, bound.name, bound.value, bound.applicable, Direction::Below)
            });
            out.push(rows.mc(
                &freq,
                format!("{}.exceedance", bound.name),
                cfg.delta,
                bound.applicable,
                Direction::Below,
            ));
        }
        let mean = mean_estimate(mistakes, cfg.u as u64, cfg.master_seed);
        out.push(rows.mc(&mean, expect.name, expect.value, expect.applicable, Direction::Below));
        out
    }

    fn point(&self, cfg: &ExperimentConfig) -> Result<Vec<Row>> {
        let scenario = self.spec.scenario;
        let rows = RowBuilder { scenario, cfg };
        let (d, m, u) = (cfg.d as u64, cfg.m as u64, cfg.u as u64);
        let n = m + u;
        let uniform = Labeling::Uniform;
        Ok(match scenario {
            Scenario::TlsiLowerProb => {
                let bound = lower_prob_tlsi(d, m, u, cfg.epsilon);
                let mut out = Vec::new();
                let overrides = [("statement_1", None), ("statement_2", Some(n / m))];
                for (label, delta_override) in overrides {
                    let s = bound.statement(label).expect("both statements are evaluated");
                    let counts = tlsi_hard_counts_prob(n, cfg.d, cfg.epsilon, delta_override)?;
                    let est = self.probability(
                        &Family::Tlsi {
                            counts,
                            labeling: uniform.clone(),
                        },
                        cfg,
                    )?;
                    out.push(rows.mc(
                        &est,
                        format!("{}.{label}", bound.name),
                        s.value,
                        s.applicable(),
                        Direction::Above,
                    ));
                }
                out
            }
            Scenario::TlsiLowerExpect => {
                let counts = tlsi_hard_counts_expect(n, cfg.d, m)?;
                let class = HypothesisClass::full(cfg.d)?;
                let exact: Exact = exact_expected_error_erm_tlsi(&class, &counts, m)?;
                let exact = exact.to_f64().unwrap_or(f64::NAN);
                let est = self.expectation(
                    &Family::Tlsi {
                        counts,
                        labeling: uniform,
                    },
                    cfg,
                )?;
                let bound = lower_expect_tlsi::<f64>(d, m, u);
                vec![
                    rows.mc(&est, bound.name, bound.value, bound.applicable, Direction::Above),
                    rows.mc(&est, "erm_exact_expectation", exact, true, Direction::Equal),
                ]
            }
            Scenario::TlsiiLowerProb => {
                let bound = lower_prob_tlsii(d, m, u, cfg.epsilon);
                let mut out = Vec::new();
                let choices = [
                    ("statement_1", 1.0 / (2.0 * m as f64)),
                    ("statement_2", 16.0 * cfg.epsilon / (d - 1).max(1) as f64),
                ];
                for (label, p) in choices {
                    let s = bound.statement(label).expect("both statements are evaluated");
                    let name = format!("{}.{label}", bound.name);
                    if !(p <= 1.0 / (d - 1).max(1) as f64) {
                        out.push(Row {
                            epsilon: Some(cfg.epsilon),
                            bound_value: Some(s.value),
                            applicable: false,
                            verdict: Verdict::Inapplicable,
                            ..rows.sizes(name)
                        });
                        continue;
                    }
                    let est = self.probability(&point_mass_family(cfg.d, p)?, cfg)?;
                    out.push(rows.mc(&est, name, s.value, s.applicable(), Direction::Above));
                }
                out
            }
            Scenario::TlsiiLowerExpect => {
                let est = self.expectation(&p0_family(cfg.d, cfg.m)?, cfg)?;
                let bound = lower_expect_tlsii::<f64>(d, m);
                vec![rows.mc(&est, bound.name, bound.value, bound.applicable, Direction::Above)]
            }
            Scenario::ErmUpperTlsi => {
                let counts = tlsi_hard_counts_prob(n, cfg.d, cfg.epsilon, None)?;
                let mistakes = self.mistakes(
                    &LearnerSpec::Erm,
                    &Family::Tlsi {
                        counts,
                        labeling: uniform,
                    },
                    cfg,
                )?;
                let (prob, expect) = erm_upper_tlsi(d, m, u, cfg.delta);
                self.upper_rows(&rows, &mistakes, &[&prob], &expect)
            }
            Scenario::ErmUpperTlsii => {
                let mistakes = self.mistakes(&LearnerSpec::Erm, &p0_family(cfg.d, cfg.m)?, cfg)?;
                let b = erm_upper_tlsii(d, m, u, cfg.delta);
                self.upper_rows(&rows, &mistakes, &[&b.prob_direct, &b.prob_via_reduction], &b.expect)
            }
            Scenario::HannekeUpper => {
                let constant = self
                    .spec
                    .constant
                    .ok_or_else(|| Error::config("hanneke-upper needs the constant C (--c or \"C\" in the config)"))?;
                let (prob, expect) = hanneke_upper_tlsii(d, m, u, cfg.delta, constant)?;
                let mistakes = self.mistakes(&LearnerSpec::MajorityOfErms, &p0_family(cfg.d, cfg.m)?, cfg)?;
                self.upper_rows(&rows, &mistakes, &[&prob], &expect)
            }
            Scenario::SslChain => {
                let class = HypothesisClass::full(cfg.d)?;
                let p = Exact::new(1.into(), (cfg.d as i64).into());
                let family = labeling_grid(cfg.d)?
                    .into_iter()
                    .map(|b| tlsii_hard_distribution_p(cfg.d, p.clone(), &b))
                    .collect::<Result<Vec<_>>>()?;
                let r = ssl_vs_sl_experiment(&class, &family, cfg.m, cfg.u, &RiskMode::Expectation)?;
                let f = |x: &Exact| x.to_f64().unwrap_or(f64::NAN);
                let mut out = Vec::new();
                if let Some(m_ii) = &r.m_ii {
                    out.push(rows.exact("ssl_chain.transductive_le_ssl", f(m_ii), f(&r.m_ssl), *m_ii <= r.m_ssl));
                }
                out.push(rows.exact(
                    "ssl_chain.ssl_le_supervised",
                    f(&r.m_ssl),
                    f(&r.m_sl),
                    r.m_ssl <= r.m_sl,
                ));
                out
            }
            Scenario::LemmaVerify => {
                let report = verify_lemma_binomial_ratio(self.spec.n_max)?;
                let mut out: Vec<Row> = report
                    .rows
                    .iter()
                    .map(|r| Row {
                        estimate: Some(r.ratio),
                        ci_low: Some(r.lower),
                        ci_high: Some(r.upper),
                        bound_value: Some(r.lower),
                        verdict: pass_if(r.holds()),
                        ..rows.bare(format!("binomial_ratio(n={},k={},i={})", r.n, r.k, r.i))
                    })
                    .collect();
                out.extend(verify_proof_constants().into_iter().map(|c| Row {
                    estimate: Some(c.lhs),
                    bound_value: Some(c.rhs),
                    verdict: pass_if(c.pass),
                    ..rows.bare(format!("proof_constant: {}", c.label))
                }));
                out
            }
            Scenario::RateSweep => {
                let est = self.expectation(&p0_family(cfg.d, cfg.m)?, cfg)?;
                let bound = lower_expect_tlsii::<f64>(d, m);
                vec![rows.mc(&est, bound.name, bound.value, bound.applicable, Direction::Above)]
            }
            Scenario::Cm06Flaw => {
                let r = cm06_flaw_check(m, u, cfg.epsilon);
                // the comparison should fail exactly below the threshold
                let expected = cfg.epsilon >= r.threshold;
                let row = |name: &str, estimate, value| Row {
                    epsilon: Some(cfg.epsilon),
                    d: None,
                    ..rows.exact(name, estimate, value, r.holds == expected)
                };
                vec![
                    row("cm06_tail_comparison", r.lhs, r.rhs),
                    row("cm06_threshold", r.threshold, cfg.epsilon),
                ]
            }
        })
    }

    /// Rows that summarize all points.
    fn summary(&self, point_rows: &[Vec<Row>]) -> Result<Vec<Row>> {
        if self.spec.scenario != Scenario::RateSweep || self.spec.points.len() < 3 {
            return Ok(Vec::new());
        }
        let pairs: Vec<(f64, f64)> = self
            .spec
            .points
            .iter()
            .zip(point_rows)
            .map(|(cfg, rows)| (cfg.m as f64, rows[0].estimate.unwrap_or(f64::NAN)))
            .collect();
        let fit = rate_fit(&pairs)?;
        let first = &self.spec.points[0];
        let base = RowBuilder {
            scenario: self.spec.scenario,
            cfg: first,
        }
        .bare("");
        let row = |name: &str, estimate: f64, value: f64, ok: bool| Row {
            d: Some(first.d),
            trials: Some(first.trials),
            seed: Some(first.master_seed),
            estimate: Some(estimate),
            bound_value: Some(value),
            bound_name: name.to_string(),
            verdict: pass_if(ok),
            ..base.clone()
        };
        let (lo, hi) = RATE_SLOPE_RANGE;
        Ok(vec![
            row("rate_fit.slope", fit.slope, -1.0, (lo..=hi).contains(&fit.slope)),
            row("rate_fit.r2", fit.r2, RATE_MIN_R2, fit.r2 >= RATE_MIN_R2),
        ])
    }
}

fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

struct Sink<'a> {
    format: Format,
    csv: Option<csv::Writer<&'a mut dyn Write>>,
    raw: Option<&'a mut dyn Write>,
}

impl<'a> Sink<'a> {
    fn new(format: Format, out: &'a mut dyn Write) -> Result<Self> {
        match format {
            Format::Csv => {
                writeln!(out, "{SCHEMA_LINE}")?;
                let mut w = csv::Writer::from_writer(out);
                w.write_record(CSV_COLUMNS).map_err(crate::bounds::csv_error)?;
                Ok(Sink {
                    format,
                    csv: Some(w),
                    raw: None,
                })
            }
            Format::Jsonl => Ok(Sink {
                format,
                csv: None,
                raw: Some(out),
            }),
        }
    }

    fn write(&mut self, row: &Row) -> Result<()> {
        match self.format {
            Format::Csv => {
                let record = [
                    row.scenario.to_string(),
                    fmt_opt(row.d),
                    fmt_opt(row.m),
                    fmt_opt(row.u),
                    fmt_opt(row.epsilon),
                    fmt_opt(row.delta),
                    fmt_opt(row.trials),
                    fmt_opt(row.seed),
                    fmt_opt(row.estimate),
                    fmt_opt(row.ci_low),
                    fmt_opt(row.ci_high),
                    row.bound_name.clone(),
                    fmt_opt(row.bound_value),
                    row.applicable.to_string(),
                    row.verdict.to_string(),
                ];
                self.csv
                    .as_mut()
                    .expect("csv sink")
                    .write_record(&record)
                    .map_err(crate::bounds::csv_error)
            }
            Format::Jsonl => {
                let out = self.raw.as_mut().expect("jsonl sink");
                serde_json::to_writer(&mut **out, row)?;
                writeln!(out)?;
                Ok(())
            }
        }
    }

    fn finish(self) -> Result<()> {
        if let Some(mut w) = self.csv {
            w.flush()?;
        }
        if let Some(out) = self.raw {
            out.flush()?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Outcome {
    pub rows: usize,
    pub failures: usize,
}

impl Outcome {
    pub fn all_pass(&self) -> bool {
        self.failures == 0
    }
}

/// Runs every point of `spec` and writes rows in point order.
pub fn run_scenario(spec: &ScenarioSpec, threads: usize, format: Format, out: &mut dyn Write) -> Result<Outcome> {
    for cfg in &spec.points {
        cfg.validate()?;
    }
    let runner = Runner {
        spec,
        threads: threads.max(1),
    };
    let mut sink = Sink::new(format, out)?;
    let mut outcome = Outcome { rows: 0, failures: 0 };
    let mut record = |sink: &mut Sink, row: &Row| -> Result<()> {
        outcome.rows += 1;
        if row.verdict != Verdict::Pass {
            outcome.failures += 1;
        }
        sink.write(row)
    };
    let mut all = Vec::with_capacity(spec.points.len());
    for cfg in &spec.points {
        let rows = runner.point(cfg)?;
        for row in &rows {
            record(&mut sink, row)?;
        }
        all.push(rows);
    }
    for row in &runner.summary(&all)? {
        record(&mut sink, row)?;
    }
    sink.finish()?;
    Ok(outcome)
}

/// Process exit status for a run: 0 when every verdict passes, 1 for failed
/// verdicts and unexpected errors, 2 for bad configuration, 3 when an
/// exhaustive search would exceed its cap.
pub fn exit_code(result: &Result<Outcome>) -> u8 {
    fn code(e: &Error) -> u8 {
        match e {
            Error::Config(_) => 2,
            Error::Resource { .. } => 3,
            Error::Trial { source, .. } => code(source),
            _ => 1,
        }
    }
    match result {
        Ok(o) if o.all_pass() => 0,
        Ok(_) => 1,
        Err(e) => code(e),
    }
}

#[derive(Clone, Debug, Default, Parser)]
#[command(
    name = "transduct",
    version,
    about = "Bound-sandwich experiments for transductive learning"
)]
pub struct Args {
    /// Scenario to run.
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub u: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for Monte Carlo trials (default 1).
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Evaluate every bound at the points of a JSON array and write CSV.
    #[arg(long, conflicts_with = "scenario")]
    pub bounds_batch: Option<PathBuf>,
    /// Largest n for lemma-verify.
    #[arg(long)]
    pub n_max: Option<u32>,
    /// Constant for the optimal-learner upper bounds.
    #[arg(long = "c")]
    pub constant: Option<f64>,
}

impl Args {
    fn overrides(&self) -> Overrides {
        Overrides {
            d: self.d,
            m: self.m,
            u: self.u,
            epsilon: self.epsilon,
            delta: self.delta,
            trials: self.trials,
            seed: self.seed,
        }
    }
}

fn open_out(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(std::io::BufWriter::new(std::io::stdout().lock())),
    })
}

/// Runs the command line and returns the exit status.
pub fn run(args: &Args) -> u8 {
    let result = run_inner(args);
    if let Err(e) = &result {
        eprintln!("transduct: {e}");
    }
    exit_code(&result)
}

fn run_inner(args: &Args) -> Result<Outcome> {
    if let Some(path) = &args.bounds_batch {
        let json = std::fs::read_to_string(path)?;
        let mut out = open_out(args.out.as_ref())?;
        run_batch(&json, &mut out)?;
        return Ok(Outcome { rows: 0, failures: 0 });
    }
    let file = match &args.config {
        Some(path) => Some(ConfigFile::from_json(&std::fs::read_to_string(path)?)?),
        None => None,
    };
    let name = args
        .scenario
        .clone()
        .or_else(|| file.as_ref().and_then(|f| f.scenario.clone()))
        .ok_or_else(|| Error::config("no scenario given (--scenario or \"scenario\" in the config)"))?;
    let scenario: Scenario = name.parse()?;
    let mut spec = ScenarioSpec::resolve(scenario, file.as_ref(), &args.overrides());
    if let Some(c) = args.constant {
        spec.constant = Some(c);
    }
    if let Some(n) = args.n_max {
        spec.n_max = n;
    }
    let threads = args.threads.or(file.as_ref().and_then(|f| f.threads)).unwrap_or(1);
    let format = args.format.or(file.as_ref().and_then(|f| f.format)).unwrap_or_default();
    let mut out = open_out(args.out.as_ref())?;
    run_scenario(&spec, threads, format, &mut out)
}
