//! Closed-form minimax lower bounds and learner upper bounds.
//!
//! Every evaluator returns a [`BoundEvaluation`] carrying the numeric value
//! together with the hypotheses under which it is a theorem. A bound whose
//! hypotheses fail is still evaluated and returned with `applicable = false`
//! so parameter sweeps can cross validity boundaries. All logarithms are
//! natural.

use std::fmt;
use std::io::Write;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Setting {
    #[serde(rename = "TLSI")]
    Tlsi,
    #[serde(rename = "TLSII")]
    Tlsii,
    #[serde(rename = "SL")]
    Sl,
    #[serde(rename = "SSL")]
    Ssl,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Lower,
    Upper,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMode {
    Probability,
    Expectation,
    SampleComplexity,
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setting::Tlsi => "TLSI",
            Setting::Tlsii => "TLSII",
            Setting::Sl => "SL",
            Setting::Ssl => "SSL",
        })
    }
}

impl fmt::Display for BoundKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundKind::Lower => "lower",
            BoundKind::Upper => "upper",
        })
    }
}

impl fmt::Display for BoundMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundMode::Probability => "probability",
            BoundMode::Expectation => "expectation",
            BoundMode::SampleComplexity => "sample_complexity",
        })
    }
}

/// One statement of a multi-part bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Statement<F> {
    pub label: &'static str,
    pub value: F,
    pub failed_conditions: Vec<String>,
}

impl<F> Statement<F> {
    pub fn applicable(&self) -> bool {
        self.failed_conditions.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundEvaluation<F> {
    pub name: &'static str,
    pub setting: Setting,
    pub kind: BoundKind,
    pub mode: BoundMode,
    /// Max over applicable statements, or over all statements when none applies.
    pub value: F,
    pub applicable: bool,
    /// Empty when applicable.
    pub failed_conditions: Vec<String>,
    pub statements: Vec<Statement<F>>,
}

impl<F: Float> BoundEvaluation<F> {
    fn combine(
        name: &'static str,
        setting: Setting,
        kind: BoundKind,
        mode: BoundMode,
        statements: Vec<Statement<F>>,
    ) -> Self {
        let applicable = statements.iter().any(Statement::applicable);
        let mut value = statements
            .iter()
            .filter(|s| !applicable || s.applicable())
            .map(|s| s.value)
            .fold(F::neg_infinity(), F::max);
        if mode != BoundMode::SampleComplexity {
            value = value.max(F::zero()).min(F::one());
        }
        let mut failed_conditions = Vec::new();
        if !applicable {
            for s in &statements {
                for c in &s.failed_conditions {
                    if !failed_conditions.contains(c) {
                        failed_conditions.push(c.clone());
                    }
                }
            }
        }
        BoundEvaluation {
            name,
            setting,
            kind,
            mode,
            value,
            applicable,
            failed_conditions,
            statements,
        }
    }

    /// The named statement, if present.
    pub fn statement(&self, label: &str) -> Option<&Statement<F>> {
        self.statements.iter().find(|s| s.label == label)
    }
}

/// Collects the hypotheses that fail.
#[derive(Default)]
struct Conditions(Vec<String>);

impl Conditions {
    fn require(mut self, ok: bool, text: &str) -> Self {
        if !ok {
            self.0.push(text.to_string());
        }
        self
    }

    fn statement<F>(self, label: &'static str, value: F) -> Statement<F> {
        Statement {
            label,
            value,
            failed_conditions: self.0,
        }
    }
}

#[inline]
fn c<F: Float>(x: f64) -> F {
    F::from(x).expect("finite constant")
}

#[inline]
fn n<F: Float>(x: u64) -> F {
    F::from(x).expect("count fits a float")
}

/// `ln(N e / d)` with `N = m + u`.
fn log_growth<F: Float>(d: u64, m: u64, u: u64) -> F {
    (n::<F>(m + u) / n::<F>(d.max(1))).ln() + F::one()
}

/// Lower bound on the minimax probability of error in TLSI.
pub fn lower_prob_tlsi<F: Float>(d: u64, m: u64, u: u64, epsilon: F) -> BoundEvaluation<F> {
    let (mf, uf, df) = (n::<F>(m), n::<F>(u), n::<F>(d));
    let constant: F = if d >= 7 { c(1.0 / 150.0) } else { c(0.25) };
    let first = Conditions::default()
        .require(d >= 2, "d ≥ 2")
        .require(u >= m, "u ≥ m")
        .require(m >= 8 * d.saturating_sub(1), "m ≥ 8(d−1)")
        .require(epsilon <= c(1.0 / 32.0), "ε ≤ 1/32")
        .statement("statement_1", constant * (-c::<F>(32.0) * mf * epsilon).exp());
    let second = Conditions::default()
        .require(d >= 2, "d ≥ 2")
        .require(m >= 9u64.max(2 * d.saturating_sub(1)), "m ≥ max{9, 2(d−1)}")
        .require(mf <= df / (c::<F>(24.0) * epsilon), "m ≤ d/(24ε)")
        .require(mf <= uf, "m ≤ u")
        .statement("statement_2", c(1.0 / 16.0));
    BoundEvaluation::combine(
        "tlsi_lower_prob",
        Setting::Tlsi,
        BoundKind::Lower,
        BoundMode::Probability,
        vec![first, second],
    )
}

fn sample_complexity_conditions<F: Float>(epsilon: F, delta: F, delta_cap: f64, delta_text: &str) -> Conditions {
    Conditions::default()
        .require(epsilon > F::zero(), "ε > 0")
        .require(epsilon <= c(1.0 / 32.0), "ε ≤ 1/32")
        .require(delta > F::zero(), "δ > 0")
        .require(delta <= c(delta_cap), delta_text)
}

/// Labeled-sample size below which every TLSI learner fails at level
/// `(ε, δ)`: `max{ln(1/(150δ))/(32ε), d/(24ε)}`.
pub fn sample_complexity_lower_tlsi<F: Float>(d: u64, epsilon: F, delta: F) -> BoundEvaluation<F> {
    let confidence = (c::<F>(150.0) * delta).recip().ln() / (c::<F>(32.0) * epsilon);
    let capacity = n::<F>(d) / (c::<F>(24.0) * epsilon);
    let s = sample_complexity_conditions(epsilon, delta, 1.0 / 150.0, "δ ≤ 1/150")
        .statement("threshold", confidence.max(capacity));
    BoundEvaluation::combine(
        "tlsi_sample_complexity_lower",
        Setting::Tlsi,
        BoundKind::Lower,
        BoundMode::SampleComplexity,
        vec![s],
    )
}

/// Additive form `ln(1/(150δ))/(64ε) + d/(48ε)` of the same threshold.
pub fn sample_complexity_lower_tlsi_theta<F: Float>(d: u64, epsilon: F, delta: F) -> F {
    (c::<F>(150.0) * delta).recip().ln() / (c::<F>(64.0) * epsilon) + n::<F>(d) / (c::<F>(48.0) * epsilon)
}

/// `(d−1)/(16m)`.
pub fn lower_expect_tlsi<F: Float>(d: u64, m: u64, u: u64) -> BoundEvaluation<F> {
    let s = Conditions::default()
        .require(d >= 2, "d ≥ 2")
        .require(m >= 9u64.max(d.saturating_sub(1)), "m ≥ max{9, d−1}")
        .require(m <= u, "m ≤ u")
        .statement("expectation", n::<F>(d.saturating_sub(1)) / (c::<F>(16.0) * n::<F>(m)));
    BoundEvaluation::combine(
        "tlsi_lower_expect",
        Setting::Tlsi,
        BoundKind::Lower,
        BoundMode::Expectation,
        vec![s],
    )
}

/// Lower bound on the minimax probability of error in TLSII.
pub fn lower_prob_tlsii<F: Float>(d: u64, m: u64, u: u64, epsilon: F) -> BoundEvaluation<F> {
    let (mf, rare) = (n::<F>(m), n::<F>(d.saturating_sub(1)));
    let first = Conditions::default()
        .require(mf >= (rare / c(2.0)).max(c(10.0)), "m ≥ max{(d−1)/2, 10}")
        .require(mf <= rare / (c::<F>(21.0) * epsilon), "m ≤ (d−1)/(21ε)")
        .require(m <= u, "m ≤ u")
        .statement("statement_1", c(1.0 / 80.0));
    let second = Conditions::default()
        .require(epsilon > F::zero() && epsilon <= c(1.0 / 32.0), "0 < ε ≤ 1/32")
        .require(m >= d.saturating_sub(1), "m ≥ d−1")
        .statement("statement_2", c::<F>(1.0 / 18.0) * (-c::<F>(32.0) * mf * epsilon).exp());
    BoundEvaluation::combine(
        "tlsii_lower_prob",
        Setting::Tlsii,
        BoundKind::Lower,
        BoundMode::Probability,
        vec![first, second],
    )
}

/// `max{ln(1/(80δ))/(32ε), (d−1)/(21ε)}`.
pub fn sample_complexity_lower_tlsii<F: Float>(d: u64, epsilon: F, delta: F) -> BoundEvaluation<F> {
    let confidence = (c::<F>(80.0) * delta).recip().ln() / (c::<F>(32.0) * epsilon);
    let capacity = n::<F>(d.saturating_sub(1)) / (c::<F>(21.0) * epsilon);
    let s = sample_complexity_conditions(epsilon, delta, 1.0 / 80.0, "δ ≤ 1/80")
        .statement("threshold", confidence.max(capacity));
    BoundEvaluation::combine(
        "tlsii_sample_complexity_lower",
        Setting::Tlsii,
        BoundKind::Lower,
        BoundMode::SampleComplexity,
        vec![s],
    )
}

/// Additive form `ln(1/(80δ))/(64ε) + (d−1)/(42ε)`.
pub fn sample_complexity_lower_tlsii_theta<F: Float>(d: u64, epsilon: F, delta: F) -> F {
    (c::<F>(80.0) * delta).recip().ln() / (c::<F>(64.0) * epsilon)
        + n::<F>(d.saturating_sub(1)) / (c::<F>(42.0) * epsilon)
}

/// `((d−1)/(2em))(1 − 1/m)`.
pub fn lower_expect_tlsii<F: Float>(d: u64, m: u64) -> BoundEvaluation<F> {
    let mf = n::<F>(m);
    let e = F::one().exp();
    let s = Conditions::default()
        .require(d >= 2, "d ≥ 2")
        .require(m >= d.saturating_sub(1), "m ≥ d−1")
        .statement(
            "expectation",
            n::<F>(d.saturating_sub(1)) / (c::<F>(2.0) * e * mf) * (F::one() - mf.recip()),
        );
    BoundEvaluation::combine(
        "tlsii_lower_expect",
        Setting::Tlsii,
        BoundKind::Lower,
        BoundMode::Expectation,
        vec![s],
    )
}

fn erm_tlsi_conditions(d: u64, m: u64, u: u64) -> Conditions {
    Conditions::default()
        .require(d >= 2, "d ≥ 2")
        .require(u >= 4, "u ≥ 4")
        .require(u >= m, "u ≥ m")
        .require(m >= d.saturating_sub(1), "m ≥ d−1")
}

fn tlsi_prob_formula<F: Float>(d: u64, m: u64, u: u64, delta: F) -> F {
    c::<F>(2.0) * (n::<F>(d) * log_growth::<F>(d, m, u) + delta.recip().ln()) / n::<F>(m)
}

/// ERM in TLSI: `(probability, expectation)` upper bounds
/// `2(d ln(Ne/d) + ln(1/δ))/m` and `(2d ln(Ne/d) + 2)/m`.
pub fn erm_upper_tlsi<F: Float>(d: u64, m: u64, u: u64, delta: F) -> (BoundEvaluation<F>, BoundEvaluation<F>) {
    let prob = erm_tlsi_conditions(d, m, u)
        .require(delta > F::zero() && delta < F::one(), "0 < δ < 1")
        .statement("probability", tlsi_prob_formula(d, m, u, delta));
    let expect = erm_tlsi_conditions(d, m, u).statement(
        "expectation",
        (c::<F>(2.0) * n::<F>(d) * log_growth::<F>(d, m, u) + c(2.0)) / n::<F>(m),
    );
    (
        BoundEvaluation::combine(
            "erm_tlsi_upper_prob",
            Setting::Tlsi,
            BoundKind::Upper,
            BoundMode::Probability,
            vec![prob],
        ),
        BoundEvaluation::combine(
            "erm_tlsi_upper_expect",
            Setting::Tlsi,
            BoundKind::Upper,
            BoundMode::Expectation,
            vec![expect],
        ),
    )
}

/// `max{2(d ln(Ne/d) + ln(1/δ))/m, √2/u}`.
pub fn erm_upper_tlsi_corrected<F: Float>(d: u64, m: u64, u: u64, delta: F) -> BoundEvaluation<F> {
    let floor = c::<F>(std::f64::consts::SQRT_2) / n::<F>(u);
    let s = Conditions::default()
        .require(u >= 4, "u ≥ 4")
        .require(m <= u, "m ≤ u")
        .require(delta > F::zero() && delta < F::one(), "0 < δ < 1")
        .statement("probability", tlsi_prob_formula(d, m, u, delta).max(floor));
    BoundEvaluation::combine(
        "erm_tlsi_upper_prob_corrected",
        Setting::Tlsi,
        BoundKind::Upper,
        BoundMode::Probability,
        vec![s],
    )
}

/// ERM upper bounds in TLSII.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TlsiiUpper<F> {
    pub prob_direct: BoundEvaluation<F>,
    pub prob_via_reduction: BoundEvaluation<F>,
    pub expect: BoundEvaluation<F>,
    /// Raw direct value over raw reduction value.
    pub direct_over_reduction: F,
}

pub fn erm_upper_tlsii<F: Float>(d: u64, m: u64, u: u64, delta: F) -> TlsiiUpper<F> {
    let (df, mf, uf) = (n::<F>(d), n::<F>(m), n::<F>(u));
    let ln2 = c::<F>(std::f64::consts::LN_2);
    let log_conf = (c::<F>(2.0) / delta).ln();
    let direct_raw = (c::<F>(6.0) * df * mf.ln() + c::<F>(3.0) * log_conf + c::<F>(3.0) * ln2) / (c::<F>(2.0) * mf)
        + c::<F>(5.0) * log_conf / (c::<F>(3.0) * uf);
    let reduction_raw = tlsi_prob_formula(d, m, u, delta);
    let direct = Conditions::default()
        .require(m >= 1, "m ≥ 1")
        .require(u >= 1, "u ≥ 1")
        .require(delta > F::zero() && delta < F::one(), "0 < δ < 1")
        .statement("probability", direct_raw);
    let reduction = erm_tlsi_conditions(d, m, u)
        .require(delta > F::zero() && delta < F::one(), "0 < δ < 1")
        .statement("probability", reduction_raw);
    let expect = Conditions::default().require(m >= 1, "m ≥ 1").statement(
        "expectation",
        (c::<F>(2.0) * df * (c::<F>(2.0) * mf).ln() + c(4.0)) / (mf * ln2),
    );
    TlsiiUpper {
        prob_direct: BoundEvaluation::combine(
            "erm_tlsii_upper_prob",
            Setting::Tlsii,
            BoundKind::Upper,
            BoundMode::Probability,
            vec![direct],
        ),
        prob_via_reduction: BoundEvaluation::combine(
            "erm_tlsii_upper_prob_via_tlsi",
            Setting::Tlsii,
            BoundKind::Upper,
            BoundMode::Probability,
            vec![reduction],
        ),
        expect: BoundEvaluation::combine(
            "erm_tlsii_upper_expect",
            Setting::Tlsii,
            BoundKind::Upper,
            BoundMode::Expectation,
            vec![expect],
        ),
        direct_over_reduction: direct_raw / reduction_raw,
    }
}

/// Upper bounds for the optimal iid learner with a caller-supplied constant
/// `C` standing in for the unspecified `O(·)`: `(probability, expectation)`
/// = `(C(d + ln(2/δ))/m + 5 ln(2/δ)/(3u), C d/m)`.
pub fn hanneke_upper_tlsii<F: Float>(
    d: u64,
    m: u64,
    u: u64,
    delta: F,
    constant: F,
) -> Result<(BoundEvaluation<F>, BoundEvaluation<F>)> {
    if !(constant > F::zero()) {
        return Err(Error::domain("the constant C must be positive"));
    }
    if !(delta > F::zero() && delta < F::one()) {
        return Err(Error::domain(format!(
            "δ must lie in (0, 1), got {}",
            delta.to_f64().unwrap_or(f64::NAN)
        )));
    }
    let (df, mf, uf) = (n::<F>(d), n::<F>(m), n::<F>(u));
    let log_conf = (c::<F>(2.0) / delta).ln();
    let prob = Conditions::default()
        .require(m >= 1, "m ≥ 1")
        .require(u >= 1, "u ≥ 1")
        .statement(
            "probability",
            constant * (df + log_conf) / mf + c::<F>(5.0) * log_conf / (c::<F>(3.0) * uf),
        );
    let expect = Conditions::default()
        .require(m >= 1, "m ≥ 1")
        .statement("expectation", constant * df / mf);
    Ok((
        BoundEvaluation::combine(
            "optimal_tlsii_upper_prob",
            Setting::Tlsii,
            BoundKind::Upper,
            BoundMode::Probability,
            vec![prob],
        ),
        BoundEvaluation::combine(
            "optimal_tlsii_upper_expect",
            Setting::Tlsii,
            BoundKind::Upper,
            BoundMode::Expectation,
            vec![expect],
        ),
    ))
}

/// Semi-supervised lower bounds implied by transductive ones:
/// `(expectation, probability at ε)` from the TLSII expectation value and the
/// TLSII probability value at `2ε`.
pub fn ssl_relations<F: Float>(m_ii_expect: F, m_ii_prob_at_2eps: F, u: u64, epsilon: F) -> (F, F) {
    let slack = (-c::<F>(2.0) * n::<F>(u) * epsilon * epsilon).exp();
    (m_ii_expect, (m_ii_prob_at_2eps - slack).max(F::zero()))
}

/// Both sides of the per-hypothesis tail comparison whose failure for
/// small `ε` breaks the classical TLSI union bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TailComparison<F> {
    pub lhs: F,
    pub rhs: F,
    pub holds: bool,
    /// `(√(m+u+2) − 1)/u`.
    pub threshold: F,
    /// `((m+u+2)/(m+u−uε+1)) · (uε/(uε+1))`.
    pub factor: F,
}

pub fn cm06_flaw_check<F: Float>(m: u64, u: u64, epsilon: F) -> TailComparison<F> {
    let (mf, uf) = (n::<F>(m), n::<F>(u));
    let total = mf + uf;
    let ue = uf * epsilon;
    let factor = (total + c(2.0)) / (total - ue + F::one()) * (ue / (ue + F::one()));
    let scale = -c::<F>(0.5) * (mf * uf / total) * epsilon * epsilon;
    let lhs = scale * factor;
    let rhs = scale;
    TailComparison {
        lhs,
        rhs,
        holds: lhs <= rhs,
        threshold: ((total + c(2.0)).sqrt() - F::one()) / uf,
        factor,
    }
}

/// One row of a batch evaluation request. Bounds whose inputs are missing
/// are skipped.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchPoint {
    pub d: u64,
    pub m: Option<u64>,
    pub u: Option<u64>,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    /// Constant for the `O(·)` rows; those rows are skipped when absent.
    #[serde(rename = "C")]
    pub constant: Option<f64>,
}

/// Every bound computable from `point`.
pub fn evaluate_point(point: &BatchPoint) -> Result<Vec<BoundEvaluation<f64>>> {
    let d = point.d;
    let mut out = Vec::new();
    if let (Some(eps), Some(delta)) = (point.epsilon, point.delta) {
        out.push(sample_complexity_lower_tlsi(d, eps, delta));
        out.push(sample_complexity_lower_tlsii(d, eps, delta));
    }
    if let Some(m) = point.m {
        out.push(lower_expect_tlsii(d, m));
        if let Some(u) = point.u {
            out.push(lower_expect_tlsi(d, m, u));
            if let Some(eps) = point.epsilon {
                out.push(lower_prob_tlsi(d, m, u, eps));
                out.push(lower_prob_tlsii(d, m, u, eps));
            }
            if let Some(delta) = point.delta {
                let (p, e) = erm_upper_tlsi(d, m, u, delta);
                out.extend([p, e, erm_upper_tlsi_corrected(d, m, u, delta)]);
                let ii = erm_upper_tlsii(d, m, u, delta);
                out.extend([ii.prob_direct, ii.prob_via_reduction, ii.expect]);
                if let Some(constant) = point.constant {
                    let (p, e) = hanneke_upper_tlsii(d, m, u, delta, constant)?;
                    out.extend([p, e]);
                }
            }
        }
    }
    Ok(out)
}

/// Reads a JSON array of [`BatchPoint`]s and writes one CSV row per bound.
pub fn run_batch<W: Write>(json: &str, out: W) -> Result<()> {
    let points: Vec<BatchPoint> =
        serde_json::from_str(json).map_err(|e| Error::config(format!("bad bounds batch: {e}")))?;
    let mut writer = csv::Writer::from_writer(out);
    writer
        .write_record([
            "name",
            "setting",
            "kind",
            "mode",
            "value",
            "applicable",
            "failed_conditions",
        ])
        .map_err(csv_error)?;
    for point in &points {
        for b in evaluate_point(point)? {
            writer
                .write_record([
                    b.name.to_string(),
                    b.setting.to_string(),
                    b.kind.to_string(),
                    b.mode.to_string(),
                    format!("{:.12e}", b.value),
                    b.applicable.to_string(),
                    b.failed_conditions.join("; "),
                ])
                .map_err(csv_error)?;
        }
    }
    writer.flush()?;
    Ok(())
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::config(format!("csv: {other:?}")),
    }
}
