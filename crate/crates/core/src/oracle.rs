//! Exact minimax values for tiny instances.
//!
//! A deterministic learner is a table from observations to hypotheses and
//! its risk on family member `f` is a sum over observations. The value
//! `min_table max_f risk_f(table)` is found by a dynamic program over
//! observations that keeps only the Pareto-minimal partial risk vectors.
//! Randomized learners are not enumerated, so the value is an upper bound
//! on the randomized minimax value.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::data::{LabeledExample, PointId};
use crate::error::{Error, Result};
use crate::hypothesis::{Hypothesis, HypothesisClass};
use crate::instances::{DiscreteDistribution, PopulationSpec};
use crate::learners::{run_learner, LearnerSpec};
use crate::rng::seeded;
use crate::scalar::Scalar;

/// Cap on enumerated scenarios, on candidate vectors per step and on naive
/// table counts.
pub const SEARCH_CAP: u128 = 10_000_000;

/// Largest population enumerated by arrangement.
pub const MAX_TINY_POPULATION: u64 = 20;

/// What the learner sees: the labeled training sequence and the unlabeled
/// test points, both in draw order.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Observation {
    pub train: Vec<LabeledExample>,
    pub unlabeled: Vec<PointId>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum TinyFamily<T> {
    Tlsi(Vec<PopulationSpec>),
    Tlsii(Vec<DiscreteDistribution<T>>),
}

impl<T> TinyFamily<T> {
    pub fn len(&self) -> usize {
        match self {
            TinyFamily::Tlsi(v) => v.len(),
            TinyFamily::Tlsii(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RiskMode<T> {
    Expectation,
    /// `P{risk ≥ ε}`.
    Probability(T),
}

/// Which error the learner is charged with.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Objective {
    /// `err(h, Z_u)`.
    TestError,
    /// `L(h)` under the generating law.
    TrueRisk,
}

/// Whether the unlabeled test points are revealed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Visibility {
    TrainAndUnlabeled,
    TrainOnly,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExactMinimaxResult<T> {
    pub value: T,
    pub optimal_learner_table: BTreeMap<Observation, Hypothesis>,
    pub instance_family_size: usize,
    /// Always true: only deterministic tables are searched.
    pub deterministic_learners_only: bool,
}

struct Scenario<T> {
    train: Vec<LabeledExample>,
    test: Vec<LabeledExample>,
    weight: T,
}

fn check_cap(what: &str, size: u128) -> Result<()> {
    if size > SEARCH_CAP {
        return Err(Error::Resource {
            what: what.to_string(),
            size,
            cap: SEARCH_CAP,
        });
    }
    Ok(())
}

fn factorial(n: u64) -> u64 {
    (1..=n).product()
}

/// Distinct orderings of a population, each with probability `Π i_j! / N!`.
fn arrangements<T: Scalar>(spec: &PopulationSpec, m: usize, u: usize) -> Result<Vec<Scenario<T>>> {
    let n = spec.n();
    if n != (m + u) as u64 {
        return Err(Error::domain(format!("population has N = {n} but m + u = {}", m + u)));
    }
    if n > MAX_TINY_POPULATION {
        return Err(Error::Resource {
            what: "population size".into(),
            size: n as u128,
            cap: MAX_TINY_POPULATION as u128,
        });
    }
    let total = factorial(n);
    let per: u64 = spec.counts().iter().map(|&i| factorial(i)).product();
    check_cap("population arrangements", (total / per) as u128)?;
    let weight = T::from_ratio(per, total);
    let mut left = spec.counts().to_vec();
    let mut seq = Vec::with_capacity(n as usize);
    let mut out = Vec::new();
    fn walk<T: Scalar>(
        labels: &[bool],
        left: &mut [u64],
        seq: &mut Vec<LabeledExample>,
        u: usize,
        weight: &T,
        out: &mut Vec<Scenario<T>>,
    ) {
        if left.iter().all(|&c| c == 0) {
            out.push(Scenario {
                test: seq[..u].to_vec(),
                train: seq[u..].to_vec(),
                weight: weight.clone(),
            });
            return;
        }
        for j in 0..left.len() {
            if left[j] > 0 {
                left[j] -= 1;
                seq.push(LabeledExample::new(j, labels[j]));
                walk(labels, left, seq, u, weight, out);
                seq.pop();
                left[j] += 1;
            }
        }
    }
    walk(spec.labels(), &mut left, &mut seq, u, &weight, &mut out);
    Ok(out)
}

/// All iid sequences of length `m + u` over the positive-mass atoms.
fn sequences<T: Scalar>(dist: &DiscreteDistribution<T>, m: usize, u: usize) -> Result<Vec<Scenario<T>>> {
    let atoms: Vec<&(PointId, bool, T)> = dist.atoms().iter().filter(|a| a.2 > T::zero()).collect();
    let len = m + u;
    let count = (atoms.len() as u128).checked_pow(len as u32).unwrap_or(u128::MAX);
    check_cap("iid sequences", count)?;
    let mut out = Vec::with_capacity(count as usize);
    let mut idx = vec![0usize; len];
    loop {
        let seq: Vec<LabeledExample> = idx
            .iter()
            .map(|&k| LabeledExample {
                point: atoms[k].0,
                label: atoms[k].1,
            })
            .collect();
        let weight = idx.iter().fold(T::one(), |w, &k| w * atoms[k].2.clone());
        out.push(Scenario {
            train: seq[..m].to_vec(),
            test: seq[m..].to_vec(),
            weight,
        });
        let mut pos = len;
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < atoms.len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}

fn true_risk<T: Scalar>(h: &Hypothesis, dist: &DiscreteDistribution<T>) -> T {
    dist.atoms()
        .iter()
        .filter(|(x, y, _)| h.label(*x) != *y)
        .fold(T::zero(), |acc, a| acc + a.2.clone())
}

/// Per-observation risk rows: `rows[obs][h][f]`.
pub struct Game<T> {
    pub members: usize,
    pub hypotheses: Vec<Hypothesis>,
    pub rows: BTreeMap<Observation, Vec<Vec<T>>>,
}

impl<T: Scalar> Game<T> {
    pub fn build(
        class: &HypothesisClass,
        family: &TinyFamily<T>,
        m: usize,
        u: usize,
        mode: &RiskMode<T>,
        objective: Objective,
        visibility: Visibility,
    ) -> Result<Self> {
        if family.is_empty() {
            return Err(Error::domain("instance family is empty"));
        }
        if objective == Objective::TestError && u == 0 {
            return Err(Error::domain("test error needs u >= 1"));
        }
        let hypotheses = class.members().to_vec();
        let members = family.len();
        let mut rows: BTreeMap<Observation, Vec<Vec<T>>> = BTreeMap::new();
        for f in 0..members {
            let (scenarios, dist) = match family {
                TinyFamily::Tlsi(specs) => {
                    if objective == Objective::TrueRisk {
                        return Err(Error::domain("a finite population has no true risk"));
                    }
                    if specs[f].d() != class.d() {
                        return Err(Error::domain("family member and class disagree on d"));
                    }
                    (arrangements(&specs[f], m, u)?, None)
                }
                TinyFamily::Tlsii(dists) => {
                    if dists[f].d() != class.d() {
                        return Err(Error::domain("family member and class disagree on d"));
                    }
                    (sequences(&dists[f], m, u)?, Some(&dists[f]))
                }
            };
            let risks: Vec<T> = match dist {
                Some(p) if objective == Objective::TrueRisk => hypotheses.iter().map(|h| true_risk(h, p)).collect(),
                _ => Vec::new(),
            };
            for s in scenarios {
                let obs = Observation {
                    train: s.train,
                    unlabeled: match visibility {
                        Visibility::TrainAndUnlabeled => s.test.iter().map(|z| z.point).collect(),
                        Visibility::TrainOnly => Vec::new(),
                    },
                };
                let row = rows
                    .entry(obs)
                    .or_insert_with(|| vec![vec![T::zero(); members]; hypotheses.len()]);
                for (k, h) in hypotheses.iter().enumerate() {
                    let risk = match objective {
                        Objective::TrueRisk => risks[k].clone(),
                        Objective::TestError => {
                            let wrong = s.test.iter().filter(|z| h.label(z.point) != z.label).count() as u64;
                            T::from_ratio(wrong, u as u64)
                        }
                    };
                    let loss = match mode {
                        RiskMode::Expectation => risk,
                        RiskMode::Probability(eps) => {
                            if risk >= *eps {
                                T::one()
                            } else {
                                T::zero()
                            }
                        }
                    };
                    if loss != T::zero() {
                        row[k][f] = row[k][f].clone() + s.weight.clone() * loss;
                    }
                }
            }
        }
        Ok(Game {
            members,
            hypotheses,
            rows,
        })
    }

    /// Risk vector of a table given as one hypothesis index per row.
    pub fn risk_vector(&self, choices: &[usize]) -> Vec<T> {
        let mut sum = vec![T::zero(); self.members];
        for (row, &k) in self.rows.values().zip(choices) {
            add_assign(&mut sum, &row[k]);
        }
        sum
    }
}

fn add_assign<T: Scalar>(acc: &mut [T], v: &[T]) {
    for (a, b) in acc.iter_mut().zip(v) {
        if *b != T::zero() {
            *a = a.clone() + b.clone();
        }
    }
}

fn dominates<T: Scalar>(a: &[T], b: &[T]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y)
}

fn max_entry<T: Scalar>(v: &[T]) -> T {
    v.iter().cloned().fold(T::zero(), T::max_of)
}

/// Pareto dynamic program; returns the value and one optimal choice per row.
pub fn solve<T: Scalar>(game: &Game<T>) -> Result<(T, Vec<usize>)> {
    struct Node {
        parent: usize,
        choice: usize,
    }
    let mut nodes: Vec<Node> = Vec::new();
    let mut front: Vec<(Vec<T>, usize)> = vec![(vec![T::zero(); game.members], usize::MAX)];
    for row in game.rows.values() {
        // drop hypotheses whose row is dominated by an earlier-or-better one
        let mut kept: Vec<usize> = Vec::new();
        for k in 0..row.len() {
            let beaten = (0..row.len())
                .any(|j| j != k && dominates(&row[j], &row[k]) && (j < k || !dominates(&row[k], &row[j])));
            if !beaten {
                kept.push(k);
            }
        }
        check_cap("pareto candidates", front.len() as u128 * kept.len() as u128)?;
        let mut candidates: Vec<(Vec<T>, usize, usize, T)> = Vec::with_capacity(front.len() * kept.len());
        for (sum, node) in &front {
            for &k in &kept {
                let mut next = sum.clone();
                add_assign(&mut next, &row[k]);
                let total = next.iter().cloned().fold(T::zero(), |a, b| a + b);
                candidates.push((next, *node, k, total));
            }
        }
        candidates.sort_by(|a, b| a.3.partial_cmp(&b.3).expect("comparable totals"));
        let mut next_front: Vec<(Vec<T>, usize)> = Vec::new();
        for (v, parent, choice, _) in candidates {
            if next_front.iter().any(|(w, _)| dominates(w, &v)) {
                continue;
            }
            nodes.push(Node { parent, choice });
            next_front.push((v, nodes.len() - 1));
        }
        front = next_front;
    }
    let (best, node) = front
        .iter()
        .map(|(v, n)| (max_entry(v), *n))
        .min_by(|a, b| a.0.partial_cmp(&b.0).expect("comparable values"))
        .expect("front is non-empty");
    let mut choices = vec![0; game.rows.len()];
    let mut cur = node;
    for slot in choices.iter_mut().rev() {
        let n = &nodes[cur];
        *slot = n.choice;
        cur = n.parent;
    }
    Ok((best, choices))
}

/// Exhaustive search over all `|class|^{#observations}` tables.
pub fn solve_naive<T: Scalar>(game: &Game<T>) -> Result<T> {
    let h = game.hypotheses.len() as u128;
    let rows = game.rows.len() as u32;
    check_cap("learner tables", h.checked_pow(rows).unwrap_or(u128::MAX))?;
    let mut choices = vec![0usize; rows as usize];
    let mut best: Option<T> = None;
    loop {
        let v = max_entry(&game.risk_vector(&choices));
        if best.as_ref().is_none_or(|b| v < *b) {
            best = Some(v);
        }
        let mut pos = choices.len();
        loop {
            if pos == 0 {
                return Ok(best.expect("at least one table"));
            }
            pos -= 1;
            choices[pos] += 1;
            if choices[pos] < game.hypotheses.len() {
                break;
            }
            choices[pos] = 0;
        }
    }
}

fn result_from<T: Scalar>(game: &Game<T>) -> Result<ExactMinimaxResult<T>> {
    let (value, choices) = solve(game)?;
    let table = game
        .rows
        .keys()
        .zip(&choices)
        .map(|(obs, &k)| (obs.clone(), game.hypotheses[k]))
        .collect();
    Ok(ExactMinimaxResult {
        value,
        optimal_learner_table: table,
        instance_family_size: game.members,
        deterministic_learners_only: true,
    })
}

/// `min over deterministic learners of max over the family` of the test
/// error (or its tail) for the transductive setting of `family`.
pub fn exact_minimax_tiny<T: Scalar>(
    class: &HypothesisClass,
    family: &TinyFamily<T>,
    m: usize,
    u: usize,
    mode: &RiskMode<T>,
) -> Result<ExactMinimaxResult<T>> {
    let game = Game::build(
        class,
        family,
        m,
        u,
        mode,
        Objective::TestError,
        Visibility::TrainAndUnlabeled,
    )?;
    result_from(&game)
}

/// Worst-case exact risk of a deterministic learner over the family.
pub fn learner_worst_case_risk<T: Scalar>(
    learner: &LearnerSpec,
    class: &HypothesisClass,
    family: &TinyFamily<T>,
    m: usize,
    u: usize,
    mode: &RiskMode<T>,
) -> Result<T> {
    if matches!(learner, LearnerSpec::RandomGuess) {
        return Err(Error::config("random_guess is not a deterministic learner"));
    }
    let game = Game::build(
        class,
        family,
        m,
        u,
        mode,
        Objective::TestError,
        Visibility::TrainAndUnlabeled,
    )?;
    let mut rng = seeded(0);
    let choices = game
        .rows
        .keys()
        .map(|obs| {
            let train = obs.train.iter().copied().collect();
            let h = run_learner(learner, class, &train, &obs.unlabeled, &mut rng)?;
            Ok(game
                .hypotheses
                .iter()
                .position(|g| *g == h)
                .expect("learners return members"))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(max_entry(&game.risk_vector(&choices)))
}

/// Exact transductive, semi-supervised and supervised minimax values over a
/// family of laws.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SslChainRecord<T> {
    /// Test-error minimax value; absent when `u = 0`.
    pub m_ii: Option<T>,
    /// Learners see `(Z_m, X_u)` and pay `L(h)`.
    pub m_ssl: T,
    /// Learners see `Z_m` and pay `L(h)`.
    pub m_sl: T,
    /// `m_ii ≤ m_ssl ≤ m_sl` (the first link skipped when `u = 0`).
    pub chain_holds: bool,
    pub family_size: usize,
}

pub fn ssl_vs_sl_experiment<T: Scalar>(
    class: &HypothesisClass,
    family: &[DiscreteDistribution<T>],
    m: usize,
    u: usize,
    mode: &RiskMode<T>,
) -> Result<SslChainRecord<T>> {
    let family = TinyFamily::Tlsii(family.to_vec());
    let value = |objective, visibility| -> Result<T> {
        Ok(solve(&Game::build(class, &family, m, u, mode, objective, visibility)?)?.0)
    };
    let m_ii = if u == 0 {
        None
    } else {
        Some(value(Objective::TestError, Visibility::TrainAndUnlabeled)?)
    };
    let m_ssl = value(Objective::TrueRisk, Visibility::TrainAndUnlabeled)?;
    let m_sl = value(Objective::TrueRisk, Visibility::TrainOnly)?;
    let chain_holds = m_ii.as_ref().is_none_or(|v| *v <= m_ssl) && m_ssl <= m_sl;
    Ok(SslChainRecord {
        m_ii,
        m_ssl,
        m_sl,
        chain_holds,
        family_size: family.len(),
    })
}
