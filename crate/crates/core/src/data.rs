//! Points, labeled examples, datasets, permutation splits and the empirical
//! error objective.

use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypothesis::{Hypothesis, HypothesisClass};
use crate::instances::DiscreteDistribution;
use crate::scalar::Scalar;
use crate::ErrRatio;

/// Index of one of the `d` shattered domain points.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PointId(pub usize);

impl PointId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LabeledExample {
    pub point: PointId,
    pub label: bool,
}

impl LabeledExample {
    pub fn new(point: usize, label: bool) -> Self {
        LabeledExample {
            point: PointId(point),
            label,
        }
    }
}

/// An ordered multiset of labeled examples.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Dataset {
    items: Vec<LabeledExample>,
}

impl Dataset {
    pub fn new(items: Vec<LabeledExample>) -> Self {
        Dataset { items }
    }

    pub fn items(&self) -> &[LabeledExample] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// The unlabeled view.
    pub fn points(&self) -> Vec<PointId> {
        self.items.iter().map(|z| z.point).collect()
    }

    /// Largest point index plus one (0 for an empty dataset).
    pub fn domain_extent(&self) -> usize {
        self.items.iter().map(|z| z.point.index() + 1).max().unwrap_or(0)
    }

    /// Number of items `h` labels incorrectly. Caller guarantees point ids < h.d().
    #[inline]
    pub fn mistakes(&self, h: &Hypothesis) -> u64 {
        self.items.iter().filter(|z| h.label(z.point) != z.label).count() as u64
    }

    /// Per-point (count of label 0, count of label 1).
    pub fn label_counts(&self, d: usize) -> Vec<[u64; 2]> {
        let mut counts = vec![[0u64; 2]; d];
        for z in &self.items {
            counts[z.point.index()][z.label as usize] += 1;
        }
        counts
    }
}

impl FromIterator<LabeledExample> for Dataset {
    fn from_iter<I: IntoIterator<Item = LabeledExample>>(iter: I) -> Self {
        Dataset {
            items: iter.into_iter().collect(),
        }
    }
}

/// `err(h, data)`: the fraction of items mislabeled by `h`, as an exact ratio.
pub fn empirical_error(h: &Hypothesis, data: &Dataset) -> Result<ErrRatio> {
    if data.is_empty() {
        return Err(Error::domain("err undefined on empty test set"));
    }
    if data.domain_extent() > h.d() {
        return Err(Error::domain(format!(
            "dataset mentions point {} but the hypothesis labels only {} points",
            data.domain_extent() - 1,
            h.d()
        )));
    }
    Ok(Ratio::new(data.mistakes(h), data.len() as u64))
}

/// True iff some member of `class` has zero empirical error on `data`.
pub fn is_realizable(data: &Dataset, class: &HypothesisClass) -> bool {
    if data.domain_extent() > class.d() {
        return false;
    }
    if class.is_full() {
        return data.label_counts(class.d()).iter().all(|c| c[0] == 0 || c[1] == 0);
    }
    class.members().iter().any(|h| data.mistakes(h) == 0)
}

/// A permutation of `0..N` together with the test/train sizes.
///
/// The first `u` permuted positions form the test side, the remaining `m`
/// the training side.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    permutation: Vec<usize>,
    m: usize,
}

impl Split {
    pub fn new(permutation: Vec<usize>, m: usize) -> Result<Self> {
        let n = permutation.len();
        if m == 0 || m >= n {
            return Err(Error::domain(format!("split needs 1 <= m < N, got m = {m}, N = {n}")));
        }
        let mut seen = vec![false; n];
        for &p in &permutation {
            if p >= n || std::mem::replace(&mut seen[p], true) {
                return Err(Error::domain("split permutation is not a bijection on 0..N"));
            }
        }
        Ok(Split { permutation, m })
    }

    /// Uniformly random permutation of `0..n`.
    pub fn random<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Result<Self> {
        if m == 0 || m >= n {
            return Err(Error::domain(format!("split needs 1 <= m < N, got m = {m}, N = {n}")));
        }
        let mut permutation: Vec<usize> = (0..n).collect();
        permutation.shuffle(rng);
        Ok(Split { permutation, m })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn u(&self) -> usize {
        self.permutation.len() - self.m
    }

    pub fn n(&self) -> usize {
        self.permutation.len()
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    /// Population positions that land in the test set.
    pub fn test_positions(&self) -> &[usize] {
        &self.permutation[..self.u()]
    }

    pub fn train_positions(&self) -> &[usize] {
        &self.permutation[self.u()..]
    }

    /// `(Z_m, Z_u)` for a population of size `N`.
    pub fn apply(&self, pop: &Dataset) -> Result<(Dataset, Dataset)> {
        if pop.len() != self.n() {
            return Err(Error::domain(format!(
                "split sized for N = {} applied to a dataset of size {}",
                self.n(),
                pop.len()
            )));
        }
        let pick = |idx: &[usize]| idx.iter().map(|&i| pop.items[i]).collect::<Dataset>();
        Ok((pick(self.train_positions()), pick(self.test_positions())))
    }
}

/// Draws `(Z_m, Z_u)` by a uniformly random permutation of `pop`.
pub fn split_without_replacement<R: Rng + ?Sized>(pop: &Dataset, m: usize, rng: &mut R) -> Result<(Dataset, Dataset)> {
    if m >= pop.len() {
        return Err(Error::domain(format!(
            "cannot train on m = {m} of a population of size {}",
            pop.len()
        )));
    }
    Split::random(pop.len(), m, rng)?.apply(pop)
}

/// `n` iid draws from a point-mass law.
pub fn sample_iid<T: Scalar, R: Rng + ?Sized>(
    dist: &DiscreteDistribution<T>,
    n: usize,
    rng: &mut R,
) -> Result<Dataset> {
    let sampler = dist.sampler()?;
    Ok((0..n).map(|_| sampler.draw(rng)).collect())
}

/// Parameters shared by every experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub d: usize,
    pub m: usize,
    pub u: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub trials: u64,
    pub master_seed: u64,
}

impl ExperimentConfig {
    pub fn n(&self) -> usize {
        self.m + self.u
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::config("d must be positive"));
        }
        if self.m == 0 || self.u == 0 {
            return Err(Error::config("m and u must both be at least 1"));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::config(format!(
                "epsilon must lie in (0, 1], got {}",
                self.epsilon
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::config(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if self.trials == 0 {
            return Err(Error::config("trials must be positive"));
        }
        Ok(())
    }

    /// Smallest mistake count `k` with `k / u >= epsilon`.
    pub fn mistake_threshold(&self) -> u64 {
        mistake_threshold(self.epsilon, self.u)
    }
}

/// Smallest `k` with `k / u >= epsilon`; `epsilon * u` within 1e-9 of an
/// integer is snapped to it.
pub fn mistake_threshold(epsilon: f64, u: usize) -> u64 {
    let x = epsilon * u as f64;
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r.max(0.0) as u64
    } else {
        x.ceil().max(0.0) as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{tlsii_hard_distribution_expect, DiscreteDistribution};
    use crate::prob::hypergeometric_pmf;
    use crate::rng::{seeded, trial_rng};

    fn h(labels: &[u8]) -> Hypothesis {
        Hypothesis::from_labels(&labels.iter().map(|&b| b == 1).collect::<Vec<_>>()).unwrap()
    }

    fn ds(items: &[(usize, u8)]) -> Dataset {
        items.iter().map(|&(p, y)| LabeledExample::new(p, y == 1)).collect()
    }

    #[test]
    fn empirical_error_examples() {
        assert_eq!(
            empirical_error(&h(&[0, 1]), &ds(&[(0, 0), (1, 1)])).unwrap(),
            Ratio::new(0, 1)
        );
        assert_eq!(
            empirical_error(&h(&[0, 0]), &ds(&[(0, 0), (1, 1)])).unwrap(),
            Ratio::new(1, 2)
        );
        let multi = ds(&[(0, 0), (0, 0), (1, 1), (1, 1)]);
        assert_eq!(empirical_error(&h(&[1, 1]), &multi).unwrap(), Ratio::new(1, 2));
    }

    #[test]
    fn empirical_error_rejects_empty_and_out_of_domain() {
        let err = empirical_error(&h(&[0]), &Dataset::default()).unwrap_err();
        assert!(err.to_string().contains("err undefined on empty test set"));
        assert!(empirical_error(&h(&[0]), &ds(&[(1, 0)])).is_err());
    }

    #[test]
    fn empirical_error_lives_on_the_one_over_u_grid() {
        let data = ds(&[(0, 0), (1, 1), (2, 0), (0, 0), (2, 1)]);
        for code in 0..8 {
            let e = empirical_error(&Hypothesis::from_code(3, code).unwrap(), &data).unwrap();
            assert_eq!(5 % e.denom(), 0);
        }
    }

    #[test]
    fn realizability_examples() {
        let full2 = HypothesisClass::full(2).unwrap();
        assert!(is_realizable(&ds(&[(0, 0), (1, 1)]), &full2));
        assert!(!is_realizable(&ds(&[(0, 0), (0, 1)]), &full2));
        let single = HypothesisClass::new(1, [h(&[0])]).unwrap();
        assert!(!is_realizable(&ds(&[(0, 1)]), &single));
        assert!(is_realizable(&ds(&[(0, 0)]), &single));
    }

    #[test]
    fn full_class_minimum_error_is_zero_on_realizable_data() {
        let data = ds(&[(0, 1), (2, 0), (0, 1), (1, 1)]);
        let class = HypothesisClass::full(3).unwrap();
        let min = class
            .members()
            .iter()
            .map(|h| empirical_error(h, &data).unwrap())
            .min()
            .unwrap();
        assert_eq!(min, Ratio::new(0, 1));
    }

    #[test]
    fn split_validation() {
        assert!(Split::new(vec![0, 1, 2], 0).is_err());
        assert!(Split::new(vec![0, 1, 2], 3).is_err());
        assert!(Split::new(vec![0, 0, 2], 1).is_err());
        let s = Split::new(vec![2, 0, 1], 1).unwrap();
        let (train, test) = s.apply(&ds(&[(0, 0), (1, 1), (2, 0)])).unwrap();
        assert_eq!(train, ds(&[(1, 1)]));
        assert_eq!(test, ds(&[(2, 0), (0, 0)]));
        assert!(split_without_replacement(&ds(&[(0, 0)]), 1, &mut seeded(0)).is_err());
    }

    #[test]
    fn split_is_deterministic_given_seed() {
        let pop: Dataset = (0..10).map(|j| LabeledExample::new(j, j % 3 == 0)).collect();
        let a = split_without_replacement(&pop, 4, &mut seeded(11)).unwrap();
        let b = split_without_replacement(&pop, 4, &mut seeded(11)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.0.len(), 4);
        assert_eq!(a.1.len(), 6);
    }

    #[test]
    fn split_of_two_is_a_fair_coin() {
        let pop = ds(&[(0, 0), (1, 1)]);
        let trials = 100_000u64;
        let hits = (0..trials)
            .filter(|&t| {
                let (train, _) = split_without_replacement(&pop, 1, &mut trial_rng(5, t)).unwrap();
                train.items()[0].point == PointId(0)
            })
            .count() as f64;
        let sigma = (trials as f64 * 0.25).sqrt();
        assert!((hits - trials as f64 / 2.0).abs() < 4.0 * sigma);
    }

    #[test]
    fn inclusion_probability_is_m_over_n() {
        let n = 7;
        let m = 3;
        let pop: Dataset = (0..n).map(|j| LabeledExample::new(j, false)).collect();
        let trials = 100_000u64;
        let mut counts = vec![0u64; n];
        for t in 0..trials {
            let split = Split::random(n, m, &mut trial_rng(9, t)).unwrap();
            for &i in split.train_positions() {
                counts[i] += 1;
            }
        }
        let p = m as f64 / n as f64;
        let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - trials as f64 * p).abs() < 4.0 * sigma, "{c}");
        }
        let _ = pop;
    }

    #[test]
    fn test_multiplicity_of_a_four_copy_point_is_hypergeometric() {
        // N = 10, m = 3: the 4 copies of point 0 land in Z_u (size 7).
        let mut items = vec![LabeledExample::new(0, true); 4];
        items.extend((1..7).map(|j| LabeledExample::new(j, false)));
        let pop = Dataset::new(items);
        let trials = 100_000u64;
        let mut hist = [0u64; 5];
        for t in 0..trials {
            let (_, test) = split_without_replacement(&pop, 3, &mut trial_rng(21, t)).unwrap();
            hist[test.items().iter().filter(|z| z.point == PointId(0)).count()] += 1;
        }
        for (k, &c) in hist.iter().enumerate() {
            let p = hypergeometric_pmf(10, 4, 7, k as u64).unwrap().prob();
            let sigma = (trials as f64 * p * (1.0 - p)).sqrt().max(1.0);
            assert!(
                (c as f64 - trials as f64 * p).abs() < 4.0 * sigma,
                "k={k} count={c} p={p}"
            );
        }
    }

    #[test]
    fn iid_sampling_examples() {
        let point_mass = DiscreteDistribution::<f64>::new(1, vec![(PointId(0), true, 1.0)]).unwrap();
        assert_eq!(sample_iid(&point_mass, 5, &mut seeded(3)).unwrap(), ds(&[(0, 1); 5]));

        let coin =
            DiscreteDistribution::<f64>::new(2, vec![(PointId(0), false, 0.5), (PointId(1), true, 0.5)]).unwrap();
        let n = 10_000;
        let draws = sample_iid(&coin, n, &mut seeded(4)).unwrap();
        let ones = draws.items().iter().filter(|z| z.point == PointId(0)).count() as f64;
        assert!((ones - n as f64 / 2.0).abs() < 4.0 * (n as f64 * 0.25).sqrt());

        let p0 = tlsii_hard_distribution_expect::<f64>(3, 4, &[false, true, false]).unwrap();
        let n = 100_000;
        let draws = sample_iid(&p0, n, &mut seeded(5)).unwrap();
        let first = draws.items().iter().filter(|z| z.point == PointId(0)).count() as f64;
        assert!((first - n as f64 / 4.0).abs() < 4.0 * (n as f64 * 0.25 * 0.75).sqrt());
    }

    #[test]
    fn unnormalized_law_is_rejected() {
        assert!(DiscreteDistribution::<f64>::new(2, vec![(PointId(0), false, 0.5), (PointId(1), true, 0.4)]).is_err());
    }

    #[test]
    fn mistake_threshold_grid() {
        assert_eq!(mistake_threshold(1.0 / 1024.0, 64), 1);
        assert_eq!(mistake_threshold(0.1, 10), 1);
        assert_eq!(mistake_threshold(0.25, 8), 2);
        assert_eq!(mistake_threshold(0.26, 8), 3);
    }
}
