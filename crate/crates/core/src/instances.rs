//! Adversarial instance families for both settings.
//!
//! A TLSI instance is a finite population with `i_j` copies of `(x_j, b_j)`.
//! A TLSII instance is a point-mass law on the same labeled atoms.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, LabeledExample, PointId, Split};
use crate::error::{Error, Result};
use crate::hypothesis::MAX_D;
use crate::prob::MultiplicityProfile;
use crate::scalar::Scalar;

/// Largest population size accepted.
pub const MAX_POPULATION: u64 = 1 << 48;

/// Largest `d` for which every labeling can be enumerated.
pub const LABELING_GRID_MAX_D: usize = 12;

/// Labels `b` and copy counts `i` of a finite population.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopulationSpec {
    #[serde(with = "bits")]
    b: Vec<bool>,
    i: Vec<u64>,
}

impl PopulationSpec {
    pub fn new(b: Vec<bool>, i: Vec<u64>) -> Result<Self> {
        if b.is_empty() || b.len() > MAX_D {
            return Err(Error::domain(format!(
                "population needs 1 <= d <= {MAX_D}, got {}",
                b.len()
            )));
        }
        if b.len() != i.len() {
            return Err(Error::domain(format!(
                "labels have length {} but counts have length {}",
                b.len(),
                i.len()
            )));
        }
        let n = i.iter().try_fold(0u64, |acc, &c| acc.checked_add(c));
        match n {
            Some(n) if n <= MAX_POPULATION => Ok(PopulationSpec { b, i }),
            _ => Err(Error::domain("population size exceeds 2^48")),
        }
    }

    pub fn d(&self) -> usize {
        self.b.len()
    }

    pub fn n(&self) -> u64 {
        self.i.iter().sum()
    }

    pub fn labels(&self) -> &[bool] {
        &self.b
    }

    pub fn counts(&self) -> &[u64] {
        &self.i
    }
}

/// A distribution supported on finitely many labeled atoms.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteDistribution<T> {
    d: usize,
    atoms: Vec<(PointId, bool, T)>,
}

impl<T: Scalar> DiscreteDistribution<T> {
    /// Masses must be nonnegative and sum to one within 1e-12; each point
    /// may carry at most one atom.
    pub fn new(d: usize, atoms: Vec<(PointId, bool, T)>) -> Result<Self> {
        let mut seen = vec![false; d];
        let mut total = T::zero();
        for (x, _, mass) in &atoms {
            if x.index() >= d {
                return Err(Error::domain(format!(
                    "atom at point {} outside a domain of size {d}",
                    x.index()
                )));
            }
            if std::mem::replace(&mut seen[x.index()], true) {
                return Err(Error::domain(format!("point {} carries two atoms", x.index())));
            }
            if *mass < T::zero() {
                return Err(Error::domain("negative mass"));
            }
            total = total + mass.clone();
        }
        if (total.as_f64() - 1.0).abs() > 1e-12 {
            return Err(Error::domain(format!("masses sum to {}, not 1", total.as_f64())));
        }
        Ok(DiscreteDistribution { d, atoms })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn atoms(&self) -> &[(PointId, bool, T)] {
        &self.atoms
    }

    /// Mass of the atom at `x` (zero if none).
    pub fn mass(&self, x: PointId) -> T {
        self.atoms
            .iter()
            .find(|a| a.0 == x)
            .map(|a| a.2.clone())
            .unwrap_or_else(T::zero)
    }

    /// Label of the atom at `x`, if any.
    pub fn label(&self, x: PointId) -> Option<bool> {
        self.atoms.iter().find(|a| a.0 == x).map(|a| a.1)
    }

    pub fn sampler(&self) -> Result<AtomSampler> {
        let mut acc = 0.0;
        let mut cumulative = Vec::with_capacity(self.atoms.len());
        let mut examples = Vec::with_capacity(self.atoms.len());
        for (x, y, mass) in &self.atoms {
            let w = mass.as_f64();
            if w > 0.0 {
                acc += w;
                cumulative.push(acc);
                examples.push(LabeledExample { point: *x, label: *y });
            }
        }
        if examples.is_empty() {
            return Err(Error::domain("distribution has no positive mass"));
        }
        Ok(AtomSampler { cumulative, examples })
    }
}

/// Inverse-CDF sampler over the positive-mass atoms.
#[derive(Clone, Debug)]
pub struct AtomSampler {
    cumulative: Vec<f64>,
    examples: Vec<LabeledExample>,
}

impl AtomSampler {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> LabeledExample {
        let r: f64 = rng.random::<f64>() * self.cumulative[self.cumulative.len() - 1];
        let k = self.cumulative.partition_point(|&c| c <= r);
        self.examples[k.min(self.examples.len() - 1)]
    }
}

/// Smallest integer `>= x`, snapping values within 1e-9 of an integer.
fn snapped_ceil(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r
    } else {
        x.ceil()
    }
}

/// Counts `(Δ, …, Δ, N - (d-1)Δ)` with `Δ = ceil(7Nε / (d-1))` unless
/// `delta_override` is given.
pub fn tlsi_hard_counts_prob(n: u64, d: usize, epsilon: f64, delta_override: Option<u64>) -> Result<Vec<u64>> {
    if d < 2 {
        return Err(Error::domain("hard populations need d >= 2"));
    }
    let delta = match delta_override {
        Some(v) => v,
        None => {
            if !(epsilon > 0.0) {
                return Err(Error::domain(format!("epsilon must be positive, got {epsilon}")));
            }
            snapped_ceil(7.0 * n as f64 * epsilon / (d - 1) as f64) as u64
        }
    };
    let rare = (d as u64 - 1).checked_mul(delta);
    match rare {
        Some(r) if r <= n => {
            let mut counts = vec![delta; d - 1];
            counts.push(n - r);
            Ok(counts)
        }
        _ => Err(Error::domain(format!(
            "hard-instance preconditions violated: (d-1)Δ = {}·{delta} exceeds N = {n}",
            d - 1
        ))),
    }
}

/// Counts `(⌊N/m⌋, …, ⌊N/m⌋, N - (d-1)⌊N/m⌋)`.
pub fn tlsi_hard_counts_expect(n: u64, d: usize, m: u64) -> Result<Vec<u64>> {
    if d == 0 || m == 0 || m < d as u64 - 1 {
        return Err(Error::domain(format!(
            "need m >= d - 1 and m >= 1, got m = {m}, d = {d}"
        )));
    }
    let delta = n / m;
    let rare = (d as u64 - 1) * delta;
    if rare > n {
        return Err(Error::domain("rare points exceed the population"));
    }
    let mut counts = vec![delta; d - 1];
    counts.push(n - rare);
    Ok(counts)
}

/// `i_j` copies of `(x_j, b_j)`, in block order by point index.
pub fn materialize_population(spec: &PopulationSpec) -> Dataset {
    spec.b
        .iter()
        .zip(&spec.i)
        .enumerate()
        .flat_map(|(j, (&y, &c))| std::iter::repeat_n(LabeledExample::new(j, y), c as usize))
        .collect()
}

fn check_labels(d: usize, b: &[bool]) -> Result<()> {
    if d == 0 || b.len() != d {
        return Err(Error::domain(format!("need {d} labels, got {}", b.len())));
    }
    Ok(())
}

fn atoms_with_rare_mass<T: Scalar>(b: &[bool], rare: T, last: T) -> Vec<(PointId, bool, T)> {
    let d = b.len();
    b.iter()
        .enumerate()
        .map(|(j, &y)| (PointId(j), y, if j + 1 == d { last.clone() } else { rare.clone() }))
        .collect()
}

/// Mass `1/m` on each of the first `d-1` atoms and the rest on `(x_d, b_d)`.
pub fn tlsii_hard_distribution_expect<T: Scalar>(d: usize, m: u64, b: &[bool]) -> Result<DiscreteDistribution<T>> {
    check_labels(d, b)?;
    let rare = d as u64 - 1;
    if m == 0 || m < rare {
        return Err(Error::domain(format!("need m >= d - 1, got m = {m}, d = {d}")));
    }
    let atoms = atoms_with_rare_mass(b, T::from_ratio(1, m), T::from_ratio(m - rare, m));
    DiscreteDistribution::new(d, atoms)
}

/// Mass `p` on each of the first `d-1` atoms and `1 - (d-1)p` on the last.
pub fn tlsii_hard_distribution_p<T: Scalar>(d: usize, p: T, b: &[bool]) -> Result<DiscreteDistribution<T>> {
    check_labels(d, b)?;
    let rare = T::from_u64(d as u64 - 1);
    let used = rare * p.clone();
    if !(p > T::zero()) || used > T::one() && (used.as_f64() - 1.0) > 1e-12 {
        return Err(Error::domain(format!("need 0 < p <= 1/(d-1), got p = {}", p.as_f64())));
    }
    let last = if used > T::one() { T::zero() } else { T::one() - used };
    DiscreteDistribution::new(d, atoms_with_rare_mass(b, p, last))
}

/// `d` iid fair bits.
pub fn random_labeling<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<bool> {
    (0..d).map(|_| rng.random::<bool>()).collect()
}

/// How labels are chosen per trial.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Labeling {
    /// Fresh uniform `b` every trial.
    Uniform,
    Fixed(#[serde(with = "bits")] Vec<bool>),
}

impl Labeling {
    pub fn draw<R: Rng + ?Sized>(&self, d: usize, rng: &mut R) -> Vec<bool> {
        match self {
            Labeling::Uniform => random_labeling(d, rng),
            Labeling::Fixed(b) => b.clone(),
        }
    }
}

/// Every `b ∈ {0,1}^d` in canonical order, for `d <= 12`.
pub fn labeling_grid(d: usize) -> Result<Vec<Vec<bool>>> {
    if d == 0 || d > LABELING_GRID_MAX_D {
        return Err(Error::Resource {
            what: format!("labeling grid for d = {d}"),
            size: 1u128 << d.min(127),
            cap: 1u128 << LABELING_GRID_MAX_D,
        });
    }
    Ok((0..1u64 << d)
        .map(|code| (0..d).map(|j| code >> (d - 1 - j) & 1 == 1).collect())
        .collect())
}

/// Copies of each point landing on the test side of `split`.
pub fn test_multiplicities(spec: &PopulationSpec, split: &Split) -> Result<MultiplicityProfile> {
    if split.n() as u64 != spec.n() {
        return Err(Error::domain(format!(
            "split sized for N = {} applied to a population of size {}",
            split.n(),
            spec.n()
        )));
    }
    let mut owner = Vec::with_capacity(split.n());
    for (j, &c) in spec.i.iter().enumerate() {
        owner.extend(std::iter::repeat_n(j, c as usize));
    }
    let mut counts = vec![0u64; spec.d()];
    for &p in split.test_positions() {
        counts[owner[p]] += 1;
    }
    Ok(MultiplicityProfile { counts })
}

/// Serialized instance description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "setting")]
pub enum InstanceSpec {
    #[serde(rename = "TLSI")]
    Tlsi {
        d: usize,
        #[serde(with = "bits")]
        b: Vec<bool>,
        i: Vec<u64>,
    },
    #[serde(rename = "TLSII")]
    Tlsii {
        d: usize,
        #[serde(with = "bits")]
        b: Vec<bool>,
        p: f64,
    },
}

impl InstanceSpec {
    pub fn population(&self) -> Result<PopulationSpec> {
        match self {
            InstanceSpec::Tlsi { d, b, i } => {
                check_labels(*d, b)?;
                PopulationSpec::new(b.clone(), i.clone())
            }
            InstanceSpec::Tlsii { .. } => Err(Error::config("TLSII instance has no finite population")),
        }
    }

    pub fn distribution(&self) -> Result<DiscreteDistribution<f64>> {
        match self {
            InstanceSpec::Tlsii { d, b, p } => tlsii_hard_distribution_p(*d, *p, b),
            InstanceSpec::Tlsi { .. } => Err(Error::config("TLSI instance is a population, not a law")),
        }
    }
}

impl From<&PopulationSpec> for InstanceSpec {
    fn from(spec: &PopulationSpec) -> Self {
        InstanceSpec::Tlsi {
            d: spec.d(),
            b: spec.b.clone(),
            i: spec.i.clone(),
        }
    }
}

/// Bit vectors as JSON arrays of 0/1.
mod bits {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(b: &[bool], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(b.iter().map(|&y| y as u8))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<bool>, D::Error> {
        Vec::<u8>::deserialize(d)?
            .into_iter()
            .map(|v| match v {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(D::Error::custom(format!("label {other} is not 0 or 1"))),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::is_realizable;
    use crate::hypothesis::HypothesisClass;
    use crate::prob::hypergeometric_pmf;
    use crate::rng::{seeded, trial_rng};
    use crate::Exact;
    use proptest::prelude::*;

    fn bits(v: &[u8]) -> Vec<bool> {
        v.iter().map(|&y| y == 1).collect()
    }

    #[test]
    fn prob_counts_examples() {
        let mut want = vec![1; 7];
        want.push(121);
        assert_eq!(tlsi_hard_counts_prob(128, 8, 1.0 / 128.0, None).unwrap(), want);
        let mut want = vec![4; 7];
        want.push(100);
        assert_eq!(tlsi_hard_counts_prob(128, 8, 1.0 / 32.0, None).unwrap(), want);
        assert_eq!(tlsi_hard_counts_prob(4, 2, 1e-9, None).unwrap(), vec![1, 3]);
        assert!(tlsi_hard_counts_prob(8, 5, 0.5, None).is_err());
        assert_eq!(tlsi_hard_counts_prob(64, 3, 0.0, Some(4)).unwrap(), vec![4, 4, 56]);
    }

    #[test]
    fn expect_counts_examples() {
        assert_eq!(tlsi_hard_counts_expect(64, 5, 16).unwrap(), vec![4, 4, 4, 4, 48]);
        assert_eq!(tlsi_hard_counts_expect(20, 2, 10).unwrap(), vec![2, 18]);
        assert_eq!(tlsi_hard_counts_expect(10, 5, 9).unwrap(), vec![1, 1, 1, 1, 6]);
        assert!(tlsi_hard_counts_expect(10, 5, 3).is_err());
    }

    #[test]
    fn materialize_examples() {
        let ds = |v: &[(usize, u8)]| {
            v.iter()
                .map(|&(p, y)| LabeledExample::new(p, y == 1))
                .collect::<Dataset>()
        };
        let pop = |b: &[u8], i: &[u64]| materialize_population(&PopulationSpec::new(bits(b), i.to_vec()).unwrap());
        assert_eq!(pop(&[0, 1], &[1, 1]), ds(&[(0, 0), (1, 1)]));
        assert_eq!(pop(&[1, 0], &[2, 0]), ds(&[(0, 1), (0, 1)]));
        assert_eq!(pop(&[0, 1, 0], &[1, 2, 1]), ds(&[(0, 0), (1, 1), (1, 1), (2, 0)]));
    }

    #[test]
    fn population_validation() {
        assert!(PopulationSpec::new(bits(&[0, 1]), vec![1]).is_err());
        assert!(PopulationSpec::new(vec![], vec![]).is_err());
        assert!(PopulationSpec::new(bits(&[0, 1]), vec![1 << 47, 1 << 47]).is_ok());
        assert!(PopulationSpec::new(bits(&[0, 1]), vec![1 << 48, 1]).is_err());
    }

    #[test]
    fn expect_distribution_examples() {
        let p = tlsii_hard_distribution_expect::<Exact>(2, 2, &bits(&[0, 1])).unwrap();
        let half = Exact::from_ratio(1, 2);
        assert_eq!(p.mass(PointId(0)), half);
        assert_eq!(p.mass(PointId(1)), half);
        let p = tlsii_hard_distribution_expect::<Exact>(5, 16, &bits(&[0, 1, 0, 1, 1])).unwrap();
        assert_eq!(p.mass(PointId(3)), Exact::from_ratio(1, 16));
        assert_eq!(p.mass(PointId(4)), Exact::from_ratio(3, 4));
        assert_eq!(p.label(PointId(1)), Some(true));
        let p = tlsii_hard_distribution_expect::<f64>(2, 1_000_000, &bits(&[0, 0])).unwrap();
        assert!(p.mass(PointId(0)) < 1e-5);
        assert!(tlsii_hard_distribution_expect::<f64>(5, 3, &bits(&[0; 5])).is_err());
    }

    #[test]
    fn p_distribution_examples() {
        let p = tlsii_hard_distribution_p(3, Exact::from_ratio(1, 4), &bits(&[1, 0, 1])).unwrap();
        assert_eq!(p.mass(PointId(2)), Exact::from_ratio(1, 2));
        let p = tlsii_hard_distribution_p(3, Exact::from_ratio(1, 2), &bits(&[1, 0, 1])).unwrap();
        assert_eq!(p.mass(PointId(2)), Exact::from_ratio(0, 1));
        let p = tlsii_hard_distribution_p(3, 0.5, &bits(&[1, 0, 1])).unwrap();
        assert!(p.sampler().is_ok());
        let p16 = 16.0 * (1.0 / 64.0) / 4.0;
        assert_eq!(p16, 1.0 / 16.0);
        assert!(tlsii_hard_distribution_p(5, p16, &bits(&[0; 5])).is_ok());
        assert!(tlsii_hard_distribution_p(3, 0.6, &bits(&[0; 3])).is_err());
        assert!(tlsii_hard_distribution_p(3, 0.0, &bits(&[0; 3])).is_err());
    }

    #[test]
    fn random_labeling_is_fair_and_reproducible() {
        let trials = 100_000u64;
        let ones = (0..trials)
            .filter(|&t| random_labeling(1, &mut trial_rng(1, t))[0])
            .count() as f64;
        assert!((ones - trials as f64 / 2.0).abs() < 4.0 * (trials as f64 * 0.25).sqrt());
        assert_eq!(random_labeling(16, &mut seeded(3)), random_labeling(16, &mut seeded(3)));
    }

    #[test]
    fn random_labeling_of_eight_bits_is_uniform() {
        let draws = 1_000_000usize;
        let mut hist = vec![0u64; 256];
        let mut rng = seeded(8);
        for _ in 0..draws {
            let b = random_labeling(8, &mut rng);
            hist[b.iter().fold(0usize, |acc, &y| acc << 1 | y as usize)] += 1;
        }
        let expected = draws as f64 / 256.0;
        let chi2: f64 = hist.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        let p = statrs::distribution::ContinuousCDF::sf(&statrs::distribution::ChiSquared::new(255.0).unwrap(), chi2);
        assert!(p > 0.001, "chi2 = {chi2}, p = {p}");
    }

    #[test]
    fn labeling_grid_enumerates_canonically() {
        let g = labeling_grid(2).unwrap();
        assert_eq!(g, vec![bits(&[0, 0]), bits(&[0, 1]), bits(&[1, 0]), bits(&[1, 1])]);
        assert_eq!(labeling_grid(12).unwrap().len(), 4096);
        assert!(matches!(labeling_grid(13), Err(Error::Resource { .. })));
    }

    #[test]
    fn multiplicities_examples() {
        let spec = PopulationSpec::new(bits(&[0, 1, 1]), vec![2, 1, 2]).unwrap();
        let split = Split::new(vec![0, 4, 2, 1, 3], 1).unwrap();
        let k = test_multiplicities(&spec, &split).unwrap();
        // test positions 0, 4, 2, 1 hold points 0, 2, 1, 0
        assert_eq!(k.counts, vec![2, 1, 1]);
        assert_eq!(k.total(), 4);
        assert_eq!(k.counts[0], spec.counts()[0]);
    }

    #[test]
    fn multiplicity_histogram_is_hypergeometric() {
        let spec = PopulationSpec::new(bits(&[0, 1, 0, 1, 1]), vec![4, 4, 4, 4, 48]).unwrap();
        let trials = 100_000u64;
        let mut hist = [0u64; 5];
        for t in 0..trials {
            let split = Split::random(64, 16, &mut trial_rng(77, t)).unwrap();
            let k = test_multiplicities(&spec, &split).unwrap();
            assert_eq!(k.total(), 48);
            hist[k.counts[0] as usize] += 1;
        }
        for (k, &c) in hist.iter().enumerate() {
            let p = hypergeometric_pmf(64, 4, 48, k as u64).unwrap().prob();
            let sigma = (trials as f64 * p * (1.0 - p)).sqrt().max(1.0);
            assert!(
                (c as f64 - trials as f64 * p).abs() < 4.0 * sigma,
                "k={k} count={c} p={p}"
            );
        }
    }

    #[test]
    fn instance_json_round_trip() {
        let json = r#"{"setting":"TLSI","d":3,"b":[0,1,1],"i":[1,2,5]}"#;
        let spec: InstanceSpec = serde_json::from_str(json).unwrap();
        assert_eq!(spec.population().unwrap().n(), 8);
        assert_eq!(serde_json::to_string(&spec).unwrap(), json);
        let json = r#"{"setting":"TLSII","d":3,"b":[1,0,1],"p":0.25}"#;
        let spec: InstanceSpec = serde_json::from_str(json).unwrap();
        assert_eq!(spec.distribution().unwrap().mass(PointId(2)), 0.5);
        assert_eq!(serde_json::to_string(&spec).unwrap(), json);
        assert!(serde_json::from_str::<InstanceSpec>(r#"{"setting":"TLSI","d":1,"b":[2],"i":[1]}"#).is_err());
    }

    proptest! {
        #[test]
        fn generated_instances_are_realizable(d in 2usize..10, m in 9u64..200, extra in 0u64..200, seed: u64) {
            let n = m + extra.max(m);
            let b = random_labeling(d, &mut seeded(seed));
            let class = HypothesisClass::full(d).unwrap();
            if let Ok(i) = tlsi_hard_counts_expect(n, d, m) {
                prop_assert_eq!(i.len(), d);
                prop_assert_eq!(i.iter().sum::<u64>(), n);
                let spec = PopulationSpec::new(b.clone(), i).unwrap();
                prop_assert!(is_realizable(&materialize_population(&spec), &class));
            }
            let dist = tlsii_hard_distribution_expect::<f64>(d, m.max(d as u64), &b).unwrap();
            for (x, y, _) in dist.atoms() {
                prop_assert_eq!(Some(*y), dist.label(*x));
                prop_assert_eq!(*y, b[x.index()]);
            }
        }

        #[test]
        fn prob_counts_meet_the_proof_side_conditions(d in 2usize..12, m_mult in 8u64..40, u_extra in 0u64..400, k in 1u32..10) {
            let m = m_mult * (d as u64 - 1);
            let u = m + u_extra;
            let n = m + u;
            let epsilon = 1.0 / (32.0 * k as f64);
            let i = tlsi_hard_counts_prob(n, d, epsilon, None).unwrap();
            prop_assert_eq!(i.len(), d);
            prop_assert_eq!(i.iter().sum::<u64>(), n);
            prop_assert!(i[0] as f64 <= u as f64 / (d - 1) as f64);
        }
    }
}
