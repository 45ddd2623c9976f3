//! Learners `h_m(Z_m, X_u)`: ERM, the majority-of-ERMs ensemble and simple
//! baselines.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, PointId};
use crate::error::{Error, Result};
use crate::hypothesis::{Hypothesis, HypothesisClass};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LearnerSpec {
    Erm,
    MajorityOfErms,
    Constant {
        #[serde(with = "bit")]
        bit: bool,
    },
    /// A uniformly random member of the class.
    RandomGuess,
    /// Runs `inner` with an empty unlabeled set.
    IgnoreUnlabeledWrapper {
        inner: Box<LearnerSpec>,
    },
}

impl LearnerSpec {
    pub fn from_json(json: &str) -> Result<Self> {
        serde_json::from_str(json).map_err(|e| Error::config(format!("bad learner spec: {e}")))
    }

    /// Short label used in reports.
    pub fn name(&self) -> String {
        match self {
            LearnerSpec::Erm => "erm".into(),
            LearnerSpec::MajorityOfErms => "majority_of_erms".into(),
            LearnerSpec::Constant { bit } => format!("constant_{}", *bit as u8),
            LearnerSpec::RandomGuess => "random_guess".into(),
            LearnerSpec::IgnoreUnlabeledWrapper { inner } => format!("ignore_unlabeled({})", inner.name()),
        }
    }
}

/// The canonically smallest empirical risk minimizer.
///
/// For the full class the risk separates over points, so the minimizer is
/// the per-point majority label with ties (and unseen points) set to 0.
pub fn erm(class: &HypothesisClass, train: &Dataset) -> Hypothesis {
    if class.is_full() {
        let counts = train.label_counts(class.d());
        let labels: Vec<bool> = counts.iter().map(|c| c[1] > c[0]).collect();
        return Hypothesis::from_labels(&labels).expect("d within range");
    }
    *class
        .members()
        .iter()
        .min_by_key(|h| train.mistakes(h))
        .expect("class is non-empty")
}

fn erm_ensemble(class: &HypothesisClass, sample: &[crate::data::LabeledExample], out: &mut Vec<Hypothesis>) {
    let n = sample.len();
    if n <= 4.max(3 * class.d()) {
        out.push(erm(class, &Dataset::new(sample.to_vec())));
        return;
    }
    let q = n / 4;
    let head = n - 3 * q;
    let s0 = &sample[..head];
    let blocks = [
        &sample[head..head + q],
        &sample[head + q..head + 2 * q],
        &sample[head + 2 * q..],
    ];
    for skip in 0..3 {
        let mut sub = s0.to_vec();
        for (k, block) in blocks.iter().enumerate() {
            if k != skip {
                sub.extend_from_slice(block);
            }
        }
        erm_ensemble(class, &sub, out);
    }
}

/// The ERMs produced by the recursive three-subsample scheme.
pub fn erm_ensemble_members(class: &HypothesisClass, train: &Dataset) -> Vec<Hypothesis> {
    let mut out = Vec::new();
    erm_ensemble(class, train.items(), &mut out);
    out
}

/// Pointwise majority over the recursive ERM ensemble, ties to 0,
/// projected onto the class.
pub fn majority_of_erms(class: &HypothesisClass, train: &Dataset) -> Hypothesis {
    let ensemble = erm_ensemble_members(class, train);
    let d = class.d();
    let mut ones = vec![0usize; d];
    for h in &ensemble {
        for (j, count) in ones.iter_mut().enumerate() {
            *count += h.label(PointId(j)) as usize;
        }
    }
    let labels: Vec<bool> = ones.iter().map(|&c| 2 * c > ensemble.len()).collect();
    class.nearest(&Hypothesis::from_labels(&labels).expect("d within range"))
}

/// Uniform dispatch over learner kinds. Only `random_guess` consumes `rng`.
pub fn run_learner<R: Rng + ?Sized>(
    spec: &LearnerSpec,
    class: &HypothesisClass,
    train: &Dataset,
    unlabeled: &[PointId],
    rng: &mut R,
) -> Result<Hypothesis> {
    let _ = unlabeled;
    Ok(match spec {
        LearnerSpec::Erm => erm(class, train),
        LearnerSpec::MajorityOfErms => majority_of_erms(class, train),
        LearnerSpec::Constant { bit } => class.nearest(&Hypothesis::constant(class.d(), *bit)?),
        LearnerSpec::RandomGuess => class.members()[rng.random_range(0..class.len())],
        LearnerSpec::IgnoreUnlabeledWrapper { inner } => return run_learner(inner, class, train, &[], rng),
    })
}

/// Bits as 0/1 in JSON.
mod bit {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(b: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(*b as u8)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(D::Error::custom(format!("bit {other} is not 0 or 1"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{empirical_error, LabeledExample};
    use crate::rng::seeded;
    use num_rational::Ratio;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn h(labels: &[u8]) -> Hypothesis {
        Hypothesis::from_labels(&labels.iter().map(|&b| b == 1).collect::<Vec<_>>()).unwrap()
    }

    fn ds(items: &[(usize, u8)]) -> Dataset {
        items.iter().map(|&(p, y)| LabeledExample::new(p, y == 1)).collect()
    }

    fn brute_force_erm(class: &HypothesisClass, train: &Dataset) -> Hypothesis {
        *class
            .members()
            .iter()
            .min_by_key(|h| (train.mistakes(h), h.code()))
            .unwrap()
    }

    #[test]
    fn erm_examples() {
        let full2 = HypothesisClass::full(2).unwrap();
        assert_eq!(erm(&full2, &ds(&[(0, 1)])), h(&[1, 0]));
        assert_eq!(erm(&full2, &ds(&[(0, 0), (1, 1), (1, 1)])), h(&[0, 1]));
        let full1 = HypothesisClass::full(1).unwrap();
        let noisy = ds(&[(0, 0), (0, 1)]);
        assert_eq!(empirical_error(&erm(&full1, &noisy), &noisy).unwrap(), Ratio::new(1, 2));
    }

    #[test]
    fn full_class_fast_path_matches_brute_force() {
        let full = HypothesisClass::full(4).unwrap();
        let general = HypothesisClass::new(4, full.members().iter().copied()).unwrap();
        let mut rng = seeded(2);
        for _ in 0..500 {
            let n = rng.random_range(0..12);
            let train: Dataset = (0..n)
                .map(|_| LabeledExample::new(rng.random_range(0..4), rng.random::<bool>()))
                .collect();
            assert_eq!(erm(&full, &train), brute_force_erm(&full, &train));
            assert_eq!(erm(&full, &train), erm(&general, &train));
        }
    }

    #[test]
    fn restricted_class_erm_uses_canonical_order() {
        let class = HypothesisClass::new(3, [h(&[1, 1, 0]), h(&[0, 1, 1]), h(&[1, 0, 1])]).unwrap();
        // every member errs once on this sample
        let train = ds(&[(0, 0), (1, 0), (2, 0)]);
        let a = erm(&class, &train);
        assert_eq!(a, h(&[0, 1, 1]));
    }

    #[test]
    fn majority_base_case_is_erm() {
        let full = HypothesisClass::full(3).unwrap();
        let train = ds(&[(0, 1), (1, 0), (2, 1), (0, 1), (1, 0), (2, 1), (0, 1), (1, 0), (2, 1)]);
        assert_eq!(erm_ensemble_members(&full, &train).len(), 1);
        assert_eq!(majority_of_erms(&full, &train), erm(&full, &train));
    }

    #[test]
    fn majority_recursion_shape() {
        let full = HypothesisClass::full(1).unwrap();
        // 5 items: head of 2 and three blocks of 1; each subsample has 4 items.
        let train = ds(&[(0, 1); 5]);
        assert_eq!(erm_ensemble_members(&full, &train).len(), 3);
        let train = ds(&[(0, 1); 16]);
        // 16 -> 3 x 12 -> 9 x 9 -> 27 x 7 -> 81 x 6 -> 243 x 5 -> 729 x 4
        assert_eq!(erm_ensemble_members(&full, &train).len(), 729);
    }

    #[test]
    fn majority_is_consistent_when_every_subsample_sees_every_point() {
        let full = HypothesisClass::full(4).unwrap();
        let target = h(&[1, 0, 1, 1]);
        for n in [13, 40, 64, 100] {
            let train: Dataset = (0..n)
                .map(|k| LabeledExample::new(k % 4, target.label(PointId(k % 4))))
                .collect();
            assert_eq!(train.mistakes(&majority_of_erms(&full, &train)), 0, "n={n}");
        }
    }

    #[test]
    fn majority_members_are_consistent_and_never_invent_ones() {
        let full = HypothesisClass::full(4).unwrap();
        let target = h(&[1, 0, 1, 1]);
        let mut rng = seeded(6);
        for _ in 0..50 {
            let train: Dataset = (0..40)
                .map(|_| {
                    let x = rng.random_range(0..4);
                    LabeledExample::new(x, target.label(PointId(x)))
                })
                .collect();
            // members only err by predicting 0 on points their subsample missed
            for member in erm_ensemble_members(&full, &train) {
                assert!(train
                    .items()
                    .iter()
                    .all(|z| member.label(z.point) == z.label || z.label));
            }
            let out = majority_of_erms(&full, &train);
            assert!(!out.label(PointId(1)));
        }
    }

    #[test]
    fn majority_projects_into_restricted_classes() {
        let class = HypothesisClass::new(3, [h(&[0, 0, 0]), h(&[1, 1, 1])]).unwrap();
        let train: Dataset = (0..30).map(|k| LabeledExample::new(k % 3, k % 3 != 2)).collect();
        let out = majority_of_erms(&class, &train);
        assert!(class.contains(&out));
    }

    #[test]
    fn run_learner_examples() {
        let full = HypothesisClass::full(3).unwrap();
        let train = ds(&[(0, 1), (2, 1)]);
        let mut rng = seeded(0);
        let ones = LearnerSpec::Constant { bit: true };
        assert_eq!(run_learner(&ones, &full, &train, &[], &mut rng).unwrap(), h(&[1, 1, 1]));
        let no_ones = HypothesisClass::new(3, [h(&[0, 0, 0]), h(&[1, 1, 0])]).unwrap();
        assert_eq!(
            run_learner(&ones, &no_ones, &train, &[], &mut rng).unwrap(),
            h(&[1, 1, 0])
        );

        let wrapped = LearnerSpec::IgnoreUnlabeledWrapper {
            inner: Box::new(LearnerSpec::Erm),
        };
        let a = run_learner(&wrapped, &full, &train, &[PointId(1)], &mut rng).unwrap();
        let b = run_learner(&wrapped, &full, &train, &[PointId(0), PointId(2)], &mut rng).unwrap();
        assert_eq!(a, b);

        let guess = |seed| run_learner(&LearnerSpec::RandomGuess, &full, &train, &[], &mut seeded(seed)).unwrap();
        assert_eq!(guess(4), guess(4));
    }

    #[test]
    fn random_guess_is_uniform_over_the_class() {
        let full = HypothesisClass::full(2).unwrap();
        let mut rng = seeded(10);
        let trials = 40_000;
        let mut hist = [0u32; 4];
        for _ in 0..trials {
            hist[run_learner(&LearnerSpec::RandomGuess, &full, &Dataset::default(), &[], &mut rng)
                .unwrap()
                .code() as usize] += 1;
        }
        let sigma = (trials as f64 * 0.25 * 0.75).sqrt();
        for c in hist {
            assert!((c as f64 - trials as f64 / 4.0).abs() < 4.0 * sigma);
        }
    }

    #[test]
    fn learner_json() {
        assert_eq!(LearnerSpec::from_json(r#"{"kind":"erm"}"#).unwrap(), LearnerSpec::Erm);
        assert_eq!(
            LearnerSpec::from_json(r#"{"kind":"constant","bit":1}"#).unwrap(),
            LearnerSpec::Constant { bit: true }
        );
        let nested =
            LearnerSpec::from_json(r#"{"kind":"ignore_unlabeled_wrapper","inner":{"kind":"majority_of_erms"}}"#)
                .unwrap();
        assert_eq!(nested.name(), "ignore_unlabeled(majority_of_erms)");
        let err = LearnerSpec::from_json(r#"{"kind":"svm"}"#).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert_eq!(
            serde_json::to_string(&LearnerSpec::Constant { bit: false }).unwrap(),
            r#"{"kind":"constant","bit":0}"#
        );
    }

    fn arb_train(d: usize, max_len: usize) -> impl Strategy<Value = Vec<(usize, bool)>> {
        prop::collection::vec((0..d, any::<bool>()), 0..max_len)
    }

    proptest! {
        #[test]
        fn erm_ignores_train_order(items in arb_train(5, 40), seed: u64) {
            let full = HypothesisClass::full(5).unwrap();
            let restricted = HypothesisClass::new(5, full.members().iter().copied().filter(|h| h.code() % 3 != 1)).unwrap();
            let train: Dataset = items.iter().map(|&(x, y)| LabeledExample::new(x, y)).collect();
            let mut shuffled = train.items().to_vec();
            shuffled.shuffle(&mut seeded(seed));
            let shuffled = Dataset::new(shuffled);
            prop_assert_eq!(erm(&full, &train), erm(&full, &shuffled));
            prop_assert_eq!(erm(&restricted, &train), erm(&restricted, &shuffled));
        }

        #[test]
        fn erm_is_consistent_under_realizability(code in 0u64..64, points in prop::collection::vec(0usize..6, 0..30)) {
            let full = HypothesisClass::full(6).unwrap();
            let target = Hypothesis::from_code(6, code).unwrap();
            let train: Dataset = points.iter().map(|&x| LabeledExample::new(x, target.label(PointId(x)))).collect();
            prop_assert_eq!(train.mistakes(&erm(&full, &train)), 0);
        }

        #[test]
        fn supervised_learners_ignore_unlabeled_input(
            items in arb_train(4, 30),
            xu_a in prop::collection::vec(0usize..4, 0..10),
            xu_b in prop::collection::vec(0usize..4, 0..10),
            seed: u64,
        ) {
            let full = HypothesisClass::full(4).unwrap();
            let train: Dataset = items.iter().map(|&(x, y)| LabeledExample::new(x, y)).collect();
            let a: Vec<PointId> = xu_a.into_iter().map(PointId).collect();
            let b: Vec<PointId> = xu_b.into_iter().map(PointId).collect();
            for spec in [
                LearnerSpec::Erm,
                LearnerSpec::MajorityOfErms,
                LearnerSpec::Constant { bit: true },
                LearnerSpec::RandomGuess,
            ] {
                let ha = run_learner(&spec, &full, &train, &a, &mut seeded(seed)).unwrap();
                let hb = run_learner(&spec, &full, &train, &b, &mut seeded(seed)).unwrap();
                prop_assert_eq!(ha, hb);
            }
        }
    }
}
