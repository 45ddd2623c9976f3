//! A verification laboratory for transductive, realizable, binary classification.
//!
//! The crate builds the adversarial instance families used by minimax lower
//! bounds (sampling without replacement from a finite population, and iid
//! sampling from point-mass laws), runs supervised learners that ignore the
//! unlabeled set (ERM, a majority vote of ERMs, baselines), evaluates the
//! closed-form lower and upper bounds, and checks by Monte Carlo and by exact
//! enumeration that observed minimax behaviour sits between them.
//!
//! Numeric code is generic over the scalar type: bound evaluators accept any
//! [`num_traits::Float`], exact kernels and the brute-force oracle accept any
//! [`Scalar`] (including the exact [`Exact`] rational). The aliases at the
//! crate root fix the usual choices.

pub mod bounds;
pub mod cli;
pub mod data;
pub mod error;
pub mod estimators;
pub mod hypothesis;
pub mod instances;
pub mod learners;
pub mod oracle;
pub mod prob;
pub mod rng;
pub mod scalar;

pub use data::{Dataset, ExperimentConfig, LabeledExample, PointId, Split};
pub use error::{Error, Result};
pub use hypothesis::{Hypothesis, HypothesisClass};
pub use instances::PopulationSpec;
pub use learners::LearnerSpec;
pub use scalar::Scalar;

/// Floating point type used for reporting.
pub type Real = f64;

/// Exact rational used by the enumeration oracles.
pub type Exact = num_rational::BigRational;

/// Exact rational with 64-bit parts; the type of `err(h, Z)`.
pub type ErrRatio = num_rational::Ratio<u64>;

pub type BoundEvaluation = bounds::BoundEvaluation<f64>;
pub type DiscreteDistribution = instances::DiscreteDistribution<f64>;
pub type ExactDistribution = instances::DiscreteDistribution<Exact>;
pub type ExactMinimaxResult = oracle::ExactMinimaxResult<Exact>;
pub type SslChainRecord = oracle::SslChainRecord<Exact>;
