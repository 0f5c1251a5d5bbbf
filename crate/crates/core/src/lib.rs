//! Stability notions for learning rules over finite domains: total variation
//! indistinguishability, replicability and differential privacy, with the
//! transformations between them and a Monte Carlo verification harness.
//!
//! Distribution arithmetic is generic over the [`Probability`] scalar. The
//! aliases below fix the common choices.

pub mod boosting;
pub mod coupling;
pub mod dist;
pub mod dp;
pub mod error;
pub mod fixtures;
pub mod metrics;
pub mod model;
pub mod randomness;
pub mod replicable;
pub mod rule;
pub mod sampling;
pub mod scalar;
pub mod transforms;
pub mod verify;

pub use dist::{posterior_mixture, tv_distance, tv_distance_indexed, FiniteDistribution};
pub use error::{Error, Result};
pub use model::{empirical_loss, population_loss, Dataset, Example, ExampleDistribution, Hypothesis, HypothesisClass};
pub use randomness::{Label, PoissonStripStream, Seed, Tape};
pub use scalar::Probability;

/// Double precision distribution, the default everywhere outside exact checks.
pub type Dist<T> = FiniteDistribution<T, f64>;
/// Single precision distribution.
pub type Dist32<T> = FiniteDistribution<T, f32>;
/// Exact rational distribution used by zero-tolerance enumeration checks.
pub type ExactDist<T> = FiniteDistribution<T, num_rational::Ratio<i64>>;
/// Exact rational scalar.
pub type Exact = num_rational::Ratio<i64>;
