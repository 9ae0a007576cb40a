//! Generator-enhanced optimization (GEO) over binary decision variables.
//!
//! The crate is organised around the pieces of the optimization loop:
//!
//! - [`born`]: a matrix-product-state Born machine that is trained on
//!   bitstring datasets by negative log-likelihood and sampled exactly.
//! - [`portfolio`]: cardinality-constrained Markowitz instances, the inner
//!   convex QP that prices a fixed asset selection, and efficient frontiers.
//! - [`surrogate`]: the Boltzmann (softmax) multinomial over observed
//!   candidates that turns costs into training data.
//! - [`engine`]: the booster and stand-alone GEO loops over any
//!   [`engine::CostOracle`].
//! - [`baselines`]: simulated annealing with cardinality-preserving swaps and
//!   the two random-search references.
//! - [`metrics`]: relative enhancement, frontier deviation metrics and the
//!   Wilcoxon signed-rank comparison.

pub mod baselines;
pub mod bits;
pub mod born;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod portfolio;
pub mod rng;
pub mod serde_cost;
pub mod surrogate;

pub use bits::Bitstring;
pub use error::{GeoError, Result};
