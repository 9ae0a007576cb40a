//! Cardinality-constrained Markowitz portfolios.
//!
//! A [`PortfolioInstance`] fixes the universe (mean returns and covariance),
//! the cardinality `kappa`, the weight bounds and the objective. The
//! combinatorial part of the problem is the choice of a [`Selection`]; for a
//! fixed selection the optimal weights come from a small convex QP
//! ([`solve_inner_qp`]).

mod frontier;
mod instance;
mod io;
mod qp;
mod returns;
mod synthetic;

pub use crate::bits::Selection;
pub use frontier::{standard_frontier, FrontierKind, FrontierPoint, FrontierSet};
pub use instance::{EvaluatedCandidate, Objective, PortfolioInstance};
pub use io::{read_orlib_port, read_price_csv};
pub use qp::{solve_inner_qp, QpSolution};
pub use returns::{compute_returns, PriceSeries, ReturnStats};
pub use synthetic::{generate_synthetic_instance, synthetic_prices};
