use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::instance::PortfolioInstance;
use super::qp::min_variance_at;
use super::returns::ReturnStats;
use crate::error::{GeoError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrontierKind {
    /// Exact frontier without the cardinality constraint.
    Standard,
    /// Points found by a heuristic under the cardinality constraint.
    Heuristic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub risk: f64,
    #[serde(rename = "return")]
    pub ret: f64,
}

/// `(risk, return)` points ordered by strictly increasing return.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFrontier")]
pub struct FrontierSet {
    pub kind: FrontierKind,
    points: Vec<FrontierPoint>,
}

#[derive(Deserialize)]
struct RawFrontier {
    kind: FrontierKind,
    points: Vec<FrontierPoint>,
}

impl TryFrom<RawFrontier> for FrontierSet {
    type Error = GeoError;

    fn try_from(raw: RawFrontier) -> Result<Self> {
        FrontierSet::new(raw.kind, raw.points)
    }
}

impl FrontierSet {
    /// Validates ordering and signs.
    pub fn new(kind: FrontierKind, points: Vec<FrontierPoint>) -> Result<Self> {
        for p in &points {
            if !(p.risk >= 0.0) || !p.risk.is_finite() || !p.ret.is_finite() {
                return Err(GeoError::InvalidData(format!(
                    "frontier point ({}, {}) is not a finite nonnegative-risk point",
                    p.risk, p.ret
                )));
            }
        }
        if points.windows(2).any(|w| !(w[1].ret > w[0].ret)) {
            return Err(GeoError::InvalidData("frontier returns must be strictly increasing".into()));
        }
        Ok(FrontierSet { kind, points })
    }

    /// Sorts arbitrary points by return, keeping the lowest risk among equal
    /// returns and dropping non-finite points.
    pub fn from_unsorted(kind: FrontierKind, mut points: Vec<FrontierPoint>) -> Result<Self> {
        points.retain(|p| p.risk.is_finite() && p.ret.is_finite() && p.risk >= 0.0);
        points.sort_by(|a, b| a.ret.total_cmp(&b.ret).then(a.risk.total_cmp(&b.risk)));
        points.dedup_by(|later, earlier| later.ret == earlier.ret);
        Self::new(kind, points)
    }

    pub fn points(&self) -> &[FrontierPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The part of the frontier from the minimum-risk point upwards in
    /// return, where risk is non-decreasing.
    pub fn efficient_branch(&self) -> FrontierSet {
        let start = self
            .points
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.risk.total_cmp(&b.1.risk).then(b.0.cmp(&a.0)))
            .map_or(0, |(i, _)| i);
        FrontierSet {
            kind: self.kind,
            points: self.points[start..].to_vec(),
        }
    }
}

/// Minimum-variance frontier without the cardinality constraint on a uniform
/// grid of `n_points` return targets over `[min r_i, max r_i]`.
/// Unreachable targets are dropped.
pub fn standard_frontier(
    stats: &ReturnStats,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    n_points: usize,
) -> Result<FrontierSet> {
    if n_points < 2 {
        return Err(GeoError::invalid("a frontier needs at least two grid points"));
    }
    let n = stats.n_assets();
    if lower.len() != n || upper.len() != n {
        return Err(GeoError::invalid(format!("bounds must have length {n}")));
    }
    let r = &stats.mean_returns;
    let (lo, hi) = (r.min(), r.max());
    let mut points = Vec::with_capacity(n_points);
    for k in 0..n_points {
        let rho = if k + 1 == n_points {
            hi
        } else {
            lo + (hi - lo) * k as f64 / (n_points - 1) as f64
        };
        if points.last().is_some_and(|p: &FrontierPoint| p.ret >= rho) {
            continue;
        }
        if let Some(sol) = min_variance_at(&stats.covariance, r, lower, upper, rho)? {
            let var = sol.w.dot(&(&stats.covariance * &sol.w));
            points.push(FrontierPoint {
                risk: var.max(0.0).sqrt(),
                ret: rho,
            });
        }
    }
    if points.is_empty() {
        return Err(GeoError::EmptyFrontier);
    }
    FrontierSet::new(FrontierKind::Standard, points)
}

impl PortfolioInstance {
    /// [`standard_frontier`] with this instance's statistics and bounds.
    pub fn standard_frontier(&self, n_points: usize) -> Result<FrontierSet> {
        standard_frontier(self.stats(), self.lower_bounds(), self.upper_bounds(), n_points)
    }
}
