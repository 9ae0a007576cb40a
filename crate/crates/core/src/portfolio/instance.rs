use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::qp::solve_inner_qp;
use super::returns::ReturnStats;
use crate::bits::Selection;
use crate::error::{GeoError, Result};

/// What the inner QP optimises for a fixed selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Objective {
    /// Minimise `w' Sigma w` subject to `r'w = rho`; the cost is the risk
    /// `sqrt(w' Sigma w)`.
    ReturnTarget { rho: f64 },
    /// Minimise `lambda w' Sigma w - (1 - lambda) r'w`; the cost is that value.
    RiskAversion { lambda: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RawInstance {
    cardinality: usize,
    objective: Objective,
    lower_bounds: Vec<f64>,
    upper_bounds: Vec<f64>,
    stats: ReturnStats,
}

/// A validated cardinality-constrained portfolio problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInstance", into = "RawInstance")]
pub struct PortfolioInstance {
    cardinality: usize,
    objective: Objective,
    lower: DVector<f64>,
    upper: DVector<f64>,
    stats: ReturnStats,
}

impl TryFrom<RawInstance> for PortfolioInstance {
    type Error = GeoError;

    fn try_from(raw: RawInstance) -> Result<Self> {
        let stats = ReturnStats::new(raw.stats.asset_ids, raw.stats.mean_returns, raw.stats.covariance)?;
        PortfolioInstance::with_bounds(
            stats,
            raw.cardinality,
            raw.objective,
            DVector::from_vec(raw.lower_bounds),
            DVector::from_vec(raw.upper_bounds),
        )
    }
}

impl From<PortfolioInstance> for RawInstance {
    fn from(p: PortfolioInstance) -> Self {
        RawInstance {
            cardinality: p.cardinality,
            objective: p.objective,
            lower_bounds: p.lower.iter().copied().collect(),
            upper_bounds: p.upper.iter().copied().collect(),
            stats: p.stats,
        }
    }
}

impl PortfolioInstance {
    /// Instance with the default bounds `l = 0`, `u = 1`.
    pub fn new(stats: ReturnStats, cardinality: usize, objective: Objective) -> Result<Self> {
        let n = stats.n_assets();
        Self::with_bounds(stats, cardinality, objective, DVector::zeros(n), DVector::from_element(n, 1.0))
    }

    /// Checks `1 <= kappa <= N`, `0 <= l_i < u_i <= 1`, the objective
    /// parameters, and that `sum w = 1` is reachable within the bounds for
    /// every subset of `kappa` assets: the `kappa` largest lower bounds sum
    /// to at most 1 and the `kappa` smallest upper bounds to at least 1.
    pub fn with_bounds(
        stats: ReturnStats,
        cardinality: usize,
        objective: Objective,
        lower: DVector<f64>,
        upper: DVector<f64>,
    ) -> Result<Self> {
        let n = stats.n_assets();
        if cardinality == 0 || cardinality > n {
            return Err(GeoError::invalid(format!("cardinality {cardinality} outside 1..={n}")));
        }
        if lower.len() != n || upper.len() != n {
            return Err(GeoError::invalid(format!("bounds must have length {n}")));
        }
        for i in 0..n {
            let (l, u) = (lower[i], upper[i]);
            if !(0.0..1.0).contains(&l) || !(u > 0.0 && u <= 1.0) || l >= u {
                return Err(GeoError::invalid(format!("asset {i}: invalid bounds [{l}, {u}]")));
            }
        }
        match objective {
            Objective::ReturnTarget { rho } if !rho.is_finite() => {
                return Err(GeoError::invalid("return target must be finite"));
            }
            Objective::RiskAversion { lambda } if !(0.0..=1.0).contains(&lambda) => {
                return Err(GeoError::invalid(format!("risk aversion {lambda} outside [0, 1]")));
            }
            _ => {}
        }
        let mut l_sorted: Vec<f64> = lower.iter().copied().collect();
        l_sorted.sort_by(|a, b| b.total_cmp(a));
        let mut u_sorted: Vec<f64> = upper.iter().copied().collect();
        u_sorted.sort_by(|a, b| a.total_cmp(b));
        let worst_lower: f64 = l_sorted[..cardinality].iter().sum();
        let worst_upper: f64 = u_sorted[..cardinality].iter().sum();
        if worst_lower > 1.0 + 1e-12 || worst_upper < 1.0 - 1e-12 {
            return Err(GeoError::invalid(format!(
                "some {cardinality}-asset selection cannot hold a fully invested portfolio \
                 (largest lower-bound sum {worst_lower}, smallest upper-bound sum {worst_upper})"
            )));
        }
        Ok(PortfolioInstance {
            cardinality,
            objective,
            lower,
            upper,
            stats,
        })
    }

    /// The same universe and bounds with a different objective.
    pub fn with_objective(&self, objective: Objective) -> Result<Self> {
        Self::with_bounds(self.stats.clone(), self.cardinality, objective, self.lower.clone(), self.upper.clone())
    }

    pub fn n_assets(&self) -> usize {
        self.stats.n_assets()
    }

    pub fn cardinality(&self) -> usize {
        self.cardinality
    }

    pub fn objective(&self) -> Objective {
        self.objective
    }

    pub fn lower_bounds(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper_bounds(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn stats(&self) -> &ReturnStats {
        &self.stats
    }

    pub fn mean_returns(&self) -> &DVector<f64> {
        &self.stats.mean_returns
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.stats.covariance
    }

    /// Solves the inner QP for `sel`; see [`solve_inner_qp`].
    pub fn evaluate(&self, sel: &Selection) -> Result<EvaluatedCandidate> {
        solve_inner_qp(self, sel)
    }

    /// Hex SHA-256 over `Sigma`, `r`, `kappa` and the objective.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n_assets() as u64).to_le_bytes());
        h.update((self.cardinality as u64).to_le_bytes());
        match self.objective {
            Objective::ReturnTarget { rho } => {
                h.update(b"rho");
                h.update(rho.to_le_bytes());
            }
            Objective::RiskAversion { lambda } => {
                h.update(b"lambda");
                h.update(lambda.to_le_bytes());
            }
        }
        for v in self.stats.mean_returns.iter() {
            h.update(v.to_le_bytes());
        }
        for i in 0..self.n_assets() {
            for j in 0..self.n_assets() {
                h.update(self.stats.covariance[(i, j)].to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

/// A selection priced by the inner QP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluatedCandidate {
    pub selection: Selection,
    /// Length `N`, zero off the selection.
    pub weights: Vec<f64>,
    /// Risk `sigma` or the risk-aversion objective; `+inf` when infeasible.
    #[serde(with = "crate::serde_cost")]
    pub cost: f64,
    pub feasible: bool,
}

impl EvaluatedCandidate {
    pub fn infeasible(selection: Selection) -> Self {
        let n = selection.len();
        EvaluatedCandidate {
            selection,
            weights: vec![0.0; n],
            cost: f64::INFINITY,
            feasible: false,
        }
    }

    /// `(risk, return)` of the weights under `inst`.
    pub fn risk_return(&self, inst: &PortfolioInstance) -> (f64, f64) {
        let w = DVector::from_column_slice(&self.weights);
        let var = (w.transpose() * inst.covariance() * &w)[(0, 0)];
        (var.max(0.0).sqrt(), inst.mean_returns().dot(&w))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(n: usize) -> ReturnStats {
        ReturnStats::new(
            (0..n).map(|i| format!("A{i}")).collect(),
            DVector::from_fn(n, |i, _| 0.01 * i as f64),
            DMatrix::identity(n, n),
        )
        .unwrap()
    }

    #[test]
    fn rejects_bad_cardinality_and_bounds() {
        let obj = Objective::ReturnTarget { rho: 0.0 };
        assert!(PortfolioInstance::new(stats(3), 0, obj).is_err());
        assert!(PortfolioInstance::new(stats(3), 4, obj).is_err());
        let lower = DVector::from_element(3, 0.4);
        let upper = DVector::from_element(3, 1.0);
        // Three assets at 0.4 each cannot sum to 1.
        assert!(PortfolioInstance::with_bounds(stats(3), 3, obj, lower.clone(), upper.clone()).is_err());
        assert!(PortfolioInstance::with_bounds(stats(3), 2, obj, lower, upper).is_ok());
        let upper = DVector::from_element(3, 0.3);
        assert!(PortfolioInstance::with_bounds(stats(3), 3, obj, DVector::zeros(3), upper).is_err());
        assert!(PortfolioInstance::new(stats(3), 2, Objective::RiskAversion { lambda: 1.5 }).is_err());
    }

    #[test]
    fn serde_round_trip_revalidates() {
        let inst = PortfolioInstance::new(stats(3), 2, Objective::RiskAversion { lambda: 0.5 }).unwrap();
        let json = serde_json::to_string(&inst).unwrap();
        let back: PortfolioInstance = serde_json::from_str(&json).unwrap();
        assert_eq!(back, inst);
        assert_eq!(back.fingerprint(), inst.fingerprint());
        let bad = json.replace("\"cardinality\":2", "\"cardinality\":9");
        assert!(serde_json::from_str::<PortfolioInstance>(&bad).is_err());
    }

    #[test]
    fn fingerprint_tracks_objective() {
        let a = PortfolioInstance::new(stats(3), 2, Objective::ReturnTarget { rho: 0.01 }).unwrap();
        let b = a.with_objective(Objective::ReturnTarget { rho: 0.02 }).unwrap();
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint().len(), 64);
    }
}
