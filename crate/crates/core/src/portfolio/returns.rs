use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{GeoError, Result};

/// Asset prices, one row per period and one column per asset.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    pub asset_ids: Vec<String>,
    pub prices: DMatrix<f64>,
    pub period_label: String,
}

impl PriceSeries {
    pub fn new(asset_ids: Vec<String>, prices: DMatrix<f64>, period_label: impl Into<String>) -> Result<Self> {
        if prices.ncols() == 0 {
            return Err(GeoError::InvalidData("price series has no assets".into()));
        }
        if asset_ids.len() != prices.ncols() {
            return Err(GeoError::InvalidData(format!(
                "{} asset ids for {} price columns",
                asset_ids.len(),
                prices.ncols()
            )));
        }
        if prices.nrows() < 2 {
            return Err(GeoError::InvalidData("at least two price rows are required".into()));
        }
        for t in 0..prices.nrows() {
            for i in 0..prices.ncols() {
                let p = prices[(t, i)];
                if !(p > 0.0) || !p.is_finite() {
                    return Err(GeoError::InvalidData(format!(
                        "row {t}, asset {}: price {p} is not positive",
                        asset_ids[i]
                    )));
                }
            }
        }
        Ok(PriceSeries {
            asset_ids,
            prices,
            period_label: period_label.into(),
        })
    }

    pub fn n_assets(&self) -> usize {
        self.prices.ncols()
    }
}

/// Mean per-period returns `r` and their covariance `Sigma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnStats {
    pub asset_ids: Vec<String>,
    pub mean_returns: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl ReturnStats {
    /// Validates shapes, symmetry (1e-12) and positive semidefiniteness
    /// (smallest eigenvalue at least -1e-10), then symmetrises exactly.
    pub fn new(asset_ids: Vec<String>, mean_returns: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let n = mean_returns.len();
        if n == 0 {
            return Err(GeoError::InvalidData("no assets".into()));
        }
        if covariance.nrows() != n || covariance.ncols() != n {
            return Err(GeoError::InvalidData(format!(
                "covariance is {}x{}, expected {n}x{n}",
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        if asset_ids.len() != n {
            return Err(GeoError::InvalidData(format!("{} asset ids for {n} assets", asset_ids.len())));
        }
        if mean_returns.iter().chain(covariance.iter()).any(|v| !v.is_finite()) {
            return Err(GeoError::InvalidData("non-finite return statistics".into()));
        }
        let asym = (&covariance - covariance.transpose()).amax();
        if asym > 1e-12 {
            return Err(GeoError::InvalidData(format!("covariance asymmetric by {asym:e}")));
        }
        let sym = (&covariance + covariance.transpose()) * 0.5;
        let min_eig = SymmetricEigen::new(sym.clone()).eigenvalues.min();
        if min_eig < -1e-10 {
            return Err(GeoError::InvalidData(format!(
                "covariance is not positive semidefinite (eigenvalue {min_eig:e})"
            )));
        }
        Ok(ReturnStats {
            asset_ids,
            mean_returns,
            covariance: sym,
        })
    }

    pub fn n_assets(&self) -> usize {
        self.mean_returns.len()
    }
}

/// Relative per-period returns, their time average and unbiased covariance.
/// With a single return row the covariance is defined as zero.
pub fn compute_returns(prices: &PriceSeries) -> Result<ReturnStats> {
    let p = &prices.prices;
    let (t, n) = (p.nrows(), p.ncols());
    if t < 2 {
        return Err(GeoError::InvalidData("at least two price rows are required".into()));
    }
    for row in 0..t {
        for i in 0..n {
            if !(p[(row, i)] > 0.0) {
                return Err(GeoError::InvalidData(format!(
                    "row {row}, asset {i}: price {} is not positive",
                    p[(row, i)]
                )));
            }
        }
    }
    let rows = t - 1;
    let rets = DMatrix::from_fn(rows, n, |k, i| (p[(k + 1, i)] - p[(k, i)]) / p[(k, i)]);
    let mean = DVector::from_fn(n, |i, _| rets.column(i).sum() / rows as f64);
    let mut cov = DMatrix::zeros(n, n);
    if rows > 1 {
        let centered = DMatrix::from_fn(rows, n, |k, i| rets[(k, i)] - mean[i]);
        cov = centered.transpose() * &centered / (rows - 1) as f64;
        // Exact symmetry regardless of summation order.
        cov = (&cov + cov.transpose()) * 0.5;
    }
    ReturnStats::new(prices.asset_ids.clone(), mean, cov)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(cols: &[&[f64]]) -> PriceSeries {
        let t = cols[0].len();
        let m = DMatrix::from_fn(t, cols.len(), |r, c| cols[c][r]);
        let ids = (0..cols.len()).map(|i| format!("A{i}")).collect();
        PriceSeries::new(ids, m, "daily").unwrap()
    }

    #[test]
    fn single_return_row() {
        let s = compute_returns(&series(&[&[100.0, 110.0]])).unwrap();
        assert!((s.mean_returns[0] - 0.10).abs() < 1e-15);
        assert_eq!(s.covariance[(0, 0)], 0.0);
    }

    #[test]
    fn identical_columns_are_perfectly_correlated() {
        let p = [10.0, 11.0, 10.5, 12.0, 11.0];
        let s = compute_returns(&series(&[&p, &p])).unwrap();
        let c = &s.covariance;
        assert_eq!(c[(0, 0)], c[(0, 1)]);
        assert_eq!(c[(1, 1)], c[(1, 0)]);
        let eig = SymmetricEigen::new(c.clone()).eigenvalues;
        assert!(eig.min().abs() < 1e-15);
    }

    #[test]
    fn nonpositive_price_names_the_row() {
        let m = DMatrix::from_row_slice(3, 1, &[1.0, 0.0, 2.0]);
        match PriceSeries::new(vec!["X".into()], m, "daily") {
            Err(GeoError::InvalidData(msg)) => assert!(msg.contains("row 1"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_indefinite_covariance() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let r = ReturnStats::new(vec!["a".into(), "b".into()], DVector::zeros(2), cov);
        assert!(r.is_err());
    }
}
