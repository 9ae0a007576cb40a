use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::instance::{Objective, PortfolioInstance};
use super::returns::{compute_returns, PriceSeries};
use crate::error::{GeoError, Result};
use crate::rng::rng_from_seed;

const TRADING_DAYS: usize = 252;

/// One-factor geometric Brownian prices: `n_rows` daily prices per asset with
/// a shared market shock, betas in `[0.6, 1.4]` and idiosyncratic volatility
/// in `[0.8%, 2.5%]`, for a total daily volatility of roughly 1-3%.
pub fn synthetic_prices(n_assets: usize, n_rows: usize, seed: u64) -> Result<PriceSeries> {
    if n_assets == 0 || n_rows < 2 {
        return Err(GeoError::invalid("need at least one asset and two price rows"));
    }
    let mut rng = rng_from_seed(seed);
    let betas: Vec<f64> = (0..n_assets).map(|_| rng.random_range(0.6..1.4)).collect();
    let idio: Vec<f64> = (0..n_assets).map(|_| rng.random_range(0.008..0.025)).collect();
    let drift: Vec<f64> = (0..n_assets).map(|_| rng.random_range(-0.0005..0.0015)).collect();
    let market_vol = 0.01;
    let mut prices = DMatrix::zeros(n_rows, n_assets);
    for i in 0..n_assets {
        prices[(0, i)] = 100.0;
    }
    for t in 1..n_rows {
        let z: f64 = StandardNormal.sample(&mut rng);
        let m = market_vol * z;
        for i in 0..n_assets {
            let eps: f64 = StandardNormal.sample(&mut rng);
            let vol2 = betas[i] * betas[i] * market_vol * market_vol + idio[i] * idio[i];
            let log_ret = drift[i] - 0.5 * vol2 + betas[i] * m + idio[i] * eps;
            prices[(t, i)] = prices[(t - 1, i)] * log_ret.exp();
        }
    }
    let ids = (0..n_assets).map(|i| format!("S{i:03}")).collect();
    PriceSeries::new(ids, prices, "daily")
}

/// A return-target instance over one year of synthetic daily prices, with
/// default bounds and `rho` equal to the average of the mean asset returns.
pub fn generate_synthetic_instance(n_assets: usize, kappa: usize, seed: u64) -> Result<PortfolioInstance> {
    if kappa == 0 || kappa > n_assets {
        return Err(GeoError::invalid(format!("cardinality {kappa} outside 1..={n_assets}")));
    }
    let prices = synthetic_prices(n_assets, TRADING_DAYS + 1, seed)?;
    let stats = compute_returns(&prices)?;
    let rho = stats.mean_returns.mean();
    PortfolioInstance::new(stats, kappa, Objective::ReturnTarget { rho })
}
