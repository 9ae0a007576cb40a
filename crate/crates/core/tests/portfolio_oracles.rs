//! Inner QP and frontier checks against grid search and enumeration.

use geo_core::bits::{binomial, enumerate_weight, Selection};
use geo_core::portfolio::{
    compute_returns, generate_synthetic_instance, solve_inner_qp, synthetic_prices, Objective, PortfolioInstance,
    PriceSeries, ReturnStats,
};
use geo_core::rng::rng_from_seed;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

fn random_stats(n: usize, seed: u64) -> ReturnStats {
    let mut rng = rng_from_seed(seed);
    let a = DMatrix::from_fn(n, n + 2, |_, _| rng.random_range(-0.1..0.1));
    let cov = &a * a.transpose() + DMatrix::identity(n, n) * 1e-4;
    let r = DVector::from_fn(n, |_, _| rng.random_range(-0.01..0.03));
    ReturnStats::new((0..n).map(|i| format!("a{i}")).collect(), r, cov).unwrap()
}

fn quad(cov: &DMatrix<f64>, w: &[f64]) -> f64 {
    let w = DVector::from_column_slice(w);
    (w.transpose() * cov * &w)[(0, 0)]
}

/// Minimum of `f` on the segment `p + t d`, `t in [lo, hi]`, sampled so that
/// consecutive points are at most `step` apart in weight space.
fn grid_min(p: &[f64], d: &[f64], lo: f64, hi: f64, step: f64, f: impl Fn(&[f64]) -> f64) -> f64 {
    let dn = d.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
    let count = (((hi - lo) * dn / step).ceil() as usize).max(1);
    let mut best = f64::INFINITY;
    let mut w = vec![0.0; p.len()];
    for i in 0..=count {
        let t = lo + (hi - lo) * i as f64 / count as f64;
        for k in 0..p.len() {
            w[k] = p[k] + t * d[k];
        }
        best = best.min(f(&w));
    }
    best
}

/// `t` range keeping `p + t d` inside `[0, 1]` componentwise.
fn box_range(p: &[f64], d: &[f64]) -> Option<(f64, f64)> {
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for (pk, dk) in p.iter().zip(d) {
        if dk.abs() < 1e-14 {
            if *pk < -1e-12 || *pk > 1.0 + 1e-12 {
                return None;
            }
            continue;
        }
        let (a, b) = ((0.0 - pk) / dk, (1.0 - pk) / dk);
        lo = lo.max(a.min(b));
        hi = hi.min(a.max(b));
    }
    (lo <= hi).then_some((lo, hi))
}

#[test]
fn return_target_qp_matches_grid_search_on_three_assets() {
    for case in 0..25u64 {
        let stats = random_stats(3, case);
        let r: Vec<f64> = stats.mean_returns.iter().copied().collect();
        let mut rng = rng_from_seed(1000 + case);
        let mix: Vec<f64> = (0..3).map(|_| rng.random_range(0.05..1.0)).collect();
        let s: f64 = mix.iter().sum();
        let rho: f64 = mix.iter().zip(&r).map(|(m, ri)| m / s * ri).sum();
        let cov = stats.covariance.clone();
        let inst = PortfolioInstance::new(stats, 3, Objective::ReturnTarget { rho }).unwrap();
        let got = solve_inner_qp(&inst, &Selection::from_indices(3, &[0, 1, 2]).unwrap()).unwrap();

        // The feasible set is a segment along (1,1,1) x r through a point of the plane.
        let d = [r[1] - r[2], r[2] - r[0], r[0] - r[1]];
        let p: Vec<f64> = mix.iter().map(|m| m / s).collect();
        let (lo, hi) = box_range(&p, &d).unwrap();
        let want = grid_min(&p, &d, lo, hi, 1e-6, |w| quad(&cov, w)).max(0.0).sqrt();
        assert!(got.feasible);
        assert!((got.cost - want).abs() < 1e-5, "case {case}: {} vs {want}", got.cost);
        assert!(got.cost <= want + 1e-9);
    }
}

#[test]
fn risk_aversion_qp_matches_grid_search_on_two_assets() {
    for case in 0..25u64 {
        let stats = random_stats(4, 50 + case);
        let lambda = (case as f64 + 0.5) / 25.0;
        let cov = stats.covariance.clone();
        let r = stats.mean_returns.clone();
        let inst = PortfolioInstance::new(stats, 2, Objective::RiskAversion { lambda }).unwrap();
        let sel = Selection::from_indices(4, &[1, 3]).unwrap();
        let got = solve_inner_qp(&inst, &sel).unwrap();
        let f = |w: &[f64]| {
            let full = [0.0, w[0], 0.0, w[1]];
            lambda * quad(&cov, &full) - (1.0 - lambda) * (r[1] * w[0] + r[3] * w[1])
        };
        let want = grid_min(&[0.0, 1.0], &[1.0, -1.0], 0.0, 1.0, 1e-6, f);
        assert!((got.cost - want).abs() < 1e-5, "case {case}: {} vs {want}", got.cost);
        assert!(got.cost <= want + 1e-9);
    }
}

/// Projected-gradient check on the free coordinates: the objective gradient
/// must lie in the span of the equality-constraint normals.
fn kkt_residual(inst: &PortfolioInstance, w: &[f64], sel: &Selection) -> f64 {
    let cov = inst.covariance();
    let r = inst.mean_returns();
    let wv = DVector::from_column_slice(w);
    let grad = match inst.objective() {
        Objective::ReturnTarget { .. } => 2.0 * cov * &wv,
        Objective::RiskAversion { lambda } => 2.0 * lambda * cov * &wv - (1.0 - lambda) * r,
    };
    let free: Vec<usize> = sel
        .ones()
        .into_iter()
        .filter(|&i| w[i] > inst.lower_bounds()[i] + 1e-9 && w[i] < inst.upper_bounds()[i] - 1e-9)
        .collect();
    if free.is_empty() {
        return 0.0;
    }
    let cols = if matches!(inst.objective(), Objective::ReturnTarget { .. }) { 2 } else { 1 };
    let a = DMatrix::from_fn(free.len(), cols, |i, j| if j == 0 { 1.0 } else { r[free[i]] });
    let g = DVector::from_fn(free.len(), |i, _| grad[free[i]]);
    let fit = a.clone().svd(true, true).solve(&g, 1e-12).unwrap();
    (g - a * fit).norm()
}

#[test]
fn solutions_satisfy_the_stationarity_condition() {
    let inst = generate_synthetic_instance(12, 5, 3).unwrap();
    let ra = inst.with_objective(Objective::RiskAversion { lambda: 0.7 }).unwrap();
    for (k, sel) in enumerate_weight(12, 5).into_iter().enumerate().step_by(37) {
        for i in [&inst, &ra] {
            let c = solve_inner_qp(i, &sel).unwrap();
            if !c.feasible {
                continue;
            }
            let sum: f64 = c.weights.iter().sum();
            assert!((sum - 1.0).abs() < 1e-8);
            for j in 0..12 {
                if sel.get(j) == 0 {
                    assert_eq!(c.weights[j], 0.0);
                }
            }
            let res = kkt_residual(i, &c.weights, &sel);
            assert!(res <= 1e-6, "selection {k}: residual {res}");
        }
    }
}

#[test]
fn covariance_matches_two_pass_oracle() {
    let prices = synthetic_prices(3, 51, 9).unwrap();
    let stats = compute_returns(&prices).unwrap();
    let p = &prices.prices;
    let t = p.nrows() - 1;
    let rets: Vec<Vec<f64>> = (0..3)
        .map(|j| (1..=t).map(|i| (p[(i, j)] - p[(i - 1, j)]) / p[(i - 1, j)]).collect())
        .collect();
    let means: Vec<f64> = rets.iter().map(|c| c.iter().sum::<f64>() / t as f64).collect();
    for i in 0..3 {
        assert!((stats.mean_returns[i] - means[i]).abs() < 1e-15);
        for j in 0..3 {
            let c: f64 = (0..t)
                .map(|k| (rets[i][k] - means[i]) * (rets[j][k] - means[j]))
                .sum::<f64>()
                / (t - 1) as f64;
            assert!((stats.covariance[(i, j)] - c).abs() < 1e-12);
        }
    }
}

#[test]
fn unconstrained_frontier_dominates_pairs() {
    for seed in 0..5 {
        let stats = random_stats(4, 300 + seed);
        let inst = PortfolioInstance::new(stats.clone(), 2, Objective::ReturnTarget { rho: 0.0 }).unwrap();
        let frontier = inst.standard_frontier(25).unwrap();
        for point in frontier.points() {
            let at = inst.with_objective(Objective::ReturnTarget { rho: point.ret }).unwrap();
            for sel in enumerate_weight(4, 2) {
                let c = solve_inner_qp(&at, &sel).unwrap();
                if c.feasible {
                    assert!(point.risk <= c.cost + 1e-8, "{} > {}", point.risk, c.cost);
                }
            }
        }
        // Convex in return: risks fall to a single minimum and then rise.
        let risks: Vec<f64> = frontier.points().iter().map(|p| p.risk).collect();
        let argmin = (0..risks.len()).min_by(|&a, &b| risks[a].total_cmp(&risks[b])).unwrap();
        assert!(risks[..=argmin].windows(2).all(|w| w[1] <= w[0] + 1e-9));
        assert!(risks[argmin..].windows(2).all(|w| w[1] >= w[0] - 1e-9));
    }
}

#[test]
fn valid_selection_count_is_binomial() {
    for n in 1..=20 {
        for k in [1, n / 2, n] {
            if k == 0 {
                continue;
            }
            if binomial(n, k) <= 200_000 {
                assert_eq!(enumerate_weight(n, k).len() as u128, binomial(n, k));
            }
        }
    }
    assert_eq!(binomial(4, 2), 6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(30))]

    #[test]
    fn rescaling_one_asset_leaves_statistics_unchanged(seed in 0u64..5000, col in 0usize..4, scale in 0.01f64..100.0) {
        let base = synthetic_prices(4, 30, seed).unwrap();
        let mut scaled = base.prices.clone();
        scaled.column_mut(col).scale_mut(scale);
        let other = PriceSeries::new(base.asset_ids.clone(), scaled, "daily").unwrap();
        let (a, b) = (compute_returns(&base).unwrap(), compute_returns(&other).unwrap());
        for i in 0..4 {
            prop_assert!((a.mean_returns[i] - b.mean_returns[i]).abs() < 1e-12);
            for j in 0..4 {
                prop_assert!((a.covariance[(i, j)] - b.covariance[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn synthetic_covariance_is_psd(seed in 0u64..1000) {
        let inst = generate_synthetic_instance(30, 15, seed).unwrap();
        let eig = inst.covariance().clone().symmetric_eigen();
        prop_assert!(eig.eigenvalues.min() >= -1e-10);
    }

    #[test]
    fn evaluated_weights_respect_bounds(seed in 0u64..1000, pick in 0usize..70) {
        let inst = generate_synthetic_instance(8, 4, seed).unwrap();
        let sel = enumerate_weight(8, 4).swap_remove(pick);
        let c = solve_inner_qp(&inst, &sel).unwrap();
        if c.feasible {
            prop_assert!((c.weights.iter().sum::<f64>() - 1.0).abs() < 1e-8);
            for i in sel.ones() {
                prop_assert!(c.weights[i] >= -1e-12 && c.weights[i] <= 1.0 + 1e-12);
            }
        } else {
            prop_assert!(c.cost.is_infinite());
        }
    }
}
