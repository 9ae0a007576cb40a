//! Reference solvers: simulated annealing with cardinality-preserving swap
//! moves, conditioned random search over valid selections, and random
//! search over all bitstrings.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bits::{random_uniform, random_weight, Selection};
use crate::engine::{fail, CostOracle, GeoRunResult, HistoryPoint, Origin, RunError, RunState};
use crate::error::{GeoError, Result};
use crate::rng::{rng_from_seed, GeoRng};

pub const SA_SOLVER: &str = "sa";
pub const CONDITIONED_RANDOM_SOLVER: &str = "conditioned-random";
pub const RANDOM_SOLVER: &str = "random";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// `T_k = t_max (t_min / t_max)^(k / n_steps)`.
    Geometric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SaConfig {
    pub t_max: f64,
    pub t_min: f64,
    pub n_steps: usize,
    pub schedule: Schedule,
    pub rng_seed: u64,
}

impl Default for SaConfig {
    fn default() -> Self {
        SaConfig {
            t_max: 1.0,
            t_min: 1e-4,
            n_steps: 20_000,
            schedule: Schedule::Geometric,
            rng_seed: 0,
        }
    }
}

impl SaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_min > 0.0 && self.t_min < self.t_max && self.t_max.is_finite()) {
            return Err(GeoError::invalid(format!(
                "temperatures must satisfy 0 < t_min < t_max, got {} and {}",
                self.t_min, self.t_max
            )));
        }
        Ok(())
    }

    /// Temperature at step `k` of `n_steps`.
    pub fn temperature(&self, k: usize) -> f64 {
        match self.schedule {
            Schedule::Geometric => {
                let frac = if self.n_steps == 0 { 0.0 } else { k as f64 / self.n_steps as f64 };
                self.t_max * (self.t_min / self.t_max).powf(frac)
            }
        }
    }
}

/// Metropolis rule with uniform draw `u` in `[0, 1)`. A finite proposal from
/// an infeasible state is always taken; an infeasible proposal never is.
pub fn metropolis_accept(current: f64, proposal: f64, temperature: f64, u: f64) -> bool {
    if proposal.is_nan() || proposal == f64::INFINITY {
        return false;
    }
    if current == f64::INFINITY {
        return true;
    }
    let delta = proposal - current;
    delta <= 0.0 || u < (-delta / temperature).exp()
}

/// Flips one uniformly chosen selected bit off and one uniformly chosen
/// unselected bit on. Strings of weight 0 or `N` are returned unchanged.
pub fn swap_move<R: Rng + ?Sized>(x: &Selection, rng: &mut R) -> Selection {
    let ones = x.ones();
    let zeros = x.zeros_positions();
    let mut y = x.clone();
    if ones.is_empty() || zeros.is_empty() {
        return y;
    }
    y.set(ones[rng.random_range(0..ones.len())], false);
    y.set(zeros[rng.random_range(0..zeros.len())], true);
    y
}

/// Swap-move Metropolis chain at a fixed temperature; returns the state after
/// each of the `n_steps` steps.
pub fn metropolis_walk<F: FnMut(&Selection) -> f64>(
    mut cost: F,
    start: &Selection,
    temperature: f64,
    n_steps: usize,
    seed: u64,
) -> Vec<Selection> {
    let mut rng = rng_from_seed(seed);
    let mut x = start.clone();
    let mut cx = cost(&x);
    let mut out = Vec::with_capacity(n_steps);
    for _ in 0..n_steps {
        let y = swap_move(&x, &mut rng);
        let cy = cost(&y);
        if metropolis_accept(cx, cy, temperature, rng.random()) {
            x = y;
            cx = cy;
        }
        out.push(x.clone());
    }
    out
}

/// Simulated annealing from `start` with swap moves and geometric cooling.
///
/// Every visited state is priced through the oracle, without caching, so a
/// full run makes `n_steps + 1` calls; the history has one point per step.
/// The archive records every observation. The run stops early when the
/// oracle budget runs out.
pub fn sa_solve<O: CostOracle + ?Sized>(
    oracle: &mut O,
    cfg: &SaConfig,
    start: &Selection,
) -> std::result::Result<GeoRunResult, RunError> {
    cfg.validate()?;
    if start.len() != oracle.n_vars() || start.count_ones() != oracle.cardinality() {
        return Err(GeoError::invalid(format!(
            "start {start} must have length {} and weight {}",
            oracle.n_vars(),
            oracle.cardinality()
        ))
        .into());
    }
    let mut rng = rng_from_seed(cfg.rng_seed);
    let mut state = RunState::new(SA_SOLVER, oracle.calls());
    if oracle.remaining() == Some(0) {
        return Err(GeoError::BudgetExhausted { budget: oracle.budget().unwrap_or(0) }.into());
    }
    let first = match oracle.evaluate(start) {
        Ok(c) => c,
        Err(e) => return Err(fail(state, e, 0)),
    };
    let mut current = start.clone();
    let mut current_cost = first.cost;
    state.push(first, Origin::Baseline, 0);
    for k in 0..cfg.n_steps {
        if oracle.remaining() == Some(0) {
            break;
        }
        let t = cfg.temperature(k);
        let proposal = swap_move(&current, &mut rng);
        let used = oracle.calls() - state.calls_at_start;
        let cost = match state.evaluate(oracle, &proposal, Origin::Baseline, k + 1) {
            Ok(c) => c,
            Err(e) => return Err(fail(state, e, used)),
        };
        if metropolis_accept(current_cost, cost, t, rng.random()) {
            current = proposal;
            current_cost = cost;
        }
    }
    let used = oracle.calls() - state.calls_at_start;
    Ok(state.finish(used)?)
}

fn random_search<O: CostOracle + ?Sized>(
    oracle: &mut O,
    budget: usize,
    seed: u64,
    solver: &str,
    mut draw: impl FnMut(&mut GeoRng) -> Selection,
) -> std::result::Result<GeoRunResult, RunError> {
    if budget == 0 {
        return Err(GeoError::invalid("budget must be at least 1").into());
    }
    let mut rng = rng_from_seed(seed);
    let mut state = RunState::new(solver, oracle.calls());
    for k in 0..budget {
        if oracle.remaining() == Some(0) {
            break;
        }
        let x = draw(&mut rng);
        let used = oracle.calls() - state.calls_at_start;
        if let Err(e) = state.evaluate(oracle, &x, Origin::Baseline, k + 1) {
            return Err(fail(state, e, used));
        }
    }
    let used = oracle.calls() - state.calls_at_start;
    Ok(state.finish(used)?)
}

/// `budget` i.i.d. uniform draws from the weight-`kappa` selections
/// (repeats allowed).
pub fn conditioned_random<O: CostOracle + ?Sized>(
    oracle: &mut O,
    budget: usize,
    seed: u64,
) -> std::result::Result<GeoRunResult, RunError> {
    let (n, kappa) = (oracle.n_vars(), oracle.cardinality());
    random_search(oracle, budget, seed, CONDITIONED_RANDOM_SOLVER, |rng| random_weight(n, kappa, rng))
}

/// `budget` i.i.d. uniform draws from all `2^N` strings; wrong-weight draws
/// are priced as infeasible and still use budget.
pub fn unconstrained_random<O: CostOracle + ?Sized>(
    oracle: &mut O,
    budget: usize,
    seed: u64,
) -> std::result::Result<GeoRunResult, RunError> {
    let n = oracle.n_vars();
    random_search(oracle, budget, seed, RANDOM_SOLVER, |rng| random_uniform(n, rng))
}

/// The history as `(evals_used, best_cost)` pairs.
pub fn trace(result: &GeoRunResult) -> Vec<(usize, f64)> {
    result
        .history
        .iter()
        .map(|h: &HistoryPoint| (h.evals_used, h.best_cost))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::PortfolioOracle;
    use crate::portfolio::generate_synthetic_instance;

    #[test]
    fn acceptance_rule() {
        assert!(metropolis_accept(1.0, 0.5, 0.1, 0.999));
        assert!(metropolis_accept(1.0, 1.0, 0.1, 0.999));
        assert!(!metropolis_accept(1.0, 2.0, 1.0, 0.5));
        assert!(metropolis_accept(1.0, 2.0, 1.0, 0.3));
        assert!(metropolis_accept(f64::INFINITY, 5.0, 1.0, 0.99));
        assert!(!metropolis_accept(1.0, f64::INFINITY, 1e9, 0.0));
        assert!(!metropolis_accept(f64::INFINITY, f64::INFINITY, 1.0, 0.0));
    }

    #[test]
    fn swap_preserves_weight() {
        let mut rng = rng_from_seed(3);
        let mut x: Selection = "1101000110".parse().unwrap();
        for _ in 0..1000 {
            let y = swap_move(&x, &mut rng);
            assert_eq!(y.count_ones(), 5);
            assert_ne!(x, y);
            x = y;
        }
    }

    #[test]
    fn geometric_schedule_endpoints() {
        let c = SaConfig {
            n_steps: 100,
            ..SaConfig::default()
        };
        assert_eq!(c.temperature(0), 1.0);
        assert!((c.temperature(100) - 1e-4).abs() < 1e-18);
        assert!((c.temperature(50) - 1e-2).abs() < 1e-15);
    }

    #[test]
    fn sa_call_count_and_trace_length() {
        let inst = generate_synthetic_instance(10, 4, 5).unwrap();
        let mut o = PortfolioOracle::new(&inst, None);
        let cfg = SaConfig {
            n_steps: 300,
            ..SaConfig::default()
        };
        let start = Selection::from_indices(10, &[0, 1, 2, 3]).unwrap();
        let r = sa_solve(&mut o, &cfg, &start).unwrap();
        assert_eq!(o.calls(), 301);
        assert_eq!(r.history.len(), 300);
        assert_eq!(r.archive.len(), 301);
        let r2 = sa_solve(&mut PortfolioOracle::new(&inst, None), &cfg, &start).unwrap();
        assert_eq!(r, r2);
    }

    #[test]
    fn sa_rejects_invalid_start() {
        let inst = generate_synthetic_instance(6, 3, 5).unwrap();
        let mut o = PortfolioOracle::new(&inst, None);
        let bad: Selection = "110000".parse().unwrap();
        assert!(sa_solve(&mut o, &SaConfig::default(), &bad).is_err());
    }

    #[test]
    fn random_searches_respect_budget() {
        let inst = generate_synthetic_instance(8, 4, 5).unwrap();
        let mut o = PortfolioOracle::new(&inst, None);
        let r = conditioned_random(&mut o, 1, 9).unwrap();
        assert_eq!(o.calls(), 1);
        assert_eq!(r.history.len(), 1);
        let mut o = PortfolioOracle::new(&inst, None);
        let r = unconstrained_random(&mut o, 50, 9).unwrap();
        assert_eq!(o.calls(), 50);
        assert!(r.archive.iter().all(|e| e.candidate.selection.count_ones() == 4 || !e.candidate.feasible));
        assert!(conditioned_random(&mut o, 0, 9).is_err());
    }
}
