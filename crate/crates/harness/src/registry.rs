//! Registered solvers and how a roster entry runs under a fixed oracle budget.

use geo_core::baselines::{
    conditioned_random, sa_solve, unconstrained_random, SaConfig, Schedule, CONDITIONED_RANDOM_SOLVER, RANDOM_SOLVER,
    SA_SOLVER,
};
use geo_core::bits::{random_weight, Selection};
use geo_core::engine::{
    run_booster, run_standalone, CostOracle, GeoConfig, GeoRunResult, HistoryPoint, PortfolioOracle, BOOSTER_SOLVER,
    STANDALONE_SOLVER,
};
use geo_core::portfolio::{EvaluatedCandidate, PortfolioInstance};
use geo_core::rng::{derive_seed, rng_from_seed};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{HarnessError, Result};
use crate::spec::SolverSpec;

/// Names accepted in a solver roster.
pub const REGISTERED: [&str; 5] = [
    STANDALONE_SOLVER,
    BOOSTER_SOLVER,
    SA_SOLVER,
    CONDITIONED_RANDOM_SOLVER,
    RANDOM_SOLVER,
];

/// Annealing settings; the step count follows from the budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaSettings {
    pub t_max: f64,
    pub t_min: f64,
    pub schedule: Schedule,
}

impl Default for SaSettings {
    fn default() -> Self {
        let d = SaConfig::default();
        SaSettings {
            t_max: d.t_max,
            t_min: d.t_min,
            schedule: d.schedule,
        }
    }
}

impl SaSettings {
    fn config(&self, n_steps: usize, rng_seed: u64) -> SaConfig {
        SaConfig {
            t_max: self.t_max,
            t_min: self.t_min,
            n_steps,
            schedule: self.schedule,
            rng_seed,
        }
    }
}

/// Annealing for `sa_share` of the budget, then the booster on everything
/// annealing evaluated. Calls the booster leaves unused go to a second
/// annealing run from the best candidate, so the total always equals the
/// budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoosterSettings {
    pub sa_share: f64,
    pub sa: SaSettings,
    pub geo: GeoConfig,
}

impl Default for BoosterSettings {
    fn default() -> Self {
        BoosterSettings {
            sa_share: 0.5,
            sa: SaSettings::default(),
            geo: GeoConfig {
                max_iterations: None,
                ..GeoConfig::booster()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Solver {
    Standalone(GeoConfig),
    Booster(BoosterSettings),
    Sa(SaSettings),
    ConditionedRandom,
    Random,
}

/// Recursively overlays `patch` on `base`, rejecting keys `base` lacks.
fn overlay(base: &mut Value, patch: &Value, path: &str) -> Result<()> {
    match (base, patch) {
        (_, Value::Null) => Ok(()),
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                let here = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => overlay(slot, v, &here)?,
                    Some(slot) => *slot = v.clone(),
                    None => return Err(HarnessError::Config(format!("unknown setting {here:?}"))),
                }
            }
            Ok(())
        }
        (b, p) => {
            *b = p.clone();
            Ok(())
        }
    }
}

fn with_defaults<T: Serialize + for<'de> Deserialize<'de>>(name: &str, base: T, patch: &Value) -> Result<T> {
    let mut v = serde_json::to_value(base)?;
    overlay(&mut v, patch, "").map_err(|e| HarnessError::Config(format!("solver {name}: {e}")))?;
    serde_json::from_value(v).map_err(|e| HarnessError::Config(format!("solver {name}: {e}")))
}

impl Solver {
    /// Resolves a roster entry; missing settings take the solver's defaults.
    pub fn from_spec(spec: &SolverSpec) -> Result<Solver> {
        let name = spec.name.as_str();
        let no_config = |s: Solver| {
            if spec.config.is_null() || spec.config.as_object().is_some_and(|o| o.is_empty()) {
                Ok(s)
            } else {
                Err(HarnessError::Config(format!("solver {name} takes no settings")))
            }
        };
        let solver = match name {
            STANDALONE_SOLVER => {
                let mut cfg = with_defaults(name, GeoConfig::standalone(1), &spec.config)?;
                cfg.mode = geo_core::engine::GeoMode::Standalone;
                cfg.validate()?;
                Solver::Standalone(cfg)
            }
            BOOSTER_SOLVER => {
                let s = with_defaults(name, BoosterSettings::default(), &spec.config)?;
                if !(s.sa_share > 0.0 && s.sa_share <= 1.0) {
                    return Err(HarnessError::Config(format!("sa_share {} outside (0, 1]", s.sa_share)));
                }
                s.geo.validate()?;
                Solver::Booster(s)
            }
            SA_SOLVER => Solver::Sa(with_defaults(name, SaSettings::default(), &spec.config)?),
            CONDITIONED_RANDOM_SOLVER => no_config(Solver::ConditionedRandom)?,
            RANDOM_SOLVER => no_config(Solver::Random)?,
            other => {
                return Err(HarnessError::UnknownSolver {
                    name: other.to_string(),
                    registered: REGISTERED.iter().map(|s| s.to_string()).collect(),
                })
            }
        };
        if let Solver::Sa(s) | Solver::Booster(BoosterSettings { sa: s, .. }) = &solver {
            s.config(1, 0).validate()?;
        }
        Ok(solver)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Solver::Standalone(_) => STANDALONE_SOLVER,
            Solver::Booster(_) => BOOSTER_SOLVER,
            Solver::Sa(_) => SA_SOLVER,
            Solver::ConditionedRandom => CONDITIONED_RANDOM_SOLVER,
            Solver::Random => RANDOM_SOLVER,
        }
    }

    /// One run with exactly `budget` oracle calls available.
    pub fn run(&self, inst: &PortfolioInstance, budget: usize, seed: u64) -> Result<GeoRunResult> {
        if budget == 0 {
            return Err(HarnessError::Config("budget must be at least 1".into()));
        }
        let mut oracle = PortfolioOracle::new(inst, Some(budget));
        let (n, kappa) = (inst.n_assets(), inst.cardinality());
        let random_start = |label: &str| random_weight(n, kappa, &mut rng_from_seed(derive_seed(seed, label, 0)));
        let result = match self {
            Solver::Standalone(cfg) => {
                let cfg = GeoConfig {
                    eval_budget: Some(budget),
                    rng_seed: seed,
                    ..cfg.clone()
                };
                run_standalone(&mut oracle, inst, &cfg)?
            }
            Solver::Sa(s) => {
                let cfg = s.config(budget - 1, derive_seed(seed, "sa", 0));
                sa_solve(&mut oracle, &cfg, &random_start("sa-start"))?
            }
            Solver::ConditionedRandom => conditioned_random(&mut oracle, budget, seed)?,
            Solver::Random => unconstrained_random(&mut oracle, budget, seed)?,
            Solver::Booster(s) => run_hybrid(s, &mut oracle, budget, seed, &random_start("sa-start"))?,
        };
        Ok(result)
    }
}

fn run_hybrid(
    s: &BoosterSettings,
    oracle: &mut PortfolioOracle<'_>,
    budget: usize,
    seed: u64,
    start: &Selection,
) -> Result<GeoRunResult> {
    let sa_budget = ((s.sa_share * budget as f64).round() as usize).clamp(1, budget);
    let sa = sa_solve(oracle, &s.sa.config(sa_budget - 1, derive_seed(seed, "sa", 0)), start)?;
    let sa_calls = oracle.calls();
    if sa_calls == budget {
        return Ok(GeoRunResult {
            solver: BOOSTER_SOLVER.into(),
            ..sa
        });
    }
    let initial: Vec<EvaluatedCandidate> = sa.archive.iter().map(|e| e.candidate.clone()).collect();
    let cfg = GeoConfig {
        eval_budget: Some(budget - sa_calls),
        rng_seed: derive_seed(seed, "booster", 0),
        ..s.geo.clone()
    };
    let mut boosted = run_booster(oracle, &initial, &cfg)?;
    let boost_calls = oracle.calls() - sa_calls;

    let mut history: Vec<HistoryPoint> = sa.history.clone();
    history.extend(boosted.history.iter().skip(1).map(|h| HistoryPoint {
        evals_used: h.evals_used + sa_calls,
        ..*h
    }));
    let remaining = budget - oracle.calls();
    if remaining > 0 {
        let tail_start = if boosted.best.feasible { boosted.best.selection.clone() } else { start.clone() };
        let tail = sa_solve(oracle, &s.sa.config(remaining - 1, derive_seed(seed, "sa-tail", 0)), &tail_start)?;
        let offset = sa_calls + boost_calls;
        let iteration = boosted.iterations.len() + 1;
        history.extend(tail.history.iter().map(|h| HistoryPoint {
            iteration,
            evals_used: h.evals_used + offset,
            best_cost: h.best_cost,
        }));
        if tail.best.cost < boosted.best.cost {
            boosted.best = tail.best.clone();
        }
        boosted.archive.extend(tail.archive.into_iter().map(|mut e| {
            e.iteration = iteration;
            e
        }));
        boosted
            .warnings
            .push(format!("booster used {boost_calls} calls; {remaining} spent on annealing from its best"));
    }
    let mut best = f64::INFINITY;
    for h in &mut history {
        best = best.min(h.best_cost);
        h.best_cost = best;
    }
    boosted.history = history;
    boosted.evaluations = oracle.calls();
    Ok(boosted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use geo_core::portfolio::generate_synthetic_instance;

    fn spec(name: &str, config: Value) -> SolverSpec {
        SolverSpec {
            name: name.into(),
            label: None,
            config,
        }
    }

    #[test]
    fn unknown_names_list_the_registry() {
        let err = Solver::from_spec(&spec("gpyopt", Value::Null)).unwrap_err();
        let msg = err.to_string();
        for name in REGISTERED {
            assert!(msg.contains(name), "{msg}");
        }
    }

    #[test]
    fn settings_overlay_defaults_and_reject_typos() {
        let s = Solver::from_spec(&spec("tn-geo", serde_json::json!({"n_seed": 50, "train": {"max_bond_dim": 4}}))).unwrap();
        match s {
            Solver::Standalone(c) => {
                assert_eq!(c.n_seed, 50);
                assert_eq!(c.train.max_bond_dim, 4);
                assert_eq!(c.train.n_sweeps, GeoConfig::booster().train.n_sweeps);
            }
            other => panic!("{other:?}"),
        }
        assert!(Solver::from_spec(&spec("sa", serde_json::json!({"t_mx": 2.0}))).is_err());
        assert!(Solver::from_spec(&spec("random", serde_json::json!({"x": 1}))).is_err());
        assert!(Solver::from_spec(&spec("sa", serde_json::json!({"t_min": 5.0}))).is_err());
    }

    #[test]
    fn every_solver_spends_the_budget() {
        let inst = generate_synthetic_instance(12, 6, 3).unwrap();
        let geo = serde_json::json!({"n_seed": 20, "n_train": 300, "n_mps": 100, "train": {"n_sweeps": 1, "max_bond_dim": 3}});
        let roster = [
            spec("tn-geo", geo.clone()),
            spec("tn-geo-booster", serde_json::json!({"geo": geo})),
            spec("sa", Value::Null),
            spec("conditioned-random", Value::Null),
            spec("random", Value::Null),
        ];
        for s in &roster {
            let solver = Solver::from_spec(s).unwrap();
            let r = solver.run(&inst, 60, 5).unwrap();
            assert_eq!(r.evaluations, 60, "{}", s.name);
            assert_eq!(r.solver, solver.name());
            assert!(r.history.windows(2).all(|w| w[1].best_cost <= w[0].best_cost && w[1].evals_used >= w[0].evals_used));
            assert!(r.history.last().unwrap().evals_used <= 60);
            assert_eq!(r, solver.run(&inst, 60, 5).unwrap());
        }
    }
}
