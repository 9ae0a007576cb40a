//! Surrogate laws and end-to-end engine behaviour.

use std::collections::HashSet;

use geo_core::baselines::{sa_solve, SaConfig};
use geo_core::bits::{enumerate_weight, Selection};
use geo_core::engine::{
    count_outstanding, run_booster, run_standalone, CostOracle, GeoConfig, Origin, PortfolioOracle,
};
use geo_core::portfolio::{generate_synthetic_instance, EvaluatedCandidate, Objective, PortfolioInstance, ReturnStats};
use geo_core::surrogate::{build_softmax, cold_start, reference_cost};
use geo_core::Result;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

/// Prices every candidate at zero.
struct ZeroOracle {
    n: usize,
    kappa: usize,
    calls: usize,
}

impl CostOracle for ZeroOracle {
    fn n_vars(&self) -> usize {
        self.n
    }
    fn cardinality(&self) -> usize {
        self.kappa
    }
    fn calls(&self) -> usize {
        self.calls
    }
    fn budget(&self) -> Option<usize> {
        None
    }
    fn evaluate(&mut self, sel: &Selection) -> Result<EvaluatedCandidate> {
        self.calls += 1;
        Ok(EvaluatedCandidate {
            selection: sel.clone(),
            weights: vec![0.0; sel.len()],
            cost: 0.0,
            feasible: true,
        })
    }
}

#[test]
fn cold_start_reference_cost_doubles_the_evaluated_weight() {
    // An all-ones covariance has mean 1, hence temperature 1.
    let n = 8;
    let stats = ReturnStats::new(
        (0..n).map(|i| format!("a{i}")).collect(),
        DVector::from_element(n, 0.01),
        DMatrix::from_element(n, n, 1.0),
    )
    .unwrap();
    let inst = PortfolioInstance::new(stats, 4, Objective::ReturnTarget { rho: 0.01 }).unwrap();
    for n_seed in [2usize, 5, 20, 69] {
        let mut oracle = ZeroOracle { n, kappa: 4, calls: 0 };
        let cold = cold_start(&mut oracle, &inst, n_seed, 11).unwrap();
        assert_eq!(oracle.calls, 1);
        assert_eq!(cold.temperature, 1.0);
        assert!((cold.sigma_ref - std::f64::consts::LN_2).abs() < 1e-12);
        let s = cold.surrogate().unwrap();
        let i = s.support().iter().position(|x| *x == cold.evaluated.candidate.selection).unwrap();
        assert!((s.probabilities()[i] - 2.0 / (n_seed as f64 + 1.0)).abs() < 1e-12);
        for (j, p) in s.probabilities().iter().enumerate() {
            if j != i {
                assert!((p - 1.0 / (n_seed as f64 + 1.0)).abs() < 1e-12);
            }
        }
    }
    assert!((reference_cost(1.0, 0.0) - std::f64::consts::LN_2).abs() < 1e-15);
}

fn small_standalone(budget: usize, seed: u64) -> GeoConfig {
    let mut c = GeoConfig::standalone(budget);
    c.n_seed = 30;
    c.n_train = 500;
    c.n_mps = 200;
    c.train.n_sweeps = 2;
    c.train.grad_steps_per_bond = 2;
    c.train.max_bond_dim = 4;
    c.rng_seed = seed;
    c
}

#[test]
fn standalone_covers_a_small_space_and_finds_the_optimum() {
    let inst = generate_synthetic_instance(8, 4, 21).unwrap();
    let optimum = enumerate_weight(8, 4)
        .iter()
        .map(|s| inst.evaluate(s).unwrap().cost)
        .fold(f64::INFINITY, f64::min);
    let mut cfg = small_standalone(70, 3);
    cfg.n_seed = 20;
    let mut oracle = PortfolioOracle::new(&inst, None);
    let r = run_standalone(&mut oracle, &inst, &cfg).unwrap();
    assert_eq!(oracle.calls(), 70);
    let distinct: HashSet<_> = r.archive.iter().map(|e| e.candidate.selection.clone()).collect();
    assert_eq!(distinct.len(), 70);
    assert_eq!(r.best.cost, optimum);
}

#[test]
fn runs_are_deterministic_per_seed() {
    let inst = generate_synthetic_instance(12, 6, 4).unwrap();
    let cfg = small_standalone(40, 9);
    let a = run_standalone(&mut PortfolioOracle::new(&inst, None), &inst, &cfg).unwrap();
    let b = run_standalone(&mut PortfolioOracle::new(&inst, None), &inst, &cfg).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    let other = run_standalone(&mut PortfolioOracle::new(&inst, None), &inst, &small_standalone(40, 10)).unwrap();
    assert_ne!(a.archive, other.archive);
}

#[test]
fn booster_proposes_only_unseen_candidates() {
    let inst = generate_synthetic_instance(14, 7, 8).unwrap();
    let start = Selection::from_indices(14, &[0, 1, 2, 3, 4, 5, 6]).unwrap();
    let sa = sa_solve(
        &mut PortfolioOracle::new(&inst, None),
        &SaConfig {
            n_steps: 600,
            rng_seed: 2,
            ..SaConfig::default()
        },
        &start,
    )
    .unwrap();
    let initial: Vec<EvaluatedCandidate> = sa.archive.iter().map(|e| e.candidate.clone()).collect();
    let mut cfg = GeoConfig::booster();
    cfg.n_train = 2000;
    cfg.n_mps = 1000;
    cfg.train.n_sweeps = 4;
    cfg.max_iterations = Some(2);
    let mut oracle = PortfolioOracle::new(&inst, None);
    let r = run_booster(&mut oracle, &initial, &cfg).unwrap();
    let seen: HashSet<_> = initial.iter().map(|c| c.selection.clone()).collect();
    let generated: Vec<_> = r.archive.iter().filter(|e| e.origin == Origin::Generator).collect();
    assert!(!generated.is_empty());
    assert_eq!(generated.len(), oracle.calls());
    let distinct: HashSet<_> = generated.iter().map(|e| e.candidate.selection.clone()).collect();
    assert_eq!(distinct.len(), generated.len());
    assert!(distinct.iter().all(|s| !seen.contains(s) && s.count_ones() == 7));
    assert_eq!(r.outstanding_count, count_outstanding(&r, r.seed_best.unwrap()));
    assert_eq!(r.history[0].evals_used, 0);
    assert!(r.history.windows(2).all(|w| w[1].best_cost <= w[0].best_cost));
    let again = run_booster(&mut PortfolioOracle::new(&inst, None), &initial, &cfg).unwrap();
    assert_eq!(r, again);
}

#[test]
fn booster_respects_an_evaluation_budget() {
    let inst = generate_synthetic_instance(12, 6, 1).unwrap();
    let initial: Vec<EvaluatedCandidate> = enumerate_weight(12, 6)
        .into_iter()
        .step_by(9)
        .map(|s| inst.evaluate(&s).unwrap())
        .collect();
    let mut cfg = GeoConfig::booster();
    cfg.n_train = 1000;
    cfg.n_mps = 500;
    cfg.max_iterations = None;
    cfg.eval_budget = Some(25);
    let mut oracle = PortfolioOracle::new(&inst, None);
    let r = run_booster(&mut oracle, &initial, &cfg).unwrap();
    assert!(oracle.calls() <= 25);
    assert_eq!(r.evaluations, oracle.calls());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn softmax_is_a_boltzmann_distribution(costs in prop::collection::vec(-5.0f64..5.0, 2..12), t in 0.05f64..10.0) {
        let support: Vec<Selection> = (0..costs.len())
            .map(|i| Selection::from_indices(16, &[i]).unwrap())
            .collect();
        let s = build_softmax(&support, &costs, t).unwrap();
        let p = s.probabilities();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for i in 0..costs.len() {
            for j in 0..costs.len() {
                let want = (-(costs[i] - costs[j]) / t).exp();
                prop_assert!((p[i] / p[j] - want).abs() <= 1e-9 * want.max(1.0));
            }
        }
    }
}
