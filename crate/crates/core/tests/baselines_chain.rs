//! The fixed-temperature swap chain has the Boltzmann distribution as its
//! stationary law.

use std::collections::HashMap;

use geo_core::baselines::{metropolis_walk, sa_solve, trace, SaConfig};
use geo_core::bits::{enumerate_weight, Selection};
use geo_core::engine::{CostOracle, PortfolioOracle};
use geo_core::portfolio::generate_synthetic_instance;
use geo_core::rng::rng_from_seed;
use rand::Rng;

#[test]
fn swap_chain_samples_the_boltzmann_law() {
    let states = enumerate_weight(6, 3);
    let mut rng = rng_from_seed(5);
    let costs: HashMap<Selection, f64> = states.iter().map(|s| (s.clone(), rng.random_range(0.0..2.0))).collect();
    let t = 0.7;
    let z: f64 = costs.values().map(|c| (-c / t).exp()).sum();
    let steps = 400_000;
    let walk = metropolis_walk(|s| costs[s], &states[0], t, steps, 17);
    let mut freq: HashMap<&Selection, usize> = HashMap::new();
    for s in walk.iter().skip(1000) {
        *freq.entry(s).or_insert(0) += 1;
    }
    let kept = (steps - 1000) as f64;
    let tv: f64 = states
        .iter()
        .map(|s| (freq.get(s).copied().unwrap_or(0) as f64 / kept - (-costs[s] / t).exp() / z).abs())
        .sum::<f64>()
        / 2.0;
    assert!(tv < 0.015, "total variation {tv}");
}

#[test]
fn annealing_finds_the_optimum_of_a_small_instance() {
    let inst = generate_synthetic_instance(10, 5, 77).unwrap();
    let optimum = enumerate_weight(10, 5)
        .iter()
        .map(|s| inst.evaluate(s).unwrap().cost)
        .fold(f64::INFINITY, f64::min);
    let start = Selection::from_indices(10, &[0, 1, 2, 3, 4]).unwrap();
    let cfg = SaConfig {
        n_steps: 3000,
        t_max: 1e-3,
        t_min: 1e-7,
        rng_seed: 4,
        ..SaConfig::default()
    };
    let mut oracle = PortfolioOracle::new(&inst, None);
    let r = sa_solve(&mut oracle, &cfg, &start).unwrap();
    assert_eq!(r.best.cost, optimum);
    let tr = trace(&r);
    assert_eq!(tr.len(), 3000);
    assert_eq!(tr.last().unwrap().0, oracle.calls());
    assert!(tr.windows(2).all(|w| w[1].1 <= w[0].1 && w[1].0 == w[0].0 + 1));
}

#[test]
fn annealing_stops_at_the_oracle_budget() {
    let inst = generate_synthetic_instance(10, 5, 77).unwrap();
    let start = Selection::from_indices(10, &[0, 1, 2, 3, 4]).unwrap();
    let mut oracle = PortfolioOracle::new(&inst, Some(50));
    let r = sa_solve(&mut oracle, &SaConfig::default(), &start).unwrap();
    assert_eq!(oracle.calls(), 50);
    assert_eq!(r.evaluations, 50);
}
