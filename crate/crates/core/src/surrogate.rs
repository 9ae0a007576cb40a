//! Boltzmann (softmax) surrogate over observed candidates.
//!
//! Candidates with cost `sigma_i` get probability proportional to
//! `exp(-sigma_i / T)`. Samples from this multinomial are the training data
//! for the generative model.

use std::collections::HashMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::bits::{binomial, random_weight, Selection};
use crate::born::BitstringDataset;
use crate::engine::{ArchiveEntry, CostOracle, Origin};
use crate::error::{GeoError, Result};
use crate::portfolio::PortfolioInstance;
use crate::rng::{derive_seed, rng_from_seed};

pub const DEFAULT_N_TRAIN: usize = 10_000;

/// A temperature together with the reason it fell back to a default, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct Temperature {
    pub value: f64,
    pub warning: Option<String>,
}

/// Sample standard deviation (divisor `n - 1`) of the finite costs; `1.0`
/// with a warning when it is zero. Infinite costs (infeasible candidates)
/// are ignored.
pub fn default_temperature(costs: &[f64]) -> Result<Temperature> {
    if costs.iter().any(|c| c.is_nan()) {
        return Err(GeoError::InvalidData("NaN cost".into()));
    }
    let finite: Vec<f64> = costs.iter().copied().filter(|c| c.is_finite()).collect();
    if finite.len() < 2 {
        return Err(GeoError::invalid(format!(
            "a temperature needs at least two finite costs, got {}",
            finite.len()
        )));
    }
    let n = finite.len() as f64;
    let mean = finite.iter().sum::<f64>() / n;
    let var = finite.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    if sd > 0.0 && sd.is_finite() {
        Ok(Temperature {
            value: sd,
            warning: None,
        })
    } else {
        let msg = "all costs are equal; using temperature 1.0".to_string();
        log::warn!("{msg}");
        Ok(Temperature {
            value: 1.0,
            warning: Some(msg),
        })
    }
}

/// Multinomial over distinct candidates with Boltzmann weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxSurrogate {
    support: Vec<Selection>,
    #[serde(with = "cost_list")]
    costs: Vec<f64>,
    temperature: f64,
    probabilities: Vec<f64>,
}

mod cost_list {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Cost(#[serde(with = "crate::serde_cost")] f64);

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|&c| Cost(c)).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Ok(Vec::<Cost>::deserialize(d)?.into_iter().map(|c| c.0).collect())
    }
}

impl SoftmaxSurrogate {
    pub fn support(&self) -> &[Selection] {
        &self.support
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }
}

/// `p_i = exp(-(sigma_i - sigma_min) / T) / sum_j ...`.
///
/// Repeated candidates collapse into one class with their minimum cost, in
/// order of first appearance. `+inf` costs get probability zero.
pub fn build_softmax(candidates: &[Selection], costs: &[f64], temperature: f64) -> Result<SoftmaxSurrogate> {
    if candidates.is_empty() || candidates.len() != costs.len() {
        return Err(GeoError::invalid(format!(
            "{} candidates with {} costs",
            candidates.len(),
            costs.len()
        )));
    }
    if !(temperature > 0.0) || temperature.is_nan() {
        return Err(GeoError::invalid(format!("temperature must be positive, got {temperature}")));
    }
    let mut index: HashMap<&Selection, usize> = HashMap::new();
    let mut support = Vec::new();
    let mut merged: Vec<f64> = Vec::new();
    for (sel, &c) in candidates.iter().zip(costs) {
        if c.is_nan() || c == f64::NEG_INFINITY {
            return Err(GeoError::InvalidData(format!("candidate {sel} has cost {c}")));
        }
        match index.get(sel) {
            Some(&i) => merged[i] = merged[i].min(c),
            None => {
                index.insert(sel, support.len());
                support.push(sel.clone());
                merged.push(c);
            }
        }
    }
    let min = merged.iter().copied().fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return Err(GeoError::InvalidData("every candidate has infinite cost".into()));
    }
    let weights: Vec<f64> = merged.iter().map(|&c| (-(c - min) / temperature).exp()).collect();
    let total: f64 = weights.iter().sum();
    let probabilities = weights.iter().map(|w| w / total).collect();
    Ok(SoftmaxSurrogate {
        support,
        costs: merged,
        temperature,
        probabilities,
    })
}

/// `n_train` i.i.d. draws from the surrogate.
pub fn sample_training_set(s: &SoftmaxSurrogate, n_train: usize, seed: u64) -> Result<BitstringDataset> {
    if n_train == 0 {
        return Err(GeoError::invalid("n_train must be positive"));
    }
    let dist = WeightedIndex::new(&s.probabilities)
        .map_err(|e| GeoError::InvalidData(format!("surrogate weights: {e}")))?;
    let mut rng = rng_from_seed(seed);
    let mut counts = vec![0u64; s.len()];
    for _ in 0..n_train {
        counts[dist.sample(&mut rng)] += 1;
    }
    let n_vars = s.support[0].len();
    BitstringDataset::from_counts(
        n_vars,
        s.support.iter().cloned().zip(counts).filter(|(_, c)| *c > 0),
    )
}

/// State after the stand-alone cold start: a pool of distinct valid
/// selections of which exactly one has been evaluated.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColdStartState {
    pub seed_pool: Vec<Selection>,
    /// The single evaluated pool entry.
    pub evaluated: ArchiveEntry,
    /// Reference cost `sigma_0` assigned to every unevaluated entry.
    #[serde(with = "crate::serde_cost")]
    pub sigma_ref: f64,
    pub temperature: f64,
    pub warnings: Vec<String>,
}

/// `T * ln 2 + best`, which gives the best evaluated entry twice the weight
/// of an unevaluated one. With no finite evaluated cost the reference is
/// `T * ln 2`, so unevaluated entries share the mass evenly.
pub fn reference_cost(temperature: f64, best_evaluated: f64) -> f64 {
    let base = if best_evaluated.is_finite() { best_evaluated } else { 0.0 };
    temperature * std::f64::consts::LN_2 + base
}

/// Temperature `sqrt(mean(Sigma))`, falling back to `sqrt(|mean|)` with a
/// warning when the mean is negative.
pub fn covariance_temperature(inst: &PortfolioInstance) -> Temperature {
    let cov = inst.covariance();
    let mean = cov.sum() / (cov.nrows() * cov.ncols()) as f64;
    if mean > 0.0 {
        Temperature {
            value: mean.sqrt(),
            warning: None,
        }
    } else if mean < 0.0 {
        let msg = format!("mean covariance {mean:e} is negative; using sqrt(|mean|)");
        log::warn!("{msg}");
        Temperature {
            value: (-mean).sqrt(),
            warning: Some(msg),
        }
    } else {
        let msg = "mean covariance is zero; using temperature 1.0".to_string();
        log::warn!("{msg}");
        Temperature {
            value: 1.0,
            warning: Some(msg),
        }
    }
}

/// Draws `n_seed` distinct valid selections uniformly, evaluates one of them
/// (chosen uniformly) and sets the reference cost so that the evaluated
/// entry has twice the probability of each unevaluated one.
pub fn cold_start<O: CostOracle + ?Sized>(
    oracle: &mut O,
    inst: &PortfolioInstance,
    n_seed: usize,
    seed: u64,
) -> Result<ColdStartState> {
    let (n, kappa) = (inst.n_assets(), inst.cardinality());
    if oracle.n_vars() != n || oracle.cardinality() != kappa {
        return Err(GeoError::invalid("oracle and instance disagree on the search space"));
    }
    if n_seed == 0 {
        return Err(GeoError::invalid("n_seed must be positive"));
    }
    let space = binomial(n, kappa);
    if n_seed as u128 > space {
        return Err(GeoError::invalid(format!(
            "n_seed {n_seed} exceeds the {space} valid selections"
        )));
    }
    let mut rng = rng_from_seed(derive_seed(seed, "cold-start", 0));
    let seed_pool = distinct_valid(n, kappa, n_seed, &mut rng);
    let pick = rand::Rng::random_range(&mut rng, 0..seed_pool.len());
    let candidate = oracle.evaluate(&seed_pool[pick])?;
    let mut warnings = Vec::new();
    let t = covariance_temperature(inst);
    warnings.extend(t.warning);
    let sigma_ref = reference_cost(t.value, candidate.cost);
    Ok(ColdStartState {
        seed_pool,
        evaluated: ArchiveEntry {
            candidate,
            origin: Origin::ColdStart,
            iteration: 0,
        },
        sigma_ref,
        temperature: t.value,
        warnings,
    })
}

impl ColdStartState {
    /// The initial surrogate: the evaluated entry at its true cost and every
    /// other pool entry at `sigma_ref`.
    pub fn surrogate(&self) -> Result<SoftmaxSurrogate> {
        let evaluated = &self.evaluated.candidate;
        let costs: Vec<f64> = self
            .seed_pool
            .iter()
            .map(|s| if *s == evaluated.selection { evaluated.cost } else { self.sigma_ref })
            .collect();
        build_softmax(&self.seed_pool, &costs, self.temperature)
    }
}

/// `k` distinct uniformly random weight-`kappa` strings. Enumerates and
/// shuffles when `k` is a large share of the space, otherwise rejects
/// duplicates.
pub(crate) fn distinct_valid<R: rand::Rng + ?Sized>(n: usize, kappa: usize, k: usize, rng: &mut R) -> Vec<Selection> {
    let space = binomial(n, kappa);
    if (k as u128).saturating_mul(2) >= space {
        let mut all = crate::bits::enumerate_weight(n, kappa);
        rand::seq::SliceRandom::shuffle(all.as_mut_slice(), rng);
        all.truncate(k);
        return all;
    }
    let mut seen = std::collections::HashSet::with_capacity(k);
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let s = random_weight(n, kappa, rng);
        if seen.insert(s.clone()) {
            out.push(s);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::Bitstring;

    fn sels(n: usize) -> Vec<Selection> {
        (0..n).map(|i| Bitstring::from_indices(12, &[i % 12, (i / 12) % 12]).unwrap()).collect()
    }

    #[test]
    fn temperature_examples() {
        let t = default_temperature(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(t.value, 1.0);
        assert!(t.warning.is_some());
        let t = default_temperature(&[0.0, 2.0]).unwrap();
        assert!((t.value - 2f64.sqrt()).abs() < 1e-15);
        assert!(default_temperature(&[1.0]).is_err());
        assert!(default_temperature(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn softmax_examples() {
        let s = sels(2);
        let p = build_softmax(&s, &[0.3, 0.3], 0.7).unwrap();
        assert_eq!(p.probabilities(), &[0.5, 0.5]);
        let t = 0.37;
        let p = build_softmax(&s, &[0.0, t * std::f64::consts::LN_2], t).unwrap();
        assert!((p.probabilities()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p.probabilities()[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_collapses_duplicates_and_zeroes_infeasible() {
        let a: Selection = "1100".parse().unwrap();
        let b: Selection = "0011".parse().unwrap();
        let c: Selection = "0101".parse().unwrap();
        let p = build_softmax(&[a.clone(), b.clone(), a.clone(), c], &[2.0, 1.0, 1.0, f64::INFINITY], 1.0).unwrap();
        assert_eq!(p.support().len(), 3);
        assert_eq!(p.costs(), &[1.0, 1.0, f64::INFINITY]);
        assert_eq!(p.probabilities(), &[0.5, 0.5, 0.0]);
        assert!(build_softmax(&[a], &[f64::NAN], 1.0).is_err());
        assert!(build_softmax(&[b], &[f64::INFINITY], 1.0).is_err());
    }

    #[test]
    fn softmax_survives_tiny_temperatures() {
        let s = sels(3);
        let p = build_softmax(&s, &[1e-3, 1e-3, 2e-3], 1e-12).unwrap();
        assert_eq!(p.probabilities(), &[0.5, 0.5, 0.0]);
    }

    #[test]
    fn training_set_from_single_support() {
        let s = sels(1);
        let p = build_softmax(&s, &[0.1], 1.0).unwrap();
        let d = sample_training_set(&p, 50, 3).unwrap();
        assert_eq!(d.len(), 50);
        assert_eq!(d.n_distinct(), 1);
    }

    #[test]
    fn training_set_frequencies() {
        let s = sels(2);
        let p = build_softmax(&s, &[0.0, std::f64::consts::LN_2], 1.0).unwrap();
        let d = sample_training_set(&p, 30_000, 11).unwrap();
        let first = d.iter().find(|(r, _)| **r == s[0]).unwrap().1 as f64 / 30_000.0;
        assert!((first - 2.0 / 3.0).abs() < 0.01, "{first}");
        assert_eq!(d, sample_training_set(&p, 30_000, 11).unwrap());
    }

    #[test]
    fn reference_cost_doubles_the_evaluated_weight() {
        assert!((reference_cost(1.0, 0.0) - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(reference_cost(2.0, f64::INFINITY), 2.0 * std::f64::consts::LN_2);
    }

    #[test]
    fn distinct_valid_selections() {
        let mut rng = rng_from_seed(1);
        for k in [5, 60, 70] {
            let v = distinct_valid(8, 4, k, &mut rng);
            assert_eq!(v.len(), k);
            let set: std::collections::HashSet<_> = v.iter().collect();
            assert_eq!(set.len(), k);
            assert!(v.iter().all(|s| s.count_ones() == 4));
        }
    }
}
