//! Matrix-product-state Born machine.
//!
//! An [`MpsModel`] assigns `P(x) = |Psi(x)|^2 / Z` to every bitstring. It is
//! fitted to a [`BitstringDataset`] by two-site sweeps of gradient descent on
//! the negative log-likelihood (see [`train`]) and sampled exactly, site by
//! site, with [`MpsModel::sample`].

mod io;
mod mps;
mod sample;
mod train;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bits::Bitstring;
use crate::error::{GeoError, Result};

pub use io::{read_binary, read_json, write_binary, write_json, SavedModel};
pub use mps::MpsModel;
pub use train::{
    merge_two_site, split_two_site, train, two_site_gradient, Direction, TrainReport,
    TwoSiteGradient,
};

/// Hyperparameters for [`train`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_bond_dim: usize,
    /// Largest fraction of squared singular-value weight discarded per split.
    pub svd_cutoff: f64,
    pub learning_rate: f64,
    pub n_sweeps: usize,
    pub grad_steps_per_bond: usize,
    /// Seed for the random initial model when a caller builds one from this
    /// config. Training itself is deterministic.
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_bond_dim: 10,
            svd_cutoff: 1e-7,
            learning_rate: 0.05,
            n_sweeps: 10,
            grad_steps_per_bond: 5,
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_bond_dim == 0 {
            return Err(GeoError::invalid("max_bond_dim must be at least 1"));
        }
        if !(self.svd_cutoff >= 0.0 && self.svd_cutoff < 1.0) {
            return Err(GeoError::invalid("svd_cutoff must lie in [0, 1)"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(GeoError::invalid(format!(
                "learning_rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        if self.n_sweeps == 0 || self.grad_steps_per_bond == 0 {
            return Err(GeoError::invalid("n_sweeps and grad_steps_per_bond must be positive"));
        }
        Ok(())
    }
}

/// A multiset of equal-length bitstrings, stored as distinct rows with counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitstringDataset {
    n_vars: usize,
    rows: Vec<Bitstring>,
    counts: Vec<u64>,
    total: u64,
}

impl BitstringDataset {
    pub fn new(n_vars: usize, rows: impl IntoIterator<Item = Bitstring>) -> Result<Self> {
        Self::from_counts(n_vars, rows.into_iter().map(|r| (r, 1)))
    }

    /// Builds a dataset from `(row, multiplicity)` pairs; repeated rows add up.
    pub fn from_counts(
        n_vars: usize,
        pairs: impl IntoIterator<Item = (Bitstring, u64)>,
    ) -> Result<Self> {
        if n_vars == 0 {
            return Err(GeoError::invalid("datasets need at least one variable"));
        }
        let mut map: BTreeMap<Bitstring, u64> = BTreeMap::new();
        for (row, count) in pairs {
            if row.len() != n_vars {
                return Err(GeoError::invalid(format!(
                    "row {row} has length {}, expected {n_vars}",
                    row.len()
                )));
            }
            if count > 0 {
                *map.entry(row).or_insert(0) += count;
            }
        }
        if map.is_empty() {
            return Err(GeoError::invalid("dataset is empty"));
        }
        let total = map.values().sum();
        let (rows, counts) = map.into_iter().unzip();
        Ok(BitstringDataset {
            n_vars,
            rows,
            counts,
            total,
        })
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    /// Number of rows counting duplicates.
    pub fn len(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn n_distinct(&self) -> usize {
        self.rows.len()
    }

    /// Distinct rows in lexicographic order with their multiplicities.
    pub fn iter(&self) -> impl Iterator<Item = (&Bitstring, u64)> {
        self.rows.iter().zip(self.counts.iter().copied())
    }

    /// Empirical probability of each distinct row.
    pub(crate) fn weights(&self) -> Vec<f64> {
        let t = self.total as f64;
        self.counts.iter().map(|&c| c as f64 / t).collect()
    }

    pub(crate) fn rows(&self) -> &[Bitstring] {
        &self.rows
    }
}

/// Random model with `Z = 1`; see [`MpsModel::new_random`].
pub fn init_mps(n_vars: usize, init_bond: usize, seed: u64) -> Result<MpsModel> {
    MpsModel::new_random(n_vars, init_bond, seed)
}

/// `|Psi(x)|^2 / Z`.
pub fn born_probability(model: &MpsModel, x: &Bitstring) -> Result<f64> {
    model.probability(x)
}

/// Mean negative log-likelihood of the rows; see [`MpsModel::nll`].
pub fn negative_log_likelihood(model: &MpsModel, data: &BitstringDataset) -> Result<f64> {
    model.nll(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_collapses_duplicates() {
        let rows = ["01", "10", "01", "01"].iter().map(|s| s.parse().unwrap());
        let d = BitstringDataset::new(2, rows).unwrap();
        assert_eq!(d.len(), 4);
        assert_eq!(d.n_distinct(), 2);
        let w = d.weights();
        assert_eq!(w, vec![0.75, 0.25]);
    }

    #[test]
    fn dataset_rejects_bad_rows() {
        assert!(BitstringDataset::new(3, vec!["01".parse().unwrap()]).is_err());
        assert!(BitstringDataset::new(3, Vec::new()).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for lr in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            let cfg = TrainConfig {
                learning_rate: lr,
                ..TrainConfig::default()
            };
            assert!(matches!(cfg.validate(), Err(GeoError::InvalidArgument(_))));
        }
        let cfg = TrainConfig {
            svd_cutoff: 1.0,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn basis_state_nll_is_zero() {
        let x: Bitstring = "0110".parse().unwrap();
        let m = MpsModel::basis_state(&x).unwrap();
        let d = BitstringDataset::from_counts(4, [(x, 100)]).unwrap();
        assert_eq!(negative_log_likelihood(&m, &d).unwrap(), 0.0);
    }

    #[test]
    fn uniform_nll_is_n_ln2() {
        let m = MpsModel::uniform(4).unwrap();
        let d = BitstringDataset::new(4, ["0000", "1011", "1011"].iter().map(|s| s.parse().unwrap()))
            .unwrap();
        let nll = negative_log_likelihood(&m, &d).unwrap();
        assert!((nll - 4.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn zero_probability_row_is_out_of_support() {
        let m = MpsModel::basis_state(&"0110".parse().unwrap()).unwrap();
        let bad: Bitstring = "1110".parse().unwrap();
        let d = BitstringDataset::new(4, vec![bad.clone()]).unwrap();
        match negative_log_likelihood(&m, &d) {
            Err(GeoError::OutOfSupport { row }) => assert_eq!(row, bad),
            other => panic!("unexpected {other:?}"),
        }
    }
}
