use geo_core::rng::rng_from_seed;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// Median with a confidence band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    #[serde(with = "geo_core::serde_cost")]
    pub median: f64,
    #[serde(with = "geo_core::serde_cost")]
    pub lo: f64,
    #[serde(with = "geo_core::serde_cost")]
    pub hi: f64,
}

/// Median of sorted data, averaging the middle pair. Equal neighbours are
/// returned as is so that two infinities stay infinite.
fn sorted_median(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        let (a, b) = (v[n / 2 - 1], v[n / 2]);
        if a == b {
            a
        } else {
            a / 2.0 + b / 2.0
        }
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(v: &[f64], q: f64) -> f64 {
    let pos = q * (v.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos.fract());
    if frac == 0.0 || v[i] == v[i + 1] {
        v[i]
    } else {
        v[i] + frac * (v[i + 1] - v[i])
    }
}

/// Percentile-bootstrap interval of the median.
///
/// Returns the sample median and the `(1 - confidence) / 2` and
/// `(1 + confidence) / 2` quantiles of `n_resamples` resampled medians,
/// widened if needed so that `lo <= median <= hi`. Deterministic per seed.
pub fn bootstrap_median_ci(samples: &[f64], n_resamples: usize, confidence: f64, seed: u64) -> Result<Band> {
    if samples.is_empty() {
        return Err(HarnessError::Config("cannot bootstrap an empty sample".into()));
    }
    if samples.iter().any(|v| v.is_nan()) {
        return Err(HarnessError::Config("cannot bootstrap NaN values".into()));
    }
    if n_resamples == 0 || !(confidence > 0.0 && confidence < 1.0) {
        return Err(HarnessError::Config("need n_resamples >= 1 and confidence in (0, 1)".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = sorted_median(&sorted);
    let mut rng = rng_from_seed(seed);
    let mut buf = vec![0.0; samples.len()];
    let mut medians: Vec<f64> = (0..n_resamples)
        .map(|_| {
            for b in buf.iter_mut() {
                *b = samples[rng.random_range(0..samples.len())];
            }
            buf.sort_by(f64::total_cmp);
            sorted_median(&buf)
        })
        .collect();
    medians.sort_by(f64::total_cmp);
    let (lo, hi) = if medians.len() == 1 {
        (medians[0], medians[0])
    } else {
        let tail = (1.0 - confidence) / 2.0;
        (quantile(&medians, tail), quantile(&medians, 1.0 - tail))
    };
    Ok(Band {
        median,
        lo: lo.min(median),
        hi: hi.max(median),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_samples_collapse() {
        let b = bootstrap_median_ci(&[3.5; 9], 500, 0.95, 1).unwrap();
        assert_eq!((b.median, b.lo, b.hi), (3.5, 3.5, 3.5));
    }

    #[test]
    fn one_to_hundred() {
        let s: Vec<f64> = (1..=100).map(f64::from).collect();
        let b = bootstrap_median_ci(&s, 10_000, 0.95, 7).unwrap();
        assert_eq!(b.median, 50.5);
        assert!(b.lo <= 50.5 && 50.5 <= b.hi && b.hi > b.lo);
        assert_eq!(b, bootstrap_median_ci(&s, 10_000, 0.95, 7).unwrap());
    }

    #[test]
    fn infinities_are_ordered_not_poisoned() {
        let b = bootstrap_median_ci(&[1.0, f64::INFINITY, f64::INFINITY], 200, 0.9, 3).unwrap();
        assert_eq!(b.median, f64::INFINITY);
        assert!(!b.lo.is_nan() && b.hi == f64::INFINITY);
        assert!(bootstrap_median_ci(&[], 10, 0.9, 0).is_err());
    }
}
