use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{GeoError, Result};

/// How the p-value is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WilcoxonMethod {
    /// Exact for fewer than 10 nonzero differences, asymptotic otherwise.
    #[default]
    Auto,
    /// Exact null distribution of the (possibly tied) rank sum.
    Exact,
    /// Normal approximation with tie correction, no continuity correction.
    Asymptotic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    /// The null hypothesis of equal medians is rejected.
    Reject,
    Retain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonOutcome {
    /// Pairs where `b > a`.
    pub wins: usize,
    /// Pairs where `b < a`.
    pub losses: usize,
    /// Pairs with zero difference; dropped before ranking.
    pub ties: usize,
    pub w_plus: f64,
    pub w_minus: f64,
    /// `min(W+, W-)`.
    pub statistic: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub method: WilcoxonMethod,
    pub decision: Decision,
}

/// Two-sided signed-rank test of the paired samples, `Auto` method.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64], alpha: f64) -> Result<WilcoxonOutcome> {
    wilcoxon_signed_rank_with(a, b, alpha, WilcoxonMethod::Auto)
}

/// Average ranks of `values` (1-based), ties sharing the mean rank.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && values[idx[end]] == values[idx[start]] {
            end += 1;
        }
        let r = (start + 1 + end) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = r;
        }
        start = end;
    }
    ranks
}

/// `P(W+ <= t)` under the null, by counting sign assignments. Doubled ranks
/// are integers even with ties.
fn exact_lower_tail(ranks: &[f64], t: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0.0f64; total + 1];
    counts[0] = 1.0;
    for &d in &doubled {
        for s in (d..=total).rev() {
            counts[s] += counts[s - d];
        }
    }
    let limit = (2.0 * t).round() as usize;
    let hits: f64 = counts.iter().take(limit + 1).sum();
    hits / 2f64.powi(ranks.len() as i32)
}

/// Two-sided signed-rank test on `d = b - a` at level `alpha`.
///
/// Zero differences are dropped. At least five nonzero differences are
/// required unless every difference is zero, in which case the test retains.
pub fn wilcoxon_signed_rank_with(
    a: &[f64],
    b: &[f64],
    alpha: f64,
    method: WilcoxonMethod,
) -> Result<WilcoxonOutcome> {
    if a.len() != b.len() {
        return Err(GeoError::invalid(format!(
            "paired samples differ in length: {} and {}",
            a.len(),
            b.len()
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(GeoError::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(GeoError::invalid("paired samples must be finite"));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).filter(|v| *v != 0.0).collect();
    let ties = a.len() - d.len();
    if d.is_empty() && ties > 0 {
        return Ok(WilcoxonOutcome {
            wins: 0,
            losses: 0,
            ties,
            w_plus: 0.0,
            w_minus: 0.0,
            statistic: 0.0,
            p_value: 1.0,
            alpha,
            method,
            decision: Decision::Retain,
        });
    }
    if d.len() < 5 {
        return Err(GeoError::invalid(format!(
            "need at least 5 nonzero differences, got {}",
            d.len()
        )));
    }
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks = average_ranks(&abs);
    let (mut w_plus, mut w_minus) = (0.0, 0.0);
    for (v, r) in d.iter().zip(&ranks) {
        if *v > 0.0 {
            w_plus += r;
        } else {
            w_minus += r;
        }
    }
    let statistic = w_plus.min(w_minus);
    let n = d.len();
    let resolved = match method {
        WilcoxonMethod::Auto if n < 10 => WilcoxonMethod::Exact,
        WilcoxonMethod::Auto => WilcoxonMethod::Asymptotic,
        m => m,
    };
    let p_value = match resolved {
        WilcoxonMethod::Exact => (2.0 * exact_lower_tail(&ranks, statistic)).min(1.0),
        _ => {
            let nf = n as f64;
            let mean = nf * (nf + 1.0) / 4.0;
            let mut var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0;
            let mut sorted = abs.clone();
            sorted.sort_by(f64::total_cmp);
            let mut i = 0;
            while i < sorted.len() {
                let mut j = i + 1;
                while j < sorted.len() && sorted[j] == sorted[i] {
                    j += 1;
                }
                let t = (j - i) as f64;
                var -= (t * t * t - t) / 48.0;
                i = j;
            }
            if var <= 0.0 {
                1.0
            } else {
                let z = (statistic - mean) / var.sqrt();
                let normal = Normal::new(0.0, 1.0).expect("standard normal");
                (2.0 * normal.cdf(z)).min(1.0)
            }
        }
    };
    Ok(WilcoxonOutcome {
        wins: d.iter().filter(|v| **v > 0.0).count(),
        losses: d.iter().filter(|v| **v < 0.0).count(),
        ties,
        w_plus,
        w_minus,
        statistic,
        p_value,
        alpha,
        method: resolved,
        decision: if p_value < alpha { Decision::Reject } else { Decision::Retain },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn exact_tail_small_case() {
        // n = 5, untied: 32 assignments, W+ <= 0 only for all-negative.
        assert!((exact_lower_tail(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.0) - 1.0 / 32.0).abs() < 1e-15);
        assert!((exact_lower_tail(&[1.0, 2.0, 3.0, 4.0, 5.0], 2.0) - 3.0 / 32.0).abs() < 1e-15);
    }

    #[test]
    fn all_wins_small_n() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [1.5, 2.7, 3.1, 4.9, 5.2, 6.6];
        let r = wilcoxon_signed_rank(&a, &b, 0.05).unwrap();
        assert_eq!((r.wins, r.losses, r.ties), (6, 0, 0));
        assert_eq!(r.statistic, 0.0);
        assert!((r.p_value - 2.0 / 64.0).abs() < 1e-15);
        assert_eq!(r.decision, Decision::Reject);
    }

    #[test]
    fn all_ties_retain() {
        let a = [1.0; 7];
        let r = wilcoxon_signed_rank(&a, &a, 0.05).unwrap();
        assert_eq!(r.ties, 7);
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.decision, Decision::Retain);
    }

    #[test]
    fn too_few_or_mismatched() {
        assert!(wilcoxon_signed_rank(&[1.0, 2.0], &[2.0, 3.0], 0.05).is_err());
        assert!(wilcoxon_signed_rank(&[1.0; 6], &[2.0; 5], 0.05).is_err());
        assert!(wilcoxon_signed_rank(&[f64::NAN; 6], &[2.0; 6], 0.05).is_err());
    }

    #[test]
    fn asymptotic_matches_normal_formula() {
        let a: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let b: Vec<f64> = a.iter().enumerate().map(|(i, x)| x + if i < 3 { -(i as f64 + 1.0) } else { i as f64 + 1.0 }).collect();
        let r = wilcoxon_signed_rank(&a, &b, 0.05).unwrap();
        assert_eq!(r.method, WilcoxonMethod::Asymptotic);
        assert_eq!(r.statistic, 6.0);
        let mean = 39.0;
        let sd = (12.0f64 * 13.0 * 25.0 / 24.0).sqrt();
        let z: f64 = (6.0 - mean) / sd;
        // Standard normal CDF via erfc, independent of statrs.
        let phi = 0.5 * libm_erfc(-z / std::f64::consts::SQRT_2);
        assert!((r.p_value - 2.0 * phi).abs() < 1e-9);
    }

    // erfc through the Taylor series of erf; fine for |x| < 3.
    fn libm_erfc(x: f64) -> f64 {
        let mut sum = 0.0;
        let mut term = x;
        let mut k = 0.0;
        while term.abs() > 1e-18 {
            sum += term / (2.0 * k + 1.0);
            k += 1.0;
            term *= -x * x / k;
        }
        1.0 - 2.0 / std::f64::consts::PI.sqrt() * sum
    }
}
