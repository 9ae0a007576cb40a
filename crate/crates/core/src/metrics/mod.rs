//! Benchmark quantities: relative enhancement, frontier deviation metrics
//! and the Wilcoxon signed-rank comparison.

mod frontier;
mod wilcoxon;

pub use frontier::{meucd_vre_mre, metric_report, pde, DistanceMetrics, MetricReport};
pub use wilcoxon::{wilcoxon_signed_rank, wilcoxon_signed_rank_with, Decision, WilcoxonMethod, WilcoxonOutcome};

use crate::error::{GeoError, Result};

/// `100 (c_classical - c_geo) / c_classical`; positive when GEO found the
/// lower cost.
pub fn relative_enhancement(c_classical: f64, c_geo: f64) -> Result<f64> {
    if c_classical == 0.0 || !c_classical.is_finite() || !c_geo.is_finite() {
        return Err(GeoError::invalid(format!(
            "relative enhancement undefined for ({c_classical}, {c_geo})"
        )));
    }
    // Scaling before subtracting keeps short decimal inputs exact, e.g. (2.0, 1.8) gives 10.0.
    Ok((100.0 * c_classical - 100.0 * c_geo) / c_classical)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enhancement_examples() {
        assert_eq!(relative_enhancement(2.0, 1.8).unwrap(), 10.0);
        assert_eq!(relative_enhancement(0.37, 0.37).unwrap(), 0.0);
        assert!((relative_enhancement(1.8, 2.0).unwrap() + 100.0 / 9.0).abs() < 1e-12);
        assert!(relative_enhancement(0.0, 1.0).is_err());
    }
}
