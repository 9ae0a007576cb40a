use serde::{Deserialize, Serialize};

use crate::error::{GeoError, Result};
use crate::portfolio::{FrontierPoint, FrontierSet};

/// Frontier-distance metrics of a heuristic frontier against the standard one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub pde_mean: f64,
    pub pde_median: f64,
    pub pde_min: f64,
    pub pde_max: f64,
    pub meucd: f64,
    pub vre: f64,
    pub mre: f64,
    /// Points on the standard frontier.
    pub n_standard: usize,
    /// Points on the heuristic frontier.
    pub n_heuristic: usize,
    pub warnings: Vec<String>,
}

impl MetricReport {
    /// Values in table order: Mean, Median, Min, Max, MEUCD, VRE, MRE.
    pub fn row(&self) -> [f64; 7] {
        [
            self.pde_mean,
            self.pde_median,
            self.pde_min,
            self.pde_max,
            self.meucd,
            self.vre,
            self.mre,
        ]
    }
}

/// Linear interpolation of `value` at `at`, given the bracketing points.
/// Equal brackets (or a clamped endpoint) return the bracket value itself.
fn interpolate(at: f64, lo: (f64, f64), hi: (f64, f64)) -> f64 {
    if hi.0 == lo.0 {
        return lo.1;
    }
    lo.1 + (hi.1 - lo.1) * (at - lo.0) / (hi.0 - lo.0)
}

/// `(k, j)`: the standard point with the largest key `<= at` and the one
/// with the smallest key `>= at`. Out of range both are the nearest endpoint.
fn bracket(keys: &[f64], at: f64) -> (usize, usize) {
    let mut k = None;
    let mut j = None;
    for (l, &v) in keys.iter().enumerate() {
        if v <= at && k.is_none_or(|kk: usize| v > keys[kk]) {
            k = Some(l);
        }
        if v >= at && j.is_none_or(|jj: usize| v < keys[jj]) {
            j = Some(l);
        }
    }
    match (k, j) {
        (Some(k), Some(j)) => (k, j),
        (Some(k), None) => (k, k),
        (None, Some(j)) => (j, j),
        (None, None) => unreachable!("keys are nonempty"),
    }
}

fn pct(num: f64, den: f64) -> Option<f64> {
    (den != 0.0).then(|| (100.0 * num / den).abs())
}

/// Percentage deviation of each heuristic point from the standard frontier:
/// the smaller of the risk deviation at equal return and the return
/// deviation at equal risk, each obtained by interpolating the standard
/// frontier between its bracketing points. Points outside the standard
/// frontier's range use the nearest endpoint.
pub fn pde(standard: &FrontierSet, heuristic: &FrontierSet) -> Result<Vec<f64>> {
    let s = standard.points();
    if s.len() < 2 {
        return Err(GeoError::invalid("the standard frontier needs at least two points"));
    }
    let xs: Vec<f64> = s.iter().map(|p| p.risk).collect();
    let ys: Vec<f64> = s.iter().map(|p| p.ret).collect();
    heuristic
        .points()
        .iter()
        .map(|h| {
            let (k, j) = bracket(&ys, h.ret);
            let x_star = interpolate(h.ret, (ys[k], xs[k]), (ys[j], xs[j]));
            let (k, j) = bracket(&xs, h.risk);
            let y_star = interpolate(h.risk, (xs[k], ys[k]), (xs[j], ys[j]));
            let a = pct(h.risk - x_star, x_star);
            let b = pct(h.ret - y_star, y_star);
            match (a, b) {
                (Some(a), Some(b)) => Ok(a.min(b)),
                (Some(v), None) | (None, Some(v)) => Ok(v),
                (None, None) => Err(GeoError::InvalidData(format!(
                    "PDE undefined at ({}, {}): both interpolated coordinates are zero",
                    h.risk, h.ret
                ))),
            }
        })
        .collect()
}

/// MEUCD, VRE and MRE.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMetrics {
    pub meucd: f64,
    pub vre: f64,
    pub mre: f64,
    pub warnings: Vec<String>,
}

/// For each heuristic point take the nearest standard point `(X*, Y*)`
/// (Euclidean). MEUCD is the mean distance, VRE the mean of
/// `100 |X* - x| / x` and MRE the mean of `100 |Y* - y| / |y|`. Points with a
/// zero coordinate are left out of the corresponding ratio with a warning.
pub fn meucd_vre_mre(standard: &FrontierSet, heuristic: &FrontierSet) -> Result<DistanceMetrics> {
    let s = standard.points();
    let h = heuristic.points();
    if s.is_empty() || h.is_empty() {
        return Err(GeoError::invalid("both frontiers must be nonempty"));
    }
    let mut warnings = Vec::new();
    let (mut dist, mut vre, mut mre) = (0.0, 0.0, 0.0);
    let (mut n_vre, mut n_mre) = (0usize, 0usize);
    for p in h {
        let d = |q: &FrontierPoint| ((q.risk - p.risk).powi(2) + (q.ret - p.ret).powi(2)).sqrt();
        let nearest = s
            .iter()
            .min_by(|a, b| d(a).total_cmp(&d(b)))
            .expect("standard frontier is nonempty");
        dist += d(nearest);
        match pct(nearest.risk - p.risk, p.risk) {
            Some(v) => {
                vre += v;
                n_vre += 1;
            }
            None => warnings.push(format!("point ({}, {}) has zero risk; left out of VRE", p.risk, p.ret)),
        }
        match pct(nearest.ret - p.ret, p.ret) {
            Some(v) => {
                mre += v;
                n_mre += 1;
            }
            None => warnings.push(format!("point ({}, {}) has zero return; left out of MRE", p.risk, p.ret)),
        }
    }
    let mean = |sum: f64, n: usize| if n == 0 { f64::NAN } else { sum / n as f64 };
    Ok(DistanceMetrics {
        meucd: dist / h.len() as f64,
        vre: mean(vre, n_vre),
        mre: mean(mre, n_mre),
        warnings,
    })
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// All seven table metrics of `heuristic` against `standard`.
pub fn metric_report(standard: &FrontierSet, heuristic: &FrontierSet) -> Result<MetricReport> {
    if heuristic.is_empty() {
        return Err(GeoError::invalid("the heuristic frontier is empty"));
    }
    let mut p = pde(standard, heuristic)?;
    p.sort_by(f64::total_cmp);
    let d = meucd_vre_mre(standard, heuristic)?;
    Ok(MetricReport {
        pde_mean: p.iter().sum::<f64>() / p.len() as f64,
        pde_median: median(&p),
        pde_min: p[0],
        pde_max: p[p.len() - 1],
        meucd: d.meucd,
        vre: d.vre,
        mre: d.mre,
        n_standard: standard.len(),
        n_heuristic: heuristic.len(),
        warnings: d.warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::portfolio::FrontierKind;

    fn set(kind: FrontierKind, pts: &[(f64, f64)]) -> FrontierSet {
        FrontierSet::new(kind, pts.iter().map(|&(risk, ret)| FrontierPoint { risk, ret }).collect()).unwrap()
    }

    #[test]
    fn point_on_a_segment_has_zero_deviation() {
        let s = set(FrontierKind::Standard, &[(1.0, 1.0), (2.0, 3.0)]);
        let h = set(FrontierKind::Heuristic, &[(1.5, 2.0)]);
        assert_eq!(pde(&s, &h).unwrap(), vec![0.0]);
    }

    #[test]
    fn out_of_range_points_clamp_to_endpoints() {
        let s = set(FrontierKind::Standard, &[(1.0, 1.0), (2.0, 2.0)]);
        let h = set(FrontierKind::Heuristic, &[(3.0, 2.5)]);
        // x* = 2 (top endpoint), y* = 2: min(50, 25).
        assert!((pde(&s, &h).unwrap()[0] - 25.0).abs() < 1e-12);
    }

    #[test]
    fn identical_frontiers_have_zero_metrics() {
        let pts = [(0.1, 0.01), (0.2, 0.02), (0.35, 0.025)];
        let s = set(FrontierKind::Standard, &pts);
        let h = set(FrontierKind::Heuristic, &pts);
        let r = metric_report(&s, &h).unwrap();
        assert_eq!(r.row(), [0.0; 7]);
    }

    #[test]
    fn single_point_rejected_for_pde() {
        let s = set(FrontierKind::Standard, &[(1.0, 1.0)]);
        assert!(pde(&s, &s).is_err());
    }

    #[test]
    fn zero_return_is_left_out_of_mre() {
        let s = set(FrontierKind::Standard, &[(1.0, 1.0)]);
        let h = set(FrontierKind::Heuristic, &[(1.0, 0.0), (1.0, 0.5)]);
        let d = meucd_vre_mre(&s, &h).unwrap();
        assert_eq!(d.warnings.len(), 1);
        assert!((d.mre - 100.0).abs() < 1e-12);
    }
}
