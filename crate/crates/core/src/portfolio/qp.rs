use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::instance::{EvaluatedCandidate, Objective, PortfolioInstance};
use crate::bits::Selection;
use crate::error::{GeoError, Result};

/// Optimal point of a box- and equality-constrained convex QP.
#[derive(Debug, Clone)]
pub struct QpSolution {
    pub w: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Max of the stationarity residual and of any wrong-signed bound
    /// multiplier at the returned point.
    pub kkt_residual: f64,
}

/// `min 1/2 w'Hw + c'w` s.t. `Ew = b`, `l <= w <= u`.
pub(crate) struct BoxQp {
    pub h: DMatrix<f64>,
    pub c: DVector<f64>,
    pub e: DMatrix<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Bound {
    Lower,
    Upper,
}

impl BoxQp {
    fn n(&self) -> usize {
        self.c.len()
    }

    fn value(&self, w: &DVector<f64>) -> f64 {
        0.5 * w.dot(&(&self.h * w)) + self.c.dot(w)
    }

    /// Primal active-set iterations from the feasible point `w`.
    ///
    /// The working set starts empty and only ever receives bounds that block
    /// a step inside the null space of the current working set, so it stays
    /// linearly independent and the bound multipliers are unique.
    pub fn solve(&self, mut w: DVector<f64>, max_iter: usize) -> Result<QpSolution> {
        let n = self.n();
        let e = normalize_rows(&self.e);
        let scale = self.h.amax().max(self.c.amax()).max(f64::MIN_POSITIVE);
        let mut working: Vec<Option<Bound>> = vec![None; n];
        let mut last_residual = f64::INFINITY;

        for iter in 0..max_iter {
            let g = &self.h * &w + &self.c;
            let free: Vec<usize> = (0..n).filter(|&i| working[i].is_none()).collect();
            let (p_free, unbounded) = self.step(&e, &free, &g, scale);
            let step_norm = p_free.amax();

            if !unbounded && step_norm <= 1e-12 {
                let (lambdas, residual) = multipliers(&e, &working, &g);
                last_residual = residual;
                let tol = 1e-9 * scale;
                let worst = lambdas
                    .iter()
                    .filter(|(_, l)| *l < -tol)
                    .min_by(|a, b| a.1.total_cmp(&b.1));
                match worst {
                    None => {
                        let violation = lambdas.iter().map(|(_, l)| (-l).max(0.0)).fold(0.0, f64::max);
                        return Ok(QpSolution {
                            objective: self.value(&w),
                            w,
                            iterations: iter + 1,
                            kkt_residual: residual.max(violation),
                        });
                    }
                    Some(&(i, _)) => {
                        working[i] = None;
                        continue;
                    }
                }
            }

            // Ratio test along p over the free coordinates.
            let mut alpha = if unbounded { f64::INFINITY } else { 1.0 };
            let mut blocking = None;
            for (j, &i) in free.iter().enumerate() {
                let pi = p_free[j];
                if pi.abs() <= 1e-14 * step_norm {
                    continue;
                }
                let (a, b) = if pi < 0.0 {
                    ((self.lower[i] - w[i]) / pi, Bound::Lower)
                } else {
                    ((self.upper[i] - w[i]) / pi, Bound::Upper)
                };
                let a = a.max(0.0);
                if a < alpha {
                    alpha = a;
                    blocking = Some((i, b));
                }
            }
            if !alpha.is_finite() {
                return Err(GeoError::NumericalFailure {
                    iterations: iter,
                    residual: step_norm,
                    detail: "unbounded descent direction without a blocking bound".into(),
                });
            }
            for (j, &i) in free.iter().enumerate() {
                w[i] += alpha * p_free[j];
            }
            if let Some((i, b)) = blocking {
                w[i] = match b {
                    Bound::Lower => self.lower[i],
                    Bound::Upper => self.upper[i],
                };
                working[i] = Some(b);
            }
            for i in 0..n {
                w[i] = w[i].clamp(self.lower[i], self.upper[i]);
            }
        }
        Err(GeoError::NumericalFailure {
            iterations: max_iter,
            residual: last_residual,
            detail: "active-set iteration cap reached".into(),
        })
    }

    /// Minimiser of the quadratic model on the free coordinates within the
    /// null space of the equality rows, or a descent direction of zero
    /// curvature when the reduced problem is unbounded.
    fn step(&self, e: &DMatrix<f64>, free: &[usize], g: &DVector<f64>, scale: f64) -> (DVector<f64>, bool) {
        let nf = free.len();
        if nf == 0 {
            return (DVector::zeros(0), false);
        }
        let ef = e.select_columns(free);
        let z = null_space(&ef);
        if z.ncols() == 0 {
            return (DVector::zeros(nf), false);
        }
        let hf = self.h.select_rows(free).select_columns(free);
        let gf = DVector::from_iterator(nf, free.iter().map(|&i| g[i]));
        let gz = z.transpose() * &gf;
        let hr = z.transpose() * &hf * &z;
        let eig = SymmetricEigen::new((&hr + hr.transpose()) * 0.5);
        let eig_tol = 1e-12 * scale.max(eig.eigenvalues.amax());
        let grad_tol = 1e-13 * scale.max(gz.amax());
        let mut y = DVector::zeros(z.ncols());
        let mut flat = DVector::zeros(z.ncols());
        let mut unbounded = false;
        for (k, &lam) in eig.eigenvalues.iter().enumerate() {
            let q = eig.eigenvectors.column(k);
            let proj = q.dot(&gz);
            if lam > eig_tol {
                y -= q * (proj / lam);
            } else if proj.abs() > grad_tol {
                flat -= q * proj;
                unbounded = true;
            }
        }
        let dir = if unbounded { flat } else { y };
        (z * dir, unbounded)
    }
}

/// Orthonormal basis of `{p : A p = 0}` as columns.
fn null_space(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.ncols();
    let gram = a.transpose() * a;
    let eig = SymmetricEigen::new(gram);
    let tol = 1e-10 * eig.eigenvalues.amax().max(1.0);
    let cols: Vec<usize> = (0..n).filter(|&k| eig.eigenvalues[k] <= tol).collect();
    eig.eigenvectors.select_columns(&cols)
}

fn normalize_rows(e: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = e.clone();
    for mut row in out.row_iter_mut() {
        let n = row.norm();
        if n > 0.0 {
            row /= n;
        }
    }
    out
}

/// Least-squares multipliers for `g + E'nu - sum_lower lam e_i + sum_upper lam e_i = 0`.
/// Returns `(index, lambda)` for each working bound and the residual norm.
fn multipliers(e: &DMatrix<f64>, working: &[Option<Bound>], g: &DVector<f64>) -> (Vec<(usize, f64)>, f64) {
    let n = g.len();
    let m = e.nrows();
    let active: Vec<(usize, Bound)> = working
        .iter()
        .enumerate()
        .filter_map(|(i, b)| b.map(|b| (i, b)))
        .collect();
    let mut k = DMatrix::zeros(n, m + active.len());
    for r in 0..m {
        for i in 0..n {
            k[(i, r)] = -e[(r, i)];
        }
    }
    for (j, &(i, b)) in active.iter().enumerate() {
        k[(i, m + j)] = if b == Bound::Lower { 1.0 } else { -1.0 };
    }
    let svd = k.clone().svd(true, true);
    let mu = svd
        .solve(g, 1e-12 * svd.singular_values.amax().max(f64::MIN_POSITIVE))
        .unwrap_or_else(|_| DVector::zeros(m + active.len()));
    let residual = (&k * &mu - g).amax();
    let lambdas = active.iter().enumerate().map(|(j, &(i, _))| (i, mu[m + j])).collect();
    (lambdas, residual)
}

/// A point with `sum w = 1` inside the bounds and, when `target` is given,
/// `r'w = rho`. Built from the two greedy vertices that minimise and
/// maximise `r'w`; `None` when the constraints are inconsistent.
pub(crate) fn feasible_start(
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    r: &DVector<f64>,
    target: Option<f64>,
) -> Option<DVector<f64>> {
    let n = lower.len();
    let base: f64 = lower.sum();
    let cap: f64 = upper.sum();
    if base > 1.0 + 1e-12 || cap < 1.0 - 1e-12 {
        return None;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| r[a].total_cmp(&r[b]).then(a.cmp(&b)));
    let fill = |order: &mut dyn Iterator<Item = usize>| {
        let mut w = lower.clone();
        let mut rest = 1.0 - base;
        for i in order {
            if rest <= 0.0 {
                break;
            }
            let add = (upper[i] - lower[i]).min(rest);
            w[i] += add;
            rest -= add;
        }
        w
    };
    let w_lo = fill(&mut order.iter().copied());
    let Some(rho) = target else {
        return Some(w_lo);
    };
    let w_hi = fill(&mut order.iter().rev().copied());
    let (r_lo, r_hi) = (r.dot(&w_lo), r.dot(&w_hi));
    let tol = 1e-12 * rho.abs().max(r_lo.abs()).max(r_hi.abs()).max(1e-300);
    if rho < r_lo - tol || rho > r_hi + tol {
        return None;
    }
    let theta = if r_hi - r_lo > 0.0 {
        ((rho - r_lo) / (r_hi - r_lo)).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let w = &w_lo * (1.0 - theta) + &w_hi * theta;
    Some(DVector::from_fn(n, |i, _| w[i].clamp(lower[i], upper[i])))
}

/// Minimum-variance weights at return `rho` over the given assets, or `None`
/// when `rho` is out of reach. Shared by the frontier sweep.
pub(crate) fn min_variance_at(
    cov: &DMatrix<f64>,
    r: &DVector<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    rho: f64,
) -> Result<Option<QpSolution>> {
    let n = r.len();
    let Some(start) = feasible_start(lower, upper, r, Some(rho)) else {
        return Ok(None);
    };
    let mut e = DMatrix::from_element(2, n, 1.0);
    e.set_row(1, &r.transpose());
    let qp = BoxQp {
        h: cov * 2.0,
        c: DVector::zeros(n),
        e,
        lower: lower.clone(),
        upper: upper.clone(),
    };
    qp.solve(start, 100 * n.max(1)).map(Some)
}

/// Optimal weights for a fixed selection.
///
/// Return-target mode minimises `w'Sigma w` subject to `sum w = 1`,
/// `r'w = rho` and the bounds, and reports `sigma = sqrt(w'Sigma w)`.
/// Risk-aversion mode minimises `lambda w'Sigma w - (1 - lambda) r'w` subject
/// to `sum w = 1` and the bounds. Inconsistent constraints give an infeasible
/// candidate with cost `+inf`.
pub fn solve_inner_qp(inst: &PortfolioInstance, sel: &Selection) -> Result<EvaluatedCandidate> {
    let n = inst.n_assets();
    if sel.len() != n {
        return Err(GeoError::invalid(format!("selection has length {}, expected {n}", sel.len())));
    }
    let kappa = inst.cardinality();
    let found = sel.count_ones();
    if found != kappa {
        return Err(GeoError::InvalidCandidate { expected: kappa, found });
    }
    let idx = sel.ones();
    let cov = inst.covariance().select_rows(&idx).select_columns(&idx);
    let r = DVector::from_iterator(kappa, idx.iter().map(|&i| inst.mean_returns()[i]));
    let lower = DVector::from_iterator(kappa, idx.iter().map(|&i| inst.lower_bounds()[i]));
    let upper = DVector::from_iterator(kappa, idx.iter().map(|&i| inst.upper_bounds()[i]));

    let (sol, cost) = match inst.objective() {
        Objective::ReturnTarget { rho } => match min_variance_at(&cov, &r, &lower, &upper, rho)? {
            None => return Ok(EvaluatedCandidate::infeasible(sel.clone())),
            Some(sol) => {
                let var = sol.w.dot(&(&cov * &sol.w));
                let risk = var.max(0.0).sqrt();
                (sol, risk)
            }
        },
        Objective::RiskAversion { lambda } => {
            let Some(start) = feasible_start(&lower, &upper, &r, None) else {
                return Ok(EvaluatedCandidate::infeasible(sel.clone()));
            };
            let qp = BoxQp {
                h: &cov * (2.0 * lambda),
                c: &r * -(1.0 - lambda),
                e: DMatrix::from_element(1, kappa, 1.0),
                lower,
                upper,
            };
            let sol = qp.solve(start, 100 * kappa)?;
            let cost = lambda * sol.w.dot(&(&cov * &sol.w)) - (1.0 - lambda) * r.dot(&sol.w);
            (sol, cost)
        }
    };
    let mut weights = vec![0.0; n];
    for (j, &i) in idx.iter().enumerate() {
        weights[i] = sol.w[j];
    }
    Ok(EvaluatedCandidate {
        selection: sel.clone(),
        weights,
        cost,
        feasible: true,
    })
}
