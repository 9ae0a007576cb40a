use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bits::Bitstring;
use crate::born::BitstringDataset;
use crate::error::{GeoError, Result};
use crate::rng::rng_from_seed;

/// Real matrix-product state over `n_vars` binary sites.
///
/// Site `k` holds a rank-3 tensor of shape
/// `bond_dims[k] x 2 x bond_dims[k + 1]`, stored row-major, so entry
/// `(a, s, b)` lives at `(a * 2 + s) * bond_dims[k + 1] + b`. The boundary
/// bonds are always 1, which makes the amplitude `Psi(x)` a scalar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpsModel {
    n_vars: usize,
    bond_dims: Vec<usize>,
    tensors: Vec<Vec<f64>>,
    canonical_center: Option<usize>,
}

impl MpsModel {
    /// Random model with entries uniform in `[0.9, 1.1]`, normalized to `Z = 1`.
    ///
    /// Bond `k` gets `min(init_bond, 2^k, 2^(n - k))`, the largest dimension
    /// that is not exactly reducible.
    pub fn new_random(n_vars: usize, init_bond: usize, seed: u64) -> Result<Self> {
        if n_vars == 0 {
            return Err(GeoError::invalid("an MPS needs at least one site"));
        }
        if init_bond == 0 {
            return Err(GeoError::invalid("initial bond dimension must be positive"));
        }
        let bond_dims = exact_bond_cap(n_vars, init_bond);
        let mut rng = rng_from_seed(seed);
        let tensors = (0..n_vars)
            .map(|k| {
                let len = bond_dims[k] * 2 * bond_dims[k + 1];
                (0..len).map(|_| rng.random_range(0.9..=1.1)).collect()
            })
            .collect();
        let mut model = MpsModel {
            n_vars,
            bond_dims,
            tensors,
            canonical_center: None,
        };
        model.normalize();
        Ok(model)
    }

    /// Product state with the same single-site amplitudes `[a0, a1]` everywhere.
    pub fn product(n_vars: usize, site: [f64; 2]) -> Result<Self> {
        if n_vars == 0 {
            return Err(GeoError::invalid("an MPS needs at least one site"));
        }
        Ok(MpsModel {
            n_vars,
            bond_dims: vec![1; n_vars + 1],
            tensors: vec![site.to_vec(); n_vars],
            canonical_center: None,
        })
    }

    /// The uniform distribution over all `2^n` strings.
    pub fn uniform(n_vars: usize) -> Result<Self> {
        let a = std::f64::consts::FRAC_1_SQRT_2;
        let mut m = Self::product(n_vars, [a, a])?;
        m.canonical_center = Some(0);
        Ok(m)
    }

    /// The point mass on `bits`.
    pub fn basis_state(bits: &Bitstring) -> Result<Self> {
        if bits.is_empty() {
            return Err(GeoError::invalid("an MPS needs at least one site"));
        }
        let tensors = bits
            .as_slice()
            .iter()
            .map(|&b| if b == 1 { vec![0.0, 1.0] } else { vec![1.0, 0.0] })
            .collect();
        Ok(MpsModel {
            n_vars: bits.len(),
            bond_dims: vec![1; bits.len() + 1],
            tensors,
            canonical_center: Some(0),
        })
    }

    /// Builds a model from explicit tensors, checking every shape.
    pub fn from_tensors(bond_dims: Vec<usize>, tensors: Vec<Vec<f64>>) -> Result<Self> {
        let n_vars = tensors.len();
        if n_vars == 0 {
            return Err(GeoError::invalid("an MPS needs at least one site"));
        }
        if bond_dims.len() != n_vars + 1 {
            return Err(GeoError::invalid(format!(
                "expected {} bond dimensions, got {}",
                n_vars + 1,
                bond_dims.len()
            )));
        }
        if bond_dims[0] != 1 || bond_dims[n_vars] != 1 {
            return Err(GeoError::invalid("boundary bond dimensions must be 1"));
        }
        if bond_dims.iter().any(|&d| d == 0) {
            return Err(GeoError::invalid("bond dimensions must be positive"));
        }
        for (k, t) in tensors.iter().enumerate() {
            let expected = bond_dims[k] * 2 * bond_dims[k + 1];
            if t.len() != expected {
                return Err(GeoError::invalid(format!(
                    "site {k}: expected {expected} entries, got {}",
                    t.len()
                )));
            }
            if t.iter().any(|v| !v.is_finite()) {
                return Err(GeoError::InvalidData(format!("site {k} has a non-finite entry")));
            }
        }
        Ok(MpsModel {
            n_vars,
            bond_dims,
            tensors,
            canonical_center: None,
        })
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn bond_dims(&self) -> &[usize] {
        &self.bond_dims
    }

    pub fn max_bond(&self) -> usize {
        self.bond_dims.iter().copied().max().unwrap_or(1)
    }

    pub fn canonical_center(&self) -> Option<usize> {
        self.canonical_center
    }

    pub fn site_tensor(&self, k: usize) -> &[f64] {
        &self.tensors[k]
    }

    /// Overwrites the tensor at site `k`; the shape must stay the same.
    /// Any canonical form is forgotten.
    pub fn set_site_tensor(&mut self, k: usize, data: Vec<f64>) -> Result<()> {
        if k >= self.n_vars {
            return Err(GeoError::invalid(format!("site {k} out of range")));
        }
        if data.len() != self.tensors[k].len() {
            return Err(GeoError::invalid(format!(
                "site {k}: expected {} entries, got {}",
                self.tensors[k].len(),
                data.len()
            )));
        }
        self.tensors[k] = data;
        self.canonical_center = None;
        Ok(())
    }

    pub(crate) fn tensors_mut(&mut self) -> (&mut Vec<usize>, &mut Vec<Vec<f64>>) {
        (&mut self.bond_dims, &mut self.tensors)
    }

    pub(crate) fn set_center(&mut self, center: Option<usize>) {
        self.canonical_center = center;
    }

    fn check_len(&self, x: &Bitstring) -> Result<()> {
        if x.len() != self.n_vars {
            return Err(GeoError::invalid(format!(
                "bitstring has length {}, model has {} sites",
                x.len(),
                self.n_vars
            )));
        }
        Ok(())
    }

    /// The raw amplitude `Psi(x)`. May underflow for very long chains; the
    /// log-space routines do not.
    pub fn amplitude(&self, x: &Bitstring) -> Result<f64> {
        self.check_len(x)?;
        let mut v = vec![1.0];
        for (k, &s) in x.as_slice().iter().enumerate() {
            v = row_times_slice(&v, &self.tensors[k], self.bond_dims[k + 1], s as usize);
        }
        Ok(v[0])
    }

    /// `ln |Psi(x)|^2`, or `-inf` when the amplitude is exactly zero.
    pub(crate) fn log_amp_sq(&self, bits: &[u8]) -> f64 {
        let mut v = vec![1.0];
        let mut log_scale = 0.0;
        for (k, &s) in bits.iter().enumerate() {
            v = row_times_slice(&v, &self.tensors[k], self.bond_dims[k + 1], s as usize);
            let m = v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
            if m == 0.0 {
                return f64::NEG_INFINITY;
            }
            for x in v.iter_mut() {
                *x /= m;
            }
            log_scale += m.ln();
        }
        2.0 * (v[0].abs().ln() + log_scale)
    }

    /// `ln Z` with `Z = sum_x |Psi(x)|^2`, contracted site by site with
    /// rescaling so that long chains do not under- or overflow.
    pub fn log_norm(&self) -> f64 {
        if let Some(c) = self.canonical_center {
            let z: f64 = self.tensors[c].iter().map(|v| v * v).sum();
            return z.ln();
        }
        // env is the dl x dl transfer environment from the left.
        let mut env = vec![1.0];
        let mut log_scale = 0.0;
        for k in 0..self.n_vars {
            let dl = self.bond_dims[k];
            let dr = self.bond_dims[k + 1];
            let t = &self.tensors[k];
            // tmp[a', s, b] = sum_a env[a', a] * A[a, s, b]
            let mut tmp = vec![0.0; dl * 2 * dr];
            for ap in 0..dl {
                for a in 0..dl {
                    let e = env[ap * dl + a];
                    if e == 0.0 {
                        continue;
                    }
                    let src = &t[a * 2 * dr..(a + 1) * 2 * dr];
                    let dst = &mut tmp[ap * 2 * dr..(ap + 1) * 2 * dr];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += e * s;
                    }
                }
            }
            // next[b', b] = sum_{a', s} A[a', s, b'] * tmp[a', s, b]
            let mut next = vec![0.0; dr * dr];
            for ap in 0..dl {
                for s in 0..2 {
                    let row_a = &t[(ap * 2 + s) * dr..(ap * 2 + s + 1) * dr];
                    let row_t = &tmp[(ap * 2 + s) * dr..(ap * 2 + s + 1) * dr];
                    for bp in 0..dr {
                        let x = row_a[bp];
                        if x == 0.0 {
                            continue;
                        }
                        let dst = &mut next[bp * dr..(bp + 1) * dr];
                        for (d, y) in dst.iter_mut().zip(row_t) {
                            *d += x * y;
                        }
                    }
                }
            }
            let m = next.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
            if m == 0.0 {
                return f64::NEG_INFINITY;
            }
            for x in next.iter_mut() {
                *x /= m;
            }
            log_scale += m.ln();
            env = next;
        }
        env[0].ln() + log_scale
    }

    /// `Z = sum_x |Psi(x)|^2`.
    pub fn norm_sq(&self) -> f64 {
        self.log_norm().exp()
    }

    /// `ln P(x)`; `-inf` outside the support.
    pub fn log_probability(&self, x: &Bitstring) -> Result<f64> {
        self.check_len(x)?;
        Ok(self.log_amp_sq(x.as_slice()) - self.log_norm())
    }

    /// Born probability `|Psi(x)|^2 / Z`.
    pub fn probability(&self, x: &Bitstring) -> Result<f64> {
        Ok(self.log_probability(x)?.exp())
    }

    /// Mean negative log-likelihood of the dataset rows.
    pub fn nll(&self, data: &BitstringDataset) -> Result<f64> {
        if data.n_vars() != self.n_vars {
            return Err(GeoError::invalid(format!(
                "dataset has {} variables, model has {}",
                data.n_vars(),
                self.n_vars
            )));
        }
        let log_z = self.log_norm();
        let total = data.len() as f64;
        let mut acc = 0.0;
        for (row, count) in data.iter() {
            let lp = self.log_amp_sq(row.as_slice());
            if lp == f64::NEG_INFINITY {
                return Err(GeoError::OutOfSupport { row: row.clone() });
            }
            acc += count as f64 * (lp - log_z);
        }
        Ok(-acc / total)
    }

    /// Brings the model into mixed canonical form around `center`: sites left
    /// of it become left-orthonormal, sites right of it right-orthonormal.
    /// Bond dimensions may shrink to their exact ranks. `P(x)` is preserved;
    /// the overall scale of `Psi` is not, since the factors pushed along the
    /// chain are rescaled to keep long chains finite.
    pub fn canonicalize(&mut self, center: usize) {
        assert!(center < self.n_vars, "center {center} out of range");
        for k in 0..center {
            self.left_orthonormalize(k);
        }
        for k in (center + 1..self.n_vars).rev() {
            self.right_orthonormalize(k);
        }
        self.canonical_center = Some(center);
    }

    /// Rescales so that `Z = 1`, leaving the model canonical at site 0.
    pub fn normalize(&mut self) {
        self.canonicalize(0);
        let norm: f64 = self.tensors[0].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in self.tensors[0].iter_mut() {
                *v /= norm;
            }
        }
    }

    /// QR-factorises site `k` as a `(dl*2) x dr` matrix and pushes `R` into
    /// site `k + 1`.
    fn left_orthonormalize(&mut self, k: usize) {
        let dl = self.bond_dims[k];
        let dr = self.bond_dims[k + 1];
        let m = DMatrix::from_row_slice(dl * 2, dr, &self.tensors[k]);
        let (q, r) = signed_qr(m);
        let r = unit_scaled(r);
        let new_dr = q.ncols();
        self.tensors[k] = row_major(&q);
        // site k+1: (dr) x (2 * dr2)
        let dr2 = self.bond_dims[k + 2];
        let next = DMatrix::from_row_slice(dr, 2 * dr2, &self.tensors[k + 1]);
        self.tensors[k + 1] = row_major(&(r * next));
        self.bond_dims[k + 1] = new_dr;
    }

    /// LQ-factorises site `k` as a `dl x (2*dr)` matrix and pushes `L` into
    /// site `k - 1`.
    fn right_orthonormalize(&mut self, k: usize) {
        let dl = self.bond_dims[k];
        let dr = self.bond_dims[k + 1];
        let m = DMatrix::from_row_slice(dl, 2 * dr, &self.tensors[k]);
        let (q, r) = signed_qr(m.transpose());
        let r = unit_scaled(r);
        let new_dl = q.ncols();
        self.tensors[k] = row_major(&q.transpose());
        let dl0 = self.bond_dims[k - 1];
        let prev = DMatrix::from_row_slice(dl0 * 2, dl, &self.tensors[k - 1]);
        self.tensors[k - 1] = row_major(&(prev * r.transpose()));
        self.bond_dims[k] = new_dl;
    }

    /// `sum_s A[s]^T A[s] = I` within `tol` (max-abs deviation).
    pub fn is_left_orthonormal(&self, k: usize, tol: f64) -> bool {
        let dl = self.bond_dims[k];
        let dr = self.bond_dims[k + 1];
        let m = DMatrix::from_row_slice(dl * 2, dr, &self.tensors[k]);
        let g = m.transpose() * &m;
        (g - DMatrix::identity(dr, dr)).amax() <= tol
    }

    /// `sum_s A[s] A[s]^T = I` within `tol` (max-abs deviation).
    pub fn is_right_orthonormal(&self, k: usize, tol: f64) -> bool {
        let dl = self.bond_dims[k];
        let dr = self.bond_dims[k + 1];
        let m = DMatrix::from_row_slice(dl, 2 * dr, &self.tensors[k]);
        let g = &m * m.transpose();
        (g - DMatrix::identity(dl, dl)).amax() <= tol
    }
}

/// Bond caps `min(max_bond, 2^k, 2^(n-k))` for `k = 0..=n`.
pub(crate) fn exact_bond_cap(n_vars: usize, max_bond: usize) -> Vec<usize> {
    (0..=n_vars)
        .map(|k| {
            let left = 1usize.checked_shl(k.min(62) as u32).unwrap_or(usize::MAX);
            let right = 1usize.checked_shl((n_vars - k).min(62) as u32).unwrap_or(usize::MAX);
            max_bond.min(left).min(right)
        })
        .collect()
}

/// `v^T A[:, s, :]` for a site tensor with right dimension `dr`.
pub(crate) fn row_times_slice(v: &[f64], tensor: &[f64], dr: usize, s: usize) -> Vec<f64> {
    let mut out = vec![0.0; dr];
    for (a, &va) in v.iter().enumerate() {
        if va == 0.0 {
            continue;
        }
        let row = &tensor[(a * 2 + s) * dr..(a * 2 + s + 1) * dr];
        for (o, r) in out.iter_mut().zip(row) {
            *o += va * r;
        }
    }
    out
}

/// `A[:, s, :] v` for a site tensor with dimensions `dl x 2 x dr`.
pub(crate) fn slice_times_col(tensor: &[f64], dl: usize, dr: usize, s: usize, v: &[f64]) -> Vec<f64> {
    (0..dl)
        .map(|a| {
            let row = &tensor[(a * 2 + s) * dr..(a * 2 + s + 1) * dr];
            row.iter().zip(v).map(|(x, y)| x * y).sum()
        })
        .collect()
}

/// Thin QR with a nonnegative diagonal in `R`, which makes the factorisation
/// unique for full-rank input and canonicalisation idempotent.
fn signed_qr(m: DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let qr = m.qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for i in 0..r.nrows().min(r.ncols()) {
        if r[(i, i)] < 0.0 {
            r.row_mut(i).neg_mut();
            q.column_mut(i).neg_mut();
        }
    }
    (q, r)
}

/// `m / max|m_ij|` when the largest entry is far from 1; leaves `m` alone
/// otherwise so that canonicalising an already canonical model is exact.
fn unit_scaled(m: DMatrix<f64>) -> DMatrix<f64> {
    let a = m.amax();
    if a > 0.0 && !(0.5..=2.0).contains(&a) {
        m / a
    } else {
        m
    }
}

pub(crate) fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}
