use nalgebra::DMatrix;

use super::mps::{row_major, row_times_slice, slice_times_col, MpsModel};
use super::{BitstringDataset, TrainConfig};
use crate::error::{GeoError, Result};

/// Which neighbour receives the singular values after a two-site split, i.e.
/// where the canonical center moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Right,
    Left,
}

/// Outcome of [`train`].
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub model: MpsModel,
    pub initial_nll: f64,
    /// NLL of the returned model.
    pub final_nll: f64,
    /// NLL after each full sweep.
    pub sweep_nll: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Contracts `left (dl x 2 x chi)` with `right (chi x 2 x dr)` into a merged
/// tensor `dl x 2 x 2 x dr`, row-major.
pub fn merge_two_site(left: &[f64], right: &[f64], dl: usize, chi: usize, dr: usize) -> Vec<f64> {
    let l = DMatrix::from_row_slice(dl * 2, chi, left);
    let r = DMatrix::from_row_slice(chi, 2 * dr, right);
    row_major(&(l * r))
}

/// Splits a merged `dl x 2 x 2 x dr` tensor by SVD, keeping at most
/// `max_bond` singular values and discarding at most a `cutoff` fraction of
/// the squared weight. Returns `(left, right, chi)`; the singular values go
/// to the side named by `dir`. No renormalisation is applied.
pub fn split_two_site(
    merged: &[f64],
    dl: usize,
    dr: usize,
    max_bond: usize,
    cutoff: f64,
    dir: Direction,
) -> (Vec<f64>, Vec<f64>, usize) {
    let m = DMatrix::from_row_slice(dl * 2, 2 * dr, merged);
    let svd = m.svd(true, true);
    let u = svd.u.expect("left singular vectors requested");
    let vt = svd.v_t.expect("right singular vectors requested");
    let s = svd.singular_values;

    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let total: f64 = s.iter().map(|x| x * x).sum();
    let mut chi = order.len().min(max_bond).max(1);
    // Shrink while the tail weight stays within the cutoff.
    let mut tail = order[chi..].iter().map(|&i| s[i] * s[i]).sum::<f64>();
    while chi > 1 {
        let w = s[order[chi - 1]] * s[order[chi - 1]];
        if total > 0.0 && (tail + w) / total <= cutoff {
            tail += w;
            chi -= 1;
        } else {
            break;
        }
    }

    let rows_l = dl * 2;
    let cols_r = 2 * dr;
    let mut left = vec![0.0; rows_l * chi];
    let mut right = vec![0.0; chi * cols_r];
    for (j, &idx) in order[..chi].iter().enumerate() {
        let (sl, sr) = match dir {
            Direction::Right => (1.0, s[idx]),
            Direction::Left => (s[idx], 1.0),
        };
        for i in 0..rows_l {
            left[i * chi + j] = u[(i, idx)] * sl;
        }
        for c in 0..cols_r {
            right[j * cols_r + c] = vt[(idx, c)] * sr;
        }
    }
    (left, right, chi)
}

/// Analytic NLL gradient with respect to the merged tensor on one bond.
#[derive(Debug, Clone)]
pub struct TwoSiteGradient {
    /// The input model canonicalised at `bond`; every site other than `bond`
    /// and `bond + 1` is orthonormal, so `Z = |merged|^2`.
    pub model: MpsModel,
    pub bond: usize,
    pub left_dim: usize,
    pub right_dim: usize,
    /// `left_dim x 2 x 2 x right_dim`, row-major.
    pub merged: Vec<f64>,
    pub gradient: Vec<f64>,
}

/// Gradient of the NLL with respect to the merged tensor of sites `bond` and
/// `bond + 1`.
pub fn two_site_gradient(
    model: &MpsModel,
    data: &BitstringDataset,
    bond: usize,
) -> Result<TwoSiteGradient> {
    check_dims(model, data)?;
    if bond + 1 >= model.n_vars() {
        return Err(GeoError::invalid(format!(
            "bond {bond} needs sites {bond} and {}, model has {}",
            bond + 1,
            model.n_vars()
        )));
    }
    let mut m = model.clone();
    m.canonicalize(bond);
    let rows: Vec<&[u8]> = data.rows().iter().map(|r| r.as_slice()).collect();
    let w = data.weights();
    let bd = m.bond_dims().to_vec();
    let (dl, chi, dr) = (bd[bond], bd[bond + 1], bd[bond + 2]);
    let lenv: Vec<f64> = rows
        .iter()
        .flat_map(|r| left_env(&m, r, bond))
        .collect();
    let renv: Vec<f64> = rows
        .iter()
        .flat_map(|r| right_env(&m, r, bond + 2))
        .collect();
    let merged = merge_two_site(m.site_tensor(bond), m.site_tensor(bond + 1), dl, chi, dr);
    let gradient = bond_gradient(&merged, dl, dr, &lenv, &renv, &rows, &w, bond);
    Ok(TwoSiteGradient {
        model: m,
        bond,
        left_dim: dl,
        right_dim: dr,
        merged,
        gradient,
    })
}

fn left_env(m: &MpsModel, row: &[u8], upto: usize) -> Vec<f64> {
    let mut v = vec![1.0];
    for k in 0..upto {
        v = row_times_slice(&v, m.site_tensor(k), m.bond_dims()[k + 1], row[k] as usize);
    }
    v
}

fn right_env(m: &MpsModel, row: &[u8], from: usize) -> Vec<f64> {
    let mut v = vec![1.0];
    let bd = m.bond_dims();
    for k in (from..m.n_vars()).rev() {
        v = slice_times_col(m.site_tensor(k), bd[k], bd[k + 1], row[k] as usize, &v);
    }
    v
}

/// `d NLL / d M = 2 M / |M|^2 - sum_v w_v 2 (L_v (x) e_s1 (x) e_s2 (x) R_v) / Psi_v`.
///
/// Rows whose amplitude is exactly zero have an infinite gradient and are
/// skipped.
#[allow(clippy::too_many_arguments)]
fn bond_gradient(
    merged: &[f64],
    dl: usize,
    dr: usize,
    lenv: &[f64],
    renv: &[f64],
    rows: &[&[u8]],
    w: &[f64],
    k: usize,
) -> Vec<f64> {
    let z: f64 = merged.iter().map(|x| x * x).sum();
    let mut grad: Vec<f64> = merged.iter().map(|x| 2.0 * x / z).collect();
    let mut t = vec![0.0; dr];
    for (v, row) in rows.iter().enumerate() {
        let (s1, s2) = (row[k] as usize, row[k + 1] as usize);
        let l = &lenv[v * dl..(v + 1) * dl];
        let r = &renv[v * dr..(v + 1) * dr];
        t.iter_mut().for_each(|x| *x = 0.0);
        for (a, &la) in l.iter().enumerate() {
            let off = ((a * 2 + s1) * 2 + s2) * dr;
            for (tb, mb) in t.iter_mut().zip(&merged[off..off + dr]) {
                *tb += la * mb;
            }
        }
        let psi: f64 = t.iter().zip(r).map(|(a, b)| a * b).sum();
        if psi == 0.0 || !psi.is_finite() {
            continue;
        }
        let c = 2.0 * w[v] / psi;
        for (a, &la) in l.iter().enumerate() {
            let off = ((a * 2 + s1) * 2 + s2) * dr;
            let f = c * la;
            for (g, rb) in grad[off..off + dr].iter_mut().zip(r) {
                *g -= f * rb;
            }
        }
    }
    grad
}

fn check_dims(model: &MpsModel, data: &BitstringDataset) -> Result<()> {
    if model.n_vars() != data.n_vars() {
        return Err(GeoError::invalid(format!(
            "dataset has {} variables, model has {}",
            data.n_vars(),
            model.n_vars()
        )));
    }
    Ok(())
}

fn nll_or_inf(model: &MpsModel, data: &BitstringDataset) -> Result<f64> {
    match model.nll(data) {
        Ok(v) => Ok(v),
        Err(GeoError::OutOfSupport { .. }) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// Fits the model to the data by two-site NLL gradient sweeps.
///
/// Each sweep runs left-to-right and then right-to-left over all bonds. The
/// returned model is the best one seen (the input included), so its NLL
/// never exceeds the input's; a warning is recorded when the last sweep
/// ended worse than where training started.
pub fn train(model: &MpsModel, data: &BitstringDataset, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    check_dims(model, data)?;
    let initial_nll = nll_or_inf(model, data)?;
    let mut warnings = Vec::new();

    if model.n_vars() == 1 {
        // A single site has a closed-form maximum-likelihood fit.
        let w = data.weights();
        let mut amp = [0.0, 0.0];
        for (row, p) in data.rows().iter().zip(w) {
            amp[row.get(0) as usize] += p;
        }
        let mut m = MpsModel::from_tensors(vec![1, 1], vec![vec![amp[0].sqrt(), amp[1].sqrt()]])?;
        m.set_center(Some(0));
        let nll = nll_or_inf(&m, data)?;
        return Ok(TrainReport {
            model: m,
            initial_nll,
            final_nll: nll,
            sweep_nll: vec![nll; cfg.n_sweeps],
            warnings,
        });
    }

    let mut m = model.clone();
    m.normalize();
    let mut sweeper = Sweeper::new(&m, data, cfg);
    let mut best = (initial_nll, model.clone());
    let mut sweep_nll = Vec::with_capacity(cfg.n_sweeps);
    for _ in 0..cfg.n_sweeps {
        sweeper.sweep_right(&mut m);
        sweeper.sweep_left(&mut m);
        let nll = nll_or_inf(&m, data)?;
        sweep_nll.push(nll);
        if nll < best.0 {
            best = (nll, m.clone());
        }
    }
    let last = *sweep_nll.last().expect("at least one sweep");
    if !(last <= initial_nll + 1e-6) {
        let msg = format!("training ended at NLL {last} above the initial {initial_nll}; keeping the best model");
        log::warn!("{msg}");
        warnings.push(msg);
    }
    Ok(TrainReport {
        model: best.1,
        initial_nll,
        final_nll: best.0,
        sweep_nll,
        warnings,
    })
}

/// Per-row environment vectors for the distinct dataset rows.
///
/// `lenv[k]` holds, for every row, the contraction of sites `0..k` (length
/// `bond_dims[k]`); `renv[k]` the contraction of sites `k..n` (length
/// `bond_dims[k]`).
struct Sweeper<'a> {
    rows: Vec<&'a [u8]>,
    w: Vec<f64>,
    cfg: &'a TrainConfig,
    lenv: Vec<Vec<f64>>,
    renv: Vec<Vec<f64>>,
}

impl<'a> Sweeper<'a> {
    /// Expects `m` canonical at site 0.
    fn new(m: &MpsModel, data: &'a BitstringDataset, cfg: &'a TrainConfig) -> Self {
        let n = m.n_vars();
        let rows: Vec<&[u8]> = data.rows().iter().map(|r| r.as_slice()).collect();
        let u = rows.len();
        let mut lenv = vec![Vec::new(); n + 1];
        let mut renv = vec![Vec::new(); n + 1];
        lenv[0] = vec![1.0; u];
        renv[n] = vec![1.0; u];
        let mut s = Sweeper {
            rows,
            w: data.weights(),
            cfg,
            lenv,
            renv,
        };
        for k in (1..n).rev() {
            s.update_renv(m, k);
        }
        s
    }

    fn update_lenv(&mut self, m: &MpsModel, k: usize) {
        let bd = m.bond_dims();
        let (dl, dr) = (bd[k], bd[k + 1]);
        let t = m.site_tensor(k);
        let mut out = Vec::with_capacity(self.rows.len() * dr);
        for (v, row) in self.rows.iter().enumerate() {
            let l = &self.lenv[k][v * dl..(v + 1) * dl];
            out.extend(row_times_slice(l, t, dr, row[k] as usize));
        }
        self.lenv[k + 1] = out;
    }

    fn update_renv(&mut self, m: &MpsModel, k: usize) {
        let bd = m.bond_dims();
        let (dl, dr) = (bd[k], bd[k + 1]);
        let t = m.site_tensor(k);
        let mut out = Vec::with_capacity(self.rows.len() * dl);
        for (v, row) in self.rows.iter().enumerate() {
            let r = &self.renv[k + 1][v * dr..(v + 1) * dr];
            out.extend(slice_times_col(t, dl, dr, row[k] as usize, r));
        }
        self.renv[k] = out;
    }

    fn optimize_bond(&self, m: &mut MpsModel, k: usize, dir: Direction) {
        let bd = m.bond_dims().to_vec();
        let (dl, chi, dr) = (bd[k], bd[k + 1], bd[k + 2]);
        let mut merged = merge_two_site(m.site_tensor(k), m.site_tensor(k + 1), dl, chi, dr);
        for _ in 0..self.cfg.grad_steps_per_bond {
            let g = bond_gradient(
                &merged,
                dl,
                dr,
                &self.lenv[k],
                &self.renv[k + 2],
                &self.rows,
                &self.w,
                k,
            );
            for (x, gx) in merged.iter_mut().zip(&g) {
                *x -= self.cfg.learning_rate * gx;
            }
            scale_to_unit(&mut merged);
        }
        let cap = self.cfg.max_bond_dim;
        let (mut left, mut right, new_chi) =
            split_two_site(&merged, dl, dr, cap, self.cfg.svd_cutoff, dir);
        match dir {
            Direction::Right => scale_to_unit(&mut right),
            Direction::Left => scale_to_unit(&mut left),
        }
        let (bonds, tensors) = m.tensors_mut();
        bonds[k + 1] = new_chi;
        tensors[k] = left;
        tensors[k + 1] = right;
        m.set_center(Some(match dir {
            Direction::Right => k + 1,
            Direction::Left => k,
        }));
    }

    fn sweep_right(&mut self, m: &mut MpsModel) {
        for k in 0..m.n_vars() - 1 {
            self.optimize_bond(m, k, Direction::Right);
            self.update_lenv(m, k);
        }
    }

    fn sweep_left(&mut self, m: &mut MpsModel) {
        for k in (0..m.n_vars() - 1).rev() {
            self.optimize_bond(m, k, Direction::Left);
            self.update_renv(m, k + 1);
        }
    }
}

fn scale_to_unit(x: &mut [f64]) {
    let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n > 0.0 {
        x.iter_mut().for_each(|v| *v /= n);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::{enumerate_all, enumerate_weight, Bitstring};

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()))
    }

    #[test]
    fn split_merge_round_trip_without_truncation() {
        let m = MpsModel::new_random(6, 4, 5).unwrap();
        let bd = m.bond_dims();
        let merged = merge_two_site(m.site_tensor(2), m.site_tensor(3), bd[2], bd[3], bd[4]);
        for dir in [Direction::Left, Direction::Right] {
            let (l, r, chi) = split_two_site(&merged, bd[2], bd[4], 64, 0.0, dir);
            let back = merge_two_site(&l, &r, bd[2], chi, bd[4]);
            assert!(max_diff(&merged, &back) < 1e-10);
        }
    }

    #[test]
    fn split_respects_bond_cap() {
        let m = MpsModel::new_random(6, 8, 5).unwrap();
        let bd = m.bond_dims();
        let merged = merge_two_site(m.site_tensor(2), m.site_tensor(3), bd[2], bd[3], bd[4]);
        let (_, _, chi) = split_two_site(&merged, bd[2], bd[4], 2, 0.0, Direction::Right);
        assert_eq!(chi, 2);
    }

    #[test]
    fn single_mode_dataset_is_learned() {
        let x: Bitstring = "0101".parse().unwrap();
        let data = BitstringDataset::from_counts(4, [(x.clone(), 1000)]).unwrap();
        let cfg = TrainConfig {
            max_bond_dim: 2,
            n_sweeps: 5,
            ..TrainConfig::default()
        };
        let m0 = MpsModel::new_random(4, 2, 1).unwrap();
        let rep = train(&m0, &data, &cfg).unwrap();
        assert!(rep.final_nll < 0.01, "nll = {}", rep.final_nll);
        let s = rep.model.sample(1000, 3).unwrap();
        let hits = s.iter().filter(|y| **y == x).count();
        assert!(hits > 990);
    }

    #[test]
    fn uniform_dataset_reaches_entropy() {
        let data = BitstringDataset::new(6, enumerate_all(6)).unwrap();
        let m0 = MpsModel::new_random(6, 2, 4).unwrap();
        let rep = train(&m0, &data, &TrainConfig::default()).unwrap();
        let target = 6.0 * std::f64::consts::LN_2;
        assert!(rep.final_nll >= target - 1e-9);
        assert!(rep.final_nll - target < 0.05, "nll = {}", rep.final_nll);
    }

    #[test]
    fn cardinality_two_of_four_mass() {
        let valid = enumerate_weight(4, 2);
        let data = BitstringDataset::new(4, valid.clone()).unwrap();
        let m0 = MpsModel::new_random(4, 2, 9).unwrap();
        let rep = train(&m0, &data, &TrainConfig::default()).unwrap();
        let s = rep.model.sample(10000, 1).unwrap();
        let mass = s.iter().filter(|x| x.count_ones() == 2).count() as f64 / 1e4;
        assert!(mass > 0.95, "mass = {mass}");
    }

    #[test]
    fn training_never_returns_a_worse_model() {
        let rows = ["110", "011", "011"].iter().map(|s| s.parse().unwrap());
        let data = BitstringDataset::new(3, rows).unwrap();
        let m0 = MpsModel::new_random(3, 2, 2).unwrap();
        let cfg = TrainConfig {
            learning_rate: 50.0,
            ..TrainConfig::default()
        };
        let rep = train(&m0, &data, &cfg).unwrap();
        assert!(rep.final_nll <= rep.initial_nll + 1e-6);
        assert!((rep.model.nll(&data).unwrap() - rep.final_nll).abs() < 1e-12);
    }

    #[test]
    fn single_site_closed_form() {
        let rows = ["1", "1", "0", "1"].iter().map(|s| s.parse().unwrap());
        let data = BitstringDataset::new(1, rows).unwrap();
        let m0 = MpsModel::new_random(1, 1, 2).unwrap();
        let rep = train(&m0, &data, &TrainConfig::default()).unwrap();
        let p1 = rep.model.probability(&"1".parse().unwrap()).unwrap();
        assert!((p1 - 0.75).abs() < 1e-12);
    }
}
