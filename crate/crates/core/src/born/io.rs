use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::mps::MpsModel;
use super::TrainConfig;
use crate::error::{GeoError, Result};

const MAGIC: &[u8; 8] = b"GEOMPS\0\0";
const FORMAT_VERSION: u32 = 1;

/// A model together with the configuration it was trained with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedModel {
    pub format_version: u32,
    pub model: MpsModel,
    pub train_config: Option<TrainConfig>,
}

impl SavedModel {
    pub fn new(model: MpsModel, train_config: Option<TrainConfig>) -> Self {
        SavedModel {
            format_version: FORMAT_VERSION,
            model,
            train_config,
        }
    }
}

pub fn write_json<W: Write>(saved: &SavedModel, w: W) -> Result<()> {
    serde_json::to_writer(w, saved)?;
    Ok(())
}

pub fn read_json<R: Read>(r: R) -> Result<SavedModel> {
    let saved: SavedModel = serde_json::from_reader(r)?;
    if saved.format_version != FORMAT_VERSION {
        return Err(GeoError::InvalidData(format!(
            "unsupported model format version {}",
            saved.format_version
        )));
    }
    let m = &saved.model;
    // Re-validate shapes, which serde alone does not check.
    let tensors = (0..m.n_vars()).map(|k| m.site_tensor(k).to_vec()).collect();
    let mut checked = MpsModel::from_tensors(m.bond_dims().to_vec(), tensors)?;
    checked.set_center(m.canonical_center());
    Ok(SavedModel {
        model: checked,
        ..saved
    })
}

/// Little-endian binary container; round trips are bit-exact.
pub fn write_binary<W: Write>(saved: &SavedModel, mut w: W) -> Result<()> {
    let m = &saved.model;
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(m.n_vars() as u64).to_le_bytes())?;
    for &d in m.bond_dims() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    let center = m.canonical_center().map_or(u64::MAX, |c| c as u64);
    w.write_all(&center.to_le_bytes())?;
    match &saved.train_config {
        None => w.write_all(&[0])?,
        Some(c) => {
            w.write_all(&[1])?;
            w.write_all(&(c.max_bond_dim as u64).to_le_bytes())?;
            w.write_all(&c.svd_cutoff.to_le_bytes())?;
            w.write_all(&c.learning_rate.to_le_bytes())?;
            w.write_all(&(c.n_sweeps as u64).to_le_bytes())?;
            w.write_all(&(c.grad_steps_per_bond as u64).to_le_bytes())?;
            w.write_all(&c.rng_seed.to_le_bytes())?;
        }
    }
    for k in 0..m.n_vars() {
        for v in m.site_tensor(k) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_binary<R: Read>(mut r: R) -> Result<SavedModel> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(GeoError::InvalidData("not an MPS model file".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != FORMAT_VERSION {
        return Err(GeoError::InvalidData(format!(
            "unsupported model format version {version}"
        )));
    }
    let n_vars = read_u64(&mut r)? as usize;
    if n_vars == 0 || n_vars > 1 << 20 {
        return Err(GeoError::InvalidData(format!("implausible site count {n_vars}")));
    }
    let bond_dims = (0..=n_vars)
        .map(|_| read_u64(&mut r).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let center = match read_u64(&mut r)? {
        u64::MAX => None,
        c if (c as usize) < n_vars => Some(c as usize),
        c => return Err(GeoError::InvalidData(format!("canonical center {c} out of range"))),
    };
    let mut flag = [0u8; 1];
    r.read_exact(&mut flag)?;
    let train_config = match flag[0] {
        0 => None,
        1 => Some(TrainConfig {
            max_bond_dim: read_u64(&mut r)? as usize,
            svd_cutoff: read_f64(&mut r)?,
            learning_rate: read_f64(&mut r)?,
            n_sweeps: read_u64(&mut r)? as usize,
            grad_steps_per_bond: read_u64(&mut r)? as usize,
            rng_seed: read_u64(&mut r)?,
        }),
        f => return Err(GeoError::InvalidData(format!("bad config flag {f}"))),
    };
    let mut tensors = Vec::with_capacity(n_vars);
    for k in 0..n_vars {
        let len = bond_dims[k]
            .checked_mul(2 * bond_dims[k + 1])
            .filter(|&l| l <= 1 << 28)
            .ok_or_else(|| GeoError::InvalidData(format!("site {k} is too large")))?;
        tensors.push((0..len).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?);
    }
    let mut model = MpsModel::from_tensors(bond_dims, tensors)?;
    model.set_center(center);
    Ok(SavedModel {
        format_version: version,
        model,
        train_config,
    })
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
