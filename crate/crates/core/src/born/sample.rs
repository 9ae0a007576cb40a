use rand::Rng;

use super::mps::{row_times_slice, MpsModel};
use crate::bits::Bitstring;
use crate::error::{GeoError, Result};
use crate::rng::rng_from_seed;

impl MpsModel {
    /// Draws `n_samples` i.i.d. strings by exact sequential conditional
    /// sampling from a copy canonicalised at site 0.
    pub fn sample(&self, n_samples: usize, seed: u64) -> Result<Vec<Bitstring>> {
        if n_samples == 0 {
            return Err(GeoError::invalid("n_samples must be positive"));
        }
        let owned;
        let m = if self.canonical_center() == Some(0) {
            self
        } else {
            let mut c = self.clone();
            c.canonicalize(0);
            owned = c;
            &owned
        };
        let mut rng = rng_from_seed(seed);
        let n = m.n_vars();
        let bd = m.bond_dims();
        let mut out = Vec::with_capacity(n_samples);
        for _ in 0..n_samples {
            let mut bits = Vec::with_capacity(n);
            let mut v = vec![1.0];
            for k in 0..n {
                let t = m.site_tensor(k);
                let u0 = row_times_slice(&v, t, bd[k + 1], 0);
                let u1 = row_times_slice(&v, t, bd[k + 1], 1);
                // Sites right of k are right-orthonormal, so the conditional
                // weight of each branch is the squared norm of the prefix.
                let p0 = u0.iter().map(|x| x * x).sum::<f64>().max(0.0);
                let p1 = u1.iter().map(|x| x * x).sum::<f64>().max(0.0);
                let total = p0 + p1;
                if !(total > 0.0) || !total.is_finite() {
                    return Err(GeoError::NumericalFailure {
                        iterations: k,
                        residual: total,
                        detail: "conditional distribution vanished during sampling".into(),
                    });
                }
                let (bit, u, p) = if rng.random::<f64>() * total < p0 {
                    (0u8, u0, p0)
                } else {
                    (1u8, u1, p1)
                };
                let norm = p.sqrt();
                v = u.into_iter().map(|x| x / norm).collect();
                bits.push(bit);
            }
            out.push(Bitstring::from_bits(bits).expect("bits are 0 or 1"));
        }
        Ok(out)
    }
}
