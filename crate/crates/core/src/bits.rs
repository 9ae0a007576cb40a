//! Binary strings used as decision vectors, dataset rows and asset selections.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{GeoError, Result};

/// A fixed-length string over `{0, 1}`, stored one bit per byte.
///
/// Ordering is lexicographic with bit 0 most significant, which matches the
/// textual rendering (`"0101"` has bit 0 = 0).
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Bitstring(Vec<u8>);

/// An asset selection `x`: bit `i` is set when asset `i` is held.
pub type Selection = Bitstring;

impl Bitstring {
    pub fn zeros(n: usize) -> Self {
        Bitstring(vec![0; n])
    }

    pub fn from_bits(bits: Vec<u8>) -> Result<Self> {
        if let Some(b) = bits.iter().find(|&&b| b > 1) {
            return Err(GeoError::invalid(format!("bit value {b} is not 0 or 1")));
        }
        Ok(Bitstring(bits))
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        Bitstring(bits.iter().map(|&b| b as u8).collect())
    }

    /// Bitstring with ones at the given positions.
    pub fn from_indices(n: usize, ones: &[usize]) -> Result<Self> {
        let mut bits = vec![0u8; n];
        for &i in ones {
            if i >= n {
                return Err(GeoError::invalid(format!("index {i} out of range for length {n}")));
            }
            bits[i] = 1;
        }
        Ok(Bitstring(bits))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn get(&self, i: usize) -> u8 {
        self.0[i]
    }

    pub fn set(&mut self, i: usize, value: bool) {
        self.0[i] = value as u8;
    }

    /// Hamming weight.
    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|&&b| b == 1).count()
    }

    /// Positions of set bits, ascending.
    pub fn ones(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| (b == 1).then_some(i))
            .collect()
    }

    pub fn zeros_positions(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| (b == 0).then_some(i))
            .collect()
    }
}

impl fmt::Display for Bitstring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = self.0.iter().map(|&b| if b == 1 { '1' } else { '0' }).collect();
        f.write_str(&s)
    }
}

impl fmt::Debug for Bitstring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Bitstring({self})")
    }
}

impl FromStr for Bitstring {
    type Err = GeoError;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(GeoError::InvalidData(format!("unexpected character {other:?} in bitstring"))),
            })
            .collect::<Result<Vec<u8>>>()
            .map(Bitstring)
    }
}

impl Serialize for Bitstring {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Bitstring {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step.
        let num = (n - i) as u128;
        let den = (i + 1) as u128;
        let g = gcd(acc, den);
        let (a, d) = (acc / g, den / g);
        let num = num / d;
        acc = match a.checked_mul(num) {
            Some(v) => v,
            None => return u128::MAX,
        };
    }
    acc
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Every length-`n` bitstring with exactly `k` ones, in lexicographic order.
pub fn enumerate_weight(n: usize, k: usize) -> Vec<Bitstring> {
    fn fill(pos: usize, remaining: usize, bits: &mut Vec<u8>, out: &mut Vec<Bitstring>) {
        let n = bits.len();
        if remaining == 0 {
            out.push(Bitstring(bits.clone()));
            return;
        }
        if n - pos > remaining {
            fill(pos + 1, remaining, bits, out);
        }
        bits[pos] = 1;
        fill(pos + 1, remaining - 1, bits, out);
        bits[pos] = 0;
    }

    let mut out = Vec::new();
    if k <= n {
        fill(0, k, &mut vec![0u8; n], &mut out);
    }
    out
}

/// All `2^n` bitstrings of length `n` in lexicographic order.
pub fn enumerate_all(n: usize) -> Vec<Bitstring> {
    assert!(n < usize::BITS as usize - 1, "cannot enumerate 2^{n} strings");
    (0..(1usize << n))
        .map(|v| Bitstring((0..n).map(|i| ((v >> (n - 1 - i)) & 1) as u8).collect()))
        .collect()
}

/// Uniform draw of a weight-`k` string by a partial Fisher-Yates shuffle.
pub fn random_weight<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Bitstring {
    let mut positions: Vec<usize> = (0..n).collect();
    let mut bits = vec![0u8; n];
    for i in 0..k {
        let j = rng.random_range(i..n);
        positions.swap(i, j);
        bits[positions[i]] = 1;
    }
    Bitstring(bits)
}

/// Uniform draw over all `2^n` strings.
pub fn random_uniform<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Bitstring {
    Bitstring((0..n).map(|_| rng.random_bool(0.5) as u8).collect())
}
