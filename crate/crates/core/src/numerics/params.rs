use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TegError};
use crate::numerics::Tensor;

/// How a parameter was initialized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Uniform in ±sqrt(6 / (fan_in + fan_out)); needs a 2-D shape.
    GlorotUniform,
    Zeros,
    /// Value supplied by the caller or loaded from a checkpoint.
    Given,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub init: Init,
}

/// Named learnable tensors, kept in creation order.
///
/// Initial values are drawn from a private stream seeded once, so the same
/// sequence of `add` calls always produces the same values.
#[derive(Debug, Clone)]
pub struct ParamStore {
    entries: Vec<Param>,
    index: BTreeMap<String, usize>,
    seed: u64,
    rng: ChaCha8Rng,
}

impl PartialEq for ParamStore {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        Self {
            entries: Vec::new(),
            index: BTreeMap::new(),
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn add(&mut self, name: &str, shape: &[usize], init: Init) -> Result<&Tensor> {
        let value = match init {
            Init::Zeros | Init::Given => Tensor::zeros(shape),
            Init::GlorotUniform => {
                if shape.len() != 2 {
                    return Err(TegError::DimensionMismatch(format!(
                        "glorot init needs a 2-D shape, got {shape:?} for {name}"
                    )));
                }
                let limit = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
                let data = (0..shape[0] * shape[1])
                    .map(|_| self.rng.random_range(-limit..limit))
                    .collect();
                Tensor::new(shape, data)?
            }
        };
        self.insert(name, value, init)
    }

    pub fn add_given(&mut self, name: &str, value: Tensor) -> Result<&Tensor> {
        self.insert(name, value, Init::Given)
    }

    fn insert(&mut self, name: &str, value: Tensor, init: Init) -> Result<&Tensor> {
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(TegError::InvalidConfig(format!(
                "bad parameter name {name:?}"
            )));
        }
        if self.index.contains_key(name) {
            return Err(TegError::InvalidConfig(format!(
                "duplicate parameter {name}"
            )));
        }
        self.index.insert(name.to_string(), self.entries.len());
        self.entries.push(Param {
            name: name.to_string(),
            value,
            init,
        });
        Ok(&self.entries.last().unwrap().value)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.index
            .get(name)
            .map(|&i| &self.entries[i].value)
            .ok_or_else(|| TegError::UnknownParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        match self.index.get(name) {
            Some(&i) => Ok(&mut self.entries[i].value),
            None => Err(TegError::UnknownParam(name.to_string())),
        }
    }

    /// Replaces a value; the shape is fixed at creation.
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let slot = self.get_mut(name)?;
        if slot.shape() != value.shape() {
            return Err(TegError::ShapeMismatch {
                op: "param_set",
                lhs: slot.shape().to_vec(),
                rhs: value.shape().to_vec(),
            });
        }
        *slot = value;
        Ok(())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.entries.iter()
    }

    pub(crate) fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.entries.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|p| p.name.as_str())
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|p| p.value.len()).sum()
    }

    /// Order-sensitive digest of every value's bit pattern.
    pub fn checksum(&self) -> u64 {
        // FNV-1a over names and raw bits
        let mut h: u64 = 0xcbf29ce484222325;
        let mut feed = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        for p in &self.entries {
            feed(p.name.as_bytes());
            for v in p.value.data() {
                feed(&v.to_bits().to_le_bytes());
            }
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn glorot_within_limit_and_deterministic() {
        let mut a = ParamStore::new(3);
        let mut b = ParamStore::new(3);
        a.add("w", &[10, 6], Init::GlorotUniform).unwrap();
        b.add("w", &[10, 6], Init::GlorotUniform).unwrap();
        assert_eq!(a, b);
        let limit = (6.0f64 / 16.0).sqrt();
        assert!(a.get("w").unwrap().data().iter().all(|v| v.abs() <= limit));
    }

    #[test]
    fn names_unique_and_shapes_fixed() {
        let mut s = ParamStore::new(0);
        s.add("b", &[1, 4], Init::Zeros).unwrap();
        assert!(s.add("b", &[1, 4], Init::Zeros).is_err());
        assert!(s.set("b", Tensor::zeros(&[4, 1])).is_err());
        assert!(s.set("b", Tensor::full(&[1, 4], 2.0)).is_ok());
        assert!(matches!(s.get("nope"), Err(TegError::UnknownParam(_))));
    }

    #[test]
    fn checksum_tracks_values() {
        let mut s = ParamStore::new(0);
        s.add("w", &[2, 2], Init::GlorotUniform).unwrap();
        let before = s.checksum();
        s.get_mut("w").unwrap().data_mut()[0] += 1e-12;
        assert_ne!(before, s.checksum());
    }
}
