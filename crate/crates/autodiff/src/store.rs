//! Named parameter storage with order-independent seeded initialization.
//!
//! Every parameter is initialized from a random stream derived from
//! `(seed, name)`, so the order in which names are first requested never
//! changes their values.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::tensor::Tensor;
use crate::AutodiffError;

/// The reserved name of the frozen all-zero matrix.
pub const FROZEN_ZERO: &str = "0";

/// What a parameter is for, which determines its initial value.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamRole {
    /// A weight matrix or bias column, Glorot-uniform initialized.
    Weight,
    /// Raw `b` of a pooling exponent `β = 1 + b²`; starts at 0.
    PoolExponent,
    /// Raw value of a softplus scale `τ = softplus(raw)`; starts at `τ = 1`.
    SoftplusScale,
}

/// Shape and role of a parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamSpec {
    pub rows: usize,
    pub cols: usize,
    pub role: ParamRole,
}

impl ParamSpec {
    pub fn weight(rows: usize, cols: usize) -> Self {
        ParamSpec { rows, cols, role: ParamRole::Weight }
    }

    pub fn pool_exponent() -> Self {
        ParamSpec { rows: 1, cols: 1, role: ParamRole::PoolExponent }
    }

    pub fn softplus_scale() -> Self {
        ParamSpec { rows: 1, cols: 1, role: ParamRole::SoftplusScale }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

/// Raw value whose softplus is `tau`.
pub fn softplus_inverse(tau: f64) -> f64 {
    tau + (-(-tau).exp_m1()).ln()
}

/// Pooling exponent `1 + b²` for raw value `b`.
pub fn pool_exponent(raw: f64) -> f64 {
    1.0 + raw * raw
}

fn stream_for(seed: u64, name: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest[..32]);
    ChaCha8Rng::from_seed(key)
}

/// Deterministic initial value of parameter `name`.
pub fn init_parameter(seed: u64, name: &str, spec: ParamSpec) -> Tensor {
    match spec.role {
        ParamRole::PoolExponent => Tensor::zeros(spec.rows, spec.cols),
        ParamRole::SoftplusScale => Tensor::filled(spec.rows, spec.cols, softplus_inverse(1.0)),
        ParamRole::Weight => {
            let n = spec.rows * spec.cols;
            if n == 0 {
                return Tensor::zeros(spec.rows, spec.cols);
            }
            let bound = (6.0 / (spec.rows + spec.cols) as f64).sqrt();
            let mut rng = stream_for(seed, name);
            let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
            Tensor::new(spec.rows, spec.cols, data)
        }
    }
}

/// Mapping from parameter name to its current value.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterStore {
    seed: u64,
    values: BTreeMap<String, Tensor>,
}

impl ParameterStore {
    pub fn new(seed: u64) -> Self {
        ParameterStore { seed, values: BTreeMap::new() }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_frozen(name: &str) -> bool {
        name == FROZEN_ZERO
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.values.get(name)
    }

    /// Returns the stored value, initializing it on first use.
    pub fn get_or_init(&mut self, name: &str, spec: ParamSpec) -> Result<&Tensor, AutodiffError> {
        if Self::is_frozen(name) {
            return Err(AutodiffError::FrozenName);
        }
        if let Some(existing) = self.values.get(name) {
            if existing.shape() != spec.shape() {
                return Err(AutodiffError::ShapeConflict {
                    name: name.to_string(),
                    existing: existing.shape(),
                    requested: spec.shape(),
                });
            }
        } else {
            self.values.insert(name.to_string(), init_parameter(self.seed, name, spec));
        }
        Ok(&self.values[name])
    }

    /// Inserts or replaces a value. Frozen names are rejected.
    pub fn insert(&mut self, name: &str, value: Tensor) -> Result<(), AutodiffError> {
        if Self::is_frozen(name) {
            return Err(AutodiffError::FrozenName);
        }
        self.values.insert(name.to_string(), value);
        Ok(())
    }

    /// Adds parameters created elsewhere; names already present keep their
    /// current values.
    pub fn absorb(&mut self, fresh: impl IntoIterator<Item = (String, Tensor)>) {
        for (name, value) in fresh {
            self.values.entry(name).or_insert(value);
        }
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.values.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.values.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total number of trainable scalars.
    pub fn scalar_count(&self) -> usize {
        self.values.values().map(Tensor::len).sum()
    }
}
