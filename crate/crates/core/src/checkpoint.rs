//! Checkpoint JSON: parameter values plus optimizer state, round-tripping
//! every float bit-exactly.

use std::collections::BTreeMap;

use ndtt_autodiff::{Adam, Moments, ParameterStore, Tensor};
use ndtt_logic::TimeMode;
use serde::{Deserialize, Serialize};

use crate::error::{NdttError, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorRecord {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentRecord {
    pub first: TensorRecord,
    pub second: TensorRecord,
    pub steps: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerRecord {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step_count: u64,
    pub moments: BTreeMap<String, MomentRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub program_hash: String,
    /// `continuous` or `discrete`.
    pub mode: String,
    pub rng_seed: u64,
    pub step_count: u64,
    pub epoch: usize,
    pub parameters: BTreeMap<String, TensorRecord>,
    pub optimizer: OptimizerRecord,
}

fn record(t: &Tensor) -> TensorRecord {
    TensorRecord { rows: t.rows(), cols: t.cols(), data: t.data().to_vec() }
}

fn tensor(name: &str, r: &TensorRecord) -> Result<Tensor> {
    if r.rows.checked_mul(r.cols) != Some(r.data.len()) {
        return Err(NdttError::Checkpoint(format!(
            "`{name}` declares shape {}x{} but holds {} values",
            r.rows,
            r.cols,
            r.data.len()
        )));
    }
    if r.data.iter().any(|x| !x.is_finite()) {
        return Err(NdttError::Checkpoint(format!("`{name}` holds a non-finite value")));
    }
    Ok(Tensor::new(r.rows, r.cols, r.data.clone()))
}

pub fn mode_name(mode: TimeMode) -> &'static str {
    match mode {
        TimeMode::Continuous => "continuous",
        TimeMode::Discrete => "discrete",
    }
}

pub fn parse_mode(s: &str) -> Option<TimeMode> {
    match s {
        "continuous" => Some(TimeMode::Continuous),
        "discrete" => Some(TimeMode::Discrete),
        _ => None,
    }
}

impl Checkpoint {
    pub fn new(store: &ParameterStore, adam: &Adam, program_hash: &str, mode: TimeMode, epoch: usize) -> Self {
        Checkpoint {
            format_version: FORMAT_VERSION,
            program_hash: program_hash.to_string(),
            mode: mode_name(mode).to_string(),
            rng_seed: store.seed(),
            step_count: adam.step_count,
            epoch,
            parameters: store.iter().map(|(n, t)| (n.to_string(), record(t))).collect(),
            optimizer: OptimizerRecord {
                learning_rate: adam.learning_rate,
                beta1: adam.beta1,
                beta2: adam.beta2,
                epsilon: adam.epsilon,
                step_count: adam.step_count,
                moments: adam
                    .moments
                    .iter()
                    .map(|(n, m)| {
                        (n.clone(), MomentRecord { first: record(&m.first), second: record(&m.second), steps: m.steps })
                    })
                    .collect(),
            },
        }
    }

    pub fn store(&self) -> Result<ParameterStore> {
        let mut s = ParameterStore::new(self.rng_seed);
        for (name, r) in &self.parameters {
            s.insert(name, tensor(name, r)?)
                .map_err(|e| NdttError::Checkpoint(format!("parameter `{name}`: {e}")))?;
        }
        Ok(s)
    }

    pub fn optimizer(&self) -> Result<Adam> {
        let o = &self.optimizer;
        let mut adam = Adam::new(o.learning_rate);
        adam.beta1 = o.beta1;
        adam.beta2 = o.beta2;
        adam.epsilon = o.epsilon;
        adam.step_count = o.step_count;
        for (name, m) in &o.moments {
            let first = tensor(name, &m.first)?;
            let second = tensor(name, &m.second)?;
            if first.shape() != second.shape() {
                return Err(NdttError::Checkpoint(format!("moments of `{name}` disagree in shape")));
            }
            adam.moments.insert(name.clone(), Moments { first, second, steps: m.steps });
        }
        Ok(adam)
    }

    pub fn time_mode(&self) -> Result<TimeMode> {
        parse_mode(&self.mode).ok_or_else(|| NdttError::Checkpoint(format!("unknown mode `{}`", self.mode)))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoints serialize")
    }
}

/// Parses and validates checkpoint text.
pub fn parse_checkpoint(text: &str) -> Result<Checkpoint> {
    let c: Checkpoint = serde_json::from_str(text).map_err(|e| NdttError::Checkpoint(e.to_string()))?;
    if c.format_version != FORMAT_VERSION {
        return Err(NdttError::Checkpoint(format!("unsupported format version {}", c.format_version)));
    }
    c.time_mode()?;
    c.store()?;
    c.optimizer()?;
    Ok(c)
}
