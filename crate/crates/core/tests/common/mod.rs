//! Helpers shared by the integration tests.
#![allow(dead_code)]

use ndtt::autodiff::{softplus_inverse, ParameterStore, Tensor};
use ndtt::train::probe_parameters;
use ndtt::Model;

/// Store with every probed weight set to zero and every scale to 1.
pub fn zeroed(model: &Model, seed: u64) -> ParameterStore {
    let taus: Vec<String> = model.layout().taus.values().map(|a| a.to_string()).collect();
    let mut store = ParameterStore::new(seed);
    for (name, t) in probe_parameters(model, seed).expect("probe") {
        let v = if taus.contains(&name) {
            Tensor::scalar(softplus_inverse(1.0))
        } else {
            Tensor::zeros(t.rows(), t.cols())
        };
        store.insert(&name, v).expect("valid name");
    }
    store
}

/// Store holding the probed initialization of a model.
pub fn probed(model: &Model, seed: u64) -> ParameterStore {
    let mut store = ParameterStore::new(seed);
    store.absorb(probe_parameters(model, seed).expect("probe"));
    store
}

pub fn column(rows: &[f64]) -> Tensor {
    Tensor::column(rows.to_vec())
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}
