//! Adam with bias-corrected moments.

use std::collections::BTreeMap;

use crate::graph::Gradients;
use crate::store::ParameterStore;
use crate::tensor::Tensor;

/// First and second moment estimates of one parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub first: Tensor,
    pub second: Tensor,
    /// Number of updates this parameter has received.
    pub steps: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Number of calls to [`Adam::step`].
    pub step_count: u64,
    pub moments: BTreeMap<String, Moments>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Adam { learning_rate, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, step_count: 0, moments: BTreeMap::new() }
    }

    /// Applies one update from `grads` and clears them. Names without a
    /// stored value (including the frozen zero matrix) are skipped.
    pub fn step(&mut self, store: &mut ParameterStore, grads: &mut Gradients) {
        self.step_count += 1;
        for (name, g) in std::mem::take(grads) {
            if ParameterStore::is_frozen(&name) {
                continue;
            }
            let Some(value) = store.get_mut(&name) else { continue };
            if value.shape() != g.shape() {
                continue;
            }
            let (rows, cols) = value.shape();
            let m = self.moments.entry(name).or_insert_with(|| Moments {
                first: Tensor::zeros(rows, cols),
                second: Tensor::zeros(rows, cols),
                steps: 0,
            });
            m.steps += 1;
            let t = m.steps as i32;
            let c1 = 1.0 - self.beta1.powi(t);
            let c2 = 1.0 - self.beta2.powi(t);
            for (((p, gi), m1), m2) in
                value.data_mut().iter_mut().zip(g.data()).zip(m.first.data_mut()).zip(m.second.data_mut())
            {
                *m1 = self.beta1 * *m1 + (1.0 - self.beta1) * gi;
                *m2 = self.beta2 * *m2 + (1.0 - self.beta2) * gi * gi;
                let mhat = *m1 / c1;
                let vhat = *m2 / c2;
                *p -= self.learning_rate * mhat / (vhat.sqrt() + self.epsilon);
            }
        }
    }
}
