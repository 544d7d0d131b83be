//! Differentiable numeric substrate for the neural Datalog runtime.
//!
//! A [`Graph`] is built fresh for every sequence, evaluated eagerly, and
//! differentiated in reverse. Trainable values live in a [`ParameterStore`]
//! keyed by name; [`Adam`] updates the store from accumulated gradients.

pub mod adam;
pub mod graph;
pub mod store;
pub mod tensor;

pub use adam::{Adam, Moments};
pub use graph::{softplus_scaled, Gradients, Graph, Var};
pub use store::{
    init_parameter, pool_exponent, softplus_inverse, ParamRole, ParamSpec, ParameterStore, FROZEN_ZERO,
};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch { op: &'static str, left: (usize, usize), right: (usize, usize) },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("non-finite gradient for parameter `{name}`")]
    NonFiniteGradient { name: String },
    #[error("backward needs a 1x1 loss, got {0:?}")]
    NonScalarLoss((usize, usize)),
    #[error("parameter `{name}` has shape {existing:?} but {requested:?} was requested")]
    ShapeConflict { name: String, existing: (usize, usize), requested: (usize, usize) },
    #[error("the zero matrix `0` is frozen and cannot be stored")]
    FrozenName,
}

/// Adds `src` into `dst`, name by name.
pub fn accumulate(dst: &mut Gradients, src: Gradients) {
    for (name, g) in src {
        match dst.get_mut(&name) {
            Some(existing) if existing.shape() == g.shape() => existing.add_assign(&g),
            _ => {
                dst.insert(name, g);
            }
        }
    }
}
