//! Dense `f64` tensors, a reverse-mode autodiff tape, parameter storage and
//! the seeded random source shared by every stochastic routine.

mod array;
mod gradcheck;
mod graph;
mod params;
mod rng;

pub use array::{argmax, Tensor};
pub use gradcheck::{grad_check, grad_check_sampled, GradCheckReport};
pub use graph::{sigmoid_scalar, softmax_rows, ElementwiseGrad, Graph, NodeId};
pub use params::{Adam, AdamConfig, ParamId, ParamStore};
pub use rng::{gumbel_from_uniform, sample_gumbel, xavier_init, Rng, GUMBEL_EPS};

#[derive(Debug, thiserror::Error)]
pub enum TensorError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("bad shape: {0}")]
    BadShape(String),
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error("non-finite value produced by {0}")]
    NumericalOverflow(String),
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("function is not deterministic: {0} vs {1}")]
    NondeterministicFunction(f64, f64),
    #[error("duplicate parameter name {0}")]
    DuplicateParam(String),
    #[error("missing parameter {0}")]
    MissingParam(String),
}
