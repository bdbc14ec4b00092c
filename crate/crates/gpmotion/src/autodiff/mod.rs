//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! The engine is deliberately small: a define-by-run [`Tape`] records the
//! primitives the motion model needs (2-D and dilated 1-D convolutions,
//! transposed convolutions, affine maps, pointwise activations, bilinear
//! sampling, Gaussian smoothing, and a handful of structural ops), plus an
//! escape hatch ([`CustomOp`]) for primitives whose adjoints live in other
//! modules. Everything runs in `f64`, which keeps finite-difference audits
//! meaningful at 1e-4 tolerances.
//!
//! Tape construction and [`Tape::backward`] are single-threaded per model
//! instance; tensors without a tape handle are plain immutable values and can
//! be shared freely across threads.

mod gradcheck;
mod ops;
mod optim;
mod tape;
mod tensor;

pub use gradcheck::{check_all, check_at, rel_err, GradCheckReport, DEFAULT_STEP};
pub use ops::Padding;
pub use optim::{adam_step, AdamConfig, Parameter};
pub use tape::{CustomOp, Gradients, Node, Tape};
pub use tensor::Tensor;

#[allow(unused_imports)]
pub(crate) use ops::{bilinear_forward, linear_forward, smooth_axis};

/// Errors raised by the differentiation engine.
#[derive(Debug, thiserror::Error)]
pub enum AutodiffError {
    #[error("shape {shape:?} implies {expected} elements, data has {got}")]
    DataLength { shape: Vec<usize>, expected: usize, got: usize },
    #[error("{context}: incompatible shapes {a:?} and {b:?}")]
    ShapeMismatch { context: &'static str, a: Vec<usize>, b: Vec<usize> },
    #[error("non-finite value encountered in {context}")]
    NonFinite { context: &'static str },
    #[error("{0}")]
    Config(String),
    #[error("loss must be scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
}
