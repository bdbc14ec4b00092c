//! Probabilistic temporal motion model over image sequences.
//!
//! A Gaussian-process-prior conditional variational autoencoder encodes a
//! whole deformation sequence into a low-dimensional latent motion matrix and
//! decodes it back into diffeomorphic deformation fields, enabling
//! registration, temporal interpolation, motion simulation, and motion
//! transport between subjects.

pub mod autodiff;
pub mod baselines;
pub mod deform;
pub mod gp;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod synth;

pub use autodiff::Tensor;

// The guide's code blocks compile and run with `cargo test --doc`, keeping
// the book in sync with the library.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/motion-model.md")]
    mod motion_model {}
    #[doc = include_str!("../../../book/src/gp-prior.md")]
    mod gp_prior {}
    #[doc = include_str!("../../../book/src/deformations.md")]
    mod deformations {}
    #[doc = include_str!("../../../book/src/autodiff.md")]
    mod autodiff_chapter {}
    #[doc = include_str!("../../../book/src/synthetic-data.md")]
    mod synthetic_data {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
}
