//! The full motion model: pairwise encoder, TCN temporal regularizer,
//! conditioned decoder, ELBO training with temporal dropout, and the four
//! inference pipelines (registration, interpolation, simulation, transport).

mod checkpoint;
mod config;
mod eval;
mod features;
mod infer;
mod net;
mod train;

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use config::{AugmentConfig, ModelConfig, TrainConfig};
pub use eval::{evaluate_record, rotate_field, rotate_record, undeformed_row};
pub use features::{assemble_slots, subsequence_select, FeatureMatrix};
pub use infer::{
    decode_all_slots, decode_step, interpolate, posterior, register, simulate, transport,
    RegisterOutput,
};
pub use net::MotionModel;
pub use train::{
    sequence_gradients, sequence_loss, train, LossParts, TrainLogRow, TRAIN_LOG_HEADER,
};

use crate::autodiff::AutodiffError;
use crate::deform::DeformError;
use crate::gp::GpError;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("model configuration: {0}")]
    Config(String),
    #[error("sequence has {pairs} pairs but the latent length is {t_lat}")]
    TooManyPairs { pairs: usize, t_lat: usize },
    #[error("training diverged (non-finite loss) at epoch {epoch}, step {step}")]
    Divergence { epoch: usize, step: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("incompatible inputs: {0}")]
    Incompatible(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Deform(#[from] DeformError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error(transparent)]
    Synth(#[from] crate::synth::SynthError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
