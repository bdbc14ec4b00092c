//! Model and training configuration.

use serde::{Deserialize, Serialize};

use crate::autodiff::AdamConfig;
use crate::deform::SmoothingSpec;

use super::ModelError;

/// Architecture and loss hyper-parameters.
///
/// Defaults are desk scale: 32×32 images, 8 latent dimensions, 16 latent time
/// steps. Paper-scale values (128×128, D=32, T=35, dilations up to 8) remain
/// valid configurations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Latent dimensions D.
    pub d: usize,
    /// Latent sequence length T.
    pub t_lat: usize,
    pub height: usize,
    pub width: usize,
    /// Encoder feature maps; strides are (2,2,2,1).
    pub enc_channels: [usize; 4],
    /// Decoder feature maps: three deconvolutions and one convolution, then a
    /// two-channel velocity head.
    pub dec_channels: [usize; 4],
    /// Dilations of the TCN blocks; each must satisfy 2·dilation < t_lat.
    pub tcn_dilations: Vec<usize>,
    /// Channel-dropout rate inside TCN blocks during training.
    pub tcn_dropout: f64,
    /// Likelihood variance σ_L of the Gaussian intensity model.
    pub sigma_l: f64,
    /// Velocity scale applied after the final tanh, in pixels.
    pub v_max: f64,
    /// Scaling-and-squaring iterations.
    pub exp_steps: usize,
    pub smoothing: SmoothingSpec,
    /// Negative slope of the leaky rectifiers.
    pub leaky_slope: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d: 8,
            t_lat: 16,
            height: 32,
            width: 32,
            enc_channels: [8, 16, 16, 4],
            dec_channels: [16, 16, 16, 8],
            tcn_dilations: vec![1, 2, 4, 7],
            tcn_dropout: 0.1,
            sigma_l: 0.0045,
            v_max: 5.0,
            exp_steps: 6,
            smoothing: SmoothingSpec::default(),
            leaky_slope: 0.2,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.d < 1 {
            return Err(ModelError::Config("d must be >= 1".into()));
        }
        if self.t_lat < 2 {
            return Err(ModelError::Config("t_lat must be >= 2".into()));
        }
        if self.height % 8 != 0 || self.width % 8 != 0 || self.height < 8 || self.width < 8 {
            return Err(ModelError::Config(format!(
                "image extents {}x{} must be positive multiples of 8 (three 2x down-samplings)",
                self.height, self.width
            )));
        }
        for &d in &self.tcn_dilations {
            if 2 * d >= self.t_lat {
                return Err(ModelError::Config(format!(
                    "TCN dilation {d}: receptive field exceeds sequence (2*{d} >= {})",
                    self.t_lat
                )));
            }
        }
        if !(self.sigma_l > 0.0) {
            return Err(ModelError::Config("sigma_l must be positive".into()));
        }
        if self.exp_steps < 1 {
            return Err(ModelError::Config("exp_steps must be >= 1".into()));
        }
        Ok(())
    }

    /// Feature dimension 2D of the per-pair vectors γ_t.
    pub fn gamma_dim(&self) -> usize {
        2 * self.d
    }

    /// Spatial extents after the three stride-2 encoder layers.
    pub fn coarse_extents(&self) -> (usize, usize) {
        (self.height / 8, self.width / 8)
    }
}

/// Training-time augmentation ranges; mild values that keep labels valid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub enabled: bool,
    pub max_shift_px: f64,
    pub max_rot_deg: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    pub mirror_prob: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            enabled: true,
            max_shift_px: 4.0,
            max_rot_deg: 15.0,
            scale_min: 0.9,
            scale_max: 1.1,
            mirror_prob: 0.5,
        }
    }
}

/// Optimization loop settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub adam: AdamConfig,
    /// Temporal-dropout probability δ.
    pub td_rate: f64,
    /// Maximum decoded frames per step (random sub-sequence training);
    /// `None` trains on full sequences.
    pub max_frames: Option<usize>,
    pub augment: AugmentConfig,
    /// Train with the identity kernel (temporally independent prior).
    pub no_gp: bool,
    /// Validate activations and gradients for NaN/Inf every step.
    pub debug_checks: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            adam: AdamConfig::default(),
            td_rate: 0.5,
            max_frames: None,
            augment: AugmentConfig::default(),
            no_gp: false,
            debug_checks: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(0.0..1.0).contains(&self.td_rate) {
            return Err(ModelError::Config(format!("td_rate {} outside [0,1)", self.td_rate)));
        }
        if let Some(t) = self.max_frames {
            if t < 2 {
                return Err(ModelError::Config("max_frames must be >= 2".into()));
            }
        }
        if !(self.adam.lr > 0.0) {
            return Err(ModelError::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}
