//! Block Cholesky factor of the posterior covariance and reparameterized
//! sampling of the motion matrix.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{GpError, TemporalKernel};

/// Posterior parameters of the latent motion matrix: mean vector `μ` laid out
/// dimension-major (segment `i` of length `T` is the temporal trajectory of
/// latent dimension `i`) and one variance multiplier per dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorParams {
    pub mu: Vec<f64>,
    pub s: Vec<f64>,
}

impl PosteriorParams {
    pub fn new(mu: Vec<f64>, s: Vec<f64>) -> Result<Self, GpError> {
        if !s.is_empty() && mu.len() % s.len() != 0 {
            return Err(GpError::Dimension {
                context: format!("mu length {} not divisible by D={}", mu.len(), s.len()),
            });
        }
        for (i, &v) in s.iter().enumerate() {
            if !(v > 0.0 && v.is_finite()) {
                return Err(GpError::NonPositiveScale { index: i, value: v });
            }
        }
        Ok(PosteriorParams { mu, s })
    }

    pub fn latent_dims(&self) -> usize {
        self.s.len()
    }

    pub fn t_lat(&self) -> usize {
        self.mu.len() / self.s.len()
    }

    /// Temporal segment `μ̄_i`.
    pub fn mu_segment(&self, i: usize) -> &[f64] {
        let t = self.t_lat();
        &self.mu[i * t..(i + 1) * t]
    }
}

/// How a motion matrix came to be.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Sampled,
    Mean,
    Transported,
}

/// Latent code of a whole deformation sequence: `D×T` with one column per
/// latent time step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionMatrix {
    pub d: usize,
    pub t_lat: usize,
    /// Row-major `d × t_lat` values (row = latent dimension).
    pub z: Vec<f64>,
    pub provenance: Provenance,
}

impl MotionMatrix {
    pub fn new(d: usize, t_lat: usize, z: Vec<f64>, provenance: Provenance) -> Result<Self, GpError> {
        if z.len() != d * t_lat {
            return Err(GpError::Dimension {
                context: format!("motion matrix expects {}x{} = {} values, got {}", d, t_lat, d * t_lat, z.len()),
            });
        }
        Ok(MotionMatrix { d, t_lat, z, provenance })
    }

    /// Column `z_{·t}`: the per-dimension code of latent step `t`.
    pub fn column(&self, t: usize) -> Vec<f64> {
        (0..self.d).map(|i| self.z[i * self.t_lat + t]).collect()
    }

    /// Row `z_{d·}`: the temporal trajectory of one latent dimension.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.z[i * self.t_lat..(i + 1) * self.t_lat]
    }
}

/// Block-diagonal lower factor `L* = Diag_i(√s_i · L_K)` of the posterior
/// covariance whose block `i` is `s_i · K`.
#[derive(Clone, Debug)]
pub struct BlockFactor {
    sqrt_s: Vec<f64>,
    lower: DMatrix<f64>,
}

/// Builds the block factor from the per-dimension multipliers and the shared
/// precomputed kernel factor. Cost is O(D·T²) per call; `L_K` itself is
/// factored once per run.
pub fn block_cholesky(s: &[f64], kernel: &TemporalKernel) -> Result<BlockFactor, GpError> {
    for (i, &v) in s.iter().enumerate() {
        if !(v > 0.0 && v.is_finite()) {
            return Err(GpError::NonPositiveScale { index: i, value: v });
        }
    }
    Ok(BlockFactor { sqrt_s: s.iter().map(|v| v.sqrt()).collect(), lower: kernel.lower().clone() })
}

impl BlockFactor {
    pub fn latent_dims(&self) -> usize {
        self.sqrt_s.len()
    }

    pub fn t_lat(&self) -> usize {
        self.lower.nrows()
    }

    /// `L*·eps` without materializing the block matrix.
    pub fn apply(&self, eps: &[f64]) -> Vec<f64> {
        let t = self.t_lat();
        let mut out = vec![0.0; self.sqrt_s.len() * t];
        for (i, &sq) in self.sqrt_s.iter().enumerate() {
            let seg = &eps[i * t..(i + 1) * t];
            for r in 0..t {
                let mut acc = 0.0;
                for c in 0..=r {
                    acc += self.lower[(r, c)] * seg[c];
                }
                out[i * t + r] = sq * acc;
            }
        }
        out
    }

    /// Dense `DT×DT` block matrix, for oracle comparisons.
    pub fn assemble_dense(&self) -> DMatrix<f64> {
        let t = self.t_lat();
        let d = self.sqrt_s.len();
        let mut m = DMatrix::zeros(d * t, d * t);
        for (i, &sq) in self.sqrt_s.iter().enumerate() {
            for r in 0..t {
                for c in 0..=r {
                    m[(i * t + r, i * t + c)] = sq * self.lower[(r, c)];
                }
            }
        }
        m
    }
}

/// Assembles the dense posterior covariance `Σ* = Diag_i(s_i·K)`; oracle-side
/// helper for tests and the dense KL.
pub fn assemble_dense_covariance(s: &[f64], kernel: &TemporalKernel) -> DMatrix<f64> {
    let t = kernel.t_lat();
    let d = s.len();
    let mut m = DMatrix::zeros(d * t, d * t);
    for (i, &si) in s.iter().enumerate() {
        for r in 0..t {
            for c in 0..t {
                m[(i * t + r, i * t + c)] = si * kernel.matrix()[(r, c)];
            }
        }
    }
    m
}

/// Reparameterized draw `z = μ + L*·ε`, reshaped row-major to `D×T`.
pub fn sample_posterior(
    params: &PosteriorParams,
    kernel: &TemporalKernel,
    eps: &[f64],
) -> Result<MotionMatrix, GpError> {
    let d = params.latent_dims();
    let t = params.t_lat();
    if eps.len() != d * t || kernel.t_lat() != t {
        return Err(GpError::Dimension {
            context: format!("sample_posterior: eps {} vs D*T {}", eps.len(), d * t),
        });
    }
    let factor = block_cholesky(&params.s, kernel)?;
    let noise = factor.apply(eps);
    let z: Vec<f64> = params.mu.iter().zip(&noise).map(|(m, n)| m + n).collect();
    MotionMatrix::new(d, t, z, Provenance::Sampled)
}
