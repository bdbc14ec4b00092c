//! Differentiable tape primitives for the GP latent space: the closed-form KL
//! term and reparameterized sampling, with hand-derived adjoints.

use nalgebra::DMatrix;

use crate::autodiff::{AutodiffError, CustomOp, Tensor};

use super::TemporalKernel;

/// Tape op computing `½·Σ_i [ s_i·T + μ̄_iᵀK⁻¹μ̄_i − T − T·ln s_i ]` from
/// inputs `[μ (D·T), s (D)]`.
///
/// Adjoints: `∂/∂μ̄_i = K⁻¹μ̄_i` (K⁻¹ symmetric), `∂/∂s_i = ½(T − T/s_i)`.
#[derive(Debug)]
pub struct KlGpOp {
    kinv: DMatrix<f64>,
    t_lat: usize,
}

impl KlGpOp {
    pub fn new(kernel: &TemporalKernel) -> Self {
        KlGpOp { kinv: kernel.inverse().clone(), t_lat: kernel.t_lat() }
    }
}

impl CustomOp for KlGpOp {
    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor, AutodiffError> {
        let (mu, s) = (inputs[0], inputs[1]);
        let d = s.numel();
        let t = self.t_lat;
        if mu.numel() != d * t {
            return Err(AutodiffError::ShapeMismatch {
                context: "kl_gp",
                a: mu.shape().to_vec(),
                b: vec![d * t],
            });
        }
        let tf = t as f64;
        let mut total = 0.0;
        for i in 0..d {
            let si = s.data()[i];
            if si < 0.0 {
                return Err(AutodiffError::Config(format!("kl_gp: s[{i}] = {si} must be non-negative")));
            }
            // exp underflow to s = 0 gives an infinite KL (ln 0 = -inf), which
            // the training divergence guard reports as divergence
            let seg = &mu.data()[i * t..(i + 1) * t];
            let mut quad = 0.0;
            for r in 0..t {
                let mut acc = 0.0;
                for c in 0..t {
                    acc += self.kinv[(r, c)] * seg[c];
                }
                quad += seg[r] * acc;
            }
            total += si * tf + quad - tf - tf * si.ln();
        }
        Ok(Tensor::scalar(0.5 * total))
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, dy: &Tensor) -> Vec<Tensor> {
        let (mu, s) = (inputs[0], inputs[1]);
        let d = s.numel();
        let t = self.t_lat;
        let g = dy.item();
        let tf = t as f64;
        let mut dmu = Tensor::zeros(mu.shape().to_vec());
        let mut ds = Tensor::zeros(s.shape().to_vec());
        for i in 0..d {
            let seg = &mu.data()[i * t..(i + 1) * t];
            for r in 0..t {
                let mut acc = 0.0;
                for c in 0..t {
                    acc += self.kinv[(r, c)] * seg[c];
                }
                dmu.data_mut()[i * t + r] = g * acc;
            }
            ds.data_mut()[i] = g * 0.5 * (tf - tf / s.data()[i]);
        }
        vec![dmu, ds]
    }
}

/// Tape op drawing `z = μ + L*·ε` with `L* = Diag_i(√s_i·L_K)` from inputs
/// `[μ (D·T), s (D)]`; `ε` is fixed at record time so the node is a
/// deterministic, differentiable function of `(μ, s)`.
///
/// Adjoints: `∂z/∂μ = I`, `∂z_{i,t}/∂s_i = (L_K ε̄_i)_t / (2√s_i)`.
#[derive(Debug)]
pub struct SamplePosteriorOp {
    lower: DMatrix<f64>,
    eps: Vec<f64>,
}

impl SamplePosteriorOp {
    pub fn new(kernel: &TemporalKernel, eps: Vec<f64>) -> Self {
        SamplePosteriorOp { lower: kernel.lower().clone(), eps }
    }

    /// `(L_K ε̄_i)_t` for every i,t.
    fn correlated_noise(&self, d: usize) -> Vec<f64> {
        let t = self.lower.nrows();
        let mut out = vec![0.0; d * t];
        for i in 0..d {
            let seg = &self.eps[i * t..(i + 1) * t];
            for r in 0..t {
                let mut acc = 0.0;
                for c in 0..=r {
                    acc += self.lower[(r, c)] * seg[c];
                }
                out[i * t + r] = acc;
            }
        }
        out
    }
}

impl CustomOp for SamplePosteriorOp {
    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor, AutodiffError> {
        let (mu, s) = (inputs[0], inputs[1]);
        let d = s.numel();
        let t = self.lower.nrows();
        if mu.numel() != d * t || self.eps.len() != d * t {
            return Err(AutodiffError::ShapeMismatch {
                context: "sample_posterior",
                a: mu.shape().to_vec(),
                b: vec![d * t],
            });
        }
        let noise = self.correlated_noise(d);
        let mut z = Tensor::zeros(vec![d, t]);
        for i in 0..d {
            let sq = s.data()[i].sqrt();
            for r in 0..t {
                z.data_mut()[i * t + r] = mu.data()[i * t + r] + sq * noise[i * t + r];
            }
        }
        Ok(z)
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, dy: &Tensor) -> Vec<Tensor> {
        let (mu, s) = (inputs[0], inputs[1]);
        let d = s.numel();
        let t = self.lower.nrows();
        let noise = self.correlated_noise(d);
        let dmu = Tensor::new(mu.shape().to_vec(), dy.data().to_vec()).expect("same layout");
        let mut ds = Tensor::zeros(s.shape().to_vec());
        for i in 0..d {
            let sq = s.data()[i].sqrt();
            let mut acc = 0.0;
            for r in 0..t {
                acc += dy.data()[i * t + r] * noise[i * t + r];
            }
            ds.data_mut()[i] = acc / (2.0 * sq);
        }
        vec![dmu, ds]
    }
}
