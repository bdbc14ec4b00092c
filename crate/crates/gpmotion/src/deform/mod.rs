//! Diffeomorphic deformation engine.
//!
//! Velocity and deformation fields live on a pixel grid as `[2,H,W]` tensors:
//! channel 0 is displacement along rows (y), channel 1 along columns (x), in
//! pixel units. A deformation maps `x ↦ x + u(x)` and is applied by sampling:
//! `warp(I, φ)(x) = I(x + u(x))`. Stationary velocities are exponentiated by
//! scaling-and-squaring, which keeps the fields invertible in practice
//! (positive Jacobian determinant).

mod graph;
mod io;

pub use graph::{
    exponentiate_on_tape, identity_grid, smooth_stack_on_tape, tiled_identity_grid, warp_on_tape,
};
pub use io::{read_fields, write_fields};

use serde::{Deserialize, Serialize};

use crate::autodiff::{bilinear_forward, smooth_axis, Tensor};

/// Errors from deformation operations and field-file IO.
#[derive(Debug, thiserror::Error)]
pub enum DeformError {
    #[error("grid mismatch: {context}: {a:?} vs {b:?}")]
    GridMismatch { context: &'static str, a: Vec<usize>, b: Vec<usize> },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("field file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Pixel grid with isotropic physical spacing in millimetres.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub h: usize,
    pub w: usize,
    /// mm per pixel.
    pub spacing: f64,
}

impl GridSpec {
    pub fn new(h: usize, w: usize, spacing: f64) -> Result<Self, DeformError> {
        if h < 4 || w < 4 {
            return Err(DeformError::InvalidGrid(format!("extents {h}x{w} below minimum 4")));
        }
        if !(spacing > 0.0) {
            return Err(DeformError::InvalidGrid(format!("spacing {spacing} must be positive")));
        }
        Ok(GridSpec { h, w, spacing })
    }
}

/// Spatio-temporal Gaussian smoothing parameters. A zero deviation disables
/// that pass. Kernels are truncated at radius `ceil(3σ)` and renormalized to
/// sum one.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmoothingSpec {
    /// Spatial deviation in millimetres.
    pub sigma_g_mm: f64,
    /// Temporal deviation in time steps.
    pub sigma_t_steps: f64,
}

impl Default for SmoothingSpec {
    fn default() -> Self {
        SmoothingSpec { sigma_g_mm: 3.0, sigma_t_steps: 1.5 }
    }
}

/// Per-time-step stationary velocity, pixel units.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityField {
    data: Tensor,
}

/// Displacement field of a diffeomorphism `x ↦ x + u(x)`, pixel units.
#[derive(Clone, Debug, PartialEq)]
pub struct DeformationField {
    disp: Tensor,
}

fn check_field_shape(t: &Tensor, context: &'static str) -> Result<(), DeformError> {
    if t.rank() != 3 || t.shape()[0] != 2 {
        return Err(DeformError::GridMismatch { context, a: t.shape().to_vec(), b: vec![2, 0, 0] });
    }
    Ok(())
}

impl VelocityField {
    pub fn from_tensor(data: Tensor) -> Result<Self, DeformError> {
        check_field_shape(&data, "velocity field")?;
        Ok(VelocityField { data })
    }

    pub fn zeros(h: usize, w: usize) -> Self {
        VelocityField { data: Tensor::zeros(vec![2, h, w]) }
    }

    pub fn data(&self) -> &Tensor {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Tensor {
        &mut self.data
    }

    pub fn extents(&self) -> (usize, usize) {
        (self.data.shape()[1], self.data.shape()[2])
    }
}

impl DeformationField {
    pub fn from_tensor(disp: Tensor) -> Result<Self, DeformError> {
        check_field_shape(&disp, "deformation field")?;
        Ok(DeformationField { disp })
    }

    /// The identity deformation.
    pub fn identity(h: usize, w: usize) -> Self {
        DeformationField { disp: Tensor::zeros(vec![2, h, w]) }
    }

    pub fn displacement(&self) -> &Tensor {
        &self.disp
    }

    pub fn displacement_mut(&mut self) -> &mut Tensor {
        &mut self.disp
    }

    pub fn extents(&self) -> (usize, usize) {
        (self.disp.shape()[1], self.disp.shape()[2])
    }

    /// Mean Euclidean displacement over the interior (1-pixel border excluded).
    pub fn mean_interior_displacement(&self) -> f64 {
        let (h, w) = self.extents();
        let d = self.disp.data();
        let plane = h * w;
        let mut acc = 0.0;
        let mut count = 0usize;
        for i in 1..h - 1 {
            for j in 1..w - 1 {
                let uy = d[i * w + j];
                let ux = d[plane + i * w + j];
                acc += (uy * uy + ux * ux).sqrt();
                count += 1;
            }
        }
        acc / count as f64
    }
}

/// Normalized, truncated discrete Gaussian; `None` when σ ≤ 0 (pass disabled).
pub fn gaussian_weights(sigma: f64) -> Option<Vec<f64>> {
    if sigma <= 0.0 {
        return None;
    }
    let radius = (3.0 * sigma).ceil() as usize;
    let mut w: Vec<f64> = (-(radius as isize)..=radius as isize)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    Some(w)
}

/// Separable spatial Gaussian smoothing per channel, border replication.
/// `σ_G` is given in millimetres and converted to pixels via the grid spacing.
pub fn gaussian_smooth_spatial(v: &VelocityField, spec: &SmoothingSpec, grid: &GridSpec) -> VelocityField {
    let sigma_px = spec.sigma_g_mm / grid.spacing;
    match gaussian_weights(sigma_px) {
        None => v.clone(),
        Some(w) => {
            let rows = smooth_axis(v.data(), 1, &w);
            VelocityField { data: smooth_axis(&rows, 2, &w) }
        }
    }
}

/// 1-D Gaussian over the time axis per pixel and channel, replication at the
/// sequence ends.
pub fn gaussian_smooth_temporal(stack: &[VelocityField], spec: &SmoothingSpec) -> Vec<VelocityField> {
    let Some(w) = gaussian_weights(spec.sigma_t_steps) else {
        return stack.to_vec();
    };
    if stack.is_empty() {
        return Vec::new();
    }
    let t_len = stack.len();
    let r = (w.len() - 1) / 2;
    let mut out = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let mut acc = Tensor::zeros(stack[0].data().shape().to_vec());
        for (k, &wv) in w.iter().enumerate() {
            let src = (t + k).saturating_sub(r).min(t_len - 1);
            for (a, b) in acc.data_mut().iter_mut().zip(stack[src].data().data()) {
                *a += wv * b;
            }
        }
        out.push(VelocityField { data: acc });
    }
    out
}

/// Flow of a stationary velocity field by scaling-and-squaring:
/// `u⁰ = v/2ⁿ`, then n self-compositions `uᵏ⁺¹(x) = uᵏ(x) + uᵏ(x + uᵏ(x))`.
pub fn exponentiate(v: &VelocityField, n_steps: usize) -> DeformationField {
    let (h, w) = v.extents();
    let scale = 1.0 / (1u64 << n_steps) as f64;
    let mut u = v.data().map(|x| x * scale);
    let id = identity_grid(h, w);
    for _ in 0..n_steps {
        let coords = add_tensors(&id, &u);
        let sampled = bilinear_forward(&u, &coords);
        u = add_tensors(&u, &sampled);
    }
    DeformationField { disp: u }
}

/// `(φ_a ∘ φ_b)(x) = φ_a(φ_b(x))`: displacement `u_b(x) + u_a(x + u_b(x))`.
pub fn compose(a: &DeformationField, b: &DeformationField) -> Result<DeformationField, DeformError> {
    if a.extents() != b.extents() {
        return Err(DeformError::GridMismatch {
            context: "compose",
            a: a.disp.shape().to_vec(),
            b: b.disp.shape().to_vec(),
        });
    }
    let (h, w) = a.extents();
    let id = identity_grid(h, w);
    let coords = add_tensors(&id, &b.disp);
    let ua_at = bilinear_forward(&a.disp, &coords);
    Ok(DeformationField { disp: add_tensors(&b.disp, &ua_at) })
}

/// Interpolation mode for [`warp`].
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum WarpMode {
    /// Differentiable, for intensity images.
    Bilinear,
    /// For label masks; preserves label values exactly.
    Nearest,
}

/// Applies a deformation to an `[H,W]` image: `out(x) = image(x + u(x))`,
/// border clamp.
pub fn warp(image: &Tensor, phi: &DeformationField, mode: WarpMode) -> Result<Tensor, DeformError> {
    let (h, w) = phi.extents();
    if image.shape() != [h, w] {
        return Err(DeformError::GridMismatch {
            context: "warp",
            a: image.shape().to_vec(),
            b: vec![h, w],
        });
    }
    let u = phi.disp.data();
    let plane = h * w;
    match mode {
        WarpMode::Bilinear => {
            let img3 = image.clone().reshape(vec![1, h, w]).expect("rank change only");
            let id = identity_grid(h, w);
            let coords = add_tensors(&id, &phi.disp);
            let out = bilinear_forward(&img3, &coords);
            Ok(out.reshape(vec![h, w]).expect("rank change only"))
        }
        WarpMode::Nearest => {
            let mut out = Tensor::zeros(vec![h, w]);
            for i in 0..h {
                for j in 0..w {
                    let py = i as f64 + u[i * w + j];
                    let px = j as f64 + u[plane + i * w + j];
                    let si = py.round().clamp(0.0, (h - 1) as f64) as usize;
                    let sj = px.round().clamp(0.0, (w - 1) as f64) as usize;
                    out.data_mut()[i * w + j] = image.data()[si * w + sj];
                }
            }
            Ok(out)
        }
    }
}

/// Determinant of `I + ∇u` per pixel: central differences on the interior,
/// one-sided at the borders.
pub fn jacobian_determinant(phi: &DeformationField, _grid: &GridSpec) -> Tensor {
    let (h, w) = phi.extents();
    let u = phi.disp.data();
    let plane = h * w;
    let grad = |c: usize, i: usize, j: usize, axis: usize| -> f64 {
        let at = |i: usize, j: usize| u[c * plane + i * w + j];
        match axis {
            0 => {
                if i == 0 {
                    at(1, j) - at(0, j)
                } else if i == h - 1 {
                    at(h - 1, j) - at(h - 2, j)
                } else {
                    0.5 * (at(i + 1, j) - at(i - 1, j))
                }
            }
            _ => {
                if j == 0 {
                    at(i, 1) - at(i, 0)
                } else if j == w - 1 {
                    at(i, w - 1) - at(i, w - 2)
                } else {
                    0.5 * (at(i, j + 1) - at(i, j - 1))
                }
            }
        }
    };
    Tensor::from_fn(vec![h, w], |ix| {
        let (i, j) = (ix[0], ix[1]);
        let dy0 = grad(0, i, j, 0);
        let dx0 = grad(0, i, j, 1);
        let dy1 = grad(1, i, j, 0);
        let dx1 = grad(1, i, j, 1);
        (1.0 + dy0) * (1.0 + dx1) - dx0 * dy1
    })
}

/// Fraction of interior pixels with positive Jacobian determinant.
pub fn positive_jacobian_fraction(phi: &DeformationField, grid: &GridSpec) -> f64 {
    let det = jacobian_determinant(phi, grid);
    let (h, w) = phi.extents();
    let mut pos = 0usize;
    let mut total = 0usize;
    for i in 1..h - 1 {
        for j in 1..w - 1 {
            total += 1;
            if det.at(&[i, j]) > 0.0 {
                pos += 1;
            }
        }
    }
    pos as f64 / total as f64
}

/// Regularity diagnostics of a deformation sequence:
/// spatial = mean Frobenius norm of `∇u_t` over interior pixels and steps,
/// temporal = mean `|u_t − u_{t−1}|₂` over pixels and consecutive steps.
pub fn field_gradients(sequence: &[DeformationField], _grid: &GridSpec) -> (f64, f64) {
    if sequence.is_empty() {
        return (0.0, 0.0);
    }
    let (h, w) = sequence[0].extents();
    let plane = h * w;

    let mut spatial = 0.0;
    let mut spatial_n = 0usize;
    for phi in sequence {
        let u = phi.disp.data();
        for i in 1..h - 1 {
            for j in 1..w - 1 {
                let mut fro = 0.0;
                for c in 0..2 {
                    let dy = 0.5 * (u[c * plane + (i + 1) * w + j] - u[c * plane + (i - 1) * w + j]);
                    let dx = 0.5 * (u[c * plane + i * w + j + 1] - u[c * plane + i * w + j - 1]);
                    fro += dy * dy + dx * dx;
                }
                spatial += fro.sqrt();
                spatial_n += 1;
            }
        }
    }

    let mut temporal = 0.0;
    let mut temporal_n = 0usize;
    for pair in sequence.windows(2) {
        let (a, b) = (pair[0].disp.data(), pair[1].disp.data());
        for p in 0..plane {
            let dy = b[p] - a[p];
            let dx = b[plane + p] - a[plane + p];
            temporal += (dy * dy + dx * dx).sqrt();
            temporal_n += 1;
        }
    }

    (
        if spatial_n == 0 { 0.0 } else { spatial / spatial_n as f64 },
        if temporal_n == 0 { 0.0 } else { temporal / temporal_n as f64 },
    )
}

/// Downsamples an `[H,W]` image by 2 with bilinear averaging at cell centers.
pub fn downsample2(image: &Tensor) -> Tensor {
    let (h, w) = (image.shape()[0], image.shape()[1]);
    let (oh, ow) = (h / 2, w / 2);
    Tensor::from_fn(vec![oh, ow], |ix| {
        let (i, j) = (2 * ix[0], 2 * ix[1]);
        let i1 = (i + 1).min(h - 1);
        let j1 = (j + 1).min(w - 1);
        0.25 * (image.at(&[i, j]) + image.at(&[i1, j]) + image.at(&[i, j1]) + image.at(&[i1, j1]))
    })
}

/// Rotates an `[H,W]` image counter-clockwise by `k·90°` exactly (index
/// permutation, no resampling). Requires H == W for k odd.
pub fn rot90(image: &Tensor, k: usize) -> Tensor {
    let (h, w) = (image.shape()[0], image.shape()[1]);
    match k % 4 {
        0 => image.clone(),
        1 => Tensor::from_fn(vec![w, h], |ix| image.at(&[ix[1], w - 1 - ix[0]])),
        2 => Tensor::from_fn(vec![h, w], |ix| image.at(&[h - 1 - ix[0], w - 1 - ix[1]])),
        _ => Tensor::from_fn(vec![w, h], |ix| image.at(&[h - 1 - ix[1], ix[0]])),
    }
}

/// Train-time augmentation parameters applied to a whole sequence.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct AffineParams {
    /// Row/column shift in pixels.
    pub shift: (f64, f64),
    pub rot_deg: f64,
    pub scale: f64,
    pub mirror: bool,
}

/// Resamples an image under a similarity transform about the grid center
/// (bilinear lookup of the inverse map, border clamp).
pub fn affine_resample(image: &Tensor, params: &AffineParams) -> Tensor {
    let (h, w) = (image.shape()[0], image.shape()[1]);
    let cy = (h - 1) as f64 / 2.0;
    let cx = (w - 1) as f64 / 2.0;
    let theta = params.rot_deg.to_radians();
    let (sin, cos) = theta.sin_cos();
    let inv_scale = 1.0 / params.scale;
    let img3 = image.clone().reshape(vec![1, h, w]).expect("rank change only");
    let coords = Tensor::from_fn(vec![2, h, w], |ix| {
        let mut py = ix[1] as f64 - cy - params.shift.0;
        let mut px = ix[2] as f64 - cx - params.shift.1;
        if params.mirror {
            px = -px;
        }
        // inverse rotation + inverse scale
        let ry = inv_scale * (cos * py + sin * px);
        let rx = inv_scale * (-sin * py + cos * px);
        py = ry + cy;
        px = rx + cx;
        if ix[0] == 0 {
            py
        } else {
            px
        }
    });
    bilinear_forward(&img3, &coords).reshape(vec![h, w]).expect("rank change only")
}

fn add_tensors(a: &Tensor, b: &Tensor) -> Tensor {
    debug_assert_eq!(a.shape(), b.shape());
    Tensor::new(
        a.shape().to_vec(),
        a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect(),
    )
    .expect("same shapes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn grid16() -> GridSpec {
        GridSpec::new(16, 16, 1.5).unwrap()
    }

    /// Smooth random velocity bounded in magnitude: a few low-frequency waves.
    fn smooth_velocity_freq(h: usize, w: usize, amp: f64, freq: f64, seed: u64) -> VelocityField {
        let mut rng = crate::rng::seeded(seed);
        let mut param = [[0.0f64; 4]; 4];
        for row in param.iter_mut() {
            for v in row.iter_mut() {
                *v = rng.random_range(-freq..freq);
            }
        }
        let data = Tensor::from_fn(vec![2, h, w], |ix| {
            let c = ix[0];
            let y = ix[1] as f64 / h as f64;
            let x = ix[2] as f64 / w as f64;
            let p = &param[2 * c];
            let q = &param[2 * c + 1];
            0.5 * amp
                * ((2.0 * std::f64::consts::PI * (p[0] * y + p[1] * x) + p[2]).sin()
                    + (2.0 * std::f64::consts::PI * (q[0] * y + q[1] * x) + q[2]).sin())
        });
        VelocityField::from_tensor(data).unwrap()
    }

    fn smooth_velocity(h: usize, w: usize, amp: f64, seed: u64) -> VelocityField {
        smooth_velocity_freq(h, w, amp, 1.0, seed)
    }

    #[test]
    fn grid_invariants() {
        assert!(GridSpec::new(3, 16, 1.0).is_err());
        assert!(GridSpec::new(16, 16, 0.0).is_err());
        assert!(GridSpec::new(4, 4, 0.5).is_ok());
    }

    #[test]
    fn zero_sigma_disables_smoothing() {
        let v = smooth_velocity(8, 8, 2.0, 1);
        let spec = SmoothingSpec { sigma_g_mm: 0.0, sigma_t_steps: 0.0 };
        let out = gaussian_smooth_spatial(&v, &spec, &grid16());
        assert_eq!(out.data(), v.data());
        let stack = vec![v.clone(), smooth_velocity(8, 8, 2.0, 2)];
        let out = gaussian_smooth_temporal(&stack, &spec);
        assert_eq!(out[0].data(), stack[0].data());
        assert_eq!(out[1].data(), stack[1].data());
    }

    #[test]
    fn constant_field_is_unchanged_by_smoothing() {
        let v = VelocityField::from_tensor(Tensor::full(vec![2, 8, 8], 1.3)).unwrap();
        let out = gaussian_smooth_spatial(&v, &SmoothingSpec::default(), &grid16());
        for (a, b) in out.data().data().iter().zip(v.data().data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn impulse_center_weight_matches_tabulated_kernel() {
        // sigma 3mm at 1.5mm spacing = 2px, radius 6
        let w = gaussian_weights(2.0).unwrap();
        assert_eq!(w.len(), 13);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        let mut imp = Tensor::zeros(vec![2, 17, 17]);
        imp.set(&[0, 8, 8], 1.0);
        let v = VelocityField::from_tensor(imp).unwrap();
        let spec = SmoothingSpec { sigma_g_mm: 3.0, sigma_t_steps: 0.0 };
        let out = gaussian_smooth_spatial(&v, &spec, &GridSpec::new(17, 17, 1.5).unwrap());
        // separable: center weight is w[r]^2
        let r = 6;
        assert!((out.data().at(&[0, 8, 8]) - w[r] * w[r]).abs() < 1e-12);
    }

    #[test]
    fn temporal_impulse_weights() {
        let h = 4;
        let w_img = 4;
        let mut stack: Vec<VelocityField> = (0..5).map(|_| VelocityField::zeros(h, w_img)).collect();
        stack[2].data_mut().set(&[0, 1, 1], 1.0);
        let spec = SmoothingSpec { sigma_g_mm: 0.0, sigma_t_steps: 1.5 };
        let out = gaussian_smooth_temporal(&stack, &spec);
        let weights = gaussian_weights(1.5).unwrap();
        let r = (weights.len() - 1) / 2;
        for (t, field) in out.iter().enumerate() {
            // offset from the impulse position, clamped contributions summed
            let mut expect = 0.0;
            for (k, &wv) in weights.iter().enumerate() {
                let src = (t + k).saturating_sub(r).min(4);
                if src == 2 {
                    expect += wv;
                }
            }
            assert!((field.data().at(&[0, 1, 1]) - expect).abs() < 1e-12, "t={t}");
        }
    }

    #[test]
    fn exponentiate_zero_velocity_is_identity() {
        let v = VelocityField::zeros(8, 8);
        let phi = exponentiate(&v, 6);
        assert!(phi.displacement().data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn exponentiate_constant_velocity_is_translation() {
        // the flow of a constant field is a translation by the same vector
        let mut v = VelocityField::zeros(16, 16);
        for i in 0..16 {
            for j in 0..16 {
                v.data_mut().set(&[0, i, j], 2.4);
            }
        }
        let phi = exponentiate(&v, 6);
        for i in 2..11 {
            for j in 2..14 {
                assert!((phi.displacement().at(&[0, i, j]) - 2.4).abs() < 1e-6, "at {i},{j}");
                assert!(phi.displacement().at(&[1, i, j]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn exponentiate_inverse_consistency() {
        // exp(v) and exp(-v) compose to near-identity away from the border
        let v = smooth_velocity(24, 24, 3.0, 5);
        let max_v = v.data().data().iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        assert!(max_v <= 3.0);
        let neg = VelocityField::from_tensor(v.data().map(|x| -x)).unwrap();
        let fwd = exponentiate(&v, 6);
        let bwd = exponentiate(&neg, 6);
        let comp = compose(&fwd, &bwd).unwrap();
        let (h, w) = comp.extents();
        let mut worst = 0.0f64;
        let margin = 4;
        for i in margin..h - margin {
            for j in margin..w - margin {
                let uy = comp.displacement().at(&[0, i, j]);
                let ux = comp.displacement().at(&[1, i, j]);
                worst = worst.max((uy * uy + ux * ux).sqrt());
            }
        }
        assert!(worst < 0.05, "inverse residual {worst}");
    }

    #[test]
    fn compose_identity_and_translations() {
        let id = DeformationField::identity(12, 12);
        let phi = exponentiate(&smooth_velocity(12, 12, 2.0, 6), 6);
        let c = compose(&id, &phi).unwrap();
        for (a, b) in c.displacement().data().iter().zip(phi.displacement().data()) {
            assert!((a - b).abs() < 1e-9);
        }

        // two integer translations add on the interior
        let mut ta = DeformationField::identity(12, 12);
        let mut tb = DeformationField::identity(12, 12);
        for i in 0..12 {
            for j in 0..12 {
                ta.displacement_mut().set(&[0, i, j], 1.0);
                tb.displacement_mut().set(&[1, i, j], 2.0);
            }
        }
        let c = compose(&ta, &tb).unwrap();
        for i in 2..9 {
            for j in 2..9 {
                assert!((c.displacement().at(&[0, i, j]) - 1.0).abs() < 1e-12);
                assert!((c.displacement().at(&[1, i, j]) - 2.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn compose_is_associative_on_the_interior() {
        let pa = exponentiate(&smooth_velocity_freq(20, 20, 0.5, 0.5, 7), 6);
        let pb = exponentiate(&smooth_velocity_freq(20, 20, 0.5, 0.5, 8), 6);
        let pc = exponentiate(&smooth_velocity_freq(20, 20, 0.5, 0.5, 9), 6);
        let left = compose(&compose(&pa, &pb).unwrap(), &pc).unwrap();
        let right = compose(&pa, &compose(&pb, &pc).unwrap()).unwrap();
        for i in 4..16 {
            for j in 4..16 {
                for c in 0..2 {
                    let d = (left.displacement().at(&[c, i, j]) - right.displacement().at(&[c, i, j])).abs();
                    assert!(d < 1e-3, "associativity residual {d} at {c},{i},{j}");
                }
            }
        }
    }

    #[test]
    fn warp_identity_is_exact_for_both_modes() {
        let mut rng = crate::rng::seeded(10);
        let img = Tensor::from_fn(vec![9, 9], |_| rng.random_range(0.0..1.0));
        let id = DeformationField::identity(9, 9);
        let b = warp(&img, &id, WarpMode::Bilinear).unwrap();
        let n = warp(&img, &id, WarpMode::Nearest).unwrap();
        assert_eq!(b.data(), img.data());
        assert_eq!(n.data(), img.data());
    }

    #[test]
    fn warp_integer_translation_shifts_rows() {
        let img = Tensor::from_fn(vec![5, 5], |ix| (ix[0] * 5 + ix[1]) as f64);
        let mut phi = DeformationField::identity(5, 5);
        for i in 0..5 {
            for j in 0..5 {
                phi.displacement_mut().set(&[1, i, j], 1.0);
            }
        }
        let out = warp(&img, &phi, WarpMode::Bilinear).unwrap();
        for i in 0..5 {
            for j in 0..4 {
                assert_eq!(out.at(&[i, j]), img.at(&[i, j + 1]));
            }
            // border replication at the last column
            assert_eq!(out.at(&[i, 4]), img.at(&[i, 4]));
        }
    }

    #[test]
    fn warp_linear_ramp_subpixel_shift_is_exact() {
        let img = Tensor::from_fn(vec![6, 8], |ix| ix[1] as f64);
        let mut phi = DeformationField::identity(6, 8);
        for i in 0..6 {
            for j in 0..8 {
                phi.displacement_mut().set(&[1, i, j], 0.25);
            }
        }
        let out = warp(&img, &phi, WarpMode::Bilinear).unwrap();
        for i in 0..6 {
            for j in 0..7 {
                assert!((out.at(&[i, j]) - (j as f64 + 0.25)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mask_warp_is_offset_invariant() {
        // nearest-mode warping commutes with constant label offsets
        let mask = Tensor::from_fn(vec![8, 8], |ix| if ix[0] > 3 { 2.0 } else { 1.0 });
        let phi = exponentiate(&smooth_velocity(8, 8, 1.5, 11), 6);
        let shifted = mask.map(|v| v + 5.0);
        let a = warp(&mask, &phi, WarpMode::Nearest).unwrap();
        let b = warp(&shifted, &phi, WarpMode::Nearest).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert_eq!(x + 5.0, *y);
        }
    }

    #[test]
    fn jacobian_identity_is_one() {
        let id = DeformationField::identity(8, 8);
        let det = jacobian_determinant(&id, &grid16());
        assert!(det.data().iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn jacobian_uniform_dilation() {
        // u(x) = 0.1·(x - origin): det = 1.1^2 everywhere
        let mut phi = DeformationField::identity(10, 10);
        for i in 0..10 {
            for j in 0..10 {
                phi.displacement_mut().set(&[0, i, j], 0.1 * i as f64);
                phi.displacement_mut().set(&[1, i, j], 0.1 * j as f64);
            }
        }
        let det = jacobian_determinant(&phi, &grid16());
        for i in 0..10 {
            for j in 0..10 {
                assert!((det.at(&[i, j]) - 1.21).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn field_gradients_basic_cases() {
        let grid = grid16();
        let seq: Vec<DeformationField> = (0..4).map(|_| DeformationField::identity(8, 8)).collect();
        assert_eq!(field_gradients(&seq, &grid), (0.0, 0.0));

        // static nonzero field repeated: temporal gradient zero
        let phi = exponentiate(&smooth_velocity(8, 8, 2.0, 12), 6);
        let seq = vec![phi.clone(), phi.clone(), phi];
        let (_, temporal) = field_gradients(&seq, &grid);
        assert_eq!(temporal, 0.0);

        // u_t = (0.1·t, 0) uniform: temporal 0.1, spatial 0
        let seq: Vec<DeformationField> = (0..3)
            .map(|t| {
                let mut f = DeformationField::identity(8, 8);
                for i in 0..8 {
                    for j in 0..8 {
                        f.displacement_mut().set(&[0, i, j], 0.1 * t as f64);
                    }
                }
                f
            })
            .collect();
        let (spatial, temporal) = field_gradients(&seq, &grid);
        assert!(spatial.abs() < 1e-12);
        assert!((temporal - 0.1).abs() < 1e-12);
    }

    #[test]
    fn smoothing_preserves_field_mean_away_from_borders() {
        // kernel sums to one, so a periodic-free interior average is preserved
        let v = smooth_velocity(32, 32, 2.0, 13);
        let out = gaussian_smooth_spatial(&v, &SmoothingSpec::default(), &GridSpec::new(32, 32, 1.5).unwrap());
        let mean_in: f64 = v.data().data().iter().sum::<f64>() / v.data().numel() as f64;
        let mean_out: f64 = out.data().data().iter().sum::<f64>() / out.data().numel() as f64;
        assert!((mean_in - mean_out).abs() < 0.05);
    }

    #[test]
    fn rot90_round_trips() {
        let img = Tensor::from_fn(vec![6, 6], |ix| (ix[0] * 6 + ix[1]) as f64);
        let r4 = rot90(&rot90(&rot90(&rot90(&img, 1), 1), 1), 1);
        assert_eq!(r4.data(), img.data());
        assert_eq!(rot90(&img, 1).at(&[0, 0]), img.at(&[0, 5]));
    }
}
