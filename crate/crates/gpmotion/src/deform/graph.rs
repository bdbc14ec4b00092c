//! Tape-recorded (differentiable) versions of smoothing, exponentiation and
//! warping, built from the same kernels the value-level functions use.

use crate::autodiff::{AutodiffError, Node, Tape, Tensor};

use super::{gaussian_weights, GridSpec, SmoothingSpec};

/// `[2,H,W]` grid of pixel coordinates: channel 0 rows, channel 1 columns.
pub fn identity_grid(h: usize, w: usize) -> Tensor {
    Tensor::from_fn(vec![2, h, w], |ix| if ix[0] == 0 { ix[1] as f64 } else { ix[2] as f64 })
}

/// Identity grid tiled over a batch: `[N,2,H,W]`.
pub fn tiled_identity_grid(n: usize, h: usize, w: usize) -> Tensor {
    Tensor::from_fn(vec![n, 2, h, w], |ix| if ix[1] == 0 { ix[2] as f64 } else { ix[3] as f64 })
}

/// Temporal then spatial Gaussian smoothing of a `[T,2,H,W]` velocity stack.
pub fn smooth_stack_on_tape(
    tape: &mut Tape,
    stack: Node,
    spec: &SmoothingSpec,
    grid: &GridSpec,
) -> Result<Node, AutodiffError> {
    let mut v = stack;
    if let Some(w) = gaussian_weights(spec.sigma_t_steps) {
        v = tape.smooth_axis(v, 0, w)?;
    }
    if let Some(w) = gaussian_weights(spec.sigma_g_mm / grid.spacing) {
        v = tape.smooth_axis(v, 2, w.clone())?;
        v = tape.smooth_axis(v, 3, w)?;
    }
    Ok(v)
}

/// Scaling-and-squaring on the tape: input `[N,2,H,W]` velocities, output
/// `[N,2,H,W]` displacements, differentiable end-to-end.
pub fn exponentiate_on_tape(
    tape: &mut Tape,
    velocity: Node,
    n_steps: usize,
) -> Result<Node, AutodiffError> {
    let shape = tape.value(velocity).shape().to_vec();
    let (n, h, w) = (shape[0], shape[2], shape[3]);
    let id = tape.leaf(tiled_identity_grid(n, h, w));
    let mut u = tape.scale(velocity, 1.0 / (1u64 << n_steps) as f64);
    for _ in 0..n_steps {
        let coords = tape.add(id, u)?;
        let sampled = tape.bilinear_sample(u, coords)?;
        u = tape.add(u, sampled)?;
    }
    Ok(u)
}

/// Warps a constant image (leaf) by the displacement node `u: [2,H,W]`;
/// returns `[1,H,W]`.
pub fn warp_on_tape(
    tape: &mut Tape,
    image: Node,
    u: Node,
    id_grid: Node,
) -> Result<Node, AutodiffError> {
    let coords = tape.add(id_grid, u)?;
    tape.bilinear_sample(image, coords)
}
