//! Linear and cubic interpolation of deformation fields between provided
//! latent slots, used as reference methods for the interpolation experiments.
//!
//! The cubic baseline is a not-a-knot cubic spline per pixel and component,
//! which reproduces cubic polynomial trajectories exactly. Both baselines
//! hold the boundary value outside the provided range.

use crate::autodiff::Tensor;
use crate::deform::DeformationField;

/// Per-pixel linear interpolation of displacements between provided slots.
pub fn linear_fields(
    provided_slots: &[usize],
    provided_fields: &[DeformationField],
    t_lat: usize,
) -> Vec<DeformationField> {
    let (h, w) = provided_fields[0].extents();
    let xs: Vec<f64> = provided_slots.iter().map(|&s| s as f64).collect();
    (0..t_lat)
        .map(|t| {
            let x = t as f64;
            if x <= xs[0] {
                return provided_fields[0].clone();
            }
            if x >= *xs.last().unwrap() {
                return provided_fields.last().unwrap().clone();
            }
            let i = xs.partition_point(|&v| v <= x) - 1;
            let frac = (x - xs[i]) / (xs[i + 1] - xs[i]);
            let a = provided_fields[i].displacement().data();
            let b = provided_fields[i + 1].displacement().data();
            let data: Vec<f64> = a.iter().zip(b).map(|(p, q)| p * (1.0 - frac) + q * frac).collect();
            DeformationField::from_tensor(Tensor::new(vec![2, h, w], data).expect("sized"))
                .expect("valid field")
        })
        .collect()
}

/// Not-a-knot cubic spline through the provided slots, evaluated at every
/// latent slot (boundary values held outside the provided range). Falls back
/// to the interpolating parabola for three knots and to linear for two.
pub fn cubic_fields(
    provided_slots: &[usize],
    provided_fields: &[DeformationField],
    t_lat: usize,
) -> Vec<DeformationField> {
    let n = provided_slots.len();
    if n <= 2 {
        return linear_fields(provided_slots, provided_fields, t_lat);
    }
    let (h, w) = provided_fields[0].extents();
    let xs: Vec<f64> = provided_slots.iter().map(|&s| s as f64).collect();
    let values = n * 2 * h * w;
    debug_assert_eq!(provided_fields.len() * provided_fields[0].displacement().numel(), values);

    // second derivatives per pixel/component: one shared factorization, many
    // right-hand sides
    let moments = spline_moments(&xs, provided_fields);
    let plane = 2 * h * w;

    (0..t_lat)
        .map(|t| {
            let x = (t as f64).clamp(xs[0], *xs.last().unwrap());
            let i = if x >= *xs.last().unwrap() {
                n - 2
            } else {
                xs.partition_point(|&v| v <= x).saturating_sub(1).min(n - 2)
            };
            let hseg = xs[i + 1] - xs[i];
            let a = (xs[i + 1] - x) / hseg;
            let b = (x - xs[i]) / hseg;
            let data: Vec<f64> = (0..plane)
                .map(|p| {
                    let yi = provided_fields[i].displacement().data()[p];
                    let yj = provided_fields[i + 1].displacement().data()[p];
                    let mi = moments[i * plane + p];
                    let mj = moments[(i + 1) * plane + p];
                    a * yi
                        + b * yj
                        + ((a * a * a - a) * mi + (b * b * b - b) * mj) * hseg * hseg / 6.0
                })
                .collect();
            DeformationField::from_tensor(Tensor::new(vec![2, h, w], data).expect("sized"))
                .expect("valid field")
        })
        .collect()
}

/// Solves the not-a-knot moment system once for all pixels. Returns the
/// second derivatives `M` as `[knot-major][pixel]`.
fn spline_moments(xs: &[f64], fields: &[DeformationField]) -> Vec<f64> {
    let n = xs.len();
    let plane = fields[0].displacement().numel();
    let hs: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();

    // dense system rows; n is small (<= t_lat)
    let mut a = vec![0.0; n * n];
    for i in 1..n - 1 {
        a[i * n + i - 1] = hs[i - 1] / 6.0;
        a[i * n + i] = (hs[i - 1] + hs[i]) / 3.0;
        a[i * n + i + 1] = hs[i] / 6.0;
    }
    if n == 3 {
        // interpolating parabola: constant second derivative
        a[0] = 1.0;
        a[1] = -1.0;
        a[(n - 1) * n + n - 2] = 1.0;
        a[(n - 1) * n + n - 1] = -1.0;
    } else {
        // third-derivative continuity at the second and penultimate knots
        a[0] = 1.0 / hs[0];
        a[1] = -(1.0 / hs[0] + 1.0 / hs[1]);
        a[2] = 1.0 / hs[1];
        let r = (n - 1) * n;
        a[r + n - 3] = 1.0 / hs[n - 3];
        a[r + n - 2] = -(1.0 / hs[n - 3] + 1.0 / hs[n - 2]);
        a[r + n - 1] = 1.0 / hs[n - 2];
    }

    let mut rhs = vec![0.0; n * plane];
    for i in 1..n - 1 {
        let ym = fields[i - 1].displacement().data();
        let y0 = fields[i].displacement().data();
        let yp = fields[i + 1].displacement().data();
        for p in 0..plane {
            rhs[i * plane + p] = (yp[p] - y0[p]) / hs[i] - (y0[p] - ym[p]) / hs[i - 1];
        }
    }

    gauss_solve_multi(&mut a, n, &mut rhs, plane);
    rhs
}

/// In-place Gaussian elimination with partial pivoting for `A X = B` where
/// `B` holds `m` right-hand sides row-major per equation.
fn gauss_solve_multi(a: &mut [f64], n: usize, b: &mut [f64], m: usize) {
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if a[row * n + col].abs() > a[pivot * n + col].abs() {
                pivot = row;
            }
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            for k in 0..m {
                b.swap(col * m + k, pivot * m + k);
            }
        }
        let diag = a[col * n + col];
        for row in 0..n {
            if row == col || a[row * n + col] == 0.0 {
                continue;
            }
            let factor = a[row * n + col] / diag;
            for k in col..n {
                a[row * n + k] -= factor * a[col * n + k];
            }
            for k in 0..m {
                b[row * m + k] -= factor * b[col * m + k];
            }
        }
    }
    for col in 0..n {
        let diag = a[col * n + col];
        for k in 0..m {
            b[col * m + k] /= diag;
        }
    }
}
