//! Evaluation metrics: intensity RMSE, Dice overlap, 95th-percentile
//! Hausdorff distance, warped volume curves, deformation regularity, and
//! endpoint error against known ground truth.
//!
//! All functions are pure and deterministic. The Hausdorff percentile pools
//! the directed distances of both directions before taking the percentile, so
//! the metric is symmetric by construction.

use serde::Serialize;

use crate::autodiff::Tensor;
use crate::deform::{warp, DeformationField, WarpMode};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("grid mismatch: {a:?} vs {b:?}")]
    GridMismatch { a: Vec<usize>, b: Vec<usize> },
    #[error("label {0} empty in both masks")]
    EmptyLabel(u8),
}

/// Root mean square intensity difference.
pub fn rmse(a: &Tensor, b: &Tensor) -> Result<f64, MetricsError> {
    if a.shape() != b.shape() {
        return Err(MetricsError::GridMismatch { a: a.shape().to_vec(), b: b.shape().to_vec() });
    }
    let acc: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((acc / a.numel() as f64).sqrt())
}

fn label_set(mask: &Tensor, label: u8) -> Vec<bool> {
    mask.data().iter().map(|&v| v.round() as i64 == label as i64).collect()
}

/// Dice overlap `2|A∩B| / (|A|+|B|)` of one label; defined as 1 when the
/// label is empty in both masks.
pub fn dice(mask_a: &Tensor, mask_b: &Tensor, label: u8) -> Result<f64, MetricsError> {
    if mask_a.shape() != mask_b.shape() {
        return Err(MetricsError::GridMismatch {
            a: mask_a.shape().to_vec(),
            b: mask_b.shape().to_vec(),
        });
    }
    let (a, b) = (label_set(mask_a, label), label_set(mask_b, label));
    let na = a.iter().filter(|&&v| v).count();
    let nb = b.iter().filter(|&&v| v).count();
    if na + nb == 0 {
        return Ok(1.0);
    }
    let inter = a.iter().zip(&b).filter(|(&x, &y)| x && y).count();
    Ok(2.0 * inter as f64 / (na + nb) as f64)
}

/// Boundary pixels of a label by 4-neighborhood (image border counts as
/// outside).
fn boundary_pixels(mask: &Tensor, label: u8) -> Vec<(usize, usize)> {
    let (h, w) = (mask.shape()[0], mask.shape()[1]);
    let set = label_set(mask, label);
    let at = |i: isize, j: isize| -> bool {
        if i < 0 || j < 0 || i >= h as isize || j >= w as isize {
            false
        } else {
            set[i as usize * w + j as usize]
        }
    };
    let mut out = Vec::new();
    for i in 0..h {
        for j in 0..w {
            if !set[i * w + j] {
                continue;
            }
            let (ii, jj) = (i as isize, j as isize);
            if !at(ii - 1, jj) || !at(ii + 1, jj) || !at(ii, jj - 1) || !at(ii, jj + 1) {
                out.push((i, j));
            }
        }
    }
    out
}

/// Pooled 95th-percentile symmetric Hausdorff distance in millimetres.
/// Directed boundary distances of both directions are pooled and the
/// percentile taken with linear interpolation between order statistics.
pub fn hausdorff95(mask_a: &Tensor, mask_b: &Tensor, label: u8, spacing: f64) -> Result<f64, MetricsError> {
    if mask_a.shape() != mask_b.shape() {
        return Err(MetricsError::GridMismatch {
            a: mask_a.shape().to_vec(),
            b: mask_b.shape().to_vec(),
        });
    }
    let ba = boundary_pixels(mask_a, label);
    let bb = boundary_pixels(mask_b, label);
    if ba.is_empty() || bb.is_empty() {
        return Err(MetricsError::EmptyLabel(label));
    }
    let directed = |from: &[(usize, usize)], to: &[(usize, usize)], pool: &mut Vec<f64>| {
        for &(i, j) in from {
            let mut best = f64::INFINITY;
            for &(p, q) in to {
                let dy = i as f64 - p as f64;
                let dx = j as f64 - q as f64;
                best = best.min(dy * dy + dx * dx);
            }
            pool.push(best.sqrt());
        }
    };
    let mut pool = Vec::with_capacity(ba.len() + bb.len());
    directed(&ba, &bb, &mut pool);
    directed(&bb, &ba, &mut pool);
    pool.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(percentile_sorted(&pool, 0.95) * spacing)
}

/// Linear-interpolated percentile of an ascending slice.
fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let rank = q * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Area curve from warping the reference (ED) mask through a deformation
/// sequence with nearest-neighbor lookup; entry 0 is the unwarped mask.
/// Areas are `pixel count × spacing²` for the given label.
pub fn volume_curve(
    ed_mask: &Tensor,
    fields: &[DeformationField],
    spacing: f64,
    label: u8,
) -> Result<Vec<f64>, MetricsError> {
    let px_area = spacing * spacing;
    let count = |m: &Tensor| label_set(m, label).iter().filter(|&&v| v).count() as f64 * px_area;
    let mut curve = Vec::with_capacity(fields.len() + 1);
    curve.push(count(ed_mask));
    for f in fields {
        let warped = warp(ed_mask, f, WarpMode::Nearest).map_err(|_| MetricsError::GridMismatch {
            a: ed_mask.shape().to_vec(),
            b: vec![f.extents().0, f.extents().1],
        })?;
        curve.push(count(&warped));
    }
    Ok(curve)
}

/// Mean Euclidean displacement difference in pixels over interior pixels,
/// optionally restricted to nonzero labels of `region`.
pub fn endpoint_error(
    phi_pred: &DeformationField,
    phi_gt: &DeformationField,
    region: Option<&Tensor>,
) -> Result<f64, MetricsError> {
    if phi_pred.extents() != phi_gt.extents() {
        let (a, b) = (phi_pred.extents(), phi_gt.extents());
        return Err(MetricsError::GridMismatch { a: vec![a.0, a.1], b: vec![b.0, b.1] });
    }
    let (h, w) = phi_pred.extents();
    let plane = h * w;
    let (p, g) = (phi_pred.displacement().data(), phi_gt.displacement().data());
    let mut acc = 0.0;
    let mut n = 0usize;
    for i in 1..h - 1 {
        for j in 1..w - 1 {
            if let Some(r) = region {
                if r.data()[i * w + j].round() == 0.0 {
                    continue;
                }
            }
            let dy = p[i * w + j] - g[i * w + j];
            let dx = p[plane + i * w + j] - g[plane + i * w + j];
            acc += (dy * dy + dx * dx).sqrt();
            n += 1;
        }
    }
    Ok(if n == 0 { 0.0 } else { acc / n as f64 })
}

/// Pearson correlation of two equal-length series.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}

/// Per-sequence evaluation results.
#[derive(Clone, Debug, Serialize)]
pub struct EvalRow {
    pub sequence: usize,
    pub rmse: f64,
    pub dice_pool: f64,
    pub dice_ring: f64,
    pub hd95_pool_mm: f64,
    pub hd95_ring_mm: f64,
    pub spatial_grad: f64,
    pub temporal_grad: f64,
    pub volume_rmse: f64,
    pub endpoint_px: f64,
}

/// CSV column set; kept in sync with [`EvalRow::csv_line`].
pub const EVAL_CSV_HEADER: &str =
    "sequence,rmse,dice_pool,dice_ring,hd95_pool_mm,hd95_ring_mm,spatial_grad,temporal_grad,volume_rmse,endpoint_px";

impl EvalRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.sequence,
            self.rmse,
            self.dice_pool,
            self.dice_ring,
            self.hd95_pool_mm,
            self.hd95_ring_mm,
            self.spatial_grad,
            self.temporal_grad,
            self.volume_rmse,
            self.endpoint_px
        )
    }
}

/// Mean and standard deviation of one metric across sequences.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
}

pub fn aggregate(values: &[f64]) -> Aggregate {
    if values.is_empty() {
        return Aggregate { mean: 0.0, std: 0.0 };
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Aggregate { mean, std: var.sqrt() }
}

/// Aggregated report over a test set.
#[derive(Clone, Debug, Serialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub rmse: Aggregate,
    pub dice_pool: Aggregate,
    pub dice_ring: Aggregate,
    pub hd95_pool_mm: Aggregate,
    pub hd95_ring_mm: Aggregate,
    pub spatial_grad: Aggregate,
    pub temporal_grad: Aggregate,
    pub volume_rmse: Aggregate,
    pub endpoint_px: Aggregate,
}

impl EvalReport {
    pub fn from_rows(rows: Vec<EvalRow>) -> Self {
        let pick = |f: fn(&EvalRow) -> f64| aggregate(&rows.iter().map(f).collect::<Vec<_>>());
        EvalReport {
            rmse: pick(|r| r.rmse),
            dice_pool: pick(|r| r.dice_pool),
            dice_ring: pick(|r| r.dice_ring),
            hd95_pool_mm: pick(|r| r.hd95_pool_mm),
            hd95_ring_mm: pick(|r| r.hd95_ring_mm),
            spatial_grad: pick(|r| r.spatial_grad),
            temporal_grad: pick(|r| r.temporal_grad),
            volume_rmse: pick(|r| r.volume_rmse),
            endpoint_px: pick(|r| r.endpoint_px),
            rows,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(EVAL_CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.csv_line());
            out.push('\n');
        }
        out
    }
}
