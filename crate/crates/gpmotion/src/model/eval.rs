//! Per-sequence evaluation against synthetic ground truth, plus the
//! undeformed baseline and the rotated-test-set protocol.

use crate::autodiff::Tensor;
use crate::deform::{field_gradients, rot90, warp, DeformationField, WarpMode};
use crate::metrics::{
    dice, endpoint_error, hausdorff95, rmse, volume_curve, EvalRow,
};
use crate::synth::{ground_truth_volume_curve, SequenceRecord};

use super::infer::register;
use super::{ModelError, MotionModel};

const POOL: u8 = 1;
const RING: u8 = 2;

fn curve_rmse(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let acc: f64 = a[..n].iter().zip(&b[..n]).map(|(x, y)| (x - y) * (x - y)).sum();
    (acc / n as f64).sqrt()
}

/// Shared scoring for a given prediction (fields per pair + warped frames).
fn row_from_prediction(
    record: &SequenceRecord,
    index: usize,
    fields: &[DeformationField],
    warped: &[Tensor],
) -> Result<EvalRow, ModelError> {
    let masks = record
        .masks
        .as_ref()
        .ok_or_else(|| ModelError::Config("evaluation requires masks".into()))?;
    let es = record
        .es_index()
        .ok_or_else(|| ModelError::Config("record has no ES frame information".into()))?;
    if es == 0 {
        return Err(ModelError::Config("ES frame coincides with the reference frame".into()));
    }
    let grid = record.grid();

    let mut rmse_acc = 0.0;
    for (k, w) in warped.iter().enumerate() {
        rmse_acc += rmse(w, &record.frames[k + 1])?;
    }
    let rmse_mean = rmse_acc / warped.len() as f64;

    let warped_ed_mask = warp(&masks[0], &fields[es - 1], WarpMode::Nearest)?;
    let dice_pool = dice(&warped_ed_mask, &masks[es], POOL)?;
    let dice_ring = dice(&warped_ed_mask, &masks[es], RING)?;
    let hd95_pool = hausdorff95(&warped_ed_mask, &masks[es], POOL, record.spacing)?;
    let hd95_ring = hausdorff95(&warped_ed_mask, &masks[es], RING, record.spacing)?;

    let (spatial_grad, temporal_grad) = field_gradients(fields, &grid);

    let predicted_curve = volume_curve(&masks[0], fields, record.spacing, POOL)?;
    let gt_curve = ground_truth_volume_curve(record)?;
    let volume_rmse = curve_rmse(&predicted_curve, &gt_curve);

    let endpoint_px = match record.gt_fields.as_ref() {
        Some(gt) => {
            let mut acc = 0.0;
            for (k, f) in fields.iter().enumerate() {
                acc += endpoint_error(f, &gt[k + 1], Some(&masks[k + 1]))?;
            }
            acc / fields.len() as f64
        }
        None => return Err(ModelError::Config("evaluation requires ground-truth fields".into())),
    };

    Ok(EvalRow {
        sequence: index,
        rmse: rmse_mean,
        dice_pool,
        dice_ring,
        hd95_pool_mm: hd95_pool,
        hd95_ring_mm: hd95_ring,
        spatial_grad,
        temporal_grad,
        volume_rmse,
        endpoint_px,
    })
}

/// Registers the sequence and scores it.
pub fn evaluate_record(model: &MotionModel, record: &SequenceRecord, index: usize) -> Result<EvalRow, ModelError> {
    let out = register(model, record)?;
    row_from_prediction(record, index, &out.fields, &out.warped)
}

/// Baseline row with identity deformations (the undeformed case).
pub fn undeformed_row(record: &SequenceRecord, index: usize) -> Result<EvalRow, ModelError> {
    let (h, w) = record.extents();
    let pairs = record.frame_count() - 1;
    let fields: Vec<DeformationField> = (0..pairs).map(|_| DeformationField::identity(h, w)).collect();
    let warped: Vec<Tensor> = (0..pairs).map(|_| record.frames[0].clone()).collect();
    row_from_prediction(record, index, &fields, &warped)
}

/// Rotates a displacement field counter-clockwise by `k·90°`: positions are
/// permuted and the components transform as vectors ((uy,ux) → (−ux,uy) per
/// quarter turn).
pub fn rotate_field(field: &DeformationField, k: usize) -> DeformationField {
    let mut out = field.clone();
    for _ in 0..k % 4 {
        let (h, w) = out.extents();
        let plane = h * w;
        let uy = Tensor::new(vec![h, w], out.displacement().data()[..plane].to_vec()).expect("plane");
        let ux = Tensor::new(vec![h, w], out.displacement().data()[plane..].to_vec()).expect("plane");
        let new_uy = rot90(&ux, 1).map(|v| -v);
        let new_ux = rot90(&uy, 1);
        let mut data = new_uy.into_data();
        data.extend(new_ux.into_data());
        out = DeformationField::from_tensor(Tensor::new(vec![2, w, h], data).expect("sized"))
            .expect("valid field");
    }
    out
}

/// Rotates frames, masks, and ground-truth fields of a record by `k·90°`.
/// Odd quarter turns require a square grid.
pub fn rotate_record(record: &SequenceRecord, k: usize) -> Result<SequenceRecord, ModelError> {
    let (h, w) = record.extents();
    if k % 2 == 1 && h != w {
        return Err(ModelError::Config("odd quarter-turns require a square grid".into()));
    }
    Ok(SequenceRecord {
        spacing: record.spacing,
        frames: record.frames.iter().map(|f| rot90(f, k)).collect(),
        masks: record
            .masks
            .as_ref()
            .map(|ms| ms.iter().map(|m| rot90(m, k)).collect()),
        scale_curve: record.scale_curve.clone(),
        gt_fields: record
            .gt_fields
            .as_ref()
            .map(|fs| fs.iter().map(|f| rotate_field(f, k)).collect()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deform::exponentiate;
    use crate::deform::VelocityField;

    #[test]
    fn rotated_fields_stay_consistent_with_rotated_images() {
        // warp(rot(I), rot(phi)) == rot(warp(I, phi)) for quarter turns
        let img = Tensor::from_fn(vec![12, 12], |ix| {
            ((ix[0] as f64 * 0.7).sin() + (ix[1] as f64 * 0.4).cos()) * 0.5 + 0.5
        });
        let v = Tensor::from_fn(vec![2, 12, 12], |ix| {
            1.2 * ((ix[1] as f64 * 0.5 + ix[2] as f64 * 0.3 + ix[0] as f64).sin())
        });
        let phi = exponentiate(&VelocityField::from_tensor(v).unwrap(), 6);
        for k in 1..4 {
            let direct = rot90(&warp(&img, &phi, WarpMode::Bilinear).unwrap(), k);
            let rotated = warp(&rot90(&img, k), &rotate_field(&phi, k), WarpMode::Bilinear).unwrap();
            for (a, b) in direct.data().iter().zip(rotated.data()) {
                assert!((a - b).abs() < 1e-10, "k={k}");
            }
        }
    }
}
