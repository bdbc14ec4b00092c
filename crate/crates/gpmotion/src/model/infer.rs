//! Deterministic inference: registration, temporal interpolation, full
//! simulation, and motion transport. All paths decode from the posterior
//! mean (no sampling) and are pure functions of `(inputs, parameters)`.

use crate::autodiff::Tensor;
use crate::deform::{warp, DeformationField, VelocityField, WarpMode};
use crate::gp::{MotionMatrix, PosteriorParams, Provenance};
use crate::synth::SequenceRecord;

use super::features::{assemble_slots, FeatureMatrix};
use super::net::{Forward, MotionModel};
use super::ModelError;

/// Registration result: one deformation per original pair plus the full
/// latent-slot decode and the posterior-mean motion matrix.
pub struct RegisterOutput {
    /// φ_t for each image pair, read from its latent slot.
    pub fields: Vec<DeformationField>,
    /// `I_0 ∘ φ_t` per pair.
    pub warped: Vec<Tensor>,
    /// Latent slot of each pair.
    pub pair_slots: Vec<usize>,
    /// Deformations of every latent slot.
    pub all_fields: Vec<DeformationField>,
    pub motion: MotionMatrix,
}

/// Posterior parameters from the available feature columns.
/// `provided_pairs = None` encodes every pair; otherwise only the listed pair
/// indices are encoded and the remaining columns stay zero.
fn posterior_params(
    model: &MotionModel,
    record: &SequenceRecord,
    provided_pairs: Option<&[usize]>,
) -> Result<(PosteriorParams, Vec<usize>), ModelError> {
    model.check_finite()?;
    let config = model.config();
    let frames = &record.frames;
    let pair_count = frames.len() - 1;
    let slots = assemble_slots(pair_count, config.t_lat)?;
    let provided: Vec<usize> = match provided_pairs {
        Some(p) => {
            if let Some(&bad) = p.iter().find(|&&k| k >= pair_count) {
                return Err(ModelError::Config(format!("pair index {bad} out of range (P={pair_count})")));
            }
            p.to_vec()
        }
        None => (0..pair_count).collect(),
    };

    let mut fwd = Forward::new(model);
    let (h, w) = (config.height, config.width);
    let mut fm = FeatureMatrix::new(config.gamma_dim(), config.t_lat);
    if !provided.is_empty() {
        let mut batch = Tensor::zeros(vec![provided.len(), 2, h, w]);
        for (row, &k) in provided.iter().enumerate() {
            let plane = h * w;
            let base = row * 2 * plane;
            batch.data_mut()[base..base + plane].copy_from_slice(frames[0].data());
            batch.data_mut()[base + plane..base + 2 * plane].copy_from_slice(frames[k + 1].data());
        }
        let enc = fwd.encode_pairs(batch)?;
        for (row, &k) in provided.iter().enumerate() {
            let col = fwd.tape.index(enc, row)?;
            fm.place(slots[k], col);
        }
    }
    let gamma = fm.to_gamma(&mut fwd.tape)?;
    let mut eval_rng = crate::rng::seeded(0); // eval mode draws nothing
    let (mu, s) = fwd.tcn(gamma, false, &mut eval_rng)?;
    let params = PosteriorParams::new(
        fwd.tape.value(mu).data().to_vec(),
        fwd.tape.value(s).data().to_vec(),
    )?;
    Ok((params, slots))
}

/// Deterministic posterior of a full sequence (all pairs encoded).
pub fn posterior(model: &MotionModel, record: &SequenceRecord) -> Result<PosteriorParams, ModelError> {
    Ok(posterior_params(model, record, None)?.0)
}

/// Decodes every latent slot of a motion matrix conditioned on `i0`.
pub fn decode_all_slots(
    model: &MotionModel,
    motion: &MotionMatrix,
    i0: &Tensor,
    spacing: f64,
) -> Result<Vec<DeformationField>, ModelError> {
    let config = model.config();
    if motion.d != config.d || motion.t_lat != config.t_lat {
        return Err(ModelError::Incompatible(format!(
            "motion matrix {}x{} does not match model {}x{}",
            motion.d, motion.t_lat, config.d, config.t_lat
        )));
    }
    if i0.shape() != [config.height, config.width] {
        return Err(ModelError::Config(format!(
            "conditioning image {:?} does not match configured grid",
            i0.shape()
        )));
    }
    let mut fwd = Forward::new(model);
    // z columns as [T,D] rows
    let z_cols = Tensor::from_fn(vec![config.t_lat, config.d], |ix| motion.z[ix[1] * config.t_lat + ix[0]]);
    let z_node = fwd.tape.leaf(z_cols);
    let pyramid = fwd.conditioning_pyramid(i0);
    let (_v, u) = fwd.decode(z_node, &pyramid, spacing)?;
    let (h, w) = (config.height, config.width);
    let mut fields = Vec::with_capacity(config.t_lat);
    for t in 0..config.t_lat {
        let stack = fwd.tape.value(u);
        let plane = h * w;
        let slice = &stack.data()[t * 2 * plane..(t + 1) * 2 * plane];
        fields.push(DeformationField::from_tensor(Tensor::new(vec![2, h, w], slice.to_vec())?)?);
    }
    Ok(fields)
}

/// Registers a sequence: posterior-mean inference, one deformation per pair.
pub fn register(model: &MotionModel, record: &SequenceRecord) -> Result<RegisterOutput, ModelError> {
    let (params, slots) = posterior_params(model, record, None)?;
    let config = model.config();
    let motion = MotionMatrix::new(config.d, config.t_lat, params.mu, Provenance::Mean)?;
    let all_fields = decode_all_slots(model, &motion, &record.frames[0], record.spacing)?;
    let fields: Vec<DeformationField> = slots.iter().map(|&s| all_fields[s].clone()).collect();
    let warped = fields
        .iter()
        .map(|f| warp(&record.frames[0], f, WarpMode::Bilinear).map_err(ModelError::from))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RegisterOutput { fields, warped, pair_slots: slots, all_fields, motion })
}

/// Temporal interpolation: only `provided_pairs` are encoded (the other
/// columns are zero) and all latent slots are decoded.
pub fn interpolate(
    model: &MotionModel,
    record: &SequenceRecord,
    provided_pairs: &[usize],
) -> Result<(Vec<DeformationField>, MotionMatrix), ModelError> {
    if provided_pairs.is_empty() {
        return Err(ModelError::Config(
            "interpolation needs at least one provided pair (use simulation for none)".into(),
        ));
    }
    let (params, _slots) = posterior_params(model, record, Some(provided_pairs))?;
    let config = model.config();
    let motion = MotionMatrix::new(config.d, config.t_lat, params.mu, Provenance::Mean)?;
    let fields = decode_all_slots(model, &motion, &record.frames[0], record.spacing)?;
    Ok((fields, motion))
}

/// Decodes a single latent column: the velocity, the deformation, and the
/// warped moving image for that step.
pub fn decode_step(
    model: &MotionModel,
    z_col: &[f64],
    i0: &Tensor,
    spacing: f64,
) -> Result<(VelocityField, DeformationField, Tensor), ModelError> {
    let config = model.config();
    if z_col.len() != config.d {
        return Err(ModelError::Incompatible(format!(
            "latent column length {} does not match D={}",
            z_col.len(),
            config.d
        )));
    }
    let mut fwd = Forward::new(model);
    let z = fwd.tape.leaf(Tensor::new(vec![1, config.d], z_col.to_vec())?);
    let pyramid = fwd.conditioning_pyramid(i0);
    let (v, u) = fwd.decode(z, &pyramid, spacing)?;
    let (h, w) = (config.height, config.width);
    let v_t = VelocityField::from_tensor(Tensor::new(
        vec![2, h, w],
        fwd.tape.value(v).data().to_vec(),
    )?)?;
    let phi = DeformationField::from_tensor(Tensor::new(
        vec![2, h, w],
        fwd.tape.value(u).data().to_vec(),
    )?)?;
    let warped = warp(i0, &phi, WarpMode::Bilinear)?;
    Ok((v_t, phi, warped))
}

/// Full motion simulation from the reference image alone: Γ is zero
/// everywhere, the decode is conditioned on `i0`.
pub fn simulate(
    model: &MotionModel,
    i0: &Tensor,
    spacing: f64,
) -> Result<(Vec<DeformationField>, MotionMatrix), ModelError> {
    model.check_finite()?;
    let config = model.config();
    let mut fwd = Forward::new(model);
    let fm = FeatureMatrix::new(config.gamma_dim(), config.t_lat);
    let gamma = fm.to_gamma(&mut fwd.tape)?;
    let mut eval_rng = crate::rng::seeded(0);
    let (mu, _s) = fwd.tcn(gamma, false, &mut eval_rng)?;
    let motion = MotionMatrix::new(config.d, config.t_lat, fwd.tape.value(mu).data().to_vec(), Provenance::Mean)?;
    let fields = decode_all_slots(model, &motion, i0, spacing)?;
    Ok((fields, motion))
}

/// Motion transport: decodes another sequence's motion matrix conditioned on
/// a new subject's reference frame. No inter-subject registration happens.
pub fn transport(
    model: &MotionModel,
    z_source: &MotionMatrix,
    i0_target: &Tensor,
    spacing: f64,
) -> Result<Vec<DeformationField>, ModelError> {
    model.check_finite()?;
    let transported = MotionMatrix {
        provenance: Provenance::Transported,
        ..z_source.clone()
    };
    decode_all_slots(model, &transported, i0_target, spacing)
}
