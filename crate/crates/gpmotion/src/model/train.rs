//! ELBO training loop: per-sequence steps with augmentation, temporal
//! dropout, reparameterized sampling, and Adam updates; batch size one.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{adam_step, Node, Tensor};
use crate::deform::{affine_resample, identity_grid, warp_on_tape, AffineParams};
use crate::gp::{KlGpOp, SamplePosteriorOp};
use crate::rng::ChaCha8Rng;
use crate::synth::SequenceRecord;

use super::features::{assemble_slots, subsequence_select, FeatureMatrix};
use super::net::Forward;
use super::{AugmentConfig, ModelError, MotionModel, TrainConfig};

/// One training-log entry; serialized to the run's CSV log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainLogRow {
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
    pub recon: f64,
    pub kl: f64,
}

pub const TRAIN_LOG_HEADER: &str = "epoch,step,loss,recon,kl";

impl TrainLogRow {
    pub fn csv_line(&self) -> String {
        format!("{},{},{},{},{}", self.epoch, self.step, self.loss, self.recon, self.kl)
    }
}

/// Loss value with its parts, as produced by one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct LossParts {
    pub loss: f64,
    pub recon: f64,
    pub kl: f64,
}

fn draw_symmetric(rng: &mut impl Rng, limit: f64) -> f64 {
    if limit > 0.0 {
        rng.random_range(-limit..limit)
    } else {
        0.0
    }
}

/// Samples one transform and applies it to every frame of the sequence.
fn augment_frames(frames: &[Tensor], cfg: &AugmentConfig, rng: &mut impl Rng) -> Vec<Tensor> {
    let params = AffineParams {
        shift: (draw_symmetric(rng, cfg.max_shift_px), draw_symmetric(rng, cfg.max_shift_px)),
        rot_deg: draw_symmetric(rng, cfg.max_rot_deg),
        scale: if cfg.scale_max > cfg.scale_min {
            rng.random_range(cfg.scale_min..cfg.scale_max)
        } else {
            cfg.scale_min
        },
        mirror: rng.random_bool(cfg.mirror_prob),
    };
    frames.iter().map(|f| affine_resample(f, &params)).collect()
}

/// Builds the full per-sequence graph (encode → assemble → TD → TCN → sample
/// → decode → ELBO) and returns loss values plus per-parameter gradients.
fn sequence_step(
    model: &MotionModel,
    frames: &[Tensor],
    spacing: f64,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(LossParts, Vec<Option<Tensor>>), ModelError> {
    let config = &model.config;
    let frame_count = frames.len();
    if frame_count < 2 {
        return Err(ModelError::Config("sequence needs at least two frames".into()));
    }
    let pair_count = frame_count - 1;
    let selected: Vec<usize> = match cfg.max_frames {
        Some(budget) => subsequence_select(frame_count, budget, rng),
        None => (0..pair_count).collect(),
    };
    let slots_all = assemble_slots(pair_count, config.t_lat)?;

    let mut fwd = Forward::new(model);
    let param_nodes: Vec<Node> = fwd.param_nodes().to_vec();

    // batched encoder over the selected pairs
    let (h, w) = (config.height, config.width);
    let mut batch = Tensor::zeros(vec![selected.len(), 2, h, w]);
    for (row, &k) in selected.iter().enumerate() {
        let plane = h * w;
        let base = row * 2 * plane;
        batch.data_mut()[base..base + plane].copy_from_slice(frames[0].data());
        batch.data_mut()[base + plane..base + 2 * plane].copy_from_slice(frames[k + 1].data());
    }
    let enc = fwd.encode_pairs(batch)?;

    let mut fm = FeatureMatrix::new(config.gamma_dim(), config.t_lat);
    for (row, &k) in selected.iter().enumerate() {
        let col = fwd.tape.index(enc, row)?;
        fm.place(slots_all[k], col);
    }
    fm.temporal_dropout(cfg.td_rate, rng);
    let gamma = fm.to_gamma(&mut fwd.tape)?;

    let (mu, s) = fwd.tcn(gamma, true, rng)?;
    let eps: Vec<f64> = (0..config.d * config.t_lat).map(|_| rng.sample(StandardNormal)).collect();
    let z = fwd.tape.custom(Box::new(SamplePosteriorOp::new(&model.kernel, eps)), &[mu, s])?;
    let z_rows = fwd.tape.transpose2(z)?;

    // full training decodes every latent slot; sub-sequence training decodes
    // only the selected ones to bound the cost
    let decode_slots: Vec<usize> = if cfg.max_frames.is_some() {
        selected.iter().map(|&k| slots_all[k]).collect()
    } else {
        (0..config.t_lat).collect()
    };
    let z_cols = fwd.tape.gather_rows(z_rows, decode_slots.clone())?;
    let pyramid = fwd.conditioning_pyramid(&frames[0]);
    let (_v, u) = fwd.decode(z_cols, &pyramid, spacing)?;

    // reconstruction on every selected pair; temporal dropout never shrinks
    // this set
    let id = fwd.tape.leaf(identity_grid(h, w));
    let mut recon_sum: Option<Node> = None;
    for &k in &selected {
        let slot = slots_all[k];
        let row = decode_slots.iter().position(|&sl| sl == slot).expect("decoded slot");
        let u_t = fwd.tape.index(u, row)?;
        let warped = warp_on_tape(&mut fwd.tape, pyramid[3], u_t, id)?;
        let target = fwd.tape.leaf(frames[k + 1].clone().reshape(vec![1, h, w])?);
        let diff = fwd.tape.sub(warped, target)?;
        let sq = fwd.tape.mul(diff, diff)?;
        let ssd = fwd.tape.sum(sq);
        recon_sum = Some(match recon_sum {
            Some(acc) => fwd.tape.add(acc, ssd)?,
            None => ssd,
        });
    }
    let recon = fwd.tape.scale(recon_sum.expect("at least one pair"), 0.5 / config.sigma_l);
    let kl = fwd.tape.custom(Box::new(KlGpOp::new(&model.kernel)), &[mu, s])?;
    let loss = fwd.tape.add(recon, kl)?;

    let parts = LossParts {
        loss: fwd.tape.value(loss).item(),
        recon: fwd.tape.value(recon).item(),
        kl: fwd.tape.value(kl).item(),
    };
    if cfg.debug_checks {
        fwd.tape.value(mu).check_finite("posterior mean")?;
        fwd.tape.value(s).check_finite("posterior scale")?;
        fwd.tape.value(u).check_finite("displacement stack")?;
    }

    let mut grads = fwd.tape.backward(loss)?;
    let collected: Vec<Option<Tensor>> = param_nodes.iter().map(|&n| grads.take(n)).collect();
    if cfg.debug_checks {
        for g in collected.iter().flatten() {
            g.check_finite("gradient")?;
        }
    }
    Ok((parts, collected))
}

/// Computes the ELBO parts of one sequence without updating parameters;
/// stochastic pieces (dropout, TD, sampling) draw from `rng` exactly as a
/// training step would.
pub fn sequence_loss(
    model: &MotionModel,
    record: &SequenceRecord,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<LossParts, ModelError> {
    let (parts, _) = sequence_step(model, &record.frames, record.spacing, cfg, rng)?;
    Ok(parts)
}

/// Loss parts plus the gradient of the loss for every parameter, aligned
/// with [`MotionModel::parameters`]; `None` means the parameter was not
/// reached (zero gradient). Used by the finite-difference audits.
pub fn sequence_gradients(
    model: &MotionModel,
    record: &SequenceRecord,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(LossParts, Vec<Option<Tensor>>), ModelError> {
    sequence_step(model, &record.frames, record.spacing, cfg, rng)
}

/// Runs the training loop: epochs of shuffled per-sequence Adam steps.
/// Deterministic given the seed. Aborts with a divergence error when the
/// loss stops being finite.
pub fn train(
    model: &mut MotionModel,
    dataset: &[SequenceRecord],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Vec<TrainLogRow>, ModelError> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(ModelError::Config("training dataset is empty".into()));
    }
    let mut rng = crate::rng::seeded(seed);
    let mut log = Vec::new();
    let mut step = 0usize;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        order.shuffle(&mut rng);
        for &idx in &order {
            let record = &dataset[idx];
            let frames = if cfg.augment.enabled {
                augment_frames(&record.frames, &cfg.augment, &mut rng)
            } else {
                record.frames.clone()
            };
            let (parts, grads) = sequence_step(model, &frames, record.spacing, cfg, &mut rng)?;
            if !parts.loss.is_finite() {
                return Err(ModelError::Divergence { epoch, step });
            }
            for (param, grad) in model.params.iter_mut().zip(grads) {
                param.zero_grad();
                if let Some(g) = grad {
                    param.grad = g;
                }
            }
            adam_step(&mut model.params, &cfg.adam);
            log.push(TrainLogRow { epoch, step, loss: parts.loss, recon: parts.recon, kl: parts.kl });
            step += 1;
        }
    }
    Ok(log)
}
