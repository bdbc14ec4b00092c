//! Feature-matrix assembly, temporal dropout, and sub-sequence selection.

use rand::Rng;

use crate::autodiff::{Node, Tape};

use super::ModelError;

/// Latent slot for each of `pair_count` image pairs, spread evenly over
/// `t_lat` columns: `slot(k) = round(k·(T−1)/(P−1))`. Collisions (defensive;
/// the rounding rule cannot produce them while `P ≤ T`) shift the later
/// feature to the next free slot rightward.
pub fn assemble_slots(pair_count: usize, t_lat: usize) -> Result<Vec<usize>, ModelError> {
    if pair_count > t_lat {
        return Err(ModelError::TooManyPairs { pairs: pair_count, t_lat });
    }
    if pair_count == 0 {
        return Ok(Vec::new());
    }
    let mut used = vec![false; t_lat];
    let mut slots = Vec::with_capacity(pair_count);
    for k in 0..pair_count {
        let ideal = if pair_count == 1 {
            0
        } else {
            (k as f64 * (t_lat - 1) as f64 / (pair_count - 1) as f64).round() as usize
        };
        let mut slot = ideal.min(t_lat - 1);
        while used[slot] {
            slot += 1;
        }
        used[slot] = true;
        slots.push(slot);
    }
    Ok(slots)
}

/// The per-sequence feature matrix Γ during graph construction: one optional
/// feature column per latent slot, plus the availability mask that drives the
/// reconstruction loss. Columns without a feature stay exactly zero.
pub struct FeatureMatrix {
    pub dim: usize,
    pub t_lat: usize,
    pub columns: Vec<Option<Node>>,
    pub available: Vec<bool>,
}

impl FeatureMatrix {
    pub fn new(dim: usize, t_lat: usize) -> Self {
        FeatureMatrix { dim, t_lat, columns: vec![None; t_lat], available: vec![false; t_lat] }
    }

    pub fn place(&mut self, slot: usize, feature: Node) {
        self.columns[slot] = Some(feature);
        self.available[slot] = true;
    }

    /// Temporal dropout: independently zeroes available feature columns with
    /// probability `rate`. The availability mask — and with it the set of
    /// reconstructed frames — is deliberately left unchanged.
    pub fn temporal_dropout(&mut self, rate: f64, rng: &mut impl Rng) {
        if rate <= 0.0 {
            return;
        }
        for col in self.columns.iter_mut() {
            if col.is_some() && rng.random_bool(rate) {
                *col = None;
            }
        }
    }

    /// Materializes Γ as a `[dim, t_lat]` tape node.
    pub fn to_gamma(&self, tape: &mut Tape) -> Result<Node, ModelError> {
        let mut cols = Vec::new();
        let mut slots = Vec::new();
        for (slot, col) in self.columns.iter().enumerate() {
            if let Some(n) = col {
                cols.push(*n);
                slots.push(slot);
            }
        }
        Ok(tape.scatter_columns(&cols, &slots, self.dim, self.t_lat)?)
    }
}

/// Random sub-sequence training: all pairs when they fit the frame budget,
/// otherwise a uniform sorted subset of `max_frames` pair indices.
pub fn subsequence_select(frame_count: usize, max_frames: usize, rng: &mut impl Rng) -> Vec<usize> {
    let pairs = frame_count - 1;
    if pairs <= max_frames {
        return (0..pairs).collect();
    }
    // Floyd's sampling: uniform subset without replacement
    let mut chosen = Vec::with_capacity(max_frames);
    for j in pairs - max_frames..pairs {
        let t = rng.random_range(0..=j);
        if chosen.contains(&t) {
            chosen.push(j);
        } else {
            chosen.push(t);
        }
    }
    chosen.sort_unstable();
    chosen
}
