//! Synthetic cardiac-like sequences with analytically known deformations.
//!
//! Each record is a textured ring (myocardium analog) around a bright pool
//! (blood-pool analog) that contracts and relaxes radially over the cycle.
//! The radial scale follows a piecewise cosine: 1 at the reference frame,
//! minimum `1−c` at the ES-analog frame, return to 1 with a diastasis plateau
//! before the end. The scaling acts on the object and decays smoothly to
//! identity a few pixels outside the ring, so the whole image stays consistent
//! with a known, invertible displacement field of bounded magnitude.
//!
//! Frames, masks, and ground-truth fields are generated from the same radial
//! map, with ground truth stored in the pull-back convention used by
//! registration: `I_t(x) = I_0(x + u_t(x))`.

use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::deform::{DeformationField, GridSpec};
use crate::rng::substream;

/// Width in pixels of the smooth falloff from object motion to static
/// background.
const FALLOFF_WIDTH: f64 = 2.5;

/// Intensity levels of the three regions before texturing.
const POOL_LEVEL: f64 = 0.85;
const RING_LEVEL: f64 = 0.35;
const BACKGROUND_LEVEL: f64 = 0.12;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("record has no masks")]
    MissingMasks,
    #[error("dataset file: bad magic")]
    BadMagic,
    #[error("dataset file: unsupported version {0}")]
    UnsupportedVersion(u16),
    #[error("dataset file: truncated ({0})")]
    Truncated(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Generator parameters. Radius, contraction, and center vary per record
/// within the given jitters so a dataset spans motion strengths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub height: usize,
    pub width: usize,
    pub spacing: f64,
    pub frames: usize,
    /// Blood-pool analog radius in pixels.
    pub r_bp: f64,
    /// Myocardium-analog ring thickness in pixels.
    pub ring_thickness: f64,
    /// Contraction fraction range; each record draws c uniformly from it.
    pub c_min: f64,
    pub c_max: f64,
    /// ES position as a fraction of the cycle.
    pub p_es: f64,
    /// Diastasis plateau length as a fraction of the cycle.
    pub plateau_frac: f64,
    /// Center jitter standard deviation in pixels (draws clamped to ±2σ).
    pub center_jitter: f64,
    /// Uniform ± jitter on the pool radius in pixels.
    pub radius_jitter: f64,
    /// Additive Gaussian intensity noise per frame.
    pub noise_std: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            height: 32,
            width: 32,
            spacing: 1.5,
            frames: 16,
            r_bp: 6.5,
            ring_thickness: 3.5,
            c_min: 0.15,
            c_max: 0.45,
            p_es: 0.35,
            plateau_frac: 0.2,
            center_jitter: 0.75,
            radius_jitter: 0.75,
            noise_std: 0.01,
        }
    }
}

impl SyntheticSpec {
    pub fn grid(&self) -> Result<GridSpec, SynthError> {
        GridSpec::new(self.height, self.width, self.spacing)
            .map_err(|e| SynthError::InvalidSpec(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        self.grid()?;
        if self.frames < 2 {
            return Err(SynthError::InvalidSpec("need at least 2 frames".into()));
        }
        if !(self.c_min >= 0.0 && self.c_max < 0.6 && self.c_min <= self.c_max) {
            return Err(SynthError::InvalidSpec(format!(
                "contraction range [{}, {}] must lie in [0, 0.6)",
                self.c_min, self.c_max
            )));
        }
        if !(self.p_es > 0.0 && self.p_es < 1.0 && self.plateau_frac >= 0.0) {
            return Err(SynthError::InvalidSpec("p_es must be in (0,1)".into()));
        }
        let cycle = (self.frames - 1) as f64;
        let t_es = (self.p_es * cycle).round();
        let relax_end = cycle - (self.plateau_frac * cycle).round();
        if !(t_es >= 1.0 && relax_end > t_es) {
            return Err(SynthError::InvalidSpec("contraction/relaxation phases collapse".into()));
        }
        // ring must fit with >= 2 px margin at maximal dilation (scale 1)
        let r_out = self.r_bp + self.radius_jitter + self.ring_thickness;
        let half = (self.height.min(self.width) as f64 - 1.0) / 2.0;
        if r_out + 2.0 * self.center_jitter + 2.0 > half {
            return Err(SynthError::InvalidSpec(format!(
                "ring (outer radius {r_out}) does not fit the grid with a 2 px margin"
            )));
        }
        Ok(())
    }

    /// Radial scale per frame: 1 → 1−c → 1 with a terminal plateau.
    pub fn scale_curve(&self, c: f64) -> Vec<f64> {
        let cycle = (self.frames - 1) as f64;
        let t_es = (self.p_es * cycle).round();
        let relax_end = cycle - (self.plateau_frac * cycle).round();
        (0..self.frames)
            .map(|t| {
                let t = t as f64;
                if t <= t_es {
                    1.0 - c * (1.0 - (std::f64::consts::PI * t / t_es).cos()) / 2.0
                } else if t <= relax_end {
                    let u = (t - t_es) / (relax_end - t_es);
                    1.0 - c * (1.0 + (std::f64::consts::PI * u).cos()) / 2.0
                } else {
                    1.0
                }
            })
            .collect()
    }

    /// Frame index of minimal scale.
    pub fn es_index(&self) -> usize {
        (self.p_es * (self.frames - 1) as f64).round() as usize
    }
}

/// One generated sequence: frames in `[0,1]`, label masks (0 background,
/// 1 pool, 2 ring), the radial scale curve, and pull-back ground-truth
/// displacement fields (entry 0 is the identity).
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceRecord {
    pub spacing: f64,
    pub frames: Vec<Tensor>,
    pub masks: Option<Vec<Tensor>>,
    pub scale_curve: Option<Vec<f64>>,
    pub gt_fields: Option<Vec<DeformationField>>,
}

impl SequenceRecord {
    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn extents(&self) -> (usize, usize) {
        (self.frames[0].shape()[0], self.frames[0].shape()[1])
    }

    pub fn grid(&self) -> GridSpec {
        let (h, w) = self.extents();
        GridSpec::new(h, w, self.spacing).expect("records hold valid grids")
    }

    /// ES-analog frame: argmin of the scale curve, falling back to the frame
    /// with minimal pool area.
    pub fn es_index(&self) -> Option<usize> {
        if let Some(curve) = &self.scale_curve {
            let mut best = 0;
            for (i, &s) in curve.iter().enumerate() {
                if s < curve[best] {
                    best = i;
                }
            }
            return Some(best);
        }
        let masks = self.masks.as_ref()?;
        let mut best = 0;
        let mut best_area = usize::MAX;
        for (i, m) in masks.iter().enumerate() {
            let area = m.data().iter().filter(|&&v| v == 1.0).count();
            if area < best_area {
                best_area = area;
                best = i;
            }
        }
        Some(best)
    }
}

fn smoothstep01(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * (3.0 - 2.0 * u)
}

/// Motion weight in material coordinates: 1 inside the object, 0 beyond the
/// falloff band.
fn motion_weight(r0: f64, r_obj: f64) -> f64 {
    1.0 - smoothstep01((r0 - r_obj) / FALLOFF_WIDTH)
}

/// Forward radial map `ψ_s(r0) = r0·(1 + (s−1)·w(r0))`.
fn forward_radius(r0: f64, s: f64, r_obj: f64) -> f64 {
    r0 * (1.0 + (s - 1.0) * motion_weight(r0, r_obj))
}

/// Inverse of the forward radial map by bisection (monotone for c < 0.6).
fn inverse_radius(r: f64, s: f64, r_obj: f64) -> f64 {
    let outer = r_obj + FALLOFF_WIDTH;
    if s == 1.0 || r >= outer {
        return r;
    }
    let (mut lo, mut hi) = (0.0, outer);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if forward_radius(mid, s, r_obj) < r {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

struct RecordGeometry {
    center: (f64, f64),
    r_bp: f64,
    r_obj: f64,
    c: f64,
    texture: Vec<(f64, f64, f64, f64)>,
}

impl RecordGeometry {
    fn texture_at(&self, y: f64, x: f64, extent: f64) -> f64 {
        let mut acc = 0.0;
        for &(a, fy, fx, ph) in &self.texture {
            acc += a * (2.0 * std::f64::consts::PI * (fy * y + fx * x) / extent + ph).cos();
        }
        acc
    }

    /// Base image intensity at material (frame-0) coordinates.
    fn material_intensity(&self, y: f64, x: f64, extent: f64) -> f64 {
        let dy = y - self.center.0;
        let dx = x - self.center.1;
        let r0 = (dy * dy + dx * dx).sqrt();
        let e1 = smoothstep01(r0 - self.r_bp + 0.5);
        let e2 = smoothstep01(r0 - self.r_obj + 0.5);
        let base = POOL_LEVEL * (1.0 - e1) + RING_LEVEL * e1;
        let base = base * (1.0 - e2) + BACKGROUND_LEVEL * e2;
        base + self.texture_at(y, x, extent)
    }

    fn material_label(&self, r0: f64) -> f64 {
        if r0 < self.r_bp {
            1.0
        } else if r0 < self.r_obj {
            2.0
        } else {
            0.0
        }
    }
}

/// Generates one sequence. Noise-free generation is bit-reproducible for a
/// given RNG state; all stored values are quantized to `f32` so dataset
/// round-trips are exact.
pub fn generate_sequence(spec: &SyntheticSpec, rng: &mut impl Rng) -> Result<SequenceRecord, SynthError> {
    spec.validate()?;
    let (h, w) = (spec.height, spec.width);
    let extent = h.max(w) as f64;
    let cy = (h - 1) as f64 / 2.0;
    let cx = (w - 1) as f64 / 2.0;
    let jitter = |rng: &mut dyn rand::RngCore, sd: f64| -> f64 {
        if sd == 0.0 {
            return 0.0;
        }
        let v: f64 = rng.sample(rand_distr::StandardNormal);
        (v * sd).clamp(-2.0 * sd, 2.0 * sd)
    };

    let c = if spec.c_max > spec.c_min {
        rng.random_range(spec.c_min..spec.c_max)
    } else {
        spec.c_min
    };
    let r_bp = spec.r_bp + if spec.radius_jitter > 0.0 {
        rng.random_range(-spec.radius_jitter..spec.radius_jitter)
    } else {
        0.0
    };
    let geo = RecordGeometry {
        center: (cy + jitter(rng, spec.center_jitter), cx + jitter(rng, spec.center_jitter)),
        r_bp,
        r_obj: r_bp + spec.ring_thickness,
        c,
        texture: (0..4)
            .map(|_| {
                (
                    rng.random_range(0.02..0.06),
                    rng.random_range(0.5..2.5),
                    rng.random_range(0.5..2.5),
                    rng.random_range(0.0..std::f64::consts::TAU),
                )
            })
            .collect(),
    };

    let curve = spec.scale_curve(geo.c);
    let q = |v: f64| v as f32 as f64;

    let mut frames = Vec::with_capacity(spec.frames);
    let mut masks = Vec::with_capacity(spec.frames);
    let mut fields = Vec::with_capacity(spec.frames);
    for &s in &curve {
        let mut frame = Tensor::zeros(vec![h, w]);
        let mut mask = Tensor::zeros(vec![h, w]);
        let mut field = DeformationField::identity(h, w);
        let plane = h * w;
        for i in 0..h {
            for j in 0..w {
                let dy = i as f64 - geo.center.0;
                let dx = j as f64 - geo.center.1;
                let r = (dy * dy + dx * dx).sqrt();
                let r0 = inverse_radius(r, s, geo.r_obj);
                let ratio = if r > 1e-9 { r0 / r } else { 1.0 };
                let uy = (ratio - 1.0) * dy;
                let ux = (ratio - 1.0) * dx;
                field.displacement_mut().data_mut()[i * w + j] = q(uy);
                field.displacement_mut().data_mut()[plane + i * w + j] = q(ux);
                let my = geo.center.0 + ratio * dy;
                let mx = geo.center.1 + ratio * dx;
                let mut v = geo.material_intensity(my, mx, extent);
                if spec.noise_std > 0.0 {
                    let n: f64 = rng.sample(rand_distr::StandardNormal);
                    v += n * spec.noise_std;
                }
                frame.data_mut()[i * w + j] = q(v.clamp(0.0, 1.0));
                mask.data_mut()[i * w + j] = geo.material_label(r0);
            }
        }
        frames.push(frame);
        masks.push(mask);
        fields.push(field);
    }

    Ok(SequenceRecord {
        spacing: spec.spacing,
        frames,
        masks: Some(masks),
        scale_curve: Some(curve.iter().map(|&s| q(s)).collect()),
        gt_fields: Some(fields),
    })
}

/// Generates `count` records from independent RNG substreams of `seed`.
pub fn generate_dataset(spec: &SyntheticSpec, count: usize, seed: u64) -> Result<Vec<SequenceRecord>, SynthError> {
    (0..count)
        .map(|k| {
            let mut rng = substream(seed, k as u64);
            generate_sequence(spec, &mut rng)
        })
        .collect()
}

/// Blood-pool area per frame in mm² (pixel count × spacing²).
pub fn ground_truth_volume_curve(record: &SequenceRecord) -> Result<Vec<f64>, SynthError> {
    let masks = record.masks.as_ref().ok_or(SynthError::MissingMasks)?;
    let px_area = record.spacing * record.spacing;
    Ok(masks
        .iter()
        .map(|m| m.data().iter().filter(|&&v| v == 1.0).count() as f64 * px_area)
        .collect())
}

const MAGIC: &[u8; 4] = b"MOTN";
const VERSION: u16 = 1;

/// Writes records in the MOTN format: magic, version u16, count u32; per
/// record `F u16, H u16, W u16, spacing f32, has_mask u8`, frames as f32,
/// masks as u8, then a ground-truth flag with scale curve and fields.
pub fn write_dataset(out: &mut impl Write, records: &[SequenceRecord]) -> Result<(), SynthError> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(records.len() as u32).to_le_bytes())?;
    for rec in records {
        let (h, w) = rec.extents();
        let f = rec.frame_count();
        out.write_all(&(f as u16).to_le_bytes())?;
        out.write_all(&(h as u16).to_le_bytes())?;
        out.write_all(&(w as u16).to_le_bytes())?;
        out.write_all(&(rec.spacing as f32).to_le_bytes())?;
        out.write_all(&[rec.masks.is_some() as u8])?;
        for frame in &rec.frames {
            for &v in frame.data() {
                out.write_all(&(v as f32).to_le_bytes())?;
            }
        }
        if let Some(masks) = &rec.masks {
            for m in masks {
                let bytes: Vec<u8> = m.data().iter().map(|&v| v as u8).collect();
                out.write_all(&bytes)?;
            }
        }
        let has_gt = rec.scale_curve.is_some() && rec.gt_fields.is_some();
        out.write_all(&[has_gt as u8])?;
        if has_gt {
            for &s in rec.scale_curve.as_ref().unwrap() {
                out.write_all(&(s as f32).to_le_bytes())?;
            }
            let plane = h * w;
            for field in rec.gt_fields.as_ref().unwrap() {
                let d = field.displacement().data();
                for p in 0..plane {
                    out.write_all(&(d[p] as f32).to_le_bytes())?;
                    out.write_all(&(d[plane + p] as f32).to_le_bytes())?;
                }
            }
        }
    }
    Ok(())
}

/// Reads a MOTN dataset, reporting bad magic, version mismatch, and
/// truncation as distinct errors.
pub fn read_dataset(input: &mut impl Read) -> Result<Vec<SequenceRecord>, SynthError> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic).map_err(|_| SynthError::Truncated("magic"))?;
    if &magic != MAGIC {
        return Err(SynthError::BadMagic);
    }
    let mut u16b = [0u8; 2];
    input.read_exact(&mut u16b).map_err(|_| SynthError::Truncated("version"))?;
    let version = u16::from_le_bytes(u16b);
    if version != VERSION {
        return Err(SynthError::UnsupportedVersion(version));
    }
    let mut u32b = [0u8; 4];
    input.read_exact(&mut u32b).map_err(|_| SynthError::Truncated("count"))?;
    let count = u32::from_le_bytes(u32b) as usize;

    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        input.read_exact(&mut u16b).map_err(|_| SynthError::Truncated("frame count"))?;
        let f = u16::from_le_bytes(u16b) as usize;
        input.read_exact(&mut u16b).map_err(|_| SynthError::Truncated("height"))?;
        let h = u16::from_le_bytes(u16b) as usize;
        input.read_exact(&mut u16b).map_err(|_| SynthError::Truncated("width"))?;
        let w = u16::from_le_bytes(u16b) as usize;
        input.read_exact(&mut u32b).map_err(|_| SynthError::Truncated("spacing"))?;
        let spacing = f32::from_le_bytes(u32b) as f64;
        let mut flag = [0u8; 1];
        input.read_exact(&mut flag).map_err(|_| SynthError::Truncated("mask flag"))?;
        let has_mask = flag[0] != 0;

        let plane = h * w;
        let mut fbuf = vec![0u8; plane * 4];
        let mut frames = Vec::with_capacity(f);
        for _ in 0..f {
            input.read_exact(&mut fbuf).map_err(|_| SynthError::Truncated("frame data"))?;
            let data: Vec<f64> = fbuf
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect();
            frames.push(Tensor::new(vec![h, w], data).expect("sized buffer"));
        }
        let masks = if has_mask {
            let mut mbuf = vec![0u8; plane];
            let mut ms = Vec::with_capacity(f);
            for _ in 0..f {
                input.read_exact(&mut mbuf).map_err(|_| SynthError::Truncated("mask data"))?;
                ms.push(Tensor::new(vec![h, w], mbuf.iter().map(|&b| b as f64).collect()).expect("sized"));
            }
            Some(ms)
        } else {
            None
        };
        input.read_exact(&mut flag).map_err(|_| SynthError::Truncated("gt flag"))?;
        let (scale_curve, gt_fields) = if flag[0] != 0 {
            let mut cbuf = vec![0u8; f * 4];
            input.read_exact(&mut cbuf).map_err(|_| SynthError::Truncated("scale curve"))?;
            let curve: Vec<f64> = cbuf
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect();
            let mut dbuf = vec![0u8; plane * 2 * 4];
            let mut fields = Vec::with_capacity(f);
            for _ in 0..f {
                input.read_exact(&mut dbuf).map_err(|_| SynthError::Truncated("gt fields"))?;
                let mut field = DeformationField::identity(h, w);
                for p in 0..plane {
                    let uy = f32::from_le_bytes(dbuf[8 * p..8 * p + 4].try_into().unwrap()) as f64;
                    let ux = f32::from_le_bytes(dbuf[8 * p + 4..8 * p + 8].try_into().unwrap()) as f64;
                    field.displacement_mut().data_mut()[p] = uy;
                    field.displacement_mut().data_mut()[plane + p] = ux;
                }
                fields.push(field);
            }
            (Some(curve), Some(fields))
        } else {
            (None, None)
        };
        records.push(SequenceRecord { spacing, frames, masks, scale_curve, gt_fields });
    }
    Ok(records)
}
