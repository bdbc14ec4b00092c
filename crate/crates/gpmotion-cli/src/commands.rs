//! Command implementations. Every command echoes the resolved config into its
//! output directory and produces byte-identical artifacts when rerun with the
//! same config and seed.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;

use gpmotion::deform::{jacobian_determinant, warp, write_fields, DeformationField, WarpMode};
use gpmotion::gp::MotionMatrix;
use gpmotion::metrics::{volume_curve, EvalReport, EvalRow};
use gpmotion::model::{
    evaluate_record, interpolate, read_checkpoint, register, rotate_record, simulate, train,
    transport, undeformed_row, write_checkpoint, MotionModel, TRAIN_LOG_HEADER,
};
use gpmotion::synth::{generate_dataset, read_dataset, write_dataset, SequenceRecord};

use crate::config::RunConfig;
use crate::pgm::ScaleSidecar;
use crate::CliError;
use gpmotion::baselines;

const POOL_LABEL: u8 = 1;

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("creating {}: {e}", dir.display())))
}

fn load_records(path: &Path) -> Result<Vec<SequenceRecord>, CliError> {
    let mut file = fs::File::open(path)
        .map_err(|e| CliError::Data(format!("opening dataset {}: {e}", path.display())))?;
    Ok(read_dataset(&mut file)?)
}

/// Loads a checkpoint and verifies it matches the run config's latent and
/// grid dimensions. The checkpoint's own architecture settings are used.
fn load_model(checkpoint: &Path, config: &RunConfig) -> Result<MotionModel, CliError> {
    let mut file = fs::File::open(checkpoint)
        .map_err(|e| CliError::Data(format!("opening checkpoint {}: {e}", checkpoint.display())))?;
    let model = read_checkpoint(&mut file)?;
    let (a, b) = (model.config(), &config.model);
    if a.d != b.d || a.t_lat != b.t_lat || a.height != b.height || a.width != b.width {
        return Err(CliError::Data(format!(
            "checkpoint (D={}, T={}, {}x{}) incompatible with config (D={}, T={}, {}x{})",
            a.d, a.t_lat, a.height, a.width, b.d, b.t_lat, b.height, b.width
        )));
    }
    Ok(model)
}

fn selected_indices(count: usize, index: Option<usize>) -> Result<Vec<usize>, CliError> {
    match index {
        Some(i) if i >= count => {
            Err(CliError::Usage(format!("--index {i} out of range (dataset has {count} sequences)")))
        }
        Some(i) => Ok(vec![i]),
        None => Ok((0..count).collect()),
    }
}

#[derive(Serialize)]
struct DatasetManifest<'a> {
    count: usize,
    seed: u64,
    spec: &'a gpmotion::synth::SyntheticSpec,
}

pub fn cmd_gen_data(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    if let Some(dir) = out.parent() {
        if !dir.as_os_str().is_empty() {
            ensure_dir(dir)?;
        }
    }
    let records = generate_dataset(&config.data.synth, config.data.count, config.seed)?;
    let mut file = fs::File::create(out)
        .map_err(|e| CliError::Data(format!("creating {}: {e}", out.display())))?;
    write_dataset(&mut file, &records)?;
    let manifest = DatasetManifest {
        count: config.data.count,
        seed: config.seed,
        spec: &config.data.synth,
    };
    let manifest_path = out.with_extension("manifest.json");
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest).expect("serializable"))
        .map_err(|e| CliError::Data(format!("writing manifest: {e}")))?;
    println!("wrote {} sequences to {}", records.len(), out.display());
    Ok(())
}

pub struct TrainOverrides {
    pub no_gp: bool,
    pub td_rate: Option<f64>,
    pub epochs: Option<usize>,
}

pub fn cmd_train(
    config: &RunConfig,
    data: &Path,
    out_dir: &Path,
    overrides: &TrainOverrides,
) -> Result<(), CliError> {
    ensure_dir(out_dir)?;
    let mut effective = config.clone();
    effective.train.no_gp |= overrides.no_gp;
    if let Some(td) = overrides.td_rate {
        effective.train.td_rate = td;
    }
    if let Some(e) = overrides.epochs {
        effective.train.epochs = e;
    }
    effective.echo(out_dir)?;

    let records = load_records(data)?;
    let mut rng = gpmotion::rng::seeded(effective.seed);
    let mut model = MotionModel::init(
        effective.model.clone(),
        effective.kernel.clone(),
        effective.train.no_gp,
        &mut rng,
    )?;
    println!("model parameters: {}", model.parameter_count());

    let log = if effective.train.epochs == 0 {
        Vec::new()
    } else {
        train(&mut model, &records, &effective.train, effective.seed)?
    };

    let mut ck = fs::File::create(out_dir.join("checkpoint.gpmm"))
        .map_err(|e| CliError::Data(format!("creating checkpoint: {e}")))?;
    write_checkpoint(&model, &mut ck)?;

    let mut csv = String::from(TRAIN_LOG_HEADER);
    csv.push('\n');
    for row in &log {
        csv.push_str(&row.csv_line());
        csv.push('\n');
    }
    fs::write(out_dir.join("train_log.csv"), csv)
        .map_err(|e| CliError::Data(format!("writing train log: {e}")))?;
    if let Some(last) = log.last() {
        println!("finished {} steps, final loss {:.3}", log.len(), last.loss);
    } else {
        println!("wrote initialized checkpoint (no training steps)");
    }
    Ok(())
}

fn write_motion(dir: &Path, motion: &MotionMatrix) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(motion)
        .map_err(|e| CliError::Data(format!("serializing motion matrix: {e}")))?;
    fs::write(dir.join("motion_matrix.json"), text)
        .map_err(|e| CliError::Data(format!("writing motion matrix: {e}")))?;
    Ok(())
}

fn write_field_file(path: &Path, fields: &[DeformationField]) -> Result<(), CliError> {
    let mut file =
        fs::File::create(path).map_err(|e| CliError::Data(format!("creating {}: {e}", path.display())))?;
    write_fields(&mut file, fields)?;
    Ok(())
}

/// Field dumps, warped-frame and Jacobian PGMs, and a one-row metrics CSV
/// for a registered sequence.
fn write_register_outputs(
    dir: &Path,
    record: &SequenceRecord,
    model: &MotionModel,
    index: usize,
) -> Result<(), CliError> {
    ensure_dir(dir)?;
    let out = register(model, record)?;
    write_field_file(&dir.join("fields.raw"), &out.fields)?;
    write_motion(dir, &out.motion)?;

    let grid = record.grid();
    let mut sidecar = ScaleSidecar::new();
    for (k, warped) in out.warped.iter().enumerate() {
        sidecar.write_pgm(dir, &format!("warped_{:02}.pgm", k + 1), warped)?;
    }
    for (k, field) in out.fields.iter().enumerate() {
        let det = jacobian_determinant(field, &grid);
        sidecar.write_pgm(dir, &format!("jacdet_{:02}.pgm", k + 1), &det)?;
    }
    sidecar.finish(dir)?;

    if record.masks.is_some() && record.gt_fields.is_some() {
        let row = evaluate_record(model, record, index)?;
        let report = EvalReport::from_rows(vec![row]);
        fs::write(dir.join("metrics.csv"), report.to_csv())
            .map_err(|e| CliError::Data(format!("writing metrics: {e}")))?;
    }
    Ok(())
}

pub fn cmd_register(
    config: &RunConfig,
    checkpoint: &Path,
    data: &Path,
    index: Option<usize>,
    out_dir: &Path,
) -> Result<(), CliError> {
    ensure_dir(out_dir)?;
    config.echo(out_dir)?;
    let model = load_model(checkpoint, config)?;
    let records = load_records(data)?;
    for i in selected_indices(records.len(), index)? {
        write_register_outputs(&out_dir.join(format!("seq_{i:03}")), &records[i], &model, i)?;
    }
    Ok(())
}

/// Which pairs the interpolation experiment provides to the model.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ProvideSpec {
    All,
    Every2,
    Every5,
    First5,
    Frames(Vec<usize>),
}

impl ProvideSpec {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        match text {
            "all" => Ok(ProvideSpec::All),
            "every2" => Ok(ProvideSpec::Every2),
            "every5" => Ok(ProvideSpec::Every5),
            "first5" => Ok(ProvideSpec::First5),
            other => match other.strip_prefix("frames:") {
                Some(list) => {
                    let frames: Result<Vec<usize>, _> =
                        list.split(',').map(|v| v.trim().parse::<usize>()).collect();
                    let frames =
                        frames.map_err(|e| CliError::Usage(format!("--provide frames list: {e}")))?;
                    Ok(ProvideSpec::Frames(frames))
                }
                None => Err(CliError::Usage(format!(
                    "unknown --provide '{other}' (expected all|every2|every5|first5|frames:a,b,...)"
                ))),
            },
        }
    }

    /// Pair indices (pair k registers frames 0 and k+1) for a sequence with
    /// `pair_count` pairs. Frame 0 is always the reference and never a pair.
    pub fn pair_indices(&self, pair_count: usize) -> Result<Vec<usize>, CliError> {
        let frames_to_pairs = |frames: &[usize]| -> Result<Vec<usize>, CliError> {
            let mut pairs = Vec::new();
            for &f in frames {
                if f == 0 {
                    continue;
                }
                if f > pair_count {
                    return Err(CliError::Usage(format!(
                        "frame {f} out of range (sequence has {} frames)",
                        pair_count + 1
                    )));
                }
                pairs.push(f - 1);
            }
            pairs.sort_unstable();
            pairs.dedup();
            if pairs.is_empty() {
                return Err(CliError::Usage(
                    "no pairs provided (frame 0 alone is full simulation; use the simulate command)".into(),
                ));
            }
            Ok(pairs)
        };
        match self {
            ProvideSpec::All => Ok((0..pair_count).collect()),
            ProvideSpec::Every2 => frames_to_pairs(&(0..=pair_count).step_by(2).collect::<Vec<_>>()),
            ProvideSpec::Every5 => frames_to_pairs(&(0..=pair_count).step_by(5).collect::<Vec<_>>()),
            ProvideSpec::First5 => frames_to_pairs(&(0..5.min(pair_count + 1)).collect::<Vec<_>>()),
            ProvideSpec::Frames(frames) => frames_to_pairs(frames),
        }
    }
}

#[derive(Serialize)]
struct InterpolationMetrics {
    provided_pairs: Vec<usize>,
    provided_slots: Vec<usize>,
    volume_rmse_model: f64,
    volume_rmse_linear: f64,
    volume_rmse_cubic: f64,
}

fn curve_rmse(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let acc: f64 = a[..n].iter().zip(&b[..n]).map(|(x, y)| (x - y) * (x - y)).sum();
    (acc / n as f64).sqrt()
}

pub fn cmd_interpolate(
    config: &RunConfig,
    checkpoint: &Path,
    data: &Path,
    index: Option<usize>,
    provide: &ProvideSpec,
    out_dir: &Path,
) -> Result<(), CliError> {
    ensure_dir(out_dir)?;
    config.echo(out_dir)?;
    let model = load_model(checkpoint, config)?;
    let records = load_records(data)?;
    for i in selected_indices(records.len(), index)? {
        let record = &records[i];
        let dir = out_dir.join(format!("seq_{i:03}"));
        ensure_dir(&dir)?;
        let pair_count = record.frame_count() - 1;
        let provided = provide.pair_indices(pair_count)?;

        // the all-frame model is the reference the baselines interpolate
        let reference = register(&model, record)?;
        let (fields, motion) = interpolate(&model, record, &provided)?;
        let provided_slots: Vec<usize> = provided.iter().map(|&k| reference.pair_slots[k]).collect();
        let provided_fields: Vec<DeformationField> =
            provided_slots.iter().map(|&s| reference.all_fields[s].clone()).collect();
        let t_lat = model.config().t_lat;
        let linear = baselines::linear_fields(&provided_slots, &provided_fields, t_lat);
        let cubic = baselines::cubic_fields(&provided_slots, &provided_fields, t_lat);

        write_field_file(&dir.join("model_fields.raw"), &fields)?;
        write_field_file(&dir.join("linear_fields.raw"), &linear)?;
        write_field_file(&dir.join("cubic_fields.raw"), &cubic)?;
        write_motion(&dir, &motion)?;

        if let Some(masks) = &record.masks {
            let sp = record.spacing;
            let reference_curve = volume_curve(&masks[0], &reference.all_fields, sp, POOL_LABEL)?;
            let model_curve = volume_curve(&masks[0], &fields, sp, POOL_LABEL)?;
            let linear_curve = volume_curve(&masks[0], &linear, sp, POOL_LABEL)?;
            let cubic_curve = volume_curve(&masks[0], &cubic, sp, POOL_LABEL)?;
            let mut csv = String::from("slot,reference,model,linear,cubic\n");
            for t in 0..reference_curve.len() {
                csv.push_str(&format!(
                    "{},{},{},{},{}\n",
                    t, reference_curve[t], model_curve[t], linear_curve[t], cubic_curve[t]
                ));
            }
            fs::write(dir.join("volume_curves.csv"), csv)
                .map_err(|e| CliError::Data(format!("writing curves: {e}")))?;
            let metrics = InterpolationMetrics {
                provided_pairs: provided.clone(),
                provided_slots: provided_slots.clone(),
                volume_rmse_model: curve_rmse(&model_curve, &reference_curve),
                volume_rmse_linear: curve_rmse(&linear_curve, &reference_curve),
                volume_rmse_cubic: curve_rmse(&cubic_curve, &reference_curve),
            };
            fs::write(
                dir.join("metrics.json"),
                serde_json::to_string_pretty(&metrics).expect("serializable"),
            )
            .map_err(|e| CliError::Data(format!("writing metrics: {e}")))?;
        }
    }
    Ok(())
}

pub fn cmd_simulate(
    config: &RunConfig,
    checkpoint: &Path,
    data: &Path,
    index: Option<usize>,
    out_dir: &Path,
) -> Result<(), CliError> {
    ensure_dir(out_dir)?;
    config.echo(out_dir)?;
    let model = load_model(checkpoint, config)?;
    let records = load_records(data)?;
    for i in selected_indices(records.len(), index)? {
        let record = &records[i];
        let dir = out_dir.join(format!("seq_{i:03}"));
        ensure_dir(&dir)?;
        let (fields, motion) = simulate(&model, &record.frames[0], record.spacing)?;
        write_field_file(&dir.join("fields.raw"), &fields)?;
        write_motion(&dir, &motion)?;
        let mut sidecar = ScaleSidecar::new();
        for (t, field) in fields.iter().enumerate() {
            let warped = warp(&record.frames[0], field, WarpMode::Bilinear)?;
            sidecar.write_pgm(&dir, &format!("warped_{t:02}.pgm"), &warped)?;
        }
        sidecar.finish(&dir)?;
        if let Some(masks) = &record.masks {
            let curve = volume_curve(&masks[0], &fields, record.spacing, POOL_LABEL)?;
            let mut csv = String::from("slot,area_mm2\n");
            for (t, v) in curve.iter().enumerate() {
                csv.push_str(&format!("{t},{v}\n"));
            }
            fs::write(dir.join("volume_curve.csv"), csv)
                .map_err(|e| CliError::Data(format!("writing curve: {e}")))?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct TransportSummary {
    /// Relative pool-area change (EF analog) of the transported motion on
    /// the target anatomy.
    ef_transported: f64,
}

pub fn cmd_transport(
    config: &RunConfig,
    checkpoint: &Path,
    motion_path: &Path,
    data: &Path,
    index: Option<usize>,
    out_dir: &Path,
) -> Result<(), CliError> {
    ensure_dir(out_dir)?;
    config.echo(out_dir)?;
    let model = load_model(checkpoint, config)?;
    let text = fs::read_to_string(motion_path)
        .map_err(|e| CliError::Data(format!("reading motion matrix {}: {e}", motion_path.display())))?;
    let motion: MotionMatrix =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("motion matrix: {e}")))?;
    let records = load_records(data)?;
    for i in selected_indices(records.len(), index)? {
        let record = &records[i];
        let dir = out_dir.join(format!("seq_{i:03}"));
        ensure_dir(&dir)?;
        let fields = transport(&model, &motion, &record.frames[0], record.spacing)?;
        write_field_file(&dir.join("fields.raw"), &fields)?;
        let mut sidecar = ScaleSidecar::new();
        for (t, field) in fields.iter().enumerate() {
            let warped = warp(&record.frames[0], field, WarpMode::Bilinear)?;
            sidecar.write_pgm(&dir, &format!("warped_{t:02}.pgm"), &warped)?;
        }
        sidecar.finish(&dir)?;
        if let Some(masks) = &record.masks {
            let curve = volume_curve(&masks[0], &fields, record.spacing, POOL_LABEL)?;
            let min = curve.iter().cloned().fold(f64::INFINITY, f64::min);
            let summary = TransportSummary { ef_transported: 1.0 - min / curve[0] };
            fs::write(
                dir.join("transport_summary.json"),
                serde_json::to_string_pretty(&summary).expect("serializable"),
            )
            .map_err(|e| CliError::Data(format!("writing summary: {e}")))?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct RotationAggregate {
    rotation_deg: u32,
    dice_pool: f64,
    dice_ring: f64,
    hd95_pool_mm: f64,
    spatial_grad: f64,
    temporal_grad: f64,
}

#[derive(Serialize)]
struct EvalSummary {
    sequences: usize,
    model: serde_json::Value,
    undeformed: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    rotations: Option<Vec<RotationAggregate>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rotation_summary: Option<serde_json::Value>,
}

fn aggregates_json(report: &EvalReport) -> serde_json::Value {
    serde_json::json!({
        "rmse": report.rmse,
        "dice_pool": report.dice_pool,
        "dice_ring": report.dice_ring,
        "hd95_pool_mm": report.hd95_pool_mm,
        "hd95_ring_mm": report.hd95_ring_mm,
        "spatial_grad": report.spatial_grad,
        "temporal_grad": report.temporal_grad,
        "volume_rmse": report.volume_rmse,
        "endpoint_px": report.endpoint_px,
    })
}

pub fn cmd_eval(
    config: &RunConfig,
    checkpoint: &Path,
    data: &Path,
    rotations: &[u32],
    threads: usize,
    out_dir: &Path,
) -> Result<(), CliError> {
    ensure_dir(out_dir)?;
    config.echo(out_dir)?;
    let model = load_model(checkpoint, config)?;
    let records = load_records(data)?;
    if records.iter().any(|r| r.masks.is_none()) {
        return Err(CliError::Data("evaluation requires masks on every sequence".into()));
    }
    for &deg in rotations {
        if deg % 90 != 0 {
            return Err(CliError::Usage(format!("rotation {deg} is not a multiple of 90")));
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Data(format!("thread pool: {e}")))?;

    let eval_rotation = |deg: u32| -> Result<(Vec<EvalRow>, Vec<EvalRow>), CliError> {
        use rayon::prelude::*;
        let turns = (deg / 90) as usize;
        let results: Vec<Result<(EvalRow, EvalRow), CliError>> = pool.install(|| {
            records
                .par_iter()
                .enumerate()
                .map(|(i, rec)| {
                    let rotated = rotate_record(rec, turns)?;
                    let row = evaluate_record(&model, &rotated, i)?;
                    let und = undeformed_row(&rotated, i)?;
                    Ok((row, und))
                })
                .collect()
        });
        let mut rows = Vec::with_capacity(records.len());
        let mut unds = Vec::with_capacity(records.len());
        for r in results {
            let (a, b) = r?;
            rows.push(a);
            unds.push(b);
        }
        Ok((rows, unds))
    };

    let (rows0, und0) = eval_rotation(rotations.first().copied().unwrap_or(0))?;
    let model_report = EvalReport::from_rows(rows0);
    let und_report = EvalReport::from_rows(und0);
    fs::write(out_dir.join("per_sequence.csv"), model_report.to_csv())
        .map_err(|e| CliError::Data(format!("writing per-sequence CSV: {e}")))?;
    fs::write(out_dir.join("undeformed.csv"), und_report.to_csv())
        .map_err(|e| CliError::Data(format!("writing undeformed CSV: {e}")))?;

    let (rot_rows, rot_summary) = if rotations.len() > 1 {
        let mut aggs = Vec::new();
        for &deg in rotations {
            let (rows, _) = eval_rotation(deg)?;
            let rep = EvalReport::from_rows(rows);
            aggs.push(RotationAggregate {
                rotation_deg: deg,
                dice_pool: rep.dice_pool.mean,
                dice_ring: rep.dice_ring.mean,
                hd95_pool_mm: rep.hd95_pool_mm.mean,
                spatial_grad: rep.spatial_grad.mean,
                temporal_grad: rep.temporal_grad.mean,
            });
        }
        let mut csv = String::from("rotation_deg,dice_pool,dice_ring,hd95_pool_mm,spatial_grad,temporal_grad\n");
        for a in &aggs {
            csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                a.rotation_deg, a.dice_pool, a.dice_ring, a.hd95_pool_mm, a.spatial_grad, a.temporal_grad
            ));
        }
        let stat = |f: fn(&RotationAggregate) -> f64| {
            gpmotion::metrics::aggregate(&aggs.iter().map(f).collect::<Vec<_>>())
        };
        let summary = serde_json::json!({
            "dice_pool": stat(|a| a.dice_pool),
            "dice_ring": stat(|a| a.dice_ring),
            "hd95_pool_mm": stat(|a| a.hd95_pool_mm),
            "spatial_grad": stat(|a| a.spatial_grad),
            "temporal_grad": stat(|a| a.temporal_grad),
        });
        csv.push_str(&format!(
            "summary_mean,{},{},{},{},{}\n",
            summary["dice_pool"]["mean"],
            summary["dice_ring"]["mean"],
            summary["hd95_pool_mm"]["mean"],
            summary["spatial_grad"]["mean"],
            summary["temporal_grad"]["mean"],
        ));
        csv.push_str(&format!(
            "summary_std,{},{},{},{},{}\n",
            summary["dice_pool"]["std"],
            summary["dice_ring"]["std"],
            summary["hd95_pool_mm"]["std"],
            summary["spatial_grad"]["std"],
            summary["temporal_grad"]["std"],
        ));
        fs::write(out_dir.join("rotations.csv"), csv)
            .map_err(|e| CliError::Data(format!("writing rotations CSV: {e}")))?;
        (Some(aggs), Some(summary))
    } else {
        (None, None)
    };

    let summary = EvalSummary {
        sequences: records.len(),
        model: aggregates_json(&model_report),
        undeformed: aggregates_json(&und_report),
        rotations: rot_rows,
        rotation_summary: rot_summary,
    };
    let mut file = fs::File::create(out_dir.join("aggregate.json"))
        .map_err(|e| CliError::Data(format!("creating aggregate.json: {e}")))?;
    file.write_all(serde_json::to_string_pretty(&summary).expect("serializable").as_bytes())
        .map_err(|e| CliError::Data(format!("writing aggregate.json: {e}")))?;
    println!(
        "evaluated {} sequences: dice_pool {:.3} (undeformed {:.3})",
        records.len(),
        model_report.dice_pool.mean,
        und_report.dice_pool.mean
    );
    Ok(())
}

/// Resolves the eval thread count: flag, then GPMOTION_THREADS, then config.
pub fn resolve_threads(flag: Option<usize>, config: &RunConfig) -> usize {
    flag.or_else(|| std::env::var("GPMOTION_THREADS").ok().and_then(|v| v.parse().ok()))
        .unwrap_or(config.eval.threads)
}

/// Resolves the rotation list: flag (comma-separated degrees) over config.
pub fn resolve_rotations(flag: Option<&str>, config: &RunConfig) -> Result<Vec<u32>, CliError> {
    match flag {
        Some(text) => text
            .split(',')
            .map(|v| v.trim().parse::<u32>().map_err(|e| CliError::Usage(format!("--rotations: {e}"))))
            .collect(),
        None => Ok(config.eval.rotations.clone()),
    }
}
