//! Dev dry run of the synthetic-training acceptance targets.

use gpmotion::deform::positive_jacobian_fraction;
use gpmotion::gp::KernelSpec;
use gpmotion::metrics::{aggregate, pearson};
use gpmotion::model::{
    evaluate_record, register, simulate, train, undeformed_row, ModelConfig, MotionModel, TrainConfig,
};
use gpmotion::synth::{generate_dataset, ground_truth_volume_curve, SyntheticSpec};

fn main() {
    let spec = SyntheticSpec::default();
    let train_set = generate_dataset(&spec, 200, 101).unwrap();
    let test_set = generate_dataset(&spec, 50, 202).unwrap();

    let env = |k: &str, d: f64| std::env::var(k).ok().and_then(|v| v.parse().ok()).unwrap_or(d);
    let kernel_spec = KernelSpec { length_scale: env("GPM_L", 7.0), ..KernelSpec::default() };
    let skip_nogp = std::env::var("GPM_SKIP_NOGP").is_ok();

    let t0 = std::time::Instant::now();
    let mut rng = gpmotion::rng::seeded(7);
    let mut model =
        MotionModel::init(ModelConfig::default(), kernel_spec.clone(), false, &mut rng).unwrap();
    let mut cfg = TrainConfig::default();
    cfg.adam.lr = env("GPM_LR", cfg.adam.lr);
    let log = train(&mut model, &train_set, &cfg, 7).unwrap();
    println!("GP training: {} steps in {:.1}s", log.len(), t0.elapsed().as_secs_f64());
    let n = log.len();
    println!(
        "  epoch-1 mean loss {:.1}, last-epoch mean loss {:.1}",
        log[..200].iter().map(|r| r.loss).sum::<f64>() / 200.0,
        log[n - 200..].iter().map(|r| r.loss).sum::<f64>() / 200.0
    );

    let mut rng2 = gpmotion::rng::seeded(7);
    let mut nogp =
        MotionModel::init(ModelConfig::default(), kernel_spec.clone(), true, &mut rng2).unwrap();
    if skip_nogp {
        for (a, b) in nogp.parameters_mut().iter_mut().zip(model.parameters()) {
            a.value = b.value.clone();
        }
    } else {
        let t1 = std::time::Instant::now();
        let log2 = train(&mut nogp, &train_set, &cfg, 7).unwrap();
        println!("No-GP training: {} steps in {:.1}s", log2.len(), t1.elapsed().as_secs_f64());
    }

    let mut rows = Vec::new();
    let mut und = Vec::new();
    let mut rows_nogp = Vec::new();
    let mut jac_ok = 0usize;
    let mut jac_total = 0usize;
    let mut z_smoother = 0usize;
    for (i, rec) in test_set.iter().enumerate() {
        rows.push(evaluate_record(&model, rec, i).unwrap());
        und.push(undeformed_row(rec, i).unwrap());
        rows_nogp.push(evaluate_record(&nogp, rec, i).unwrap());

        let out = register(&model, rec).unwrap();
        let grid = rec.grid();
        for f in &out.fields {
            jac_total += 1;
            if positive_jacobian_fraction(f, &grid) >= 0.995 {
                jac_ok += 1;
            }
        }
        let out_nogp = register(&nogp, rec).unwrap();
        let rough = |z: &gpmotion::gp::MotionMatrix| -> f64 {
            let mut acc = 0.0;
            for d in 0..z.d {
                let row = z.row(d);
                for w in row.windows(2) {
                    acc += (w[1] - w[0]).abs();
                }
            }
            acc / (z.d * (z.t_lat - 1)) as f64
        };
        if rough(&out.motion) < rough(&out_nogp.motion) {
            z_smoother += 1;
        }
    }
    let m = |v: Vec<f64>| aggregate(&v).mean;
    let dice_model = m(rows.iter().map(|r| r.dice_pool).collect());
    let dice_und = m(und.iter().map(|r| r.dice_pool).collect());
    let rmse_model = m(rows.iter().map(|r| r.rmse).collect());
    let rmse_und = m(und.iter().map(|r| r.rmse).collect());
    let ep = m(rows.iter().map(|r| r.endpoint_px).collect());
    let tg_gp = m(rows.iter().map(|r| r.temporal_grad).collect());
    let tg_nogp = m(rows_nogp.iter().map(|r| r.temporal_grad).collect());
    println!("dice pool: model {dice_model:.3} vs und {dice_und:.3} (need +0.10)");
    println!("rmse: model {rmse_model:.4} vs und {rmse_und:.4} (need -50%)");
    println!("endpoint: {ep:.3} px (need < 0.5)");
    println!("temporal grad: GP {tg_gp:.4} vs No-GP {tg_nogp:.4} (need GP <= No-GP)");
    println!("jacobian fields ok: {jac_ok}/{jac_total}");
    println!("z smoother (GP < No-GP): {z_smoother}/50 (need >= 40)");

    // interpolation vs linear field interpolation (subset for speed)
    let cases: [(&str, Vec<usize>); 3] = [
        ("every2", (1..15).step_by(2).collect()),
        ("first5", (0..4).collect()),
        ("0th+10th", vec![9]),
    ];
    for (name, provided) in &cases {
        let mut rmse_model = 0.0;
        let mut rmse_linear = 0.0;
        for rec in test_set.iter().take(20) {
            let reference = register(&model, rec).unwrap();
            let (fields, _) = gpmotion::model::interpolate(&model, rec, provided).unwrap();
            let slots: Vec<usize> = provided.iter().map(|&k| reference.pair_slots[k]).collect();
            let provided_fields: Vec<_> = slots.iter().map(|&s| reference.all_fields[s].clone()).collect();
            let mask = &rec.masks.as_ref().unwrap()[0];
            let curve =
                |fs: &[gpmotion::deform::DeformationField]| gpmotion::metrics::volume_curve(mask, fs, rec.spacing, 1).unwrap();
            let ref_curve = curve(&reference.all_fields);
            let model_curve = curve(&fields);
            // linear baseline
            let linear: Vec<_> = {
                let t_lat = model.config().t_lat;
                (0..t_lat)
                    .map(|t| {
                        let x = t as f64;
                        let xs: Vec<f64> = slots.iter().map(|&s| s as f64).collect();
                        if x <= xs[0] {
                            provided_fields[0].clone()
                        } else if x >= *xs.last().unwrap() {
                            provided_fields.last().unwrap().clone()
                        } else {
                            let i = xs.partition_point(|&v| v <= x) - 1;
                            let frac = (x - xs[i]) / (xs[i + 1] - xs[i]);
                            let a = provided_fields[i].displacement().data();
                            let b = provided_fields[i + 1].displacement().data();
                            let data: Vec<f64> =
                                a.iter().zip(b).map(|(p, q)| p * (1.0 - frac) + q * frac).collect();
                            gpmotion::deform::DeformationField::from_tensor(
                                gpmotion::Tensor::new(vec![2, 32, 32], data).unwrap(),
                            )
                            .unwrap()
                        }
                    })
                    .collect()
            };
            let lin_curve = curve(&linear);
            let crmse = |a: &[f64], b: &[f64]| -> f64 {
                (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64).sqrt()
            };
            rmse_model += crmse(&model_curve, &ref_curve);
            rmse_linear += crmse(&lin_curve, &ref_curve);
        }
        println!("interp {name}: model {:.3} vs linear {:.3}", rmse_model / 20.0, rmse_linear / 20.0);
    }

    // transport direction on strong/weak contraction pairs
    let strong_spec = SyntheticSpec { c_min: 0.45, c_max: 0.45, ..spec.clone() };
    let weak_spec = SyntheticSpec { c_min: 0.15, c_max: 0.15, ..spec.clone() };
    let strong = generate_dataset(&strong_spec, 10, 303).unwrap();
    let weak = generate_dataset(&weak_spec, 10, 404).unwrap();
    let mut closer = 0;
    for (src, dst) in strong.iter().zip(&weak).chain(weak.iter().zip(&strong)) {
        let z = register(&model, src).unwrap().motion;
        let fields = gpmotion::model::transport(&model, &z, &dst.frames[0], dst.spacing).unwrap();
        let mask = &dst.masks.as_ref().unwrap()[0];
        let curve = gpmotion::metrics::volume_curve(mask, &fields, dst.spacing, 1).unwrap();
        let min = curve.iter().cloned().fold(f64::INFINITY, f64::min);
        let ef_t = 1.0 - min / curve[0];
        let ef_of = |r: &gpmotion::synth::SequenceRecord| {
            let s = r.scale_curve.as_ref().unwrap();
            let smin = s.iter().cloned().fold(f64::INFINITY, f64::min);
            1.0 - smin * smin
        };
        let (ef_src, ef_dst) = (ef_of(src), ef_of(dst));
        if (ef_t - ef_src).abs() < (ef_t - ef_dst).abs() {
            closer += 1;
        }
    }
    println!("transport closer-to-source: {closer}/20 (need >= 18)");

    // simulation shape
    let mut curves = Vec::new();
    for rec in test_set.iter().take(10) {
        let (fields, _) = simulate(&model, &rec.frames[0], rec.spacing).unwrap();
        let mask = &rec.masks.as_ref().unwrap()[0];
        let c = gpmotion::metrics::volume_curve(mask, &fields, rec.spacing, 1).unwrap();
        let base = c[0];
        curves.push(c.iter().map(|v| v / base).collect::<Vec<_>>());
    }
    let len = curves[0].len();
    let mean_curve: Vec<f64> =
        (0..len).map(|t| curves.iter().map(|c| c[t]).sum::<f64>() / curves.len() as f64).collect();
    let mut train_curve = vec![0.0; spec.frames];
    for rec in &train_set {
        let c = ground_truth_volume_curve(rec).unwrap();
        for (t, v) in c.iter().enumerate() {
            train_curve[t] += v / c[0] / train_set.len() as f64;
        }
    }
    // resample train curve to the simulated length
    let resampled: Vec<f64> = (0..len)
        .map(|i| {
            let x = i as f64 * (spec.frames - 1) as f64 / (len - 1) as f64;
            let lo = x.floor() as usize;
            let hi = (lo + 1).min(spec.frames - 1);
            train_curve[lo] * (1.0 - (x - lo as f64)) + train_curve[hi] * (x - lo as f64)
        })
        .collect();
    println!("sim curve: {:?}", mean_curve.iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>());
    println!("train mean: {:?}", resampled.iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>());
    println!("pearson: {:.3} (need > 0.8)", pearson(&mean_curve, &resampled));
    let argmin = mean_curve.iter().enumerate().min_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap().0;
    println!("sim curve argmin at {argmin}/{len} (need < 60%)");
}
