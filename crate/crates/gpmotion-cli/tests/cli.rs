//! End-to-end checks of the command-line surface: artifact layout, byte
//! reproducibility, file-format headers, and exit codes.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gpmotion"))
}

/// Small but real config: 16x16 sequences, 5 frames, latent 4x4.
fn write_config(dir: &Path) -> PathBuf {
    let cfg = serde_json::json!({
        "seed": 11,
        "data": {
            "count": 3,
            "synth": {
                "height": 16, "width": 16, "frames": 5,
                "r_bp": 3.0, "ring_thickness": 1.5,
                "radius_jitter": 0.25, "center_jitter": 0.25
            }
        },
        "model": {
            "d": 4, "t_lat": 4, "height": 16, "width": 16,
            "enc_channels": [4, 8, 8, 4], "dec_channels": [8, 8, 8, 4],
            "tcn_dilations": [1, 1]
        },
        "train": { "epochs": 1 },
        "eval": { "threads": 1 }
    });
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

fn run_ok(cmd: &mut Command) {
    let out = cmd.output().expect("spawn");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn exit_code(cmd: &mut Command) -> i32 {
    cmd.output().expect("spawn").status.code().unwrap_or(-1)
}

struct Workspace {
    dir: tempfile::TempDir,
    config: PathBuf,
    data: PathBuf,
    run_dir: PathBuf,
}

/// Generates data and trains one checkpoint, shared by the artifact tests.
fn trained_workspace() -> Workspace {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let data = dir.path().join("data.motn");
    run_ok(bin().args(["gen-data"]).arg("--config").arg(&config).arg("--out").arg(&data));
    let run_dir = dir.path().join("run");
    run_ok(
        bin()
            .args(["train"])
            .arg("--config")
            .arg(&config)
            .arg("--data")
            .arg(&data)
            .arg("--out")
            .arg(&run_dir),
    );
    Workspace { dir, config, data, run_dir }
}

#[test]
fn gen_data_is_reproducible_and_manifested() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let a = dir.path().join("a.motn");
    let b = dir.path().join("b.motn");
    run_ok(bin().args(["gen-data"]).arg("--config").arg(&config).arg("--out").arg(&a));
    run_ok(bin().args(["gen-data"]).arg("--config").arg(&config).arg("--out").arg(&b));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert!(a.with_extension("manifest.json").exists());
}

#[test]
fn train_epochs_zero_writes_initialized_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let data = dir.path().join("data.motn");
    run_ok(bin().args(["gen-data"]).arg("--config").arg(&config).arg("--out").arg(&data));
    let out = dir.path().join("run0");
    run_ok(
        bin()
            .args(["train", "--epochs", "0"])
            .arg("--config")
            .arg(&config)
            .arg("--data")
            .arg(&data)
            .arg("--out")
            .arg(&out),
    );
    assert!(out.join("checkpoint.gpmm").exists());
    let log = std::fs::read_to_string(out.join("train_log.csv")).unwrap();
    assert_eq!(log.trim(), "epoch,step,loss,recon,kl");
    assert!(out.join("resolved_config.json").exists());
}

#[test]
fn training_twice_gives_identical_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let data = dir.path().join("data.motn");
    run_ok(bin().args(["gen-data"]).arg("--config").arg(&config).arg("--out").arg(&data));
    let mut bytes = Vec::new();
    for name in ["r1", "r2"] {
        let out = dir.path().join(name);
        run_ok(
            bin()
                .args(["train"])
                .arg("--config")
                .arg(&config)
                .arg("--data")
                .arg(&data)
                .arg("--out")
                .arg(&out),
        );
        bytes.push(std::fs::read(out.join("checkpoint.gpmm")).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn register_writes_all_artifacts() {
    let ws = trained_workspace();
    let out = ws.dir.path().join("reg");
    run_ok(
        bin()
            .args(["register", "--index", "0"])
            .arg("--config")
            .arg(&ws.config)
            .arg("--checkpoint")
            .arg(ws.run_dir.join("checkpoint.gpmm"))
            .arg("--data")
            .arg(&ws.data)
            .arg("--out")
            .arg(&out),
    );
    let seq = out.join("seq_000");
    assert!(seq.join("fields.raw").exists());
    assert!(seq.join("motion_matrix.json").exists());
    assert!(seq.join("scales.json").exists());
    assert!(seq.join("metrics.csv").exists());
    // 4 pairs: warped and jacobian dumps for each
    for k in 1..=4 {
        let pgm = std::fs::read(seq.join(format!("warped_{k:02}.pgm"))).unwrap();
        assert!(pgm.starts_with(b"P5\n16 16\n255\n"));
        assert_eq!(pgm.len(), "P5\n16 16\n255\n".len() + 256);
        assert!(seq.join(format!("jacdet_{k:02}.pgm")).exists());
    }
    let metrics = std::fs::read_to_string(seq.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with(
        "sequence,rmse,dice_pool,dice_ring,hd95_pool_mm,hd95_ring_mm,spatial_grad,temporal_grad,volume_rmse,endpoint_px"
    ));

    // field file round-trips with the documented header
    let raw = std::fs::read(seq.join("fields.raw")).unwrap();
    assert_eq!(&raw[0..2], &16u16.to_le_bytes()); // H
    assert_eq!(&raw[2..4], &16u16.to_le_bytes()); // W
    assert_eq!(&raw[4..6], &4u16.to_le_bytes()); // T = pairs
    assert_eq!(raw.len(), 6 + 4 * 16 * 16 * 2 * 4);
}

#[test]
fn transport_of_own_motion_matches_interpolate_all_bytes() {
    // t_lat equals the pair count here, so per-pair and per-slot field files
    // coincide: register, interpolate --provide all, and transport of the
    // sequence's own motion matrix must agree byte for byte
    let ws = trained_workspace();
    let ck = ws.run_dir.join("checkpoint.gpmm");
    let reg = ws.dir.path().join("reg");
    run_ok(
        bin()
            .args(["register", "--index", "1"])
            .arg("--config")
            .arg(&ws.config)
            .arg("--checkpoint")
            .arg(&ck)
            .arg("--data")
            .arg(&ws.data)
            .arg("--out")
            .arg(&reg),
    );
    let interp = ws.dir.path().join("interp");
    run_ok(
        bin()
            .args(["interpolate", "--index", "1", "--provide", "all"])
            .arg("--config")
            .arg(&ws.config)
            .arg("--checkpoint")
            .arg(&ck)
            .arg("--data")
            .arg(&ws.data)
            .arg("--out")
            .arg(&interp),
    );
    let trans = ws.dir.path().join("trans");
    run_ok(
        bin()
            .args(["transport", "--index", "1"])
            .arg("--config")
            .arg(&ws.config)
            .arg("--checkpoint")
            .arg(&ck)
            .arg("--motion")
            .arg(reg.join("seq_001").join("motion_matrix.json"))
            .arg("--data")
            .arg(&ws.data)
            .arg("--out")
            .arg(&trans),
    );
    let reg_fields = std::fs::read(reg.join("seq_001").join("fields.raw")).unwrap();
    let interp_fields = std::fs::read(interp.join("seq_001").join("model_fields.raw")).unwrap();
    let trans_fields = std::fs::read(trans.join("seq_001").join("fields.raw")).unwrap();
    assert_eq!(reg_fields, interp_fields);
    assert_eq!(reg_fields, trans_fields);

    // same posterior mean from both all-pair paths
    let a = std::fs::read(reg.join("seq_001").join("motion_matrix.json")).unwrap();
    let b = std::fs::read(interp.join("seq_001").join("motion_matrix.json")).unwrap();
    assert_eq!(a, b);

    assert!(interp.join("seq_001").join("volume_curves.csv").exists());
    assert!(interp.join("seq_001").join("linear_fields.raw").exists());
    assert!(interp.join("seq_001").join("cubic_fields.raw").exists());
}

#[test]
fn simulate_writes_fields_and_curve() {
    let ws = trained_workspace();
    let out = ws.dir.path().join("sim");
    run_ok(
        bin()
            .args(["simulate", "--index", "0"])
            .arg("--config")
            .arg(&ws.config)
            .arg("--checkpoint")
            .arg(ws.run_dir.join("checkpoint.gpmm"))
            .arg("--data")
            .arg(&ws.data)
            .arg("--out")
            .arg(&out),
    );
    let seq = out.join("seq_000");
    assert!(seq.join("fields.raw").exists());
    let curve = std::fs::read_to_string(seq.join("volume_curve.csv")).unwrap();
    assert!(curve.starts_with("slot,area_mm2"));
    // t_lat slots plus the unwarped entry
    assert_eq!(curve.trim().lines().count(), 1 + 4 + 1);
}

#[test]
fn eval_outputs_and_rotation_mode() {
    let ws = trained_workspace();
    let out = ws.dir.path().join("eval");
    run_ok(
        bin()
            .args(["eval", "--rotations", "0,90,180,270", "--threads", "2"])
            .arg("--config")
            .arg(&ws.config)
            .arg("--checkpoint")
            .arg(ws.run_dir.join("checkpoint.gpmm"))
            .arg("--data")
            .arg(&ws.data)
            .arg("--out")
            .arg(&out),
    );
    let per_seq = std::fs::read_to_string(out.join("per_sequence.csv")).unwrap();
    assert!(per_seq.starts_with(
        "sequence,rmse,dice_pool,dice_ring,hd95_pool_mm,hd95_ring_mm,spatial_grad,temporal_grad,volume_rmse,endpoint_px"
    ));
    assert_eq!(per_seq.trim().lines().count(), 1 + 3);
    let agg: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("aggregate.json")).unwrap()).unwrap();
    assert!(agg["model"]["dice_pool"]["mean"].is_number());
    assert!(agg["undeformed"]["dice_pool"]["mean"].is_number());
    assert_eq!(agg["rotations"].as_array().unwrap().len(), 4);
    assert!(agg["rotation_summary"]["dice_pool"]["std"].is_number());
    let rot = std::fs::read_to_string(out.join("rotations.csv")).unwrap();
    // 4 rotations + header + mean and std summary rows
    assert_eq!(rot.trim().lines().count(), 7);

    // reruns are byte-identical
    let out2 = ws.dir.path().join("eval2");
    run_ok(
        bin()
            .args(["eval", "--rotations", "0,90,180,270", "--threads", "1"])
            .arg("--config")
            .arg(&ws.config)
            .arg("--checkpoint")
            .arg(ws.run_dir.join("checkpoint.gpmm"))
            .arg("--data")
            .arg(&ws.data)
            .arg("--out")
            .arg(&out2),
    );
    assert_eq!(
        std::fs::read(out.join("per_sequence.csv")).unwrap(),
        std::fs::read(out2.join("per_sequence.csv")).unwrap()
    );
    assert_eq!(
        std::fs::read(out.join("aggregate.json")).unwrap(),
        std::fs::read(out2.join("aggregate.json")).unwrap()
    );
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let data = dir.path().join("data.motn");
    run_ok(bin().args(["gen-data"]).arg("--config").arg(&config).arg("--out").arg(&data));

    // usage: malformed config
    let bad_cfg = dir.path().join("bad.json");
    std::fs::write(&bad_cfg, "{\"unknown_key\": 1}").unwrap();
    let code = exit_code(
        bin().args(["gen-data"]).arg("--config").arg(&bad_cfg).arg("--out").arg(dir.path().join("x.motn")),
    );
    assert_eq!(code, 1);

    // usage: unknown subcommand flag
    assert_eq!(exit_code(bin().args(["train", "--bogus"])), 1);

    // data: missing dataset
    let out = dir.path().join("t");
    let code = exit_code(
        bin()
            .args(["train"])
            .arg("--config")
            .arg(&config)
            .arg("--data")
            .arg(dir.path().join("missing.motn"))
            .arg("--out")
            .arg(&out),
    );
    assert_eq!(code, 2);

    // data: corrupt dataset magic
    let corrupt = dir.path().join("corrupt.motn");
    let mut bytes = std::fs::read(&data).unwrap();
    bytes[0] = b'X';
    std::fs::write(&corrupt, bytes).unwrap();
    let code = exit_code(
        bin()
            .args(["train"])
            .arg("--config")
            .arg(&config)
            .arg("--data")
            .arg(&corrupt)
            .arg("--out")
            .arg(&out),
    );
    assert_eq!(code, 2);

    // divergence: absurd learning rate blows up the loss
    let mut cfg: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&config).unwrap()).unwrap();
    cfg["train"]["adam"] = serde_json::json!({"lr": 1e12});
    cfg["train"]["epochs"] = serde_json::json!(3);
    let diverge_cfg = dir.path().join("diverge.json");
    std::fs::write(&diverge_cfg, serde_json::to_string(&cfg).unwrap()).unwrap();
    let code = exit_code(
        bin()
            .args(["train"])
            .arg("--config")
            .arg(&diverge_cfg)
            .arg("--data")
            .arg(&data)
            .arg("--out")
            .arg(dir.path().join("dv")),
    );
    assert_eq!(code, 3);

    // data: checkpoint incompatible with the requested config
    let run_dir = dir.path().join("run");
    run_ok(
        bin()
            .args(["train", "--epochs", "0"])
            .arg("--config")
            .arg(&config)
            .arg("--data")
            .arg(&data)
            .arg("--out")
            .arg(&run_dir),
    );
    let mut cfg: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&config).unwrap()).unwrap();
    cfg["model"]["d"] = serde_json::json!(6);
    let other_cfg = dir.path().join("other.json");
    std::fs::write(&other_cfg, serde_json::to_string(&cfg).unwrap()).unwrap();
    let code = exit_code(
        bin()
            .args(["register"])
            .arg("--config")
            .arg(&other_cfg)
            .arg("--checkpoint")
            .arg(run_dir.join("checkpoint.gpmm"))
            .arg("--data")
            .arg(&data)
            .arg("--out")
            .arg(dir.path().join("r")),
    );
    assert_eq!(code, 2);

    // usage: malformed provide spec
    let code = exit_code(
        bin()
            .args(["interpolate", "--provide", "sometimes"])
            .arg("--config")
            .arg(&config)
            .arg("--checkpoint")
            .arg(run_dir.join("checkpoint.gpmm"))
            .arg("--data")
            .arg(&data)
            .arg("--out")
            .arg(dir.path().join("i")),
    );
    assert_eq!(code, 1);
}
