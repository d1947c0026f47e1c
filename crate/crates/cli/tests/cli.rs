mod common;

use std::fs;
use std::path::Path;
use std::process::Command;

use maptopo_cli::{
    cmd_compare, cmd_gradcheck, cmd_metrics, cmd_ratio_sweep, cmd_split, cmd_stitch, cmd_tile, cmd_train,
    pair_dirs, CliError, ModeSelection, TrainOptions, METRICS_HEADER, SWEEP_HEADER,
};
use maptopo_core::dataset::{load_manifest, Group, Subset};
use maptopo_core::trainer::FreezeMode;
use maptopo_core::{ImageTile, LossWeights, MetricMode};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn maptopo(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_maptopo")).args(args).output().unwrap()
}

fn write_tiles(dir: &Path, names: &[&str], seed: u64) {
    fs::create_dir_all(dir).unwrap();
    for (i, n) in names.iter().enumerate() {
        common::structured_tile(seed + i as u64, 16).write_png(dir.join(format!("{n}.png"))).unwrap();
    }
}

#[test]
fn metrics_csv_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    common::write_eval_fixtures(dir.path());
    let out = dir.path().join("metrics.csv");
    let report = cmd_metrics(
        &dir.path().join("models/pix2pix"),
        &dir.path().join("truth"),
        ModeSelection::Both,
        &out,
    )
    .unwrap();
    assert_eq!(report.records.len(), 2 * common::FIXTURE_TILES);
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().next().unwrap(), METRICS_HEADER.join(","));
    // three metrics per tile and mode, then three mean rows per mode
    assert_eq!(text.lines().count(), 1 + 6 * common::FIXTURE_TILES + 6);
    common::check_golden("metrics.csv", &text).unwrap();
}

#[test]
fn luminance_only_metrics_skip_rgbmean_rows() {
    let dir = tempfile::tempdir().unwrap();
    common::write_eval_fixtures(dir.path());
    let out = dir.path().join("m.csv");
    cmd_metrics(&dir.path().join("models/topogan"), &dir.path().join("truth"), ModeSelection::Luminance, &out)
        .unwrap();
    let text = fs::read_to_string(&out).unwrap();
    assert!(!text.contains("rgbmean"));
    assert!(text.contains("mean,ESSI,luminance,"));
}

#[test]
fn comparing_truth_with_itself_gives_perfect_scores() {
    let dir = tempfile::tempdir().unwrap();
    common::write_eval_fixtures(dir.path());
    let cfg = dir.path().join("self.json");
    fs::write(&cfg, r#"{"models": [{"name": "truth", "dir": "truth"}], "truth_dir": "truth"}"#).unwrap();
    let reports = cmd_compare(&cfg, &dir.path().join("self.csv")).unwrap();
    for mode in MetricMode::ALL {
        let agg = reports[0].1.aggregate(mode).unwrap();
        assert_eq!(agg.mse, 0.0);
        assert!((agg.ssim - 1.0).abs() < 1e-9);
        assert!((agg.essi - 1.0).abs() < 1e-9);
    }
    let csv = fs::read_to_string(dir.path().join("self.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("truth,truth,MSE,0,0"));
}

#[test]
fn orphan_files_are_named_and_exit_with_code_1() {
    let dir = tempfile::tempdir().unwrap();
    write_tiles(&dir.path().join("gen"), &["a", "b", "c"], 1);
    write_tiles(&dir.path().join("truth"), &["a", "b", "d"], 1);
    let err = pair_dirs(&dir.path().join("gen"), &dir.path().join("truth")).unwrap_err();
    let msg = err.to_string();
    assert!(matches!(err, CliError::Validation(_)));
    assert!(msg.contains("c.png") && msg.contains("d.png"), "{msg}");

    let out = maptopo(&[
        "metrics",
        "--generated",
        dir.path().join("gen").to_str().unwrap(),
        "--truth",
        dir.path().join("truth").to_str().unwrap(),
        "--out",
        dir.path().join("m.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("d.png"));
}

#[test]
fn bad_arguments_exit_with_code_1() {
    assert_eq!(maptopo(&["metrics"]).status.code(), Some(1));
    assert_eq!(maptopo(&["gradcheck", "--pairs", "0"]).status.code(), Some(1));
    assert_eq!(maptopo(&["--help"]).status.code(), Some(0));
}

#[test]
fn split_of_eight_samples_at_half() {
    let dir = tempfile::tempdir().unwrap();
    let names = ["s0", "s1", "s2", "s3", "s4", "s5", "s6", "s7"];
    write_tiles(&dir.path().join("rs"), &names, 10);
    write_tiles(&dir.path().join("maps"), &names, 20);
    let manifest = dir.path().join("out/manifest.json");
    let s = cmd_split(&dir.path().join("rs"), &dir.path().join("maps"), 0.5, 3, 0.0, &manifest).unwrap();
    assert_eq!((s.paired, s.unpaired_rs, s.unpaired_map, s.test), (4, 2, 2, 0));

    let m = load_manifest(&manifest).unwrap();
    assert_eq!(m.records.len(), 8);
    assert!(m.records.iter().all(|r| r.rs_path.as_deref().is_none_or(|p| p.starts_with('/'))));

    let again = dir.path().join("out/again.json");
    let out = maptopo(&[
        "split",
        "--rs",
        dir.path().join("rs").to_str().unwrap(),
        "--maps",
        dir.path().join("maps").to_str().unwrap(),
        "--ratio",
        "0.5",
        "--seed",
        "3",
        "--out",
        again.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read(&manifest).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn manifest_paths_are_relative_below_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    write_tiles(&dir.path().join("rs"), &["a", "b"], 1);
    write_tiles(&dir.path().join("maps"), &["a", "b"], 2);
    let manifest = dir.path().join("manifest.json");
    cmd_split(&dir.path().join("rs"), &dir.path().join("maps"), 1.0, 0, 0.0, &manifest).unwrap();
    let m = load_manifest(&manifest).unwrap();
    assert_eq!(m.records[0].rs_path.as_deref(), Some("rs/a.png"));
    assert_eq!(m.records[1].map_path.as_deref(), Some("maps/b.png"));
}

#[test]
fn tile_and_stitch_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let img = common::noise_tile(&mut rng, 96, 96, 3);
    let src = dir.path().join("src.png");
    img.write_png(&src).unwrap();
    let index = cmd_tile(&src, 3, None, &dir.path().join("t")).unwrap();
    assert_eq!(index.files[4], "tile_r01_c01.png");
    assert_eq!(cmd_stitch(&dir.path().join("t"), &dir.path().join("back.png")).unwrap(), (96, 96));
    assert_eq!(ImageTile::read_png(dir.path().join("back.png")).unwrap(), img);

    cmd_tile(&src, 3, Some(8), &dir.path().join("r")).unwrap();
    assert_eq!(cmd_stitch(&dir.path().join("r"), &dir.path().join("small.png")).unwrap(), (24, 24));
    assert!(cmd_tile(&src, 5, None, &dir.path().join("bad")).is_err());
}

#[test]
fn gradcheck_seed_7_passes_and_binary_exits_0() {
    let report = cmd_gradcheck(7, 20, 8, 1e-3).unwrap();
    assert!(report.passed(), "{report:?}");
    assert_eq!(report.max_rel_error.len(), 3);
    let out = maptopo(&["gradcheck", "--seed", "7"]);
    assert_eq!(out.status.code(), Some(0));
    let parsed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(parsed["seed"], 7);
}

fn affine_dataset(dir: &Path, n: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    fs::create_dir_all(dir.join("rs")).unwrap();
    fs::create_dir_all(dir.join("maps")).unwrap();
    for i in 0..n {
        let rs = common::noise_tile(&mut rng, 8, 8, 3);
        let map: Vec<f64> = rs
            .pixels()
            .chunks(3)
            .flat_map(|p| [0.9 * p[0] + 10.0, 0.8 * p[1] + 0.1 * p[2], p[2]])
            .map(|v: f64| v.round().clamp(0.0, 255.0))
            .collect();
        rs.write_png(dir.join(format!("rs/t{i:02}.png"))).unwrap();
        ImageTile::new(8, 8, 3, map).unwrap().write_png(dir.join(format!("maps/t{i:02}.png"))).unwrap();
    }
}

#[test]
fn train_writes_log_and_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    affine_dataset(dir.path(), 8);
    let manifest = dir.path().join("manifest.json");
    cmd_split(&dir.path().join("rs"), &dir.path().join("maps"), 0.5, 1, 0.0, &manifest).unwrap();
    let opts = TrainOptions {
        manifest: manifest.clone(),
        epochs: 3,
        t_s: 2,
        seed: 1,
        freeze_mode: FreezeMode::CycleOnly,
        supervised_only: false,
        weights: LossWeights::default(),
        log_jsonl: Some(dir.path().join("log.jsonl")),
        checkpoint: Some(dir.path().join("ck.json")),
    };
    let summary = cmd_train(&opts).unwrap();
    assert_eq!(summary.epochs, 3);
    assert_eq!(summary.steps, 3 * 8);
    assert!(summary.last_epoch_loss < summary.first_epoch_loss);
    let log = fs::read_to_string(dir.path().join("log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), summary.steps);
    let ck: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("ck.json")).unwrap()).unwrap();
    assert_eq!(ck["g_rm"].as_array().unwrap().len(), 12);
    assert_eq!(cmd_train(&opts).unwrap(), summary);

    let out = maptopo(&["train", "--manifest", manifest.to_str().unwrap(), "--epochs", "2", "--t-s", "3"]);
    assert_eq!(out.status.code(), Some(1), "t_s beyond epochs must be rejected");
}

#[test]
fn ratio_sweep_keeps_paired_count_fixed() {
    let dir = tempfile::tempdir().unwrap();
    affine_dataset(dir.path(), 24);
    let manifest = dir.path().join("manifest.json");
    cmd_split(&dir.path().join("rs"), &dir.path().join("maps"), 0.25, 2, 0.25, &manifest).unwrap();
    let m = load_manifest(&manifest).unwrap();
    assert_eq!(m.count(Subset::Test, Group::Paired), 6);
    let p = m.count(Subset::Train, Group::Paired);

    let out = dir.path().join("sweep.csv");
    let rows = cmd_ratio_sweep(&manifest, &[0.5, 0.3, 1.0], 0, 2, &out).unwrap();
    assert_eq!(rows.iter().map(|r| r.ratio).collect::<Vec<_>>(), [0.3, 0.5, 1.0]);
    assert!(rows.iter().all(|r| r.paired == p));
    let expect: Vec<usize> = [0.3, 0.5, 1.0].iter().map(|r| (p as f64 / r).round() as usize - p).collect();
    assert_eq!(rows.iter().map(|r| r.unpaired).collect::<Vec<_>>(), expect);
    assert_eq!(rows[2].unpaired, 0);
    assert!(rows[0].increase.is_none() && rows[1].increase.is_some());
    assert!(cmd_ratio_sweep(&manifest, &[0.05], 0, 1, &out).is_err());
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().next().unwrap(), SWEEP_HEADER.join(","));
    assert_eq!(text.lines().count(), 4);

    let no_test = dir.path().join("no_test.json");
    cmd_split(&dir.path().join("rs"), &dir.path().join("maps"), 0.5, 2, 0.0, &no_test).unwrap();
    assert!(matches!(cmd_ratio_sweep(&no_test, &[0.5], 0, 1, &out), Err(CliError::Validation(_))));
    assert!(cmd_ratio_sweep(&manifest, &[0.0], 0, 1, &out).is_err());
}
