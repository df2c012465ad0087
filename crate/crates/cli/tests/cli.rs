use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;
use wavediff_core::volume::{load_volume, save_volume};
use wavediff_core::Volume3;

fn wavediff(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wavediff"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

/// The final stdout line is the machine-readable record.
fn record(out: &Output) -> Value {
    let stdout = String::from_utf8_lossy(&out.stdout);
    let last = stdout.lines().last().unwrap_or_else(|| {
        panic!("no stdout; stderr: {}", String::from_utf8_lossy(&out.stderr))
    });
    serde_json::from_str(last).expect("last line is JSON")
}

fn ok(args: &[&str]) -> Value {
    let out = wavediff(args);
    assert_eq!(
        code(&out),
        0,
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    record(&out)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, count: usize, dims: &str, seed: u64) {
    ok(&["--seed", &seed.to_string(), "--output-dir", s(dir), "synth", "--count", &count.to_string(), "--dims", dims]);
}

#[test]
fn preprocess_writes_one_volume_per_input() {
    let tmp = TempDir::new().unwrap();
    let (raw, pre) = (tmp.path().join("raw"), tmp.path().join("pre"));
    synth(&raw, 3, "12,10,14", 1);
    let rec = ok(&[
        "--output-dir", s(&pre), "preprocess", "--input-dir", s(&raw), "--recipe", "brats", "--target", "16",
    ]);
    assert_eq!(rec["count"], 3);
    assert_eq!(rec["dims_histogram"]["16x16x16"], 3);
    for i in 0..3 {
        let v = load_volume(pre.join(format!("synth-{i:04}.v3r"))).unwrap();
        assert_eq!(v.dims(), [16; 3]);
        let (lo, hi) = v.min_max();
        assert!(lo >= -1.0 && hi <= 1.0, "range [{lo}, {hi}]");
    }
    assert!(pre.join("preprocess.json").exists());
}

#[test]
fn preprocess_halvings_override() {
    let tmp = TempDir::new().unwrap();
    let (raw, pre) = (tmp.path().join("raw"), tmp.path().join("pre"));
    synth(&raw, 1, "16", 2);
    let rec = ok(&[
        "--output-dir", s(&pre), "preprocess", "--input-dir", s(&raw), "--recipe", "lidc", "--target", "16",
        "--halvings", "1",
    ]);
    assert_eq!(rec["dims_histogram"]["8x8x8"], 1);
}

#[test]
fn unknown_recipe_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let out = wavediff(&["preprocess", "--input-dir", s(tmp.path()), "--recipe", "nope"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("brats"));
}

#[test]
fn empty_input_dir_reports_zero() {
    let tmp = TempDir::new().unwrap();
    let (raw, pre) = (tmp.path().join("raw"), tmp.path().join("pre"));
    fs::create_dir(&raw).unwrap();
    let out = wavediff(&["--output-dir", s(&pre), "preprocess", "--input-dir", s(&raw), "--recipe", "brats"]);
    assert_eq!(code(&out), 0);
    assert_eq!(record(&out)["count"], 0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
}

#[test]
fn roundtrip_check_passes_on_even_dims_and_rejects_odd() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path(), 1, "8,12,6", 3);
    let vol = tmp.path().join("synth-0000.v3r");
    let rec = ok(&["roundtrip-check", s(&vol)]);
    assert_eq!(rec["passed"], true);
    assert!(rec["max_abs_error"].as_f64().unwrap() < 1e-5);

    let odd = tmp.path().join("odd.v3r");
    save_volume(&Volume3::filled([5, 4, 4], [1.0; 3], 0.5).unwrap(), &odd).unwrap();
    let out = wavediff(&["roundtrip-check", s(&odd)]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("odd"));
}

#[test]
fn paper_preset_requires_override() {
    let out = wavediff(&["train", "--preset", "paper"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--allow-paper-preset"));
}

#[test]
fn zero_threads_is_a_usage_error() {
    assert_eq!(code(&wavediff(&["--threads", "0", "presets"])), 2);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("bench.json");
    fs::write(&cfg, r#"{"dims": [8], "reps": 7}"#).unwrap();
    let rec = ok(&["--config", s(&cfg), "bench", "--reps", "2"]);
    assert_eq!(rec["dims"], serde_json::json!([8, 8, 8]));
    assert_eq!(rec["reps"], 2);

    fs::write(&cfg, r#"{"dims": [8], "bogus": 1}"#).unwrap();
    assert_eq!(code(&wavediff(&["--config", s(&cfg), "bench"])), 2);
}

fn train(dir: &Path, iterations: u64, resume: Option<&Path>) -> Value {
    let it = iterations.to_string();
    let mut args = vec![
        "--seed", "11", "--output-dir", s(dir), "train", "--synthetic-count", "8", "--iterations", &it,
        "--checkpoint-every", "40",
    ];
    if let Some(r) = resume {
        args.extend(["--resume", s(r)]);
    }
    ok(&args)
}

#[test]
fn resumed_training_matches_uninterrupted_run() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let full = train(&a, 200, None);
    train(&b, 120, None);
    let resumed = train(&b, 200, Some(&b.join("checkpoints/ckpt-00000120.json")));
    assert_eq!(resumed["start_iteration"], 120);
    assert_eq!(full["final_loss"], resumed["final_loss"]);
    let blob = |d: &Path| fs::read(d.join("checkpoints/ckpt-00000200.bin")).unwrap();
    assert!(blob(&a) == blob(&b), "checkpoint payloads differ");
    assert_eq!(
        fs::read_to_string(a.join("loss.csv")).unwrap(),
        fs::read_to_string(b.join("loss.csv")).unwrap()
    );
    // keep_last = 3 plus the best checkpoint
    let kept: Vec<_> = fs::read_dir(a.join("checkpoints"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with("ckpt-") && n.ends_with(".json"))
        .collect();
    assert_eq!(kept.len(), 3, "{kept:?}");
    assert!(a.join("checkpoints/best.json").exists());
}

#[test]
fn resume_rejects_a_different_seed() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a");
    train(&a, 40, None);
    let ckpt = a.join("checkpoints/ckpt-00000040.json");
    let out = wavediff(&[
        "--seed", "12", "--output-dir", s(&a), "train", "--synthetic-count", "8", "--iterations", "80",
        "--resume", s(&ckpt),
    ]);
    assert_ne!(code(&out), 0);
}

#[test]
fn sampling_is_reproducible_and_respects_checkpoint_dims() {
    let tmp = TempDir::new().unwrap();
    let run = tmp.path().join("run");
    train(&run, 40, None);
    let ckpt = run.join("checkpoints/ckpt-00000040.json");
    let draw = |name: &str, seed: &str| {
        let dir = tmp.path().join(name);
        ok(&["--seed", seed, "--output-dir", s(&dir), "sample", "--checkpoint", s(&ckpt), "--count", "3"]);
        dir
    };
    let (x, y, z) = (draw("x", "4"), draw("y", "4"), draw("z", "5"));
    for i in 0..3 {
        let f = format!("sample-{i:04}.v3r.raw");
        assert!(fs::read(x.join(&f)).unwrap() == fs::read(y.join(&f)).unwrap());
        assert!(fs::read(x.join(&f)).unwrap() != fs::read(z.join(&f)).unwrap());
    }
    let manifest: Value = serde_json::from_str(&fs::read_to_string(x.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["streams"], serde_json::json!([0, 1, 2]));
    assert_eq!(manifest["seed"], 4);

    let out = wavediff(&["sample", "--checkpoint", s(&ckpt), "--dims", "32", "--output-dir", s(&tmp.path().join("w"))]);
    assert_eq!(code(&out), 1);
}

#[test]
fn sample_needs_exactly_one_source() {
    assert_eq!(code(&wavediff(&["sample"])), 2);
    assert_eq!(code(&wavediff(&["sample", "--analytic", "--checkpoint", "x.json"])), 2);
}

#[test]
fn analytic_sampling_writes_volumes() {
    let tmp = TempDir::new().unwrap();
    let rec = ok(&[
        "--output-dir", s(tmp.path()), "sample", "--analytic", "--mu0", "0.3", "--var0", "0.25", "--dims", "8",
        "--count", "2",
    ]);
    assert_eq!(rec["schedule"], "linear-1000");
    let v = load_volume(tmp.path().join("sample-0001.v3r")).unwrap();
    assert_eq!(v.dims(), [8; 3]);
    v.ensure_finite().unwrap();
}

#[test]
fn diversity_of_identical_volumes_is_one() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path(), 1, "24", 6);
    let v = load_volume(tmp.path().join("synth-0000.v3r")).unwrap();
    for i in 1..4 {
        save_volume(&v, tmp.path().join(format!("copy-{i}.v3r"))).unwrap();
    }
    let rec = ok(&["eval", "--mode", "diversity", "--samples-dir", s(tmp.path()), "--data-range", "1"]);
    assert_eq!(rec["metric"], "diversity_ms_ssim");
    assert_eq!(rec["n"], 4);
    assert!((rec["value"].as_f64().unwrap() - 1.0).abs() < 1e-6);
}

#[test]
fn diversity_needs_two_samples() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path(), 1, "16", 7);
    let out = wavediff(&["eval", "--mode", "diversity", "--samples-dir", s(tmp.path())]);
    assert_eq!(code(&out), 1);
}

#[test]
fn frechet_of_identical_feature_files_is_zero() {
    let tmp = TempDir::new().unwrap();
    let csv = tmp.path().join("f.csv");
    fs::write(&csv, "a,b,c\n1,2,0.5\n0.3,-1,2\n4,0,1\n-2,1.5,0\n").unwrap();
    let rec = ok(&["eval", "--mode", "frechet", "--features-a", s(&csv), "--features-b", s(&csv)]);
    assert!(rec["value"].as_f64().unwrap() < 1e-8);

    let shifted = tmp.path().join("g.csv");
    fs::write(&shifted, "a,b,c\n2,2,0.5\n1.3,-1,2\n5,0,1\n-1,1.5,0\n").unwrap();
    let rec = ok(&["eval", "--mode", "frechet", "--features-a", s(&csv), "--features-b", s(&shifted)]);
    assert!((rec["value"].as_f64().unwrap() - 1.0).abs() < 1e-8);
}

#[test]
fn frechet_toy_features_between_directories() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    synth(&a, 4, "16", 8);
    synth(&b, 4, "16", 9);
    let same = ok(&["eval", "--mode", "frechet", "--toy-features", "--samples-dir", s(&a), "--reference-dir", s(&a)]);
    assert!(same["value"].as_f64().unwrap() < 1e-8);
    let diff = ok(&["eval", "--mode", "frechet", "--toy-features", "--samples-dir", s(&a), "--reference-dir", s(&b)]);
    assert!(diff["value"].as_f64().unwrap() > 0.0);
}

#[test]
fn bench_reports_each_kernel() {
    let tmp = TempDir::new().unwrap();
    let rec = ok(&["--output-dir", s(tmp.path()), "bench", "--dims", "8", "--reps", "2", "--scaling"]);
    let ops: Vec<&str> = rec["ops"].as_array().unwrap().iter().map(|o| o["op"].as_str().unwrap()).collect();
    assert_eq!(ops, ["dwt3", "idwt3", "avg_pool2"]);
    assert!(rec["ops"][0]["voxels_per_second"].as_f64().unwrap() > 0.0);
    assert_eq!(rec["scaling"]["dims"], serde_json::json!([16, 16, 16]));
    assert!(tmp.path().join("bench.json").exists());
    assert_eq!(code(&wavediff(&["bench", "--dims", "7"])), 2);
}

#[test]
fn presets_lists_everything() {
    let rec = ok(&["presets"]);
    let names: Vec<&str> = rec["presets"].as_array().unwrap().iter().map(|p| p["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["desk", "paper", "paper-256"]);
    assert_eq!(rec["schedules"][1]["alpha_bar_1"], 0.9999);
}
