use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use psgan_core::dsp::wav::{read_wav, write_wav};
use psgan_core::training::toy::{toy_utterance, ToySpec};

fn psgan(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_psgan")).args(args).current_dir(cwd).env("RUST_LOG", "warn").output().unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stdout:\n{}\nstderr:\n{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr));
}

const SMALL: &str = r#"
iterations = 5
segment_frames = 4
checkpoint_every = 5
[arch]
gen_channels = 4
disc_channels = 4
cond_channels = 4
cond_out = 2
"#;

fn vowel(dir: &Path, name: &str, f0: f64) {
    let (x, _, _) = toy_utterance(f0, 8000, 3, &ToySpec::default()).unwrap();
    write_wav(&dir.join(name), &x).unwrap();
}

#[test]
fn usage_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = psgan(&["train", "--no-such-flag"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(psgan(&[], dir.path()).status.code(), Some(2));
    assert_eq!(psgan(&["frobnicate"], dir.path()).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = psgan(&["extract-features", "--wav", "missing.wav"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    fs::write(dir.path().join("bad.toml"), "iterations = 5\nbogus = 1\n").unwrap();
    assert_eq!(psgan(&["--config", "bad.toml", "train", "--toy", "1"], dir.path()).status.code(), Some(1));
    assert_eq!(psgan(&["grad-check", "--channels", "9"], dir.path()).status.code(), Some(1));
}

#[test]
fn extract_features_writes_requested_files() {
    let dir = tempfile::tempdir().unwrap();
    vowel(dir.path(), "v.wav", 120.0);
    ok(&psgan(&["extract-features", "--wav", "v.wav", "--marks", "v.gci", "--f0", "v.f0", "--csv", "v.csv"], dir.path()));
    let track = psgan_core::features::read_features(&dir.path().join("v.psgf")).unwrap();
    assert_eq!(track.len(), 100);
    let marks = fs::read_to_string(dir.path().join("v.gci")).unwrap();
    assert!(marks.lines().all(|l| l.split(' ').count() == 2));
    assert_eq!(fs::read_to_string(dir.path().join("v.f0")).unwrap().lines().count(), 100);
    assert!(dir.path().join("v.csv").exists());
}

#[test]
fn train_synthesize_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("small.toml"), SMALL).unwrap();
    let train = |out: &str| psgan(&["--config", "small.toml", "--deterministic", "--seed", "7", "train", "--toy", "3", "--out", out], p);
    ok(&train("a"));
    ok(&train("b"));
    let a = fs::read(p.join("a/metrics.csv")).unwrap();
    assert_eq!(a, fs::read(p.join("b/metrics.csv")).unwrap());
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 6);

    ok(&psgan(&["--config", "small.toml", "--seed", "7", "train", "--toy", "3", "--resume", "a/final.psgc", "--iterations", "6", "--out", "a"], p));
    assert_eq!(fs::read_to_string(p.join("a/metrics.csv")).unwrap().lines().count(), 7);

    fs::create_dir(p.join("ref")).unwrap();
    fs::create_dir(p.join("syn")).unwrap();
    vowel(&p.join("ref"), "u.wav", 110.0);
    ok(&psgan(&["extract-features", "--wav", "ref/u.wav", "--out", "u.psgf"], p));
    ok(&psgan(&["synthesize", "--features", "u.psgf", "--checkpoint", "a/final.psgc", "--out", "syn/u.wav"], p));
    let y = read_wav(&p.join("syn/u.wav")).unwrap();
    assert_eq!(y.len(), 8000);
    assert!(y.samples.iter().all(|v| v.abs() < 0.9));
    let wrong = psgan(&["synthesize", "--features", "u.psgf", "--checkpoint", "a/final.psgc", "--out", "x.wav", "--mode", "speech"], p);
    assert_eq!(wrong.status.code(), Some(1));

    ok(&psgan(&["evaluate", "--reference", "ref", "--synthesized", "syn", "--csv", "eval.csv", "--json", "eval.json"], p));
    let csv = fs::read_to_string(p.join("eval.csv")).unwrap();
    assert!(csv.lines().last().unwrap().starts_with("ALL,"));
    vowel(&p.join("ref"), "extra.wav", 150.0);
    assert_eq!(psgan(&["evaluate", "--reference", "ref", "--synthesized", "syn"], p).status.code(), Some(1));
}

#[test]
fn prepare_dataset_then_train_on_it() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::create_dir(p.join("wav")).unwrap();
    vowel(&p.join("wav"), "a.wav", 100.0);
    vowel(&p.join("wav"), "b.wav", 140.0);
    fs::write(p.join("small.toml"), SMALL).unwrap();
    ok(&psgan(&["--config", "small.toml", "prepare-dataset", "--wav-dir", "wav", "--out", "data"], p));
    assert_eq!(fs::read_to_string(p.join("data/manifest.txt")).unwrap().lines().count(), 2);
    ok(&psgan(&["--config", "small.toml", "train", "--data", "data", "--out", "run", "--iterations", "2"], p));
    assert!(p.join("run/final.psgc").exists());
}

#[test]
fn grad_check_passes_at_one_channel() {
    let dir = tempfile::tempdir().unwrap();
    let out = psgan(&["grad-check", "--channels", "1"], dir.path());
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).lines().count() >= 20);
}
