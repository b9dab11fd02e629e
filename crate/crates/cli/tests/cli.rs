use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn oodseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oodseg"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("failed to launch oodseg")
}

fn ok(args: &[&str]) -> String {
    let out = oodseg(args);
    assert!(
        out.status.success(),
        "oodseg {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, count: usize) {
    ok(&[
        "synth",
        "--out",
        p(dir),
        "--count",
        &count.to_string(),
        "--seed",
        "3",
    ]);
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().into_string().unwrap(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

#[test]
fn eval_is_byte_reproducible() {
    let data = tempfile::tempdir().unwrap();
    synth(data.path(), 3);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    ok(&[
        "eval",
        "--dataset",
        p(data.path()),
        "--out",
        p(a.path()),
        "--seed",
        "5",
    ]);
    ok(&[
        "eval",
        "--dataset",
        p(data.path()),
        "--out",
        p(b.path()),
        "--seed",
        "5",
    ]);
    ok(&[
        "eval",
        "--dataset",
        p(data.path()),
        "--out",
        p(c.path()),
        "--seed",
        "5",
        "--serial",
    ]);
    let fa = files(a.path());
    assert_eq!(fa.len(), 7);
    assert_eq!(fa, files(b.path()));
    assert_eq!(fa, files(c.path()));
}

#[test]
fn flags_override_config_file_override_profile() {
    let data = tempfile::tempdir().unwrap();
    synth(data.path(), 1);
    let cfg = data.path().join("run.cfg");
    fs::write(&cfg, "k = 3\ntau = 2.0\nscore = ratio-logit-blend\n").unwrap();
    let out = tempfile::tempdir().unwrap();
    ok(&[
        "eval",
        "--dataset",
        p(data.path()),
        "--out",
        p(out.path()),
        "--profile",
        "ade-ood",
        "--config",
        p(&cfg),
        "--tau",
        "1.25",
    ]);
    let csv = fs::read_to_string(out.path().join("metrics.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    // k from file, tau from flag, T from profile
    assert_eq!(&row[6..9], &["3", "1.25", "0.4"]);
    assert_eq!(row[11], "ratio-logit-blend");
}

#[test]
fn profile_sets_triple() {
    let data = tempfile::tempdir().unwrap();
    synth(data.path(), 1);
    let out = tempfile::tempdir().unwrap();
    ok(&[
        "eval",
        "--dataset",
        p(data.path()),
        "--out",
        p(out.path()),
        "--profile",
        "ade-ood",
    ]);
    let csv = fs::read_to_string(out.path().join("metrics.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(&row[6..9], &["6", "1.1", "0.4"]);
}

#[test]
fn sweep_writes_sorted_table() {
    let data = tempfile::tempdir().unwrap();
    synth(data.path(), 2);
    let out = tempfile::tempdir().unwrap();
    let stdout = ok(&[
        "sweep",
        "--dataset",
        p(data.path()),
        "--out",
        p(out.path()),
        "--k",
        "4,5,6",
        "--tau",
        "1.1,1.5",
        "--ratio-threshold",
        "0.2,0.3,0.4",
    ]);
    assert_eq!(stdout.lines().count(), 1 + 18);
    let csv = fs::read_to_string(out.path().join("sweep.csv")).unwrap();
    let aps: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(4).unwrap().parse().unwrap())
        .collect();
    assert_eq!(aps.len(), 18);
    assert!(aps.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn run_and_baseline() {
    let data = tempfile::tempdir().unwrap();
    synth(data.path(), 1);
    let out = tempfile::tempdir().unwrap();
    let d = data.path();
    let stdout = ok(&[
        "run",
        "--features",
        p(&d.join("synth_000.features.npy")),
        "--logits",
        p(&d.join("synth_000.logits.npy")),
        "--gt",
        p(&d.join("synth_000.gt.pgm")),
        "--out",
        p(out.path()),
        "--k",
        "2",
        "--upsample",
        "onehot-bilinear",
    ]);
    assert!(stdout.starts_with("cluster,pixel_count,below_count,ratio,is_ood\n"));
    assert!(stdout.contains("AP "));
    assert!(out.path().join("synth_000.score.npy").is_file());
    assert!(out.path().join("synth_000.mask.pgm").is_file());

    let base = tempfile::tempdir().unwrap();
    let stdout = ok(&["baseline", "--dataset", p(d), "--out", p(base.path())]);
    assert!(stdout.contains("AP"));
    assert!(base.path().join("synth_000.score.npy").is_file());
}

#[test]
fn failures_exit_non_zero() {
    let empty = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let r = oodseg(&["eval", "--dataset", p(empty.path()), "--out", p(out.path())]);
    assert!(!r.status.success());
    assert!(String::from_utf8_lossy(&r.stderr).contains("no samples"));

    let r = oodseg(&[
        "eval",
        "--dataset",
        p(empty.path()),
        "--out",
        p(out.path()),
        "--ratio-threshold",
        "1.5",
    ]);
    assert!(!r.status.success());

    let r = oodseg(&[
        "eval",
        "--dataset",
        p(empty.path()),
        "--out",
        p(out.path()),
        "--upsample",
        "bicubic",
    ]);
    assert!(!r.status.success());
}

#[test]
fn skip_bad_continues_past_incomplete_samples() {
    let data = tempfile::tempdir().unwrap();
    synth(data.path(), 2);
    fs::remove_file(data.path().join("synth_001.gt.pgm")).unwrap();
    let out = tempfile::tempdir().unwrap();
    let r = oodseg(&["eval", "--dataset", p(data.path()), "--out", p(out.path())]);
    assert!(!r.status.success());
    assert!(String::from_utf8_lossy(&r.stderr).contains("incomplete"));
    let stdout = ok(&[
        "eval",
        "--dataset",
        p(data.path()),
        "--out",
        p(out.path()),
        "--skip-bad",
    ]);
    assert!(stdout.contains("1 images"));
    assert!(stdout.contains("skipped: synth_001"));
}
