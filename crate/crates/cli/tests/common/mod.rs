#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn fracmatch<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_fracmatch"))
        .args(args)
        .output()
        .expect("binary runs")
}

/// Run and require exit code 0.
pub fn ok<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    let out = fracmatch(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    out
}

fn files_in(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path().display().to_string())
        .collect();
    v.sort();
    v
}

/// simulate -> preprocess -> correlate -> train -> classify on the bundled
/// example. Returns the files the pipeline wrote, report last.
pub fn golden_pipeline(dir: &Path) -> Vec<PathBuf> {
    let cfg = fixture("golden.toml");
    let cfg = cfg.to_str().unwrap();
    let d = |p: &str| dir.join(p).display().to_string();
    for (set, prefix, n, seed) in [("train", "T", "9", "11"), ("test", "Q", "3", "12")] {
        ok([
            "simulate",
            "--config",
            cfg,
            "--seed",
            seed,
            "--out",
            &d(set),
            "--surfaces",
            n,
            "--prefix",
            prefix,
            "--maps",
        ]);
        for side in ["base", "tip"] {
            let mut args = vec!["preprocess".to_string(), "--config".into(), cfg.into()];
            args.extend(files_in(&dir.join(set).join(side)));
            args.extend([
                "--out".into(),
                d(&format!("{set}/clean_{side}")),
                "--report".into(),
                d(&format!("{set}_{side}_pre.csv")),
            ]);
            ok(&args);
        }
        ok([
            "correlate",
            "--config",
            cfg,
            "--manifest",
            &d(&format!("{set}/{prefix}_manifest.csv")),
            "--base-dir",
            &d(&format!("{set}/clean_base")),
            "--tip-dir",
            &d(&format!("{set}/clean_tip")),
            "--out",
            &d(&format!("{set}.csv")),
        ]);
    }
    ok([
        "train",
        "--config",
        cfg,
        "--data",
        &d("train.csv"),
        "--out",
        &d("model.json"),
    ]);
    ok([
        "classify",
        "--config",
        cfg,
        "--model",
        &d("model.json"),
        "--data",
        &d("test.csv"),
        "--out",
        &d("report.csv"),
    ]);
    [
        "train_base_pre.csv",
        "train_tip_pre.csv",
        "test_base_pre.csv",
        "test_tip_pre.csv",
        "train.csv",
        "test.csv",
        "model.json",
        "report.csv",
    ]
    .iter()
    .map(|f| dir.join(f))
    .collect()
}
