use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn deptrail(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deptrail"))
        .args(args)
        .current_dir(dir)
        .env_remove("DEPTRAIL_DATA")
        .output()
        .expect("spawn deptrail")
}

fn msr_file(t: i32, w: i32, h: i32, fill: i32) -> Vec<u8> {
    let mut words = vec![t, w, h];
    words.extend(std::iter::repeat_n(fill, (t * w * h) as usize));
    words.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn synth_small(dir: &Path) {
    let out = deptrail(&["synth", "--out", "data", "--subjects", "2", "--trials", "2"], dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn synth_then_run_writes_reports() {
    let tmp = TempDir::new().unwrap();
    synth_small(tmp.path());
    assert_eq!(fs::read_dir(tmp.path().join("data")).unwrap().count(), 12);
    fs::write(tmp.path().join("run.cfg"), "dataset = data\nprotocol = custom\ntrain = 1\n").unwrap();
    let out = deptrail(&["run", "--config", "run.cfg", "--set", "out_dir=res"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["report.csv", "confusion.csv", "predictions.csv", "manifest.txt"] {
        assert!(tmp.path().join("res").join(f).is_file(), "{f}");
    }
    let manifest = fs::read_to_string(tmp.path().join("res/manifest.txt")).unwrap();
    assert!(manifest.contains("train = subjects:1"));
    assert!(manifest.contains("out_dir = res"));

    let rep = deptrail(&["report", "res"], tmp.path());
    assert!(rep.status.success());
    assert!(String::from_utf8_lossy(&rep.stdout).contains("average_accuracy"));
}

#[test]
fn env_dataset_is_honoured() {
    let tmp = TempDir::new().unwrap();
    synth_small(tmp.path());
    let out = Command::new(env!("CARGO_BIN_EXE_deptrail"))
        .args(["run", "--set", "protocol=custom", "--set", "train=1"])
        .env("DEPTRAIL_DATA", tmp.path().join("data"))
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tmp.path().join("out/report.csv").is_file());
}

#[test]
fn protocol_without_dataset_exits_one() {
    let tmp = TempDir::new().unwrap();
    let out = deptrail(&["run", "--set", "protocol=msr_all_cross"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dataset"));
}

#[test]
fn bad_config_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let out = deptrail(&["run", "--set", "no_such_key=1"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let out = deptrail(&["run", "--set", "bins=eight"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn mtm_dumps_six_pgms() {
    let tmp = TempDir::new().unwrap();
    synth_small(tmp.path());
    let out = deptrail(&["mtm", "data/a02_s01_e01.dseq", "--out", "pgm"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut names: Vec<String> = fs::read_dir(tmp.path().join("pgm"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        [
            "a02_s01_e01_xOy_MHI.pgm",
            "a02_s01_e01_xOy_SHI.pgm",
            "a02_s01_e01_xOz_MHI.pgm",
            "a02_s01_e01_xOz_SHI.pgm",
            "a02_s01_e01_yOz_MHI.pgm",
            "a02_s01_e01_yOz_SHI.pgm",
        ]
    );
    let pgm = fs::read(tmp.path().join("pgm/a02_s01_e01_yOz_MHI.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n64 32\n255\n"));
}

#[test]
fn mtm_missing_file_exits_one() {
    let tmp = TempDir::new().unwrap();
    let out = deptrail(&["mtm", "nope.dseq", "--out", "pgm"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn ingest_converts_and_reports_corrupt_files() {
    let tmp = TempDir::new().unwrap();
    let src = tmp.path().join("raw");
    fs::create_dir(&src).unwrap();
    fs::write(src.join("a01_s01_e01_sdepth.bin"), msr_file(3, 4, 4, 1000)).unwrap();
    fs::write(src.join("a02_s02_e01_sdepth.bin"), msr_file(2, 4, 4, 1500)).unwrap();
    let ok = deptrail(&["ingest", "--src", "raw", "--format", "msr-bin", "--out", "canon"], tmp.path());
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("ingested 2 files"));
    assert!(tmp.path().join("canon/a02_s02_e01.dseq").is_file());

    let mut bad = msr_file(3, 4, 4, 1000);
    bad.truncate(bad.len() - 6);
    fs::write(src.join("a03_s01_e01_sdepth.bin"), bad).unwrap();
    let out = deptrail(&["ingest", "--src", "raw", "--format", "msr-bin", "--out", "canon2"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("a03_s01_e01_sdepth.bin"));
}

#[test]
fn ingest_manifest_overrides_names() {
    let tmp = TempDir::new().unwrap();
    let src = tmp.path().join("raw");
    fs::create_dir(&src).unwrap();
    fs::write(src.join("take1.bin"), msr_file(2, 3, 3, 700)).unwrap();
    fs::write(tmp.path().join("labels.csv"), "take1.bin,7,4,2\n").unwrap();
    let out = deptrail(
        &["ingest", "--src", "raw", "--out", "canon", "--manifest", "labels.csv"],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tmp.path().join("canon/a07_s04_e02.dseq").is_file());
}

#[test]
fn tune_writes_table_and_rejects_empty_grid() {
    let tmp = TempDir::new().unwrap();
    synth_small(tmp.path());
    fs::write(tmp.path().join("run.cfg"), "dataset = data\nprotocol = custom\ntrain = 1,2\ntest = all\n").unwrap();

    fs::write(tmp.path().join("empty.grid"), "# nothing\n").unwrap();
    let out = deptrail(&["tune", "--config", "run.cfg", "--grid", "empty.grid"], tmp.path());
    assert_eq!(out.status.code(), Some(2));

    fs::write(tmp.path().join("g.grid"), "mu = 1e-4, 1e-1\n").unwrap();
    let out = deptrail(&["tune", "--config", "run.cfg", "--grid", "g.grid", "--set", "folds=2"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = fs::read_to_string(tmp.path().join("out/tune.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("best:"));
}
