mod common;

use std::path::Path;
use std::process::{Command, Output};

use fuseforge::math::PinholeIntrinsics;

fn fuseforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fuseforge")).args(args).output().unwrap()
}

fn fuseforge_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fuseforge")).args(args).env(key, value).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

fn fixture(dir: &Path, n: usize) -> std::path::PathBuf {
    let root = dir.join("seq");
    common::write_fixture(&root, n, &PinholeIntrinsics::tum_freiburg2());
    root
}

#[test]
fn rigid_three_frames() {
    let tmp = tempfile::tempdir().unwrap();
    let root = fixture(tmp.path(), 3);
    let out = tmp.path().join("run");
    let o = fuseforge(&["rigid", s(&root), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read(&out.join("trajectory.txt")).lines().count(), 3);
    assert!(out.join("mesh.ply").exists());
    assert_eq!(read(&out.join("stats.csv")).lines().count(), 4);
    let manifest = read(&out.join("manifest.txt"));
    assert!(manifest.starts_with("command = rigid\n"));
    assert!(manifest.contains("tracker.lambda_photo = 0.1"));

    // Same inputs, same bytes.
    let again = tmp.path().join("run2");
    assert!(fuseforge(&["rigid", s(&root), "--out", s(&again)]).status.success());
    for f in ["trajectory.txt", "stats.csv", "mesh.ply"] {
        assert_eq!(std::fs::read(out.join(f)).unwrap(), std::fs::read(again.join(f)).unwrap(), "{f}");
    }

    // The saved volume meshes to the same surface.
    let meshed = tmp.path().join("meshed");
    let o = fuseforge(&["mesh", s(&out.join("volume.tsdf")), "--out", s(&meshed)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read(out.join("mesh.ply")).unwrap(), std::fs::read(meshed.join("mesh.ply")).unwrap());
}

#[test]
fn rigid_frame_cap_and_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let root = fixture(tmp.path(), 3);
    let out = tmp.path().join("run");
    let o = fuseforge(&["rigid", s(&root), "--out", s(&out), "--max-frames", "2", "--levels", "2", "--lambda-photo", "0"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read(&out.join("trajectory.txt")).lines().count(), 2);
    let manifest = read(&out.join("manifest.txt"));
    assert!(manifest.contains("tracker.iters_per_level = 5, 4"));
    assert!(manifest.contains("flags = --levels 2 --lambda-photo 0 --max-frames 2"));
}

#[test]
fn rigid_missing_dataset_is_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = fuseforge(&["rigid", s(&tmp.path().join("nowhere")), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cannot load dataset"));
    assert!(!tmp.path().join("o").exists());
}

#[test]
fn config_errors_report_the_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.cfg");
    std::fs::write(&cfg, "seed = 2\ntracker.huber_delta = wide\n").unwrap();
    let o = fuseforge(&["nonrigid", "plane", "plane", "--config", s(&cfg), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn nonrigid_identical_meshes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = fuseforge(&["nonrigid", "plane", "plane", "--out", s(&out)]);
    assert!(o.status.success());
    let stats = read(&out.join("stats.csv"));
    for line in stats.lines().skip(1) {
        let vals: Vec<f64> = line.split(',').skip(1).map(|v| v.parse().unwrap()).collect();
        assert!(vals.iter().all(|v| v.abs() < 1e-9), "{line}");
    }
    assert!(read(&out.join("energy.csv")).lines().count() <= 3);
}

#[test]
fn nonrigid_sinusoid_case() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = fuseforge(&["nonrigid", "plane", "sinusoid", "--out", s(&out), "--seed", "1", "--phi", "0.2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stats = read(&out.join("stats.csv"));
    let mut lines = stats.lines();
    assert_eq!(lines.next().unwrap(), "measure,max_m,mean_m,std_m");
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').skip(1).map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.len() == 3 && r.iter().all(|v| v.is_finite() && *v > 0.0)));
    assert!(rows[1][0] < 0.1 * rows[0][0]);
    assert!(out.join("warped.ply").exists());

    let again = tmp.path().join("o2");
    assert!(fuseforge(&["nonrigid", "plane", "sinusoid", "--out", s(&again), "--seed", "1", "--phi", "0.2"]).status.success());
    for f in ["stats.csv", "energy.csv", "warped.ply"] {
        assert_eq!(std::fs::read(out.join(f)).unwrap(), std::fs::read(again.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn nonrigid_missing_target() {
    let tmp = tempfile::tempdir().unwrap();
    let o = fuseforge(&["nonrigid", "plane", s(&tmp.path().join("absent.ply")), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
}

fn write_traj(path: &Path, offset: [f64; 3]) {
    let text: String = (0..10)
        .map(|i| {
            let t = i as f64 * 0.1;
            format!("{:.4} {} {} {} 0 0 0 1\n", t, t + offset[0], 0.5 * t + offset[1], offset[2])
        })
        .collect();
    std::fs::write(path, text).unwrap();
}

#[test]
fn eval_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a.txt");
    let b = tmp.path().join("b.txt");
    write_traj(&a, [0.0; 3]);
    write_traj(&b, [0.03, 0.0, 0.04]);

    let o = fuseforge(&["eval", s(&a), s(&a)]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("ATE-RMSE 0.000000 m"), "{text}");
    assert!(text.contains("RPE-RMSE 0.000000 m"), "{text}");

    let o = fuseforge(&["eval", s(&b), s(&a), "--no-align", "--json"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["ate_rmse_m"].as_f64().unwrap() - 0.05).abs() < 1e-12);
    assert!(v["rpe_rmse_m"].as_f64().unwrap().abs() < 1e-12);

    let bad = tmp.path().join("bad.txt");
    std::fs::write(&bad, "0.0 0 0 0 0 0 0 1\n0.1 1 2\n").unwrap();
    let o = fuseforge(&["eval", s(&bad), s(&a)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains(":2:"));
}

#[test]
fn thread_cap_is_validated() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = fuseforge_env(&["nonrigid", "plane", "bend", "--out", s(&out)], "FUSEFORGE_THREADS", "0");
    assert_eq!(o.status.code(), Some(2));
    let o = fuseforge_env(&["nonrigid", "plane", "bend", "--out", s(&out)], "FUSEFORGE_THREADS", "1");
    assert!(o.status.success());
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(fuseforge(&["rigid"]).status.code(), Some(2));
    assert_eq!(fuseforge(&["frobnicate"]).status.code(), Some(2));
    assert!(fuseforge(&["--help"]).status.success());
}
