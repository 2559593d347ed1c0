use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use esmgauntlet::dataio::write_path;
use esmgauntlet::fixtures::ClimateFixture;
use esmgauntlet::report::IntercomparisonReport;

const BIN: &str = env!("CARGO_BIN_EXE_esmgauntlet");

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("ESMGAUNTLET_THREADS")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn small_fixture(dir: &Path, id: &str, seed: u64, bias: f64) -> PathBuf {
    fixture(dir, id, seed, bias, 16, 32)
}

fn fixture(dir: &Path, id: &str, seed: u64, bias: f64, nlat: usize, nlon: usize) -> PathBuf {
    let ds = ClimateFixture {
        nlat,
        nlon,
        months: 36,
        tas_bias_k: bias,
        levels: true,
        ..ClimateFixture::model(id, seed)
    }
    .build()
    .unwrap();
    let path = dir.join(format!("{id}.etc"));
    write_path(&ds, &path).unwrap();
    path
}

fn report(dir: &Path) -> IntercomparisonReport {
    IntercomparisonReport::from_json(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn sanity_on_passing_fixture_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let f = small_fixture(tmp.path(), "m", 1, 0.0);
    let out = tmp.path().join("out");
    let o = run(&["sanity", s(&f), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r.check_ids, ["mass_conservation", "supersaturation"]);
    assert!(out.join("manifest.json").exists());
}

#[test]
fn leaky_trajectory_fails_mass_check() {
    let tmp = tempfile::tempdir().unwrap();
    let traj_dir = tmp.path().join("leaky");
    let o = run(&[
        "idealized",
        "advection",
        "--builtin",
        "leaky",
        "--adapter-opt",
        "nlat=16",
        "--adapter-opt",
        "nlon=32",
        "--steps",
        "10",
        "--save-trajectory",
        "--out",
        s(&traj_dir),
    ]);
    assert_eq!(code(&o), 1);
    let o = run(&["sanity", s(&traj_dir.join("trajectory.etc"))]);
    assert_eq!(code(&o), 1);
    let r = IntercomparisonReport::from_json(&String::from_utf8(o.stdout).unwrap()).unwrap();
    let mass = r.check_table[0].results[0].as_ref().unwrap();
    assert_eq!(mass.check_id, "mass_conservation:q");
    assert!(!mass.passed);
    // Closed form for ten leaky steps.
    let expect = 1.0 - (1.0f64 - 1e-3).powi(10);
    assert!((mass.statistic - expect).abs() < 1e-9);
}

#[test]
fn usage_errors_exit_two() {
    let o = run(&["sanity", "--no-such-flag"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(code(&run(&[])), 2);
    assert_eq!(code(&run(&["idealized", "nowhere", "--builtin", "upwind"])), 2);
    assert_eq!(code(&run(&["causality", "--builtin", "upwind", "--point", "north"])), 2);
    let o = Command::new(BIN)
        .args(["causality", "--builtin", "upwind", "--steps", "1"])
        .env("ESMGAUNTLET_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn io_errors_exit_three() {
    assert_eq!(code(&run(&["sanity", "/nonexistent/file.etc"])), 3);
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.etc");
    std::fs::write(&bad, b"not a container").unwrap();
    assert_eq!(code(&run(&["validate", s(&bad)])), 3);
    assert_eq!(
        code(&run(&[
            "causality",
            "--adapter",
            "/nonexistent/adapter",
            "--steps",
            "1"
        ])),
        3
    );
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let m = small_fixture(tmp.path(), "m", 1, 0.5);
    let r = small_fixture(tmp.path(), "ref", 2, 0.0);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        let o = run(&["metrics", s(&m), s(&r), "--out", s(dir), "--emit", "json,csv,markdown"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["report.json", "report.csv", "report.md", "manifest.json"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let rep = report(&a);
    // tas and pr over five seasons, rmse and bias each.
    assert_eq!(rep.metric_columns.len(), 20);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let f = small_fixture(tmp.path(), "m", 1, 0.0);
    let cfg = tmp.path().join("run.cfg");
    std::fs::write(&cfg, "# strict humidity\nrh_max = 0.5\nmax_exceed = 0\n").unwrap();
    assert_eq!(code(&run(&["sanity", s(&f), "--config", s(&cfg)])), 1);
    let o = run(&["sanity", s(&f), "--config", s(&cfg), "--rh-max", "1.01"]);
    assert_eq!(code(&o), 0);
    let r = IntercomparisonReport::from_json(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!(r.manifest.config["command.sanity.rh_max"], "1.01");
    assert_eq!(r.manifest.config["command.sanity.max_exceed"], "0.0");
    std::fs::write(&cfg, "unknown_key = 1\n").unwrap();
    assert_eq!(code(&run(&["sanity", s(&f), "--config", s(&cfg)])), 2);
}

#[test]
fn compare_builds_portrait_and_report_renders() {
    let tmp = tempfile::tempdir().unwrap();
    let reference = small_fixture(tmp.path(), "ref", 9, 0.0);
    let mut dirs = Vec::new();
    for (i, bias) in [0.2, 0.5, 1.0].iter().enumerate() {
        let id = format!("m{i}");
        let f = small_fixture(tmp.path(), &id, i as u64, *bias);
        let dir = tmp.path().join(&id);
        assert_eq!(
            code(&run(&[
                "metrics",
                s(&f),
                s(&reference),
                "--vars",
                "tas",
                "--out",
                s(&dir)
            ])),
            0
        );
        dirs.push(dir.join("report.json"));
    }
    let merged = tmp.path().join("merged");
    let mut args = vec!["compare"];
    args.extend(dirs.iter().map(|p| s(p)));
    args.extend(["--out", s(&merged), "--emit", "json,markdown"]);
    let o = run(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&merged);
    assert_eq!(r.models, ["m0", "m1", "m2", "ref"]);
    let p = r.portrait.as_ref().unwrap();
    assert_eq!(p.columns.len(), 5);
    // The reference has no rmse of its own.
    assert!(p.values[3].iter().all(Option::is_none));
    assert!(std::fs::read_to_string(merged.join("report.md"))
        .unwrap()
        .contains("## Portrait"));

    let o = run(&["report", s(&merged.join("report.json")), "--emit", "csv"]);
    assert_eq!(code(&o), 0);
    let csv = String::from_utf8(o.stdout).unwrap();
    assert_eq!(csv.lines().count(), 1 + r.metric_records().len());
}

#[test]
fn external_adapter_matches_builtin() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let adapter = format!("'{BIN}' serve-toy variant=upwind nlat=16 nlon=32");
    let o = run(&["causality", "--adapter", &adapter, "--steps", "10", "--out", s(&a)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(&[
        "causality",
        "--builtin",
        "upwind",
        "--adapter-opt",
        "nlat=16",
        "--adapter-opt",
        "nlon=32",
        "--steps",
        "10",
        "--out",
        s(&b),
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(
        std::fs::read(a.join("causality.csv")).unwrap(),
        std::fs::read(b.join("causality.csv")).unwrap()
    );
}

#[test]
fn teleport_fails_causality() {
    let o = run(&[
        "causality",
        "--builtin",
        "teleport",
        "--adapter-opt",
        "s=0.1",
        "--adapter-opt",
        "nlat=16",
        "--adapter-opt",
        "nlon=32",
        "--steps",
        "3",
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn features_and_spectra_run() {
    let tmp = tempfile::tempdir().unwrap();
    let m = fixture(tmp.path(), "m", 1, 0.0, 64, 128);
    let r = fixture(tmp.path(), "ref", 2, 0.0, 64, 128);
    let out = tmp.path().join("f");
    assert_eq!(code(&run(&["features", s(&m), "--out", s(&out)])), 0);
    assert!(out.join("features.json").exists());
    let rep = report(&out);
    let mean = rep
        .metric_records()
        .into_iter()
        .find(|x| x.metric_id == "closed_minima_mean")
        .unwrap();
    assert_eq!(mean.value.as_scalar(), Some(3.0));
    let out = tmp.path().join("s");
    assert_eq!(code(&run(&["spectra", s(&m), s(&r), "--out", s(&out)])), 0);
    assert!(out.join("spectra.json").exists());
    assert_eq!(code(&run(&["constraints", s(&m)])), 0);
    assert_eq!(code(&run(&["validate", s(&m)])), 0);
}
