use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn lyapspec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lyapspec")).args(args).output().expect("binary runs")
}

fn run_config(cmd: &str, config: &Path, out: &Path) -> Output {
    lyapspec(&[cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()])
}

fn csv_rows(path: &Path) -> Vec<Vec<f64>> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines().skip(1).map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect()
}

#[test]
fn z2_spectrum_is_a_single_point() {
    let out = tempfile::tempdir().unwrap();
    let res = run_config("spectrum", &configs().join("z2.json"), out.path());
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let rows = csv_rows(&out.path().join("spectrum.csv"));
    assert_eq!(rows.len(), 1);
    assert!((rows[0][0] - 2f64.ln()).abs() < 1e-9);
    assert!((rows[0][1] - 1.0).abs() < 1e-9);
    assert!(out.path().join("spectrum.svg").exists());
}

#[test]
fn chebyshev_spectrum_reports_endpoints() {
    let out = tempfile::tempdir().unwrap();
    let res = run_config("spectrum", &configs().join("chebyshev.json"), out.path());
    assert_eq!(res.status.code(), Some(0));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("spectrum.json")).unwrap()).unwrap();
    let lo = json["spectrum"]["alpha_minus"].as_f64().unwrap();
    let hi = json["spectrum"]["alpha_plus"].as_f64().unwrap();
    assert!((lo - 0.693).abs() < 1e-3, "{lo}");
    assert!((hi - 1.386).abs() < 1e-3, "{hi}");
    let svg = std::fs::read_to_string(out.path().join("spectrum.svg")).unwrap();
    assert!(svg.contains("alpha- = 0.6931") && svg.contains("alpha+ = 1.3863"));
}

#[test]
fn bad_config_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"version": 1, "map": {"num": [[0, 0]], "den": [[1, 0]]}, "bogus": 3}"#).unwrap();
    let res = run_config("pressure", &cfg, &dir.path().join("out"));
    assert_eq!(res.status.code(), Some(2));

    std::fs::write(&cfg, "{\"version\": 1,\n  \"map\": [}").unwrap();
    let res = run_config("pressure", &cfg, &dir.path().join("out"));
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("line 2"));

    let res = lyapspec(&["pressure"]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn missing_bridge_exits_with_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("w.json");
    std::fs::write(
        &cfg,
        r#"{"version": 1, "map": {"num": [[-6, 0], [0, 0], [1, 0]], "den": [[1, 0]]},
            "wmeasure": {"subsystems": [{"loop": {"point": [3, 0], "radius": 0.2}},
                                        {"loop": {"point": [-2, 0], "radius": 0.2}}],
                         "eps_seed": 0.1, "depth": 4, "search_depth": 1}}"#,
    )
    .unwrap();
    let res = run_config("wmeasure", &cfg, &dir.path().join("out"));
    assert_eq!(res.status.code(), Some(4), "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn truncated_schedule_is_reported_as_degraded() {
    let out = tempfile::tempdir().unwrap();
    let res = run_config("wmeasure", &configs().join("wmeasure_truncated.json"), out.path());
    assert_eq!(res.status.code(), Some(3));
    assert!(out.path().join("oscillation.json").exists());
}

#[test]
fn selftest_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let res = lyapspec(&["selftest", "--out", dir.path().to_str().unwrap()]);
        assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stdout));
    }
    let mut names: Vec<_> = std::fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 6);
    for name in names {
        let x = std::fs::read(a.path().join(&name)).unwrap();
        let y = std::fs::read(b.path().join(&name)).unwrap();
        assert_eq!(x, y, "{name:?} differs");
    }
}

#[test]
fn every_bundled_config_runs() {
    let cases = [
        ("pressure", "z2.json"),
        ("conformal", "z2.json"),
        ("orbit", "chebyshev.json"),
        ("gds", "cantor.json"),
        ("gds", "sample.json"),
        ("gds", "bridge.json"),
        ("wmeasure", "wmeasure.json"),
    ];
    for (cmd, file) in cases {
        let out = tempfile::tempdir().unwrap();
        let res = run_config(cmd, &configs().join(file), out.path());
        assert_eq!(res.status.code(), Some(0), "{cmd} {file}: {}", String::from_utf8_lossy(&res.stderr));
        assert!(std::fs::read_dir(out.path()).unwrap().count() > 0);
    }
}
