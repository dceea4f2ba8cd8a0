use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const QUARTER_BALL: &str = r#"{"n":2,"descriptor":{"type":"quarter_ball","radius":1.0}}"#;
const ELLIPSOID: &str = r#"{"n":2,"descriptor":{"type":"ellipsoid","a":[1.0,1.4142135623730951]}}"#;
const THREE_BARS: &str = r#"{"bars":[{"start":0.0,"end":1.0},{"start":0.5,"end":null},{"start":0.2,"end":0.25}]}"#;
const CP2: &str = r#"{"n":2,"ineqs":[{"v":[-1,0],"c":0.0},{"v":[0,-1],"c":0.0},{"v":[1,1],"c":1.0}]}"#;
const HALF_NORM: &str = r#"{"type":"quadratic","q":[[1.0,0.0],[0.0,1.0]],"l":[0.0,0.0]}"#;

fn bgrowth(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bgrowth"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env_remove("BGROWTH_THREADS")
        .output()
        .expect("binary runs")
}

fn fixture(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn manifest(dir: &Path, name: &str) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join(name)).unwrap()).unwrap()
}

#[test]
fn spectrum_of_quarter_ball() {
    let tmp = TempDir::new().unwrap();
    let d = fixture(tmp.path(), "qb.json", QUARTER_BALL);
    let o = bgrowth(tmp.path(), &["spectrum", "--domain", &d, "--smax", "2.5"]);
    assert!(o.status.success(), "{o:?}");
    assert_eq!(stdout(&o).trim(), "7 orbit classes");
    let csv = fs::read_to_string(tmp.path().join("spectrum.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("face,p,action,primitive,degenerate"));
    assert_eq!(lines.count(), 7);
    let m = manifest(tmp.path(), "spectrum.manifest.json");
    assert_eq!(m["command"], "spectrum");
    assert_eq!(m["outputs"][0], "spectrum.csv");
    assert_eq!(m["config"]["seed"], 0);
    assert!(m["versions"]["barcode_growth"].is_string());
}

#[test]
fn beps_on_three_bars() {
    let tmp = TempDir::new().unwrap();
    let b = fixture(tmp.path(), "b.json", THREE_BARS);
    let o = bgrowth(tmp.path(), &["barcode", "beps", "--bars", &b, "--eps", "0.3", "--s", "0.6"]);
    assert!(o.status.success(), "{o:?}");
    assert_eq!(stdout(&o).trim(), "2");
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("beps.json")).unwrap()).unwrap();
    assert_eq!(report["manifest"], "barcode_beps.manifest.json");
    assert_eq!(report["report"]["count"], 2);
}

#[test]
fn ellipsoid_growth_is_linear() {
    let tmp = TempDir::new().unwrap();
    let d = fixture(tmp.path(), "e.json", ELLIPSOID);
    let o = bgrowth(tmp.path(), &["growth", "--domain", &d, "--smax", "1000", "--samples", "50"]);
    assert!(o.status.success(), "{o:?}");
    let degree: f64 = stdout(&o).split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!((0.8..=1.2).contains(&degree), "{degree}");
    let csv = fs::read_to_string(tmp.path().join("growth.csv")).unwrap();
    assert_eq!(csv.lines().count(), 51);
}

#[test]
fn delzant_count_on_cp2() {
    let tmp = TempDir::new().unwrap();
    let p = fixture(tmp.path(), "p.json", CP2);
    let h = fixture(tmp.path(), "h.json", HALF_NORM);
    let o = bgrowth(tmp.path(), &["delzant", "count", "--polytope", &p, "--hamiltonian", &h, "--k", "3"]);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).starts_with("k 3 total 25 "), "{}", stdout(&o));
    let csv = fs::read_to_string(tmp.path().join("delzant_counts.csv")).unwrap();
    assert!(csv.starts_with("k,total,face_breakdown\n3,25,"));
    let o = bgrowth(tmp.path(), &["delzant", "bound", "--polytope", &p, "--hamiltonian", &h, "--kmax", "20"]);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).starts_with("ok true"));
}

#[test]
fn barcode_and_bm_tools() {
    let tmp = TempDir::new().unwrap();
    let c = fixture(
        tmp.path(),
        "c.json",
        r#"{"field":2,"generators":[{"id":"g0","filtration":0.1},{"id":"g1","filtration":0.4}],"boundary":{"g1":["g0"]}}"#,
    );
    let o = bgrowth(tmp.path(), &["barcode", "reduce", "--complex", &c]);
    assert!(o.status.success(), "{o:?}");
    assert_eq!(stdout(&o).trim(), "1 bars");
    let reduced = tmp.path().join("barcode.json").to_str().unwrap().to_string();
    let b = fixture(tmp.path(), "b.json", r#"{"bars":[{"start":0.1,"end":0.5}]}"#);
    let o = bgrowth(tmp.path(), &["barcode", "bottleneck", "--a", &reduced, "--b", &b]);
    assert!(o.status.success(), "{o:?}");
    let d: f64 = stdout(&o).trim().parse().unwrap();
    assert!((d - 0.1).abs() < 1e-12, "{d}");

    let f = fixture(tmp.path(), "f.json", QUARTER_BALL);
    let g = fixture(tmp.path(), "g.json", r#"{"n":2,"descriptor":{"type":"quarter_ball","radius":2.0}}"#);
    let o = bgrowth(tmp.path(), &["bm", "ratio", "--f", &f, "--g", &g, "--s", "1.0"]);
    assert!(o.status.success(), "{o:?}");
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("bm_ratio.json")).unwrap()).unwrap();
    let bound = r["report"]["bound"]["dSBM_upper"].as_f64().unwrap();
    assert!((bound - 2f64.ln()).abs() < 1e-12);
    assert!((r["report"]["interleaving"].as_f64().unwrap() - 1.0).abs() < 1e-12);

    let l = fixture(
        tmp.path(),
        "l.json",
        r#"{"rungs":[{"label":"a","dsbm_upper":0.3,"value":5},{"label":"b","dsbm_upper":0.2,"value":4},{"label":"c","dsbm_upper":0.1,"value":4},{"label":"d","dsbm_upper":0.05,"value":4}]}"#,
    );
    let o = bgrowth(tmp.path(), &["bm", "ladder", "--ladder", &l]);
    assert!(o.status.success(), "{o:?}");
    assert_eq!(stdout(&o).trim(), "liminf 4 stabilized true");
}

#[test]
fn invalid_input_exits_with_2() {
    let tmp = TempDir::new().unwrap();
    let d = fixture(tmp.path(), "qb.json", QUARTER_BALL);
    let bad = fixture(tmp.path(), "bad.json", r#"{"n":2,"descriptor":{"type":"quarter_ball","radius":-1.0}}"#);
    let missing = tmp.path().join("missing.json");
    for args in [
        vec!["spectrum", "--domain", &bad, "--smax", "2.5"],
        vec!["spectrum", "--domain", missing.to_str().unwrap(), "--smax", "2.5"],
        vec!["spectrum", "--domain", &d, "--smax", "-1"],
        vec!["spectrum", "--domain", &d, "--smax", "2.5", "--action-dedup", "0"],
        vec!["no-such-command"],
    ] {
        let o = bgrowth(tmp.path(), &args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {o:?}");
    }
}

#[test]
fn numerical_failure_exits_with_3() {
    let tmp = TempDir::new().unwrap();
    let d = fixture(tmp.path(), "qb.json", QUARTER_BALL);
    let o = bgrowth(tmp.path(), &["mollify", "--domain", &d, "--eta", "0.5"]);
    assert_eq!(o.status.code(), Some(3), "{o:?}");
    assert!(String::from_utf8_lossy(&o.stderr).contains("margin"));
}

#[test]
fn runs_are_deterministic() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let d = fixture(a.path(), "e.json", ELLIPSOID);
    for dir in [a.path(), b.path()] {
        let o = bgrowth(dir, &["growth", "--domain", &d, "--smax", "200", "--samples", "20", "--seed", "7"]);
        assert!(o.status.success(), "{o:?}");
    }
    for name in ["growth.csv", "growth.json"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    assert_eq!(manifest(a.path(), "growth.manifest.json")["config"]["seed"], 7);
}

#[test]
fn thread_count_comes_from_the_environment() {
    let tmp = TempDir::new().unwrap();
    let d = fixture(tmp.path(), "qb.json", QUARTER_BALL);
    let o = Command::new(env!("CARGO_BIN_EXE_bgrowth"))
        .args(["spectrum", "--domain", &d, "--smax", "2.5", "--out"])
        .arg(tmp.path())
        .env("BGROWTH_THREADS", "2")
        .output()
        .unwrap();
    assert!(o.status.success(), "{o:?}");
    assert_eq!(manifest(tmp.path(), "spectrum.manifest.json")["config"]["threads"], 2);
}
