use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str], config: &Path, out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_polysquare"));
    cmd.args(args).arg("--config").arg(config);
    if let Some(o) = out {
        cmd.arg("--out").arg(o);
    }
    cmd.output().expect("binary runs")
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn stdout_json(o: &Output) -> Value {
    let text = String::from_utf8_lossy(&o.stdout);
    let start = text.find('{').expect("json on stdout");
    serde_json::from_str(&text[start..]).expect("valid json")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn l_surface_summary() {
    let o = run(&["surface"], &configs().join("surfaces/l.json"), None);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.starts_with("s=3, singular classes=1"), "{text}");
    let v = stdout_json(&o);
    assert_eq!(v["genus"], 2);
}

#[test]
fn torus_summary() {
    let o = run(&["surface"], &configs().join("surfaces/torus.json"), None);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("s=1, singular classes=0"));
}

#[test]
fn surface_from_experiment_config() {
    let o = run(&["surface"], &configs().join("equivalence_l.json"), None);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("s=3, singular classes=1"));
}

#[test]
fn malformed_json_exits_2() {
    let d = TempDir::new().unwrap();
    let p = write(&d, "bad.json", "{\"surface\": \"l\", ");
    let o = run(&["orbit"], &p, None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("malformed JSON"), "{}", stderr(&o));
}

#[test]
fn wrong_field_type_is_named() {
    let d = TempDir::new().unwrap();
    let p = write(
        &d,
        "bad.json",
        r#"{"surface": "torus", "step": {"v1": 0.3, "v2": 0.4}, "start": {"square": 0, "x": 0.1, "y": 0.1}, "j": "ten"}"#,
    );
    let o = run(&["orbit"], &p, None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`j`"), "{}", stderr(&o));

    let p = write(&d, "bad2.json", r#"{"surface": "torus", "step": {"v1": 0.3, "w2": 0.4}}"#);
    let o = run(&["orbit"], &p, None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("step"), "{}", stderr(&o));
}

#[test]
fn malformed_surface_spec_exits_2() {
    let d = TempDir::new().unwrap();
    let p = write(&d, "s.json", r#"{"grid": [[1, 1]], "extra": 3}"#);
    let o = run(&["surface"], &p, None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("extra"), "{}", stderr(&o));
}

#[test]
fn missing_surface_file_exits_2() {
    let d = TempDir::new().unwrap();
    let p = write(&d, "c.json", r#"{"surface": {"file": "nope.json"}, "j": 3}"#);
    let o = run(&["orbit"], &p, None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("surface.file"), "{}", stderr(&o));
}

#[test]
fn both_lengths_rejected() {
    let d = TempDir::new().unwrap();
    let p = write(
        &d,
        "c.json",
        r#"{"surface": "torus", "step": {"v1": 0.3, "v2": 0.4}, "start": {"square": 0, "x": 0.1, "y": 0.1}, "j": 3, "t": 1.0}"#,
    );
    assert_eq!(run(&["orbit"], &p, None).status.code(), Some(2));
}

#[test]
fn torus_orbit_is_uniform() {
    let d = TempDir::new().unwrap();
    let o = run(&["orbit"], &configs().join("orbit_torus.json"), Some(d.path()));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = stdout_json(&o);
    let dev = v["result"]["uniformity"]["sup_deviation"].as_f64().unwrap();
    assert!(dev < 0.02, "{dev}");
    assert_eq!(v["height"], 100);
    assert_eq!(v["tolerances"]["singular_vertex"], 1e-12);
    for f in ["orbit.csv", "orbit.json", "report.csv", "trend.csv", "report.json"] {
        assert!(d.path().join(f).exists(), "{f}");
    }
    let rows = std::fs::read_to_string(d.path().join("orbit.csv")).unwrap();
    assert_eq!(rows.lines().count(), 100_001);
}

#[test]
fn single_point_orbit() {
    let d = TempDir::new().unwrap();
    let p = write(
        &d,
        "c.json",
        r#"{"surface": "torus", "step": {"v1": "0.41421356", "v2": "0.73205080"}, "start": {"square": 0, "x": 0.2, "y": 0.2}, "j": 1,
            "test_sets": [{"square": 0, "x": [0.0, 0.5], "y": [0.0, 0.5]}, {"square": 0, "x": [0.5, 1.0], "y": [0.5, 1.0]}]}"#,
    );
    let o = run(&["orbit"], &p, None);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = stdout_json(&o);
    let rows = v["result"]["uniformity"]["rows"].as_array().unwrap();
    assert_eq!(rows[0]["ratio"].as_f64(), Some(4.0));
    assert_eq!(rows[1]["ratio"].as_f64(), Some(0.0));
    assert_eq!(v["inputs"][0]["source"], "decimal \"0.41421356\"");
}

#[test]
fn orbit_through_cone_point_exits_3() {
    let d = TempDir::new().unwrap();
    // The first step lands exactly on the corner shared by all three squares.
    let p = write(
        &d,
        "c.json",
        r#"{"surface": "l", "step": {"v1": 0.5, "v2": 0.5}, "start": {"square": 0, "x": 0.25, "y": 0.25}, "j": 10}"#,
    );
    let o = run(&["orbit"], &p, Some(d.path()));
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("PathologicalStart at index"), "{}", stderr(&o));
}

#[test]
fn geodesic_into_singularity_exits_3() {
    let o = run(&["geodesic"], &configs().join("geodesic_singular.json"), None);
    assert_eq!(o.status.code(), Some(3));
    let err = stderr(&o);
    let t: f64 = err
        .split("HitSingularity at t=")
        .nth(1)
        .expect("message")
        .trim()
        .parse()
        .unwrap();
    assert!((t - 0.5f64.hypot(0.5)).abs() < 1e-12, "{t}");
}

#[test]
fn manifold_geodesic_writes_segments() {
    let d = TempDir::new().unwrap();
    let p = write(
        &d,
        "c.json",
        r#"{"surface": "2x1", "step": {"v1": {"sqrt": 2, "mod1": true}, "v2": {"sqrt": 3, "mod1": true}}, "v3": 1.0,
            "start": {"square": 0, "x": 0.1, "y": 0.2, "z": 0.3}, "t": 50.0}"#,
    );
    let o = run(&["geodesic"], &p, Some(d.path()));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let seg = std::fs::read_to_string(d.path().join("segments.csv")).unwrap();
    assert!(seg.starts_with("index,square,x0,y0,z0,x1,y1,z1,duration,offset"));
    let total: f64 = seg
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(8).unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((total - 50.0).abs() < 1e-9, "{total}");
}

#[test]
fn equivalence_identity_and_trend() {
    let d = TempDir::new().unwrap();
    let o = run(&["equivalence"], &configs().join("equivalence_l.json"), Some(d.path()));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = stdout_json(&o);
    assert_eq!(v["result"]["identity_holds"], true);
    for s in v["result"]["sets"].as_array().unwrap() {
        let r = &s["report"];
        let (res, t) = (r["residual"].as_f64().unwrap(), r["time"].as_f64().unwrap());
        assert!(res < 1e-9 * t, "{res}");
        assert_eq!(s["sweep_volume_mc"]["within_3_sigma"], true);
    }
    let trend = v["result"]["trend"].as_array().unwrap();
    assert_eq!(trend[0]["j"], 10_000);
    assert_eq!(trend[1]["j"], 100_000);
    assert!(trend[1]["sup_deviation"].as_f64() < trend[0]["sup_deviation"].as_f64());
    assert!(d.path().join("trend.csv").exists());
}

#[test]
fn equivalence_rejects_zero_measure_set() {
    let d = TempDir::new().unwrap();
    let p = write(
        &d,
        "c.json",
        r#"{"surface": "l", "step": {"v1": {"sqrt": 2, "mod1": true}, "v2": {"sqrt": 3, "mod1": true}},
            "start": {"square": 0, "x": 0.1, "y": 0.2}, "j": 100,
            "test_sets": [{"square": 0, "x": [0.3, 0.3], "y": [0.0, 1.0]}]}"#,
    );
    let o = run(&["equivalence"], &p, None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("zero-measure"), "{}", stderr(&o));
}

#[test]
fn equivalence_rejects_rational_step() {
    let d = TempDir::new().unwrap();
    let p = write(
        &d,
        "c.json",
        r#"{"surface": "torus", "step": {"v1": 0.5, "v2": {"sqrt": 2, "mod1": true}},
            "start": {"square": 0, "x": 0.1, "y": 0.2}, "j": 100,
            "test_sets": [{"square": 0, "x": [0.0, 0.5], "y": [0.0, 1.0]}]}"#,
    );
    let o = run(&["equivalence"], &p, None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("not Kronecker"), "{}", stderr(&o));
}

#[test]
fn stepup_pairs_both_spaces() {
    let d = TempDir::new().unwrap();
    let o = run(&["stepup"], &configs().join("stepup_l.json"), Some(d.path()));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = stdout_json(&o);
    let r = &v["result"]["report"];
    assert!(r["surface"]["sup_deviation"].as_f64().unwrap() < 0.05);
    assert!(r["manifold"]["sup_deviation"].as_f64().unwrap() < 0.05);
    assert_eq!(r["base_matches"], true);
    assert!(r["z_ks"].as_f64().unwrap() < 0.01);
    for f in ["surface_report.csv", "manifold_report.csv", "stepup.json"] {
        assert!(d.path().join(f).exists(), "{f}");
    }
}

#[test]
fn lemma34_quadratic_seeds() {
    let o = run(&["lemma34"], &configs().join("lemma34.json"), None);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = stdout_json(&o);
    let oracle = &v["result"]["oracle"];
    assert_eq!(oracle["bounds_ok"], true);
    assert_eq!(oracle["gap_ok"], true);
    assert!(oracle["max_gap"].as_f64().unwrap() < 0.2);
}

#[test]
fn lemma34_eps_one() {
    let d = TempDir::new().unwrap();
    let p = write(
        &d,
        "c.json",
        r#"{"v1": {"sqrt": 2, "mod1": true}, "v2": {"sqrt": 3, "mod1": true}, "w": {"sqrt": 5, "mod1": true}, "eps": 1.0}"#,
    );
    let o = run(&["lemma34"], &p, None);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout_json(&o)["result"]["search"]["m_list"], serde_json::json!([1]));
}

#[test]
fn lemma34_tiny_eps_exits_4() {
    let d = TempDir::new().unwrap();
    let p = write(
        &d,
        "c.json",
        r#"{"v1": {"sqrt": 2, "mod1": true}, "v2": {"sqrt": 3, "mod1": true}, "w": {"sqrt": 5, "mod1": true}, "eps": 1e-9}"#,
    );
    let o = run(&["lemma34"], &p, None);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn certify_finds_relation_and_budget() {
    let o = run(&["certify"], &configs().join("certify.json"), None);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = stdout_json(&o);
    assert_eq!(v["result"]["kronecker"], false);
    assert_eq!(v["result"]["verified"], true);
    assert_eq!(v["result"]["certificate"]["coefficients"], serde_json::json!([-1, 0, 0, 2]));

    let d = TempDir::new().unwrap();
    let p = write(&d, "c.json", r#"{"components": [{"sqrt": 2}, {"sqrt": 3}, {"sqrt": 5}], "height": 100000}"#);
    assert_eq!(run(&["certify"], &p, None).status.code(), Some(4));
}

#[test]
fn decompose_l_surface() {
    let d = TempDir::new().unwrap();
    let o = run(&["decompose"], &configs().join("decompose_l.json"), Some(d.path()));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = stdout_json(&o);
    assert_eq!(v["result"]["k"], 1);
    let csv = std::fs::read_to_string(d.path().join("components.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                files.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn outputs_are_deterministic() {
    for (cmd, cfg) in [
        ("orbit", "orbit_torus.json"),
        ("equivalence", "equivalence_l.json"),
        ("orbit", "batch.json"),
    ] {
        let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
        let cfg = configs().join(cfg);
        let oa = run(&[cmd, "--seed", "7", "--jobs", "3"], &cfg, Some(a.path()));
        let ob = run(&[cmd, "--seed", "7", "--jobs", "1"], &cfg, Some(b.path()));
        assert_eq!(oa.status.code(), Some(0));
        assert_eq!(oa.stdout, ob.stdout, "{cmd}");
        let (sa, sb) = (snapshot(a.path()), snapshot(b.path()));
        assert!(!sa.is_empty());
        assert_eq!(sa, sb, "{cmd}");
    }
}

#[test]
fn batch_writes_one_directory_per_run() {
    let d = TempDir::new().unwrap();
    let o = run(&["orbit", "--jobs", "2"], &configs().join("batch.json"), Some(d.path()));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for i in 0..3 {
        assert!(d.path().join(format!("run-{i:03}/orbit.csv")).exists());
    }
    let v = stdout_json(&o);
    assert_eq!(v["runs"].as_array().unwrap().len(), 3);
}

#[test]
fn batch_reports_failing_run() {
    let d = TempDir::new().unwrap();
    let p = write(
        &d,
        "b.json",
        r#"{"runs": [
            {"surface": "torus", "step": {"v1": 0.3, "v2": 0.4}, "start": {"square": 0, "x": 0.1, "y": 0.1}, "j": 5},
            {"surface": "l", "step": {"v1": 0.5, "v2": 0.5}, "start": {"square": 0, "x": 0.25, "y": 0.25}, "j": 5}
        ]}"#,
    );
    let o = run(&["orbit"], &p, None);
    assert_eq!(o.status.code(), Some(3));
    let v = stdout_json(&o);
    assert_eq!(v["runs"][0]["ok"], true);
    assert_eq!(v["runs"][1]["exit_code"], 3);
}
