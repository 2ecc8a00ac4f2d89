//! End-to-end runs of the `lyapgen` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn repo_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join(rel)
}

fn lyapgen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lyapgen"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn schema(name: &str) -> jsonschema::Validator {
    jsonschema::validator_for(&read_json(&repo_file(&format!("schemas/{name}")))).unwrap()
}

fn check<'a>(report: &'a Value, name: &str) -> &'a Value {
    report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == name)
        .unwrap_or_else(|| panic!("check {name} missing"))
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, body).unwrap();
    p
}

#[test]
fn doublewell_analyze_writes_everything_and_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = lyapgen(&[
        "analyze",
        repo_file("configs/doublewell.json").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    for f in [
        "morse_graph.dot",
        "lyapunov_map.csv",
        "lyapunov_semiflow.csv",
        "report.json",
        "plot.gp",
    ] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    assert!(!out.join("edges.txt").exists());
    let report = read_json(&out.join("report.json"));
    assert_eq!(report["metadata"]["recurrent_component_count"], 3);
    assert_eq!(report["summary"]["failed"], 0);
    let errors: Vec<String> = schema("report.schema.json")
        .iter_errors(&report)
        .map(|e| e.to_string())
        .collect();
    assert!(errors.is_empty(), "{errors:?}");
    assert!(stdout(&o).contains("3 chain transitive components"));
}

#[test]
fn halfmap_skips_lift_checks() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    // a stale semiflow table must not survive a map-mode run
    fs::create_dir_all(&out).unwrap();
    fs::write(out.join("lyapunov_semiflow.csv"), "stale\n").unwrap();
    let o = lyapgen(&[
        "analyze",
        repo_file("configs/halfmap.json").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(!out.join("lyapunov_semiflow.csv").exists());
    let report = read_json(&out.join("report.json"));
    for name in [
        "mean_value_bound",
        "constancy_on_recurrent",
        "shift_identity",
        "image_equality",
    ] {
        let c = check(&report, name);
        assert_eq!(c["status"], "skipped");
        assert_eq!(c["reason"], "map mode");
    }
    for name in [
        "ell_decreases_along_edges",
        "cantor_digits",
        "ell_level_sets",
    ] {
        assert_eq!(check(&report, name)["status"], "pass", "{name}");
    }
    assert!(schema("report.schema.json").is_valid(&report));
}

#[test]
fn underresolved_doublewell_fails_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = lyapgen(&[
        "verify",
        repo_file("configs/doublewell_underresolved.json")
            .to_str()
            .unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    let report = read_json(&out.join("report.json"));
    let failed: Vec<&str> = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["status"] == "fail")
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert!(
        failed.contains(&"component_coincidence") || failed.contains(&"time_scale_invariance"),
        "{failed:?}"
    );
    assert!(stdout(&o).contains("FAIL component_coincidence"));
    // verify writes the report only
    assert!(!out.join("lyapunov_map.csv").exists());
    assert!(schema("report.schema.json").is_valid(&report));
}

#[test]
fn overrides_reach_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = lyapgen(&[
        "verify",
        repo_file("configs/linear1d.json").to_str().unwrap(),
        "--depth",
        "6",
        "--samples",
        "4",
        "--padding",
        "0.1",
        "--quad-n",
        "128",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let m = &read_json(&out.join("report.json"))["metadata"];
    assert_eq!(m["depth"], 6);
    assert_eq!(m["samples_per_axis"], 4);
    assert_eq!(m["padding"], 0.1);
    assert_eq!(m["quad_n"], 128);
}

#[test]
fn malformed_expression_exits_two_with_offset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"schema_version": 1, "name": "bad", "mode": "ode", "dimension": 1,
            "rhs": ["x1 * (2 +"], "domain": [[0, 1]]}"#,
    );
    let o = lyapgen(&["analyze", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("rhs[0]") && err.contains("offset 9"), "{err}");
}

#[test]
fn config_errors_cite_line_or_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "{\n  \"schema_version\": 1,\n  \"name\": \"x\",\n  \"mode\": \"odee\"\n}\n",
    );
    let o = lyapgen(&["analyze", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(":4:"), "{}", stderr(&o));

    let cfg = write_config(
        dir.path(),
        r#"{"schema_version": 1, "name": "x", "mode": "ode", "dimension": 2,
            "rhs": ["x2"], "domain": [[0, 1], [0, 1]]}"#,
    );
    let o = lyapgen(&["analyze", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("field `rhs`"), "{}", stderr(&o));

    let cfg = write_config(
        dir.path(),
        r#"{"schema_version": 1, "name": "lorenz", "mode": "builtin"}"#,
    );
    let o = lyapgen(&["analyze", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown builtin"), "{}", stderr(&o));
}

#[test]
fn shipped_configs_match_the_schema() {
    let v = schema("config.schema.json");
    let mut n = 0;
    for entry in fs::read_dir(repo_file("configs")).unwrap() {
        let p = entry.unwrap().path();
        let doc = read_json(&p);
        let errors: Vec<String> = v.iter_errors(&doc).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{}: {errors:?}", p.display());
        n += 1;
    }
    assert!(n >= 4);
    assert!(!v.is_valid(
        &serde_json::json!({"schema_version": 1, "name": "a", "mode": "builtin", "rhs": ["x1"]})
    ));
}

fn orbit_rows(o: &Output) -> Vec<Vec<String>> {
    stdout(o)
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn orbit_at_fixed_point_is_constant() {
    let o = lyapgen(&[
        "orbit",
        repo_file("configs/doublewell.json").to_str().unwrap(),
        "--x0",
        "1",
        "--T",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = orbit_rows(&o);
    assert_eq!(rows.len(), 17);
    for r in &rows {
        assert_eq!(r[1], rows[0][1]);
        assert_eq!(r[2], rows[0][2]);
        assert_eq!(r[3], rows[0][3]);
        assert_eq!(r[4], "");
    }
}

#[test]
fn orbit_l_decreases_from_half() {
    let o = lyapgen(&[
        "orbit",
        repo_file("configs/doublewell.json").to_str().unwrap(),
        "--x0",
        "0.5",
        "--T",
        "3",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let l: Vec<f64> = orbit_rows(&o)
        .iter()
        .map(|r| r[3].parse().unwrap())
        .collect();
    let floor = 2.0 / 9.0;
    for w in l.windows(2) {
        if w[0] > floor + 1e-9 {
            assert!(w[1] < w[0], "{l:?}");
        } else {
            assert!((w[1] - floor).abs() < 1e-9);
        }
    }
    assert!(orbit_rows(&o).iter().all(|r| r[4].is_empty()));
}

#[test]
fn orbit_snaps_and_validates() {
    let cfg = repo_file("configs/linear1d.json");
    let o = lyapgen(&["orbit", cfg.to_str().unwrap(), "--x0", "0.5", "--T", "0.3"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(
        stdout(&o).contains("snapped to 0.30078125"),
        "{}",
        stdout(&o)
    );

    let o = lyapgen(&["orbit", cfg.to_str().unwrap(), "--x0", "1.5", "--T", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("outside the domain"));

    let o = lyapgen(&[
        "orbit",
        cfg.to_str().unwrap(),
        "--x0",
        "0.1,0.2",
        "--T",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(2));

    let o = lyapgen(&[
        "orbit",
        repo_file("configs/halfmap.json").to_str().unwrap(),
        "--x0",
        "0.5",
        "--T",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("ode-mode"));
}

#[test]
fn edges_file_is_sorted_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = lyapgen(&[
        "analyze",
        repo_file("configs/doublewell_explicit.json")
            .to_str()
            .unwrap(),
        "--depth",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = fs::read_to_string(out.join("edges.txt")).unwrap();
    let edges: Vec<(usize, usize)> = text
        .lines()
        .map(|l| {
            let (a, b) = l.split_once(' ').unwrap();
            (a.parse().unwrap(), b.parse().unwrap())
        })
        .collect();
    assert!(!edges.is_empty());
    assert!(edges.windows(2).all(|w| w[0] < w[1]));
    let report = read_json(&out.join("report.json"));
    assert_eq!(report["metadata"]["edge_count"], edges.len());
}
