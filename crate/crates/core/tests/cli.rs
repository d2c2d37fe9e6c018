use std::path::PathBuf;
use std::process::{Command, Output};

fn carnot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_carnot")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn data(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name).display().to_string()
}

#[test]
fn mul_prints_exact_product() {
    let o = carnot(&["mul", "heisenberg", "1,0,0", "0,1,0"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "1,1,1");
}

#[test]
fn inv_round_trips_rationals() {
    let o = carnot(&["inv", "engel", "1/3,-2,5/7,1"]);
    assert_eq!(o.status.code(), Some(0));
    let inv = stdout(&o).trim().to_string();
    let back = carnot(&["mul", "engel", "1/3,-2,5/7,1", &inv]);
    assert_eq!(stdout(&back).trim(), "0,0,0,0");
}

#[test]
fn usage_errors_exit_3() {
    assert_eq!(carnot(&["mul", "heisenberg", "1,0", "0,1,0"]).status.code(), Some(3));
    assert_eq!(carnot(&["frobnicate"]).status.code(), Some(3));
    assert_eq!(carnot(&["norm", "no-such-group", "1"]).status.code(), Some(3));
}

#[test]
fn validate_reports_violations() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"name":"bad","layers":[3,1,1],"brackets":[
            {"i":1,"u":1,"j":1,"v":2,"coeffs":["1"]},
            {"i":1,"u":3,"j":2,"v":1,"coeffs":["1"]}]}"#,
    )
    .unwrap();
    let o = carnot(&["validate", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert_eq!(carnot(&["validate", "graded-product:engel:3:2,2,1"]).status.code(), Some(0));
}

#[test]
fn bch_table_csv_has_header_and_rows() {
    let o = carnot(&["bch-table", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.starts_with("parts,coefficient\n"));
    assert!(text.lines().count() > 2);
}

#[test]
fn area_check_writes_report_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let o = carnot(&["area-check", &data("area_identity_disk.json"), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["verdict"], "PASS");
    assert_eq!(report["command"], "area-check");
    let csv = std::fs::read_to_string(out.with_extension("csv")).unwrap();
    assert!(csv.lines().count() > 1);
}

#[test]
fn jacobian_of_sup_norm_on_the_plane() {
    let o = carnot(&["jacobian", "--group", "abelian:2", "--norm", r#"{"layers":[{"kind":"sup"}]}"#]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let v = report["results"]["value"].as_f64().unwrap();
    assert!((v - std::f64::consts::FRAC_PI_4).abs() < 0.03, "{v}");
}

#[test]
fn differentiate_recovers_h_homomorphism() {
    let o = carnot(&["differentiate", "diag:5/4,4/5,1", "--group", "heisenberg", "--at", "0.1,-0.2,0.3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn same_seed_same_report() {
    let run = || stdout(&carnot(&["calibrate", "heisenberg", "--seed", "7", "--budget", "5000"]));
    assert_eq!(run(), run());
}
