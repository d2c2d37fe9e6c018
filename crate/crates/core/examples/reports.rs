//! Run an experiment file write the JSON report and list the per-scale estimates.

use carnot::area::run_area_experiment;
use carnot::io::{read_json, to_json, write_atomic, ExperimentFile, Report};

fn main() -> carnot::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/data/area_heisenberg_hhom.json").into());
    let file: ExperimentFile = read_json(path.as_ref())?;
    let rep = run_area_experiment(&file.build()?)?;
    let mut out = Report::new("area-check", serde_json::to_value(&file).unwrap(), serde_json::to_value(&rep).unwrap());
    out.verdict = Some(format!("{:?}", rep.verdict).to_uppercase());
    let dir = std::env::temp_dir();
    write_atomic(&dir.join("carnot-report.json"), &to_json(&out)?)?;
    println!("{}", to_json(&out)?.lines().take(12).collect::<Vec<_>>().join("\n"));
    println!("... written to {}", dir.join("carnot-report.json").display());
    for row in rep.scale_rows() {
        println!("{:<4} eps {:.4}  value {:.5}", row.side, row.eps, row.value);
    }
    Ok(())
}
