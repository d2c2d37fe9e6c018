//! Command-line front end. Exit codes: 0 success/PASS, 1 FAIL, 2
//! INCONCLUSIVE or flagged, 3 usage or IO error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use crate::area::{run_area_experiment, Verdict};
use crate::bch::bch_table_csv;
use crate::differentiation::{
    assemble_pansu_differential, validate_differential, validate_hhom, AssemblyOptions, DyadicSchedule, Frame, RemainderOptions,
};
use crate::error::{Error, Result};
use crate::io::{read_json, resolve_group, to_json, validate_group_file, write_atomic, ExperimentFile, MapSpec, NormSpec, Report};
use crate::measure::{hhom_jacobian, metric_jacobian, HHomMethod, JacobianCalibrator, JacobianInput, JacobianMethod, JacobianOptions};
use crate::norm::{calibrate_sigma, CalibrationBudget, GroupBundle};
use crate::scalar::{format_rational, format_rational_list, parse_f64_list, parse_rational_list, Rational};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_INCONCLUSIVE: i32 = 2;
pub const EXIT_USAGE: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "carnot", version, about = "Homogeneous groups: products, norms, differentials, Jacobians and area checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Group name or group file (for subcommands without a positional group).
    #[arg(long, global = true)]
    pub group: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Sample budget: calibration pairs, covering cloud size or area cloud size.
    #[arg(long, global = true)]
    pub budget: Option<usize>,
    /// Covering scales, coarse to fine, comma separated.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub eps: Option<Vec<f64>>,
    #[arg(long, global = true)]
    pub tolerance: Option<f64>,
    /// Report path (JSON); written atomically.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check skew-symmetry, gradation and Jacobi for a group.
    Validate { group: String },
    /// Group product of two elements.
    Mul {
        group: String,
        #[arg(allow_hyphen_values = true)]
        x: String,
        #[arg(allow_hyphen_values = true)]
        y: String,
    },
    Inv {
        group: String,
        #[arg(allow_hyphen_values = true)]
        x: String,
    },
    Norm {
        group: String,
        #[arg(allow_hyphen_values = true)]
        x: String,
    },
    Dist {
        group: String,
        #[arg(allow_hyphen_values = true)]
        x: String,
        #[arg(allow_hyphen_values = true)]
        y: String,
    },
    /// Dynkin compositions of degree m and their coefficients, as CSV.
    BchTable {
        m: usize,
        /// Include compositions that vanish identically.
        #[arg(long)]
        unpruned: bool,
    },
    /// Calibrate the layer weights of the group's norm.
    Calibrate { group: String },
    /// Pansu differential of a map at a point.
    Differentiate {
        map: String,
        #[arg(long, allow_hyphen_values = true)]
        at: String,
        #[arg(long, default_value_t = 20)]
        depth: usize,
        #[arg(long)]
        target: Option<String>,
    },
    /// Metric Jacobian of a norm, or Jacobian of an h-homomorphism.
    Jacobian {
        /// Norm spec as a JSON file or inline JSON.
        #[arg(long)]
        norm: Option<String>,
        #[arg(long)]
        map: Option<String>,
        #[arg(long)]
        target: Option<String>,
        /// auto, covering, polar (norms); pushforward, determinant (maps).
        #[arg(long)]
        method: Option<String>,
    },
    /// Run an area-formula experiment file.
    AreaCheck {
        experiment: PathBuf,
        /// Per-scale diagnostics; defaults to the report path with `.csv`.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

/// Parse `argv` (including the program name), run, and return the exit code.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Validation(_) | Error::Calibration { .. } => EXIT_FAIL,
        Error::Divergent(_) | Error::InsufficientDensity(_) => EXIT_INCONCLUSIVE,
        _ => EXIT_USAGE,
    }
}

fn verdict_code(v: Verdict) -> i32 {
    match v {
        Verdict::Pass => EXIT_OK,
        Verdict::Fail => EXIT_FAIL,
        Verdict::Inconclusive => EXIT_INCONCLUSIVE,
    }
}

fn emit(cli: &Cli, report: &Report) -> Result<()> {
    let text = to_json(report)?;
    match &cli.out {
        Some(p) => write_atomic(p, &text),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

/// Print a one-line result and, with `--out`, also write a report.
fn emit_line(cli: &Cli, line: &str, report: Report) -> Result<()> {
    println!("{line}");
    if let Some(p) = &cli.out {
        write_atomic(p, &to_json(&report)?)?;
    }
    Ok(())
}

fn coords(b: &GroupBundle, s: &str) -> Result<Vec<f64>> {
    let v = parse_f64_list(s)?;
    b.gradation().check_len(v.len())?;
    Ok(v)
}

fn exact_coords(b: &GroupBundle, s: &str) -> Option<Vec<Rational>> {
    parse_rational_list(s).ok().filter(|v| v.len() == b.dim())
}

fn float_list(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn require_group(cli: &Cli) -> Result<GroupBundle> {
    let g = cli.group.as_deref().ok_or_else(|| Error::Usage("--group is required".into()))?;
    resolve_group(g)
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn execute(cli: &Cli) -> Result<i32> {
    let seed = cli.seed.unwrap_or(0);
    match &cli.command {
        Command::Validate { group } => {
            let report = if Path::new(group).exists() { validate_group_file(Path::new(group))? } else { validate_group(group)? };
            let passes = report.passes();
            println!("{}", if passes { "PASS" } else { "FAIL" });
            for v in &report.violations {
                println!("{v}");
            }
            let mut r = Report::new("validate", json!({ "group": group }), to_value(&report));
            r.verdict = Some(if passes { "PASS" } else { "FAIL" }.into());
            if let Some(p) = &cli.out {
                write_atomic(p, &to_json(&r)?)?;
            }
            Ok(if passes { EXIT_OK } else { EXIT_FAIL })
        }
        Command::Mul { group, x, y } => {
            let b = resolve_group(group)?;
            let input = json!({ "group": group, "x": x, "y": y });
            if let (Some(p), Some(q)) = (exact_coords(&b, x), exact_coords(&b, y)) {
                let z = b.group.multiply(&p.into(), &q.into())?;
                let out = format_rational_list(z.coords());
                emit_line(cli, &out, Report::new("mul", input, json!({ "product": out, "exact": true })))?;
            } else {
                let z = b.mul(&coords(&b, x)?, &coords(&b, y)?);
                let out = float_list(&z);
                emit_line(cli, &out, Report::new("mul", input, json!({ "product": z, "exact": false })))?;
            }
            Ok(EXIT_OK)
        }
        Command::Inv { group, x } => {
            let b = resolve_group(group)?;
            let input = json!({ "group": group, "x": x });
            if let Some(p) = exact_coords(&b, x) {
                let out = format_rational_list(b.group.inverse(&p.into()).coords());
                emit_line(cli, &out, Report::new("inv", input, json!({ "inverse": out, "exact": true })))?;
            } else {
                let z = b.inv(&coords(&b, x)?);
                emit_line(cli, &float_list(&z), Report::new("inv", input, json!({ "inverse": z, "exact": false })))?;
            }
            Ok(EXIT_OK)
        }
        Command::Norm { group, x } => {
            let b = resolve_group(group)?;
            let n = b.norm(&coords(&b, x)?);
            let r = Report::new("norm", json!({ "group": group, "x": x, "norm": b.norm.describe() }), json!({ "norm": n }));
            emit_line(cli, &n.to_string(), r)?;
            Ok(EXIT_OK)
        }
        Command::Dist { group, x, y } => {
            let b = resolve_group(group)?;
            let d = b.dist(&coords(&b, x)?, &coords(&b, y)?);
            let r = Report::new("dist", json!({ "group": group, "x": x, "y": y, "norm": b.norm.describe() }), json!({ "dist": d }));
            emit_line(cli, &d.to_string(), r)?;
            Ok(EXIT_OK)
        }
        Command::BchTable { m, unpruned } => {
            let text = bch_table_csv(*m, !*unpruned)?;
            match &cli.out {
                Some(p) => write_atomic(p, &text)?,
                None => print!("{text}"),
            }
            Ok(EXIT_OK)
        }
        Command::Calibrate { group } => {
            let b = resolve_group(group)?;
            let mut budget = CalibrationBudget { seed, ..Default::default() };
            if let Some(n) = cli.budget {
                budget.pairs = n;
                budget.restarts = budget.restarts.min(n);
            }
            let input = json!({ "group": group, "budget": to_value(&budget), "layers": to_value(&NormSpec::from_norm(&b.norm).layers) });
            let hn = calibrate_sigma(&b.group, b.norm.layers().to_vec(), None, &budget)?;
            let mut r = Report::new("calibrate", input, json!({ "sigmas": hn.sigmas(), "certificate": to_value(&hn.certificate) }));
            r.verdict = Some("PASS".into());
            emit(cli, &r)?;
            Ok(EXIT_OK)
        }
        Command::Differentiate { map, at, depth, target } => differentiate(cli, map, at, *depth, target.as_deref(), seed),
        Command::Jacobian { norm, map, target, method } => jacobian(cli, norm.as_deref(), map.as_deref(), target.as_deref(), method.as_deref(), seed),
        Command::AreaCheck { experiment, csv } => area_check(cli, experiment, csv.as_deref()),
    }
}

fn validate_group(name: &str) -> Result<crate::algebra::ValidationReport> {
    crate::algebra::validate_algebra(resolve_group(name)?.group.algebra().structure_constants())
}

fn differentiate(cli: &Cli, map: &str, at: &str, depth: usize, target: Option<&str>, seed: u64) -> Result<i32> {
    let source = require_group(cli)?;
    let target = match target {
        Some(t) => resolve_group(t)?,
        None => source.clone(),
    };
    let spec = MapSpec::parse_cli(map)?;
    let f = spec.build(&source, &target)?;
    let x = coords(&source, at)?;
    let schedule = DyadicSchedule { t0: 1.0, depth };
    let input = json!({
        "group": source.name, "target": target.name, "map": to_value(&spec), "at": x,
        "schedule": to_value(&schedule), "seed": seed,
    });
    let opts = AssemblyOptions { schedule, seed, ..Default::default() };
    let (l, assembly) = match assemble_pansu_differential(f.as_ref(), &x, &Frame::standard(&source), &opts) {
        Ok(v) => v,
        Err(e @ Error::Divergent(_)) => {
            let mut r = Report::new("differentiate", input, json!({ "error": e.to_string() }));
            r.verdict = Some("INCONCLUSIVE".into());
            emit(cli, &r)?;
            return Ok(EXIT_INCONCLUSIVE);
        }
        Err(e) => return Err(e),
    };
    let snapped = l.snap_rational(64, 1e-9);
    let hom = validate_hhom(&l, seed)?;
    let remainder = validate_differential(f.as_ref(), &x, &l, &RemainderOptions { seed, ..Default::default() })?;
    let exact: Option<Vec<Vec<Vec<String>>>> = snapped
        .as_ref()
        .and_then(|s| s.exact_blocks().map(|b| b.iter().map(|m| m.iter().map(|r| r.iter().map(format_rational).collect()).collect()).collect()));
    let passes = hom.passes && remainder.passes;
    let mut r = Report::new(
        "differentiate",
        input,
        json!({
            "candidate": { "blocks": l.block_rows(), "exact_blocks": exact },
            "defects": {
                "fit_residual": assembly.fit_residual,
                "homomorphism": assembly.homomorphism_defect,
                "linearity": assembly.linearity_defect,
                "bracket_compatibility": l.compatibility_defect,
                "hhom_report": to_value(&hom),
            },
            "assembly": to_value(&assembly),
            "remainder_profile": to_value(&remainder),
        }),
    );
    r.verdict = Some(if passes { "PASS" } else { "FAIL" }.into());
    emit(cli, &r)?;
    Ok(if passes { EXIT_OK } else { EXIT_FAIL })
}

fn jacobian(cli: &Cli, norm: Option<&str>, map: Option<&str>, target: Option<&str>, method: Option<&str>, seed: u64) -> Result<i32> {
    let d = require_group(cli)?;
    let mut opts = JacobianOptions { seed, ..Default::default() };
    if let Some(n) = cli.budget {
        opts.cloud = n;
    }
    if let Some(e) = &cli.eps {
        opts.cover.eps = e.clone();
        opts.auto_eps = false;
    }
    let (est, input) = match (norm, map) {
        (Some(n), None) => {
            let spec: NormSpec = if n.trim_start().starts_with('{') {
                serde_json::from_str(n).map_err(|e| Error::Parse(format!("norm spec: {e}")))?
            } else {
                read_json(Path::new(n))?
            };
            opts.method = match method.unwrap_or("auto") {
                "auto" => JacobianMethod::Auto,
                "covering" => JacobianMethod::Covering,
                "polar" => JacobianMethod::Polar,
                m => return Err(Error::Usage(format!("unknown norm Jacobian method {m:?}"))),
            };
            let s = spec.build(&d.group, &CalibrationBudget { seed, ..Default::default() })?;
            let input = json!({ "group": d.name, "norm": to_value(&NormSpec::from_norm(&s)), "options": to_value(&opts) });
            (metric_jacobian(JacobianInput::Norm(&s), &d, &opts)?, input)
        }
        (None, Some(m)) => {
            let t = match target {
                Some(t) => resolve_group(t)?,
                None => d.clone(),
            };
            let spec = MapSpec::parse_cli(m)?;
            let l = spec.hhom(&d, &t)?;
            let hm = match method.unwrap_or("pushforward") {
                "pushforward" => HHomMethod::Pushforward,
                "determinant" => HHomMethod::Determinant,
                m => return Err(Error::Usage(format!("unknown h-homomorphism Jacobian method {m:?}"))),
            };
            let input = json!({ "group": d.name, "target": t.name, "map": to_value(&spec), "method": to_value(&hm), "options": to_value(&opts) });
            (hhom_jacobian(&l, hm, &mut JacobianCalibrator::new(), &opts)?, input)
        }
        _ => return Err(Error::Usage("give exactly one of --norm and --map".into())),
    };
    let flagged = !est.flags.is_empty() && est.value != 0.0;
    let mut r = Report::new("jacobian", input, to_value(&est));
    r.verdict = Some(if flagged { "FLAGGED" } else { "OK" }.into());
    emit(cli, &r)?;
    Ok(if flagged { EXIT_INCONCLUSIVE } else { EXIT_OK })
}

fn area_check(cli: &Cli, path: &Path, csv_path: Option<&Path>) -> Result<i32> {
    let mut file: ExperimentFile = read_json(path)?;
    if let Some(s) = cli.seed {
        file.seed = s;
    }
    if let Some(e) = &cli.eps {
        file.eps_schedule = Some(e.clone());
    }
    if let Some(t) = cli.tolerance {
        file.tolerance = Some(t);
    }
    if let Some(n) = cli.budget {
        file.budgets.cloud = n;
    }
    let exp = file.build()?;
    let report = match run_area_experiment(&exp) {
        Ok(r) => r,
        Err(e @ Error::InsufficientDensity(_)) => {
            let mut r = Report::new("area-check", to_value(&file), json!({ "error": e.to_string() }));
            r.verdict = Some("INCONCLUSIVE".into());
            emit(cli, &r)?;
            return Ok(EXIT_INCONCLUSIVE);
        }
        Err(e) => return Err(e),
    };
    let rows: Vec<Vec<String>> = report
        .scale_rows()
        .iter()
        .map(|r| {
            vec![
                r.side.clone(),
                r.eps.to_string(),
                r.value.to_string(),
                r.greedy.map(|g| g.to_string()).unwrap_or_default(),
                r.mean_neighbours.to_string(),
                r.isolated_fraction.to_string(),
            ]
        })
        .collect();
    let table = crate::io::csv(&["side", "eps", "value", "greedy", "mean_neighbours", "isolated_fraction"], &rows);
    let csv_target = csv_path.map(Path::to_path_buf).or_else(|| cli.out.as_ref().map(|p| p.with_extension("csv")));
    if let Some(p) = csv_target {
        write_atomic(&p, &table)?;
    }
    let verdict = report.verdict;
    let mut r = Report::new("area-check", to_value(&file), to_value(&report));
    r.verdict = Some(to_value(&verdict).as_str().unwrap_or_default().to_string());
    emit(cli, &r)?;
    eprintln!("{:?}: lhs {} rhs {} gap {:.3e}", verdict, report.lhs.value, report.rhs.value, report.gap);
    Ok(verdict_code(verdict))
}
