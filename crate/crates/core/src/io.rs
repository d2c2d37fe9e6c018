//! JSON formats: group definitions, map specs, experiment files and reports.
//!
//! Rationals travel as strings `"p/q"`; floats use serde_json's shortest
//! round-trip formatting.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::algebra::{validate_algebra, BasisIndex, Gradation, GradedAlgebra, StructureConstants};
use crate::area::{AreaBudget, AreaExperiment, Multiplicity};
use crate::bch::Group;
use crate::catalog::{self, product_lipschitz_map, two_step, ProductMapSpec, TwoStepSpec};
use crate::differentiation::HHomomorphism;
use crate::error::{Error, Result};
use crate::maps::{ConstantMap, FoldMap, GroupMap, LayerProjection, PerturbedHom, PiecewiseHom};
use crate::measure::Domain;
use crate::norm::{calibrate_sigma, CalibrationBudget, GroupBundle, HomogeneousNorm, LayerNorm};
use crate::scalar::{format_rational, parse_rational, Rational};

/// Environment variable naming a directory of group files looked up by name.
pub const CATALOG_DIR_ENV: &str = "CARNOT_CATALOG_DIR";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LayerNormSpec {
    Euclidean,
    Sup,
    Lp { p: String },
    WeightedSup { weights: Vec<f64> },
    Quadratic { gram: Vec<f64> },
}

impl LayerNormSpec {
    pub fn build(&self) -> Result<LayerNorm> {
        Ok(match self {
            LayerNormSpec::Euclidean => LayerNorm::Euclidean,
            LayerNormSpec::Sup => LayerNorm::Sup,
            LayerNormSpec::Lp { p } => LayerNorm::lp(parse_rational(p)?)?,
            LayerNormSpec::WeightedSup { weights } => LayerNorm::WeightedSup(weights.clone()),
            LayerNormSpec::Quadratic { gram } => LayerNorm::Quadratic(gram.clone()),
        })
    }

    pub fn from_norm(n: &LayerNorm) -> Self {
        match n {
            LayerNorm::Euclidean => LayerNormSpec::Euclidean,
            LayerNorm::Sup => LayerNormSpec::Sup,
            LayerNorm::Lp(p) => LayerNormSpec::Lp { p: format_rational(p) },
            LayerNorm::WeightedSup(w) => LayerNormSpec::WeightedSup { weights: w.clone() },
            LayerNorm::Quadratic(g) => LayerNormSpec::Quadratic { gram: g.clone() },
        }
    }
}

/// `"auto"` or explicit values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SigmaSpec {
    Keyword(String),
    Values(Vec<f64>),
}

impl Default for SigmaSpec {
    fn default() -> Self {
        SigmaSpec::Keyword("auto".into())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormSpec {
    pub layers: Vec<LayerNormSpec>,
    #[serde(default)]
    pub sigmas: SigmaSpec,
}

impl NormSpec {
    pub fn from_norm(hn: &HomogeneousNorm) -> Self {
        NormSpec {
            layers: hn.layers().iter().map(LayerNormSpec::from_norm).collect(),
            sigmas: SigmaSpec::Values(hn.sigmas().to_vec()),
        }
    }

    /// Build on `group`; `"auto"` runs the sigma calibration, starting from
    /// `sqrt(2/c)` on two-step groups.
    pub fn build(&self, group: &Group, budget: &CalibrationBudget) -> Result<HomogeneousNorm> {
        let layers = self.layers.iter().map(|l| l.build()).collect::<Result<Vec<_>>>()?;
        let g = group.gradation().clone();
        if layers.len() != g.step() {
            return Err(Error::Structural(format!("norm spec has {} layers, group has step {}", layers.len(), g.step())));
        }
        match &self.sigmas {
            SigmaSpec::Values(s) => HomogeneousNorm::new(g, layers, s.clone()),
            SigmaSpec::Keyword(k) if k == "auto" => {
                let initial = if g.step() == 2 { Some(vec![1.0, two_step_sigma(group, &layers)]) } else { None };
                calibrate_sigma(group, layers, initial, budget)
            }
            SigmaSpec::Keyword(k) => Err(Error::Parse(format!("sigmas must be \"auto\" or a list, got {k:?}"))),
        }
    }
}

fn two_step_sigma(group: &Group, layers: &[LayerNorm]) -> f64 {
    let g = group.gradation();
    let (n, m) = (g.layer_dim(1), g.layer_dim(2));
    let sc = group.algebra().structure_constants();
    let mut beta = vec![vec![vec![Rational::from_integer(0.into()); n]; n]; m];
    for (&(a, b), coeffs) in sc.entries() {
        if a.layer == 1 && b.layer == 1 {
            for (r, q) in coeffs.iter().enumerate() {
                beta[r][a.index - 1][b.index - 1] = q.clone();
            }
        }
    }
    let spec = TwoStepSpec { dim_x: n, dim_t: m, beta, norm_x: layers[0].clone(), norm_t: layers[1].clone() };
    let c = spec.bracket_bound(0);
    if c > 0.0 {
        (2.0 / c).sqrt()
    } else {
        1.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BracketEntry {
    pub i: usize,
    pub u: usize,
    pub j: usize,
    pub v: usize,
    pub coeffs: Vec<String>,
}

/// Group definition file. Basis indices are 1-based `(layer, index)`.
/// A bracket listed without its partner `[b, a]` gets the skew partner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupFile {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alias: Option<String>,
    #[serde(default)]
    pub layers: Vec<usize>,
    #[serde(default)]
    pub brackets: Vec<BracketEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm: Option<NormSpec>,
}

impl GroupFile {
    /// Structure constants as written, before validation.
    pub fn structure_constants(&self) -> Result<StructureConstants> {
        let mut sc = StructureConstants::new(Gradation::new(self.layers.clone())?);
        for e in &self.brackets {
            let coeffs = e.coeffs.iter().map(|s| parse_rational(s)).collect::<Result<Vec<_>>>()?;
            sc.insert(BasisIndex::new(e.i, e.u), BasisIndex::new(e.j, e.v), coeffs)?;
        }
        let missing: Vec<_> = sc
            .entries()
            .filter(|((a, b), _)| sc.get(*b, *a).is_none())
            .map(|((a, b), c)| (*b, *a, c.iter().map(|q| -q.clone()).collect::<Vec<_>>()))
            .collect();
        for (a, b, c) in missing {
            sc.insert(a, b, c)?;
        }
        Ok(sc)
    }

    /// Entries with `a < b`, plus any entry whose partner is not its negative.
    pub fn from_bundle(bundle: &GroupBundle) -> Self {
        let sc = bundle.group.algebra().structure_constants();
        let brackets = sc
            .entries()
            .filter(|((a, b), c)| {
                let skew = sc.get(*b, *a).is_some_and(|p| p.iter().zip(c.iter()).all(|(x, y)| *x == -y.clone()));
                a < b || !skew
            })
            .map(|((a, b), c)| BracketEntry { i: a.layer, u: a.index, j: b.layer, v: b.index, coeffs: c.iter().map(format_rational).collect() })
            .collect();
        GroupFile {
            name: bundle.name.clone(),
            alias: None,
            layers: bundle.gradation().layer_dims().to_vec(),
            brackets,
            norm: Some(NormSpec::from_norm(&bundle.norm)),
        }
    }

    pub fn build(&self) -> Result<GroupBundle> {
        self.build_with(&CalibrationBudget::default())
    }

    pub fn build_with(&self, budget: &CalibrationBudget) -> Result<GroupBundle> {
        if let Some(alias) = &self.alias {
            let base = resolve_group(alias)?;
            let mut b = match &self.norm {
                Some(ns) => base.with_norm(ns.build(&base.group, budget)?)?,
                None => base,
            };
            b.name = self.name.clone();
            return Ok(b);
        }
        let sc = self.structure_constants()?;
        let group = Group::new(GradedAlgebra::new(sc)?)?;
        let ns = self.norm.clone().unwrap_or_else(|| NormSpec { layers: vec![LayerNormSpec::Euclidean; self.layers.len()], sigmas: SigmaSpec::default() });
        let hn = ns.build(&group, budget)?;
        GroupBundle::new(self.name.clone(), group, hn)
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_str(&read(path)?).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

pub fn load_group_file(path: &Path) -> Result<GroupFile> {
    read_json(path)
}

/// Read, validate and build. IO, syntax and validation failures come back as
/// `Error::Io`, `Error::Parse` and `Error::Validation` respectively.
pub fn parse_group_file(path: &Path) -> Result<GroupBundle> {
    load_group_file(path)?.build()
}

pub fn save_group_file(path: &Path, file: &GroupFile) -> Result<()> {
    write_atomic(path, &to_json(file)?)
}

/// Validation report for a group file without building the group.
pub fn validate_group_file(path: &Path) -> Result<crate::algebra::ValidationReport> {
    let file = load_group_file(path)?;
    if let Some(alias) = &file.alias {
        return validate_algebra(resolve_group(alias)?.group.algebra().structure_constants());
    }
    validate_algebra(&file.structure_constants()?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoStepFile {
    /// `beta[r][a][b]` as rational strings.
    pub beta: Vec<Vec<Vec<String>>>,
}

/// Catalog names, `two-step:<file>`, paths to group files, or
/// `<name>.json` under `$CARNOT_CATALOG_DIR`.
pub fn resolve_group(name: &str) -> Result<GroupBundle> {
    if let Some(p) = name.strip_prefix("two-step:") {
        let f: TwoStepFile = read_json(Path::new(p))?;
        let beta = f
            .beta
            .iter()
            .map(|m| m.iter().map(|r| r.iter().map(|s| parse_rational(s)).collect::<Result<Vec<_>>>()).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        return two_step(name, &TwoStepSpec::new(beta)?);
    }
    match catalog::by_name(name) {
        Err(Error::Usage(_)) => {}
        other => return other,
    }
    let path = PathBuf::from(name);
    if path.exists() {
        return parse_group_file(&path);
    }
    if let Ok(dir) = std::env::var(CATALOG_DIR_ENV) {
        let p = Path::new(&dir).join(format!("{name}.json"));
        if p.exists() {
            return parse_group_file(&p);
        }
    }
    Err(Error::Usage(format!("unknown group {name:?}: not a catalog entry or a readable file")))
}

/// Maps addressable from experiment files and the command line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MapSpec {
    Identity,
    Dilation { lambda: f64 },
    /// Row-major rational blocks, one per source layer.
    Blocks { blocks: Vec<Vec<String>> },
    /// Diagonal entries over the whole basis.
    Diagonal { entries: Vec<String> },
    Fold,
    Projection,
    Constant { value: Vec<f64> },
    Perturbed { base: Box<MapSpec>, center: Vec<f64>, bump: Vec<f64> },
    Piecewise { a: Box<MapSpec>, b: Box<MapSpec>, coord: usize, threshold: f64 },
    Product(ProductMapSpec),
}

impl MapSpec {
    /// Short command-line forms: `identity`, `dilation:<r>`, `diag:<q1,...>`,
    /// `fold`, `projection`, `constant:<x1,...>`; anything else is read as a
    /// JSON file holding a map spec.
    pub fn parse_cli(s: &str) -> Result<MapSpec> {
        let (head, rest) = s.split_once(':').unwrap_or((s, ""));
        Ok(match head {
            "identity" => MapSpec::Identity,
            "fold" => MapSpec::Fold,
            "projection" => MapSpec::Projection,
            "dilation" => MapSpec::Dilation { lambda: rest.trim().parse().map_err(|_| Error::Parse(format!("bad dilation factor {rest:?}")))? },
            "diag" => MapSpec::Diagonal { entries: rest.split(',').map(|t| t.trim().to_string()).collect() },
            "constant" => MapSpec::Constant { value: crate::scalar::parse_f64_list(rest)? },
            _ => read_json(Path::new(s))?,
        })
    }

    pub fn hhom(&self, source: &GroupBundle, target: &GroupBundle) -> Result<HHomomorphism> {
        let l = match self {
            MapSpec::Identity => {
                same_shape(source, target)?;
                HHomomorphism::identity(source).retarget(target.clone())
            }
            MapSpec::Dilation { lambda } => {
                same_shape(source, target)?;
                HHomomorphism::dilation(source, *lambda).retarget(target.clone())
            }
            MapSpec::Blocks { blocks } => {
                let q = blocks.iter().map(|b| b.iter().map(|s| parse_rational(s)).collect::<Result<Vec<_>>>()).collect::<Result<Vec<_>>>()?;
                HHomomorphism::from_rational_blocks(source.clone(), target.clone(), q)?
            }
            MapSpec::Diagonal { entries } => {
                same_shape(source, target)?;
                let q = entries.iter().map(|s| parse_rational(s)).collect::<Result<Vec<_>>>()?;
                if q.len() != source.dim() {
                    return Err(Error::Structural(format!("diagonal needs {} entries, got {}", source.dim(), q.len())));
                }
                let g = source.gradation();
                let blocks = (1..=g.step())
                    .map(|i| {
                        let r = g.layer_range(i);
                        let n = r.len();
                        let mut b = vec![Rational::from_integer(0.into()); n * n];
                        for (k, idx) in r.enumerate() {
                            b[k * n + k] = q[idx].clone();
                        }
                        b
                    })
                    .collect();
                HHomomorphism::from_rational_blocks(source.clone(), target.clone(), blocks)?
            }
            _ => return Err(Error::Usage(format!("{self:?} is not an h-homomorphism"))),
        };
        if l.compatibility_defect > 1e-12 {
            return Err(Error::Refused(format!("blocks are not bracket compatible (defect {:e})", l.compatibility_defect)));
        }
        Ok(l)
    }

    pub fn build(&self, source: &GroupBundle, target: &GroupBundle) -> Result<Arc<dyn GroupMap>> {
        Ok(match self {
            MapSpec::Fold => {
                same_shape(source, target)?;
                if !source.is_abelian() {
                    return Err(Error::Usage("the fold map needs an abelian group".into()));
                }
                Arc::new(FoldMap { bundle: source.clone() })
            }
            MapSpec::Projection => Arc::new(LayerProjection::new(source.clone(), target.clone())?),
            MapSpec::Constant { value } => {
                target.gradation().check_len(value.len())?;
                Arc::new(ConstantMap { source: source.clone(), target: target.clone(), value: value.clone() })
            }
            MapSpec::Perturbed { base, center, bump } => {
                source.gradation().check_len(center.len())?;
                target.gradation().check_len(bump.len())?;
                Arc::new(PerturbedHom { hom: base.hhom(source, target)?, center: center.clone(), bump: bump.clone() })
            }
            MapSpec::Piecewise { a, b, coord, threshold } => {
                if *coord >= source.dim() {
                    return Err(Error::Structural(format!("split coordinate {coord} out of range")));
                }
                Arc::new(PiecewiseHom { a: a.hhom(source, target)?, b: b.hhom(source, target)?, coord: *coord, threshold: *threshold })
            }
            MapSpec::Product(spec) => Arc::new(product_lipschitz_map(spec)?),
            _ => Arc::new(self.hhom(source, target)?),
        })
    }
}

fn same_shape(a: &GroupBundle, b: &GroupBundle) -> Result<()> {
    if a.gradation() != b.gradation() {
        return Err(Error::Structural(format!("{} and {} have different gradations", a.name, b.name)));
    }
    Ok(())
}

/// Experiment file for `area-check`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentFile {
    pub group: String,
    /// Target group; the source group when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    pub domain: Domain,
    pub map: MapSpec,
    #[serde(default = "injective")]
    pub multiplicity: Multiplicity,
    #[serde(default)]
    pub budgets: AreaBudget,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_schedule: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
}

fn injective() -> Multiplicity {
    Multiplicity::Injective
}

impl ExperimentFile {
    pub fn build(&self) -> Result<AreaExperiment> {
        let source = resolve_group(&self.group)?;
        let target = match &self.target {
            Some(t) => resolve_group(t)?,
            None => source.clone(),
        };
        let map = self.map.build(&source, &target)?;
        let mut exp = AreaExperiment::new(self.domain.clone(), map);
        exp.multiplicity = self.multiplicity;
        exp.budget = self.budgets.clone();
        exp.eps = self.eps_schedule.clone();
        exp.seed = self.seed;
        exp.lipschitz = self.lipschitz;
        if let Some(t) = self.tolerance {
            exp.tolerance = t;
        }
        Ok(exp)
    }
}

/// Envelope written by every subcommand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Full configuration, including seeds, sufficient to re-run.
    pub input: serde_json::Value,
    pub results: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<String>,
}

impl Report {
    pub fn new(command: &str, input: serde_json::Value, results: serde_json::Value) -> Self {
        Report {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            input,
            results,
            verdict: None,
        }
    }
}

pub fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::Parse(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Write through a temporary file in the same directory and rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| Error::Usage(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.{}.tmp", name.to_string_lossy(), std::process::id()));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

/// Minimal CSV with quoting of fields containing separators or quotes.
pub fn csv<R: AsRef<[String]>>(header: &[&str], rows: &[R]) -> String {
    let field = |s: &str| {
        if s.contains([',', '"', '\n']) {
            format!("\"{}\"", s.replace('"', "\"\""))
        } else {
            s.to_string()
        }
    };
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.as_ref().iter().map(|s| field(s)).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rat;

    fn tmp(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("carnot-io-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn alias_resolves() {
        let p = tmp("alias.json");
        fs::write(&p, r#"{"name": "h", "alias": "heisenberg"}"#).unwrap();
        let b = parse_group_file(&p).unwrap();
        assert_eq!(b.name, "h");
        assert_eq!(b.gradation().layer_dims(), &[2, 1]);
    }

    #[test]
    fn error_classes_are_distinct() {
        assert!(matches!(parse_group_file(Path::new("/nonexistent/g.json")), Err(Error::Io(_))));
        let p = tmp("syntax.json");
        fs::write(&p, "{ not json").unwrap();
        assert!(matches!(parse_group_file(&p), Err(Error::Parse(_))));
        // [x1, x2] = y and [y, x3] = z with x3 otherwise central: the Jacobiator
        // of (x1, x2, x3) is z.
        let p = tmp("jacobi.json");
        fs::write(
            &p,
            r#"{"name": "bad", "layers": [3, 1, 1],
                "brackets": [{"i":1,"u":1,"j":1,"v":2,"coeffs":["1"]},
                             {"i":2,"u":1,"j":1,"v":3,"coeffs":["1"]}]}"#,
        )
        .unwrap();
        match parse_group_file(&p) {
            Err(Error::Validation(r)) => {
                let want = crate::algebra::Violation::Jacobi { a: BasisIndex::new(1, 1), b: BasisIndex::new(1, 2), c: BasisIndex::new(1, 3) };
                assert_eq!(r.violations, vec![want]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rational_round_trip() {
        let p = tmp("third.json");
        let src = GroupFile {
            name: "scaled".into(),
            alias: None,
            layers: vec![2, 1],
            brackets: vec![BracketEntry { i: 1, u: 1, j: 1, v: 2, coeffs: vec!["1/3".into()] }],
            norm: Some(NormSpec { layers: vec![LayerNormSpec::Euclidean, LayerNormSpec::Euclidean], sigmas: SigmaSpec::Values(vec![1.0, 0.5]) }),
        };
        save_group_file(&p, &src).unwrap();
        let b = parse_group_file(&p).unwrap();
        let sc = b.group.algebra().structure_constants();
        assert_eq!(sc.get(BasisIndex::new(1, 2), BasisIndex::new(1, 1)).unwrap(), &[rat(-1, 3)]);
        let back = GroupFile::from_bundle(&b);
        assert_eq!(back, src);
        save_group_file(&p, &back).unwrap();
        assert_eq!(load_group_file(&p).unwrap(), src);
    }

    #[test]
    fn auto_sigmas_on_two_step_file() {
        let p = tmp("h.json");
        fs::write(&p, r#"{"name": "h2", "layers": [2, 1], "brackets": [{"i":1,"u":1,"j":1,"v":2,"coeffs":["1"]}],
                          "norm": {"layers": [{"kind":"euclidean"},{"kind":"euclidean"}], "sigmas": "auto"}}"#)
            .unwrap();
        let b = parse_group_file(&p).unwrap();
        assert!((b.norm.sigmas()[1] - 2f64.sqrt()).abs() < 1e-6, "{:?}", b.norm.sigmas());
    }

    #[test]
    fn map_specs() {
        let h = catalog::heisenberg();
        let m = MapSpec::parse_cli("diag:5/4,4/5,1").unwrap();
        let l = m.hhom(&h, &h).unwrap();
        assert!(l.exact_blocks().is_some());
        assert!(matches!(MapSpec::parse_cli("diag:2,1,1").unwrap().hhom(&h, &h), Err(Error::Refused(_))));
        let json = serde_json::to_string(&MapSpec::Dilation { lambda: 0.5 }).unwrap();
        assert_eq!(json, r#"{"kind":"dilation","lambda":0.5}"#);
    }

    #[test]
    fn csv_quotes() {
        let rows = vec![vec!["a,b".to_string(), "1/3".to_string()]];
        assert_eq!(csv(&["parts", "coefficient"], &rows), "parts,coefficient\n\"a,b\",1/3\n");
    }
}
