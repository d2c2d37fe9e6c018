//! Area-formula experiments: `int_A J(mdf f) dH^Q_d` against
//! `int N(f, y) dH^Q_rho(y)`, bi-Lipschitz decomposition of a sample cloud
//! by a finite norm dictionary, and images of degenerate sets.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::differentiation::{estimate_metric_differential, is_degenerate, DyadicSchedule};
use crate::error::{Error, Result};
use crate::maps::GroupMap;
use crate::measure::{
    auto_eps, hausdorff_upper_estimate, median_stretch, metric_jacobian, relative_gap, CoverOptions, Domain, EstimateFlag,
    JacobianInput, JacobianOptions, MeasureEstimate, MeasureMethod, PointCloud, ScaleLevel,
};
use crate::norm::{DirectionMesh, GroupBundle, LayerNorm};

/// Number of preimages of almost every image point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Multiplicity {
    Injective,
    Constant { n: u32 },
    /// Preimage counting for arbitrary maps; always refused.
    Estimated,
}

impl Multiplicity {
    fn factor(&self) -> Result<f64> {
        match self {
            Multiplicity::Injective => Ok(1.0),
            Multiplicity::Constant { n } => Ok(*n as f64),
            Multiplicity::Estimated => Err(Error::Refused(
                "multiplicity must be supplied for a map with known preimage structure; estimation is not attempted".into(),
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AreaBudget {
    /// Monte Carlo points for the Jacobian integral.
    pub points: usize,
    /// Covering cloud size.
    pub cloud: usize,
    /// Direction pairs per metric differential (non-abelian sources).
    pub mesh_pairs: usize,
    /// Sphere-quadrature resolution (abelian sources of dimension <= 3).
    pub sphere_resolution: usize,
    pub schedule: DyadicSchedule,
    pub lipschitz_pairs: usize,
}

impl Default for AreaBudget {
    fn default() -> Self {
        AreaBudget {
            points: 200,
            cloud: 60_000,
            mesh_pairs: 1500,
            sphere_resolution: 128,
            schedule: DyadicSchedule { t0: 0.25, depth: 12 },
            lipschitz_pairs: 1000,
        }
    }
}

#[derive(Clone)]
pub struct AreaExperiment {
    pub domain: Domain,
    pub map: Arc<dyn GroupMap>,
    /// Overrides the map's own bound when set.
    pub lipschitz: Option<f64>,
    pub multiplicity: Multiplicity,
    pub budget: AreaBudget,
    /// Covering scales on the source side; derived from the cloud size when
    /// absent. The image side uses them times the median stretch of `f`.
    pub eps: Option<Vec<f64>>,
    pub seed: u64,
    /// Relative gap for PASS.
    pub tolerance: f64,
}

impl AreaExperiment {
    pub fn new(domain: Domain, map: Arc<dyn GroupMap>) -> Self {
        let tolerance = if map.source().is_abelian() { 0.02 } else { 0.05 };
        AreaExperiment {
            domain,
            map,
            lipschitz: None,
            multiplicity: Multiplicity::Injective,
            budget: AreaBudget::default(),
            eps: None,
            seed: 0,
            tolerance,
        }
    }

    pub fn source(&self) -> &GroupBundle {
        self.map.source()
    }

    pub fn target(&self) -> &GroupBundle {
        self.map.target()
    }

    fn mesh(&self) -> Result<DirectionMesh> {
        let s = self.source();
        if s.is_abelian() && s.dim() <= 3 {
            DirectionMesh::sphere(s, self.budget.sphere_resolution)
        } else {
            DirectionMesh::haar(s, self.budget.mesh_pairs, self.seed ^ 0xd1)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzCheck {
    pub declared: Option<f64>,
    pub measured: f64,
    pub pairs: usize,
}

/// `max rho(f(x), f(y)) / d(x, y)` over random pairs in the domain, half of
/// them at short range.
pub fn lipschitz_spot_check(f: &dyn GroupMap, domain: &Domain, pairs: usize, seed: u64) -> Result<LipschitzCheck> {
    let (s, t) = (f.source(), f.target());
    let pts = domain.sample(s, 2 * pairs, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x11);
    let mut measured = 0.0f64;
    for k in 0..pairs {
        let x = &pts[2 * k];
        let y = if k % 2 == 0 {
            pts[2 * k + 1].clone()
        } else {
            let v = &pts[2 * k + 1];
            let n = s.norm(v);
            if n == 0.0 {
                continue;
            }
            s.mul(x, &s.dilate(rng.random_range(1e-3..0.1) / n, v))
        };
        let d = s.dist(x, &y);
        if d > 0.0 {
            measured = measured.max(t.dist(&f.eval(x), &f.eval(&y)) / d);
        }
    }
    Ok(LipschitzCheck { declared: f.lipschitz_bound(), measured, pairs })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LhsEstimate {
    pub value: f64,
    pub std_error: f64,
    pub mean_jacobian: f64,
    /// `H^Q_d(A)` from the shared covering scheme.
    pub domain_measure: MeasureEstimate,
    pub points: usize,
    pub failed_points: usize,
    pub degenerate_points: usize,
    pub inconclusive: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhsEstimate {
    pub value: f64,
    pub multiplicity: f64,
    pub image_measure: MeasureEstimate,
    /// Image scales are the source scales times this stretch.
    pub stretch: f64,
}

/// Covering setup shared by both sides.
struct Shared {
    cloud: PointCloud,
    cover: CoverOptions,
    stretch: f64,
    degenerate_image: bool,
}

fn min_stretch(f: &dyn GroupMap, mesh: &DirectionMesh, xs: &[Vec<f64>], sched: &DyadicSchedule) -> Result<f64> {
    let mut m = f64::INFINITY;
    for x in xs.iter().take(8) {
        let md = estimate_metric_differential(f, x, mesh, sched, 0, 0)?;
        m = m.min(md.sample.min_value());
    }
    Ok(m)
}

fn shared_setup(exp: &AreaExperiment) -> Result<Shared> {
    let (f, s, t) = (exp.map.as_ref(), exp.source(), exp.target());
    let q = s.homogeneous_dim();
    let probe = exp.domain.sample(s, 2002, exp.seed ^ 0x5eed)?;
    let images: Vec<Vec<f64>> = probe.iter().map(|p| f.eval(p)).collect();
    let stretch = median_stretch(s, t, &probe, &images);
    let degenerate_image = images.iter().all(|y| y == &images[0]);
    let mesh = DirectionMesh::haar(s, 32, exp.seed)?;
    let m = min_stretch(f, &mesh, &probe, &exp.budget.schedule)?;
    let guard_mult = if m > 1e-6 { (stretch / m).max(1.0) } else { 1.0 };
    let eps = match &exp.eps {
        Some(e) => e.clone(),
        None => auto_eps(q, exp.budget.cloud, guard_mult, 64.0),
    };
    let guard = eps.iter().fold(0.0f64, |a, e| a.max(*e)) / 2.0 * guard_mult;
    let cloud = PointCloud::guarded(s, &exp.domain, guard, exp.budget.cloud, exp.seed)?;
    Ok(Shared { cloud, cover: CoverOptions { eps, ..Default::default() }, stretch, degenerate_image })
}

fn lhs_with(exp: &AreaExperiment, sh: &Shared) -> Result<LhsEstimate> {
    let s = exp.source();
    let f = exp.map.as_ref();
    let domain_measure = hausdorff_upper_estimate(&sh.cloud, s, s.homogeneous_dim(), &sh.cover)?;
    let mesh = exp.mesh()?;
    let xs = exp.domain.sample(s, exp.budget.points, exp.seed ^ 0x1a)?;
    let jopts = JacobianOptions { seed: exp.seed, ..Default::default() };
    let mut js = Vec::with_capacity(xs.len());
    let (mut failed, mut degenerate) = (0, 0);
    for x in &xs {
        let md = estimate_metric_differential(f, x, &mesh, &exp.budget.schedule, 0, 0)?;
        if !md.sample.divergent.is_empty() {
            failed += 1;
            continue;
        }
        if is_degenerate(&md.sample) {
            degenerate += 1;
        }
        js.push(metric_jacobian(JacobianInput::Sample(&md.sample), s, &jopts)?.value);
    }
    let n = js.len().max(1) as f64;
    let mean = js.iter().sum::<f64>() / n;
    let var = js.iter().map(|j| (j - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let std_error = (var / n).sqrt() * domain_measure.value;
    Ok(LhsEstimate {
        value: mean * domain_measure.value,
        std_error,
        mean_jacobian: mean,
        domain_measure,
        points: xs.len(),
        failed_points: failed,
        degenerate_points: degenerate,
        inconclusive: failed as f64 > 0.01 * xs.len() as f64,
    })
}

fn rhs_with(exp: &AreaExperiment, sh: &Shared) -> Result<RhsEstimate> {
    let multiplicity = exp.multiplicity.factor()?;
    let t = exp.target();
    let q = exp.source().homogeneous_dim();
    if sh.degenerate_image {
        // A single point carries no H^Q measure.
        return Ok(RhsEstimate { value: 0.0, multiplicity, image_measure: MeasureEstimate::exact(0.0, MeasureMethod::Exact), stretch: sh.stretch });
    }
    let image = sh.cloud.map(|p| exp.map.eval(p));
    let cover = CoverOptions { eps: sh.cover.eps.iter().map(|e| e * sh.stretch).collect(), ..sh.cover.clone() };
    let image_measure = hausdorff_upper_estimate(&image, t, q, &cover)?;
    Ok(RhsEstimate { value: multiplicity * image_measure.value, multiplicity, image_measure, stretch: sh.stretch })
}

pub fn lhs_integral(exp: &AreaExperiment) -> Result<LhsEstimate> {
    lhs_with(exp, &shared_setup(exp)?)
}

pub fn rhs_integral(exp: &AreaExperiment) -> Result<RhsEstimate> {
    rhs_with(exp, &shared_setup(exp)?)
}

/// One row of the per-scale CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleRow {
    pub side: String,
    pub eps: f64,
    pub value: f64,
    pub greedy: Option<f64>,
    pub mean_neighbours: f64,
    pub isolated_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AreaReport {
    pub source: String,
    pub target: String,
    pub map: String,
    pub lhs: LhsEstimate,
    pub rhs: RhsEstimate,
    pub gap: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
    pub lipschitz: LipschitzCheck,
    pub eps: Vec<f64>,
    pub seed: u64,
    pub notes: Vec<String>,
}

impl AreaReport {
    pub fn scale_rows(&self) -> Vec<ScaleRow> {
        let row = |side: &str, l: &ScaleLevel| ScaleRow {
            side: side.into(),
            eps: l.eps,
            value: l.value,
            greedy: l.greedy,
            mean_neighbours: l.mean_neighbours,
            isolated_fraction: l.isolated_fraction,
        };
        let mut out: Vec<ScaleRow> = self.lhs.domain_measure.levels.iter().map(|l| row("lhs", l)).collect();
        out.extend(self.rhs.image_measure.levels.iter().map(|l| row("rhs", l)));
        out
    }
}

/// Smallest denominator used for the relative gap.
pub const GAP_FLOOR: f64 = 1e-12;

pub fn run_area_experiment(exp: &AreaExperiment) -> Result<AreaReport> {
    exp.domain.check(exp.source())?;
    let mut lip = lipschitz_spot_check(exp.map.as_ref(), &exp.domain, exp.budget.lipschitz_pairs, exp.seed ^ 0x7)?;
    if exp.lipschitz.is_some() {
        lip.declared = exp.lipschitz;
    }
    if let Some(l) = lip.declared {
        if lip.measured > l * (1.0 + 1e-6) {
            return Err(Error::Refused(format!("declared Lipschitz bound {l} is exceeded: measured ratio {}", lip.measured)));
        }
    }
    let sh = shared_setup(exp)?;
    let lhs = lhs_with(exp, &sh)?;
    let rhs = rhs_with(exp, &sh)?;
    let gap = (lhs.value - rhs.value).abs() / rhs.value.max(GAP_FLOOR);
    let gap = if lhs.value == 0.0 && rhs.value == 0.0 { 0.0 } else { gap };
    let mut notes = Vec::new();
    let flagged = |m: &MeasureEstimate| m.has_flag(EstimateFlag::Unstable);
    if flagged(&lhs.domain_measure) {
        notes.push("domain measure unstable across scales".into());
    }
    if flagged(&rhs.image_measure) {
        notes.push("image measure unstable across scales".into());
    }
    if lhs.inconclusive {
        notes.push(format!("{} of {} points failed metric differentiation", lhs.failed_points, lhs.points));
    }
    let verdict = if !notes.is_empty() {
        Verdict::Inconclusive
    } else if gap <= exp.tolerance {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(AreaReport {
        source: exp.source().name.clone(),
        target: exp.target().name.clone(),
        map: exp.map.describe(),
        lhs,
        rhs,
        gap,
        tolerance: exp.tolerance,
        verdict,
        lipschitz: lip,
        eps: sh.cover.eps.clone(),
        seed: exp.seed,
        notes,
    })
}

/// A dictionary norm `s(u) = max_i c_i sigma_i |u_i|_i^{1/i}` on the source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DictionaryNorm {
    pub label: String,
    pub factors: Vec<f64>,
    #[serde(skip)]
    pub layers: Vec<LayerNorm>,
}

impl DictionaryNorm {
    pub fn eval(&self, bundle: &GroupBundle, u: &[f64]) -> f64 {
        let g = bundle.gradation();
        let sig = bundle.norm.sigmas();
        (1..=g.step())
            .map(|i| self.factors[i - 1] * sig[i - 1] * self.layers[i - 1].eval(&u[g.layer_range(i)]).powf(1.0 / i as f64))
            .fold(0.0, f64::max)
    }
}

/// Factors in `{1/2, 1, 2}` per layer crossed with Euclidean/sup layer norms,
/// catalog layer norms first; the first `limit` entries.
pub fn default_dictionary(bundle: &GroupBundle, limit: usize) -> Vec<DictionaryNorm> {
    let step = bundle.gradation().step();
    let base = bundle.norm.layers().to_vec();
    let mut layer_sets = vec![base.clone()];
    for mask in 0..(1usize << step) {
        let ls: Vec<LayerNorm> = (0..step).map(|i| if mask >> i & 1 == 1 { LayerNorm::Sup } else { LayerNorm::Euclidean }).collect();
        if !layer_sets.contains(&ls) {
            layer_sets.push(ls);
        }
    }
    let choices = [1.0, 0.5, 2.0];
    let mut out = Vec::new();
    for ls in &layer_sets {
        for code in 0..3usize.pow(step as u32) {
            let mut c = code;
            let factors: Vec<f64> = (0..step)
                .map(|_| {
                    let f = choices[c % 3];
                    c /= 3;
                    f
                })
                .collect();
            let names: Vec<String> = ls.iter().map(|l| l.label()).collect();
            out.push(DictionaryNorm { label: format!("{:?} [{}]", factors, names.join(",")), factors, layers: ls.clone() });
            if out.len() == limit {
                return out;
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub dictionary_index: usize,
    pub label: String,
    /// Probe radius `e^{-n}`.
    pub n: u32,
    pub count: usize,
    pub pairs_checked: usize,
    /// `max |rho(f(x), f(y)) / s(x^{-1} y) - 1|` over checked pairs.
    pub max_pair_violation: f64,
    pub pairs_within_eps: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub eps: f64,
    pub classes: Vec<ClassReport>,
    pub assignment: Vec<Option<usize>>,
    pub unassigned_degenerate: usize,
    pub unassigned_miss: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecomposeOptions {
    pub max_n: u32,
    pub probe_pairs: usize,
    pub check_pairs: usize,
    pub seed: u64,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        DecomposeOptions { max_n: 6, probe_pairs: 8, check_pairs: 100, seed: 0 }
    }
}

/// Assign each sample `x` to the first dictionary norm `s_i` (and smallest
/// `n`) with `|rho(f(xu), f(x)) - s_i(u)| <= eps s_i(u)` on probes
/// `||u|| < e^{-n}`, then spot-check the two-sided bound within classes.
pub fn decompose_bilipschitz(
    f: &dyn GroupMap,
    cloud: &[Vec<f64>],
    dictionary: &[DictionaryNorm],
    eps: f64,
    opts: &DecomposeOptions,
) -> Result<DecompositionReport> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Usage(format!("eps must lie in (0, 1), got {eps}")));
    }
    let (s, t) = (f.source(), f.target());
    let mesh = DirectionMesh::haar(s, opts.probe_pairs, opts.seed)?;
    let mut keys: Vec<(usize, u32)> = Vec::new();
    let mut assignment = Vec::with_capacity(cloud.len());
    let (mut degenerate, mut miss) = (0, 0);
    for x in cloud {
        let fx = f.eval(x);
        let mut found = None;
        'scan: for n in 1..=opts.max_n {
            let radius = 0.9 * (-(n as f64)).exp();
            let probes: Vec<(Vec<f64>, f64)> = mesh
                .directions
                .iter()
                .map(|v| {
                    let u = s.dilate(radius, v);
                    let val = t.dist(&fx, &f.eval(&s.mul(x, &u)));
                    (u, val)
                })
                .collect();
            if probes.iter().all(|(_, v)| *v <= 1e-9 * radius) {
                break 'scan;
            }
            for (i, dn) in dictionary.iter().enumerate() {
                if probes.iter().all(|(u, v)| {
                    let su = dn.eval(s, u);
                    (v - su).abs() <= eps * su
                }) {
                    found = Some((i, n));
                    break 'scan;
                }
            }
        }
        match found {
            Some(key) => {
                let idx = keys.iter().position(|k| *k == key).unwrap_or_else(|| {
                    keys.push(key);
                    keys.len() - 1
                });
                assignment.push(Some(idx));
            }
            None => {
                let probe = s.dilate(0.9 * (-1.0f64).exp(), &mesh.directions[0]);
                let moved = t.dist(&fx, &f.eval(&s.mul(x, &probe)));
                if moved <= 1e-9 {
                    degenerate += 1;
                } else {
                    miss += 1;
                }
                assignment.push(None);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xb1e9);
    let classes = keys
        .iter()
        .enumerate()
        .map(|(c, &(i, n))| {
            let members: Vec<usize> = (0..cloud.len()).filter(|&k| assignment[k] == Some(c)).collect();
            let mut worst = 0.0f64;
            let mut checked = 0;
            if members.len() >= 2 {
                for _ in 0..opts.check_pairs {
                    let (a, b) = (members[rng.random_range(0..members.len())], members[rng.random_range(0..members.len())]);
                    if a == b {
                        continue;
                    }
                    let su = dictionary[i].eval(s, &s.left_quotient(&cloud[a], &cloud[b]));
                    if su > 0.0 {
                        worst = worst.max((t.dist(&f.eval(&cloud[a]), &f.eval(&cloud[b])) / su - 1.0).abs());
                        checked += 1;
                    }
                }
            }
            ClassReport {
                dictionary_index: i,
                label: dictionary[i].label.clone(),
                n,
                count: members.len(),
                pairs_checked: checked,
                max_pair_violation: worst,
                pairs_within_eps: worst <= eps,
            }
        })
        .collect();
    Ok(DecompositionReport { eps, classes, assignment, unassigned_degenerate: degenerate, unassigned_miss: miss })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NegligibilityBudget {
    pub points: usize,
    pub mesh_pairs: usize,
    pub schedule: DyadicSchedule,
    /// Decreasing covering scales.
    pub eps: Vec<f64>,
    pub seed: u64,
}

impl Default for NegligibilityBudget {
    fn default() -> Self {
        NegligibilityBudget {
            points: 60_000,
            mesh_pairs: 8,
            schedule: DyadicSchedule { t0: 0.25, depth: 8 },
            eps: vec![0.16, 0.08, 0.04, 0.02, 0.01],
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NegligibilityReport {
    pub points: usize,
    pub degenerate_points: usize,
    pub levels: Vec<ScaleLevel>,
    /// `value(eps_{k+1}) / value(eps_k)`.
    pub ratios: Vec<f64>,
    pub passes: bool,
}

/// `H^Q_rho` of the image of the degenerate sample points across shrinking
/// scales; passes when every halving at least halves the estimate.
pub fn negligibility_experiment(f: &dyn GroupMap, domain: &Domain, budget: &NegligibilityBudget) -> Result<NegligibilityReport> {
    let (s, t) = (f.source(), f.target());
    let q = s.homogeneous_dim();
    let xs = domain.sample(s, budget.points, budget.seed)?;
    let mesh = DirectionMesh::haar(s, budget.mesh_pairs, budget.seed ^ 0x3)?;
    let mut e0 = Vec::new();
    for x in &xs {
        let md = estimate_metric_differential(f, x, &mesh, &budget.schedule, 0, 0)?;
        if is_degenerate(&md.sample) {
            e0.push(f.eval(x));
        }
    }
    let degenerate_points = e0.len();
    if e0.is_empty() || e0.iter().all(|y| y == &e0[0]) {
        let levels = budget
            .eps
            .iter()
            .map(|&eps| ScaleLevel { eps, value: 0.0, greedy: None, mean_neighbours: 0.0, isolated_fraction: 0.0 })
            .collect();
        return Ok(NegligibilityReport { points: xs.len(), degenerate_points, levels, ratios: vec![0.0; budget.eps.len().saturating_sub(1)], passes: true });
    }
    let cloud = PointCloud::all(e0);
    let cover = CoverOptions { eps: budget.eps.clone(), greedy: false, density_check: false, ..Default::default() };
    let est = hausdorff_upper_estimate(&cloud, t, q, &cover)?;
    let ratios: Vec<f64> = est.levels.windows(2).map(|w| if w[0].value > 0.0 { w[1].value / w[0].value } else { 0.0 }).collect();
    let passes = ratios.iter().all(|r| *r < 0.5);
    Ok(NegligibilityReport { points: xs.len(), degenerate_points, levels: est.levels, ratios, passes })
}

/// `|a - b| / max(|a|, |b|)`, re-exported for report consumers.
pub fn gap(a: f64, b: f64) -> f64 {
    relative_gap(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{abelian, heisenberg};
    use crate::differentiation::HHomomorphism;
    use crate::maps::{ConstantMap, FoldMap, LayerProjection, PiecewiseHom};

    fn quick() -> AreaBudget {
        AreaBudget { points: 40, cloud: 30_000, mesh_pairs: 400, ..Default::default() }
    }

    #[test]
    fn identity_on_disk() {
        let r2 = abelian(2, LayerNorm::Euclidean).unwrap();
        let mut exp = AreaExperiment::new(Domain::unit_ball(2), Arc::new(HHomomorphism::identity(&r2)));
        exp.budget = quick();
        let rep = run_area_experiment(&exp).unwrap();
        assert_eq!(rep.verdict, Verdict::Pass, "{rep:?}");
        assert!(rep.gap < 1e-12);
        assert!((rep.lhs.value - std::f64::consts::PI).abs() < 0.05);
    }

    #[test]
    fn constant_map_is_zero_on_both_sides() {
        let h = heisenberg();
        let c = ConstantMap { source: h.clone(), target: h.clone(), value: vec![1.0, 0.0, 0.0] };
        let mut exp = AreaExperiment::new(Domain::unit_ball(3), Arc::new(c));
        exp.budget = quick();
        let rep = run_area_experiment(&exp).unwrap();
        assert_eq!((rep.lhs.value, rep.rhs.value), (0.0, 0.0));
        assert_eq!(rep.verdict, Verdict::Pass);
    }

    #[test]
    fn fold_needs_multiplicity() {
        let r2 = abelian(2, LayerNorm::Euclidean).unwrap();
        let dom = Domain::Box { lo: vec![-1.0, 0.0], hi: vec![1.0, 1.0] };
        let mut exp = AreaExperiment::new(dom, Arc::new(FoldMap { bundle: r2 }));
        exp.budget = quick();
        exp.multiplicity = Multiplicity::Estimated;
        assert!(matches!(run_area_experiment(&exp), Err(Error::Refused(_))));
        exp.multiplicity = Multiplicity::Constant { n: 2 };
        let rep = run_area_experiment(&exp).unwrap();
        assert!(rep.gap < 0.05, "{rep:?}");
    }

    #[test]
    fn lipschitz_bound_is_enforced() {
        let r2 = abelian(2, LayerNorm::Euclidean).unwrap();
        let mut exp = AreaExperiment::new(Domain::unit_ball(2), Arc::new(HHomomorphism::dilation(&r2, 2.0)));
        exp.budget = quick();
        exp.lipschitz = Some(1.5);
        assert!(matches!(run_area_experiment(&exp), Err(Error::Refused(_))));
    }

    #[test]
    fn decomposition_classes() {
        let h = heisenberg();
        let dict = default_dictionary(&h, 32);
        assert_eq!(dict.len(), 32);
        let cloud = Domain::unit_ball(3).sample(&h, 200, 4).unwrap();
        let id = HHomomorphism::identity(&h);
        let rep = decompose_bilipschitz(&id, &cloud, &dict, 0.05, &DecomposeOptions::default()).unwrap();
        assert_eq!(rep.classes.len(), 1);
        assert_eq!(rep.unassigned_degenerate + rep.unassigned_miss, 0);

        let pw = PiecewiseHom { a: HHomomorphism::dilation(&h, 2.0), b: id.clone(), coord: 0, threshold: 0.0 };
        let away: Vec<Vec<f64>> = cloud.into_iter().filter(|x| x[0].abs() > 0.3).collect();
        let rep = decompose_bilipschitz(&pw, &away, &dict, 0.05, &DecomposeOptions::default()).unwrap();
        assert!(rep.classes.iter().all(|c| c.pairs_within_eps));
        let mut used: Vec<&[f64]> = rep.classes.iter().map(|c| &dict[c.dictionary_index].factors[..]).collect();
        used.dedup();
        used.sort_by(|a, b| a.partial_cmp(b).unwrap());
        used.dedup();
        assert_eq!(used, vec![&[1.0, 1.0][..], &[2.0, 2.0][..]], "{:?}", rep.classes);

        let c = ConstantMap { source: h.clone(), target: h.clone(), value: vec![0.0; 3] };
        let rep = decompose_bilipschitz(&c, &away, &dict, 0.05, &DecomposeOptions::default()).unwrap();
        assert_eq!(rep.unassigned_degenerate, away.len());
    }

    #[test]
    fn projection_image_is_negligible() {
        let h = heisenberg();
        let p = LayerProjection::new(h.clone(), abelian(2, LayerNorm::Euclidean).unwrap()).unwrap();
        let budget = NegligibilityBudget { points: 20_000, eps: vec![0.16, 0.08, 0.04], ..Default::default() };
        let rep = negligibility_experiment(&p, &Domain::unit_ball(3), &budget).unwrap();
        assert_eq!(rep.degenerate_points, rep.points);
        assert!(rep.passes, "{:?}", rep.ratios);
        let id = HHomomorphism::identity(&h);
        let rep = negligibility_experiment(&id, &Domain::unit_ball(3), &NegligibilityBudget { points: 200, ..Default::default() }).unwrap();
        assert_eq!(rep.degenerate_points, 0);
        assert!(rep.passes);
    }
}
