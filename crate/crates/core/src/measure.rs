//! Volume and Hausdorff-measure estimators, and the Jacobians built on them.
//!
//! The covering estimator works on a point cloud sampled Haar-uniformly on
//! a guard-banded superset of the set `A`: probes are the cloud points in
//! `A`, and each probe counts its neighbours `k(p)` within radius `r = eps/2`
//! in the whole cloud. `sum_p 1/k(p)` is a fractional cover of `A` by
//! `r`-balls, so `omega_Q r^Q sum_p 1/k(p)` estimates the measure with the
//! ball-volume normalization (Lebesgue measure in the Euclidean case). A
//! greedy cover in sample order is reported alongside as a diagnostic.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::differentiation::{is_degenerate, HHomomorphism, NULL_LEVEL};
use crate::error::{Error, Result};
use crate::norm::{sample_ball, sphere_nodes, DirectionMesh, GroupBundle, HomogeneousNorm, MeshKind, SeminormSample};

/// Volume of the Euclidean unit ball of `R^n`.
pub fn unit_ball_volume(n: usize) -> f64 {
    match n {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * std::f64::consts::PI / n as f64 * unit_ball_volume(n - 2),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasureMethod {
    CoveringUpper,
    GridVolume,
    MonteCarloVolume,
    CoveringRatio,
    Polar,
    Kirchheim,
    Pushforward,
    Determinant,
    /// Exact value from the seminorm branch (`J = 0`) or an identity.
    Exact,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateFlag {
    /// Two scale levels disagree by more than the instability threshold.
    Unstable,
    /// The seminorm has null directions at sample resolution.
    Degenerate,
    /// Covering values are not monotone in `eps`.
    NonMonotone,
}

/// Per-scale diagnostics of a covering estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleLevel {
    pub eps: f64,
    pub value: f64,
    /// `omega_Q r^Q` times the size of a greedy cover of the probes.
    pub greedy: Option<f64>,
    pub mean_neighbours: f64,
    /// Share of probes without another cloud point within `eps/2`.
    pub isolated_fraction: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeasureParams {
    pub eps: Vec<f64>,
    pub pitch: Option<f64>,
    pub samples: usize,
    pub probes: usize,
    pub seed: u64,
    pub homogeneous_dim: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureEstimate {
    pub value: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub method: MeasureMethod,
    pub params: MeasureParams,
    pub levels: Vec<ScaleLevel>,
    pub flags: Vec<EstimateFlag>,
    /// Independent value for comparison (Kirchheim on abelian groups).
    pub cross_check: Option<f64>,
}

impl MeasureEstimate {
    pub fn exact(value: f64, method: MeasureMethod) -> Self {
        MeasureEstimate {
            value,
            lower: Some(value),
            upper: Some(value),
            method,
            params: MeasureParams::default(),
            levels: Vec::new(),
            flags: Vec::new(),
            cross_check: None,
        }
    }

    pub fn has_flag(&self, f: EstimateFlag) -> bool {
        self.flags.contains(&f)
    }
}

/// Sampling domain: a metric ball or a coordinate box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl Domain {
    pub fn unit_ball(dim: usize) -> Self {
        Domain::Ball { center: vec![0.0; dim], radius: 1.0 }
    }

    pub fn contains(&self, bundle: &GroupBundle, x: &[f64]) -> bool {
        match self {
            Domain::Ball { center, radius } => bundle.dist(center, x) <= *radius,
            Domain::Box { lo, hi } => x.iter().zip(lo.iter().zip(hi)).all(|(v, (a, b))| *a <= *v && *v <= *b),
        }
    }

    /// A superset containing the `g`-neighbourhood of the domain.
    pub fn inflate(&self, bundle: &GroupBundle, g: f64) -> Domain {
        if g <= 0.0 {
            return self.clone();
        }
        match self {
            Domain::Ball { center, radius } => Domain::Ball { center: center.clone(), radius: radius + g },
            Domain::Box { lo, hi } => {
                let corner: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| a.abs().max(b.abs())).collect();
                let w = bundle.group.translation_box(&corner, &bundle.norm.coord_box(g));
                Domain::Box {
                    lo: lo.iter().zip(&w).map(|(a, w)| a - w).collect(),
                    hi: hi.iter().zip(&w).map(|(b, w)| b + w).collect(),
                }
            }
        }
    }

    pub fn check(&self, bundle: &GroupBundle) -> Result<()> {
        let g = bundle.gradation();
        match self {
            Domain::Ball { center, radius } => {
                g.check_len(center.len())?;
                if !(*radius > 0.0) {
                    return Err(Error::Usage(format!("ball radius must be positive, got {radius}")));
                }
            }
            Domain::Box { lo, hi } => {
                g.check_len(lo.len())?;
                g.check_len(hi.len())?;
                if lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
                    return Err(Error::Usage("box needs lo < hi in every coordinate".into()));
                }
            }
        }
        Ok(())
    }

    /// Haar-uniform points.
    pub fn sample(&self, bundle: &GroupBundle, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        self.check(bundle)?;
        match self {
            Domain::Ball { center, radius } => Ok(sample_ball(bundle, center, *radius, count, seed)?.points),
            Domain::Box { lo, hi } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                Ok((0..count).map(|_| lo.iter().zip(hi).map(|(a, b)| rng.random_range(*a..*b)).collect()).collect())
            }
        }
    }

    /// Lebesgue (Haar) volume: exact for boxes, `r^Q vol(B_1)` for balls.
    pub fn lebesgue_volume(&self, bundle: &GroupBundle, unit_ball: f64) -> f64 {
        match self {
            Domain::Ball { radius, .. } => radius.powi(bundle.homogeneous_dim() as i32) * unit_ball,
            Domain::Box { lo, hi } => lo.iter().zip(hi).map(|(a, b)| b - a).product(),
        }
    }
}

/// Sample points together with the indices that belong to the measured set.
#[derive(Clone, Debug)]
pub struct PointCloud {
    pub points: Vec<Vec<f64>>,
    pub probes: Vec<usize>,
}

impl PointCloud {
    /// Every point is a probe (no guard band).
    pub fn all(points: Vec<Vec<f64>>) -> Self {
        let probes = (0..points.len()).collect();
        PointCloud { points, probes }
    }

    /// `count` points on `domain` inflated by `guard`; probes are those in
    /// `domain`.
    pub fn guarded(bundle: &GroupBundle, domain: &Domain, guard: f64, count: usize, seed: u64) -> Result<Self> {
        let points = domain.inflate(bundle, guard).sample(bundle, count, seed)?;
        let probes = (0..points.len()).filter(|&i| domain.contains(bundle, &points[i])).collect();
        Ok(PointCloud { points, probes })
    }

    pub fn map(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> PointCloud {
        PointCloud { points: self.points.iter().map(|p| f(p)).collect(), probes: self.probes.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverOptions {
    /// Scales `eps`, coarse to fine; balls have radius `eps/2`.
    pub eps: Vec<f64>,
    /// At most this many probes are evaluated (evenly strided).
    pub probe_limit: usize,
    /// Report `2 v(eps_fine) - v(eps_coarse)` instead of the finest value
    /// (for clouds without a guard band).
    pub extrapolate: bool,
    pub greedy: bool,
    /// Refuse when more than 5% of probes are isolated at `eps/2`.
    pub density_check: bool,
    /// Relative disagreement between the two finest levels that flags the
    /// estimate unstable.
    pub instability: f64,
}

impl Default for CoverOptions {
    fn default() -> Self {
        CoverOptions { eps: vec![0.2, 0.1], probe_limit: 5_000, extrapolate: false, greedy: true, density_check: true, instability: 0.1 }
    }
}

/// Uniform grid over coordinates; cells sized to the search box of a
/// typical point.
struct GridIndex {
    cell: Vec<f64>,
    map: HashMap<Vec<i64>, Vec<u32>>,
}

impl GridIndex {
    fn new(points: &[Vec<f64>], cell: Vec<f64>) -> Self {
        let mut map: HashMap<Vec<i64>, Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            map.entry(Self::key(&cell, p)).or_default().push(i as u32);
        }
        GridIndex { cell, map }
    }

    fn key(cell: &[f64], p: &[f64]) -> Vec<i64> {
        p.iter().zip(cell).map(|(v, h)| (v / h).floor() as i64).collect()
    }

    fn insert(&mut self, p: &[f64], i: u32) {
        self.map.entry(Self::key(&self.cell, p)).or_default().push(i);
    }

    /// Visit every indexed point in cells meeting `[p - w, p + w]`.
    fn for_each(&self, p: &[f64], w: &[f64], mut visit: impl FnMut(u32) -> bool) {
        let n = p.len();
        let lo: Vec<i64> = (0..n).map(|k| ((p[k] - w[k]) / self.cell[k]).floor() as i64).collect();
        let hi: Vec<i64> = (0..n).map(|k| ((p[k] + w[k]) / self.cell[k]).floor() as i64).collect();
        let mut cur = lo.clone();
        loop {
            if let Some(ids) = self.map.get(&cur) {
                for &i in ids {
                    if !visit(i) {
                        return;
                    }
                }
            }
            let mut k = 0;
            loop {
                if k == n {
                    return;
                }
                if cur[k] < hi[k] {
                    cur[k] += 1;
                    break;
                }
                cur[k] = lo[k];
                k += 1;
            }
        }
    }
}

fn rms_point(points: &[Vec<f64>]) -> Vec<f64> {
    let n = points.first().map_or(0, |p| p.len());
    let m = points.len().max(1) as f64;
    (0..n).map(|k| (points.iter().map(|p| p[k] * p[k]).sum::<f64>() / m).sqrt()).collect()
}

struct Neighbourhood {
    count: u32,
    has_close: bool,
}

fn neighbourhoods(cloud: &PointCloud, probes: &[usize], metric: &GroupBundle, r: f64) -> Vec<Neighbourhood> {
    let zb = metric.norm.coord_box(r);
    let cell: Vec<f64> = metric
        .group
        .translation_box(&rms_point(&cloud.points), &zb)
        .into_iter()
        .map(|w| (w / 2.0).max(1e-12))
        .collect();
    let index = GridIndex::new(&cloud.points, cell);
    let work = |chunk: &[usize]| -> Vec<Neighbourhood> {
        let mut buf = vec![0.0; metric.dim()];
        chunk
            .iter()
            .map(|&pi| {
                let p = &cloud.points[pi];
                let neg: Vec<f64> = p.iter().map(|v| -v).collect();
                let w = metric.group.translation_box(p, &zb);
                let mut count = 0u32;
                let mut has_close = false;
                index.for_each(p, &w, |qi| {
                    metric.group.mul_f64_into(&neg, &cloud.points[qi as usize], &mut buf);
                    let d = metric.norm.norm(&buf);
                    if d <= r {
                        count += 1;
                        if qi as usize != pi && d <= r {
                            has_close = true;
                        }
                    }
                    true
                });
                Neighbourhood { count: count.max(1), has_close }
            })
            .collect()
    };
    parallel_chunks(probes, 512, work)
}

/// Deterministic parallel map over fixed-size chunks; results in input order.
pub(crate) fn parallel_chunks<T: Sync, R: Send>(items: &[T], chunk: usize, work: impl Fn(&[T]) -> Vec<R> + Sync) -> Vec<R> {
    let chunks: Vec<&[T]> = items.chunks(chunk.max(1)).collect();
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(chunks.len().max(1));
    if threads <= 1 {
        return chunks.into_iter().flat_map(&work).collect();
    }
    let mut results: Vec<Option<Vec<R>>> = (0..chunks.len()).map(|_| None).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots = std::sync::Mutex::new(&mut results);
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= chunks.len() {
                    break;
                }
                let out = work(chunks[i]);
                slots.lock().unwrap()[i] = Some(out);
            });
        }
    });
    results.into_iter().flat_map(|r| r.unwrap()).collect()
}

fn greedy_cover(cloud: &PointCloud, probes: &[usize], metric: &GroupBundle, r: f64) -> usize {
    let zb = metric.norm.coord_box(r);
    let cell: Vec<f64> = metric
        .group
        .translation_box(&rms_point(&cloud.points), &zb)
        .into_iter()
        .map(|w| w.max(1e-12))
        .collect();
    let mut centers = GridIndex::new(&[], cell);
    let mut buf = vec![0.0; metric.dim()];
    let mut n = 0;
    for &pi in probes {
        let p = &cloud.points[pi];
        let neg: Vec<f64> = p.iter().map(|v| -v).collect();
        let w = metric.group.translation_box(p, &zb);
        let mut covered = false;
        centers.for_each(p, &w, |ci| {
            metric.group.mul_f64_into(&neg, &cloud.points[ci as usize], &mut buf);
            covered = metric.norm.norm(&buf) <= r;
            !covered
        });
        if !covered {
            centers.insert(p, pi as u32);
            n += 1;
        }
    }
    n
}

/// Covering estimate of `H^Q` of the probe set of `cloud` in the metric of
/// `metric`.
pub fn hausdorff_upper_estimate(cloud: &PointCloud, metric: &GroupBundle, q: usize, opts: &CoverOptions) -> Result<MeasureEstimate> {
    if opts.eps.is_empty() || opts.eps.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::Usage("covering needs positive eps values".into()));
    }
    let total_probes = cloud.probes.len();
    let stride = total_probes.div_ceil(opts.probe_limit.max(1)).max(1);
    let probes: Vec<usize> = cloud.probes.iter().step_by(stride).copied().collect();
    let scale = if probes.is_empty() { 0.0 } else { total_probes as f64 / probes.len() as f64 };
    let omega = unit_ball_volume(q);
    let mut levels = Vec::with_capacity(opts.eps.len());
    for &eps in &opts.eps {
        let r = eps / 2.0;
        let nb = neighbourhoods(cloud, &probes, metric, r);
        let frac: f64 = nb.iter().map(|n| 1.0 / n.count as f64).sum::<f64>() * scale;
        let isolated = nb.iter().filter(|n| !n.has_close).count();
        let isolated_fraction = if nb.is_empty() { 0.0 } else { isolated as f64 / nb.len() as f64 };
        let mean_neighbours = if nb.is_empty() { 0.0 } else { nb.iter().map(|n| n.count as f64).sum::<f64>() / nb.len() as f64 };
        let greedy = opts.greedy.then(|| omega * r.powi(q as i32) * greedy_cover(cloud, &probes, metric, r) as f64);
        levels.push(ScaleLevel { eps, value: omega * r.powi(q as i32) * frac, greedy, mean_neighbours, isolated_fraction });
    }
    let finest = levels.iter().min_by(|a, b| a.eps.total_cmp(&b.eps)).unwrap();
    if opts.density_check && finest.isolated_fraction > 0.05 {
        return Err(Error::InsufficientDensity(format!(
            "{:.1}% of probes have no neighbour within eps/2 = {}",
            100.0 * finest.isolated_fraction,
            finest.eps / 2.0
        )));
    }
    let mut by_eps = levels.clone();
    by_eps.sort_by(|a, b| b.eps.total_cmp(&a.eps));
    let mut flags = Vec::new();
    if by_eps.windows(2).any(|w| w[1].value < w[0].value) {
        flags.push(EstimateFlag::NonMonotone);
    }
    let value = match by_eps.len() {
        1 => by_eps[0].value,
        n => {
            let (c, f) = (by_eps[n - 2].value, by_eps[n - 1].value);
            if relative_gap(c, f) > opts.instability {
                flags.push(EstimateFlag::Unstable);
            }
            if opts.extrapolate {
                (2.0 * f - c).max(0.0)
            } else {
                f
            }
        }
    };
    Ok(MeasureEstimate {
        value,
        lower: None,
        upper: None,
        method: MeasureMethod::CoveringUpper,
        params: MeasureParams { eps: opts.eps.clone(), pitch: None, samples: cloud.points.len(), probes: probes.len(), seed: 0, homogeneous_dim: q },
        levels,
        flags,
        cross_check: None,
    })
}

pub fn relative_gap(a: f64, b: f64) -> f64 {
    let m = a.abs().max(b.abs());
    if m == 0.0 {
        0.0
    } else {
        (a - b).abs() / m
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VolumeMethod {
    Grid { pitch: f64 },
    MonteCarlo { samples: usize, seed: u64 },
}

/// Largest number of grid cells `lebesgue_ball_volume` will visit.
pub const GRID_CELL_CAP: f64 = 5e7;

/// Lebesgue volume of `{||x|| <= radius}` in the bounding coordinate box.
///
/// The grid method counts cells by their centre; `lower`/`upper` count cells
/// with all / some corners inside.
pub fn lebesgue_ball_volume(bundle: &GroupBundle, radius: f64, method: VolumeMethod) -> Result<MeasureEstimate> {
    if !(radius > 0.0) {
        return Err(Error::Usage(format!("radius must be positive, got {radius}")));
    }
    let half = bundle.norm.coord_box(radius);
    let n = half.len();
    let q = bundle.homogeneous_dim();
    match method {
        VolumeMethod::Grid { pitch } => {
            if !(pitch > 0.0) {
                return Err(Error::Usage("grid pitch must be positive".into()));
            }
            let counts: Vec<usize> = half.iter().map(|h| ((2.0 * h / pitch).ceil() as usize).max(1)).collect();
            let cells: f64 = counts.iter().map(|c| *c as f64).product();
            if cells > GRID_CELL_CAP {
                return Err(Error::Budget(format!("grid needs {cells:.3e} cells, cap is {GRID_CELL_CAP:.0e}")));
            }
            if counts.iter().any(|c| *c < 4) {
                return Err(Error::Budget(format!("pitch {pitch} leaves fewer than 4 cells along some axis")));
            }
            let steps: Vec<f64> = half.iter().zip(&counts).map(|(h, c)| 2.0 * h / *c as f64).collect();
            let cell_vol: f64 = steps.iter().product();
            // Vertex flags, row-major with the last coordinate fastest.
            let vdims: Vec<usize> = counts.iter().map(|c| c + 1).collect();
            let nv: usize = vdims.iter().product();
            let coords = |mut idx: usize, dims: &[usize], offset: f64| -> Vec<f64> {
                let mut x = vec![0.0; n];
                for k in (0..n).rev() {
                    let i = idx % dims[k];
                    idx /= dims[k];
                    x[k] = -half[k] + (i as f64 + offset) * steps[k];
                }
                x
            };
            let vidx: Vec<usize> = (0..nv).collect();
            let inside: Vec<bool> = parallel_chunks(&vidx, 4096, |c| c.iter().map(|&i| bundle.norm(&coords(i, &vdims, 0.0)) <= radius).collect());
            let ncell: usize = counts.iter().product();
            let cidx: Vec<usize> = (0..ncell).collect();
            let corner_offsets: Vec<usize> = (0..1usize << n)
                .map(|mask| {
                    let mut off = 0;
                    for k in 0..n {
                        off = off * vdims[k] + ((mask >> (n - 1 - k)) & 1);
                    }
                    off
                })
                .collect();
            let tallies: Vec<(u8, u8, u8)> = parallel_chunks(&cidx, 4096, |c| {
                c.iter()
                    .map(|&ci| {
                        let mut rem = ci;
                        let mut base = 0;
                        let mut stride = 1;
                        for k in (0..n).rev() {
                            let i = rem % counts[k];
                            rem /= counts[k];
                            base += i * stride;
                            stride *= vdims[k];
                        }
                        let ins = corner_offsets.iter().filter(|&&o| inside[base + o]).count();
                        let centre = bundle.norm(&coords(ci, &counts, 0.5)) <= radius;
                        (u8::from(centre), u8::from(ins == corner_offsets.len()), u8::from(ins > 0))
                    })
                    .collect()
            });
            let (mut c, mut lo, mut hi) = (0usize, 0usize, 0usize);
            for (a, b, d) in tallies {
                c += a as usize;
                lo += b as usize;
                hi += d as usize;
            }
            let value = c as f64 * cell_vol;
            Ok(MeasureEstimate {
                value,
                lower: Some((lo as f64 * cell_vol).min(value)),
                upper: Some((hi as f64 * cell_vol).max(value)),
                method: MeasureMethod::GridVolume,
                params: MeasureParams { pitch: Some(pitch), samples: ncell, homogeneous_dim: q, ..Default::default() },
                levels: Vec::new(),
                flags: Vec::new(),
                cross_check: None,
            })
        }
        VolumeMethod::MonteCarlo { samples, seed } => {
            if samples < 100 {
                return Err(Error::Budget(format!("{samples} Monte Carlo samples; need at least 100")));
            }
            let box_volume: f64 = half.iter().map(|h| 2.0 * h).product();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let hits = (0..samples)
                .filter(|_| {
                    let z: Vec<f64> = half.iter().map(|h| rng.random_range(-1.0..=1.0) * h).collect();
                    bundle.norm(&z) <= radius
                })
                .count();
            let p = hits as f64 / samples as f64;
            let sd = (p * (1.0 - p) / samples as f64).sqrt() * box_volume;
            let value = p * box_volume;
            Ok(MeasureEstimate {
                value,
                lower: Some((value - 3.0 * sd).max(0.0)),
                upper: Some(value + 3.0 * sd),
                method: MeasureMethod::MonteCarloVolume,
                params: MeasureParams { samples, seed, homogeneous_dim: q, ..Default::default() },
                levels: Vec::new(),
                flags: Vec::new(),
                cross_check: None,
            })
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KirchheimResult {
    pub value: f64,
    pub degenerate: bool,
    pub resolution: usize,
    pub nodes: usize,
    /// Relative change at the last refinement.
    pub relative_change: f64,
}

/// Smallest value of `s` on the sphere found by local descent from the
/// best quadrature node.
fn sphere_minimum(nodes: &[(Vec<f64>, f64)], vals: &[f64], s: &dyn Fn(&[f64]) -> f64) -> f64 {
    let k = vals.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).map_or(0, |(k, _)| k);
    let mut u = nodes[k].0.clone();
    let mut best = vals[k];
    let mut step = 0.5;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..800 {
        let mut w: Vec<f64> = u.iter().map(|c| c + step * rng.random_range(-1.0..1.0)).collect();
        let nw = w.iter().map(|c| c * c).sum::<f64>().sqrt();
        w.iter_mut().for_each(|c| *c /= nw);
        let v = s(&w);
        if v < best {
            (u, best) = (w, v);
        } else {
            step *= 0.97;
        }
    }
    best
}

fn kirchheim_at(n: usize, res: usize, s: &dyn Fn(&[f64]) -> f64) -> Result<(f64, bool, usize)> {
    let nodes = sphere_nodes(n, res)?;
    let vals: Vec<f64> = nodes.iter().map(|(u, _)| s(u)).collect();
    let hi = vals.iter().fold(0.0f64, |m, v| m.max(*v));
    if hi == 0.0 || sphere_minimum(&nodes, &vals, s) < NULL_LEVEL * hi {
        return Ok((0.0, true, nodes.len()));
    }
    let integral: f64 = nodes.iter().zip(&vals).map(|((_, w), v)| w * v.powi(-(n as i32))).sum();
    Ok((n as f64 * unit_ball_volume(n) / integral, false, nodes.len()))
}

/// `n omega_n / int_{S^{n-1}} s^{-n}` by sphere quadrature, refined by
/// doubling until the relative change drops below `1e-6` (or the node cap).
pub fn kirchheim_jacobian(n: usize, s: &dyn Fn(&[f64]) -> f64) -> Result<KirchheimResult> {
    if !(1..=3).contains(&n) {
        return Err(Error::Usage(format!("Kirchheim quadrature supports n <= 3, got {n}")));
    }
    let cap = if n == 3 { 512 } else { 1 << 16 };
    let mut res = 16;
    let (mut prev, degenerate, mut nodes) = kirchheim_at(n, res, s)?;
    if degenerate || n == 1 {
        return Ok(KirchheimResult { value: prev, degenerate, resolution: res, nodes, relative_change: 0.0 });
    }
    let mut change = f64::INFINITY;
    while res < cap {
        res *= 2;
        let (v, deg, nn) = kirchheim_at(n, res, s)?;
        nodes = nn;
        if deg {
            return Ok(KirchheimResult { value: 0.0, degenerate: true, resolution: res, nodes, relative_change: 0.0 });
        }
        change = relative_gap(v, prev);
        prev = v;
        if change < 1e-6 {
            break;
        }
    }
    Ok(KirchheimResult { value: prev, degenerate: false, resolution: res, nodes, relative_change: change })
}

/// Kirchheim's Jacobian from a sample on a sphere-quadrature mesh.
pub fn kirchheim_from_sample(s: &SeminormSample) -> Result<KirchheimResult> {
    if s.mesh.kind != MeshKind::SphereQuadrature {
        return Err(Error::Usage("Kirchheim's integral needs a sphere-quadrature mesh".into()));
    }
    let n = s.mesh.homogeneous_dim;
    if is_degenerate(s) {
        return Ok(KirchheimResult { value: 0.0, degenerate: true, resolution: 0, nodes: s.values.len(), relative_change: 0.0 });
    }
    // Mesh weights carry |u|^{-n} for the mesh norm; s(u) = |u| s(v).
    let mut integral = 0.0;
    for ((v, w), sv) in s.mesh.directions.iter().zip(&s.mesh.weights).zip(&s.values) {
        let _ = v;
        integral += w * sv.powi(-(n as i32));
    }
    Ok(KirchheimResult {
        value: n as f64 * unit_ball_volume(n) / integral,
        degenerate: false,
        resolution: 0,
        nodes: s.values.len(),
        relative_change: 0.0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianMethod {
    /// Covering ratio for homogeneous dimension up to 4, polar otherwise.
    Auto,
    Covering,
    Polar,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JacobianOptions {
    pub method: JacobianMethod,
    pub cloud: usize,
    pub cover: CoverOptions,
    /// Derive the covering scales from the cloud size when set.
    pub auto_eps: bool,
    pub mesh_pairs: usize,
    pub seed: u64,
}

impl Default for JacobianOptions {
    fn default() -> Self {
        JacobianOptions { method: JacobianMethod::Auto, cloud: 60_000, cover: CoverOptions::default(), auto_eps: true, mesh_pairs: 2000, seed: 0 }
    }
}

/// Scales `[2 sqrt(2) r, 2r]` giving about `target` neighbours per probe at
/// radius `r` for `m` points filling the unit ball inflated by the guard
/// band `guard_mult * sqrt(2) r`.
pub fn auto_eps(q: usize, m: usize, guard_mult: f64, target: f64) -> Vec<f64> {
    let a = (target / m.max(1) as f64).powf(1.0 / q as f64);
    let g = std::f64::consts::SQRT_2 * guard_mult;
    let r = if 2.0 * a * g < 1.0 { a / (1.0 - a * g) } else { 2.0 * a };
    vec![2.0 * std::f64::consts::SQRT_2 * r, 2.0 * r]
}

pub enum JacobianInput<'a> {
    Norm(&'a HomogeneousNorm),
    Sample(&'a SeminormSample),
}

/// `sum w d(v)^{-Q} / sum w s(v)^{-Q}`, the volume ratio `vol B^d / vol B^s`;
/// with the split-half disagreement.
fn polar_ratio(values: &[f64], d_values: &[f64], weights: &[f64], q: usize) -> (f64, f64) {
    let mut num = [0.0; 2];
    let mut den = [0.0; 2];
    for (k, ((s, d), w)) in values.iter().zip(d_values).zip(weights).enumerate() {
        let h = (k / 2) % 2;
        num[h] += w * d.powi(-(q as i32));
        den[h] += w * s.powi(-(q as i32));
    }
    let total = (num[0] + num[1]) / (den[0] + den[1]);
    let halves = if den[0] > 0.0 && den[1] > 0.0 { relative_gap(num[0] / den[0], num[1] / den[1]) } else { 0.0 };
    (total, halves)
}

/// Metric Jacobian `J(s) = H^Q_s(B_1) / H^Q_d(B_1)`, with `J = 0` when `s`
/// has null directions.
pub fn metric_jacobian(s: JacobianInput, d: &GroupBundle, opts: &JacobianOptions) -> Result<MeasureEstimate> {
    let q = d.homogeneous_dim();
    match s {
        JacobianInput::Sample(sample) => {
            if is_degenerate(sample) {
                let mut e = MeasureEstimate::exact(0.0, MeasureMethod::Exact);
                e.flags.push(EstimateFlag::Degenerate);
                return Ok(e);
            }
            let d_values: Vec<f64> = match sample.mesh.kind {
                MeshKind::Haar => sample.mesh.directions.iter().map(|v| d.norm(v)).collect(),
                MeshKind::SphereQuadrature => vec![1.0; sample.values.len()],
            };
            let (value, halves) = polar_ratio(&sample.values, &d_values, &sample.mesh.weights, q);
            let mut est = MeasureEstimate::exact(value, MeasureMethod::Polar);
            est.lower = None;
            est.upper = None;
            est.params.samples = sample.values.len();
            est.params.homogeneous_dim = q;
            if sample.mesh.kind == MeshKind::Haar && halves > opts.cover.instability {
                est.flags.push(EstimateFlag::Unstable);
            }
            if sample.mesh.kind == MeshKind::SphereQuadrature {
                est.cross_check = Some(kirchheim_from_sample(sample)?.value);
            }
            Ok(est)
        }
        JacobianInput::Norm(hn) => {
            let sb = d.with_norm(hn.clone())?;
            let mesh = DirectionMesh::haar(d, opts.mesh_pairs, opts.seed)?;
            let sv = SeminormSample::from_fn(mesh.clone(), |v| sb.norm(v));
            if is_degenerate(&sv) {
                let mut e = MeasureEstimate::exact(0.0, MeasureMethod::Exact);
                e.flags.push(EstimateFlag::Degenerate);
                return Ok(e);
            }
            let cross_check = if d.is_abelian() && d.dim() <= 3 {
                let ks = kirchheim_jacobian(d.dim(), &|u| sb.norm(u))?;
                let kd = kirchheim_jacobian(d.dim(), &|u| d.norm(u))?;
                Some(ks.value / kd.value)
            } else {
                None
            };
            let covering = match opts.method {
                JacobianMethod::Covering => true,
                JacobianMethod::Polar => false,
                JacobianMethod::Auto => q <= 4,
            };
            let mut est = if covering {
                let min_s = sv.min_value();
                let mut cover = opts.cover.clone();
                let guard_for = |eps: &[f64]| eps.iter().fold(0.0f64, |m, e| m.max(*e)) / 2.0 * (1.0 / min_s).max(1.0);
                if opts.auto_eps {
                    cover.eps = auto_eps(q, opts.cloud, (1.0 / min_s).max(1.0), 64.0);
                }
                let guard = guard_for(&cover.eps);
                let cloud = PointCloud::guarded(d, &Domain::unit_ball(d.dim()), guard, opts.cloud, opts.seed)?;
                let es = hausdorff_upper_estimate(&cloud, &sb, q, &cover)?;
                let ed = hausdorff_upper_estimate(&cloud, d, q, &cover)?;
                let ratios: Vec<f64> = es.levels.iter().zip(&ed.levels).map(|(a, b)| a.value / b.value).collect();
                let mut flags = Vec::new();
                if ratios.windows(2).any(|w| relative_gap(w[0], w[1]) > cover.instability) {
                    flags.push(EstimateFlag::Unstable);
                }
                let levels = es
                    .levels
                    .iter()
                    .zip(&ratios)
                    .map(|(l, r)| ScaleLevel { value: *r, ..l.clone() })
                    .collect();
                MeasureEstimate {
                    value: es.value / ed.value,
                    lower: None,
                    upper: None,
                    method: MeasureMethod::CoveringRatio,
                    params: MeasureParams { seed: opts.seed, ..es.params.clone() },
                    levels,
                    flags,
                    cross_check: None,
                }
            } else {
                let d_values: Vec<f64> = mesh.directions.iter().map(|v| d.norm(v)).collect();
                let (value, halves) = polar_ratio(&sv.values, &d_values, &mesh.weights, q);
                let mut e = MeasureEstimate::exact(value, MeasureMethod::Polar);
                e.lower = None;
                e.upper = None;
                e.params = MeasureParams { samples: mesh.len(), seed: opts.seed, homogeneous_dim: q, ..Default::default() };
                if halves > opts.cover.instability {
                    e.flags.push(EstimateFlag::Unstable);
                }
                e
            };
            est.cross_check = cross_check;
            Ok(est)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HHomMethod {
    Pushforward,
    Determinant,
}

/// Median of `rho(f(x), f(y)) / d(x, y)` over consecutive pairs of points.
pub fn median_stretch(source: &GroupBundle, target: &GroupBundle, xs: &[Vec<f64>], fx: &[Vec<f64>]) -> f64 {
    let mut r: Vec<f64> = xs
        .windows(2)
        .zip(fx.windows(2))
        .filter_map(|(a, b)| {
            let d = source.dist(&a[0], &a[1]);
            (d > 0.0).then(|| target.dist(&b[0], &b[1]) / d)
        })
        .take(2001)
        .collect();
    if r.is_empty() {
        return 1.0;
    }
    r.sort_by(f64::total_cmp);
    let m = r[r.len() / 2];
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

/// `H^Q_rho(L(B_1)) / H^Q_d(B_1)` from one guard-banded cloud.
pub fn pushforward_jacobian(l: &HHomomorphism, opts: &JacobianOptions) -> Result<MeasureEstimate> {
    let (src, tgt) = (&l.source, &l.target);
    let q = src.homogeneous_dim();
    let mesh = DirectionMesh::haar(src, opts.mesh_pairs.min(500), opts.seed)?;
    let min_stretch = mesh.directions.iter().map(|v| tgt.norm(&l.apply(v))).fold(f64::INFINITY, f64::min);
    let mut cover = opts.cover.clone();
    let probe_pts = sample_ball(src, &vec![0.0; src.dim()], 1.0, 2002, opts.seed ^ 0x5eed)?.points;
    let images: Vec<Vec<f64>> = probe_pts.iter().map(|p| l.apply(p)).collect();
    let kappa = median_stretch(src, tgt, &probe_pts, &images);
    let guard_for = |eps: &[f64]| eps.iter().fold(0.0f64, |m, e| m.max(*e)) / 2.0 * (kappa / min_stretch).max(1.0);
    if opts.auto_eps {
        cover.eps = auto_eps(q, opts.cloud, (kappa / min_stretch).max(1.0), 64.0);
    }
    let guard = guard_for(&cover.eps);
    let cloud = PointCloud::guarded(src, &Domain::unit_ball(src.dim()), guard, opts.cloud, opts.seed)?;
    let ed = hausdorff_upper_estimate(&cloud, src, q, &cover)?;
    let image = cloud.map(|p| l.apply(p));
    let img_cover = CoverOptions { eps: cover.eps.iter().map(|e| e * kappa).collect(), ..cover.clone() };
    let ei = hausdorff_upper_estimate(&image, tgt, q, &img_cover)?;
    let ratios: Vec<f64> = ei.levels.iter().zip(&ed.levels).map(|(a, b)| a.value / b.value).collect();
    let mut flags = Vec::new();
    if ratios.windows(2).any(|w| relative_gap(w[0], w[1]) > cover.instability) {
        flags.push(EstimateFlag::Unstable);
    }
    Ok(MeasureEstimate {
        value: ei.value / ed.value,
        lower: None,
        upper: None,
        method: MeasureMethod::Pushforward,
        params: MeasureParams { seed: opts.seed, ..ed.params.clone() },
        levels: ed.levels.iter().zip(&ratios).map(|(l, r)| ScaleLevel { value: *r, ..l.clone() }).collect(),
        flags,
        cross_check: None,
    })
}

/// Cache of the constants `C` in `J(s_L) = C sqrt(det(L_0^T L_0))`, keyed by
/// target group and image subspace.
#[derive(Clone, Debug, Default)]
pub struct JacobianCalibrator {
    constants: HashMap<String, f64>,
}

impl JacobianCalibrator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.constants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constants.is_empty()
    }

    fn key(l: &HHomomorphism) -> String {
        // Orthogonal projector onto the column space, rounded.
        let m = l.full_matrix();
        let svd = m.clone().svd(true, false);
        let u = svd.u.unwrap();
        let hi = svd.singular_values.max();
        let cols: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > 1e-9 * hi).collect();
        let basis = DMatrix::from_fn(m.nrows(), cols.len(), |r, c| u[(r, cols[c])]);
        let p = &basis * basis.transpose();
        let entries: Vec<String> = p.iter().map(|v| format!("{:.6}", if v.abs() < 5e-7 { 0.0 } else { *v })).collect();
        format!("{}|{}|{}", l.source.name, l.target.name, entries.join(","))
    }

    /// `C` for the subspace of `l`, computed on first use from the identity
    /// when `l` is an automorphism of its source, else from `l` itself.
    pub fn constant(&mut self, l: &HHomomorphism, opts: &JacobianOptions) -> Result<f64> {
        let key = Self::key(l);
        if let Some(c) = self.constants.get(&key) {
            return Ok(*c);
        }
        let same = l.source.name == l.target.name && l.source.dim() == l.target.dim();
        let reference = if same { HHomomorphism::identity(&l.source) } else { l.clone() };
        let push = pushforward_jacobian(&reference, opts)?;
        let c = push.value / reference.gram_volume();
        self.constants.insert(key, c);
        Ok(c)
    }
}

/// Jacobian of an h-homomorphism by pushforward covering or by the Gram
/// determinant times a calibrated constant; `0` when `L` is not injective.
pub fn hhom_jacobian(l: &HHomomorphism, method: HHomMethod, calibrator: &mut JacobianCalibrator, opts: &JacobianOptions) -> Result<MeasureEstimate> {
    if !l.is_injective(1e-9) {
        let mut e = MeasureEstimate::exact(0.0, MeasureMethod::Exact);
        e.flags.push(EstimateFlag::Degenerate);
        return Ok(e);
    }
    match method {
        HHomMethod::Pushforward => pushforward_jacobian(l, opts),
        HHomMethod::Determinant => {
            let c = calibrator.constant(l, opts)?;
            let mut e = MeasureEstimate::exact(c * l.gram_volume(), MeasureMethod::Determinant);
            e.lower = None;
            e.upper = None;
            e.params.homogeneous_dim = l.source.homogeneous_dim();
            e.params.seed = opts.seed;
            Ok(e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{abelian, heisenberg};
    use crate::norm::LayerNorm;
    use std::f64::consts::PI;

    #[test]
    fn ball_volumes() {
        assert!((unit_ball_volume(2) - PI).abs() < 1e-15);
        assert!((unit_ball_volume(3) - 4.0 * PI / 3.0).abs() < 1e-15);
        assert!((unit_ball_volume(4) - PI * PI / 2.0).abs() < 1e-14);
    }

    #[test]
    fn disk_area_by_grid() {
        let r2 = abelian(2, LayerNorm::Euclidean).unwrap();
        let e = lebesgue_ball_volume(&r2, 1.0, VolumeMethod::Grid { pitch: 1e-3 }).unwrap();
        assert!((e.value - PI).abs() / PI < 0.005, "{}", e.value);
        assert!(e.lower.unwrap() <= e.value && e.value <= e.upper.unwrap());
        assert!(matches!(lebesgue_ball_volume(&r2, 1.0, VolumeMethod::Grid { pitch: 1e-5 }), Err(Error::Budget(_))));
    }

    #[test]
    fn heisenberg_ball_scaling() {
        let h = heisenberg();
        let v1 = lebesgue_ball_volume(&h, 1.0, VolumeMethod::Grid { pitch: 0.01 }).unwrap();
        let v2 = lebesgue_ball_volume(&h, 2.0, VolumeMethod::Grid { pitch: 0.02 }).unwrap();
        assert!((v2.value / v1.value - 16.0).abs() < 1e-9);
        let mc = lebesgue_ball_volume(&h, 1.0, VolumeMethod::MonteCarlo { samples: 200_000, seed: 1 }).unwrap();
        assert!(mc.lower.unwrap() <= v1.value && v1.value <= mc.upper.unwrap(), "{mc:?} {}", v1.value);
    }

    #[test]
    fn segment_and_disk_by_covering() {
        let r1 = abelian(1, LayerNorm::Euclidean).unwrap();
        let dom = Domain::Box { lo: vec![0.0], hi: vec![1.0] };
        let cloud = PointCloud::guarded(&r1, &dom, 0.02, 20_000, 1).unwrap();
        let e = hausdorff_upper_estimate(&cloud, &r1, 1, &CoverOptions { eps: vec![0.02, 0.01], ..Default::default() }).unwrap();
        assert!((e.value - 1.0).abs() < 0.02, "{e:?}");
        let r2 = abelian(2, LayerNorm::Euclidean).unwrap();
        let cloud = PointCloud::guarded(&r2, &Domain::unit_ball(2), 0.05, 60_000, 2).unwrap();
        let e = hausdorff_upper_estimate(&cloud, &r2, 2, &CoverOptions { eps: vec![0.1, 0.05], ..Default::default() }).unwrap();
        assert!((e.value - PI).abs() / PI < 0.02, "{e:?}");
        let g = e.levels[1].greedy.unwrap();
        assert!(g > PI && g < 4.0 * PI, "{g}");
    }

    #[test]
    fn sparse_cloud_is_refused() {
        let r2 = abelian(2, LayerNorm::Euclidean).unwrap();
        let cloud = PointCloud::all(Domain::unit_ball(2).sample(&r2, 50, 0).unwrap());
        let e = hausdorff_upper_estimate(&cloud, &r2, 2, &CoverOptions { eps: vec![0.01], ..Default::default() });
        assert!(matches!(e, Err(Error::InsufficientDensity(_))));
    }

    #[test]
    fn kirchheim_examples() {
        let a = 2.5;
        assert!((kirchheim_jacobian(1, &|u| a * u[0].abs()).unwrap().value - a).abs() < 1e-12);
        let l = 1.7;
        let k = kirchheim_jacobian(2, &|u| l * (u[0] * u[0] + u[1] * u[1]).sqrt()).unwrap();
        assert!((k.value - l * l).abs() < 1e-9);
        let k = kirchheim_jacobian(2, &|u| u[0].abs()).unwrap();
        assert!(k.degenerate && k.value == 0.0);
        let k = kirchheim_jacobian(3, &|u| 2.0 * (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt()).unwrap();
        assert!((k.value - 8.0).abs() < 1e-9);
    }

    #[test]
    fn metric_jacobian_identity_is_one() {
        for b in [abelian(2, LayerNorm::Euclidean).unwrap(), heisenberg()] {
            let opts = JacobianOptions { cloud: 20_000, ..Default::default() };
            let e = metric_jacobian(JacobianInput::Norm(&b.norm), &b, &opts).unwrap();
            assert_eq!(e.value, 1.0);
        }
    }

    #[test]
    fn dilation_jacobian() {
        let h = heisenberg();
        let opts = JacobianOptions { cloud: 20_000, ..Default::default() };
        let mut cal = JacobianCalibrator::new();
        for lam in [0.5, 2.0] {
            let l = HHomomorphism::dilation(&h, lam);
            let p = hhom_jacobian(&l, HHomMethod::Pushforward, &mut cal, &opts).unwrap();
            assert!((p.value / lam.powi(4) - 1.0).abs() < 0.05, "{p:?}");
            let d = hhom_jacobian(&l, HHomMethod::Determinant, &mut cal, &opts).unwrap();
            assert_eq!(d.value, lam.powi(4));
        }
        assert_eq!(cal.len(), 1);
        let flat = HHomomorphism::from_f64_blocks(h.clone(), h, vec![vec![1.0, 0.0, 0.0, 0.0], vec![0.0]]).unwrap();
        let z = hhom_jacobian(&flat, HHomMethod::Pushforward, &mut cal, &opts).unwrap();
        assert_eq!(z.value, 0.0);
        assert!(z.has_flag(EstimateFlag::Degenerate));
    }
}
