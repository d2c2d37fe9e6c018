//! Homogeneous homomorphisms and numerical differentiation.
//!
//! Pansu differentials are estimated from difference quotients
//! `delta_{1/t}(f(x)^{-1} f(x delta_t v))` along a frame of first-layer
//! directions, then assembled into layer blocks by least squares on frame
//! products. Metric differentials are scalar limits of
//! `rho(f(x), f(x delta_t v)) / t` on a direction mesh.

use nalgebra::DMatrix;
use num_traits::{Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{BasisIndex, Element};
use crate::error::{Error, Result};
use crate::maps::GroupMap;
use crate::norm::{DirectionMesh, GroupBundle, SeminormSample};
use crate::scalar::{random_rational, rational_from_f64, Rational, RealScalar, Scalar};

/// A linear map given by layer blocks, `L_i : V_i -> W_i`.
#[derive(Clone, Debug)]
pub struct HHomomorphism {
    pub source: GroupBundle,
    pub target: GroupBundle,
    blocks: Vec<DMatrix<f64>>,
    exact: Option<Vec<Vec<Vec<Rational>>>>,
    /// `max |L([a,b]) - [La, Lb]|` over source basis pairs.
    pub compatibility_defect: f64,
}

fn target_layer_dim(target: &GroupBundle, layer: usize) -> usize {
    if layer <= target.gradation().step() {
        target.gradation().layer_dim(layer)
    } else {
        0
    }
}

impl HHomomorphism {
    /// Row-major float blocks, one per source layer. Blocks into target
    /// layers that do not exist must be empty.
    pub fn from_f64_blocks(source: GroupBundle, target: GroupBundle, blocks: Vec<Vec<f64>>) -> Result<Self> {
        let mats = Self::shape_blocks(&source, &target, &blocks)?;
        Ok(Self::finish(source, target, mats, None))
    }

    pub fn from_rational_blocks(source: GroupBundle, target: GroupBundle, blocks: Vec<Vec<Rational>>) -> Result<Self> {
        let floats: Vec<Vec<f64>> = blocks.iter().map(|b| b.iter().map(|q| q.as_f64()).collect()).collect();
        let mats = Self::shape_blocks(&source, &target, &floats)?;
        let exact = blocks
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let cols = source.gradation().layer_dim(i + 1);
                b.chunks(cols.max(1)).map(|r| r.to_vec()).collect::<Vec<_>>()
            })
            .map(|rows: Vec<Vec<Rational>>| if rows.iter().all(|r| r.is_empty()) { Vec::new() } else { rows })
            .collect();
        Ok(Self::finish(source, target, mats, Some(exact)))
    }

    fn shape_blocks(source: &GroupBundle, target: &GroupBundle, blocks: &[Vec<f64>]) -> Result<Vec<DMatrix<f64>>> {
        let step = source.gradation().step();
        if blocks.len() != step {
            return Err(Error::Structural(format!("shape mismatch: {} blocks for a step-{step} source", blocks.len())));
        }
        blocks
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let (rows, cols) = (target_layer_dim(target, i + 1), source.gradation().layer_dim(i + 1));
                if b.len() != rows * cols {
                    return Err(Error::Structural(format!(
                        "shape mismatch: block {} has {} entries, expected {rows}x{cols}",
                        i + 1,
                        b.len()
                    )));
                }
                Ok(DMatrix::from_row_slice(rows, cols, b))
            })
            .collect()
    }

    fn finish(source: GroupBundle, target: GroupBundle, blocks: Vec<DMatrix<f64>>, exact: Option<Vec<Vec<Vec<Rational>>>>) -> Self {
        let mut h = HHomomorphism { source, target, blocks, exact, compatibility_defect: 0.0 };
        h.compatibility_defect = h.bracket_defects().iter().map(|d| d.defect).fold(0.0, f64::max);
        h
    }

    /// Same blocks into another bundle with the same gradation (for example
    /// the same group with a different norm).
    pub fn retarget(self, target: GroupBundle) -> Self {
        Self::finish(self.source, target, self.blocks, self.exact)
    }

    pub fn identity(bundle: &GroupBundle) -> Self {
        Self::dilation_exact(bundle, &Rational::from_integer(1.into()))
    }

    /// `delta_r` as an h-homomorphism; exact blocks when `r` is a float
    /// with a finite binary expansion (always).
    pub fn dilation(bundle: &GroupBundle, r: f64) -> Self {
        match rational_from_f64(r) {
            Some(q) => Self::dilation_exact(bundle, &q),
            None => {
                let g = bundle.gradation();
                let blocks = (1..=g.step())
                    .map(|i| {
                        let n = g.layer_dim(i);
                        DMatrix::from_diagonal_element(n, n, r.powi(i as i32)).as_slice().to_vec()
                    })
                    .collect();
                Self::from_f64_blocks(bundle.clone(), bundle.clone(), blocks).expect("square blocks")
            }
        }
    }

    fn dilation_exact(bundle: &GroupBundle, r: &Rational) -> Self {
        let g = bundle.gradation();
        let blocks = (1..=g.step())
            .map(|i| {
                let n = g.layer_dim(i);
                let ri = r.powi(i as u32);
                let mut b = vec![Rational::zero(); n * n];
                for k in 0..n {
                    b[k * n + k] = ri.clone();
                }
                b
            })
            .collect();
        Self::from_rational_blocks(bundle.clone(), bundle.clone(), blocks).expect("square blocks")
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    /// Rational blocks as row lists, when the map was built exactly.
    pub fn exact_blocks(&self) -> Option<&[Vec<Vec<Rational>>]> {
        self.exact.as_deref()
    }

    /// Row-major float blocks (the inverse of `from_f64_blocks`).
    pub fn block_rows(&self) -> Vec<Vec<f64>> {
        self.blocks.iter().map(|b| b.transpose().as_slice().to_vec()).collect()
    }

    /// Block-diagonal matrix of the whole map (`target_dim x source_dim`).
    pub fn full_matrix(&self) -> DMatrix<f64> {
        let (sg, tg) = (self.source.gradation(), self.target.gradation());
        let mut m = DMatrix::zeros(tg.total_dim(), sg.total_dim());
        for (i, b) in self.blocks.iter().enumerate() {
            if b.nrows() == 0 {
                continue;
            }
            let (r0, c0) = (tg.layer_range(i + 1).start, sg.layer_range(i + 1).start);
            m.view_mut((r0, c0), (b.nrows(), b.ncols())).copy_from(b);
        }
        m
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let (sg, tg) = (self.source.gradation(), self.target.gradation());
        let mut out = vec![0.0; tg.total_dim()];
        for (i, b) in self.blocks.iter().enumerate() {
            if b.nrows() == 0 {
                continue;
            }
            let xs = &x[sg.layer_range(i + 1)];
            let r0 = tg.layer_range(i + 1).start;
            for r in 0..b.nrows() {
                out[r0 + r] = (0..b.ncols()).map(|c| b[(r, c)] * xs[c]).sum();
            }
        }
        out
    }

    pub fn apply_exact(&self, x: &[Rational]) -> Option<Vec<Rational>> {
        let exact = self.exact.as_ref()?;
        let (sg, tg) = (self.source.gradation(), self.target.gradation());
        let mut out = vec![Rational::zero(); tg.total_dim()];
        for (i, rows) in exact.iter().enumerate() {
            let xs = &x[sg.layer_range(i + 1)];
            let r0 = if i < tg.step() { tg.layer_range(i + 1).start } else { 0 };
            for (r, row) in rows.iter().enumerate() {
                out[r0 + r] = row.iter().zip(xs).fold(Rational::zero(), |acc, (a, b)| acc + a * b);
            }
        }
        Some(out)
    }

    /// `sqrt(det(L^T L))` of the full matrix; zero when `L` is not injective.
    pub fn gram_volume(&self) -> f64 {
        let m = self.full_matrix();
        let g = m.transpose() * &m;
        g.determinant().max(0.0).sqrt()
    }

    /// Injective when the smallest singular value exceeds `tol` times the largest.
    pub fn is_injective(&self, tol: f64) -> bool {
        let m = self.full_matrix();
        if m.nrows() < m.ncols() {
            return false;
        }
        let sv = m.singular_values();
        let (lo, hi) = sv.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), s| (lo.min(*s), hi.max(*s)));
        hi > 0.0 && lo > tol * hi
    }

    /// Snap float blocks to rationals with denominator at most `max_den`
    /// when every entry is within `tol` of one.
    pub fn snap_rational(&self, max_den: i64, tol: f64) -> Option<HHomomorphism> {
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for row in self.block_rows() {
            let mut out = Vec::with_capacity(row.len());
            for v in row {
                let q = nearest_rational(v, max_den)?;
                if (q.as_f64() - v).abs() > tol {
                    return None;
                }
                out.push(q);
            }
            blocks.push(out);
        }
        HHomomorphism::from_rational_blocks(self.source.clone(), self.target.clone(), blocks).ok()
    }

    /// Per basis pair: `L([a,b])` against `[La, Lb]`.
    fn bracket_defects(&self) -> Vec<PairDefect> {
        let (sg, tg) = (self.source.gradation(), self.target.gradation());
        let (n, m) = (sg.total_dim(), tg.total_dim());
        let salg = self.source.group.algebra();
        let talg = self.target.group.algebra();
        let mut out = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                let defect = if let Some(_) = &self.exact {
                    let ea = Element::<Rational>::basis(n, a);
                    let eb = Element::<Rational>::basis(n, b);
                    let lhs = self.apply_exact(salg.bracket(&ea, &eb).unwrap().coords()).unwrap();
                    let la = self.apply_exact(ea.coords()).unwrap();
                    let lb = self.apply_exact(eb.coords()).unwrap();
                    let rhs = talg.bracket(&Element::new(la), &Element::new(lb)).unwrap();
                    lhs.iter()
                        .zip(rhs.coords())
                        .map(|(u, v)| (u - v).abs().as_f64())
                        .fold(0.0, f64::max)
                } else {
                    let ea = Element::<f64>::basis(n, a);
                    let eb = Element::<f64>::basis(n, b);
                    let lhs = self.apply(salg.bracket(&ea, &eb).unwrap().coords());
                    let rhs = talg
                        .bracket(&Element::new(self.apply(ea.coords())), &Element::new(self.apply(eb.coords())))
                        .unwrap();
                    lhs.iter().zip(rhs.coords()).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
                };
                debug_assert_eq!(m, tg.total_dim());
                out.push(PairDefect { a: sg.basis_index(a), b: sg.basis_index(b), defect });
            }
        }
        out
    }
}

/// Continued-fraction approximation with bounded denominator.
fn nearest_rational(v: f64, max_den: i64) -> Option<Rational> {
    if !v.is_finite() {
        return None;
    }
    let (mut h0, mut h1, mut k0, mut k1) = (0i64, 1i64, 1i64, 0i64);
    let mut x = v;
    for _ in 0..64 {
        let a = x.floor();
        if a.abs() > 1e15 {
            break;
        }
        let a = a as i64;
        let (h2, k2) = (a.checked_mul(h1)?.checked_add(h0)?, a.checked_mul(k1)?.checked_add(k0)?);
        if k2 > max_den {
            break;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        let frac = x - a as f64;
        if frac.abs() < 1e-15 {
            break;
        }
        x = 1.0 / frac;
    }
    (k1 != 0).then(|| Rational::new(h1.into(), k1.into()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairDefect {
    pub a: BasisIndex,
    pub b: BasisIndex,
    pub defect: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HHomReport {
    /// Whether the bracket check ran in rational arithmetic.
    pub exact: bool,
    pub bracket_defect: f64,
    pub failing_pairs: Vec<PairDefect>,
    pub product_pairs: usize,
    pub product_defect: f64,
    pub passes: bool,
}

/// Bracket compatibility on all basis pairs, then `L(xy) = L(x) L(y)` on
/// 200 random pairs (rational when the blocks are exact).
pub fn validate_hhom(l: &HHomomorphism, seed: u64) -> Result<HHomReport> {
    let defects = l.bracket_defects();
    let tol = if l.exact.is_some() { 0.0 } else { 1e-9 };
    let failing: Vec<PairDefect> = defects.into_iter().filter(|d| d.defect > tol).collect();
    let bracket_defect = failing.iter().map(|d| d.defect).fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = l.source.dim();
    let pairs = 200;
    let mut product_defect = 0.0f64;
    for _ in 0..pairs {
        if l.exact.is_some() {
            let x: Vec<Rational> = (0..n).map(|_| random_rational(&mut rng, 9, 7)).collect();
            let y: Vec<Rational> = (0..n).map(|_| random_rational(&mut rng, 9, 7)).collect();
            let xy = l.source.group.multiply(&Element::new(x.clone()), &Element::new(y.clone()))?;
            let lhs = l.apply_exact(xy.coords()).unwrap();
            let rhs = l.target.group.multiply(
                &Element::new(l.apply_exact(&x).unwrap()),
                &Element::new(l.apply_exact(&y).unwrap()),
            )?;
            for (u, v) in lhs.iter().zip(rhs.coords()) {
                product_defect = product_defect.max((u - v).abs().to_f64().unwrap_or(f64::INFINITY));
            }
        } else {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let lhs = l.apply(&l.source.mul(&x, &y));
            let rhs = l.target.mul(&l.apply(&x), &l.apply(&y));
            for (u, v) in lhs.iter().zip(&rhs) {
                product_defect = product_defect.max((u - v).abs());
            }
        }
    }
    let passes = failing.is_empty() && product_defect <= tol.max(if l.exact.is_some() { 0.0 } else { 1e-9 });
    Ok(HHomReport { exact: l.exact.is_some(), bracket_defect, failing_pairs: failing, product_pairs: pairs, product_defect, passes })
}

/// `delta_{1/t}(f(x)^{-1} f(x delta_t v))`; negative `t` uses the signed
/// dilation.
pub fn difference_quotient(f: &dyn GroupMap, x: &[f64], v: &[f64], t: f64) -> Result<Vec<f64>> {
    if t == 0.0 || !t.is_finite() {
        return Err(Error::Usage(format!("difference quotient needs finite t != 0, got {t}")));
    }
    let s = f.source();
    s.gradation().check_len(x.len())?;
    s.gradation().check_len(v.len())?;
    let y = s.mul(x, &s.dilate(t, v));
    for p in [x, &y[..]] {
        if !f.domain_contains(p) {
            return Err(Error::Usage(format!("point {p:?} outside the domain of {}", f.describe())));
        }
    }
    let tg = f.target();
    Ok(tg.dilate(1.0 / t, &tg.left_quotient(&f.eval(x), &f.eval(&y))))
}

/// `t_k = t0 2^{-k}` for `k = 0..=depth`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyadicSchedule {
    pub t0: f64,
    pub depth: usize,
}

impl Default for DyadicSchedule {
    fn default() -> Self {
        DyadicSchedule { t0: 1.0, depth: 20 }
    }
}

impl DyadicSchedule {
    pub const MAX_DEPTH: usize = 20;

    pub fn times(&self) -> Result<Vec<f64>> {
        if self.depth == 0 || self.depth > Self::MAX_DEPTH || !(self.t0 > 0.0) {
            return Err(Error::Usage(format!("schedule needs t0 > 0 and 1 <= depth <= {}", Self::MAX_DEPTH)));
        }
        Ok((0..=self.depth).map(|k| self.t0 * 0.5f64.powi(k as i32)).collect())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PartialEstimate {
    pub estimate: Vec<f64>,
    /// `rho(q_k, q_{k+1})` along the schedule.
    pub profile: Vec<f64>,
    pub times: Vec<f64>,
    /// Index `k` of the pair used for extrapolation.
    pub best_index: usize,
}

/// Relative profile level above which a partial is declared divergent.
pub const DIVERGENCE_LEVEL: f64 = 1e-3;

/// `d_v f(x)` by Richardson extrapolation `2 q_{k+1} - q_k` at the pair
/// with the smallest successive distance.
pub fn estimate_partial(f: &dyn GroupMap, x: &[f64], v: &[f64], schedule: &DyadicSchedule) -> Result<PartialEstimate> {
    let times = schedule.times()?;
    let tg = f.target();
    let qs: Vec<Vec<f64>> = times.iter().map(|&t| difference_quotient(f, x, v, t)).collect::<Result<_>>()?;
    let profile: Vec<f64> = qs.windows(2).map(|w| tg.dist(&w[0], &w[1])).collect();
    let best_index = argmin(&profile);
    let (a, b) = (&qs[best_index], &qs[best_index + 1]);
    let estimate: Vec<f64> = if profile[best_index] == 0.0 {
        b.clone()
    } else {
        a.iter().zip(b).map(|(p, q)| 2.0 * q - p).collect()
    };
    let scale = tg.norm(&estimate).max(1.0);
    if profile[best_index] > DIVERGENCE_LEVEL * scale {
        return Err(Error::Divergent(format!(
            "partial along {v:?} at {x:?}: smallest successive distance {:.3e}, profile {:?}",
            profile[best_index], profile
        )));
    }
    Ok(PartialEstimate { estimate, profile, times, best_index })
}

fn argmin(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, &x)| if x < bv { (i, x) } else { (bi, bv) })
        .0
}

/// First-layer directions `v_i` and the chart radius `T` for
/// `V = { delta_{t_1} v_1 ... delta_{t_N} v_N : |t_i| < T }`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Frame {
    pub directions: Vec<Vec<f64>>,
    pub t_max: f64,
}

impl Frame {
    /// Standard basis of the first layer, `T = 1`.
    pub fn standard(bundle: &GroupBundle) -> Self {
        let g = bundle.gradation();
        let directions = (0..g.layer_dim(1))
            .map(|k| {
                let mut e = vec![0.0; g.total_dim()];
                e[k] = 1.0;
                e
            })
            .collect();
        Frame { directions, t_max: 1.0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AssemblyOptions {
    pub schedule: DyadicSchedule,
    /// Frame products used per unknown; at least `4 n`.
    pub samples: Option<usize>,
    pub check_pairs: usize,
    pub seed: u64,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        AssemblyOptions { schedule: DyadicSchedule::default(), samples: None, check_pairs: 100, seed: 0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AssemblyReport {
    pub partials: Vec<PartialEstimate>,
    /// Max coordinate residual of the least-squares block fit.
    pub fit_residual: f64,
    /// Max coordinate gap between `L(uw)` and `L(u) L(w)` on sampled pairs.
    pub homomorphism_defect: f64,
    /// Max coordinate gap between estimated partials along random
    /// first-layer combinations and `L_1` applied to them.
    pub linearity_defect: f64,
    pub samples: usize,
    pub t_max: f64,
}

/// Candidate Pansu differential at `x` from frame partials and the product
/// formula `L(delta_{t_1} v_1 ... delta_{t_N} v_N) = prod delta_{t_i} d_{v_i} f(x)`.
pub fn assemble_pansu_differential(
    f: &dyn GroupMap,
    x: &[f64],
    frame: &Frame,
    opts: &AssemblyOptions,
) -> Result<(HHomomorphism, AssemblyReport)> {
    let (src, tgt) = (f.source(), f.target());
    let (sg, tg) = (src.gradation(), tgt.gradation());
    let n1 = sg.layer_dim(1);
    let first = sg.layer_range(1);
    for v in &frame.directions {
        sg.check_len(v.len())?;
        if v[first.end..].iter().any(|c| *c != 0.0) {
            return Err(Error::Usage("frame directions must lie in the first layer".into()));
        }
    }
    let vmat = DMatrix::from_fn(n1, frame.directions.len(), |r, c| frame.directions[c][r]);
    if frame.directions.is_empty() || vmat.rank(1e-10) < n1 {
        return Err(Error::Usage("frame does not span the first layer".into()));
    }

    let partials: Vec<PartialEstimate> = frame
        .directions
        .iter()
        .map(|v| estimate_partial(f, x, v, &opts.schedule))
        .collect::<Result<_>>()?;

    let mut blocks: Vec<DMatrix<f64>> = Vec::with_capacity(sg.step());
    // First layer: L_1 V = P_1.
    let m1 = target_layer_dim(tgt, 1);
    let p1 = DMatrix::from_fn(m1, partials.len(), |r, c| partials[c].estimate[r]);
    let vpinv = vmat.clone().pseudo_inverse(1e-12).map_err(|e| Error::Usage(e.to_string()))?;
    blocks.push(&p1 * vpinv);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let samples = opts.samples.unwrap_or(0).max(4 * sg.total_dim() + 8);
    let mut us = Vec::with_capacity(samples);
    let mut ws = Vec::with_capacity(samples);
    for _ in 0..samples {
        let ts: Vec<f64> = frame.directions.iter().map(|_| rng.random_range(-frame.t_max..frame.t_max)).collect();
        let mut u = vec![0.0; sg.total_dim()];
        let mut w = vec![0.0; tg.total_dim()];
        for ((v, p), t) in frame.directions.iter().zip(&partials).zip(&ts) {
            u = src.mul(&u, &src.dilate(*t, v));
            w = tgt.mul(&w, &tgt.dilate(*t, &p.estimate));
        }
        us.push(u);
        ws.push(w);
    }
    for i in 2..=sg.step() {
        let (ni, mi) = (sg.layer_dim(i), target_layer_dim(tgt, i));
        let (sr, tr) = (sg.layer_range(i), if mi > 0 { tg.layer_range(i) } else { 0..0 });
        let umat = DMatrix::from_fn(ni, samples, |r, c| us[c][sr.start + r]);
        let sv = umat.singular_values();
        let hi = sv.max();
        if sv.iter().filter(|s| **s > 1e-9 * hi.max(1e-300)).count() < ni {
            return Err(Error::Usage(format!("frame products do not cover layer {i}; the group may not be generated by its first layer")));
        }
        let wmat = DMatrix::from_fn(mi, samples, |r, c| ws[c][tr.start + r]);
        let upinv = umat.pseudo_inverse(1e-12).map_err(|e| Error::Usage(e.to_string()))?;
        blocks.push(&wmat * upinv);
    }
    let block_rows: Vec<Vec<f64>> = blocks.iter().map(|b| b.transpose().as_slice().to_vec()).collect();
    let l = HHomomorphism::from_f64_blocks(src.clone(), tgt.clone(), block_rows)?;

    let fit_residual = us
        .iter()
        .zip(&ws)
        .map(|(u, w)| max_abs_diff(&l.apply(u), w))
        .fold(0.0, f64::max);
    let mut homomorphism_defect = 0.0f64;
    for _ in 0..opts.check_pairs {
        let u: Vec<f64> = (0..sg.total_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..sg.total_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let lhs = l.apply(&src.mul(&u, &w));
        let rhs = tgt.mul(&l.apply(&u), &l.apply(&w));
        homomorphism_defect = homomorphism_defect.max(max_abs_diff(&lhs, &rhs));
    }
    let mut linearity_defect = 0.0f64;
    for _ in 0..4 {
        let mut v = vec![0.0; sg.total_dim()];
        for c in first.clone() {
            v[c] = rng.random_range(-1.0..1.0);
        }
        let p = estimate_partial(f, x, &v, &opts.schedule)?;
        linearity_defect = linearity_defect.max(max_abs_diff(&p.estimate, &l.apply(&v)));
    }
    let report = AssemblyReport { partials, fit_residual, homomorphism_defect, linearity_defect, samples, t_max: frame.t_max };
    Ok((l, report))
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RemainderOptions {
    pub r0: f64,
    pub scales: usize,
    pub direction_pairs: usize,
    pub tolerance: f64,
    pub consecutive: usize,
    pub seed: u64,
}

impl Default for RemainderOptions {
    fn default() -> Self {
        RemainderOptions { r0: 0.5, scales: 10, direction_pairs: 64, tolerance: 1e-3, consecutive: 3, seed: 0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RemainderProfile {
    pub radii: Vec<f64>,
    /// `max_z rho(f(x)^{-1} f(xz), L(z)) / r` over `d(z, 0) = r`.
    pub ratios: Vec<f64>,
    /// Least-squares slope of `log ratio` against `log r`; absent when some
    /// ratio vanishes.
    pub slope: Option<f64>,
    pub tolerance: f64,
    pub consecutive: usize,
    pub passes: bool,
}

/// Remainder ratios on dyadic spheres around `x`.
pub fn validate_differential(f: &dyn GroupMap, x: &[f64], l: &HHomomorphism, opts: &RemainderOptions) -> Result<RemainderProfile> {
    let (src, tgt) = (f.source(), f.target());
    let mesh = DirectionMesh::haar(src, opts.direction_pairs, opts.seed)?;
    let fx = f.eval(x);
    let mut radii = Vec::with_capacity(opts.scales);
    let mut ratios = Vec::with_capacity(opts.scales);
    for k in 0..opts.scales {
        let r = opts.r0 * 0.5f64.powi(k as i32);
        let mut worst = 0.0f64;
        for v in &mesh.directions {
            let z = src.dilate(r, v);
            let y = src.mul(x, &z);
            if !f.domain_contains(&y) {
                continue;
            }
            let q = tgt.left_quotient(&fx, &f.eval(&y));
            worst = worst.max(tgt.dist(&q, &l.apply(&z)) / r);
        }
        radii.push(r);
        ratios.push(worst);
    }
    let slope = if ratios.iter().all(|r| *r > 0.0) {
        let xs: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
        let ys: Vec<f64> = ratios.iter().map(|r| r.ln()).collect();
        Some(ls_slope(&xs, &ys))
    } else {
        None
    };
    let last_small = ratios.last().is_some_and(|r| *r < opts.tolerance);
    let all_small = ratios.iter().all(|r| *r < opts.tolerance);
    let n = ratios.len();
    let decreasing = n > opts.consecutive && ratios[n - 1 - opts.consecutive..].windows(2).all(|w| w[1] < w[0]);
    let passes = last_small && (all_small || decreasing);
    Ok(RemainderProfile { radii, ratios, slope, tolerance: opts.tolerance, consecutive: opts.consecutive, passes })
}

pub fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Clone, Debug)]
pub struct MetricDifferential {
    pub sample: SeminormSample,
    pub symmetry_defect: f64,
    /// `max (s(uw) - s(u) - s(w))` over sampled mesh pairs, with `s(uw)`
    /// estimated directly.
    pub triangle_defect: f64,
    pub triangle_pairs: usize,
}

/// `a_k = rho(f(x), f(x delta_{t_k} v)) / t_k` extrapolated like
/// `estimate_partial`; returns the limit and the smallest successive gap.
fn scalar_limit(f: &dyn GroupMap, fx: &[f64], x: &[f64], v: &[f64], times: &[f64]) -> Option<(f64, f64)> {
    let (src, tgt) = (f.source(), f.target());
    let mut a = Vec::with_capacity(times.len());
    for &t in times {
        let y = src.mul(x, &src.dilate(t, v));
        if !f.domain_contains(&y) {
            if a.is_empty() {
                continue;
            }
            break;
        }
        a.push(tgt.dist(fx, &f.eval(&y)) / t);
    }
    match a.len() {
        0 => None,
        1 => Some((a[0], f64::INFINITY)),
        _ => {
            let gaps: Vec<f64> = a.windows(2).map(|w| (w[0] - w[1]).abs()).collect();
            let k = argmin(&gaps);
            let est = if gaps[k] == 0.0 { a[k + 1] } else { 2.0 * a[k + 1] - a[k] };
            Some((est.max(0.0), gaps[k]))
        }
    }
}

/// Metric differential `s(v) = lim rho(f(x), f(x delta_t v)) / t` on a mesh.
pub fn estimate_metric_differential(
    f: &dyn GroupMap,
    x: &[f64],
    mesh: &DirectionMesh,
    schedule: &DyadicSchedule,
    triangle_pairs: usize,
    seed: u64,
) -> Result<MetricDifferential> {
    let times = schedule.times()?;
    if !f.domain_contains(x) {
        return Err(Error::Usage(format!("point {x:?} outside the domain of {}", f.describe())));
    }
    let fx = f.eval(x);
    let mut values = Vec::with_capacity(mesh.len());
    let mut divergent = Vec::new();
    let mut tolerance = 0.0f64;
    for (k, v) in mesh.directions.iter().enumerate() {
        match scalar_limit(f, &fx, x, v, &times) {
            Some((s, gap)) => {
                if gap > DIVERGENCE_LEVEL * s.max(1.0) {
                    divergent.push(k);
                } else {
                    tolerance = tolerance.max(gap);
                }
                values.push(s);
            }
            None => {
                divergent.push(k);
                values.push(0.0);
            }
        }
    }
    let mut sample = SeminormSample::new(mesh.clone(), values, tolerance);
    sample.divergent = divergent;
    let symmetry_defect = sample.symmetry_defect();

    let src = f.source();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut triangle_defect = f64::NEG_INFINITY;
    let mut done = 0;
    if !mesh.is_empty() {
        for _ in 0..triangle_pairs {
            let (i, j) = (rng.random_range(0..mesh.len()), rng.random_range(0..mesh.len()));
            let uw = src.mul(&mesh.directions[i], &mesh.directions[j]);
            if let Some((s, _)) = scalar_limit(f, &fx, x, &uw, &times) {
                triangle_defect = triangle_defect.max(s - sample.values[i] - sample.values[j]);
                done += 1;
            }
        }
    }
    if done == 0 {
        triangle_defect = 0.0;
    }
    Ok(MetricDifferential { sample, symmetry_defect, triangle_defect, triangle_pairs: done })
}

/// Mesh indices with `s(v) < tol`.
pub fn detect_null_directions(s: &SeminormSample, tol: f64) -> Vec<usize> {
    s.values.iter().enumerate().filter(|(_, v)| **v < tol).map(|(k, _)| k).collect()
}

/// Relative level below which a sampled seminorm counts as vanishing.
pub const NULL_LEVEL: f64 = 1e-6;

/// `true` when the sample is identically zero or has a direction below
/// `NULL_LEVEL` times its maximum (at sample resolution: not a norm).
pub fn is_degenerate(s: &SeminormSample) -> bool {
    let hi = s.max_value();
    hi == 0.0 || !detect_null_directions(s, NULL_LEVEL * hi).is_empty()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{abelian, engel, heisenberg};
    use crate::maps::{ConstantMap, LeftTranslated, PerturbedHom, RightTranslation};
    use crate::norm::LayerNorm;
    use crate::scalar::{int, rat};
    use std::sync::Arc;

    fn diag_h(a: Rational, b: Rational, c: Rational) -> HHomomorphism {
        let h = heisenberg();
        HHomomorphism::from_rational_blocks(h.clone(), h, vec![vec![a, int(0), int(0), b], vec![c]]).unwrap()
    }

    #[test]
    fn validate_hhom_examples() {
        let id = HHomomorphism::identity(&heisenberg());
        assert!(validate_hhom(&id, 0).unwrap().passes);
        let ok = diag_h(rat(3, 2), rat(2, 3), int(1));
        let r = validate_hhom(&ok, 0).unwrap();
        assert!(r.passes && r.exact && r.product_defect == 0.0);
        let bad = diag_h(int(2), int(1), int(1));
        let r = validate_hhom(&bad, 0).unwrap();
        assert!(!r.passes);
        assert_eq!(r.failing_pairs.len(), 1);
        assert_eq!((r.failing_pairs[0].a, r.failing_pairs[0].b), (BasisIndex::new(1, 1), BasisIndex::new(1, 2)));
        // [Le1, Le2] = 4 e3 against L(2 e3) = 2 e3.
        assert_eq!(r.failing_pairs[0].defect, 2.0);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let h = heisenberg();
        assert!(HHomomorphism::from_f64_blocks(h.clone(), h.clone(), vec![vec![1.0; 4]]).is_err());
        assert!(HHomomorphism::from_f64_blocks(h.clone(), h, vec![vec![1.0; 3], vec![1.0]]).is_err());
    }

    #[test]
    fn projection_to_lower_step_target() {
        let h = heisenberg();
        let r1 = abelian(1, LayerNorm::Euclidean).unwrap();
        let p = HHomomorphism::from_f64_blocks(h, r1, vec![vec![1.0, 0.0], vec![]]).unwrap();
        assert!(validate_hhom(&p, 0).unwrap().passes);
        assert_eq!(p.apply(&[0.5, 2.0, 3.0]), vec![0.5]);
    }

    #[test]
    fn quotient_of_hhom_is_constant() {
        let l = diag_h(rat(5, 4), rat(4, 5), int(1));
        let x = [0.3, -0.7, 0.2];
        let v = [0.6, 0.8, 0.0];
        for t in [1.0, 0.1, -0.25, 1e-3] {
            let q = difference_quotient(&l, &x, &v, t).unwrap();
            assert!(max_abs_diff(&q, &l.apply(&v)) < 1e-9, "{t} {q:?}");
        }
    }

    #[test]
    fn right_translation_quotient_matches_conjugation() {
        let h = heisenberg();
        let c = vec![0.4, -0.3, 0.2];
        let f = RightTranslation { bundle: h.clone(), c: c.clone() };
        let e1 = [1.0, 0.0, 0.0];
        for t in [0.5, 0.125, 0.01] {
            let q = difference_quotient(&f, &[0.0; 3], &e1, t).unwrap();
            // c^{-1} (t e1) c = t e1 + t [e1, c] with [e1, c] = 2 c2 e3.
            let expect = [1.0, 0.0, 2.0 * c[1] / t];
            assert!(max_abs_diff(&q, &expect) < 1e-9, "{q:?}");
        }
        assert!(matches!(estimate_partial(&f, &[0.0; 3], &e1, &DyadicSchedule::default()), Err(Error::Divergent(_))));
    }

    #[test]
    fn partial_rescaling_and_perturbation() {
        let h = heisenberg();
        let f = PerturbedHom { hom: diag_h(rat(5, 4), rat(4, 5), int(1)), center: vec![0.3, -0.2, 0.1], bump: vec![0.0, 0.0, 1.0] };
        // Pansu differentiable at the center only: elsewhere the bump moves
        // the second layer at first order in t.
        let x = f.center.clone();
        let v = [0.6, 0.8, 0.0];
        let s = DyadicSchedule::default();
        let p = estimate_partial(&f, &x, &v, &s).unwrap();
        assert!(max_abs_diff(&p.estimate, &f.hom.apply(&v)) < 1e-6, "{:?}", p.estimate);
        let a = 0.37;
        let pa = estimate_partial(&f, &x, &h.dilate(a, &v), &s).unwrap();
        assert!(max_abs_diff(&pa.estimate, &h.dilate(a, &p.estimate)) < 1e-6);
    }

    #[test]
    fn assembly_recovers_blocks() {
        let e = engel();
        let l = HHomomorphism::from_rational_blocks(
            e.clone(),
            e.clone(),
            vec![vec![int(2), int(0), int(0), rat(1, 2)], vec![int(1)], vec![int(2)]],
        )
        .unwrap();
        assert!(validate_hhom(&l, 1).unwrap().passes);
        let c = vec![0.5, -0.25, 0.125, 1.0];
        let f = LeftTranslated { inner: Arc::new(l.clone()), c };
        let (got, rep) = assemble_pansu_differential(&f, &[0.2, 0.1, -0.3, 0.4], &Frame::standard(&e), &AssemblyOptions::default()).unwrap();
        for (a, b) in got.block_rows().iter().zip(l.block_rows()) {
            assert!(max_abs_diff(a, &b) < 1e-9, "{a:?} {b:?}");
        }
        assert!(rep.homomorphism_defect < 1e-9);
        let snapped = got.snap_rational(1000, 1e-9).unwrap();
        assert_eq!(snapped.exact_blocks(), l.exact_blocks());
    }

    #[test]
    fn remainder_slope_for_quadratic_perturbation() {
        let h = heisenberg();
        let f = PerturbedHom { hom: HHomomorphism::identity(&h), center: vec![0.3, -0.2, 0.1], bump: vec![0.0, 0.0, 1.0] };
        let prof = validate_differential(&f, &f.center, &f.hom, &RemainderOptions::default()).unwrap();
        let slope = prof.slope.unwrap();
        assert!((slope - 1.0).abs() < 0.1, "{slope} {:?}", prof.ratios);
        assert!(prof.passes);
        let exact = validate_differential(&f.hom, &[0.0; 3], &f.hom, &RemainderOptions::default()).unwrap();
        assert!(exact.ratios.iter().all(|r| *r == 0.0));
        let off = validate_differential(&f.hom, &f.center, &f.hom, &RemainderOptions::default()).unwrap();
        assert!(off.passes && off.ratios.iter().all(|r| *r < 1e-5), "{:?}", off.ratios);
    }

    #[test]
    fn metric_differentials() {
        let h = heisenberg();
        let mesh = DirectionMesh::haar(&h, 64, 3).unwrap();
        let s = DyadicSchedule::default();
        let id = HHomomorphism::identity(&h);
        let md = estimate_metric_differential(&id, &[0.1, 0.2, 0.3], &mesh, &s, 50, 0).unwrap();
        assert!(md.sample.values.iter().all(|v| (v - 1.0).abs() < 1e-6));
        assert!(detect_null_directions(&md.sample, 1e-6).is_empty());
        assert!(md.triangle_defect <= 1e-6);

        let zero = ConstantMap { source: h.clone(), target: h.clone(), value: vec![1.0, 2.0, 3.0] };
        let md = estimate_metric_differential(&zero, &[0.0; 3], &mesh, &s, 10, 0).unwrap();
        assert_eq!(detect_null_directions(&md.sample, 1e-9).len(), mesh.len());
        assert!(is_degenerate(&md.sample));

        let r1 = abelian(1, LayerNorm::Euclidean).unwrap();
        let p = HHomomorphism::from_f64_blocks(h.clone(), r1, vec![vec![1.0, 0.0], vec![]]).unwrap();
        let md = estimate_metric_differential(&p, &[0.0; 3], &mesh, &s, 0, 0).unwrap();
        let e2 = mesh.directions.iter().position(|v| v[1] == 1.0).unwrap();
        assert!(detect_null_directions(&md.sample, 1e-9).contains(&e2));
    }
}
