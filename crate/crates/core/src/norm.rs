//! Homogeneous norms `||x|| = max_i sigma_i |x_i|^(1/i)`, the left-invariant
//! distance `rho(x, y) = ||x^{-1} y||`, calibration of the `sigma_i`, and
//! ball sampling.
//!
//! Float comparisons against norm values use an absolute tolerance of
//! [`NORM_TOL`] on quantities scaled to unit magnitude.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_traits::{Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::algebra::Gradation;
use crate::bch::{dilate_f64, Group};
use crate::error::{Error, Result};
use crate::scalar::{rat, Rational};

/// Absolute tolerance for comparisons of unit-scaled norm values.
pub const NORM_TOL: f64 = 1e-9;

/// Base norm on one layer.
#[derive(Clone, Debug, PartialEq)]
pub enum LayerNorm {
    Euclidean,
    Sup,
    /// `l^p` with rational `p >= 1`.
    Lp(Rational),
    /// `max_k w_k |v_k|` with positive weights.
    WeightedSup(Vec<f64>),
    /// `sqrt(v^T G v)` with `G` symmetric positive definite (row-major).
    Quadratic(Vec<f64>),
}

impl LayerNorm {
    pub fn lp(p: Rational) -> Result<Self> {
        if p < rat(1, 1) {
            return Err(Error::Usage(format!("l^p needs p >= 1, got {p}")));
        }
        Ok(LayerNorm::Lp(p))
    }

    pub fn eval(&self, v: &[f64]) -> f64 {
        match self {
            LayerNorm::Euclidean => v.iter().map(|a| a * a).sum::<f64>().sqrt(),
            LayerNorm::Sup => v.iter().fold(0.0, |m, a| m.max(a.abs())),
            LayerNorm::Lp(p) => {
                let p = p.to_f64().unwrap();
                if p == 1.0 {
                    v.iter().map(|a| a.abs()).sum()
                } else if p == 2.0 {
                    v.iter().map(|a| a * a).sum::<f64>().sqrt()
                } else {
                    let m = v.iter().fold(0.0f64, |m, a| m.max(a.abs()));
                    if m == 0.0 {
                        return 0.0;
                    }
                    m * v.iter().map(|a| (a.abs() / m).powf(p)).sum::<f64>().powf(1.0 / p)
                }
            }
            LayerNorm::WeightedSup(w) => v.iter().zip(w).fold(0.0, |m, (a, w)| m.max(w * a.abs())),
            LayerNorm::Quadratic(g) => {
                let n = v.len();
                let mut s = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        s += v[i] * g[i * n + j] * v[j];
                    }
                }
                s.max(0.0).sqrt()
            }
        }
    }

    /// A constant `kappa` with `|v_k| <= kappa * |v|` for every coordinate.
    pub fn coord_bound(&self, dim: usize) -> f64 {
        match self {
            LayerNorm::Euclidean | LayerNorm::Sup | LayerNorm::Lp(_) => 1.0,
            LayerNorm::WeightedSup(w) => w.iter().fold(0.0f64, |m, w| m.max(1.0 / w)),
            LayerNorm::Quadratic(g) => {
                let m = DMatrix::from_row_slice(dim, dim, g);
                let inv = m.try_inverse().expect("Gram matrix is invertible");
                (0..dim).fold(0.0f64, |acc, k| acc.max(inv[(k, k)].sqrt()))
            }
        }
    }

    /// `(|v|^k, k)` computed exactly, for norms where some integer power is
    /// rational in the coordinates.
    pub fn exact_power(&self, v: &[Rational]) -> Option<(Rational, u32)> {
        match self {
            LayerNorm::Euclidean => Some((v.iter().map(|a| a * a).fold(Rational::zero(), |s, t| s + t), 2)),
            LayerNorm::Sup => Some((v.iter().map(|a| a.abs()).fold(Rational::zero(), |m, a| if a > m { a } else { m }), 1)),
            LayerNorm::Lp(p) if p.is_integer() => {
                let k = p.to_integer().to_u32()?;
                Some((v.iter().map(|a| num_traits::pow(a.abs(), k as usize)).fold(Rational::zero(), |s, t| s + t), k))
            }
            _ => None,
        }
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        match self {
            LayerNorm::WeightedSup(w) if w.len() != dim || w.iter().any(|w| !(*w > 0.0)) => {
                Err(Error::Usage(format!("weighted sup norm needs {dim} positive weights")))
            }
            LayerNorm::Quadratic(g) => {
                if g.len() != dim * dim {
                    return Err(Error::Usage(format!("quadratic norm needs a {dim}x{dim} Gram matrix")));
                }
                let m = DMatrix::from_row_slice(dim, dim, g);
                if (&m - m.transpose()).amax() > 1e-12 || m.clone().cholesky().is_none() {
                    return Err(Error::Usage("Gram matrix must be symmetric positive definite".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> String {
        match self {
            LayerNorm::Euclidean => "euclidean".into(),
            LayerNorm::Sup => "sup".into(),
            LayerNorm::Lp(p) => format!("l{p}"),
            LayerNorm::WeightedSup(_) => "weighted-sup".into(),
            LayerNorm::Quadratic(_) => "quadratic".into(),
        }
    }
}

/// Record of the calibration search behind a norm's `sigma` vector.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCertificate {
    pub method: String,
    pub seed: u64,
    pub rounds: usize,
    pub samples: usize,
    pub restarts: usize,
    pub ascent_steps: usize,
    pub initial_sigmas: Vec<f64>,
    /// Largest `(||xy|| - ||x|| - ||y||) / (||x|| + ||y||)` seen in the final round.
    pub max_relative_defect: f64,
    pub tolerance: f64,
}

#[derive(Clone, Debug)]
pub struct HomogeneousNorm {
    gradation: Gradation,
    layers: Vec<LayerNorm>,
    sigmas: Vec<f64>,
    coord_bounds: Vec<f64>,
    pub certificate: Option<CalibrationCertificate>,
}

impl HomogeneousNorm {
    pub fn new(gradation: Gradation, layers: Vec<LayerNorm>, sigmas: Vec<f64>) -> Result<Self> {
        let step = gradation.step();
        if layers.len() != step || sigmas.len() != step {
            return Err(Error::Usage(format!(
                "norm needs {step} layer norms and sigmas, got {} and {}",
                layers.len(),
                sigmas.len()
            )));
        }
        if sigmas[0] != 1.0 {
            return Err(Error::Usage(format!("sigma_1 must be 1, got {}", sigmas[0])));
        }
        if let Some(s) = sigmas.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::Usage(format!("sigmas must be positive and finite, got {s}")));
        }
        for (i, l) in layers.iter().enumerate() {
            l.check_dim(gradation.layer_dim(i + 1))?;
        }
        let coord_bounds = layers.iter().enumerate().map(|(i, l)| l.coord_bound(gradation.layer_dim(i + 1))).collect();
        Ok(HomogeneousNorm { gradation, layers, sigmas, coord_bounds, certificate: None })
    }

    /// Same base norm on every layer, unit sigmas.
    pub fn uniform(gradation: Gradation, layer: LayerNorm) -> Result<Self> {
        let step = gradation.step();
        Self::new(gradation, vec![layer; step], vec![1.0; step])
    }

    pub fn gradation(&self) -> &Gradation {
        &self.gradation
    }

    pub fn layers(&self) -> &[LayerNorm] {
        &self.layers
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn with_sigmas(&self, sigmas: Vec<f64>) -> Result<Self> {
        Self::new(self.gradation.clone(), self.layers.clone(), sigmas)
    }

    pub fn layer_norm(&self, layer: usize, x: &[f64]) -> f64 {
        self.layers[layer - 1].eval(&x[self.gradation.layer_range(layer)])
    }

    /// The terms `sigma_i |x_i|^(1/i)` whose maximum is the norm.
    pub fn terms(&self, x: &[f64]) -> Vec<f64> {
        (1..=self.gradation.step())
            .map(|i| {
                let a = self.layer_norm(i, x);
                self.sigmas[i - 1] * if i == 1 { a } else { a.powf(1.0 / i as f64) }
            })
            .collect()
    }

    pub fn norm(&self, x: &[f64]) -> f64 {
        let mut m = 0.0f64;
        for i in 1..=self.gradation.step() {
            let a = self.layer_norm(i, x);
            let t = self.sigmas[i - 1]
                * match i {
                    1 => a,
                    2 => a.sqrt(),
                    3 => a.cbrt(),
                    _ => a.powf(1.0 / i as f64),
                };
            m = m.max(t);
        }
        m
    }

    /// Half-widths of the coordinate box containing the ball of radius `r`
    /// about the identity: `|x_k| <= kappa_i (r / sigma_i)^i`.
    pub fn coord_box(&self, r: f64) -> Vec<f64> {
        (0..self.gradation.total_dim())
            .map(|k| {
                let i = self.gradation.degree(k);
                self.coord_bounds[i - 1] * (r / self.sigmas[i - 1]).powi(i as i32)
            })
            .collect()
    }

    pub fn describe(&self) -> String {
        let layers: Vec<String> = self.layers.iter().map(LayerNorm::label).collect();
        format!("layers [{}], sigmas {:?}", layers.join(", "), self.sigmas)
    }
}

/// Exact closed-form product used as an independent oracle.
pub type ProductOracle = fn(&[Rational], &[Rational]) -> Vec<Rational>;

/// A group with its homogeneous norm: the unit most other modules work with.
#[derive(Clone)]
pub struct GroupBundle {
    pub name: String,
    pub group: Arc<Group>,
    pub norm: HomogeneousNorm,
    pub oracle: Option<ProductOracle>,
    /// Provenance notes (truncation length, bracket bounds, ...).
    pub notes: Vec<String>,
}

impl fmt::Debug for GroupBundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GroupBundle")
            .field("name", &self.name)
            .field("layers", &self.gradation().layer_dims())
            .field("norm", &self.norm.describe())
            .finish()
    }
}

impl GroupBundle {
    pub fn new(name: impl Into<String>, group: Group, norm: HomogeneousNorm) -> Result<Self> {
        if norm.gradation() != group.gradation() {
            return Err(Error::Usage("norm and group gradations differ".into()));
        }
        Ok(GroupBundle { name: name.into(), group: Arc::new(group), norm, oracle: None, notes: Vec::new() })
    }

    pub fn with_norm(&self, norm: HomogeneousNorm) -> Result<Self> {
        if norm.gradation() != self.gradation() {
            return Err(Error::Usage("norm and group gradations differ".into()));
        }
        Ok(GroupBundle { norm, ..self.clone() })
    }

    pub fn gradation(&self) -> &Gradation {
        self.group.gradation()
    }

    pub fn dim(&self) -> usize {
        self.group.dim()
    }

    pub fn homogeneous_dim(&self) -> usize {
        self.gradation().homogeneous_dim()
    }

    pub fn is_abelian(&self) -> bool {
        self.group.is_abelian()
    }

    pub fn mul(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        self.group.mul_f64(x, y)
    }

    pub fn inv(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| -v).collect()
    }

    /// `delta_r`; negative `r` is allowed and composes with `delta_{-1}`.
    pub fn dilate(&self, r: f64, x: &[f64]) -> Vec<f64> {
        dilate_f64(self.gradation(), r, x)
    }

    pub fn norm(&self, x: &[f64]) -> f64 {
        self.norm.norm(x)
    }

    pub fn dist(&self, x: &[f64], y: &[f64]) -> f64 {
        self.norm.norm(&self.group.left_quotient_f64(x, y))
    }

    pub fn left_quotient(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        self.group.left_quotient_f64(x, y)
    }
}

fn random_layer_unit<R: Rng>(rng: &mut R, hn: &HomogeneousNorm, layer: usize) -> Vec<f64> {
    let d = hn.gradation().layer_dim(layer);
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let a = hn.layers[layer - 1].eval(&v);
        if a > 1e-12 {
            return v.into_iter().map(|c| c / a).collect();
        }
    }
}

/// Random element with term profile drawn to stress the triangle inequality:
/// each layer is either absent or has term `t_i` uniform in `[0, 1]`.
fn random_probe<R: Rng>(rng: &mut R, hn: &HomogeneousNorm) -> Vec<f64> {
    let g = hn.gradation();
    let mut x = vec![0.0; g.total_dim()];
    for i in 1..=g.step() {
        let keep = i == 1 || rng.random_bool(0.7);
        if !keep {
            continue;
        }
        let t: f64 = rng.random();
        let mag = (t / hn.sigmas[i - 1]).powi(i as i32);
        let u = random_layer_unit(rng, hn, i);
        for (k, c) in g.layer_range(i).zip(u) {
            x[k] = mag * c;
        }
    }
    x
}

fn relative_defect(group: &Group, hn: &HomogeneousNorm, x: &[f64], y: &[f64]) -> f64 {
    let (a, b) = (hn.norm(x), hn.norm(y));
    if a + b == 0.0 {
        return 0.0;
    }
    (hn.norm(&group.mul_f64(x, y)) - a - b) / (a + b)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBudget {
    pub pairs: usize,
    pub restarts: usize,
    pub ascent_steps: usize,
    pub max_rounds: usize,
    pub seed: u64,
}

impl Default for CalibrationBudget {
    fn default() -> Self {
        CalibrationBudget { pairs: 100_000, restarts: 10_000, ascent_steps: 40, max_rounds: 60, seed: 0 }
    }
}

/// Outcome of a defect search with fixed sigmas.
#[derive(Clone, Debug)]
pub struct DefectSearch {
    pub max_relative_defect: f64,
    pub witness: (Vec<f64>, Vec<f64>),
}

/// Random sampling plus local ascent on the relative triangle defect.
pub fn search_triangle_defect(group: &Group, hn: &HomogeneousNorm, budget: &CalibrationBudget, seed: u64) -> DefectSearch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = group.dim();
    let keep = budget.restarts.min(budget.pairs).max(1);
    let mut seeds: Vec<(f64, Vec<f64>, Vec<f64>)> = Vec::with_capacity(budget.pairs);
    for _ in 0..budget.pairs {
        let x = random_probe(&mut rng, hn);
        let y = random_probe(&mut rng, hn);
        let d = relative_defect(group, hn, &x, &y);
        seeds.push((d, x, y));
    }
    seeds.sort_by(|a, b| b.0.total_cmp(&a.0));
    seeds.truncate(keep);
    // Fresh restarts beyond the sampled pool are drawn at random.
    while seeds.len() < budget.restarts {
        let x = random_probe(&mut rng, hn);
        let y = random_probe(&mut rng, hn);
        let d = relative_defect(group, hn, &x, &y);
        seeds.push((d, x, y));
    }
    let mut best = (f64::NEG_INFINITY, vec![0.0; n], vec![0.0; n]);
    for (mut d, mut x, mut y) in seeds {
        let scale = hn.norm(&x).max(hn.norm(&y)).max(1e-12);
        let mut step = 0.1;
        for _ in 0..budget.ascent_steps {
            let mut x2 = x.clone();
            let mut y2 = y.clone();
            for k in 0..n {
                let deg = group.gradation().degree(k) as i32;
                let s = step * scale.powi(deg);
                x2[k] += s * rng.sample::<f64, _>(StandardNormal);
                y2[k] += s * rng.sample::<f64, _>(StandardNormal);
            }
            let d2 = relative_defect(group, hn, &x2, &y2);
            if d2 > d {
                d = d2;
                x = x2;
                y = y2;
                step *= 1.3;
            } else {
                step *= 0.7;
            }
        }
        if d > best.0 {
            best = (d, x, y);
        }
    }
    DefectSearch { max_relative_defect: best.0, witness: (best.1, best.2) }
}

/// Find sigmas with no triangle-inequality violation above [`NORM_TOL`].
///
/// Starts from `initial` (or unit sigmas); each round that finds a violation
/// shrinks the sigma of the layer that realizes `||xy||` by 0.9.
pub fn calibrate_sigma(
    group: &Group,
    layers: Vec<LayerNorm>,
    initial: Option<Vec<f64>>,
    budget: &CalibrationBudget,
) -> Result<HomogeneousNorm> {
    let g = group.gradation().clone();
    let step = g.step();
    let init = initial.unwrap_or_else(|| vec![1.0; step]);
    let mut hn = HomogeneousNorm::new(g, layers, init.clone())?;
    if step == 1 {
        hn.certificate = Some(CalibrationCertificate {
            method: "single layer: base norm".into(),
            seed: budget.seed,
            initial_sigmas: init,
            tolerance: NORM_TOL,
            ..Default::default()
        });
        return Ok(hn);
    }
    let mut last = None;
    for round in 0..budget.max_rounds.max(1) {
        let found = search_triangle_defect(group, &hn, budget, budget.seed.wrapping_add(round as u64));
        if found.max_relative_defect <= NORM_TOL {
            hn.certificate = Some(CalibrationCertificate {
                method: "random pairs + local ascent".into(),
                seed: budget.seed,
                rounds: round + 1,
                samples: budget.pairs,
                restarts: budget.restarts,
                ascent_steps: budget.ascent_steps,
                initial_sigmas: init,
                max_relative_defect: found.max_relative_defect,
                tolerance: NORM_TOL,
            });
            return Ok(hn);
        }
        let xy = group.mul_f64(&found.witness.0, &found.witness.1);
        let terms = hn.terms(&xy);
        let worst = (1..step).max_by(|&a, &b| terms[a].total_cmp(&terms[b])).unwrap();
        let mut sig = hn.sigmas.clone();
        sig[worst] *= 0.9;
        hn = hn.with_sigmas(sig)?;
        last = Some(found);
    }
    let found = last.unwrap();
    Err(Error::Calibration {
        rounds: budget.max_rounds,
        defect: found.max_relative_defect,
        witness: found.witness,
    })
}

/// Rejection sampler for the ball `{p : rho(center, p) <= radius}`.
#[derive(Clone, Debug)]
pub struct BallSample {
    pub points: Vec<Vec<f64>>,
    pub attempts: usize,
    /// Lebesgue volume of the proposal box.
    pub box_volume: f64,
}

impl BallSample {
    /// Lebesgue volume of the ball estimated from the acceptance rate.
    pub fn volume_estimate(&self) -> f64 {
        self.box_volume * self.points.len() as f64 / self.attempts as f64
    }
}

/// Points uniform for Lebesgue (= Haar) measure on the ball: sample `z` in
/// the coordinate box of the unit-identity ball, keep `||z|| <= radius`, map
/// to `center * z`.
pub fn sample_ball(bundle: &GroupBundle, center: &[f64], radius: f64, count: usize, seed: u64) -> Result<BallSample> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::Usage(format!("ball radius must be positive, got {radius}")));
    }
    bundle.gradation().check_len(center.len())?;
    let half = bundle.norm.coord_box(radius);
    let box_volume = half.iter().map(|h| 2.0 * h).product();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(count);
    let mut attempts = 0usize;
    let cap = count.saturating_mul(10_000).max(1_000_000);
    let is_origin = center.iter().all(|c| *c == 0.0);
    while points.len() < count {
        attempts += 1;
        if attempts > cap {
            return Err(Error::Budget(format!("ball sampler accepted {} of {attempts} proposals", points.len())));
        }
        let z: Vec<f64> = half.iter().map(|h| rng.random_range(-1.0..=1.0) * h).collect();
        if bundle.norm(&z) <= radius {
            points.push(if is_origin { z } else { bundle.mul(center, &z) });
        }
    }
    Ok(BallSample { points, attempts, box_volume })
}

/// How a direction mesh was built; decides the Jacobian quadrature.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeshKind {
    /// Unit-sphere directions from Haar-uniform ball samples (weight 1 each)
    /// plus zero-weight basis probes.
    Haar,
    /// Euclidean-sphere quadrature nodes pushed to the unit `||.||` sphere;
    /// weights already include the `|u|^{-n}` radial factor.
    SphereQuadrature,
}

/// Unit directions with inverse pairing and quadrature weights.
#[derive(Clone, Debug)]
pub struct DirectionMesh {
    pub directions: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    /// Index of `v^{-1}` in the mesh, when present.
    pub inverse: Vec<Option<usize>>,
    pub kind: MeshKind,
    pub homogeneous_dim: usize,
}

impl DirectionMesh {
    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    /// Directions `v` and `v^{-1}` drawn from Haar-uniform samples of `B_1`
    /// projected to the unit sphere, followed by `+-` layer-1 basis probes.
    pub fn haar(bundle: &GroupBundle, pairs: usize, seed: u64) -> Result<Self> {
        let sample = sample_ball(bundle, &vec![0.0; bundle.dim()], 1.0, pairs, seed)?;
        let mut directions = Vec::with_capacity(2 * pairs + 2 * bundle.dim());
        let mut weights = Vec::new();
        let mut inverse = Vec::new();
        for z in sample.points {
            let r = bundle.norm(&z);
            if r < 1e-12 {
                continue;
            }
            let v = bundle.dilate(1.0 / r, &z);
            let k = directions.len();
            directions.push(bundle.inv(&v));
            directions.push(v);
            weights.extend([1.0, 1.0]);
            inverse.extend([Some(k + 1), Some(k)]);
        }
        let g = bundle.gradation();
        for k in 0..g.total_dim() {
            let mut e = vec![0.0; g.total_dim()];
            e[k] = 1.0;
            let r = bundle.norm(&e);
            let v = bundle.dilate(1.0 / r, &e);
            let j = directions.len();
            directions.push(v.clone());
            directions.push(bundle.inv(&v));
            weights.extend([0.0, 0.0]);
            inverse.extend([Some(j + 1), Some(j)]);
        }
        Ok(DirectionMesh { directions, weights, inverse, kind: MeshKind::Haar, homogeneous_dim: bundle.homogeneous_dim() })
    }

    /// Quadrature on the Euclidean unit sphere of `R^n`, `n <= 3`, with
    /// nodes pushed to the unit sphere of the bundle norm.
    pub fn sphere(bundle: &GroupBundle, resolution: usize) -> Result<Self> {
        if !bundle.is_abelian() {
            return Err(Error::Usage("sphere quadrature meshes need an abelian group".into()));
        }
        let n = bundle.dim();
        let nodes = sphere_nodes(n, resolution)?;
        let mut directions = Vec::with_capacity(nodes.len());
        let mut weights = Vec::with_capacity(nodes.len());
        for (u, w) in &nodes {
            let r = bundle.norm(u);
            directions.push(u.iter().map(|c| c / r).collect());
            // Polar change of variables: s(u) = |u|_norm s(v).
            weights.push(w * r.powi(-(n as i32)));
        }
        let inverse = pair_inverses(&nodes.iter().map(|(u, _)| u.clone()).collect::<Vec<_>>());
        Ok(DirectionMesh { directions, weights, inverse, kind: MeshKind::SphereQuadrature, homogeneous_dim: n })
    }
}

fn pair_inverses(nodes: &[Vec<f64>]) -> Vec<Option<usize>> {
    nodes
        .iter()
        .map(|u| {
            nodes
                .iter()
                .position(|w| w.iter().zip(u).all(|(a, b)| (a + b).abs() < 1e-12))
        })
        .collect()
}

/// Nodes `u` on the Euclidean unit sphere of `R^n` with weights summing to
/// the sphere's area: midpoint rule in angle for `n = 2`, Gauss-Legendre in
/// `cos(theta)` times midpoint in `phi` for `n = 3`, the two points for `n = 1`.
pub fn sphere_nodes(n: usize, resolution: usize) -> Result<Vec<(Vec<f64>, f64)>> {
    let res = resolution.max(2);
    match n {
        1 => Ok(vec![(vec![1.0], 1.0), (vec![-1.0], 1.0)]),
        2 => {
            // An even node count keeps antipodal pairs in the mesh.
            let m = 2 * res;
            let w = 2.0 * std::f64::consts::PI / m as f64;
            Ok((0..m)
                .map(|k| {
                    let t = (k as f64 + 0.5) * w;
                    (vec![t.cos(), t.sin()], w)
                })
                .collect())
        }
        3 => {
            let (xs, ws) = gauss_legendre(res);
            let m = 2 * res;
            let dphi = 2.0 * std::f64::consts::PI / m as f64;
            let mut out = Vec::with_capacity(res * m);
            for (z, wz) in xs.iter().zip(&ws) {
                let rho = (1.0 - z * z).sqrt();
                for k in 0..m {
                    let p = (k as f64 + 0.5) * dphi;
                    out.push((vec![rho * p.cos(), rho * p.sin(), *z], wz * dphi));
                }
            }
            Ok(out)
        }
        _ => Err(Error::Usage(format!("sphere quadrature supports n <= 3, got {n}"))),
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` (Newton on `P_m`).
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; m];
    let mut ws = vec![0.0; m];
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        xs[i] = x;
        ws[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (xs, ws)
}

/// Values of a homogeneous seminorm on a direction mesh; `s(delta_r v) = r s(v)`.
#[derive(Clone, Debug)]
pub struct SeminormSample {
    pub mesh: DirectionMesh,
    pub values: Vec<f64>,
    pub tolerance: f64,
    /// Mesh indices where the estimate did not converge.
    pub divergent: Vec<usize>,
}

impl SeminormSample {
    pub fn new(mesh: DirectionMesh, values: Vec<f64>, tolerance: f64) -> Self {
        SeminormSample { mesh, values, tolerance, divergent: Vec::new() }
    }

    /// Evaluate a closed-form seminorm on a mesh.
    pub fn from_fn(mesh: DirectionMesh, s: impl Fn(&[f64]) -> f64) -> Self {
        let values = mesh.directions.iter().map(|v| s(v)).collect();
        SeminormSample::new(mesh, values, 0.0)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(*v))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, v| m.min(*v))
    }

    /// `max |s(v) - s(v^{-1})|` over paired directions.
    pub fn symmetry_defect(&self) -> f64 {
        self.mesh
            .inverse
            .iter()
            .enumerate()
            .filter_map(|(k, j)| j.map(|j| (self.values[k] - self.values[j]).abs()))
            .fold(0.0, f64::max)
    }

    /// Value at `delta_r v` for mesh direction `k`.
    pub fn extend(&self, k: usize, r: f64) -> f64 {
        r * self.values[k]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{BasisIndex, GradedAlgebra, StructureConstants};
    use crate::scalar::int;

    fn heis_bundle() -> GroupBundle {
        let mut sc = StructureConstants::new(Gradation::new(vec![2, 1]).unwrap());
        sc.insert_skew(BasisIndex::new(1, 1), BasisIndex::new(1, 2), vec![int(2)]).unwrap();
        let group = Group::new(GradedAlgebra::new(sc).unwrap()).unwrap();
        let hn = HomogeneousNorm::uniform(group.gradation().clone(), LayerNorm::Euclidean).unwrap();
        GroupBundle::new("heisenberg", group, hn).unwrap()
    }

    #[test]
    fn heisenberg_norm_values() {
        let b = heis_bundle();
        assert_eq!(b.norm(&[1.0, 0.0, 0.0]), 1.0);
        assert_eq!(b.norm(&[0.0, 0.0, 4.0]), 2.0);
        assert!((b.dist(&[0.0; 3], &[1.0, 1.0, 1.0]) - 2f64.sqrt()).abs() < NORM_TOL);
        assert_eq!(b.dist(&[0.3, 0.2, 0.1], &[0.3, 0.2, 0.1]), 0.0);
    }

    #[test]
    fn sigma_one_enforced() {
        let g = Gradation::new(vec![2, 1]).unwrap();
        assert!(HomogeneousNorm::new(g.clone(), vec![LayerNorm::Euclidean; 2], vec![2.0, 1.0]).is_err());
        assert!(HomogeneousNorm::new(g, vec![LayerNorm::Euclidean; 2], vec![1.0, 0.0]).is_err());
        assert!(LayerNorm::lp(rat(1, 2)).is_err());
    }

    #[test]
    fn layer_norm_values() {
        let v = [3.0, -4.0];
        assert_eq!(LayerNorm::Euclidean.eval(&v), 5.0);
        assert_eq!(LayerNorm::Sup.eval(&v), 4.0);
        assert_eq!(LayerNorm::Lp(int(1)).eval(&v), 7.0);
        assert!((LayerNorm::Lp(int(3)).eval(&v) - 91f64.cbrt()).abs() < 1e-12);
        assert_eq!(LayerNorm::WeightedSup(vec![2.0, 1.0]).eval(&v), 6.0);
        assert_eq!(LayerNorm::Quadratic(vec![1.0, 0.0, 0.0, 1.0]).eval(&v), 5.0);
        assert!((LayerNorm::Quadratic(vec![4.0, 0.0, 0.0, 1.0]).coord_bound(2) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn heisenberg_calibration_keeps_unit_sigma() {
        let b = heis_bundle();
        let budget = CalibrationBudget { pairs: 5_000, restarts: 200, ascent_steps: 30, max_rounds: 5, seed: 3 };
        let hn = calibrate_sigma(&b.group, vec![LayerNorm::Euclidean; 2], Some(vec![1.0, 1.0]), &budget).unwrap();
        assert_eq!(hn.sigmas(), &[1.0, 1.0]);
        assert!(hn.certificate.as_ref().unwrap().max_relative_defect <= NORM_TOL);
    }

    #[test]
    fn oversized_sigma_is_shrunk() {
        let b = heis_bundle();
        let budget = CalibrationBudget { pairs: 5_000, restarts: 200, ascent_steps: 30, max_rounds: 40, seed: 5 };
        let hn = calibrate_sigma(&b.group, vec![LayerNorm::Euclidean; 2], Some(vec![1.0, 3.0]), &budget).unwrap();
        assert!(hn.sigmas()[1] < 3.0);
        let check = search_triangle_defect(&b.group, &hn, &budget, 99);
        assert!(check.max_relative_defect <= NORM_TOL);
    }

    #[test]
    fn ball_points_are_inside() {
        let b = heis_bundle();
        let c = [0.5, -0.2, 0.3];
        let s = sample_ball(&b, &c, 0.7, 2000, 11).unwrap();
        assert!(s.points.iter().all(|p| b.dist(&c, p) <= 0.7 + NORM_TOL));
        assert!(sample_ball(&b, &c, 0.0, 10, 1).is_err());
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(6);
        let int: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(10)).sum();
        assert!((int - 2.0 / 11.0).abs() < 1e-13);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
    }

    #[test]
    fn sphere_weights_sum_to_area() {
        let a2: f64 = sphere_nodes(2, 16).unwrap().iter().map(|p| p.1).sum();
        assert!((a2 - 2.0 * std::f64::consts::PI).abs() < 1e-12);
        let a3: f64 = sphere_nodes(3, 12).unwrap().iter().map(|p| p.1).sum();
        assert!((a3 - 4.0 * std::f64::consts::PI).abs() < 1e-12);
    }
}
