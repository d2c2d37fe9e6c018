//! Built-in groups: abelian spaces, the Heisenberg and Engel groups, the
//! general two-step model, finite products of Heisenberg groups, graded
//! products, and the product Lipschitz map into a Heisenberg product.

use num_traits::{Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::algebra::{BasisIndex, GradedAlgebra, Gradation, StructureConstants};
use crate::bch::Group;
use crate::differentiation::HHomomorphism;
use crate::error::{Error, Result};
use crate::maps::GroupMap;
use crate::norm::{calibrate_sigma, CalibrationBudget, GroupBundle, HomogeneousNorm, LayerNorm};
use crate::scalar::{int, rat, Rational, RealScalar};

/// Frozen output of `calibrate_sigma` for the Engel group with layer norms
/// (Euclidean, |.|, |.|), seed 0 and the default budget: starting from
/// (1, 1, 1) the search finds no violation and accepts with zero rounds.
/// A unit test reruns the search against these values.
pub const ENGEL_SIGMAS: [f64; 3] = [1.0, 1.0, 1.0];

/// `(xi1+eta1, xi2+eta2, xi3+eta3+xi1 eta2-xi2 eta1)`.
pub fn heisenberg_closed_form(x: &[Rational], y: &[Rational]) -> Vec<Rational> {
    vec![
        &x[0] + &y[0],
        &x[1] + &y[1],
        &x[2] + &y[2] + &x[0] * &y[1] - &x[1] * &y[0],
    ]
}

pub fn abelian(n: usize, layer: LayerNorm) -> Result<GroupBundle> {
    let g = Gradation::new(vec![n])?;
    let group = Group::new(GradedAlgebra::new(StructureConstants::new(g.clone()))?)?;
    let name = match layer {
        LayerNorm::Euclidean => format!("abelian:{n}"),
        LayerNorm::Sup => format!("abelian-sup:{n}"),
        _ => format!("abelian:{n}:{}", layer.label()),
    };
    GroupBundle::new(name, group, HomogeneousNorm::uniform(g, layer)?)
}

pub fn heisenberg_constants() -> StructureConstants {
    let mut sc = StructureConstants::new(Gradation::new(vec![2, 1]).unwrap());
    sc.insert_skew(BasisIndex::new(1, 1), BasisIndex::new(1, 2), vec![int(2)]).unwrap();
    sc
}

/// The first Heisenberg group with `||x|| = max(|(x1,x2)|, sqrt|x3|)`.
pub fn heisenberg() -> GroupBundle {
    let group = Group::new(GradedAlgebra::new(heisenberg_constants()).unwrap()).unwrap();
    let hn = HomogeneousNorm::new(group.gradation().clone(), vec![LayerNorm::Euclidean; 2], vec![1.0, 1.0]).unwrap();
    let mut b = GroupBundle::new("heisenberg", group, hn).unwrap();
    b.oracle = Some(heisenberg_closed_form);
    b
}

pub fn engel_constants() -> StructureConstants {
    let mut sc = StructureConstants::new(Gradation::new(vec![2, 1, 1]).unwrap());
    let (e11, e12, e3) = (BasisIndex::new(1, 1), BasisIndex::new(1, 2), BasisIndex::new(2, 1));
    sc.insert_skew(e11, e12, vec![int(1)]).unwrap();
    sc.insert_skew(e11, e3, vec![int(1)]).unwrap();
    sc
}

pub fn engel_layers() -> Vec<LayerNorm> {
    vec![LayerNorm::Euclidean, LayerNorm::Euclidean, LayerNorm::Euclidean]
}

/// Engel group, basis `(e11, e12, e3, e4)`.
pub fn engel() -> GroupBundle {
    let group = Group::new(GradedAlgebra::new(engel_constants()).unwrap()).unwrap();
    let hn = HomogeneousNorm::new(group.gradation().clone(), engel_layers(), ENGEL_SIGMAS.to_vec()).unwrap();
    GroupBundle::new("engel", group, hn).unwrap()
}

/// Two-step group `X + T` with bracket `[(x,t),(x',t')] = (0, beta(x,x'))`.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoStepSpec {
    pub dim_x: usize,
    pub dim_t: usize,
    /// `beta[r][a][b]`: component `r` of `beta(e_a, e_b)`.
    pub beta: Vec<Vec<Vec<Rational>>>,
    pub norm_x: LayerNorm,
    pub norm_t: LayerNorm,
}

impl TwoStepSpec {
    pub fn new(beta: Vec<Vec<Vec<Rational>>>) -> Result<Self> {
        let dim_t = beta.len();
        let dim_x = beta.first().map(|m| m.len()).unwrap_or(0);
        Ok(TwoStepSpec { dim_x, dim_t, beta, norm_x: LayerNorm::Euclidean, norm_t: LayerNorm::Euclidean })
    }

    fn check(&self) -> Result<()> {
        if self.dim_x == 0 || self.dim_t == 0 {
            return Err(Error::Structural("two-step spec needs positive layer dimensions".into()));
        }
        if self.beta.len() != self.dim_t {
            return Err(Error::Structural(format!("expected {} beta matrices, got {}", self.dim_t, self.beta.len())));
        }
        for (r, m) in self.beta.iter().enumerate() {
            if m.len() != self.dim_x || m.iter().any(|row| row.len() != self.dim_x) {
                return Err(Error::Structural(format!("beta matrix {} is not {}x{}", r + 1, self.dim_x, self.dim_x)));
            }
            for a in 0..self.dim_x {
                for b in 0..self.dim_x {
                    if m[a][b] != -m[b][a].clone() {
                        return Err(Error::Structural(format!(
                            "beta matrix {} is not skew-symmetric at ({}, {})",
                            r + 1,
                            a + 1,
                            b + 1
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn structure_constants(&self) -> Result<StructureConstants> {
        self.check()?;
        let mut sc = StructureConstants::new(Gradation::new(vec![self.dim_x, self.dim_t])?);
        for a in 0..self.dim_x {
            for b in 0..self.dim_x {
                let coeffs: Vec<Rational> = self.beta.iter().map(|m| m[a][b].clone()).collect();
                if coeffs.iter().any(|q| !q.is_zero()) {
                    sc.insert(BasisIndex::new(1, a + 1), BasisIndex::new(1, b + 1), coeffs)?;
                }
            }
        }
        Ok(sc)
    }

    fn beta_f64(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        self.beta
            .iter()
            .map(|m| {
                let mut s = 0.0;
                for a in 0..self.dim_x {
                    for b in 0..self.dim_x {
                        s += m[a][b].as_f64() * x[a] * y[b];
                    }
                }
                s
            })
            .collect()
    }

    /// Estimate of `c = sup |beta(x,y)|_T / (|x|_X |y|_X)` by random pairs
    /// and coordinate ascent. The bound is attained on a compact set, so the
    /// search converges from below.
    pub fn bracket_bound(&self, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.dim_x;
        let ratio = |x: &[f64], y: &[f64]| {
            let d = self.norm_x.eval(x) * self.norm_x.eval(y);
            if d == 0.0 {
                0.0
            } else {
                self.norm_t.eval(&self.beta_f64(x, y)) / d
            }
        };
        let mut best = 0.0f64;
        for _ in 0..64 {
            let mut x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let mut y: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let mut r = ratio(&x, &y);
            let mut step = 0.3;
            for _ in 0..400 {
                let x2: Vec<f64> = x.iter().map(|v| v + step * rng.sample::<f64, _>(StandardNormal)).collect();
                let y2: Vec<f64> = y.iter().map(|v| v + step * rng.sample::<f64, _>(StandardNormal)).collect();
                let r2 = ratio(&x2, &y2);
                if r2 > r {
                    (x, y, r) = (x2, y2, r2);
                    step *= 1.2;
                } else {
                    step *= 0.9;
                }
                // Re-normalize to keep coordinates well scaled.
                let (nx, ny) = (self.norm_x.eval(&x), self.norm_x.eval(&y));
                if nx > 0.0 && ny > 0.0 {
                    x.iter_mut().for_each(|v| *v /= nx);
                    y.iter_mut().for_each(|v| *v /= ny);
                }
                step = step.max(1e-6);
            }
            best = best.max(r);
        }
        best
    }
}

/// Two-step group with `sigma_2 = sqrt(2/c)`, `c` the estimated bracket bound.
///
/// The product term is `beta/2`, so this choice keeps a factor `sqrt 2`
/// of slack over the sharp value `2/sqrt(c)`.
pub fn two_step(name: &str, spec: &TwoStepSpec) -> Result<GroupBundle> {
    let sc = spec.structure_constants()?;
    let group = Group::new(GradedAlgebra::new(sc)?)?;
    let c = spec.bracket_bound(0);
    let sigma2 = if c > 0.0 { (2.0 / c).sqrt() } else { 1.0 };
    let hn = HomogeneousNorm::new(group.gradation().clone(), vec![spec.norm_x.clone(), spec.norm_t.clone()], vec![1.0, sigma2])?;
    let mut b = GroupBundle::new(name, group, hn)?;
    b.notes.push(format!("bracket bound c = {c:.12}"));
    b.notes.push(format!("sigma_2 = sqrt(2/c) = {sigma2:.12}"));
    Ok(b)
}

/// Random skew `beta` with small rational entries.
pub fn random_two_step_spec(dim_x: usize, dim_t: usize, seed: u64) -> TwoStepSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beta = (0..dim_t)
        .map(|_| {
            let mut m = vec![vec![Rational::zero(); dim_x]; dim_x];
            for a in 0..dim_x {
                for b in a + 1..dim_x {
                    let q = rat(rng.random_range(-4..=4), rng.random_range(1..=3));
                    m[b][a] = -q.clone();
                    m[a][b] = q;
                }
            }
            m
        })
        .collect();
    TwoStepSpec::new(beta).unwrap()
}

/// `K` copies of the Heisenberg group: coordinates `(x1 (K), x2 (K), t (K))`,
/// bracket `[x, y]_j = 2 (x1j y2j - x2j y1j)`, norms `l^2` on the first layer
/// and `l^1` on the second, `sigma_2 = 1`.
pub fn heisenberg_product(k: usize) -> Result<GroupBundle> {
    if k == 0 {
        return Err(Error::Usage("h-product needs K >= 1".into()));
    }
    let mut beta = vec![vec![vec![Rational::zero(); 2 * k]; 2 * k]; k];
    for (j, m) in beta.iter_mut().enumerate() {
        m[j][k + j] = int(2);
        m[k + j][j] = int(-2);
    }
    let spec = TwoStepSpec { dim_x: 2 * k, dim_t: k, beta, norm_x: LayerNorm::Euclidean, norm_t: LayerNorm::Lp(int(1)) };
    let group = Group::new(GradedAlgebra::new(spec.structure_constants()?)?)?;
    let hn = HomogeneousNorm::new(group.gradation().clone(), vec![LayerNorm::Euclidean, LayerNorm::Lp(int(1))], vec![1.0, 1.0])?;
    let mut b = GroupBundle::new(format!("h-product:{k}"), group, hn)?;
    b.notes.push(format!("truncation K = {k}"));
    Ok(b)
}

/// Per-layer bracket bounds of a graded product: `|pi_i [x,y]| <= C_i |x| |y|`
/// with `|x| = sum_i |x_i|_{p_i}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BracketBounds {
    pub per_layer: Vec<f64>,
    pub total: f64,
}

/// `C_i = sum_{a+b=i} sum_{u,v} |(c^r_{au,bv})_r|_{p_i}`; valid whenever
/// `p_{a+b} >= max(p_a, p_b)/2` (Hölder on each copy index).
pub fn graded_product_bounds(base: &Group, p: &[Rational]) -> BracketBounds {
    let g = base.gradation();
    let mut per_layer = vec![0.0; g.step()];
    for ((a, b), coeffs) in base.algebra().structure_constants().entries() {
        let i = a.layer + b.layer;
        if i > g.step() {
            continue;
        }
        let pi = p[i - 1].as_f64();
        let s: f64 = coeffs.iter().map(|q| q.abs().as_f64().powf(pi)).sum::<f64>().powf(1.0 / pi);
        per_layer[i - 1] += s;
    }
    let total = per_layer.iter().sum();
    BracketBounds { per_layer, total }
}

/// `K` copies of `base` with componentwise bracket and `l^{p_i}` layer norms.
///
/// Within layer `i` the coordinate of basis vector `u` in copy `k` sits at
/// offset `(u-1) K + k`. Sigmas are calibrated starting from the base ones.
pub fn graded_product(base: &GroupBundle, k: usize, p: &[Rational], budget: &CalibrationBudget) -> Result<GroupBundle> {
    let g = base.gradation();
    let step = g.step();
    if k == 0 {
        return Err(Error::Usage("graded product needs K >= 1".into()));
    }
    if p.len() != step {
        return Err(Error::Usage(format!("graded product needs {step} exponents, got {}", p.len())));
    }
    if let Some(q) = p.iter().find(|q| **q < int(1)) {
        return Err(Error::Refused(format!("exponent {q} < 1")));
    }
    for i in 1..=step {
        for j in 1..=step {
            if i + j <= step {
                let need = std::cmp::max(p[i - 1].clone(), p[j - 1].clone()) / int(2);
                if p[i + j - 1] < need {
                    return Err(Error::Refused(format!(
                        "p_{} = {} < max(p_{i}, p_{j})/2 = {need} for (i, j) = ({i}, {j})",
                        i + j,
                        p[i + j - 1]
                    )));
                }
            }
        }
    }
    let dims: Vec<usize> = g.layer_dims().iter().map(|d| d * k).collect();
    let mut sc = StructureConstants::new(Gradation::new(dims)?);
    for ((a, b), coeffs) in base.group.algebra().structure_constants().entries() {
        let target = a.layer + b.layer;
        if target > step {
            continue;
        }
        for copy in 0..k {
            let mut out = vec![Rational::zero(); g.layer_dim(target) * k];
            for (r, q) in coeffs.iter().enumerate() {
                out[r * k + copy] = q.clone();
            }
            sc.insert(
                BasisIndex::new(a.layer, (a.index - 1) * k + copy + 1),
                BasisIndex::new(b.layer, (b.index - 1) * k + copy + 1),
                out,
            )?;
        }
    }
    let group = Group::new(GradedAlgebra::new(sc)?)?;
    let layers: Vec<LayerNorm> = p
        .iter()
        .map(|q| if *q == int(2) { LayerNorm::Euclidean } else { LayerNorm::Lp(q.clone()) })
        .collect();
    let hn = calibrate_sigma(&group, layers, Some(base.norm.sigmas().to_vec()), budget)?;
    let bounds = graded_product_bounds(&base.group, p);
    let p_text: Vec<String> = p.iter().map(|q| q.to_string()).collect();
    let mut b = GroupBundle::new(format!("graded-product:{}:{k}:{}", base.name, p_text.join(",")), group, hn)?;
    b.notes.push(format!("truncation K = {k}"));
    b.notes.push(format!("bracket bounds per layer {:?}, total {}", bounds.per_layer, bounds.total));
    Ok(b)
}

/// `|x| = sum_i |x_i|` for the layer norms of `hn` (the Banach norm, not the
/// homogeneous one).
pub fn banach_norm(hn: &HomogeneousNorm, x: &[f64]) -> f64 {
    (1..=hn.gradation().step()).map(|i| hn.layer_norm(i, x)).sum()
}

/// Factors of a product map: h-homomorphisms of the Heisenberg group with
/// exactly known Lipschitz constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FactorSpec {
    Zero,
    Identity,
    /// `delta_a`, Lipschitz constant `a`.
    Dilation { a: f64 },
    /// Rotation of the first layer by `theta`; isometry.
    Rotation { theta: f64 },
    /// `(x1, x2, x3) -> (x1, 0, 0)`; Lipschitz constant 1.
    Projection,
    /// `z -> c * L(z)`, a left translate of the identity; not normalized.
    Translated { c: [f64; 3] },
}

impl FactorSpec {
    pub fn lipschitz(&self) -> f64 {
        match self {
            FactorSpec::Zero => 0.0,
            FactorSpec::Dilation { a } => *a,
            _ => 1.0,
        }
    }

    fn hom(&self, h: &GroupBundle) -> HHomomorphism {
        let blocks = match self {
            FactorSpec::Zero => vec![vec![0.0; 4], vec![0.0]],
            FactorSpec::Identity | FactorSpec::Translated { .. } => vec![vec![1.0, 0.0, 0.0, 1.0], vec![1.0]],
            FactorSpec::Dilation { a } => vec![vec![*a, 0.0, 0.0, *a], vec![a * a]],
            FactorSpec::Rotation { theta } => {
                let (s, c) = theta.sin_cos();
                vec![vec![c, -s, s, c], vec![1.0]]
            }
            FactorSpec::Projection => vec![vec![1.0, 0.0, 0.0, 0.0], vec![0.0]],
        };
        HHomomorphism::from_f64_blocks(h.clone(), h.clone(), blocks).expect("factor blocks have Heisenberg shape")
    }

    fn translation(&self) -> Option<[f64; 3]> {
        match self {
            FactorSpec::Translated { c } => Some(*c),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductMapSpec {
    pub factors: Vec<FactorSpec>,
    pub weights: Vec<f64>,
}

/// `G(x) = (delta_{r_k} f^k(x))_k`, from the Heisenberg group into
/// `h-product:K`, with declared bound `C0 = (sum_k r_k^2 L_k)^{1/2}`.
#[derive(Clone, Debug)]
pub struct ProductLipschitzMap {
    source: GroupBundle,
    target: GroupBundle,
    factors: Vec<(HHomomorphism, Option<[f64; 3]>)>,
    weights: Vec<f64>,
    c0: f64,
}

impl ProductLipschitzMap {
    pub fn truncation(&self) -> usize {
        self.weights.len()
    }

    pub fn declared_bound(&self) -> f64 {
        self.c0
    }
}

/// Build the product map. Refuses factors with `f^k(0) != 0`, and factors
/// with `L_k > 1`, for which `(sum r_k^2 L_k)^{1/2}` is not a Lipschitz bound
/// (the sharp bound has `L_k^2`).
pub fn product_lipschitz_map(spec: &ProductMapSpec) -> Result<ProductLipschitzMap> {
    let k = spec.factors.len();
    if k == 0 || spec.weights.len() != k {
        return Err(Error::Usage(format!("product map needs matching factors and weights, got {} and {}", k, spec.weights.len())));
    }
    if let Some(r) = spec.weights.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
        return Err(Error::Usage(format!("weights must be positive, got {r}")));
    }
    let h = heisenberg();
    let mut factors = Vec::with_capacity(k);
    for (idx, f) in spec.factors.iter().enumerate() {
        if let Some(c) = f.translation() {
            if c.iter().any(|v| *v != 0.0) {
                return Err(Error::Refused(format!("factor {idx} does not vanish at the base point: f(0) = {c:?}")));
            }
        }
        let lip = f.lipschitz();
        if !(0.0..=1.0).contains(&lip) {
            return Err(Error::Refused(format!(
                "factor {idx} has Lipschitz constant {lip} > 1; (sum r_k^2 L_k)^(1/2) would not bound G"
            )));
        }
        factors.push((f.hom(&h), f.translation()));
    }
    let c0 = spec.weights.iter().zip(&spec.factors).map(|(r, f)| r * r * f.lipschitz()).sum::<f64>().sqrt();
    Ok(ProductLipschitzMap { source: h, target: heisenberg_product(k)?, factors, weights: spec.weights.clone(), c0 })
}

impl GroupMap for ProductLipschitzMap {
    fn source(&self) -> &GroupBundle {
        &self.source
    }

    fn target(&self) -> &GroupBundle {
        &self.target
    }

    fn eval(&self, x: &[f64]) -> Vec<f64> {
        let k = self.weights.len();
        let mut out = vec![0.0; 3 * k];
        for (j, ((f, c), r)) in self.factors.iter().zip(&self.weights).enumerate() {
            let mut v = f.apply(x);
            if let Some(c) = c {
                v = self.source.mul(c, &v);
            }
            out[j] = r * v[0];
            out[k + j] = r * v[1];
            out[2 * k + j] = r * r * v[2];
        }
        out
    }

    fn lipschitz_bound(&self) -> Option<f64> {
        Some(self.c0)
    }

    fn describe(&self) -> String {
        format!("product map K = {}, C0 = {}", self.weights.len(), self.c0)
    }
}

/// Catalog entry by name: `heisenberg`, `engel`, `abelian:n`,
/// `abelian-sup:n`, `h-product:K`, `graded-product:<base>:K:p1,...`.
/// `two-step:<file>` and file paths are resolved by the io module.
pub fn by_name(name: &str) -> Result<GroupBundle> {
    let parse_k = |s: &str| -> Result<usize> { s.parse().map_err(|_| Error::Parse(format!("not a positive integer: {s:?}"))) };
    match name {
        "heisenberg" => return Ok(heisenberg()),
        "engel" => return Ok(engel()),
        _ => {}
    }
    if let Some(n) = name.strip_prefix("abelian:") {
        return abelian(parse_k(n)?, LayerNorm::Euclidean);
    }
    if let Some(n) = name.strip_prefix("abelian-sup:") {
        return abelian(parse_k(n)?, LayerNorm::Sup);
    }
    if let Some(k) = name.strip_prefix("h-product:") {
        return heisenberg_product(parse_k(k)?);
    }
    if let Some(rest) = name.strip_prefix("graded-product:") {
        let parts: Vec<&str> = rest.splitn(3, ':').collect();
        if parts.len() != 3 {
            return Err(Error::Parse(format!("expected graded-product:<base>:K:p1,..., got {name:?}")));
        }
        let base = by_name(parts[0])?;
        let p = crate::scalar::parse_rational_list(parts[2])?;
        return graded_product(&base, parse_k(parts[1])?, &p, &CalibrationBudget { pairs: 20_000, restarts: 500, ..Default::default() });
    }
    Err(Error::Usage(format!("unknown catalog entry {name:?}")))
}

/// Names of the built-in groups used by the test suites.
pub fn standard_names() -> Vec<&'static str> {
    vec!["abelian:3", "heisenberg", "engel", "h-product:3", "graded-product:engel:3:2,2,1"]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::validate_algebra;
    use crate::norm::search_triangle_defect;

    #[test]
    fn heisenberg_shape() {
        let h = heisenberg();
        assert_eq!(h.gradation().layer_dims(), &[2, 1]);
        assert_eq!(h.homogeneous_dim(), 4);
        assert!(validate_algebra(h.group.algebra().structure_constants()).unwrap().passes());
    }

    #[test]
    fn engel_shape() {
        let e = engel();
        assert_eq!(e.homogeneous_dim(), 7);
        assert_eq!(e.group.algebra().structure_constants().len(), 4);
    }

    #[test]
    fn two_step_reproduces_heisenberg() {
        let spec = TwoStepSpec::new(vec![vec![vec![int(0), int(2)], vec![int(-2), int(0)]]]).unwrap();
        assert_eq!(spec.structure_constants().unwrap(), heisenberg_constants());
        let b = two_step("h", &spec).unwrap();
        // c = 2 for the Euclidean norms, so sigma_2 = 1.
        assert!((b.norm.sigmas()[1] - 1.0).abs() < 1e-6, "{:?}", b.norm.sigmas());
    }

    #[test]
    fn non_skew_beta_is_refused() {
        let spec = TwoStepSpec::new(vec![vec![vec![int(0), int(1)], vec![int(1), int(0)]]]).unwrap();
        assert!(matches!(two_step("bad", &spec), Err(Error::Structural(_))));
    }

    #[test]
    fn zero_beta_is_abelian() {
        let spec = TwoStepSpec::new(vec![vec![vec![int(0); 3]; 3]]).unwrap();
        let b = two_step("flat", &spec).unwrap();
        assert!(b.is_abelian());
    }

    #[test]
    fn h_product_cross_term_bound() {
        let k = 4;
        let b = heisenberg_product(k).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..3 * k).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..3 * k).map(|_| rng.random_range(-1.0..1.0)).collect();
            let xy = b.mul(&x, &y);
            // Product cross term (x1j y2j - x2j y1j)_j in l^1.
            let cross: f64 = (0..k).map(|j| (xy[2 * k + j] - x[2 * k + j] - y[2 * k + j]).abs()).sum();
            let nx = b.norm.layer_norm(1, &x);
            let ny = b.norm.layer_norm(1, &y);
            assert!(cross <= nx * ny * (1.0 + 1e-12));
        }
    }

    #[test]
    fn graded_product_exponent_rule() {
        let e = engel();
        let budget = CalibrationBudget { pairs: 2000, restarts: 50, ascent_steps: 20, max_rounds: 30, seed: 0 };
        let ok = graded_product(&e, 3, &[int(2), int(2), int(1)], &budget).unwrap();
        assert_eq!(ok.gradation().layer_dims(), &[6, 3, 3]);
        let bad = graded_product(&e, 3, &[int(2), rat(9, 10), int(1)], &budget);
        assert!(matches!(bad, Err(Error::Refused(_))));
        let one = graded_product(&e, 1, &[int(2), int(2), int(2)], &budget).unwrap();
        assert_eq!(one.group.algebra().structure_constants(), e.group.algebra().structure_constants());
    }

    #[test]
    fn engel_bracket_bound_is_four() {
        let b = graded_product_bounds(&engel().group, &[int(2), int(2), int(2)]);
        assert_eq!(b.total, 4.0);
    }

    #[test]
    fn frozen_engel_sigmas_survive_search() {
        let e = engel();
        let budget = CalibrationBudget { pairs: 20_000, restarts: 300, ascent_steps: 40, max_rounds: 1, seed: 17 };
        let found = search_triangle_defect(&e.group, &e.norm, &budget, 17);
        assert!(found.max_relative_defect <= crate::norm::NORM_TOL, "{}", found.max_relative_defect);
    }

    #[test]
    fn product_map_refusals() {
        let bad = ProductMapSpec { factors: vec![FactorSpec::Translated { c: [1.0, 0.0, 0.0] }], weights: vec![1.0] };
        assert!(matches!(product_lipschitz_map(&bad), Err(Error::Refused(_))));
        let big = ProductMapSpec { factors: vec![FactorSpec::Dilation { a: 2.0 }], weights: vec![1.0] };
        assert!(matches!(product_lipschitz_map(&big), Err(Error::Refused(_))));
        let zero = ProductMapSpec { factors: vec![FactorSpec::Zero; 3], weights: vec![1.0; 3] };
        let g = product_lipschitz_map(&zero).unwrap();
        assert_eq!(g.declared_bound(), 0.0);
        assert!(g.eval(&[0.3, 0.1, -0.2]).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn catalog_names_resolve() {
        for n in ["heisenberg", "engel", "abelian:2", "abelian-sup:3", "h-product:2"] {
            assert!(by_name(n).is_ok(), "{n}");
        }
        assert!(by_name("nope").is_err());
    }
}
