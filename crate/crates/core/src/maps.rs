//! Maps between homogeneous groups. Everything downstream (differentiation,
//! Jacobians, the area harness) talks to maps through [`GroupMap`].

use std::fmt;
use std::sync::Arc;

use crate::differentiation::HHomomorphism;
use crate::error::{Error, Result};
use crate::norm::GroupBundle;

pub trait GroupMap: Send + Sync {
    fn source(&self) -> &GroupBundle;
    fn target(&self) -> &GroupBundle;
    fn eval(&self, x: &[f64]) -> Vec<f64>;

    /// A known (not estimated) Lipschitz constant, if any.
    fn lipschitz_bound(&self) -> Option<f64> {
        None
    }

    fn domain_contains(&self, _x: &[f64]) -> bool {
        true
    }

    fn describe(&self) -> String;
}

/// Evaluate after checking the domain.
pub fn eval_checked(f: &dyn GroupMap, x: &[f64]) -> Result<Vec<f64>> {
    f.source().gradation().check_len(x.len())?;
    if !f.domain_contains(x) {
        return Err(Error::Usage(format!("point {x:?} outside the domain of {}", f.describe())));
    }
    Ok(f.eval(x))
}

impl GroupMap for HHomomorphism {
    fn source(&self) -> &GroupBundle {
        &self.source
    }

    fn target(&self) -> &GroupBundle {
        &self.target
    }

    fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.apply(x)
    }

    fn describe(&self) -> String {
        format!("h-homomorphism {} -> {}", self.source.name, self.target.name)
    }
}

/// `x -> c`.
#[derive(Clone, Debug)]
pub struct ConstantMap {
    pub source: GroupBundle,
    pub target: GroupBundle,
    pub value: Vec<f64>,
}

impl GroupMap for ConstantMap {
    fn source(&self) -> &GroupBundle {
        &self.source
    }
    fn target(&self) -> &GroupBundle {
        &self.target
    }
    fn eval(&self, _x: &[f64]) -> Vec<f64> {
        self.value.clone()
    }
    fn lipschitz_bound(&self) -> Option<f64> {
        Some(0.0)
    }
    fn describe(&self) -> String {
        format!("constant {:?}", self.value)
    }
}

/// A closure with a label.
#[derive(Clone)]
pub struct FnMap {
    pub source: GroupBundle,
    pub target: GroupBundle,
    pub label: String,
    pub f: Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>,
    pub lipschitz: Option<f64>,
}

impl FnMap {
    pub fn new(
        source: GroupBundle,
        target: GroupBundle,
        label: impl Into<String>,
        f: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        FnMap { source, target, label: label.into(), f: Arc::new(f), lipschitz: None }
    }
}

impl fmt::Debug for FnMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FnMap({})", self.label)
    }
}

impl GroupMap for FnMap {
    fn source(&self) -> &GroupBundle {
        &self.source
    }
    fn target(&self) -> &GroupBundle {
        &self.target
    }
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        (self.f)(x)
    }
    fn lipschitz_bound(&self) -> Option<f64> {
        self.lipschitz
    }
    fn describe(&self) -> String {
        self.label.clone()
    }
}

/// `y -> c * f(y)`.
#[derive(Clone)]
pub struct LeftTranslated {
    pub inner: Arc<dyn GroupMap>,
    pub c: Vec<f64>,
}

impl GroupMap for LeftTranslated {
    fn source(&self) -> &GroupBundle {
        self.inner.source()
    }
    fn target(&self) -> &GroupBundle {
        self.inner.target()
    }
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.target().mul(&self.c, &self.inner.eval(x))
    }
    fn lipschitz_bound(&self) -> Option<f64> {
        self.inner.lipschitz_bound()
    }
    fn describe(&self) -> String {
        format!("{:?} * ({})", self.c, self.inner.describe())
    }
}

/// `y -> y * c`; not Pansu differentiable unless `c` is central.
#[derive(Clone, Debug)]
pub struct RightTranslation {
    pub bundle: GroupBundle,
    pub c: Vec<f64>,
}

impl GroupMap for RightTranslation {
    fn source(&self) -> &GroupBundle {
        &self.bundle
    }
    fn target(&self) -> &GroupBundle {
        &self.bundle
    }
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.bundle.mul(x, &self.c)
    }
    fn describe(&self) -> String {
        format!("right translation by {:?}", self.c)
    }
}

/// `f(y) = L(y) * delta_{|c^{-1} y|^2}(u)` with `u` a target element.
///
/// With `u` in a layer of degree `m`, the perturbation has size
/// `|u| |c^{-1} y|^2`, so at `x = c` the Pansu remainder ratio is exactly
/// `|u| r` and the differential is `L`.
#[derive(Clone, Debug)]
pub struct PerturbedHom {
    pub hom: HHomomorphism,
    pub center: Vec<f64>,
    pub bump: Vec<f64>,
}

impl GroupMap for PerturbedHom {
    fn source(&self) -> &GroupBundle {
        &self.hom.source
    }
    fn target(&self) -> &GroupBundle {
        &self.hom.target
    }
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        let s = &self.hom.source;
        let r = s.norm(&s.left_quotient(&self.center, x));
        let t = &self.hom.target;
        t.mul(&self.hom.apply(x), &t.dilate(r * r, &self.bump))
    }
    fn describe(&self) -> String {
        format!("h-homomorphism perturbed by {:?} around {:?}", self.bump, self.center)
    }
}

/// `a` where coordinate `coord` exceeds `threshold`, `b` elsewhere.
#[derive(Clone, Debug)]
pub struct PiecewiseHom {
    pub a: HHomomorphism,
    pub b: HHomomorphism,
    pub coord: usize,
    pub threshold: f64,
}

impl GroupMap for PiecewiseHom {
    fn source(&self) -> &GroupBundle {
        &self.a.source
    }
    fn target(&self) -> &GroupBundle {
        &self.a.target
    }
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        if x[self.coord] > self.threshold {
            self.a.apply(x)
        } else {
            self.b.apply(x)
        }
    }
    fn describe(&self) -> String {
        format!("piecewise h-homomorphism split at x[{}] = {}", self.coord, self.threshold)
    }
}

/// `(x1, x2, ...) -> (|x1|, x2, ...)` on an abelian group: two-to-one off the
/// fold, Lipschitz constant 1.
#[derive(Clone, Debug)]
pub struct FoldMap {
    pub bundle: GroupBundle,
}

impl GroupMap for FoldMap {
    fn source(&self) -> &GroupBundle {
        &self.bundle
    }
    fn target(&self) -> &GroupBundle {
        &self.bundle
    }
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        y[0] = y[0].abs();
        y
    }
    fn lipschitz_bound(&self) -> Option<f64> {
        Some(1.0)
    }
    fn describe(&self) -> String {
        "fold x1 -> |x1|".into()
    }
}

/// Projection onto the first layer, into an abelian target.
#[derive(Clone, Debug)]
pub struct LayerProjection {
    pub source: GroupBundle,
    pub target: GroupBundle,
}

impl LayerProjection {
    pub fn new(source: GroupBundle, target: GroupBundle) -> Result<Self> {
        let n1 = source.gradation().layer_dim(1);
        if !target.is_abelian() || target.dim() != n1 {
            return Err(Error::Usage(format!("projection target must be abelian of dimension {n1}")));
        }
        Ok(LayerProjection { source, target })
    }
}

impl GroupMap for LayerProjection {
    fn source(&self) -> &GroupBundle {
        &self.source
    }
    fn target(&self) -> &GroupBundle {
        &self.target
    }
    fn eval(&self, x: &[f64]) -> Vec<f64> {
        x[..self.target.dim()].to_vec()
    }
    fn lipschitz_bound(&self) -> Option<f64> {
        Some(1.0)
    }
    fn describe(&self) -> String {
        format!("layer-1 projection {} -> {}", self.source.name, self.target.name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{abelian, heisenberg};
    use crate::norm::LayerNorm;

    #[test]
    fn perturbed_hom_ratio_at_center() {
        let h = heisenberg();
        let f = PerturbedHom {
            hom: HHomomorphism::identity(&h),
            center: vec![0.3, -0.2, 0.1],
            bump: vec![0.0, 0.0, 0.25],
        };
        let z = h.dilate(0.01, &[0.6, 0.8, 0.0]);
        let fx = f.eval(&f.center);
        let q = h.left_quotient(&fx, &f.eval(&h.mul(&f.center, &z)));
        let ratio = h.dist(&q, &z) / 0.01;
        assert!((ratio - 0.5 * 0.01).abs() < 1e-9, "{ratio}");
    }

    #[test]
    fn fold_and_projection() {
        let r2 = abelian(2, LayerNorm::Euclidean).unwrap();
        let fold = FoldMap { bundle: r2.clone() };
        assert_eq!(fold.eval(&[-0.5, 0.2]), vec![0.5, 0.2]);
        let p = LayerProjection::new(heisenberg(), r2).unwrap();
        assert_eq!(p.eval(&[1.0, 2.0, 3.0]), vec![1.0, 2.0]);
        assert!(LayerProjection::new(heisenberg(), abelian(3, LayerNorm::Euclidean).unwrap()).is_err());
    }
}
