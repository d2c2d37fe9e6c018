//! Graded nilpotent Lie algebras given by sparse structure constants.
//!
//! The basis is always the graded basis implied by the layer dimensions:
//! basis vector `(i, u)` is the `u`-th vector of layer `i` (both 1-based),
//! and flat coordinates list layer 1 first, then layer 2, and so on.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::Range;

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{Coeff, Rational, RealScalar, Scalar};

/// Layer dimensions `(n_1, ..., n_step)` of a graded algebra.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Gradation {
    dims: Vec<usize>,
    offsets: Vec<usize>,
    degrees: Vec<usize>,
}

impl Gradation {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::Structural("gradation needs at least one layer".into()));
        }
        if let Some(i) = dims.iter().position(|&d| d == 0) {
            return Err(Error::Structural(format!("layer {} has dimension 0", i + 1)));
        }
        let mut offsets = Vec::with_capacity(dims.len() + 1);
        let mut degrees = Vec::new();
        let mut acc = 0;
        for (i, &d) in dims.iter().enumerate() {
            offsets.push(acc);
            acc += d;
            degrees.extend(std::iter::repeat_n(i + 1, d));
        }
        offsets.push(acc);
        Ok(Gradation { dims, offsets, degrees })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn step(&self) -> usize {
        self.dims.len()
    }

    pub fn total_dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    /// `Q = sum_i i * n_i`.
    pub fn homogeneous_dim(&self) -> usize {
        self.dims.iter().enumerate().map(|(i, d)| (i + 1) * d).sum()
    }

    pub fn layer_dim(&self, layer: usize) -> usize {
        self.dims[layer - 1]
    }

    /// Flat coordinate range of layer `layer` (1-based).
    pub fn layer_range(&self, layer: usize) -> Range<usize> {
        self.offsets[layer - 1]..self.offsets[layer]
    }

    /// Layer (1-based) of a flat coordinate.
    pub fn degree(&self, flat: usize) -> usize {
        self.degrees[flat]
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn flat(&self, b: BasisIndex) -> Result<usize> {
        if b.layer == 0 || b.layer > self.step() || b.index == 0 || b.index > self.dims[b.layer - 1] {
            return Err(Error::Structural(format!(
                "basis index {b} out of range for layers {:?}",
                self.dims
            )));
        }
        Ok(self.offsets[b.layer - 1] + b.index - 1)
    }

    pub fn basis_index(&self, flat: usize) -> BasisIndex {
        let layer = self.degrees[flat];
        BasisIndex { layer, index: flat - self.offsets[layer - 1] + 1 }
    }

    pub fn check_len(&self, len: usize) -> Result<()> {
        if len != self.total_dim() {
            return Err(Error::Usage(format!(
                "element has {len} coordinates, gradation {:?} needs {}",
                self.dims,
                self.total_dim()
            )));
        }
        Ok(())
    }
}

/// Basis vector `(layer, index)`, both 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BasisIndex {
    pub layer: usize,
    pub index: usize,
}

impl BasisIndex {
    pub fn new(layer: usize, index: usize) -> Self {
        BasisIndex { layer, index }
    }
}

impl fmt::Display for BasisIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.layer, self.index)
    }
}

/// Sparse structure constants: `[(i,u),(j,v)] = sum_r c_r e_{(i+j, r)}`.
///
/// Entries are stored exactly as given; nothing (not even the skew partner)
/// is filled in implicitly. Use [`insert_skew`](Self::insert_skew) to add a
/// relation together with its partner.
#[derive(Clone, Debug, PartialEq)]
pub struct StructureConstants {
    gradation: Gradation,
    entries: BTreeMap<(BasisIndex, BasisIndex), Vec<Rational>>,
}

impl StructureConstants {
    pub fn new(gradation: Gradation) -> Self {
        StructureConstants { gradation, entries: BTreeMap::new() }
    }

    pub fn gradation(&self) -> &Gradation {
        &self.gradation
    }

    /// Store `[a, b]`. The coefficient vector is over the basis of layer
    /// `a.layer + b.layer`; when that exceeds the step any length is accepted
    /// and nonzero entries are reported later as gradation violations.
    pub fn insert(&mut self, a: BasisIndex, b: BasisIndex, coeffs: Vec<Rational>) -> Result<()> {
        self.gradation.flat(a)?;
        self.gradation.flat(b)?;
        let target = a.layer + b.layer;
        if target <= self.gradation.step() && coeffs.len() != self.gradation.layer_dim(target) {
            return Err(Error::Structural(format!(
                "bracket {a},{b} needs {} coefficients for layer {target}, got {}",
                self.gradation.layer_dim(target),
                coeffs.len()
            )));
        }
        self.entries.insert((a, b), coeffs);
        Ok(())
    }

    /// Store `[a, b] = c` and `[b, a] = -c`.
    pub fn insert_skew(&mut self, a: BasisIndex, b: BasisIndex, coeffs: Vec<Rational>) -> Result<()> {
        let neg = coeffs.iter().map(|q| -q.clone()).collect();
        self.insert(a, b, coeffs)?;
        self.insert(b, a, neg)
    }

    pub fn get(&self, a: BasisIndex, b: BasisIndex) -> Option<&[Rational]> {
        self.entries.get(&(a, b)).map(|v| v.as_slice())
    }

    pub fn entries(&self) -> impl Iterator<Item = (&(BasisIndex, BasisIndex), &Vec<Rational>)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Flat sparse form `(a, b) -> [(c, coeff)]` with zero coefficients
    /// dropped; entries beyond the step are dropped too.
    fn flat_terms(&self) -> BTreeMap<(usize, usize), Vec<(usize, Rational)>> {
        let g = &self.gradation;
        let mut out = BTreeMap::new();
        for (&(a, b), coeffs) in &self.entries {
            let target = a.layer + b.layer;
            if target > g.step() {
                continue;
            }
            let base = g.layer_range(target).start;
            let terms: Vec<(usize, Rational)> = coeffs
                .iter()
                .enumerate()
                .filter(|(_, q)| !q.is_zero())
                .map(|(r, q)| (base + r, q.clone()))
                .collect();
            if !terms.is_empty() {
                out.insert((g.flat(a).unwrap(), g.flat(b).unwrap()), terms);
            }
        }
        out
    }
}

/// A violated Lie-algebra identity with its witnessing basis vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Skew { a: BasisIndex, b: BasisIndex },
    Jacobi { a: BasisIndex, b: BasisIndex, c: BasisIndex },
    Gradation { a: BasisIndex, b: BasisIndex },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Skew { a, b } => write!(f, "skew-symmetry fails on {a},{b}"),
            Violation::Jacobi { a, b, c } => write!(f, "Jacobi identity fails on {a},{b},{c}"),
            Violation::Gradation { a, b } => write!(f, "bracket {a},{b} leaves the gradation"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub pairs_checked: usize,
    pub triples_checked: usize,
}

impl ValidationReport {
    pub fn passes(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.passes() {
            return write!(f, "pass ({} pairs, {} triples)", self.pairs_checked, self.triples_checked);
        }
        write!(f, "{} violation(s)", self.violations.len())?;
        for v in self.violations.iter().take(8) {
            write!(f, "; {v}")?;
        }
        Ok(())
    }
}

/// Check skew-symmetry, the gradation rule and the Jacobi identity exactly.
///
/// Jacobi is checked on every basis triple `a < b < c` when the constants are
/// skew (the Jacobiator is then alternating), and on every ordered triple
/// otherwise.
pub fn validate_algebra(sc: &StructureConstants) -> Result<ValidationReport> {
    let g = &sc.gradation;
    let mut report = ValidationReport::default();

    for (&(a, b), coeffs) in &sc.entries {
        g.flat(a)?;
        g.flat(b)?;
        let target = a.layer + b.layer;
        if target > g.step() {
            if coeffs.iter().any(|q| !q.is_zero()) {
                report.violations.push(Violation::Gradation { a, b });
            }
        } else if coeffs.len() != g.layer_dim(target) {
            return Err(Error::Structural(format!("bracket {a},{b} has wrong coefficient length")));
        }
    }

    let terms = sc.flat_terms();
    let n = g.total_dim();
    let mut skew_ok = true;
    for a in 0..n {
        for b in a..n {
            report.pairs_checked += 1;
            let ab = terms.get(&(a, b));
            let ba = terms.get(&(b, a));
            let consistent = match (ab, ba) {
                (None, None) => true,
                (Some(x), Some(y)) if a != b => {
                    x.len() == y.len() && x.iter().zip(y).all(|((c1, q1), (c2, q2))| c1 == c2 && *q1 == -q2.clone())
                }
                _ => false,
            };
            if !consistent {
                skew_ok = false;
                report.violations.push(Violation::Skew { a: g.basis_index(a), b: g.basis_index(b) });
            }
        }
    }

    let bracket_basis_sparse = |a: usize, w: &BTreeMap<usize, Rational>| {
        let mut out: BTreeMap<usize, Rational> = BTreeMap::new();
        for (&c, q) in w {
            if let Some(t) = terms.get(&(a, c)) {
                for (r, coef) in t {
                    *out.entry(*r).or_insert_with(Rational::zero) += coef * q;
                }
            }
        }
        out
    };
    let basis_bracket = |a: usize, b: usize| -> BTreeMap<usize, Rational> {
        terms.get(&(a, b)).map(|t| t.iter().cloned().collect()).unwrap_or_default()
    };
    // J(a,b,c) = [a,[b,c]] + [b,[c,a]] + [c,[a,b]]
    let jacobi = |a: usize, b: usize, c: usize| {
        let mut sum: BTreeMap<usize, Rational> = BTreeMap::new();
        for (x, y, z) in [(a, b, c), (b, c, a), (c, a, b)] {
            let inner = basis_bracket(y, z);
            for (k, q) in bracket_basis_sparse(x, &inner) {
                *sum.entry(k).or_insert_with(Rational::zero) += q;
            }
        }
        sum.values().any(|q| !q.is_zero())
    };

    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                if skew_ok && !(a < b && b < c) {
                    continue;
                }
                // Jacobiator of three layer-1+ vectors lands in layer deg(a)+deg(b)+deg(c).
                if g.degree(a) + g.degree(b) + g.degree(c) > g.step() {
                    continue;
                }
                report.triples_checked += 1;
                if jacobi(a, b, c) {
                    report.violations.push(Violation::Jacobi {
                        a: g.basis_index(a),
                        b: g.basis_index(b),
                        c: g.basis_index(c),
                    });
                }
            }
        }
    }
    Ok(report)
}

/// An element of the algebra, equivalently of the group in exponential
/// coordinates. The scalar type is the backend tag.
#[derive(Clone, Debug, PartialEq)]
pub struct Element<S> {
    coords: Vec<S>,
}

impl<S: Scalar> Element<S> {
    pub fn new(coords: Vec<S>) -> Self {
        Element { coords }
    }

    pub fn zero(dim: usize) -> Self {
        Element { coords: vec![S::zero(); dim] }
    }

    pub fn basis(dim: usize, flat: usize) -> Self {
        let mut e = Self::zero(dim);
        e.coords[flat] = S::one();
        e
    }

    pub fn coords(&self) -> &[S] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<S> {
        self.coords
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.coords.iter().all(|c| c.is_zero())
    }

    pub fn neg(&self) -> Self {
        Element { coords: self.coords.iter().map(|c| -c.clone()).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        Element { coords: self.coords.iter().zip(&other.coords).map(|(a, b)| a.clone() + b.clone()).collect() }
    }

    pub fn scale(&self, s: &S) -> Self {
        Element { coords: self.coords.iter().map(|c| c.clone() * s.clone()).collect() }
    }
}

impl<S: RealScalar> Element<S> {
    pub fn to_f64(&self) -> Element<f64> {
        Element { coords: self.coords.iter().map(RealScalar::as_f64).collect() }
    }
}

impl<S> std::ops::Index<usize> for Element<S> {
    type Output = S;
    fn index(&self, i: usize) -> &S {
        &self.coords[i]
    }
}

impl<S> From<Vec<S>> for Element<S> {
    fn from(coords: Vec<S>) -> Self {
        Element { coords }
    }
}

#[derive(Clone, Debug)]
struct BracketTerm {
    a: usize,
    b: usize,
    out: Vec<(usize, Coeff)>,
}

/// A validated graded nilpotent Lie algebra.
#[derive(Clone, Debug)]
pub struct GradedAlgebra {
    sc: StructureConstants,
    terms: Vec<BracketTerm>,
    lookup: HashMap<(usize, usize), usize>,
}

impl GradedAlgebra {
    /// Validate and wrap; fails with the full report if any identity is violated.
    pub fn new(sc: StructureConstants) -> Result<Self> {
        let report = validate_algebra(&sc)?;
        if !report.passes() {
            return Err(Error::Validation(report));
        }
        let terms: Vec<BracketTerm> = sc
            .flat_terms()
            .into_iter()
            .map(|((a, b), out)| BracketTerm { a, b, out: out.into_iter().map(|(c, q)| (c, Coeff::new(q))).collect() })
            .collect();
        let lookup = terms.iter().enumerate().map(|(k, t)| ((t.a, t.b), k)).collect();
        Ok(GradedAlgebra { sc, terms, lookup })
    }

    pub fn structure_constants(&self) -> &StructureConstants {
        &self.sc
    }

    pub fn gradation(&self) -> &Gradation {
        &self.sc.gradation
    }

    pub fn dim(&self) -> usize {
        self.gradation().total_dim()
    }

    pub fn is_abelian(&self) -> bool {
        self.terms.is_empty()
    }

    /// Nonzero sparse terms `(a, b, [(c, coeff)])` of `[e_a, e_b]`.
    pub fn sparse_terms(&self) -> impl Iterator<Item = (usize, usize, &[(usize, Coeff)])> {
        self.terms.iter().map(|t| (t.a, t.b, t.out.as_slice()))
    }

    pub fn basis_bracket(&self, a: usize, b: usize) -> Option<&[(usize, Coeff)]> {
        self.lookup.get(&(a, b)).map(|&k| self.terms[k].out.as_slice())
    }

    /// Unchecked bilinear expansion into `out` (which is overwritten).
    pub(crate) fn bracket_into<S: Scalar>(&self, x: &[S], y: &[S], out: &mut [S]) {
        for o in out.iter_mut() {
            *o = S::zero();
        }
        for t in &self.terms {
            let xa = &x[t.a];
            if xa.is_zero() {
                continue;
            }
            let yb = &y[t.b];
            if yb.is_zero() {
                continue;
            }
            let xy = xa.clone() * yb.clone();
            for (c, q) in &t.out {
                out[*c] = out[*c].clone() + S::from_coeff(q) * xy.clone();
            }
        }
    }

    pub(crate) fn bracket_raw<S: Scalar>(&self, x: &[S], y: &[S]) -> Vec<S> {
        let mut out = vec![S::zero(); x.len()];
        self.bracket_into(x, y, &mut out);
        out
    }

    pub fn bracket<S: Scalar>(&self, x: &Element<S>, y: &Element<S>) -> Result<Element<S>> {
        self.gradation().check_len(x.len())?;
        self.gradation().check_len(y.len())?;
        Ok(Element::new(self.bracket_raw(x.coords(), y.coords())))
    }

    /// Left-nested bracket `[...[[w1, w2], w3]..., wk]`; a single element is
    /// returned unchanged.
    pub fn nested_bracket<S: Scalar>(&self, word: &[Element<S>]) -> Result<Element<S>> {
        let (first, rest) = word
            .split_first()
            .ok_or_else(|| Error::Usage("nested bracket of an empty word".into()))?;
        for w in word {
            self.gradation().check_len(w.len())?;
        }
        let mut acc = first.coords().to_vec();
        for w in rest {
            if acc.iter().all(|c| c.is_zero()) {
                break;
            }
            acc = self.bracket_raw(&acc, w.coords());
        }
        Ok(Element::new(acc))
    }

    /// Canonical projection onto layer `j` (1-based).
    pub fn project_layer<S: Scalar>(&self, x: &Element<S>, j: usize) -> Result<Element<S>> {
        project_layer(self.gradation(), x, j)
    }
}

pub fn project_layer<S: Scalar>(g: &Gradation, x: &Element<S>, j: usize) -> Result<Element<S>> {
    g.check_len(x.len())?;
    if j == 0 || j > g.step() {
        return Err(Error::Usage(format!("layer {j} out of range 1..={}", g.step())));
    }
    let range = g.layer_range(j);
    let coords = x
        .coords()
        .iter()
        .enumerate()
        .map(|(k, c)| if range.contains(&k) { c.clone() } else { S::zero() })
        .collect();
    Ok(Element::new(coords))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{int, rat};

    fn heisenberg_sc() -> StructureConstants {
        let mut sc = StructureConstants::new(Gradation::new(vec![2, 1]).unwrap());
        sc.insert_skew(BasisIndex::new(1, 1), BasisIndex::new(1, 2), vec![int(2)]).unwrap();
        sc
    }

    fn engel_sc(with_partner: bool) -> StructureConstants {
        let mut sc = StructureConstants::new(Gradation::new(vec![2, 1, 1]).unwrap());
        let (e11, e12, e3) = (BasisIndex::new(1, 1), BasisIndex::new(1, 2), BasisIndex::new(2, 1));
        if with_partner {
            sc.insert_skew(e11, e12, vec![int(1)]).unwrap();
        } else {
            sc.insert(e11, e12, vec![int(1)]).unwrap();
        }
        sc.insert_skew(e11, e3, vec![int(1)]).unwrap();
        sc
    }

    fn q(v: &[i64]) -> Element<Rational> {
        Element::new(v.iter().map(|&x| int(x)).collect())
    }

    #[test]
    fn gradation_counts() {
        let g = Gradation::new(vec![2, 1]).unwrap();
        assert_eq!(g.total_dim(), 3);
        assert_eq!(g.homogeneous_dim(), 4);
        assert_eq!(g.step(), 2);
        assert_eq!(Gradation::new(vec![2, 1, 1]).unwrap().homogeneous_dim(), 7);
        assert!(Gradation::new(vec![]).is_err());
        assert!(Gradation::new(vec![2, 0]).is_err());
        assert_eq!(g.basis_index(2), BasisIndex::new(2, 1));
    }

    #[test]
    fn heisenberg_validates() {
        let report = validate_algebra(&heisenberg_sc()).unwrap();
        assert!(report.passes(), "{report}");
    }

    #[test]
    fn abelian_validates() {
        let sc = StructureConstants::new(Gradation::new(vec![3]).unwrap());
        assert!(validate_algebra(&sc).unwrap().passes());
    }

    #[test]
    fn missing_skew_partner_is_reported() {
        let report = validate_algebra(&engel_sc(false)).unwrap();
        assert!(!report.passes());
        assert!(report
            .violations
            .contains(&Violation::Skew { a: BasisIndex::new(1, 1), b: BasisIndex::new(1, 2) }));
    }

    #[test]
    fn out_of_range_index_is_structural() {
        let mut sc = StructureConstants::new(Gradation::new(vec![2, 1]).unwrap());
        let err = sc.insert(BasisIndex::new(1, 3), BasisIndex::new(1, 1), vec![int(1)]);
        assert!(matches!(err, Err(Error::Structural(_))));
        let err = sc.insert(BasisIndex::new(1, 1), BasisIndex::new(1, 2), vec![int(1), int(2)]);
        assert!(matches!(err, Err(Error::Structural(_))));
    }

    #[test]
    fn gradation_violation_is_reported() {
        let mut sc = StructureConstants::new(Gradation::new(vec![2, 1]).unwrap());
        sc.insert_skew(BasisIndex::new(1, 1), BasisIndex::new(2, 1), vec![int(1)]).unwrap();
        let report = validate_algebra(&sc).unwrap();
        assert!(report.violations.iter().any(|v| matches!(v, Violation::Gradation { .. })));
    }

    #[test]
    fn jacobi_violation_is_reported() {
        // [e1,e2]=f, [e2,e3]=f, [e1,f]=g, [e3,f]=g:
        // J(e1,e2,e3) = [e1,[e2,e3]] + [e2,[e3,e1]] + [e3,[e1,e2]] = g + 0 + g.
        let mut sc = StructureConstants::new(Gradation::new(vec![3, 1, 1]).unwrap());
        let e = |k| BasisIndex::new(1, k);
        let f = BasisIndex::new(2, 1);
        sc.insert_skew(e(1), e(2), vec![int(1)]).unwrap();
        sc.insert_skew(e(2), e(3), vec![int(1)]).unwrap();
        sc.insert_skew(e(1), f, vec![int(1)]).unwrap();
        sc.insert_skew(e(3), f, vec![int(1)]).unwrap();
        let report = validate_algebra(&sc).unwrap();
        assert!(report.violations.iter().any(|v| matches!(v, Violation::Jacobi { .. })), "{report}");
        assert!(matches!(GradedAlgebra::new(sc), Err(Error::Validation(_))));
    }

    #[test]
    fn brackets_match_relations() {
        let h = GradedAlgebra::new(heisenberg_sc()).unwrap();
        assert_eq!(h.bracket(&q(&[1, 0, 0]), &q(&[0, 1, 0])).unwrap(), q(&[0, 0, 2]));
        let e = GradedAlgebra::new(engel_sc(true)).unwrap();
        assert_eq!(e.bracket(&q(&[1, 0, 0, 0]), &q(&[0, 0, 1, 0])).unwrap(), q(&[0, 0, 0, 1]));
    }

    #[test]
    fn nested_words() {
        let h = GradedAlgebra::new(heisenberg_sc()).unwrap();
        let (e1, e2) = (q(&[1, 0, 0]), q(&[0, 1, 0]));
        assert!(h.nested_bracket(&[e1.clone(), e1.clone(), e2.clone()]).unwrap().is_zero());
        assert!(h.nested_bracket(&[e1.clone(), e2.clone(), e1.clone()]).unwrap().is_zero());
        assert_eq!(h.nested_bracket(&[e1.clone()]).unwrap(), e1);
        assert!(matches!(h.nested_bracket::<Rational>(&[]), Err(Error::Usage(_))));

        let e = GradedAlgebra::new(engel_sc(true)).unwrap();
        let (e11, e12) = (q(&[1, 0, 0, 0]), q(&[0, 1, 0, 0]));
        assert_eq!(e.nested_bracket(&[e11.clone(), e12, e11]).unwrap(), q(&[0, 0, 0, -1]));
    }

    #[test]
    fn projections_sum_back() {
        let h = GradedAlgebra::new(heisenberg_sc()).unwrap();
        let x = Element::new(vec![int(1), int(2), rat(3, 7)]);
        assert_eq!(h.project_layer(&x, 1).unwrap(), Element::new(vec![int(1), int(2), int(0)]));
        let only1 = q(&[1, 2, 0]);
        assert!(h.project_layer(&only1, 2).unwrap().is_zero());
        let sum = h.project_layer(&x, 1).unwrap().add(&h.project_layer(&x, 2).unwrap());
        assert_eq!(sum, x);
        assert!(h.project_layer(&x, 3).is_err());
        assert!(h.project_layer(&x, 0).is_err());
    }

    #[test]
    fn dimension_mismatch_is_usage_error() {
        let h = GradedAlgebra::new(heisenberg_sc()).unwrap();
        assert!(matches!(h.bracket(&q(&[1, 0]), &q(&[0, 1, 0])), Err(Error::Usage(_))));
    }
}
