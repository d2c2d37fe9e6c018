//! The group law `xy = x + y + sum_{m>=2} P_m(x, y)` with Dynkin's polynomials.
//!
//! Bracket words are left-nested: `w1 w2 w3 ... wk` stands for
//! `[...[[w1, w2], w3]..., wk]`. Each composition `(p1,q1,...,pk,qk)` of `m`
//! contributes the word `x^p1 y^q1 ... x^pk y^qk` with coefficient
//! `(-1)^(k-1) / (k * m * prod p_i! q_i!)`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use num_bigint::BigInt;
use num_traits::Zero;

use crate::algebra::{Element, GradedAlgebra, Gradation};
use crate::error::{Error, Result};
use crate::poly::{CompiledPoly, Poly};
use crate::scalar::{factorial, Rational, RealScalar, Scalar};

/// Largest supported step.
pub const DEGREE_CAP: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Letter {
    X,
    Y,
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Letter::X => "x",
            Letter::Y => "y",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DynkinComposition {
    pub m: usize,
    pub parts: Vec<(u32, u32)>,
    pub coefficient: Rational,
}

impl DynkinComposition {
    fn new(m: usize, parts: Vec<(u32, u32)>) -> Self {
        let k = parts.len() as i64;
        let mut den = BigInt::from(k * m as i64);
        for &(p, q) in &parts {
            den *= factorial(p) * factorial(q);
        }
        let sign = if k % 2 == 1 { 1 } else { -1 };
        let coefficient = Rational::new(BigInt::from(sign), den);
        DynkinComposition { m, parts, coefficient }
    }

    pub fn word(&self) -> Vec<Letter> {
        let mut w = Vec::with_capacity(self.m);
        for &(p, q) in &self.parts {
            w.extend(std::iter::repeat_n(Letter::X, p as usize));
            w.extend(std::iter::repeat_n(Letter::Y, q as usize));
        }
        w
    }

    /// True when the left-nested word starts with `[x,x]` or `[y,y]`.
    pub fn vanishes_trivially(&self) -> bool {
        let w = self.word();
        w.len() >= 2 && w[0] == w[1]
    }

    /// `"(p1,q1)(p2,q2)..."`, the `parts` column of the CSV table.
    pub fn parts_string(&self) -> String {
        self.parts.iter().map(|(p, q)| format!("({p},{q})")).collect()
    }
}

fn check_degree(m: usize) -> Result<()> {
    if m == 0 || m > DEGREE_CAP {
        return Err(Error::Usage(format!("degree {m} outside 1..={DEGREE_CAP}")));
    }
    Ok(())
}

/// Every admissible composition of degree `m`, in lexicographic order of parts.
pub fn enumerate_compositions(m: usize) -> Result<Vec<DynkinComposition>> {
    check_degree(m)?;
    let mut out = Vec::new();
    let mut parts = Vec::new();
    fn rec(m: usize, left: u32, parts: &mut Vec<(u32, u32)>, out: &mut Vec<DynkinComposition>) {
        if left == 0 {
            out.push(DynkinComposition::new(m, parts.clone()));
            return;
        }
        for s in 1..=left {
            for p in (0..=s).rev() {
                parts.push((p, s - p));
                rec(m, left - s, parts, out);
                parts.pop();
            }
        }
    }
    rec(m, m as u32, &mut parts, &mut out);
    Ok(out)
}

/// Compositions whose word does not start with a repeated letter.
pub fn enumerate_pruned(m: usize) -> Result<Vec<DynkinComposition>> {
    Ok(enumerate_compositions(m)?.into_iter().filter(|c| m == 1 || !c.vanishes_trivially()).collect())
}

/// Coefficients of `P_m` collected per bracket word (zero totals dropped).
pub fn word_coefficients(m: usize) -> Result<BTreeMap<Vec<Letter>, Rational>> {
    let mut table: BTreeMap<Vec<Letter>, Rational> = BTreeMap::new();
    for c in enumerate_pruned(m)? {
        *table.entry(c.word()).or_insert_with(Rational::zero) += c.coefficient;
    }
    table.retain(|_, q| !q.is_zero());
    Ok(table)
}

#[derive(Clone, Debug, Default)]
struct TrieNode {
    coeff: Option<Rational>,
    children: [Option<Box<TrieNode>>; 2],
}

impl TrieNode {
    fn insert(&mut self, word: &[Letter], q: Rational) {
        match word.split_first() {
            None => self.coeff = Some(q),
            Some((l, rest)) => self.children[*l as usize].get_or_insert_with(Default::default).insert(rest, q),
        }
    }
}

/// A group: a validated algebra plus its Dynkin word tables.
#[derive(Debug)]
pub struct Group {
    alg: GradedAlgebra,
    // One trie per degree m = 2..=step.
    tries: Vec<TrieNode>,
    compiled: OnceLock<Vec<CompiledPoly>>,
}

impl Clone for Group {
    fn clone(&self) -> Self {
        Group { alg: self.alg.clone(), tries: self.tries.clone(), compiled: self.compiled.clone() }
    }
}

impl Group {
    pub fn new(alg: GradedAlgebra) -> Result<Self> {
        let step = alg.gradation().step();
        if step > DEGREE_CAP {
            return Err(Error::DegreeCap { step, cap: DEGREE_CAP });
        }
        let mut tries = Vec::new();
        for m in 2..=step {
            let mut root = TrieNode::default();
            for (w, q) in word_coefficients(m)? {
                root.insert(&w, q);
            }
            tries.push(root);
        }
        Ok(Group { alg, tries, compiled: OnceLock::new() })
    }

    pub fn algebra(&self) -> &GradedAlgebra {
        &self.alg
    }

    pub fn gradation(&self) -> &Gradation {
        self.alg.gradation()
    }

    pub fn dim(&self) -> usize {
        self.alg.dim()
    }

    pub fn step(&self) -> usize {
        self.gradation().step()
    }

    pub fn is_abelian(&self) -> bool {
        self.alg.is_abelian()
    }

    fn dynkin_into<S: Scalar>(&self, m: usize, x: &[S], y: &[S], acc: &mut [S]) {
        fn walk<S: Scalar>(alg: &GradedAlgebra, node: &TrieNode, val: &[S], xy: [&[S]; 2], acc: &mut [S]) {
            if let Some(q) = &node.coeff {
                let c = S::from_rational(q);
                for (a, v) in acc.iter_mut().zip(val) {
                    if !v.is_zero() {
                        *a = a.clone() + c.clone() * v.clone();
                    }
                }
            }
            for (l, child) in node.children.iter().enumerate() {
                if let Some(child) = child {
                    let next = alg.bracket_raw(val, xy[l]);
                    if next.iter().any(|v| !v.is_zero()) {
                        walk(alg, child, &next, xy, acc);
                    }
                }
            }
        }
        let root = &self.tries[m - 2];
        let xy = [x, y];
        for (l, child) in root.children.iter().enumerate() {
            if let Some(child) = child {
                if xy[l].iter().any(|v| !v.is_zero()) {
                    walk(&self.alg, child, xy[l], xy, acc);
                }
            }
        }
    }

    /// `P_m(x, y)` for `2 <= m <= step`, evaluated fresh from the word table.
    pub fn dynkin_polynomial<S: Scalar>(&self, m: usize, x: &Element<S>, y: &Element<S>) -> Result<Element<S>> {
        self.gradation().check_len(x.len())?;
        self.gradation().check_len(y.len())?;
        if m < 2 || m > self.step() {
            return Err(Error::Usage(format!("degree {m} outside 2..={}", self.step())));
        }
        let mut acc = vec![S::zero(); self.dim()];
        self.dynkin_into(m, x.coords(), y.coords(), &mut acc);
        Ok(Element::new(acc))
    }

    /// Reference evaluation of `P_m` summing every composition separately,
    /// with no pruning or word merging.
    pub fn dynkin_polynomial_unpruned<S: Scalar>(&self, m: usize, x: &Element<S>, y: &Element<S>) -> Result<Element<S>> {
        self.gradation().check_len(x.len())?;
        let mut acc = vec![S::zero(); self.dim()];
        for c in enumerate_compositions(m)? {
            let word: Vec<Element<S>> = c
                .word()
                .into_iter()
                .map(|l| if l == Letter::X { x.clone() } else { y.clone() })
                .collect();
            let b = self.alg.nested_bracket(&word)?;
            let q = S::from_rational(&c.coefficient);
            for (a, v) in acc.iter_mut().zip(b.coords()) {
                *a = a.clone() + q.clone() * v.clone();
            }
        }
        Ok(Element::new(acc))
    }

    /// Truncated BCH product evaluated term by term; works for any scalar.
    pub fn multiply_dynkin<S: Scalar>(&self, x: &[S], y: &[S]) -> Vec<S> {
        let mut acc: Vec<S> = x.iter().zip(y).map(|(a, b)| a.clone() + b.clone()).collect();
        if !self.is_abelian() {
            for m in 2..=self.step() {
                self.dynkin_into(m, x, y, &mut acc);
            }
        }
        acc
    }

    /// The BCH correction `sum_m P_m` expanded once as polynomials in
    /// `(x_1..x_n, y_1..y_n)`, compiled for float evaluation.
    pub fn compiled_product(&self) -> &[CompiledPoly] {
        self.compiled.get_or_init(|| {
            let n = self.dim();
            let x: Vec<Poly> = (0..n).map(Poly::var).collect();
            let y: Vec<Poly> = (0..n).map(|k| Poly::var(n + k)).collect();
            let mut corr = vec![Poly::zero(); n];
            if !self.is_abelian() {
                for m in 2..=self.step() {
                    self.dynkin_into(m, &x, &y, &mut corr);
                }
            }
            corr.iter().map(CompiledPoly::new).collect()
        })
    }

    /// Float product through the compiled polynomials. Slices must have the
    /// group dimension.
    pub fn mul_f64_into(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        let n = self.dim();
        if self.is_abelian() {
            for k in 0..n {
                out[k] = x[k] + y[k];
            }
            return;
        }
        let comp = self.compiled_product();
        let mut stack = [0.0f64; 64];
        let mut heap = Vec::new();
        let vars: &mut [f64] = if 2 * n <= stack.len() {
            &mut stack[..2 * n]
        } else {
            heap.resize(2 * n, 0.0);
            &mut heap
        };
        vars[..n].copy_from_slice(x);
        vars[n..].copy_from_slice(y);
        let vars = &*vars;
        for k in 0..n {
            out[k] = x[k] + y[k] + if comp[k].is_empty() { 0.0 } else { comp[k].eval(&vars) };
        }
    }

    pub fn mul_f64(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.mul_f64_into(x, y, &mut out);
        out
    }

    /// `x^{-1} y`, the argument of the left-invariant distance.
    pub fn left_quotient_f64(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let nx: Vec<f64> = x.iter().map(|v| -v).collect();
        self.mul_f64(&nx, y)
    }

    /// Per-coordinate bound of `|(x z)_k - x_k|` over all `z` with `|z_j| <= zb_j`.
    pub fn translation_box(&self, x: &[f64], zb: &[f64]) -> Vec<f64> {
        let n = self.dim();
        if self.is_abelian() {
            return zb.to_vec();
        }
        let comp = self.compiled_product();
        let mut bounds = Vec::with_capacity(2 * n);
        bounds.extend(x.iter().map(|v| v.abs()));
        bounds.extend_from_slice(zb);
        (0..n).map(|k| zb[k] + comp[k].abs_bound(&bounds)).collect()
    }

    pub fn multiply<S: Backend>(&self, x: &Element<S>, y: &Element<S>) -> Result<Element<S>> {
        self.gradation().check_len(x.len())?;
        self.gradation().check_len(y.len())?;
        Ok(Element::new(S::group_multiply(self, x.coords(), y.coords())))
    }

    pub fn inverse<S: Scalar>(&self, x: &Element<S>) -> Element<S> {
        x.neg()
    }

    /// `delta_r`, scaling layer `i` by `r^i`; `r` must be positive.
    pub fn dilate<S: RealScalar>(&self, r: &S, x: &Element<S>) -> Result<Element<S>> {
        if !(*r > S::zero()) {
            return Err(Error::Usage(format!("dilation factor must be positive, got {r:?}")));
        }
        self.gradation().check_len(x.len())?;
        Ok(Element::new(dilate_raw(self.gradation(), r, x.coords())))
    }
}

/// Layer scaling by `r^i` with no sign check; negative `r` gives the
/// automorphism `delta_{-1} o delta_{|r|}`.
pub fn dilate_raw<S: Scalar>(g: &Gradation, r: &S, x: &[S]) -> Vec<S> {
    let mut pows = vec![S::one()];
    for i in 1..=g.step() {
        let prev = pows[i - 1].clone();
        pows.push(prev * r.clone());
    }
    x.iter().enumerate().map(|(k, v)| v.clone() * pows[g.degree(k)].clone()).collect()
}

pub fn dilate_f64(g: &Gradation, r: f64, x: &[f64]) -> Vec<f64> {
    x.iter().enumerate().map(|(k, v)| v * r.powi(g.degree(k) as i32)).collect()
}

/// Numeric backends with a group product.
pub trait Backend: RealScalar {
    fn group_multiply(g: &Group, x: &[Self], y: &[Self]) -> Vec<Self>;
}

impl Backend for Rational {
    fn group_multiply(g: &Group, x: &[Self], y: &[Self]) -> Vec<Self> {
        g.multiply_dynkin(x, y)
    }
}

impl Backend for f64 {
    fn group_multiply(g: &Group, x: &[Self], y: &[Self]) -> Vec<Self> {
        g.mul_f64(x, y)
    }
}

/// Rows `(parts, coefficient)` of the composition table for degree `m`.
pub fn bch_table(m: usize, pruned: bool) -> Result<Vec<(String, Rational)>> {
    let comps = if pruned { enumerate_pruned(m)? } else { enumerate_compositions(m)? };
    Ok(comps.into_iter().map(|c| (c.parts_string(), c.coefficient)).collect())
}

pub fn bch_table_csv(m: usize, pruned: bool) -> Result<String> {
    let mut s = String::from("parts,coefficient\n");
    for (p, q) in bch_table(m, pruned)? {
        s.push_str(&format!("\"{p}\",{q}\n"));
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{BasisIndex, StructureConstants};
    use crate::scalar::{int, rat};

    fn heis() -> Group {
        let mut sc = StructureConstants::new(Gradation::new(vec![2, 1]).unwrap());
        sc.insert_skew(BasisIndex::new(1, 1), BasisIndex::new(1, 2), vec![int(2)]).unwrap();
        Group::new(GradedAlgebra::new(sc).unwrap()).unwrap()
    }

    fn engel() -> Group {
        let mut sc = StructureConstants::new(Gradation::new(vec![2, 1, 1]).unwrap());
        sc.insert_skew(BasisIndex::new(1, 1), BasisIndex::new(1, 2), vec![int(1)]).unwrap();
        sc.insert_skew(BasisIndex::new(1, 1), BasisIndex::new(2, 1), vec![int(1)]).unwrap();
        Group::new(GradedAlgebra::new(sc).unwrap()).unwrap()
    }

    fn q(v: &[i64]) -> Element<Rational> {
        Element::new(v.iter().map(|&x| int(x)).collect())
    }

    #[test]
    fn composition_counts_and_coefficients() {
        // Compositions of m into parts (p,q), p+q>=1: m=1 gives (1,0),(0,1).
        let c1 = enumerate_compositions(1).unwrap();
        assert_eq!(c1.len(), 2);
        assert!(c1.iter().all(|c| c.coefficient == int(1)));
        let c2 = enumerate_compositions(2).unwrap();
        // single part: (2,0),(1,1),(0,2); two parts: 2x2.
        assert_eq!(c2.len(), 7);
        let c11 = c2.iter().find(|c| c.parts == vec![(1, 1)]).unwrap();
        assert_eq!(c11.coefficient, rat(1, 2));
        let two = c2.iter().find(|c| c.parts == vec![(1, 0), (0, 1)]).unwrap();
        assert_eq!(two.coefficient, rat(-1, 4));
        assert!(enumerate_compositions(0).is_err());
        assert!(enumerate_compositions(DEGREE_CAP + 1).is_err());
    }

    #[test]
    fn degree_two_words_sum_to_half_bracket() {
        let t = word_coefficients(2).unwrap();
        // [x,y] from (1,1) and (1,0)(0,1); [y,x] from (0,1)(1,0).
        assert_eq!(t.get(&vec![Letter::X, Letter::Y]), Some(&rat(1, 4)));
        assert_eq!(t.get(&vec![Letter::Y, Letter::X]), Some(&rat(-1, 4)));
    }

    #[test]
    fn heisenberg_product() {
        let g = heis();
        assert_eq!(g.multiply(&q(&[1, 0, 0]), &q(&[0, 1, 0])).unwrap(), q(&[1, 1, 1]));
        assert!(g.multiply(&q(&[1, 2, 3]), &q(&[-1, -2, -3])).unwrap().is_zero());
        assert_eq!(g.multiply(&q(&[1, 2, 3]), &q(&[0, 0, 0])).unwrap(), q(&[1, 2, 3]));
    }

    #[test]
    fn engel_p3() {
        let g = engel();
        let (e11, e12) = (q(&[1, 0, 0, 0]), q(&[0, 1, 0, 0]));
        let p3 = g.dynkin_polynomial(3, &e11, &e12).unwrap();
        assert_eq!(p3, Element::new(vec![int(0), int(0), int(0), rat(1, 12)]));
        let xy = g.multiply(&e11, &e12).unwrap();
        assert_eq!(xy, Element::new(vec![int(1), int(1), rat(1, 2), rat(1, 12)]));
        assert_eq!(g.dynkin_polynomial_unpruned(3, &e11, &e12).unwrap(), p3);
    }

    #[test]
    fn compiled_matches_dynkin() {
        let g = engel();
        let x = [0.3, -1.2, 0.7, 2.0];
        let y = [-0.4, 0.9, 1.1, -0.5];
        let exact: Vec<f64> = g.multiply_dynkin(&x, &y);
        let fast = g.mul_f64(&x, &y);
        for (a, b) in exact.iter().zip(&fast) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn dilation_rules() {
        let g = heis();
        assert_eq!(g.dilate(&int(2), &q(&[1, 1, 1])).unwrap(), q(&[2, 2, 4]));
        assert_eq!(g.dilate(&int(1), &q(&[1, 5, 1])).unwrap(), q(&[1, 5, 1]));
        assert!(g.dilate(&int(0), &q(&[1, 1, 1])).is_err());
        assert!(g.dilate(&int(-1), &q(&[1, 1, 1])).is_err());
    }

    #[test]
    fn table_csv_has_header() {
        let csv = bch_table_csv(2, false).unwrap();
        assert!(csv.starts_with("parts,coefficient\n"));
        assert!(csv.contains("\"(1,1)\",1/2"));
    }
}
