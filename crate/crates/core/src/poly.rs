//! Commutative polynomials with rational coefficients, used as a symbolic
//! scalar to expand the group law once per group.

use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

use num_traits::{One, Signed, Zero};

use crate::scalar::{Rational, RealScalar, Scalar};

/// Sorted `(variable, power)` pairs; the empty monomial is the constant 1.
pub type Monomial = Vec<(u16, u8)>;

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Poly {
    terms: BTreeMap<Monomial, Rational>,
}

impl Poly {
    pub fn var(v: usize) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(vec![(v as u16, 1)], Rational::one());
        Poly { terms }
    }

    pub fn constant(q: Rational) -> Self {
        let mut p = Poly::default();
        if !q.is_zero() {
            p.terms.insert(Vec::new(), q);
        }
        p
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Rational)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn eval<S: Scalar>(&self, vars: &[S]) -> S {
        let mut acc = S::zero();
        for (mono, q) in &self.terms {
            let mut t = S::from_rational(q);
            for &(v, p) in mono {
                t = t * vars[v as usize].powi(p as u32);
            }
            acc = acc + t;
        }
        acc
    }

    fn add_term(&mut self, mono: Monomial, q: Rational) {
        if q.is_zero() {
            return;
        }
        let entry = self.terms.entry(mono);
        match entry {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(q);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                *e.get_mut() += q;
                if e.get().is_zero() {
                    e.remove();
                }
            }
        }
    }
}

fn mono_mul(a: &Monomial, b: &Monomial) -> Monomial {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                out.push((a[i].0, a[i].1 + b[j].1));
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

impl Zero for Poly {
    fn zero() -> Self {
        Poly::default()
    }
    fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
}

impl One for Poly {
    fn one() -> Self {
        Poly::constant(Rational::one())
    }
}

impl Neg for Poly {
    type Output = Poly;
    fn neg(mut self) -> Poly {
        for q in self.terms.values_mut() {
            *q = -q.clone();
        }
        self
    }
}

impl Add for Poly {
    type Output = Poly;
    fn add(mut self, rhs: Poly) -> Poly {
        for (m, q) in rhs.terms {
            self.add_term(m, q);
        }
        self
    }
}

impl Sub for Poly {
    type Output = Poly;
    fn sub(self, rhs: Poly) -> Poly {
        self + (-rhs)
    }
}

impl Mul for Poly {
    type Output = Poly;
    fn mul(self, rhs: Poly) -> Poly {
        let mut out = Poly::default();
        for (ma, qa) in &self.terms {
            for (mb, qb) in &rhs.terms {
                out.add_term(mono_mul(ma, mb), qa * qb);
            }
        }
        out
    }
}

impl Scalar for Poly {
    fn from_rational(q: &Rational) -> Self {
        Poly::constant(q.clone())
    }
}

/// A polynomial flattened for fast float evaluation.
#[derive(Clone, Debug, Default)]
pub struct CompiledPoly {
    coeffs: Vec<f64>,
    abs_coeffs: Vec<f64>,
    starts: Vec<usize>,
    factors: Vec<(usize, i32)>,
}

impl CompiledPoly {
    pub fn new(p: &Poly) -> Self {
        let mut c = CompiledPoly { starts: vec![0], ..Default::default() };
        for (mono, q) in p.terms() {
            let f = q.as_f64();
            c.coeffs.push(f);
            c.abs_coeffs.push(q.abs().as_f64());
            c.factors.extend(mono.iter().map(|&(v, e)| (v as usize, e as i32)));
            c.starts.push(c.factors.len());
        }
        c
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    #[inline]
    pub fn eval(&self, vars: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (k, &q) in self.coeffs.iter().enumerate() {
            let mut t = q;
            for &(v, e) in &self.factors[self.starts[k]..self.starts[k + 1]] {
                t *= if e == 1 { vars[v] } else { vars[v].powi(e) };
            }
            acc += t;
        }
        acc
    }

    /// Upper bound of `|p|` when each variable satisfies `|vars_k| <= bounds_k`.
    pub fn abs_bound(&self, bounds: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (k, &q) in self.abs_coeffs.iter().enumerate() {
            let mut t = q;
            for &(v, e) in &self.factors[self.starts[k]..self.starts[k + 1]] {
                t *= bounds[v].powi(e);
            }
            acc += t;
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{int, rat};

    #[test]
    fn ring_ops() {
        let (x, y) = (Poly::var(0), Poly::var(1));
        let p = (x.clone() + y.clone()) * (x.clone() - y.clone());
        let q = x.clone() * x.clone() - y.clone() * y.clone();
        assert_eq!(p, q);
        assert!((x.clone() - x.clone()).is_zero());
        let vals = [int(3), rat(1, 2)];
        assert_eq!(p.eval(&vals), int(9) - rat(1, 4));
    }

    #[test]
    fn compiled_matches_exact() {
        let (x, y) = (Poly::var(0), Poly::var(1));
        let p = x.clone() * x.clone() * y.clone() * Poly::constant(rat(-1, 3)) + y + Poly::one();
        let c = CompiledPoly::new(&p);
        let v = [0.7, -1.3];
        let expect = 0.49 * 1.3 / 3.0 - 0.3;
        assert!((c.eval(&v) - expect).abs() < 1e-14);
        assert!((c.abs_bound(&[1.0, 1.0]) - (1.0 / 3.0 + 2.0)).abs() < 1e-14);
    }
}
