#![allow(dead_code)]

use carnot::scalar::{random_rational, Rational};
use num_traits::{One, Zero};
use rand::Rng;

pub fn random_vec<R: Rng>(rng: &mut R, dim: usize, num: i64, den: i64) -> Vec<Rational> {
    (0..dim).map(|_| random_rational(rng, num, den)).collect()
}

type M4 = [[Rational; 4]; 4];

fn zero4() -> M4 {
    std::array::from_fn(|_| std::array::from_fn(|_| Rational::zero()))
}

fn mat_mul(a: &M4, b: &M4) -> M4 {
    let mut c = zero4();
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                c[i][j] += &a[i][k] * &b[k][j];
            }
        }
    }
    c
}

fn mat_add(a: &M4, b: &M4, s: &Rational) -> M4 {
    let mut c = a.clone();
    for i in 0..4 {
        for j in 0..4 {
            c[i][j] += &b[i][j] * s;
        }
    }
    c
}

/// Engel algebra as strictly upper triangular 4x4 matrices:
/// `e11 = E12 + E23`, `e12 = E34`, `e3 = E24`, `e4 = E14`.
fn engel_embed(x: &[Rational]) -> M4 {
    let mut m = zero4();
    m[0][1] = x[0].clone();
    m[1][2] = x[0].clone();
    m[2][3] = x[1].clone();
    m[1][3] = x[2].clone();
    m[0][3] = x[3].clone();
    m
}

fn engel_extract(m: &M4) -> Vec<Rational> {
    assert_eq!(m[0][1], m[1][2], "log left the Engel subalgebra");
    assert!(m[0][2].is_zero(), "log left the Engel subalgebra");
    vec![m[0][1].clone(), m[2][3].clone(), m[1][3].clone(), m[0][3].clone()]
}

/// `exp(N) = I + N + N^2/2 + N^3/6` for `N^4 = 0`.
fn exp_nil(n: &M4) -> M4 {
    let mut e = zero4();
    for (i, row) in e.iter_mut().enumerate() {
        row[i] = Rational::one();
    }
    let n2 = mat_mul(n, n);
    let n3 = mat_mul(&n2, n);
    let e = mat_add(&e, n, &Rational::one());
    let e = mat_add(&e, &n2, &Rational::new(1.into(), 2.into()));
    mat_add(&e, &n3, &Rational::new(1.into(), 6.into()))
}

/// `log(U) = N - N^2/2 + N^3/3` with `N = U - I`.
fn log_unipotent(u: &M4) -> M4 {
    let mut n = u.clone();
    for (i, row) in n.iter_mut().enumerate() {
        row[i] -= Rational::one();
    }
    let n2 = mat_mul(&n, &n);
    let n3 = mat_mul(&n2, &n);
    let l = mat_add(&n, &n2, &Rational::new((-1).into(), 2.into()));
    mat_add(&l, &n3, &Rational::new(1.into(), 3.into()))
}

/// `log(exp(x) exp(y))` in Engel coordinates, computed with matrices.
pub fn engel_matrix_product(x: &[Rational], y: &[Rational]) -> Vec<Rational> {
    engel_extract(&log_unipotent(&mat_mul(&exp_nil(&engel_embed(x)), &exp_nil(&engel_embed(y)))))
}
