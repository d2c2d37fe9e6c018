use carnot::algebra::Element;
use carnot::catalog::{abelian, by_name, engel, heisenberg, random_two_step_spec, two_step};
use carnot::differentiation::HHomomorphism;
use carnot::io::MapSpec;
use carnot::maps::GroupMap;
use carnot::measure::kirchheim_jacobian;
use carnot::norm::{GroupBundle, LayerNorm, NORM_TOL};
use carnot::scalar::{to_f64_vec, Rational};
use proptest::prelude::*;

fn rational() -> impl Strategy<Value = Rational> {
    (-60i64..=60, 1i64..=12).prop_map(|(n, d)| Rational::new(n.into(), d.into()))
}

fn positive() -> impl Strategy<Value = Rational> {
    (1i64..=40, 1i64..=12).prop_map(|(n, d)| Rational::new(n.into(), d.into()))
}

fn rvec(n: usize) -> impl Strategy<Value = Vec<Rational>> {
    proptest::collection::vec(rational(), n)
}

fn fvec(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-3.0f64..3.0, n)
}

fn mul(g: &GroupBundle, x: &[Rational], y: &[Rational]) -> Vec<Rational> {
    g.group.multiply(&Element::new(x.to_vec()), &Element::new(y.to_vec())).unwrap().into_coords()
}

fn catalog() -> Vec<GroupBundle> {
    vec![
        heisenberg(),
        engel(),
        by_name("h-product:3").unwrap(),
        by_name("graded-product:engel:3:2,2,1").unwrap(),
        abelian(3, LayerNorm::Euclidean).unwrap(),
    ]
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn two_step_group_axioms(seed in 0u64..1000, x in rvec(8), y in rvec(8), z in rvec(8)) {
        let g = two_step("t", &random_two_step_spec(5, 3, seed)).unwrap();
        prop_assert_eq!(mul(&g, &mul(&g, &x, &y), &z), mul(&g, &x, &mul(&g, &y, &z)));
        let xi = g.group.inverse(&Element::new(x.clone())).into_coords();
        prop_assert!(mul(&g, &x, &xi).iter().all(|c| *c == Rational::from_integer(0.into())));
    }

    #[test]
    fn engel_dilations_are_automorphisms(x in rvec(4), y in rvec(4), r in positive(), s in positive()) {
        let g = engel();
        let d = |r: &Rational, v: &[Rational]| g.group.dilate(r, &Element::new(v.to_vec())).unwrap().into_coords();
        prop_assert_eq!(d(&r, &mul(&g, &x, &y)), mul(&g, &d(&r, &x), &d(&r, &y)));
        prop_assert_eq!(d(&r, &d(&s, &x)), d(&(&r * &s), &x));
    }

    #[test]
    fn float_product_matches_exact(x in rvec(4), y in rvec(4)) {
        let g = engel();
        let exact = to_f64_vec(&mul(&g, &x, &y));
        let float = g.mul(&to_f64_vec(&x), &to_f64_vec(&y));
        for (a, b) in float.iter().zip(&exact) {
            prop_assert!(rel(*a, *b) < 1e-12, "{} vs {}", a, b);
        }
    }

    #[test]
    fn norm_homogeneous_and_symmetric(k in 0usize..5, x in fvec(12), r in 0.05f64..20.0) {
        let g = &catalog()[k];
        let x = &x[..g.dim()];
        let n = g.norm(x);
        prop_assert!(rel(g.norm(&g.dilate(r, x)), r * n) < 1e-12);
        prop_assert!(rel(g.norm(&g.inv(x)), n) < 1e-12);
        prop_assert!(n >= 0.0);
    }

    #[test]
    fn triangle_inequality(k in 0usize..5, x in fvec(12), y in fvec(12)) {
        let g = &catalog()[k];
        let (x, y) = (&x[..g.dim()], &y[..g.dim()]);
        let lhs = g.norm(&g.mul(x, y));
        let rhs = g.norm(x) + g.norm(y);
        prop_assert!(lhs <= rhs * (1.0 + NORM_TOL) + 1e-300, "{} > {}", lhs, rhs);
    }

    #[test]
    fn distance_left_invariant(k in 0usize..5, x in fvec(12), y in fvec(12), z in fvec(12)) {
        let g = &catalog()[k];
        let (x, y, z) = (&x[..g.dim()], &y[..g.dim()], &z[..g.dim()]);
        prop_assert!(rel(g.dist(&g.mul(z, x), &g.mul(z, y)), g.dist(x, y)) < 1e-9);
    }

    #[test]
    fn h_homomorphisms_respect_products(a in 0.2f64..3.0, b in 0.2f64..3.0, x in fvec(4), y in fvec(4)) {
        let g = engel();
        let spec = MapSpec::Diagonal { entries: vec![a.to_string(), b.to_string(), (a * b).to_string(), (a * a * b).to_string()] };
        let l = spec.hhom(&g, &g).unwrap();
        let lhs = l.eval(&g.mul(&x, &y));
        let rhs = g.mul(&l.eval(&x), &l.eval(&y));
        for (p, q) in lhs.iter().zip(&rhs) {
            prop_assert!(rel(*p, *q) < 1e-9);
        }
    }

    #[test]
    fn dilation_commutes_with_h_homomorphism(r in 0.1f64..10.0, x in fvec(3)) {
        let h = heisenberg();
        let l = HHomomorphism::from_f64_blocks(h.clone(), h.clone(), vec![vec![0.6, -0.8, 0.8, 0.6], vec![1.0]]).unwrap();
        let a = l.eval(&h.dilate(r, &x));
        let b = h.dilate(r, &l.eval(&x));
        for (p, q) in a.iter().zip(&b) {
            prop_assert!(rel(*p, *q) < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn kirchheim_scales_with_the_norm(lambda in 0.3f64..3.0, w0 in 0.5f64..2.0, w1 in 0.5f64..2.0) {
        let base = kirchheim_jacobian(2, &|u: &[f64]| (w0 * u[0]).abs().max((w1 * u[1]).abs())).unwrap().value;
        let scaled = kirchheim_jacobian(2, &|u: &[f64]| lambda * (w0 * u[0]).abs().max((w1 * u[1]).abs())).unwrap().value;
        prop_assert!(rel(scaled, lambda * lambda * base) < 1e-3, "{} vs {}", scaled, lambda * lambda * base);
    }
}
