mod common;

use carnot::algebra::Element;
use carnot::bch::bch_table;
use carnot::catalog::{engel, heisenberg, heisenberg_closed_form};
use carnot::scalar::rat;
use common::{engel_matrix_product, random_vec};
use num_traits::Zero;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn heisenberg_matches_closed_form() {
    let g = heisenberg();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..300 {
        let (x, y) = (random_vec(&mut rng, 3, 40, 9), random_vec(&mut rng, 3, 40, 9));
        let z = g.group.multiply(&Element::new(x.clone()), &Element::new(y.clone())).unwrap().into_coords();
        assert_eq!(z, heisenberg_closed_form(&x, &y));
    }
}

#[test]
fn engel_matches_matrix_group() {
    let g = engel();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..100 {
        let (x, y) = (random_vec(&mut rng, 4, 40, 9), random_vec(&mut rng, 4, 40, 9));
        let z = g.group.multiply(&Element::new(x.clone()), &Element::new(y.clone())).unwrap().into_coords();
        assert_eq!(z, engel_matrix_product(&x, &y));
    }
}

#[test]
fn float_product_tracks_exact_product() {
    let g = engel();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..100 {
        let (x, y) = (random_vec(&mut rng, 4, 10, 3), random_vec(&mut rng, 4, 10, 3));
        let exact = engel_matrix_product(&x, &y);
        let f = g.mul(&carnot::scalar::to_f64_vec(&x), &carnot::scalar::to_f64_vec(&y));
        for (a, b) in f.iter().zip(carnot::scalar::to_f64_vec(&exact)) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }
}

#[test]
fn degree_two_table_is_frozen() {
    // Dynkin weights (-1)^(n-1)/n * 1/m * prod 1/(p_i! q_i!), computed by hand.
    let t = bch_table(2, true).unwrap();
    let want = [("(1,0)(0,1)", rat(-1, 4)), ("(0,1)(1,0)", rat(-1, 4)), ("(1,1)", rat(1, 2))];
    assert_eq!(t.len(), want.len());
    for ((p, c), (wp, wc)) in t.iter().zip(want) {
        assert_eq!((p.as_str(), c), (wp, &wc));
    }
}

#[test]
fn pruning_keeps_the_group_law() {
    let pruned = bch_table(4, true).unwrap();
    let unpruned = bch_table(4, false).unwrap();
    assert!(pruned.len() < unpruned.len());
    assert!(pruned.iter().all(|(_, c)| !c.is_zero()));
}
