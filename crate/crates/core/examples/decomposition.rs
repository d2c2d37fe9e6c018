//! Split a piecewise h-homomorphism into pieces on which it is nearly an
//! isometry for a dictionary norm.

use carnot::area::{decompose_bilipschitz, default_dictionary, DecomposeOptions};
use carnot::catalog::heisenberg;
use carnot::differentiation::HHomomorphism;
use carnot::maps::PiecewiseHom;
use carnot::measure::Domain;

fn main() -> carnot::Result<()> {
    let h = heisenberg();
    let f = PiecewiseHom { a: HHomomorphism::dilation(&h, 2.0), b: HHomomorphism::identity(&h), coord: 0, threshold: 0.0 };
    let dict = default_dictionary(&h, 32);
    let cloud: Vec<Vec<f64>> = Domain::unit_ball(3).sample(&h, 300, 1)?.into_iter().filter(|x| x[0].abs() > 0.3).collect();
    let rep = decompose_bilipschitz(&f, &cloud, &dict, 0.05, &DecomposeOptions::default())?;
    for c in &rep.classes {
        println!("{:<20} n = {}  points {:>4}  worst pair {:.2e}", c.label, c.n, c.count, c.max_pair_violation);
    }
    println!("unassigned: {} degenerate, {} missed", rep.unassigned_degenerate, rep.unassigned_miss);
    Ok(())
}
