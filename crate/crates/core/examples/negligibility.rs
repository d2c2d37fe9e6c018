//! The first-layer projection of the Heisenberg group has degenerate
//! differential everywhere; its image carries no 4-dimensional measure.

use carnot::area::{negligibility_experiment, NegligibilityBudget};
use carnot::catalog::{abelian, heisenberg};
use carnot::maps::LayerProjection;
use carnot::measure::Domain;
use carnot::norm::LayerNorm;

fn main() -> carnot::Result<()> {
    let p = LayerProjection::new(heisenberg(), abelian(2, LayerNorm::Euclidean)?)?;
    let rep = negligibility_experiment(&p, &Domain::unit_ball(3), &NegligibilityBudget { points: 30_000, ..Default::default() })?;
    println!("{} of {} points degenerate", rep.degenerate_points, rep.points);
    for (lvl, r) in rep.levels.iter().skip(1).zip(&rep.ratios) {
        println!("eps {:.3}: estimate {:.4e}, ratio to previous {:.3}", lvl.eps, lvl.value, r);
    }
    println!("passes: {}", rep.passes);
    Ok(())
}
