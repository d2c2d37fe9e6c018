//! Weighted product of Heisenberg h-homomorphisms and its Lipschitz bound.

use carnot::catalog::{heisenberg, product_lipschitz_map, FactorSpec, ProductMapSpec};
use carnot::maps::GroupMap;
use carnot::measure::Domain;

fn main() -> carnot::Result<()> {
    let spec = ProductMapSpec {
        factors: vec![FactorSpec::Identity, FactorSpec::Rotation { theta: 1.0 }, FactorSpec::Dilation { a: 0.5 }, FactorSpec::Projection],
        weights: vec![1.0, 0.5, 0.25, 0.125],
    };
    let g = product_lipschitz_map(&spec)?;
    let h = heisenberg();
    let pts = Domain::unit_ball(3).sample(&h, 4000, 2)?;
    let worst = pts.chunks(2).map(|p| g.target().dist(&g.eval(&p[0]), &g.eval(&p[1])) / h.dist(&p[0], &p[1])).fold(0.0, f64::max);
    println!("target {}: declared C0 {:.5}, worst sampled ratio {:.5}", g.target().name, g.declared_bound(), worst);
    Ok(())
}
