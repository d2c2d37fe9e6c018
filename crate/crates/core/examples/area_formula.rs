//! Compare both sides of the area formula for a few maps.

use std::sync::Arc;

use carnot::area::{run_area_experiment, AreaExperiment, Multiplicity};
use carnot::catalog::{abelian, heisenberg};
use carnot::io::MapSpec;
use carnot::maps::FoldMap;
use carnot::measure::Domain;
use carnot::norm::LayerNorm;

fn main() -> carnot::Result<()> {
    let h = heisenberg();
    let r2 = abelian(2, LayerNorm::Euclidean)?;
    let sup = abelian(2, LayerNorm::Sup)?;

    let mut runs = vec![
        ("diag(2,3) into sup", AreaExperiment::new(Domain::unit_ball(2), MapSpec::parse_cli("diag:2,3")?.build(&r2, &sup)?)),
        ("delta_2 on the Heisenberg unit ball", AreaExperiment::new(Domain::unit_ball(3), MapSpec::parse_cli("dilation:2")?.build(&h, &h)?)),
    ];
    let mut fold = AreaExperiment::new(Domain::Box { lo: vec![-1.0, 0.0], hi: vec![1.0, 1.0] }, Arc::new(FoldMap { bundle: r2.clone() }));
    fold.multiplicity = Multiplicity::Constant { n: 2 };
    runs.push(("fold, two sheets", fold));

    for (label, exp) in &runs {
        let rep = run_area_experiment(exp)?;
        println!("{label}: lhs {:.5}  rhs {:.5}  gap {:.2}%  {:?}", rep.lhs.value, rep.rhs.value, 100.0 * rep.gap, rep.verdict);
    }
    Ok(())
}
