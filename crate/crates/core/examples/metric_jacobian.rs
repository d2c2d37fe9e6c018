//! Metric Jacobians of norms on the plane and space: covering estimates
//! against the Kirchheim formula.

use carnot::catalog::abelian;
use carnot::measure::{kirchheim_jacobian, metric_jacobian, JacobianInput, JacobianOptions};
use carnot::norm::{HomogeneousNorm, LayerNorm};
use carnot::scalar::rat;

fn main() -> carnot::Result<()> {
    for n in [2, 3] {
        let d = abelian(n, LayerNorm::Euclidean)?;
        for layer in [LayerNorm::Sup, LayerNorm::lp(rat(3, 2))?, LayerNorm::WeightedSup(vec![2.0; n])] {
            let s = HomogeneousNorm::uniform(d.gradation().clone(), layer.clone())?;
            let cover = metric_jacobian(JacobianInput::Norm(&s), &d, &JacobianOptions::default())?;
            let exact = kirchheim_jacobian(n, &|u: &[f64]| layer.eval(u))?;
            println!("R^{n} {:<16} covering {:.5}  Kirchheim {:.5}", layer.label(), cover.value, exact.value);
        }
    }
    Ok(())
}
