//! Jacobians of h-homomorphisms of the Heisenberg group: dilations scale
//! Haar measure by lambda^4.

use carnot::catalog::heisenberg;
use carnot::differentiation::HHomomorphism;
use carnot::io::MapSpec;
use carnot::measure::{hhom_jacobian, HHomMethod, JacobianCalibrator, JacobianOptions};

fn main() -> carnot::Result<()> {
    let h = heisenberg();
    let mut cal = JacobianCalibrator::new();
    let opts = JacobianOptions::default();
    for lambda in [0.5, 2.0, 3.0] {
        let j = hhom_jacobian(&HHomomorphism::dilation(&h, lambda), HHomMethod::Pushforward, &mut cal, &opts)?;
        println!("delta_{lambda}: {:.4} (lambda^4 = {})", j.value, f64::powi(lambda, 4));
    }
    let l = MapSpec::parse_cli("diag:5/4,4/5,1")?.hhom(&h, &h)?;
    for method in [HHomMethod::Pushforward, HHomMethod::Determinant] {
        let j = hhom_jacobian(&l, method, &mut cal, &opts)?;
        println!("diag(5/4, 4/5, 1) by {method:?}: {:.4}", j.value);
    }
    Ok(())
}
