//! Estimate the Pansu differential of a perturbed h-homomorphism and check
//! the remainder decays linearly.

use carnot::catalog::heisenberg;
use carnot::differentiation::{assemble_pansu_differential, validate_differential, AssemblyOptions, Frame, HHomomorphism, RemainderOptions};
use carnot::io::MapSpec;
use carnot::maps::PerturbedHom;

fn main() -> carnot::Result<()> {
    let h = heisenberg();
    let base = MapSpec::parse_cli("diag:5/4,4/5,1")?.hhom(&h, &h)?;
    let f = PerturbedHom { hom: base.clone(), center: vec![0.3, -0.2, 0.1], bump: vec![0.0, 0.0, 0.25] };
    let (l, report) = assemble_pansu_differential(&f, &f.center, &Frame::standard(&h), &AssemblyOptions::default())?;
    println!("blocks {:?}", l.block_rows());
    println!("fit residual {:.1e}, homomorphism defect {:.1e}", report.fit_residual, report.homomorphism_defect);

    let prof = validate_differential(&f, &f.center, &base, &RemainderOptions::default())?;
    for (r, q) in prof.radii.iter().zip(&prof.ratios) {
        println!("r = {r:.3e}  remainder/r = {q:.3e}");
    }
    println!("slope {:?}", prof.slope);

    let id = HHomomorphism::identity(&h);
    let wrong = validate_differential(&f, &f.center, &id, &RemainderOptions::default())?;
    println!("against the identity the ratios stay near {:.3}", wrong.ratios.last().unwrap());
    Ok(())
}
