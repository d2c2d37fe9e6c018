//! Calibrate layer weights so the homogeneous norm satisfies the triangle
//! inequality, then hunt for a violation.

use carnot::catalog::{engel, random_two_step_spec, two_step};
use carnot::norm::{calibrate_sigma, search_triangle_defect, CalibrationBudget, LayerNorm};

fn main() -> carnot::Result<()> {
    let budget = CalibrationBudget { pairs: 20_000, restarts: 2_000, ..Default::default() };
    let g = engel();
    let hn = calibrate_sigma(&g.group, vec![LayerNorm::Euclidean; 3], None, &budget)?;
    let cert = hn.certificate.as_ref().expect("calibration certificate");
    println!("engel sigmas {:?} after {} rounds, max defect {:.2e}", hn.sigmas(), cert.rounds, cert.max_relative_defect);

    let t = two_step("two-step", &random_two_step_spec(4, 2, 3))?;
    for note in &t.notes {
        println!("{note}");
    }
    let found = search_triangle_defect(&t.group, &t.norm, &budget, 1);
    println!("two-step worst relative triangle defect {:.2e}", found.max_relative_defect);

    let x = [0.3, -0.1, 0.2, 0.5, 0.1, -0.4];
    println!("||x|| = {:.6}, ||delta_2 x|| = {:.6}", t.norm(&x), t.norm(&t.dilate(2.0, &x)));
    Ok(())
}
