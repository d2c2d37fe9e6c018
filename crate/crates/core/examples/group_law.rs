//! Exact group law on the Engel group: products, inverses and dilations
//! with rational coordinates, next to the floating-point fast path.

use carnot::algebra::{validate_algebra, Element};
use carnot::catalog::engel;
use carnot::scalar::{format_rational_list, parse_rational_list, rat, to_f64_vec};

fn main() -> carnot::Result<()> {
    let g = engel();
    println!("{}: layers {:?}, homogeneous dimension {}", g.name, g.gradation().layer_dims(), g.gradation().homogeneous_dim());
    println!("validation: {}", validate_algebra(g.group.algebra().structure_constants())?);

    let x = Element::new(parse_rational_list("1,0,0,0")?);
    let y = Element::new(parse_rational_list("0,1,0,0")?);
    let xy = g.group.multiply(&x, &y)?;
    let yx = g.group.multiply(&y, &x)?;
    println!("x y = ({})", format_rational_list(xy.coords()));
    println!("y x = ({})", format_rational_list(yx.coords()));
    println!("(x y)^-1 = ({})", format_rational_list(g.group.inverse(&xy).coords()));

    let r = rat(3, 2);
    let lhs = g.group.dilate(&r, &xy)?;
    let rhs = g.group.multiply(&g.group.dilate(&r, &x)?, &g.group.dilate(&r, &y)?)?;
    println!("delta_3/2 (x y) = ({}), equal to delta x delta y: {}", format_rational_list(lhs.coords()), lhs == rhs);

    let f = g.mul(&to_f64_vec(x.coords()), &to_f64_vec(y.coords()));
    println!("float product: {f:?}");
    Ok(())
}
