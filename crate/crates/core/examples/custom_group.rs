//! Define a group from structure constants in JSON, validate it and catch a
//! Jacobi violation.

use carnot::algebra::{validate_algebra, Element};
use carnot::io::GroupFile;
use carnot::scalar::{format_rational_list, parse_rational_list};

const FILIFORM: &str = r#"{
  "name": "filiform-5",
  "layers": [2, 1, 1, 1],
  "brackets": [
    { "i": 1, "u": 1, "j": 1, "v": 2, "coeffs": ["1"] },
    { "i": 1, "u": 1, "j": 2, "v": 1, "coeffs": ["1"] },
    { "i": 1, "u": 1, "j": 3, "v": 1, "coeffs": ["1"] }
  ]
}"#;

const BROKEN: &str = r#"{
  "name": "broken",
  "layers": [3, 1, 1],
  "brackets": [
    { "i": 1, "u": 1, "j": 1, "v": 2, "coeffs": ["1"] },
    { "i": 2, "u": 1, "j": 1, "v": 3, "coeffs": ["1"] }
  ]
}"#;

fn main() -> carnot::Result<()> {
    let file: GroupFile = serde_json::from_str(FILIFORM).map_err(|e| carnot::Error::Parse(e.to_string()))?;
    let g = file.build()?;
    println!("{} built; sigmas {:?}", g.name, g.norm.sigmas());
    let x = Element::new(parse_rational_list("1,2,0,0,0")?);
    let y = Element::new(parse_rational_list("-1/2,1,3,0,0")?);
    println!("x y = ({})", format_rational_list(g.group.multiply(&x, &y)?.coords()));

    let broken: GroupFile = serde_json::from_str(BROKEN).map_err(|e| carnot::Error::Parse(e.to_string()))?;
    let report = validate_algebra(&broken.structure_constants()?)?;
    println!("broken: {report}");
    match broken.build() {
        Ok(_) => println!("unexpectedly built"),
        Err(e) => println!("refused: {e}"),
    }
    Ok(())
}
