//! Dynkin compositions and coefficients of the BCH series by degree.

use carnot::bch::bch_table;

fn main() -> carnot::Result<()> {
    for m in 1..=6 {
        let full = bch_table(m, false)?;
        let pruned = bch_table(m, true)?;
        println!("degree {m}: {} compositions, {} after pruning", full.len(), pruned.len());
    }
    println!();
    for (parts, c) in bch_table(3, true)? {
        println!("{parts:>24}  {c}");
    }
    Ok(())
}
