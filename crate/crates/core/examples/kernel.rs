//! Prints the incubation kernel and how much mass each truncation keeps.

use mmhm::domain::{discretize_gamma, INCUBATION_SCALE, INCUBATION_SHAPE};
use mmhm::Kernel;

fn main() -> mmhm::Result<()> {
    let k = Kernel::incubation();
    println!("Gamma({INCUBATION_SHAPE}, scale {INCUBATION_SCALE}), L = {}", k.len());
    for lag in 1..=k.len() {
        let p = k.at(lag);
        let bar = "#".repeat((p * 200.0).round() as usize);
        println!("{lag:>3} {p:.6} {bar}");
    }
    println!("mode at lag {}", k.mode());

    for trunc in [7, 14, 21, 30] {
        let raw = discretize_gamma(INCUBATION_SHAPE, INCUBATION_SCALE, trunc, false)?;
        println!("L = {trunc:>2}: untruncated mass kept {:.10}", raw.mass());
    }
    Ok(())
}
