// Compare the lattice engine with both brute-force references on random
// small instances.

use std::error::Error;

use aemr::check_equivalence;
use aemr::oracle::random_instance;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    for seed in 0..8 {
        let (d, w) = random_instance(seed, (20, 120), (3, 8));
        let r = check_equivalence(&d, &w)?;
        println!(
            "seed {seed}: n={:<4} p={} treated={:<3} degenerate={:<2} weight agree {}/{} enumerate {:?}",
            d.n(),
            d.p(),
            r.treated,
            r.degenerate,
            r.engine_weight_agree,
            r.treated - r.degenerate,
            r.enumerate_weight_agree
        );
        if !r.all_agree() {
            return Err(format!("seed {seed}: {:?}", r.mismatches).into());
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
