// Permutation importance on a holdout and the weights derived from it.

use std::error::Error;

use aemr::holdout::{largest_gap_threshold, permutation_importance, weights_from_scores};
use aemr::io::importance_rows;
use aemr::{gen_scenario, DgpSpec};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let g = gen_scenario(&DgpSpec::irrelevant(500, 500, 9))?;
    let scores = permutation_importance(&g.holdout, 20, 0.0, 9)?;
    let w = weights_from_scores(&scores)?;
    for row in importance_rows(&g.holdout, &scores, &w).iter().rev() {
        println!("{:<4} score {:>9.3} weight {:>9.3}", row.covariate, row.score, row.weight);
    }
    println!("largest gap below {:?}", largest_gap_threshold(&w));
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
