// Walk the covariate-set lattice by hand: commit sets in order and watch
// supersets become active once all their subsets are processed.

use std::collections::HashSet;
use std::error::Error;

use aemr::covset::CovariateSet;
use aemr::lattice::{generate_new_active_sets, LatticeState};

fn set(xs: &[usize]) -> CovariateSet {
    xs.iter().copied().collect()
}

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let mut lat = LatticeState::new(4, 3);
    println!("active: {:?}", lat.active().iter().map(|s| s.to_string()).collect::<Vec<_>>());
    for s in [set(&[0]), set(&[1]), set(&[0, 1]), set(&[2]), set(&[0, 2]), set(&[1, 2])] {
        let z = lat.commit(&s);
        println!(
            "commit {:<7} -> new {:<18} active now {}",
            s.to_string(),
            format!("{:?}", z.iter().map(|r| r.to_string()).collect::<Vec<_>>()),
            lat.active().len()
        );
    }
    lat.check_invariants()?;

    // {2,3} completes {1,2,3}; {2,3,5} lacks {2,5} and stays out.
    let processed: HashSet<CovariateSet> =
        [set(&[1, 2]), set(&[1, 3]), set(&[3, 5]), set(&[5, 6])].into_iter().collect();
    let z = generate_new_active_sets(&processed, &set(&[2, 3]), 7);
    println!("after {{2,3}}: {:?}", z.iter().map(|r| r.to_string()).collect::<Vec<_>>());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
