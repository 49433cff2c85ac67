// Match a handful of units on three binary covariates and read off the
// treatment effects.
//
// ```bash
// cargo run --example quickstart
// ```

use std::error::Error;

use aemr::{ate, estimate_all, run, Dataset, EngineConfig, WeightVector};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let rows = vec![
        vec![0, 0, 1],
        vec![0, 0, 1],
        vec![1, 0, 0],
        vec![1, 1, 0],
        vec![1, 1, 1],
        vec![0, 1, 1],
        vec![1, 0, 1],
        vec![0, 1, 0],
    ];
    let t = [1, 0, 1, 0, 1, 0, 0, 1];
    let y = [5.0, 3.0, 6.0, 2.5, 7.0, 4.0, 4.5, 3.5];
    let d = Dataset::binary(&rows, &t, &y)?;

    // x0 matters most, x2 least.
    let w = WeightVector::new(vec![3.0, 2.0, 1.0])?;
    let res = run(&d, None, &EngineConfig::fixed(w))?;

    for g in res.groups() {
        println!(
            "group {} retained {} members {:?} ({}T/{}C)",
            g.id, g.retained, g.members, g.n_treated, g.n_control
        );
    }
    let recs = estimate_all(&res, &d)?;
    for r in recs.iter().filter(|r| r.treated) {
        println!("unit {} -> CATE {:+.2} via group {}", r.unit_id, r.cate, r.group_id);
    }
    println!("ATT {:.3}, stop: {}", ate(&recs)?, res.stop_reason);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
