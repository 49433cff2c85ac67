// Covariates with missing cells: a unit is never grouped on a covariate it
// lacks, but can still match once that covariate is dropped.

use std::error::Error;

use aemr::{estimate_all, gen_scenario, run, DgpSpec, EngineConfig, WeightVector};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let g = gen_scenario(&DgpSpec::missing(600, 200, 8, 0.2, 3))?;
    let d = &g.data;
    let cells = d.missing_mask().map_or(0, |m| m.iter().filter(|&&x| x).count());
    println!("{cells} of {} cells missing", d.n() * d.p());

    let res = run(d, None, &EngineConfig::fixed(WeightVector::uniform(d.p())).with_missing(true))?;
    let bad = res
        .groups()
        .iter()
        .flat_map(|g| g.members.iter().flat_map(move |&u| g.retained.iter().map(move |j| (u, j))))
        .filter(|&(u, j)| d.is_missing(u, j))
        .count();
    println!("{} groups, {bad} matched on a missing value", res.groups().len());

    let recs = estimate_all(&res, d)?;
    let treated = recs.iter().filter(|r| r.treated).count();
    println!("{treated}/{} treated units have a CATE", d.n_treated());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
