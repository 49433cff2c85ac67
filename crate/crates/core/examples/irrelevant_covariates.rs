// Five covariates drive the outcome and ten are noise. Learn weights on a
// holdout, stop before any important covariate is dropped, and check how
// many treated units kept all five.

use std::error::Error;

use aemr::covset::CovariateSet;
use aemr::holdout::{largest_gap_threshold, permutation_importance, weights_from_scores};
use aemr::{estimate_all, gen_scenario, run, DgpSpec, EngineConfig, StopRules};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let g = gen_scenario(&DgpSpec::irrelevant(600, 600, 1))?;
    let scores = permutation_importance(&g.holdout, 20, 0.0, 1)?;
    let w = weights_from_scores(&scores)?;
    let cut = largest_gap_threshold(&w).ok_or("no gap in weights")?;
    println!("weights: {:.3?}", w.as_slice());
    println!("stop before dropping weight > {cut:.3}");

    let mut stop = StopRules::exhaustive();
    stop.early_stop_weight = Some(cut);
    let res = run(&g.data, None, &EngineConfig::fixed(w).with_stop(stop))?;
    let important: CovariateSet = (0..5).collect();
    let d = &g.data;
    let treated: Vec<usize> = (0..d.n()).filter(|&u| d.is_treated(u)).collect();
    let kept = treated.iter().filter(|&&u| res.retained_of(u).is_some_and(|r| important.is_subset(r))).count();
    println!("{kept}/{} treated matched on all important covariates ({})", treated.len(), res.stop_reason);

    let recs = estimate_all(&res, d)?;
    let mse = recs.iter().filter(|r| r.treated).map(|r| (r.cate - g.true_cate[r.unit_id]).powi(2)).sum::<f64>()
        / recs.iter().filter(|r| r.treated).count().max(1) as f64;
    println!("CATT mean squared error {mse:.4}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
