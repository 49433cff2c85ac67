// Covariate importance decays exponentially. Compare how many covariates
// units match on under lattice search versus dropping one covariate at a
// time in fixed order.

use std::error::Error;

use aemr::bitgroup::grouped_mr;
use aemr::covset::CovariateSet;
use aemr::state::MatchState;
use aemr::{gen_scenario, run, DgpSpec, EngineConfig, StopRules, WeightVector};

fn matched_sizes(state: &MatchState) -> Vec<usize> {
    let mut v: Vec<(u32, usize, usize)> = (0..state.n())
        .filter_map(|u| state.main_group_of(u).map(|g| (g.id.iteration, u, g.retained.len())))
        .collect();
    v.sort();
    v.into_iter().map(|x| x.2).collect()
}

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let g = gen_scenario(&DgpSpec::exp_decay(1000, 1000, 12, 2))?;
    let d = &g.data;
    let w = WeightVector::new(g.model.alpha.clone())?;

    let mut stop = StopRules::exhaustive();
    stop.exhaust_treated = false;
    let lattice = matched_sizes(&run(d, None, &EngineConfig::fixed(w.clone()).with_stop(stop))?.state);

    let mut order: Vec<usize> = (0..d.p()).collect();
    order.sort_by(|&a, &b| w.as_slice()[a].total_cmp(&w.as_slice()[b]));
    let mut state = MatchState::new(d.n());
    let mut dropped = CovariateSet::empty();
    grouped_mr(d, &dropped, 0, &mut state);
    for (i, &j) in order.iter().take(d.p() - 1).enumerate() {
        dropped.insert(j);
        grouped_mr(d, &dropped, i as u32 + 1, &mut state);
    }
    let single = matched_sizes(&state);

    for f in [0.3, 0.5, 0.6, 0.8] {
        let m = (f * d.n() as f64) as usize;
        let mean = |v: &[usize]| v.iter().take(m).sum::<usize>() as f64 / m.min(v.len()).max(1) as f64;
        println!("first {:>3.0}%: lattice {:.2} vs one-at-a-time {:.2}", 100.0 * f, mean(&lattice), mean(&single));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
