// Adaptive selection: each iteration scores the active sets by
// `C * balance - prediction error` on a holdout and drops the best one.

use std::error::Error;

use aemr::{gen_scenario, run, DgpSpec, EngineConfig, WeightVector};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let g = gen_scenario(&DgpSpec::noise(400, 400, 1.0, 1.0, 5))?;
    let cfg = EngineConfig::adaptive(WeightVector::uniform(g.data.p()), 0.1);
    let res = run(&g.data, Some(&g.holdout), &cfg)?;
    println!("{:>4} {:<20} {:>8} {:>6} {:>8} {:>5}", "iter", "dropped", "PE", "BF", "MQ", "new");
    for r in res.trace().iter().filter(|r| r.new_treated + r.new_control > 0).take(12) {
        println!(
            "{:>4} {:<20} {:>8.3} {:>6.3} {:>8.3} {:>5}",
            r.iteration,
            r.dropped.to_string(),
            r.pe.unwrap_or(f64::NAN),
            r.bf.unwrap_or(f64::NAN),
            r.mq.unwrap_or(f64::NAN),
            r.new_treated + r.new_control
        );
    }
    println!("{} iterations, stop: {}", res.trace().len(), res.stop_reason);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
