// Group units by their codes on a retained covariate subset, then keep the
// groups that hold both a treated and a control unit.

use std::error::Error;

use aemr::bitgroup::{group_by, matched_by_counts, prune, KeyEncoder};
use aemr::covset::CovariateSet;
use aemr::data::CovariateSpec;
use aemr::Dataset;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let specs = vec![
        CovariateSpec::with_labels("region", vec!["north".into(), "south".into(), "west".into()]),
        CovariateSpec::with_labels("smoker", vec!["no".into(), "yes".into()]),
        CovariateSpec::new("age_band", 4),
    ];
    let rows = vec![vec![0, 1, 2], vec![0, 1, 3], vec![2, 0, 1], vec![2, 0, 1], vec![1, 1, 0], vec![0, 1, 2]];
    let t = [1, 0, 1, 1, 0, 0];
    let d = Dataset::from_rows(specs, &rows, &t, &[0.0; 6])?;

    let retained: CovariateSet = [0, 1].into_iter().collect();
    let enc = KeyEncoder::new(&d, &retained);
    println!("packed key: {}", enc.is_packed());
    let all: Vec<usize> = (0..d.n()).collect();
    let raw = group_by(&d, &retained, &all);
    for g in &raw.groups {
        let labels: Vec<String> = retained.iter().map(|j| d.specs()[j].label(d.code(g.members[0], j))).collect();
        println!("{:?} -> {:?}", labels, g.members);
    }
    let valid = prune(&d, raw.groups);
    println!("valid groups: {:?}", valid.iter().map(|g| &g.members).collect::<Vec<_>>());
    println!("matched by counts: {:?}", matched_by_counts(&d, &retained, &all));
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
