// Write a dataset and a match run to disk in the command-line formats, then
// read them back.

use std::error::Error;
use std::fs::File;

use aemr::io::{read_cates_csv, read_dataset, read_groups_jsonl, write_cates_csv, write_dataset_csv, write_groups_jsonl};
use aemr::{estimate_all, gen_scenario, run, CsvOptions, DgpSpec, EngineConfig, WeightVector};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let dir = std::env::temp_dir().join(format!("aemr-formats-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let g = gen_scenario(&DgpSpec::noise(100, 100, 1.0, 0.5, 4))?;
    write_dataset_csv(File::create(dir.join("data.csv"))?, &g.data, &[("true_cate", &g.true_cate)])?;

    let opts = CsvOptions { drop_cols: vec!["true_cate".into()], ..CsvOptions::new("T", "Y") };
    let d = read_dataset(dir.join("data.csv"), &opts)?;
    let res = run(&d, None, &EngineConfig::fixed(WeightVector::uniform(d.p())))?;
    let recs = estimate_all(&res, &d)?;
    write_groups_jsonl(File::create(dir.join("groups.jsonl"))?, &res, &d)?;
    write_cates_csv(File::create(dir.join("cates.csv"))?, &recs, &res)?;

    let groups = read_groups_jsonl(File::open(dir.join("groups.jsonl"))?)?;
    let cates = read_cates_csv(File::open(dir.join("cates.csv"))?)?;
    println!("{} groups, {} CATE rows under {}", groups.len(), cates.len(), dir.display());
    if let Some(first) = groups.first() {
        println!("first group {} keyed on {:?} = {:?}", first.id, first.retained, first.key_values);
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
