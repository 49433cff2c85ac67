//! The `aemr` command line.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.
//! Every flag can also be set in a TOML config file (`--config`), under a
//! table named after the subcommand, using the flag's long name as key.
//! Flags win over the file.

use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::covset::WeightVector;
use crate::data::Dataset;
use crate::engine::{run, EngineConfig, SelectionMode, StopRules};
use crate::error::{AemrError, Result};
use crate::estimate::{ate, estimate_all};
use crate::holdout::{largest_gap_threshold, permutation_importance, weights_from_scores};
use crate::io::{
    importance_rows, read_dataset, read_dataset_like, read_weights, write_cates_csv, write_dataset_csv,
    write_groups_jsonl, write_importance, write_json_pretty, write_trace_csv, write_weights, CsvOptions,
    FileDigest, Phase, RunManifest,
};
use crate::oracle::{brute_enumerate, brute_pairwise, check_equivalence_with, random_instance, EquivalenceReport};
use crate::synthgen::{gen_scenario, gen_uniform, DgpSpec, Scenario};

const FIXTURE_CSV: &str = include_str!("../fixtures/oracle60.csv");
const FIXTURE_WEIGHTS: &str = include_str!("../fixtures/oracle60_weights.csv");

#[derive(Debug, Parser)]
#[command(name = "aemr", version, about = "Almost-exact matching with replacement on categorical covariates")]
pub struct Cli {
    /// Worker threads (falls back to AEMR_THREADS).
    #[arg(long, global = true, env = "AEMR_THREADS")]
    pub threads: Option<usize>,
    /// TOML file with per-subcommand defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Match a CSV dataset and write groups, CATEs, trace and manifest.
    Match(MatchArgs),
    /// Compare the engine against the brute-force solutions.
    OracleCheck(OracleArgs),
    /// Generate a synthetic dataset and holdout.
    Simulate(SimulateArgs),
    /// Permutation importance of each covariate on a holdout.
    Importance(ImportanceArgs),
    /// Time the engine against the brute-force solutions.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Fixed,
    Adaptive,
}

#[derive(Debug, Args, Default)]
pub struct InputArgs {
    /// Treatment column (default T).
    #[arg(long)]
    pub treatment: Option<String>,
    /// Outcome column (default Y).
    #[arg(long)]
    pub outcome: Option<String>,
    /// Columns to ignore, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub drop_cols: Option<Vec<String>>,
    /// Treat empty cells as missing.
    #[arg(long)]
    pub missing: bool,
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub csv: InputArgs,
    /// `covariate,weight` CSV. Without it, weights come from holdout
    /// importance when a holdout is given, else all ones.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub holdout: Option<PathBuf>,
    /// PE/BF trade-off for adaptive mode.
    #[arg(long = "C")]
    pub c: Option<f64>,
    #[arg(long)]
    pub ridge: Option<f64>,
    /// Adaptive: stop when PE exceeds its iteration-0 value by this fraction.
    #[arg(long)]
    pub stop_pe_frac: Option<f64>,
    /// Adaptive: stop when treated and control matched fractions differ by
    /// more than this.
    #[arg(long)]
    pub stop_balance_gap: Option<f64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Fixed: stop before dropping a covariate heavier than this.
    #[arg(long)]
    pub early_stop_weight: Option<f64>,
    /// Fixed: derive the early-stop threshold from the widest weight gap.
    #[arg(long)]
    pub early_stop_auto: bool,
    /// Keep matching controls after every treated unit is matched.
    #[arg(long)]
    pub run_to_end: bool,
    /// Shuffles for holdout-derived weights.
    #[arg(long)]
    pub shuffles: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// Dataset to check; uses the bundled 60-unit fixture when omitted and
    /// no sweep is requested.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub csv: InputArgs,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Random sweep over this many seeded instances.
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Test hook: run a deliberately broken engine.
    #[arg(long, hide = true)]
    pub inject_fault: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scenario: Option<Scenario>,
    #[arg(long)]
    pub n_t: Option<usize>,
    #[arg(long)]
    pub n_c: Option<usize>,
    #[arg(long)]
    pub p_important: Option<usize>,
    #[arg(long)]
    pub p_irrelevant: Option<usize>,
    /// Imbalance: controls per treated unit.
    #[arg(long)]
    pub ratio: Option<usize>,
    #[arg(long)]
    pub u: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub noise_sd: Option<f64>,
    #[arg(long)]
    pub missing_rate: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (data.csv, holdout.csv, model.json, manifest.json).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ImportanceArgs {
    #[arg(long)]
    pub holdout: Option<PathBuf>,
    #[command(flatten)]
    pub csv: InputArgs,
    #[arg(long)]
    pub shuffles: Option<usize>,
    #[arg(long)]
    pub ridge: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Comma-separated `NxP` grid points.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<String>>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Config file contents: one table per subcommand.
struct ConfigFile {
    table: Option<toml::Table>,
}

impl ConfigFile {
    fn load(path: Option<&Path>, section: &str, known: &[&str]) -> Result<Self> {
        let Some(path) = path else { return Ok(Self { table: None }) };
        let text = fs::read_to_string(path)?;
        let root: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| AemrError::Config(format!("{}: {e}", path.display())))?;
        let table = match root.get(section) {
            Some(toml::Value::Table(t)) => t.clone(),
            Some(_) => return Err(AemrError::Config(format!("[{section}] must be a table"))),
            None => toml::Table::new(),
        };
        if let Some(k) = table.keys().find(|k| !known.contains(&k.as_str())) {
            return Err(AemrError::Config(format!("unknown key {k:?} in [{section}]")));
        }
        Ok(Self { table: Some(table) })
    }

    fn get<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>> {
        match self.table.as_ref().and_then(|t| t.get(key)) {
            None => Ok(None),
            Some(v) => v
                .clone()
                .try_into()
                .map(Some)
                .map_err(|e| AemrError::Config(format!("config key {key:?}: {e}"))),
        }
    }

    fn fill<T: DeserializeOwned>(&self, slot: &mut Option<T>, key: &str) -> Result<()> {
        if slot.is_none() {
            *slot = self.get(key)?;
        }
        Ok(())
    }

    fn flag(&self, slot: &mut bool, key: &str) -> Result<()> {
        if !*slot {
            *slot = self.get(key)?.unwrap_or(false);
        }
        Ok(())
    }
}

const INPUT_KEYS: &[&str] = &["treatment", "outcome", "drop-cols", "missing"];

fn fill_input(cfg: &ConfigFile, a: &mut InputArgs) -> Result<CsvOptions> {
    cfg.fill(&mut a.treatment, "treatment")?;
    cfg.fill(&mut a.outcome, "outcome")?;
    cfg.fill(&mut a.drop_cols, "drop-cols")?;
    cfg.flag(&mut a.missing, "missing")?;
    Ok(CsvOptions {
        treatment: a.treatment.clone().unwrap_or_else(|| "T".into()),
        outcome: a.outcome.clone().unwrap_or_else(|| "Y".into()),
        drop_cols: a.drop_cols.clone().unwrap_or_default(),
        missing: a.missing,
    })
}

fn keys(extra: &[&'static str]) -> Vec<&'static str> {
    INPUT_KEYS.iter().chain(extra).copied().collect()
}

fn required<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| AemrError::Config(format!("--{flag} is required")))
}

/// Exit code for an error: 2 for bad input or configuration, 1 otherwise.
pub fn exit_code(e: &AemrError) -> u8 {
    match e {
        AemrError::Io(_) | AemrError::Json(_) => 1,
        AemrError::Csv(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => 1,
        _ => 2,
    }
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn digest_outputs(dir: &Path, files: &[&str]) -> Result<Vec<FileDigest>> {
    files.iter().map(|f| FileDigest::of(dir.join(f), *f)).collect()
}

#[derive(Serialize)]
struct MatchConfigEcho<'a> {
    engine: &'a EngineConfig,
    treatment: &'a str,
    outcome: &'a str,
    drop_cols: &'a [String],
    weights_source: &'a str,
    shuffles: usize,
}

fn cmd_match(mut a: MatchArgs, cfg_path: Option<&Path>) -> Result<()> {
    let cfg = ConfigFile::load(
        cfg_path,
        "match",
        &keys(&[
            "input",
            "weights",
            "mode",
            "holdout",
            "C",
            "ridge",
            "stop-pe-frac",
            "stop-balance-gap",
            "max-iterations",
            "early-stop-weight",
            "early-stop-auto",
            "run-to-end",
            "shuffles",
            "seed",
            "out",
        ]),
    )?;
    let opts = fill_input(&cfg, &mut a.csv)?;
    cfg.fill(&mut a.input, "input")?;
    cfg.fill(&mut a.weights, "weights")?;
    cfg.fill(&mut a.mode, "mode")?;
    cfg.fill(&mut a.holdout, "holdout")?;
    cfg.fill(&mut a.c, "C")?;
    cfg.fill(&mut a.ridge, "ridge")?;
    cfg.fill(&mut a.stop_pe_frac, "stop-pe-frac")?;
    cfg.fill(&mut a.stop_balance_gap, "stop-balance-gap")?;
    cfg.fill(&mut a.max_iterations, "max-iterations")?;
    cfg.fill(&mut a.early_stop_weight, "early-stop-weight")?;
    cfg.flag(&mut a.early_stop_auto, "early-stop-auto")?;
    cfg.flag(&mut a.run_to_end, "run-to-end")?;
    cfg.fill(&mut a.shuffles, "shuffles")?;
    cfg.fill(&mut a.seed, "seed")?;
    cfg.fill(&mut a.out, "out")?;

    let input = required(a.input, "input")?;
    let out = required(a.out, "out")?;
    let mode = a.mode.unwrap_or(ModeArg::Fixed);
    let seed = a.seed.unwrap_or(0);
    let shuffles = a.shuffles.unwrap_or(100);
    let ridge = a.ridge.unwrap_or(0.0);
    let mut phases = Vec::new();

    let t0 = Instant::now();
    let d = read_dataset(&input, &opts)?;
    let holdout_opts = CsvOptions {
        missing: false,
        ..opts.clone()
    };
    let holdout = a
        .holdout
        .as_ref()
        .map(|h| read_dataset_like(h, &holdout_opts, &d))
        .transpose()?;
    phases.push(Phase {
        name: "load".into(),
        seconds: t0.elapsed().as_secs_f64(),
    });

    let t0 = Instant::now();
    let (weights, source) = match (&a.weights, &holdout) {
        (Some(path), _) => (read_weights(File::open(path)?, &d)?, "file"),
        (None, Some(h)) => {
            let scores = permutation_importance(h, shuffles, ridge, seed)?;
            (weights_from_scores(&scores)?, "holdout_importance")
        }
        (None, None) => (WeightVector::uniform(d.p()), "uniform"),
    };
    phases.push(Phase {
        name: "weights".into(),
        seconds: t0.elapsed().as_secs_f64(),
    });

    let mut stop = match mode {
        ModeArg::Fixed => StopRules::exhaustive(),
        ModeArg::Adaptive => StopRules::default(),
    };
    if let Some(v) = a.stop_pe_frac {
        stop.max_pe_degradation = Some(v);
    }
    if let Some(v) = a.stop_balance_gap {
        stop.max_balance_gap = Some(v);
    }
    stop.max_iterations = a.max_iterations;
    stop.exhaust_treated = !a.run_to_end;
    stop.early_stop_weight = a.early_stop_weight;
    if a.early_stop_auto && stop.early_stop_weight.is_none() {
        stop.early_stop_weight = largest_gap_threshold(&weights);
    }
    let engine_cfg = EngineConfig {
        mode: match mode {
            ModeArg::Fixed => SelectionMode::FixedWeight,
            ModeArg::Adaptive => SelectionMode::AdaptiveMq {
                tradeoff: a.c.unwrap_or(1.0),
                ridge_lambda: ridge,
            },
        },
        weights,
        stop,
        missing_enabled: d.has_missing(),
        seed,
    };

    let t0 = Instant::now();
    let result = run(&d, holdout.as_ref(), &engine_cfg)?;
    phases.push(Phase {
        name: "match".into(),
        seconds: t0.elapsed().as_secs_f64(),
    });

    let t0 = Instant::now();
    let records = estimate_all(&result, &d)?;
    phases.push(Phase {
        name: "estimate".into(),
        seconds: t0.elapsed().as_secs_f64(),
    });

    let t0 = Instant::now();
    fs::create_dir_all(&out)?;
    write_groups_jsonl(File::create(out.join("groups.jsonl"))?, &result, &d)?;
    write_cates_csv(File::create(out.join("cates.csv"))?, &records, &result)?;
    write_trace_csv(File::create(out.join("trace.csv"))?, &result, &d)?;
    write_weights(File::create(out.join("weights.csv"))?, &d, &engine_cfg.weights)?;
    phases.push(Phase {
        name: "write".into(),
        seconds: t0.elapsed().as_secs_f64(),
    });

    let mut inputs = vec![FileDigest::of(&input, display(&input))?];
    for p in [&a.holdout, &a.weights].into_iter().flatten() {
        inputs.push(FileDigest::of(p, display(p))?);
    }
    let manifest = RunManifest {
        engine_version: env!("CARGO_PKG_VERSION").into(),
        command: "match".into(),
        seed,
        inputs,
        config: serde_json::to_value(MatchConfigEcho {
            engine: &engine_cfg,
            treatment: &opts.treatment,
            outcome: &opts.outcome,
            drop_cols: &opts.drop_cols,
            weights_source: source,
            shuffles,
        })?,
        outputs: digest_outputs(&out, &["groups.jsonl", "cates.csv", "trace.csv", "weights.csv"])?,
        timing_file: Some("timing.json".into()),
    };
    write_json_pretty(out.join("manifest.json"), &manifest)?;
    write_json_pretty(out.join("timing.json"), &phases)?;

    let matched_t = records.iter().filter(|r| r.treated).count();
    println!(
        "matched treated: {matched_t}/{}; matched control: {}/{}; iterations: {}; stop: {}",
        d.n_treated(),
        records.len() - matched_t,
        d.n_control(),
        result.trace().len(),
        result.stop_reason
    );
    match ate(&records) {
        Ok(v) => println!("ATT estimate: {v}"),
        Err(_) => println!("ATT estimate: n/a"),
    }
    Ok(())
}

/// Reverses the weight vector before running: a deliberately wrong engine
/// for checking that the harness notices.
fn faulty_engine(d: &Dataset, cfg: &EngineConfig) -> Result<crate::engine::MatchResult> {
    let mut w = cfg.weights.as_slice().to_vec();
    w.reverse();
    let cfg = EngineConfig {
        weights: WeightVector::new(w)?,
        ..cfg.clone()
    };
    run(d, None, &cfg)
}

fn check(d: &Dataset, w: &WeightVector, fault: bool) -> Result<EquivalenceReport> {
    if fault {
        check_equivalence_with(d, w, faulty_engine)
    } else {
        check_equivalence_with(d, w, |d, cfg| run(d, None, cfg))
    }
}

fn cmd_oracle_check(mut a: OracleArgs, cfg_path: Option<&Path>) -> Result<bool> {
    let cfg = ConfigFile::load(cfg_path, "oracle-check", &keys(&["input", "weights", "trials", "seed", "out"]))?;
    let opts = fill_input(&cfg, &mut a.csv)?;
    cfg.fill(&mut a.input, "input")?;
    cfg.fill(&mut a.weights, "weights")?;
    cfg.fill(&mut a.trials, "trials")?;
    cfg.fill(&mut a.seed, "seed")?;
    cfg.fill(&mut a.out, "out")?;
    let seed = a.seed.unwrap_or(0);

    let (report, trials_ok, trials) = if let Some(trials) = a.trials {
        let mut total = EquivalenceReport::default();
        let mut ok = 0;
        for k in 0..trials {
            let (d, w) = random_instance(seed.wrapping_add(k as u64), (20, 300), (3, 10));
            let rep = check(&d, &w, a.inject_fault)?;
            ok += rep.all_agree() as usize;
            total.merge(rep);
        }
        (total, ok, trials)
    } else {
        let (d, w) = match &a.input {
            Some(path) => {
                let d = read_dataset(path, &opts)?;
                let w = match &a.weights {
                    Some(wp) => read_weights(File::open(wp)?, &d)?,
                    None => WeightVector::uniform(d.p()),
                };
                (d, w)
            }
            None => {
                let d = crate::io::read_dataset_from(FIXTURE_CSV.as_bytes(), &CsvOptions::new("T", "Y"))?;
                let w = read_weights(FIXTURE_WEIGHTS.as_bytes(), &d)?;
                (d, w)
            }
        };
        let rep = check(&d, &w, a.inject_fault)?;
        let ok = rep.all_agree() as usize;
        (rep, ok, 1)
    };

    println!("agreement: {}%", fmt_pct(report.agreement()));
    println!(
        "treated units: {}; optimal weight agree: {}; witness agree: {}; degenerate: {}",
        report.treated, report.engine_weight_agree, report.engine_witness_agree, report.degenerate
    );
    if let (Some(w), Some(s)) = (report.enumerate_weight_agree, report.enumerate_witness_agree) {
        println!("enumeration oracle: weight agree {w}; witness agree {s}");
    }
    if a.trials.is_some() {
        println!("trials: {trials_ok}/{trials} agreements");
    }
    for m in report.mismatches.iter().take(10) {
        eprintln!(
            "mismatch ({}): unit {} expected {:?} {:?}, found {:?} {:?}",
            m.source, m.unit, m.expected_weight, m.expected_witness, m.found_weight, m.found_witness
        );
    }
    if let Some(out) = &a.out {
        write_json_pretty(out, &report)?;
    }
    Ok(report.all_agree())
}

fn fmt_pct(x: f64) -> String {
    let v = 100.0 * x;
    if v == v.round() {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn cmd_simulate(mut a: SimulateArgs, cfg_path: Option<&Path>) -> Result<()> {
    let cfg = ConfigFile::load(
        cfg_path,
        "simulate",
        &[
            "scenario",
            "n-t",
            "n-c",
            "p-important",
            "p-irrelevant",
            "ratio",
            "u",
            "tau",
            "noise-sd",
            "missing-rate",
            "seed",
            "out",
        ],
    )?;
    if a.scenario.is_none() {
        a.scenario = cfg.get::<String>("scenario")?.map(|s| s.parse()).transpose()?;
    }
    cfg.fill(&mut a.n_t, "n-t")?;
    cfg.fill(&mut a.n_c, "n-c")?;
    cfg.fill(&mut a.p_important, "p-important")?;
    cfg.fill(&mut a.p_irrelevant, "p-irrelevant")?;
    cfg.fill(&mut a.ratio, "ratio")?;
    cfg.fill(&mut a.u, "u")?;
    cfg.fill(&mut a.tau, "tau")?;
    cfg.fill(&mut a.noise_sd, "noise-sd")?;
    cfg.fill(&mut a.missing_rate, "missing-rate")?;
    cfg.fill(&mut a.seed, "seed")?;
    cfg.fill(&mut a.out, "out")?;

    let scenario = required(a.scenario, "scenario")?;
    let out = required(a.out, "out")?;
    let seed = a.seed.unwrap_or(0);
    let n_t = a.n_t.unwrap_or(1000);
    let n_c = a.n_c.unwrap_or(1000);
    let mut spec = match scenario {
        Scenario::Irrelevant => DgpSpec::irrelevant(n_c, n_t, seed),
        Scenario::ExpDecay => DgpSpec::exp_decay(n_c, n_t, a.p_important.unwrap_or(15), seed),
        Scenario::Imbalance => DgpSpec::imbalance(n_t, a.ratio.unwrap_or(10), a.p_important.unwrap_or(15), seed),
        Scenario::Noise => DgpSpec::noise(n_c, n_t, a.tau.unwrap_or(0.25), a.noise_sd.unwrap_or(1.0), seed),
        Scenario::MissingCorrelated => {
            DgpSpec::missing(n_c, n_t, a.p_important.unwrap_or(10), a.missing_rate.unwrap_or(0.2), seed)
        }
    };
    if let Some(v) = a.p_important {
        spec.p_important = v;
    }
    if let Some(v) = a.p_irrelevant {
        spec.p_irrelevant = v;
    }
    if let Some(v) = a.u {
        spec.u = v;
    }
    if let Some(v) = a.tau {
        spec.tau = v;
    }
    if let Some(v) = a.noise_sd {
        spec.noise_sd = v;
    }
    if let Some(v) = a.missing_rate {
        spec.missing_rate = v;
    }
    let g = gen_scenario(&spec)?;

    fs::create_dir_all(&out)?;
    write_dataset_csv(File::create(out.join("data.csv"))?, &g.data, &[("true_cate", &g.true_cate)])?;
    write_dataset_csv(
        File::create(out.join("holdout.csv"))?,
        &g.holdout,
        &[("true_cate", &g.holdout_true_cate)],
    )?;
    write_json_pretty(out.join("model.json"), &g.model)?;
    let outputs = digest_outputs(&out, &["data.csv", "holdout.csv", "model.json"])?;
    let manifest = RunManifest {
        engine_version: env!("CARGO_PKG_VERSION").into(),
        command: "simulate".into(),
        seed,
        inputs: Vec::new(),
        config: serde_json::to_value(&spec)?,
        outputs,
        timing_file: None,
    };
    write_json_pretty(out.join("manifest.json"), &manifest)?;
    for o in &manifest.outputs {
        println!("{}  {}", o.sha256, o.path);
    }
    Ok(())
}

fn cmd_importance(mut a: ImportanceArgs, cfg_path: Option<&Path>) -> Result<()> {
    let cfg = ConfigFile::load(cfg_path, "importance", &keys(&["holdout", "shuffles", "ridge", "seed", "out"]))?;
    let opts = fill_input(&cfg, &mut a.csv)?;
    cfg.fill(&mut a.holdout, "holdout")?;
    cfg.fill(&mut a.shuffles, "shuffles")?;
    cfg.fill(&mut a.ridge, "ridge")?;
    cfg.fill(&mut a.seed, "seed")?;
    cfg.fill(&mut a.out, "out")?;
    let path = required(a.holdout, "holdout")?;
    let h = read_dataset(&path, &opts)?;
    let scores = permutation_importance(&h, a.shuffles.unwrap_or(100), a.ridge.unwrap_or(0.0), a.seed.unwrap_or(0))?;
    let w = weights_from_scores(&scores)?;
    let rows = importance_rows(&h, &scores, &w);
    match &a.out {
        Some(o) => write_importance(File::create(o)?, &rows),
        None => write_importance(std::io::stdout().lock(), &rows),
    }
}

#[derive(Serialize)]
struct BenchRow {
    n: usize,
    p: usize,
    method: &'static str,
    seconds: f64,
    matched_treated: usize,
}

fn parse_grid(grid: &[String]) -> Result<Vec<(usize, usize)>> {
    grid.iter()
        .map(|g| {
            let (n, p) = g
                .split_once(['x', 'X'])
                .ok_or_else(|| AemrError::Config(format!("grid point {g:?} is not NxP")))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| AemrError::Config(format!("grid point {g:?} is not NxP")))
            };
            Ok((parse(n)?, parse(p)?))
        })
        .collect()
}

fn cmd_bench(mut a: BenchArgs, cfg_path: Option<&Path>) -> Result<()> {
    let cfg = ConfigFile::load(cfg_path, "bench", &["grid", "seed", "out"])?;
    cfg.fill(&mut a.grid, "grid")?;
    cfg.fill(&mut a.seed, "seed")?;
    cfg.fill(&mut a.out, "out")?;
    let grid = parse_grid(&a.grid.unwrap_or_else(|| vec!["2000x14".into(), "20000x10".into()]))?;
    let seed = a.seed.unwrap_or(0);

    let mut rows = Vec::new();
    for (n, p) in grid {
        let d = gen_uniform(n, p, 2, seed)?;
        let w = WeightVector::new((1..=p).map(|j| j as f64).collect())?;
        let cfg = EngineConfig::fixed(w.clone());

        let t = Instant::now();
        let r = run(&d, None, &cfg)?;
        let matched = (0..n).filter(|&u| d.is_treated(u) && r.state.done[u]).count();
        rows.push(BenchRow { n, p, method: "engine", seconds: t.elapsed().as_secs_f64(), matched_treated: matched });

        if p <= crate::oracle::DEFAULT_ENUMERATE_CAP {
            let t = Instant::now();
            let r = brute_enumerate(&d, &w)?;
            let matched = (0..n).filter(|&u| d.is_treated(u) && r.state.done[u]).count();
            rows.push(BenchRow {
                n,
                p,
                method: "brute_enumerate",
                seconds: t.elapsed().as_secs_f64(),
                matched_treated: matched,
            });
        }

        let t = Instant::now();
        let m = brute_pairwise(&d, &w)?;
        rows.push(BenchRow {
            n,
            p,
            method: "brute_pairwise",
            seconds: t.elapsed().as_secs_f64(),
            matched_treated: m.iter().filter(|m| !m.degenerate).count(),
        });
    }
    let write = |w: &mut dyn std::io::Write| -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for r in &rows {
            wtr.serialize(r)?;
        }
        wtr.flush()?;
        Ok(())
    };
    match &a.out {
        Some(o) => write(&mut File::create(o)?),
        None => write(&mut std::io::stdout().lock()),
    }
}

fn dispatch(cli: Cli) -> Result<u8> {
    let cfg = cli.config.as_deref();
    if let Some(t) = cli.threads {
        // Ignore a second initialization within the same process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match cli.command {
        Command::Match(a) => cmd_match(a, cfg).map(|_| 0),
        Command::OracleCheck(a) => cmd_oracle_check(a, cfg).map(|ok| if ok { 0 } else { 1 }),
        Command::Simulate(a) => cmd_simulate(a, cfg).map(|_| 0),
        Command::Importance(a) => cmd_importance(a, cfg).map(|_| 0),
        Command::Bench(a) => cmd_bench(a, cfg).map(|_| 0),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn main() -> ExitCode {
    ExitCode::from(run_with_args(std::env::args_os()))
}
