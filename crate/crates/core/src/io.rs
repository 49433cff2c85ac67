//! CSV ingestion and the run output formats.
//!
//! Outputs of a matching run:
//! - `groups.jsonl`: one matched group per line.
//! - `cates.csv`: one row per matched unit.
//! - `trace.csv`: one row per iteration.
//! - `manifest.json`: inputs, config echo, output digests.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::covset::{CovariateSet, WeightVector};
use crate::data::{CovariateSpec, Dataset};
use crate::engine::MatchResult;
use crate::error::{AemrError, Result, ValidationIssue};
use crate::estimate::{group_cate, CateRecord};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvOptions {
    pub treatment: String,
    pub outcome: String,
    pub drop_cols: Vec<String>,
    /// Empty cells become the missing level; otherwise they are errors.
    pub missing: bool,
}

impl CsvOptions {
    pub fn new(treatment: impl Into<String>, outcome: impl Into<String>) -> Self {
        Self {
            treatment: treatment.into(),
            outcome: outcome.into(),
            drop_cols: Vec::new(),
            missing: false,
        }
    }
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_table<R: Read>(r: R) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        rows.push(rec?.iter().map(|c| c.trim().to_string()).collect());
    }
    Ok(Table { header, rows })
}

fn column(header: &[String], name: &str) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| AemrError::ColumnNotFound(name.to_string()))
}

/// Distinct labels in code order: numeric order when every label is an
/// integer, lexicographic otherwise.
fn level_order(values: BTreeSet<&str>) -> Vec<String> {
    let mut v: Vec<&str> = values.into_iter().collect();
    if v.iter().all(|s| s.parse::<i64>().is_ok()) {
        v.sort_by_key(|s| s.parse::<i64>().expect("checked"));
    }
    v.into_iter().map(str::to_string).collect()
}

fn build(table: Table, opts: &CsvOptions, template: Option<&[CovariateSpec]>) -> Result<Dataset> {
    let t_col = column(&table.header, &opts.treatment)?;
    let y_col = column(&table.header, &opts.outcome)?;
    for c in &opts.drop_cols {
        column(&table.header, c)?;
    }
    let cov_cols: Vec<usize> = (0..table.header.len())
        .filter(|&c| c != t_col && c != y_col && !opts.drop_cols.contains(&table.header[c]))
        .collect();

    let mut issues = Vec::new();
    let n = table.rows.len();
    for r in &table.rows {
        if r.len() != table.header.len() {
            issues.push(ValidationIssue::RaggedRows {
                expected: table.header.len(),
                found: r.len(),
            });
        }
    }
    if !issues.is_empty() {
        return Err(AemrError::Validation(issues));
    }

    let specs: Vec<CovariateSpec> = match template {
        Some(t) => {
            if t.len() != cov_cols.len() {
                return Err(AemrError::DimensionMismatch {
                    expected: t.len(),
                    found: cov_cols.len(),
                });
            }
            for (spec, &c) in t.iter().zip(&cov_cols) {
                if spec.name != table.header[c] {
                    return Err(AemrError::ColumnNotFound(spec.name.clone()));
                }
                if opts.missing && !spec.labels.last().is_some_and(String::is_empty) {
                    return Err(AemrError::Config(format!("covariate {:?} has no missing level", spec.name)));
                }
            }
            t.to_vec()
        }
        None => cov_cols
            .iter()
            .map(|&c| {
                let values: BTreeSet<&str> =
                    table.rows.iter().map(|r| r[c].as_str()).filter(|s| !s.is_empty()).collect();
                let mut labels = level_order(values);
                let mut pad = 0;
                while labels.len() < 2 {
                    labels.push(format!("__unused_{pad}"));
                    pad += 1;
                }
                if opts.missing {
                    labels.push(String::new());
                }
                CovariateSpec::with_labels(table.header[c].clone(), labels)
            })
            .collect(),
    };
    let lookup: Vec<HashMap<&str, u32>> = specs
        .iter()
        .map(|s| {
            s.labels
                .iter()
                .enumerate()
                .filter(|(_, l)| !l.is_empty())
                .map(|(i, l)| (l.as_str(), i as u32))
                .collect()
        })
        .collect();

    let p = cov_cols.len();
    let mut codes = Vec::with_capacity(n * p);
    let mut mask = opts.missing.then(|| Vec::with_capacity(n * p));
    let mut treatment = Vec::with_capacity(n);
    let mut outcome = Vec::with_capacity(n);
    for (row, r) in table.rows.iter().enumerate() {
        for (j, &c) in cov_cols.iter().enumerate() {
            let cell = r[c].as_str();
            if cell.is_empty() {
                match mask.as_mut() {
                    Some(m) => {
                        m.push(true);
                        codes.push(specs[j].arity - 1);
                    }
                    None => {
                        return Err(AemrError::Parse(format!(
                            "row {row}, column {:?}: empty cell (enable missing-value handling)",
                            specs[j].name
                        )))
                    }
                }
                continue;
            }
            match lookup[j].get(cell) {
                Some(&code) => codes.push(code),
                None => {
                    return Err(AemrError::Parse(format!(
                        "row {row}, column {:?}: unknown level {cell:?}",
                        specs[j].name
                    )))
                }
            }
            if let Some(m) = mask.as_mut() {
                m.push(false);
            }
        }
        match r[t_col].as_str() {
            "0" => treatment.push(0),
            "1" => treatment.push(1),
            other => match other.parse::<u8>() {
                Ok(value) => {
                    issues.push(ValidationIssue::NonBinaryTreatment { row, value });
                    treatment.push(0);
                }
                Err(_) => {
                    return Err(AemrError::Parse(format!(
                        "row {row}, column {:?}: treatment {other:?} is not 0 or 1",
                        opts.treatment
                    )))
                }
            },
        }
        match r[y_col].parse::<f64>() {
            Ok(y) => outcome.push(y),
            Err(_) => {
                return Err(AemrError::Parse(format!(
                    "row {row}, column {:?}: outcome {:?} is not a number",
                    opts.outcome, r[y_col]
                )))
            }
        }
    }
    if !issues.is_empty() {
        return Err(AemrError::Validation(issues));
    }
    if template.is_some() && !opts.missing && specs.iter().any(|s| s.labels.last().is_some_and(String::is_empty)) {
        // Template carries a missing level; keep the mask shape consistent.
        mask = Some(vec![false; n * p]);
    }
    Dataset::new(specs, codes, treatment, outcome, mask)
}

pub fn read_dataset_from<R: Read>(r: R, opts: &CsvOptions) -> Result<Dataset> {
    build(read_table(r)?, opts, None)
}

pub fn read_dataset(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<Dataset> {
    read_dataset_from(File::open(path)?, opts)
}

/// Reads a second table (e.g. a holdout) using `template`'s covariate
/// levels, so equal labels get equal codes.
pub fn read_dataset_like(path: impl AsRef<Path>, opts: &CsvOptions, template: &Dataset) -> Result<Dataset> {
    build(read_table(File::open(path)?)?, opts, Some(template.specs()))
}

/// Writes covariates by label (missing cells empty), then `T`, `Y`, and any
/// extra numeric columns.
pub fn write_dataset_csv<W: Write>(w: W, d: &Dataset, extra: &[(&str, &[f64])]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header: Vec<String> = d.names().iter().map(|s| s.to_string()).collect();
    header.push("T".into());
    header.push("Y".into());
    header.extend(extra.iter().map(|(n, _)| n.to_string()));
    wtr.write_record(&header)?;
    for u in 0..d.n() {
        let mut rec: Vec<String> = (0..d.p())
            .map(|j| {
                if d.is_missing(u, j) {
                    String::new()
                } else {
                    d.specs()[j].label(d.code(u, j))
                }
            })
            .collect();
        rec.push(d.treatment()[u].to_string());
        rec.push(d.outcome()[u].to_string());
        rec.extend(extra.iter().map(|(_, v)| v[u].to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

fn names_of(d: &Dataset, s: &CovariateSet) -> Vec<String> {
    s.iter().map(|j| d.specs()[j].name.clone()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberLine {
    pub unit: usize,
    pub role: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupLine {
    pub id: String,
    pub iteration: u32,
    pub rank: u32,
    pub dropped: Vec<String>,
    pub retained: Vec<String>,
    pub key_values: Vec<String>,
    pub n_treated: usize,
    pub n_control: usize,
    pub cate: f64,
    pub members: Vec<MemberLine>,
}

pub fn write_groups_jsonl<W: Write>(w: W, result: &MatchResult, d: &Dataset) -> Result<()> {
    let mut w = BufWriter::new(w);
    for g in &result.state.groups {
        let aux: BTreeSet<usize> = g.aux_members.iter().copied().collect();
        let line = GroupLine {
            id: g.id.to_string(),
            iteration: g.id.iteration,
            rank: g.id.rank,
            dropped: names_of(d, &g.dropped),
            retained: names_of(d, &g.retained),
            key_values: g
                .retained
                .iter()
                .zip(&g.key_values)
                .map(|(j, &v)| d.specs()[j].label(v))
                .collect(),
            n_treated: g.n_treated,
            n_control: g.n_control,
            cate: group_cate(g, d)?,
            members: g
                .members
                .iter()
                .map(|&u| MemberLine {
                    unit: u,
                    role: if aux.contains(&u) { "aux" } else { "main" }.into(),
                })
                .collect(),
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_groups_jsonl<R: Read>(r: R) -> Result<Vec<GroupLine>> {
    let mut out = Vec::new();
    for line in BufReader::new(r).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CateRow {
    pub unit_id: usize,
    pub group_id: String,
    pub treated: u8,
    pub cate: f64,
    pub n_treated: usize,
    pub n_control: usize,
    /// Auxiliary group ids separated by `;`.
    pub aux_groups: String,
}

pub fn write_cates_csv<W: Write>(w: W, records: &[CateRecord], result: &MatchResult) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in records {
        let aux: Vec<String> = result.state.auxiliary[r.unit_id]
            .iter()
            .map(|&g| result.state.groups[g].id.to_string())
            .collect();
        wtr.serialize(CateRow {
            unit_id: r.unit_id,
            group_id: r.group_id.to_string(),
            treated: r.treated as u8,
            cate: r.cate,
            n_treated: r.n_treated,
            n_control: r.n_control,
            aux_groups: aux.join(";"),
        })?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_cates_csv<R: Read>(r: R) -> Result<Vec<CateRow>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(Into::into)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: u32,
    /// Dropped covariate names separated by `;`.
    pub dropped: String,
    pub retained_weight: f64,
    pub pe: Option<f64>,
    pub bf: Option<f64>,
    pub mq: Option<f64>,
    pub new_treated: usize,
    pub new_control: usize,
    pub groups: usize,
    pub unmatched_treated: usize,
    pub unmatched_control: usize,
}

pub fn write_trace_csv<W: Write>(w: W, result: &MatchResult, d: &Dataset) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in result.trace() {
        wtr.serialize(TraceRow {
            iteration: r.iteration,
            dropped: names_of(d, &r.dropped).join(";"),
            retained_weight: r.retained_weight,
            pe: r.pe,
            bf: r.bf,
            mq: r.mq,
            new_treated: r.new_treated,
            new_control: r.new_control,
            groups: r.groups,
            unmatched_treated: r.unmatched_treated,
            unmatched_control: r.unmatched_control,
        })?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_trace_csv<R: Read>(r: R) -> Result<Vec<TraceRow>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(Into::into)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct WeightRow {
    covariate: String,
    weight: f64,
}

/// Reads `covariate,weight` rows; every covariate of `d` must appear once.
pub fn read_weights<R: Read>(r: R, d: &Dataset) -> Result<WeightVector> {
    let mut w = vec![None; d.p()];
    for row in csv::Reader::from_reader(r).deserialize::<WeightRow>() {
        let row = row?;
        let j = d
            .covariate_index(&row.covariate)
            .ok_or_else(|| AemrError::ColumnNotFound(row.covariate.clone()))?;
        if w[j].replace(row.weight).is_some() {
            return Err(AemrError::Config(format!("duplicate weight for {}", row.covariate)));
        }
    }
    let w: Vec<f64> = w
        .into_iter()
        .enumerate()
        .map(|(j, v)| v.ok_or_else(|| AemrError::Config(format!("no weight for {}", d.specs()[j].name))))
        .collect::<Result<_>>()?;
    WeightVector::new(w)
}

pub fn write_weights<W: Write>(w: W, d: &Dataset, weights: &WeightVector) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for (spec, &v) in d.specs().iter().zip(weights.as_slice()) {
        wtr.serialize(WeightRow {
            covariate: spec.name.clone(),
            weight: v,
        })?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRow {
    pub covariate: String,
    pub score: f64,
    pub weight: f64,
}

/// Importance table sorted by ascending score, ties by name.
pub fn importance_rows(d: &Dataset, scores: &[f64], weights: &WeightVector) -> Vec<ImportanceRow> {
    let mut rows: Vec<ImportanceRow> = d
        .specs()
        .iter()
        .zip(scores)
        .zip(weights.as_slice())
        .map(|((s, &score), &weight)| ImportanceRow {
            covariate: s.name.clone(),
            score,
            weight,
        })
        .collect();
    rows.sort_by(|a, b| a.score.total_cmp(&b.score).then_with(|| a.covariate.cmp(&b.covariate)));
    rows
}

pub fn write_importance<W: Write>(w: W, rows: &[ImportanceRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_importance<R: Read>(r: R) -> Result<Vec<ImportanceRow>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(Into::into)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: impl AsRef<Path>) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: impl AsRef<Path>, display: impl Into<String>) -> Result<Self> {
        Ok(Self {
            path: display.into(),
            sha256: sha256_file(path)?,
        })
    }
}

/// Reproduction record for one invocation. Wall-clock timings live in a
/// separate file so the manifest itself is deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub engine_version: String,
    pub command: String,
    pub seed: u64,
    pub inputs: Vec<FileDigest>,
    pub config: serde_json::Value,
    pub outputs: Vec<FileDigest>,
    pub timing_file: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub name: String,
    pub seconds: f64,
}

pub fn write_json_pretty<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}
