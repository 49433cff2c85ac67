//! Naive reference solutions to the matching problem.
//!
//! [`brute_pairwise`] compares every treated unit with every control
//! directly. [`brute_enumerate`] walks all `2^p` covariate subsets in weight
//! order. Both exist to be obviously correct, not fast.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bitgroup::grouped_mr;
use crate::covset::{set_weight, CovariateSet, WeightVector};
use crate::data::{validate_for_matching, CovariateSpec, Dataset};
use crate::engine::{record, EngineConfig, MatchResult, StopReason, StopRules};
use crate::error::{AemrError, Result};
use crate::state::MatchState;

pub const DEFAULT_ENUMERATE_CAP: usize = 16;

/// Best match for one treated unit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairwiseMatch {
    pub unit: usize,
    /// Maximum retained weight over all controls.
    pub optimal_weight: f64,
    /// The dropped set achieving it, chosen by the engine's tie rule.
    pub witness: CovariateSet,
    /// True when the best control agrees on no observed covariate.
    pub degenerate: bool,
    /// Every unit agreeing with `unit` on the retained covariates.
    pub main_group: Vec<usize>,
}

/// Covariates on which `a` and `b` differ or either is missing.
fn disagreement(d: &Dataset, a: usize, b: usize) -> CovariateSet {
    (0..d.p())
        .filter(|&j| d.is_missing(a, j) || d.is_missing(b, j) || d.code(a, j) != d.code(b, j))
        .collect()
}

fn agrees_on(d: &Dataset, a: usize, b: usize, retained: &CovariateSet) -> bool {
    retained
        .iter()
        .all(|j| !d.is_missing(a, j) && !d.is_missing(b, j) && d.code(a, j) == d.code(b, j))
}

/// Orders dropped sets the way the engine processes them: heavier retained
/// weight first, then fewer dropped covariates, then lexicographically.
fn order_key(a: &(f64, CovariateSet), b: &(f64, CovariateSet)) -> std::cmp::Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1))
}

/// For each treated unit, scans every control and keeps the best agreement.
pub fn brute_pairwise(d: &Dataset, w: &WeightVector) -> Result<Vec<PairwiseMatch>> {
    validate_for_matching(d)?;
    if w.len() != d.p() {
        return Err(AemrError::DimensionMismatch {
            expected: d.p(),
            found: w.len(),
        });
    }
    let p = d.p();
    let full = CovariateSet::full(p);
    let treated: Vec<usize> = (0..d.n()).filter(|&u| d.is_treated(u)).collect();
    let controls: Vec<usize> = (0..d.n()).filter(|&u| !d.is_treated(u)).collect();
    Ok(treated
        .par_iter()
        .map(|&t| {
            let best = controls
                .iter()
                .map(|&c| {
                    let s = disagreement(d, t, c);
                    (set_weight(&s, w).expect("sized"), s)
                })
                .min_by(order_key)
                .expect("at least one control");
            let degenerate = best.1 == full;
            let retained = best.1.complement(p);
            let main_group = if degenerate {
                Vec::new()
            } else {
                (0..d.n()).filter(|&u| agrees_on(d, t, u, &retained)).collect()
            };
            PairwiseMatch {
                unit: t,
                optimal_weight: best.0,
                witness: best.1,
                degenerate,
                main_group,
            }
        })
        .collect())
}

/// Every non-full dropped set in processing order.
pub fn enumeration_order(p: usize, w: &WeightVector) -> Vec<CovariateSet> {
    let mut all: Vec<(f64, CovariateSet)> = (0u64..(1u64 << p) - 1)
        .map(|mask| {
            let s: CovariateSet = (0..p).filter(|j| mask >> j & 1 == 1).collect();
            (set_weight(&s, w).expect("sized"), s)
        })
        .collect();
    all.sort_by(order_key);
    all.into_iter().map(|(_, s)| s).collect()
}

/// Runs the grouping step for every dropped set in weight order, with no
/// early exit. The full set (matching on nothing) is skipped.
pub fn brute_enumerate(d: &Dataset, w: &WeightVector) -> Result<MatchResult> {
    brute_enumerate_capped(d, w, DEFAULT_ENUMERATE_CAP)
}

pub fn brute_enumerate_capped(d: &Dataset, w: &WeightVector, cap: usize) -> Result<MatchResult> {
    let start = Instant::now();
    validate_for_matching(d)?;
    if d.p() > cap || d.p() >= 64 {
        return Err(AemrError::OracleCap { p: d.p(), cap });
    }
    if w.len() != d.p() {
        return Err(AemrError::DimensionMismatch {
            expected: d.p(),
            found: w.len(),
        });
    }
    let cfg = EngineConfig::fixed(w.clone())
        .with_stop(StopRules::exhaustive())
        .with_missing(d.has_missing());
    let mut state = MatchState::new(d.n());
    for (i, s) in enumeration_order(d.p(), w).iter().enumerate() {
        let out = grouped_mr(d, s, i as u32, &mut state);
        let rec = record(d, &state, i as u32, s, &cfg, &out, None, None);
        state.trace.push(rec);
    }
    Ok(MatchResult {
        state,
        config: cfg,
        stop_reason: StopReason::LatticeEmpty,
        elapsed: start.elapsed(),
    })
}

/// Random instance with `n` in `n_range`, `p` in `p_range` (both inclusive),
/// binary or ternary covariates, and integer weights in `1..=9`. Unit 0 is
/// treated and unit 1 a control.
pub fn random_instance(seed: u64, n_range: (usize, usize), p_range: (usize, usize)) -> (Dataset, WeightVector) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(n_range.0.max(2)..=n_range.1.max(2));
    let p = rng.random_range(p_range.0.max(1)..=p_range.1.max(1));
    let arity: Vec<u32> = (0..p).map(|_| rng.random_range(2..=3)).collect();
    let specs = (0..p).map(|j| CovariateSpec::new(format!("x{j}"), arity[j])).collect();
    let codes = (0..n).flat_map(|_| arity.clone()).map(|a| rng.random_range(0..a)).collect();
    let t = (0..n)
        .map(|u| match u {
            0 => 1,
            1 => 0,
            _ => rng.random_bool(0.5) as u8,
        })
        .collect();
    let y = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let w = (0..p).map(|_| rng.random_range(1..=9) as f64).collect();
    (
        Dataset::new(specs, codes, t, y, None).expect("valid by construction"),
        WeightVector::new(w).expect("positive"),
    )
}

/// One disagreement between a candidate result and the pairwise optimum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mismatch {
    pub source: &'static str,
    pub unit: usize,
    pub expected_weight: Option<f64>,
    pub found_weight: Option<f64>,
    pub expected_witness: Option<CovariateSet>,
    pub found_witness: Option<CovariateSet>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub treated: usize,
    pub degenerate: usize,
    pub engine_weight_agree: usize,
    pub engine_witness_agree: usize,
    /// `None` when `p` exceeds the enumeration cap.
    pub enumerate_weight_agree: Option<usize>,
    pub enumerate_witness_agree: Option<usize>,
    pub mismatches: Vec<Mismatch>,
}

impl EquivalenceReport {
    pub fn all_agree(&self) -> bool {
        self.mismatches.is_empty()
    }

    pub fn agreement(&self) -> f64 {
        if self.treated == 0 {
            1.0
        } else {
            self.engine_weight_agree as f64 / self.treated as f64
        }
    }

    pub fn merge(&mut self, other: EquivalenceReport) {
        self.treated += other.treated;
        self.degenerate += other.degenerate;
        self.engine_weight_agree += other.engine_weight_agree;
        self.engine_witness_agree += other.engine_witness_agree;
        self.enumerate_weight_agree = match (self.enumerate_weight_agree, other.enumerate_weight_agree) {
            (Some(a), Some(b)) => Some(a + b),
            (a, b) => a.or(b),
        };
        self.enumerate_witness_agree = match (self.enumerate_witness_agree, other.enumerate_witness_agree) {
            (Some(a), Some(b)) => Some(a + b),
            (a, b) => a.or(b),
        };
        self.mismatches.extend(other.mismatches);
    }
}

fn compare(
    source: &'static str,
    expected: &PairwiseMatch,
    found: Option<(f64, &CovariateSet)>,
    weight_ok: &mut usize,
    witness_ok: &mut usize,
    mismatches: &mut Vec<Mismatch>,
) {
    let (ew, es) = if expected.degenerate {
        (None, None)
    } else {
        (Some(expected.optimal_weight), Some(&expected.witness))
    };
    let (fw, fs) = match found {
        Some((w, s)) => (Some(w), Some(s)),
        None => (None, None),
    };
    let w_eq = ew == fw;
    let s_eq = es == fs;
    *weight_ok += w_eq as usize;
    *witness_ok += s_eq as usize;
    if !(w_eq && s_eq) {
        mismatches.push(Mismatch {
            source,
            unit: expected.unit,
            expected_weight: ew,
            found_weight: fw,
            expected_witness: es.cloned(),
            found_witness: fs.cloned(),
        });
    }
}

/// Runs `engine` in fixed mode to exhaustion and compares each treated
/// unit's main group against both oracles. Degenerate pairwise optima must
/// leave the unit unmatched. `engine` is a parameter so the harness can be
/// pointed at a deliberately broken implementation.
pub fn check_equivalence_with<F>(d: &Dataset, w: &WeightVector, engine: F) -> Result<EquivalenceReport>
where
    F: Fn(&Dataset, &EngineConfig) -> Result<MatchResult>,
{
    let pairwise = brute_pairwise(d, w)?;
    let cfg = EngineConfig::fixed(w.clone())
        .with_stop(StopRules::exhaustive())
        .with_missing(d.has_missing());
    let res = engine(d, &cfg)?;
    let enumerated = if d.p() <= DEFAULT_ENUMERATE_CAP {
        Some(brute_enumerate(d, w)?)
    } else {
        None
    };

    let mut rep = EquivalenceReport {
        enumerate_weight_agree: enumerated.as_ref().map(|_| 0),
        enumerate_witness_agree: enumerated.as_ref().map(|_| 0),
        ..Default::default()
    };
    fn found<'a>(r: &'a MatchResult, u: usize, w: &WeightVector) -> Option<(f64, &'a CovariateSet)> {
        r.state
            .main_group_of(u)
            .map(|g| (set_weight(&g.dropped, w).expect("sized"), &g.dropped))
    }
    for m in &pairwise {
        rep.treated += 1;
        rep.degenerate += m.degenerate as usize;
        compare(
            "engine",
            m,
            found(&res, m.unit, w),
            &mut rep.engine_weight_agree,
            &mut rep.engine_witness_agree,
            &mut rep.mismatches,
        );
        if let Some(e) = &enumerated {
            let (mut wa, mut sa) = (0, 0);
            compare("enumerate", m, found(e, m.unit, w), &mut wa, &mut sa, &mut rep.mismatches);
            *rep.enumerate_weight_agree.as_mut().expect("set") += wa;
            *rep.enumerate_witness_agree.as_mut().expect("set") += sa;
        }
    }
    Ok(rep)
}

pub fn check_equivalence(d: &Dataset, w: &WeightVector) -> Result<EquivalenceReport> {
    check_equivalence_with(d, w, |d, cfg| crate::engine::run(d, None, cfg))
}
