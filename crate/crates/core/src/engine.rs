//! The dynamic matching loop.
//!
//! Iteration 0 matches exactly on every covariate. Each later iteration
//! picks the best active covariate set to drop, forms matched groups on the
//! remaining covariates over all units (matching with replacement), marks the
//! set processed, and activates the supersets it completes.

use std::collections::{BTreeSet, HashSet};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::bitgroup::{count_new_matches, grouped_mr};
use crate::covset::{set_weight, CovariateSet, WeightVector};
use crate::data::{validate_for_matching, Dataset};
use crate::error::{AemrError, Result};
use crate::holdout::{balancing_factor, match_quality, PeScorer};
use crate::lattice::LatticeState;
use crate::state::{IterationRecord, MatchState, MatchedGroup};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SelectionMode {
    /// Maximize retained weight `v_s · w`.
    FixedWeight,
    /// Maximize `C · BF(s) − PE(s)` against a holdout.
    AdaptiveMq { tradeoff: f64, ridge_lambda: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StopRules {
    /// Stop once no treated unit is unmatched. When false the run continues
    /// until every unit is matched or the lattice is exhausted.
    pub exhaust_treated: bool,
    /// Adaptive mode: stop when PE exceeds the iteration-0 PE by more than
    /// this fraction.
    pub max_pe_degradation: Option<f64>,
    /// Adaptive mode: stop when the per-iteration matched fractions of the
    /// two arms differ by more than this.
    pub max_balance_gap: Option<f64>,
    /// Maximum number of lattice iterations after iteration 0.
    pub max_iterations: Option<usize>,
    /// Fixed mode: stop before dropping any covariate whose weight exceeds
    /// this threshold.
    pub early_stop_weight: Option<f64>,
}

impl Default for StopRules {
    fn default() -> Self {
        Self {
            exhaust_treated: true,
            max_pe_degradation: Some(0.05),
            max_balance_gap: Some(0.10),
            max_iterations: None,
            early_stop_weight: None,
        }
    }
}

impl StopRules {
    /// Only the loop guards: run until treated units or the lattice run out.
    pub fn exhaustive() -> Self {
        Self {
            max_pe_degradation: None,
            max_balance_gap: None,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EngineConfig {
    pub mode: SelectionMode,
    /// Selection weights in fixed mode; reporting weights in adaptive mode.
    pub weights: WeightVector,
    pub stop: StopRules,
    pub missing_enabled: bool,
    pub seed: u64,
}

impl Serialize for WeightVector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.as_slice())
    }
}

impl EngineConfig {
    pub fn fixed(weights: WeightVector) -> Self {
        Self {
            mode: SelectionMode::FixedWeight,
            weights,
            stop: StopRules::exhaustive(),
            missing_enabled: false,
            seed: 0,
        }
    }

    pub fn adaptive(weights: WeightVector, tradeoff: f64) -> Self {
        Self {
            mode: SelectionMode::AdaptiveMq {
                tradeoff,
                ridge_lambda: 0.0,
            },
            weights,
            stop: StopRules::default(),
            missing_enabled: false,
            seed: 0,
        }
    }

    pub fn with_stop(mut self, stop: StopRules) -> Self {
        self.stop = stop;
        self
    }

    pub fn with_missing(mut self, enabled: bool) -> Self {
        self.missing_enabled = enabled;
        self
    }

    fn validate(&self, p: usize) -> Result<()> {
        if self.weights.len() != p {
            return Err(AemrError::DimensionMismatch {
                expected: p,
                found: self.weights.len(),
            });
        }
        for (name, v) in [
            ("max_pe_degradation", self.stop.max_pe_degradation),
            ("max_balance_gap", self.stop.max_balance_gap),
        ] {
            if let Some(v) = v {
                if !(0.0..=1.0).contains(&v) {
                    return Err(AemrError::Config(format!("{name} must lie in [0, 1], got {v}")));
                }
            }
        }
        if let SelectionMode::AdaptiveMq {
            tradeoff,
            ridge_lambda,
        } = self.mode
        {
            if !(tradeoff >= 0.0 && tradeoff.is_finite()) {
                return Err(AemrError::Config(format!("tradeoff C must be >= 0, got {tradeoff}")));
            }
            if !(ridge_lambda >= 0.0 && ridge_lambda.is_finite()) {
                return Err(AemrError::Config(format!("ridge lambda must be >= 0, got {ridge_lambda}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Exhausted,
    LatticeEmpty,
    PeDegraded,
    BalanceGap,
    ImportantCovariate,
    MaxIterations,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            StopReason::Exhausted => "exhausted",
            StopReason::LatticeEmpty => "lattice_empty",
            StopReason::PeDegraded => "pe_degraded",
            StopReason::BalanceGap => "balance_gap",
            StopReason::ImportantCovariate => "important_covariate",
            StopReason::MaxIterations => "max_iterations",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub state: MatchState,
    pub config: EngineConfig,
    pub stop_reason: StopReason,
    pub elapsed: Duration,
}

impl MatchResult {
    pub fn groups(&self) -> &[MatchedGroup] {
        &self.state.groups
    }

    pub fn trace(&self) -> &[IterationRecord] {
        &self.state.trace
    }

    /// Groups formed in each iteration, in iteration order.
    pub fn groups_by_iteration(&self) -> Vec<Vec<&MatchedGroup>> {
        let mut out: Vec<Vec<&MatchedGroup>> = vec![Vec::new(); self.state.trace.len()];
        for g in &self.state.groups {
            out[g.id.iteration as usize].push(g);
        }
        out
    }

    /// Retained set of `unit`'s main group, if matched.
    pub fn retained_of(&self, unit: usize) -> Option<&CovariateSet> {
        self.state.main_group_of(unit).map(|g| &g.retained)
    }

    /// Retained weight of `unit`'s main group under the run weights.
    pub fn matched_weight(&self, unit: usize) -> Option<f64> {
        self.state
            .main_group_of(unit)
            .map(|g| set_weight(&g.dropped, &self.config.weights).expect("weights sized to p"))
    }
}

/// Picks the highest-scoring active set. Ties go to the smaller set, then
/// the lexicographically smaller member list. `None` when nothing is active.
pub fn select_best<F>(active: &BTreeSet<CovariateSet>, mut score: F) -> Option<&CovariateSet>
where
    F: FnMut(&CovariateSet) -> f64,
{
    let mut best: Option<(&CovariateSet, f64)> = None;
    // BTreeSet iterates in tie-break order, so only a strict improvement wins.
    for s in active {
        let v = score(s);
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((s, v));
        }
    }
    best.map(|(s, _)| s)
}

/// Evaluates the stop rules against the trace after an iteration.
pub fn stopping_check(state: &MatchState, cfg: &EngineConfig, lattice_empty: bool) -> Option<StopReason> {
    let last = state.trace.last()?;
    let unmatched = last.unmatched_treated + last.unmatched_control;
    if last.unmatched_treated == 0 && (cfg.stop.exhaust_treated || unmatched == 0) {
        return Some(StopReason::Exhausted);
    }
    if lattice_empty {
        return Some(StopReason::LatticeEmpty);
    }
    let lattice_iters = state.trace.len() - 1;
    if lattice_iters > 0 && matches!(cfg.mode, SelectionMode::AdaptiveMq { .. }) {
        if let (Some(frac), Some(pe0), Some(pe)) =
            (cfg.stop.max_pe_degradation, state.trace[0].pe, last.pe)
        {
            if pe > pe0 * (1.0 + frac) && pe > pe0 {
                return Some(StopReason::PeDegraded);
            }
        }
        if let Some(gap) = cfg.stop.max_balance_gap {
            let rem_t = last.unmatched_treated + last.new_treated;
            let rem_c = last.unmatched_control + last.new_control;
            let frac = |m: usize, r: usize| if r == 0 { 0.0 } else { m as f64 / r as f64 };
            if (frac(last.new_treated, rem_t) - frac(last.new_control, rem_c)).abs() > gap {
                return Some(StopReason::BalanceGap);
            }
        }
    }
    if cfg.stop.max_iterations.is_some_and(|m| lattice_iters >= m) {
        return Some(StopReason::MaxIterations);
    }
    None
}

/// Per-candidate adaptive score.
#[derive(Debug, Clone, Copy)]
struct Score {
    pe: f64,
    mq: f64,
}

fn adaptive_scores(
    d: &Dataset,
    active: &BTreeSet<CovariateSet>,
    scorer: &PeScorer,
    done: &[bool],
    tradeoff: f64,
) -> Vec<(CovariateSet, Score)> {
    let rem_t = done.iter().zip(d.treatment()).filter(|(&x, &t)| !x && t == 1).count();
    let rem_c = done.iter().zip(d.treatment()).filter(|(&x, &t)| !x && t == 0).count();
    let cands: Vec<&CovariateSet> = active.iter().collect();
    cands
        .par_iter()
        .map(|s| {
            let pe = scorer.cached(s).unwrap_or_else(|| scorer.compute(s));
            let (mt, mc) = count_new_matches(d, s, done);
            let bf = balancing_factor(mc, rem_c, mt, rem_t);
            ((*s).clone(), Score { pe, mq: match_quality(pe, bf, tradeoff) })
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn record(
    d: &Dataset,
    state: &MatchState,
    iteration: u32,
    dropped: &CovariateSet,
    cfg: &EngineConfig,
    out: &crate::bitgroup::GroupedMrOutcome,
    pe: Option<f64>,
    tradeoff: Option<f64>,
) -> IterationRecord {
    let unmatched_treated = state.unmatched_count(d.treatment(), 1);
    let unmatched_control = state.unmatched_count(d.treatment(), 0);
    let bf = balancing_factor(
        out.new_control,
        unmatched_control + out.new_control,
        out.new_treated,
        unmatched_treated + out.new_treated,
    );
    IterationRecord {
        iteration,
        dropped: dropped.clone(),
        retained_weight: set_weight(dropped, &cfg.weights).expect("weights sized to p"),
        pe,
        bf: Some(bf),
        mq: pe.map(|pe| match_quality(pe, bf, tradeoff.unwrap_or(0.0))),
        new_treated: out.new_treated,
        new_control: out.new_control,
        groups: out.groups.len(),
        unmatched_treated,
        unmatched_control,
    }
}

/// Runs the matching loop on `d`. Adaptive mode requires `holdout`; in fixed
/// mode a holdout, when given, only adds PE values to the trace.
pub fn run(d: &Dataset, holdout: Option<&Dataset>, cfg: &EngineConfig) -> Result<MatchResult> {
    let start = Instant::now();
    validate_for_matching(d)?;
    if let Some(h) = holdout {
        validate_for_matching(h)?;
        if h.p() != d.p() {
            return Err(AemrError::DimensionMismatch {
                expected: d.p(),
                found: h.p(),
            });
        }
    }
    cfg.validate(d.p())?;
    if d.has_missing() != cfg.missing_enabled {
        return Err(AemrError::Config(
            "missing-value handling must be enabled exactly when the dataset carries a missing mask".into(),
        ));
    }
    let tradeoff = match cfg.mode {
        SelectionMode::AdaptiveMq { tradeoff, .. } => {
            if holdout.is_none() {
                return Err(AemrError::Config("adaptive mode requires a holdout dataset".into()));
            }
            Some(tradeoff)
        }
        SelectionMode::FixedWeight => None,
    };
    let ridge = match cfg.mode {
        SelectionMode::AdaptiveMq { ridge_lambda, .. } => ridge_lambda,
        SelectionMode::FixedWeight => 0.0,
    };
    let mut scorer = holdout.map(|h| PeScorer::new(h, ridge)).transpose()?;

    let p = d.p();
    let mut state = MatchState::new(d.n());
    let root = CovariateSet::empty();
    let out = grouped_mr(d, &root, 0, &mut state);
    let pe0 = scorer.as_mut().map(|s| s.pe(&root));
    let rec = record(d, &state, 0, &root, cfg, &out, pe0, tradeoff);
    state.trace.push(rec);

    // Dropping every covariate would match on nothing; never activate it.
    let mut lattice = LatticeState::new(p, p.saturating_sub(1));
    let mut iteration = 0u32;
    let stop_reason = loop {
        if let Some(reason) = stopping_check(&state, cfg, lattice.is_exhausted()) {
            break reason;
        }
        iteration += 1;

        let (chosen, pe) = match (&cfg.mode, scorer.as_mut()) {
            (SelectionMode::AdaptiveMq { tradeoff, .. }, Some(sc)) => {
                let scores = adaptive_scores(d, lattice.active(), sc, &state.done, *tradeoff);
                let mut best: Option<(CovariateSet, Score)> = None;
                for (s, score) in scores {
                    sc.insert(s.clone(), score.pe);
                    if best.as_ref().is_none_or(|(_, b)| score.mq > b.mq) {
                        best = Some((s, score));
                    }
                }
                let (s, score) = best.expect("lattice not exhausted");
                (s, Some(score.pe))
            }
            (_, sc) => {
                let s = select_best(lattice.active(), |s| {
                    set_weight(s, &cfg.weights).expect("weights sized to p")
                })
                .expect("lattice not exhausted")
                .clone();
                let pe = sc.map(|sc| sc.pe(&s));
                (s, pe)
            }
        };

        if let (SelectionMode::FixedWeight, Some(thr)) = (&cfg.mode, cfg.stop.early_stop_weight) {
            if chosen.iter().any(|j| cfg.weights.as_slice()[j] > thr) {
                break StopReason::ImportantCovariate;
            }
        }

        let out = grouped_mr(d, &chosen, iteration, &mut state);
        lattice.commit(&chosen);
        let rec = record(d, &state, iteration, &chosen, cfg, &out, pe, tradeoff);
        state.trace.push(rec);
    };

    Ok(MatchResult {
        state,
        config: cfg.clone(),
        stop_reason,
        elapsed: start.elapsed(),
    })
}

/// Every dropped set in the trace must appear after each of its subsets with
/// one fewer member (and therefore, inductively, after all proper subsets).
pub fn check_downward_closure(trace: &[IterationRecord]) -> std::result::Result<(), String> {
    let mut seen: HashSet<&CovariateSet> = HashSet::new();
    for rec in trace {
        let s = &rec.dropped;
        if !s.is_empty() {
            if let Some(x) = s.iter().find(|&x| !seen.contains(&s.without(x))) {
                return Err(format!(
                    "iteration {}: {s} processed before its subset {}",
                    rec.iteration,
                    s.without(x)
                ));
            }
        }
        if !seen.insert(s) {
            return Err(format!("iteration {}: {s} processed twice", rec.iteration));
        }
    }
    Ok(())
}

/// Fixed-mode retained weights never increase over the trace.
pub fn check_nonincreasing_weight(trace: &[IterationRecord]) -> std::result::Result<(), String> {
    for w in trace.windows(2) {
        if w[1].retained_weight > w[0].retained_weight {
            return Err(format!(
                "iteration {}: weight {} exceeds previous {}",
                w[1].iteration, w[1].retained_weight, w[0].retained_weight
            ));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(xs: &[usize]) -> CovariateSet {
        xs.iter().copied().collect()
    }

    fn trace_rec(pe: f64, iteration: u32) -> IterationRecord {
        IterationRecord {
            iteration,
            dropped: CovariateSet::empty(),
            retained_weight: 0.0,
            pe: Some(pe),
            bf: None,
            mq: None,
            new_treated: 1,
            new_control: 1,
            groups: 1,
            unmatched_treated: 5,
            unmatched_control: 5,
        }
    }

    #[test]
    fn select_prefers_lighter_drop() {
        let active: BTreeSet<_> = [set(&[0]), set(&[1])].into_iter().collect();
        let w = WeightVector::new(vec![2.0, 1.0]).unwrap();
        let s = select_best(&active, |s| set_weight(s, &w).unwrap()).unwrap();
        assert_eq!(s, &set(&[1]));
    }

    #[test]
    fn select_tie_is_lexicographic() {
        let active: BTreeSet<_> = [set(&[1]), set(&[0])].into_iter().collect();
        let w = WeightVector::uniform(2);
        let s = select_best(&active, |s| set_weight(s, &w).unwrap()).unwrap();
        assert_eq!(s, &set(&[0]));
    }

    #[test]
    fn select_tie_prefers_smaller_set() {
        let active: BTreeSet<_> = [set(&[0, 1]), set(&[2])].into_iter().collect();
        let w = WeightVector::new(vec![0.0, 1.0, 1.0]).unwrap();
        let s = select_best(&active, |s| set_weight(s, &w).unwrap()).unwrap();
        assert_eq!(s, &set(&[2]));
    }

    #[test]
    fn select_on_empty_is_none() {
        assert!(select_best(&BTreeSet::new(), |_| 0.0).is_none());
    }

    #[test]
    fn stop_when_treated_exhausted() {
        let mut st = MatchState::new(0);
        let mut r = trace_rec(1.0, 0);
        r.unmatched_treated = 0;
        st.trace.push(r);
        let cfg = EngineConfig::fixed(WeightVector::uniform(1));
        assert_eq!(stopping_check(&st, &cfg, false), Some(StopReason::Exhausted));
    }

    #[test]
    fn stop_on_pe_degradation() {
        let mut st = MatchState::new(0);
        st.trace.push(trace_rec(10.0, 0));
        st.trace.push(trace_rec(10.6, 1));
        let mut cfg = EngineConfig::adaptive(WeightVector::uniform(1), 1.0);
        cfg.stop.max_balance_gap = None;
        assert_eq!(stopping_check(&st, &cfg, false), Some(StopReason::PeDegraded));
        st.trace[1].pe = Some(10.4);
        assert_eq!(stopping_check(&st, &cfg, false), None);
    }

    #[test]
    fn stop_on_balance_gap() {
        let mut st = MatchState::new(0);
        st.trace.push(trace_rec(1.0, 0));
        let mut r = trace_rec(1.0, 1);
        r.new_treated = 5; // 5 / 10
        r.new_control = 0; // 0 / 5
        st.trace.push(r);
        let cfg = EngineConfig::adaptive(WeightVector::uniform(1), 1.0);
        assert_eq!(stopping_check(&st, &cfg, false), Some(StopReason::BalanceGap));
    }

    #[test]
    fn stop_on_max_iterations_and_empty_lattice() {
        let mut st = MatchState::new(0);
        st.trace.push(trace_rec(1.0, 0));
        st.trace.push(trace_rec(1.0, 1));
        let mut cfg = EngineConfig::fixed(WeightVector::uniform(1));
        assert_eq!(stopping_check(&st, &cfg, true), Some(StopReason::LatticeEmpty));
        cfg.stop.max_iterations = Some(1);
        assert_eq!(stopping_check(&st, &cfg, false), Some(StopReason::MaxIterations));
    }

    #[test]
    fn twins_match_at_iteration_zero() {
        let d = Dataset::binary(
            &[vec![0, 1, 1], vec![0, 1, 1], vec![1, 0, 0]],
            &[1, 0, 0],
            &[3.0, 1.0, 0.0],
        )
        .unwrap();
        let res = run(&d, None, &EngineConfig::fixed(WeightVector::uniform(3))).unwrap();
        let g = res.state.main_group_of(0).unwrap();
        assert_eq!(g.id.iteration, 0);
        assert_eq!(g.retained, CovariateSet::full(3));
        assert_eq!(res.stop_reason, StopReason::Exhausted);
    }

    #[test]
    fn first_drop_is_lightest_covariate() {
        let d = Dataset::binary(
            &[vec![0, 0, 0], vec![1, 1, 1], vec![0, 1, 0], vec![1, 0, 1]],
            &[1, 1, 0, 0],
            &[0.0; 4],
        )
        .unwrap();
        let w = WeightVector::new(vec![3.0, 1.0, 2.0]).unwrap();
        let res = run(&d, None, &EngineConfig::fixed(w)).unwrap();
        assert_eq!(res.trace()[1].dropped, set(&[1]));
        check_downward_closure(res.trace()).unwrap();
        check_nonincreasing_weight(res.trace()).unwrap();
    }

    #[test]
    fn adaptive_without_holdout_is_config_error() {
        let d = Dataset::binary(&[vec![0], vec![0]], &[1, 0], &[0.0; 2]).unwrap();
        let cfg = EngineConfig::adaptive(WeightVector::uniform(1), 1.0);
        assert!(matches!(run(&d, None, &cfg), Err(AemrError::Config(_))));
    }

    #[test]
    fn empty_dataset_is_validation_error() {
        let d = Dataset::new(vec![], vec![], vec![], vec![], None).unwrap();
        let cfg = EngineConfig::fixed(WeightVector::uniform(0));
        assert!(matches!(run(&d, None, &cfg), Err(AemrError::Validation(_))));
    }

    #[test]
    fn downward_closure_check_catches_out_of_order_trace() {
        let mut a = trace_rec(0.0, 0);
        let mut b = trace_rec(0.0, 1);
        a.dropped = CovariateSet::empty();
        b.dropped = set(&[0, 1]);
        assert!(check_downward_closure(&[a, b]).is_err());
    }
}
