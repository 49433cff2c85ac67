use serde::Serialize;

use crate::covset::CovariateSet;

/// Deterministic group identifier: the iteration that formed the group and
/// the rank of its key among the groups emitted in that iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct GroupId {
    pub iteration: u32,
    pub rank: u32,
}

impl std::fmt::Display for GroupId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}-{}", self.iteration, self.rank)
    }
}

/// Units sharing identical codes on `retained`, with at least one treated
/// and one control member.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedGroup {
    pub id: GroupId,
    /// The dropped covariate set this group was formed under.
    pub dropped: CovariateSet,
    pub retained: CovariateSet,
    /// Shared codes on `retained`, in ascending covariate order.
    pub key_values: Vec<u32>,
    /// All members, ascending.
    pub members: Vec<usize>,
    /// Members matched for the first time by this group.
    pub main_members: Vec<usize>,
    /// Members whose main group was formed earlier.
    pub aux_members: Vec<usize>,
    pub n_treated: usize,
    pub n_control: usize,
}

/// One executed iteration of a matching run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: u32,
    pub dropped: CovariateSet,
    /// `v_s · w` under the run's weights (the fixed weights, or the derived
    /// weights in adaptive mode).
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

impl Serialize for CovariateSet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.iter())
    }
}

/// Mutable per-run matching state. Owned by a single run.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchState {
    pub done: Vec<bool>,
    /// Index into `groups` of each unit's main group.
    pub main_group: Vec<Option<usize>>,
    /// Indices into `groups` of every later group a unit joined.
    pub auxiliary: Vec<Vec<usize>>,
    pub groups: Vec<MatchedGroup>,
    pub trace: Vec<IterationRecord>,
}

impl MatchState {
    pub fn new(n: usize) -> Self {
        Self {
            done: vec![false; n],
            main_group: vec![None; n],
            auxiliary: vec![Vec::new(); n],
            groups: Vec::new(),
            trace: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.done.len()
    }

    pub fn main_group_of(&self, unit: usize) -> Option<&MatchedGroup> {
        self.main_group[unit].map(|g| &self.groups[g])
    }

    pub fn unmatched_count(&self, treatment: &[u8], arm: u8) -> usize {
        self.done
            .iter()
            .zip(treatment)
            .filter(|(&d, &t)| !d && t == arm)
            .count()
    }
}
