//! Exact group-by on a retained covariate subset.
//!
//! Each unit's retained codes are packed into a mixed-radix integer: digit
//! `j` is the code of the `j`-th retained covariate (ascending index order),
//! scaled by the product of the arities of the digits before it. Equal keys
//! therefore mean equal code tuples. The treatment-augmented key puts the
//! treatment bit in the lowest digit, so `b_plus = t + 2 * b`.
//!
//! When the radix product does not fit in 128 bits the key falls back to the
//! code tuple itself, hashed and compared in full.

use std::cmp::Ordering;
use std::collections::HashMap;

use crate::covset::CovariateSet;
use crate::data::Dataset;
use crate::state::{GroupId, MatchState, MatchedGroup};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum GroupKey {
    Packed(u128),
    /// Retained codes with the treatment-augmented variant's treatment bit
    /// prepended (lowest digit first).
    Tuple(Vec<u32>),
}

impl Ord for GroupKey {
    /// Numeric order for packed keys; tuples compare most significant digit
    /// first so both representations agree.
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (GroupKey::Packed(a), GroupKey::Packed(b)) => a.cmp(b),
            (GroupKey::Tuple(a), GroupKey::Tuple(b)) => a.iter().rev().cmp(b.iter().rev()),
            (GroupKey::Packed(_), GroupKey::Tuple(_)) => Ordering::Less,
            (GroupKey::Tuple(_), GroupKey::Packed(_)) => Ordering::Greater,
        }
    }
}

impl PartialOrd for GroupKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Computes group keys for one retained covariate set.
#[derive(Debug, Clone)]
pub struct KeyEncoder {
    retained: Vec<usize>,
    /// Positional multipliers; `None` selects the tuple fallback.
    multipliers: Option<Vec<u128>>,
}

impl KeyEncoder {
    pub fn new(d: &Dataset, retained: &CovariateSet) -> Self {
        let retained: Vec<usize> = retained.iter().collect();
        let mut multipliers = Vec::with_capacity(retained.len());
        let mut scale: u128 = 1;
        let mut fits = true;
        for &j in &retained {
            multipliers.push(scale);
            match scale.checked_mul(u128::from(d.specs()[j].arity)) {
                Some(s) => scale = s,
                None => {
                    fits = false;
                    break;
                }
            }
        }
        // b_plus needs one more binary digit.
        fits = fits && scale.checked_mul(2).is_some();
        Self {
            retained,
            multipliers: fits.then_some(multipliers),
        }
    }

    /// Encoder that always uses the tuple fallback.
    pub fn tuple_only(retained: &CovariateSet) -> Self {
        Self {
            retained: retained.iter().collect(),
            multipliers: None,
        }
    }

    pub fn is_packed(&self) -> bool {
        self.multipliers.is_some()
    }

    pub fn retained(&self) -> &[usize] {
        &self.retained
    }

    pub fn key(&self, row: &[u32]) -> GroupKey {
        match &self.multipliers {
            Some(m) => GroupKey::Packed(self.packed(row, m)),
            None => GroupKey::Tuple(self.retained.iter().map(|&j| row[j]).collect()),
        }
    }

    pub fn key_plus(&self, row: &[u32], treatment: u8) -> GroupKey {
        match &self.multipliers {
            Some(m) => GroupKey::Packed(u128::from(treatment) + 2 * self.packed(row, m)),
            None => GroupKey::Tuple(
                std::iter::once(u32::from(treatment))
                    .chain(self.retained.iter().map(|&j| row[j]))
                    .collect(),
            ),
        }
    }

    fn packed(&self, row: &[u32], m: &[u128]) -> u128 {
        self.retained
            .iter()
            .zip(m)
            .map(|(&j, &scale)| u128::from(row[j]) * scale)
            .sum()
    }
}

/// Per-unit `(b, b_plus)` keys on `retained`.
pub fn encode_units(d: &Dataset, retained: &CovariateSet) -> Vec<(GroupKey, GroupKey)> {
    let enc = KeyEncoder::new(d, retained);
    (0..d.n())
        .map(|u| {
            let row = d.row(u);
            (enc.key(row), enc.key_plus(row, d.treatment()[u]))
        })
        .collect()
}

/// A group of eligible units with equal keys. Members ascend.
#[derive(Debug, Clone, PartialEq)]
pub struct RawGroup {
    pub key: GroupKey,
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Grouping {
    /// Groups in ascending key order.
    pub groups: Vec<RawGroup>,
    /// Units excluded because a retained covariate is missing.
    pub ineligible: Vec<usize>,
}

fn has_missing_on(d: &Dataset, unit: usize, retained: &[usize]) -> bool {
    d.has_missing() && retained.iter().any(|&j| d.is_missing(unit, j))
}

/// Partitions `eligible` by equal key on `retained`.
pub fn group_by(d: &Dataset, retained: &CovariateSet, eligible: &[usize]) -> Grouping {
    let enc = KeyEncoder::new(d, retained);
    group_by_with(d, &enc, eligible)
}

pub fn group_by_with(d: &Dataset, enc: &KeyEncoder, eligible: &[usize]) -> Grouping {
    let mut ineligible = Vec::new();
    let mut units = Vec::with_capacity(eligible.len());
    for &u in eligible {
        if has_missing_on(d, u, enc.retained()) {
            ineligible.push(u);
        } else {
            units.push(u);
        }
    }
    ineligible.sort_unstable();

    let groups = match &enc.multipliers {
        Some(m) => {
            let mut keyed: Vec<(u128, usize)> =
                units.iter().map(|&u| (enc.packed(d.row(u), m), u)).collect();
            keyed.sort_unstable();
            let mut groups: Vec<RawGroup> = Vec::new();
            for (k, u) in keyed {
                match groups.last_mut() {
                    Some(g) if g.key == GroupKey::Packed(k) => g.members.push(u),
                    _ => groups.push(RawGroup {
                        key: GroupKey::Packed(k),
                        members: vec![u],
                    }),
                }
            }
            groups
        }
        None => {
            let mut map: HashMap<GroupKey, Vec<usize>> = HashMap::new();
            for &u in &units {
                map.entry(enc.key(d.row(u))).or_default().push(u);
            }
            let mut groups: Vec<RawGroup> = map
                .into_iter()
                .map(|(key, mut members)| {
                    members.sort_unstable();
                    RawGroup { key, members }
                })
                .collect();
            groups.sort_by(|a, b| a.key.cmp(&b.key));
            groups
        }
    };
    Grouping { groups, ineligible }
}

/// A raw group that contains both arms.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidGroup {
    pub key: GroupKey,
    pub members: Vec<usize>,
    pub n_treated: usize,
    pub n_control: usize,
}

/// Keeps exactly the groups with at least one treated and one control unit.
pub fn prune(d: &Dataset, raw: Vec<RawGroup>) -> Vec<ValidGroup> {
    raw.into_iter()
        .filter_map(|g| {
            let n_treated = g.members.iter().filter(|&&u| d.is_treated(u)).count();
            let n_control = g.members.len() - n_treated;
            (n_treated > 0 && n_control > 0).then_some(ValidGroup {
                key: g.key,
                members: g.members,
                n_treated,
                n_control,
            })
        })
        .collect()
}

/// Units that belong to some valid group, decided by frequency counts of
/// `b` and `b_plus` alone: a unit is matched iff its `b` occurs more often
/// than its `b_plus`.
pub fn matched_by_counts(d: &Dataset, retained: &CovariateSet, eligible: &[usize]) -> Vec<bool> {
    let enc = KeyEncoder::new(d, retained);
    let mut c: HashMap<GroupKey, usize> = HashMap::new();
    let mut c_plus: HashMap<GroupKey, usize> = HashMap::new();
    let mut keys = Vec::new();
    for &u in eligible {
        if has_missing_on(d, u, enc.retained()) {
            continue;
        }
        let row = d.row(u);
        let b = enc.key(row);
        let bp = enc.key_plus(row, d.treatment()[u]);
        *c.entry(b.clone()).or_default() += 1;
        *c_plus.entry(bp.clone()).or_default() += 1;
        keys.push((u, b, bp));
    }
    let mut matched = vec![false; d.n()];
    for (u, b, bp) in keys {
        matched[u] = c[&b] != c_plus[&bp];
    }
    matched
}

/// Outcome of one grouped-matching step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroupedMrOutcome {
    /// Units matched for the first time, ascending.
    pub newly_matched: Vec<usize>,
    /// Indices into `MatchState::groups` of the groups emitted this step.
    pub groups: Vec<usize>,
    pub new_treated: usize,
    pub new_control: usize,
}

/// Groups all units of `d` on the complement of `dropped` and records main
/// and auxiliary memberships in `state`.
///
/// A valid group is emitted only when it contains at least one unit that is
/// still unmatched; those units take it as their main group and every other
/// member gets it appended to its auxiliary list.
pub fn grouped_mr(
    d: &Dataset,
    dropped: &CovariateSet,
    iteration: u32,
    state: &mut MatchState,
) -> GroupedMrOutcome {
    let retained = dropped.complement(d.p());
    let all: Vec<usize> = (0..d.n()).collect();
    let enc = KeyEncoder::new(d, &retained);
    let valid = prune(d, group_by_with(d, &enc, &all).groups);

    let mut out = GroupedMrOutcome::default();
    let mut rank = 0u32;
    for g in valid {
        if g.members.iter().all(|&u| state.done[u]) {
            continue;
        }
        let (main_members, aux_members): (Vec<usize>, Vec<usize>) =
            g.members.iter().partition(|&&u| !state.done[u]);
        let gi = state.groups.len();
        for &u in &main_members {
            state.done[u] = true;
            state.main_group[u] = Some(gi);
            if d.is_treated(u) {
                out.new_treated += 1;
            } else {
                out.new_control += 1;
            }
        }
        for &u in &aux_members {
            state.auxiliary[u].push(gi);
        }
        out.newly_matched.extend_from_slice(&main_members);
        let first = d.row(g.members[0]);
        state.groups.push(MatchedGroup {
            id: GroupId { iteration, rank },
            dropped: dropped.clone(),
            key_values: enc.retained().iter().map(|&j| first[j]).collect(),
            retained: retained.clone(),
            members: g.members,
            main_members,
            aux_members,
            n_treated: g.n_treated,
            n_control: g.n_control,
        });
        out.groups.push(gi);
        rank += 1;
    }
    out.newly_matched.sort_unstable();
    out
}

/// How many currently unmatched treated and control units a grouped-matching
/// step on the complement of `dropped` would match, without mutating state.
pub fn count_new_matches(d: &Dataset, dropped: &CovariateSet, done: &[bool]) -> (usize, usize) {
    let retained = dropped.complement(d.p());
    let all: Vec<usize> = (0..d.n()).collect();
    let valid = prune(d, group_by(d, &retained, &all).groups);
    let (mut t, mut c) = (0, 0);
    for g in &valid {
        for &u in &g.members {
            if !done[u] {
                if d.is_treated(u) {
                    t += 1;
                } else {
                    c += 1;
                }
            }
        }
    }
    (t, c)
}
