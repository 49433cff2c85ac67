//! Active and processed covariate-set bookkeeping.
//!
//! A set becomes active once every one of its subsets with one fewer member
//! has been processed. New active sets are found apriori-style: only
//! covariates with enough support among the processed sets of the current
//! size can extend the newly processed set.

use std::collections::{BTreeSet, HashSet};

use crate::covset::CovariateSet;

/// Candidate supersets of `s` that become active once `s` is processed.
///
/// `processed` is the processed collection *before* `s` joins it. Sizes
/// other than `|s|` are ignored. Covariates range over `0..p`.
pub fn generate_new_active_sets(
    processed: &HashSet<CovariateSet>,
    s: &CovariateSet,
    p: usize,
) -> Vec<CovariateSet> {
    let k = s.len();
    let mut layer: HashSet<CovariateSet> =
        processed.iter().filter(|d| d.len() == k).cloned().collect();
    layer.insert(s.clone());
    let mut support = vec![0usize; p];
    for d in &layer {
        for e in d.iter() {
            support[e] += 1;
        }
    }
    extend_with_support(&layer, &support, s, k)
}

/// Shared tail of the generation step, given the size-`k` layer (including
/// `s`) and per-covariate support counts within it.
fn extend_with_support(
    layer: &HashSet<CovariateSet>,
    support: &[usize],
    s: &CovariateSet,
    k: usize,
) -> Vec<CovariateSet> {
    if k == 0 || s.iter().any(|e| support.get(e).copied().unwrap_or(0) < k) {
        return Vec::new();
    }
    let omega = support
        .iter()
        .enumerate()
        .filter(|&(alpha, &sup)| sup >= k && !s.contains(alpha))
        .map(|(alpha, _)| alpha);

    let mut z: Vec<CovariateSet> = omega
        .map(|alpha| s.with(alpha))
        .filter(|r| r.iter().all(|x| layer.contains(&r.without(x))))
        .collect();
    z.sort();
    z
}

/// Direct enumeration of the supersets `s ∪ {f}` whose every `|s|`-subset
/// lies in `processed ∪ {s}`. Reference for [`generate_new_active_sets`].
pub fn brute_eligible(
    processed: &HashSet<CovariateSet>,
    s: &CovariateSet,
    p: usize,
) -> Vec<CovariateSet> {
    let mut z: Vec<CovariateSet> = (0..p)
        .filter(|&f| !s.contains(f))
        .map(|f| s.with(f))
        .filter(|r| {
            r.iter().all(|x| {
                let sub = r.without(x);
                &sub == s || processed.contains(&sub)
            })
        })
        .collect();
    z.sort();
    z
}

/// Active (`Λ`) and processed (`Δ`) collections for one run.
#[derive(Debug, Clone)]
pub struct LatticeState {
    p: usize,
    max_size: usize,
    active: BTreeSet<CovariateSet>,
    processed: HashSet<CovariateSet>,
    /// Processed sets grouped by size.
    by_size: Vec<HashSet<CovariateSet>>,
    /// `support[k][e]`: processed sets of size `k` containing `e`.
    support: Vec<Vec<usize>>,
}

impl LatticeState {
    /// Starts with every singleton active. Sets larger than `max_size` never
    /// become active.
    pub fn new(p: usize, max_size: usize) -> Self {
        let active = if max_size >= 1 {
            (0..p).map(CovariateSet::singleton).collect()
        } else {
            BTreeSet::new()
        };
        Self {
            p,
            max_size,
            active,
            processed: HashSet::new(),
            by_size: vec![HashSet::new(); p + 1],
            support: vec![vec![0; p]; p + 1],
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn active(&self) -> &BTreeSet<CovariateSet> {
        &self.active
    }

    pub fn processed(&self) -> &HashSet<CovariateSet> {
        &self.processed
    }

    pub fn is_exhausted(&self) -> bool {
        self.active.is_empty()
    }

    /// Moves `s` from active to processed and activates the supersets it
    /// completes. Returns the newly active sets.
    pub fn commit(&mut self, s: &CovariateSet) -> Vec<CovariateSet> {
        assert!(self.active.remove(s), "committed set {s} was not active");
        let k = s.len();
        self.processed.insert(s.clone());
        self.by_size[k].insert(s.clone());
        for e in s.iter() {
            self.support[k][e] += 1;
        }
        if k + 1 > self.max_size {
            return Vec::new();
        }
        let z = extend_with_support(&self.by_size[k], &self.support[k], s, k);
        for r in &z {
            debug_assert!(!self.processed.contains(r));
            self.active.insert(r.clone());
        }
        z
    }

    /// Checks the structural invariants; returns a description of the first
    /// violation.
    pub fn check_invariants(&self) -> Result<(), String> {
        for s in &self.active {
            if self.processed.contains(s) {
                return Err(format!("{s} is both active and processed"));
            }
            if s.len() > 1 {
                if let Some(x) = s.iter().find(|&x| !self.processed.contains(&s.without(x))) {
                    return Err(format!("{s} active but {} unprocessed", s.without(x)));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(xs: &[usize]) -> CovariateSet {
        xs.iter().copied().collect()
    }

    fn collection(sets: &[&[usize]]) -> HashSet<CovariateSet> {
        sets.iter().map(|s| set(s)).collect()
    }

    #[test]
    fn worked_example() {
        let delta = collection(&[&[1], &[2], &[3], &[5], &[1, 2], &[1, 3], &[1, 5]]);
        let z = generate_new_active_sets(&delta, &set(&[2, 3]), 7);
        assert_eq!(z, vec![set(&[1, 2, 3])]);
        assert_eq!(brute_eligible(&delta, &set(&[2, 3]), 7), z);
    }

    #[test]
    fn counterexample_rejects_unsupported_superset() {
        // {2,3,5} has enough support but {2,5} is missing.
        let delta = collection(&[&[1, 2], &[1, 3], &[3, 5], &[5, 6]]);
        let z = generate_new_active_sets(&delta, &set(&[2, 3]), 7);
        assert!(!z.contains(&set(&[2, 3, 5])));
        assert_eq!(z, vec![set(&[1, 2, 3])]);
    }

    #[test]
    fn singleton_with_nothing_processed() {
        let z = generate_new_active_sets(&HashSet::new(), &set(&[0]), 4);
        assert!(z.is_empty());
    }

    #[test]
    fn full_set_has_no_superset() {
        assert!(brute_eligible(&HashSet::new(), &CovariateSet::full(3), 3).is_empty());
        assert!(generate_new_active_sets(&HashSet::new(), &CovariateSet::full(3), 3).is_empty());
    }

    #[test]
    fn state_walk_activates_pairs_in_order() {
        let mut st = LatticeState::new(3, 2);
        assert!(st.commit(&set(&[0])).is_empty());
        assert_eq!(st.commit(&set(&[2])), vec![set(&[0, 2])]);
        assert_eq!(st.commit(&set(&[1])), vec![set(&[0, 1]), set(&[1, 2])]);
        st.check_invariants().unwrap();
        for s in [set(&[0, 2]), set(&[0, 1]), set(&[1, 2])] {
            assert!(st.commit(&s).is_empty());
        }
        // {0,1,2} exceeds max_size.
        assert!(st.is_exhausted());
    }

    #[test]
    fn full_walk_enumerates_every_nonfull_subset_once() {
        let p = 5;
        let mut st = LatticeState::new(p, p - 1);
        let mut seen = HashSet::new();
        while let Some(s) = st.active().iter().next().cloned() {
            assert!(seen.insert(s.clone()));
            st.commit(&s);
            st.check_invariants().unwrap();
        }
        assert_eq!(seen.len(), (1 << p) - 2);
    }
}
