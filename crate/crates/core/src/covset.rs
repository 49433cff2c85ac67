//! Covariate sets, their indicator vectors, and covariate weights.
//!
//! A [`CovariateSet`] names the covariates that are *dropped*; matching
//! happens on the complement. Sets are stored as bitmasks that live inline
//! for up to 128 covariates and spill to the heap beyond that.

use std::cmp::Ordering;
use std::fmt;

use smallvec::SmallVec;

use crate::error::{AemrError, Result};

type Words = SmallVec<[u64; 2]>;

/// A sorted, duplicate-free set of 0-based covariate indices.
///
/// The total order is cardinality first, then the lexicographic order of the
/// ascending member lists. This is the tie rule used whenever two sets score
/// equally.
#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct CovariateSet {
    words: Words,
}

impl CovariateSet {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn singleton(index: usize) -> Self {
        let mut s = Self::empty();
        s.insert(index);
        s
    }

    /// All covariates `0..p`.
    pub fn full(p: usize) -> Self {
        (0..p).collect()
    }

    pub fn contains(&self, index: usize) -> bool {
        let (w, b) = (index / 64, index % 64);
        self.words.get(w).is_some_and(|word| word & (1 << b) != 0)
    }

    pub fn insert(&mut self, index: usize) {
        let (w, b) = (index / 64, index % 64);
        if self.words.len() <= w {
            self.words.resize(w + 1, 0);
        }
        self.words[w] |= 1 << b;
    }

    pub fn remove(&mut self, index: usize) {
        let (w, b) = (index / 64, index % 64);
        if let Some(word) = self.words.get_mut(w) {
            *word &= !(1 << b);
            self.normalize();
        }
    }

    pub fn with(&self, index: usize) -> Self {
        let mut s = self.clone();
        s.insert(index);
        s
    }

    pub fn without(&self, index: usize) -> Self {
        let mut s = self.clone();
        s.remove(index);
        s
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Largest member plus one, or 0 for the empty set.
    pub fn bound(&self) -> usize {
        match self.words.last() {
            Some(&w) => (self.words.len() - 1) * 64 + (64 - w.leading_zeros() as usize),
            None => 0,
        }
    }

    pub fn is_subset(&self, other: &Self) -> bool {
        self.words
            .iter()
            .enumerate()
            .all(|(i, w)| w & !other.words.get(i).copied().unwrap_or(0) == 0)
    }

    pub fn union(&self, other: &Self) -> Self {
        let n = self.words.len().max(other.words.len());
        let words = (0..n)
            .map(|i| self.words.get(i).copied().unwrap_or(0) | other.words.get(i).copied().unwrap_or(0))
            .collect();
        Self { words }
    }

    /// Ascending member indices.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &word)| {
            let mut w = word;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let b = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(wi * 64 + b)
            })
        })
    }

    pub fn members(&self) -> Vec<usize> {
        self.iter().collect()
    }

    /// Covariates of `0..p` that are not in this set.
    pub fn complement(&self, p: usize) -> Self {
        (0..p).filter(|&i| !self.contains(i)).collect()
    }

    pub fn check_bound(&self, p: usize) -> Result<()> {
        match self.iter().find(|&i| i >= p) {
            Some(index) => Err(AemrError::InvalidCovariate { index, p }),
            None => Ok(()),
        }
    }

    fn normalize(&mut self) {
        while self.words.last() == Some(&0) {
            self.words.pop();
        }
    }
}

impl FromIterator<usize> for CovariateSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        let mut s = Self::empty();
        for i in iter {
            s.insert(i);
        }
        s
    }
}

impl Ord for CovariateSet {
    fn cmp(&self, other: &Self) -> Ordering {
        self.len()
            .cmp(&other.len())
            .then_with(|| self.iter().cmp(other.iter()))
    }
}

impl PartialOrd for CovariateSet {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for CovariateSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl fmt::Display for CovariateSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, i) in self.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{i}")?;
        }
        write!(f, "}}")
    }
}

/// 0/1 vector with a one on every covariate that is retained for matching.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IndicatorVector(Vec<u8>);

impl IndicatorVector {
    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn ones(&self) -> usize {
        self.0.iter().filter(|&&b| b == 1).count()
    }

    pub fn dot(&self, w: &WeightVector) -> Result<f64> {
        if w.len() != self.0.len() {
            return Err(AemrError::DimensionMismatch {
                expected: self.0.len(),
                found: w.len(),
            });
        }
        Ok(self
            .0
            .iter()
            .zip(w.as_slice())
            .filter(|(&b, _)| b == 1)
            .map(|(_, &wi)| wi)
            .sum())
    }
}

pub fn indicator_of(s: &CovariateSet, p: usize) -> Result<IndicatorVector> {
    s.check_bound(p)?;
    Ok(IndicatorVector(
        (0..p).map(|i| u8::from(!s.contains(i))).collect(),
    ))
}

/// Nonnegative, finite per-covariate relevance weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if let Some((index, &value)) = w
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(AemrError::InvalidWeight { index, value });
        }
        Ok(Self(w))
    }

    pub fn uniform(p: usize) -> Self {
        Self(vec![1.0; p])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// Retained weight `v_s · w`: the sum of weights of covariates not in `s`.
///
/// Summation runs in ascending index order so equal sets always produce
/// bit-identical sums.
pub fn set_weight(s: &CovariateSet, w: &WeightVector) -> Result<f64> {
    s.check_bound(w.len())
        .map_err(|_| AemrError::DimensionMismatch {
            expected: w.len(),
            found: s.bound(),
        })?;
    Ok(w
        .as_slice()
        .iter()
        .enumerate()
        .filter(|(i, _)| !s.contains(*i))
        .map(|(_, &wi)| wi)
        .sum())
}
