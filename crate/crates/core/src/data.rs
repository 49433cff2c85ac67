//! Categorical datasets with a binary treatment and a real outcome.

use std::collections::HashSet;

use crate::error::{AemrError, Result, ValidationIssue};

/// One categorical covariate. `arity` counts every level, including the
/// reserved missing level (always the last code) when the dataset carries a
/// missing mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CovariateSpec {
    pub name: String,
    pub arity: u32,
    /// Original labels indexed by code. May be empty for synthetic data.
    pub labels: Vec<String>,
}

impl CovariateSpec {
    pub fn new(name: impl Into<String>, arity: u32) -> Self {
        Self {
            name: name.into(),
            arity,
            labels: Vec::new(),
        }
    }

    pub fn with_labels(name: impl Into<String>, labels: Vec<String>) -> Self {
        Self {
            name: name.into(),
            arity: labels.len() as u32,
            labels,
        }
    }

    /// Label for `code`, falling back to the decimal code.
    pub fn label(&self, code: u32) -> String {
        self.labels
            .get(code as usize)
            .cloned()
            .unwrap_or_else(|| code.to_string())
    }
}

/// Immutable table of `n` units over `p` categorical covariates.
///
/// Covariate codes are stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    specs: Vec<CovariateSpec>,
    codes: Vec<u32>,
    treatment: Vec<u8>,
    outcome: Vec<f64>,
    missing: Option<Vec<bool>>,
}

impl Dataset {
    /// Builds a dataset and runs [`validate_dataset`] on it.
    pub fn new(
        specs: Vec<CovariateSpec>,
        codes: Vec<u32>,
        treatment: Vec<u8>,
        outcome: Vec<f64>,
        missing: Option<Vec<bool>>,
    ) -> Result<Self> {
        let d = Self::new_unchecked(specs, codes, treatment, outcome, missing);
        let issues = validate_dataset(&d);
        if issues.is_empty() {
            Ok(d)
        } else {
            Err(AemrError::Validation(issues))
        }
    }

    /// Builds without validation; pair with [`validate_dataset`].
    pub fn new_unchecked(
        specs: Vec<CovariateSpec>,
        codes: Vec<u32>,
        treatment: Vec<u8>,
        outcome: Vec<f64>,
        missing: Option<Vec<bool>>,
    ) -> Self {
        Self {
            specs,
            codes,
            treatment,
            outcome,
            missing,
        }
    }

    /// Binary covariates named `x0..x{p-1}` from row vectors.
    pub fn binary(rows: &[Vec<u32>], treatment: &[u8], outcome: &[f64]) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        let specs = (0..p).map(|j| CovariateSpec::new(format!("x{j}"), 2)).collect();
        Self::from_rows(specs, rows, treatment, outcome)
    }

    pub fn from_rows(
        specs: Vec<CovariateSpec>,
        rows: &[Vec<u32>],
        treatment: &[u8],
        outcome: &[f64],
    ) -> Result<Self> {
        let p = specs.len();
        if let Some(r) = rows.iter().find(|r| r.len() != p) {
            return Err(AemrError::Validation(vec![ValidationIssue::RaggedRows {
                expected: p,
                found: r.len(),
            }]));
        }
        let codes = rows.iter().flatten().copied().collect();
        Self::new(specs, codes, treatment.to_vec(), outcome.to_vec(), None)
    }

    pub fn n(&self) -> usize {
        self.treatment.len()
    }

    pub fn p(&self) -> usize {
        self.specs.len()
    }

    pub fn specs(&self) -> &[CovariateSpec] {
        &self.specs
    }

    pub fn names(&self) -> Vec<&str> {
        self.specs.iter().map(|s| s.name.as_str()).collect()
    }

    pub fn row(&self, unit: usize) -> &[u32] {
        let p = self.p();
        &self.codes[unit * p..(unit + 1) * p]
    }

    pub fn code(&self, unit: usize, covariate: usize) -> u32 {
        self.codes[unit * self.p() + covariate]
    }

    pub fn codes(&self) -> &[u32] {
        &self.codes
    }

    pub fn treatment(&self) -> &[u8] {
        &self.treatment
    }

    pub fn is_treated(&self, unit: usize) -> bool {
        self.treatment[unit] == 1
    }

    pub fn outcome(&self) -> &[f64] {
        &self.outcome
    }

    pub fn missing_mask(&self) -> Option<&[bool]> {
        self.missing.as_deref()
    }

    pub fn has_missing(&self) -> bool {
        self.missing.is_some()
    }

    pub fn is_missing(&self, unit: usize, covariate: usize) -> bool {
        self.missing
            .as_ref()
            .is_some_and(|m| m[unit * self.p() + covariate])
    }

    pub fn n_treated(&self) -> usize {
        self.treatment.iter().filter(|&&t| t == 1).count()
    }

    pub fn n_control(&self) -> usize {
        self.treatment.iter().filter(|&&t| t == 0).count()
    }

    /// New dataset holding the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let p = self.p();
        let mut codes = Vec::with_capacity(rows.len() * p);
        for &r in rows {
            codes.extend_from_slice(self.row(r));
        }
        let missing = self
            .missing
            .as_ref()
            .map(|m| rows.iter().flat_map(|&r| m[r * p..(r + 1) * p].iter().copied()).collect());
        Self {
            specs: self.specs.clone(),
            codes,
            treatment: rows.iter().map(|&r| self.treatment[r]).collect(),
            outcome: rows.iter().map(|&r| self.outcome[r]).collect(),
            missing,
        }
    }

    /// Index of the covariate named `name`.
    pub fn covariate_index(&self, name: &str) -> Option<usize> {
        self.specs.iter().position(|s| s.name == name)
    }
}

/// Every violated structural invariant of `d`. Empty means the dataset is
/// well formed. Treated/control presence is checked separately by
/// [`validate_for_matching`].
pub fn validate_dataset(d: &Dataset) -> Vec<ValidationIssue> {
    let mut issues = Vec::new();
    let p = d.specs.len();
    let n = d.treatment.len();

    let mut seen = HashSet::new();
    for (j, s) in d.specs.iter().enumerate() {
        if s.arity < 2 {
            issues.push(ValidationIssue::ArityTooSmall {
                column: j,
                arity: s.arity,
            });
        }
        if !seen.insert(s.name.as_str()) {
            issues.push(ValidationIssue::DuplicateName {
                column: j,
                name: s.name.clone(),
            });
        }
    }

    if d.codes.len() != n * p {
        issues.push(ValidationIssue::RaggedRows {
            expected: n * p,
            found: d.codes.len(),
        });
        return issues;
    }
    if d.outcome.len() != n {
        issues.push(ValidationIssue::RaggedRows {
            expected: n,
            found: d.outcome.len(),
        });
        return issues;
    }
    if let Some(m) = &d.missing {
        if m.len() != n * p {
            issues.push(ValidationIssue::MaskShape {
                expected: n * p,
                found: m.len(),
            });
            return issues;
        }
    }

    for row in 0..n {
        for (column, spec) in d.specs.iter().enumerate() {
            let code = d.codes[row * p + column];
            if code >= spec.arity {
                issues.push(ValidationIssue::CodeOutOfRange {
                    row,
                    column,
                    code,
                    arity: spec.arity,
                });
            } else if d.is_missing(row, column) && code != spec.arity - 1 {
                issues.push(ValidationIssue::MaskedCellNotSentinel { row, column });
            }
        }
        let t = d.treatment[row];
        if t > 1 {
            issues.push(ValidationIssue::NonBinaryTreatment { row, value: t });
        }
        if !d.outcome[row].is_finite() {
            issues.push(ValidationIssue::NonFiniteOutcome { row });
        }
    }
    issues
}

/// Structural validation plus the requirement of a nonempty dataset with
/// both arms present.
pub fn validate_for_matching(d: &Dataset) -> Result<()> {
    let mut issues = validate_dataset(d);
    if d.n() == 0 {
        issues.push(ValidationIssue::Empty);
    } else {
        if d.n_treated() == 0 {
            issues.push(ValidationIssue::NoTreatedUnits);
        }
        if d.n_control() == 0 {
            issues.push(ValidationIssue::NoControlUnits);
        }
    }
    if issues.is_empty() {
        Ok(())
    } else {
        Err(AemrError::Validation(issues))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn specs2() -> Vec<CovariateSpec> {
        vec![CovariateSpec::new("a", 2), CovariateSpec::new("b", 3)]
    }

    #[test]
    fn well_formed_four_units() {
        let d = Dataset::new_unchecked(
            specs2(),
            vec![0, 0, 1, 2, 0, 1, 1, 0],
            vec![1, 0, 1, 0],
            vec![1.0, 2.0, 3.0, 4.0],
            None,
        );
        assert!(validate_dataset(&d).is_empty());
        assert!(validate_for_matching(&d).is_ok());
    }

    #[test]
    fn code_equal_to_arity_is_flagged_at_its_cell() {
        let d = Dataset::new_unchecked(
            specs2(),
            vec![0, 0, 1, 3],
            vec![1, 0],
            vec![0.0, 0.0],
            None,
        );
        assert_eq!(
            validate_dataset(&d),
            vec![ValidationIssue::CodeOutOfRange {
                row: 1,
                column: 1,
                code: 3,
                arity: 3
            }]
        );
    }

    #[test]
    fn treatment_two_is_flagged() {
        let d = Dataset::new_unchecked(specs2(), vec![0, 0, 1, 1], vec![2, 0], vec![0.0, 0.0], None);
        assert_eq!(
            validate_dataset(&d),
            vec![ValidationIssue::NonBinaryTreatment { row: 0, value: 2 }]
        );
    }

    #[test]
    fn every_issue_is_reported() {
        let specs = vec![CovariateSpec::new("a", 1), CovariateSpec::new("a", 2)];
        let d = Dataset::new_unchecked(specs, vec![5, 0], vec![7], vec![f64::NAN], None);
        let issues = validate_dataset(&d);
        assert_eq!(issues.len(), 5, "{issues:?}");
    }

    #[test]
    fn single_arm_fails_matching_validation() {
        let d = Dataset::binary(&[vec![0], vec![1]], &[1, 1], &[0.0, 1.0]).unwrap();
        let err = validate_for_matching(&d).unwrap_err();
        assert!(matches!(err, AemrError::Validation(v) if v == vec![ValidationIssue::NoControlUnits]));
    }

    #[test]
    fn masked_cell_must_hold_sentinel() {
        let specs = vec![CovariateSpec::new("a", 3)];
        let d = Dataset::new_unchecked(
            specs,
            vec![0, 2],
            vec![0, 1],
            vec![0.0, 0.0],
            Some(vec![true, true]),
        );
        assert_eq!(
            validate_dataset(&d),
            vec![ValidationIssue::MaskedCellNotSentinel { row: 0, column: 0 }]
        );
    }

    #[test]
    fn select_rows_keeps_mask_aligned() {
        let specs = vec![CovariateSpec::new("a", 3)];
        let d = Dataset::new(
            specs,
            vec![0, 2, 1],
            vec![0, 1, 1],
            vec![1.0, 2.0, 3.0],
            Some(vec![false, true, false]),
        )
        .unwrap();
        let s = d.select_rows(&[2, 1]);
        assert_eq!(s.codes(), &[1, 2]);
        assert!(!s.is_missing(0, 0));
        assert!(s.is_missing(1, 0));
        assert_eq!(s.outcome(), &[3.0, 2.0]);
    }
}
