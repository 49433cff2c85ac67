//! Treatment-effect estimates from matched groups.

use rayon::prelude::*;
use serde::Serialize;

use crate::data::Dataset;
use crate::engine::MatchResult;
use crate::error::{AemrError, Result};
use crate::state::{GroupId, MatchedGroup};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CateRecord {
    pub unit_id: usize,
    pub group_id: GroupId,
    pub treated: bool,
    pub cate: f64,
    pub n_treated: usize,
    pub n_control: usize,
}

/// Difference of treated and control outcome means over every member of
/// `g`, auxiliary members included.
pub fn group_cate(g: &MatchedGroup, d: &Dataset) -> Result<f64> {
    let (mut st, mut nt, mut sc, mut nc) = (0.0, 0usize, 0.0, 0usize);
    for &u in &g.members {
        if u >= d.n() {
            return Err(AemrError::DimensionMismatch {
                expected: d.n(),
                found: u + 1,
            });
        }
        if d.is_treated(u) {
            st += d.outcome()[u];
            nt += 1;
        } else {
            sc += d.outcome()[u];
            nc += 1;
        }
    }
    if nt == 0 || nc == 0 {
        return Err(AemrError::Empty("group needs at least one treated and one control member"));
    }
    Ok(st / nt as f64 - sc / nc as f64)
}

/// One record per matched unit, from its main group, ordered by unit id.
pub fn estimate_all(result: &MatchResult, d: &Dataset) -> Result<Vec<CateRecord>> {
    let cates: Vec<f64> = result
        .state
        .groups
        .par_iter()
        .map(|g| group_cate(g, d))
        .collect::<Result<_>>()?;
    Ok(result
        .state
        .main_group
        .iter()
        .enumerate()
        .filter_map(|(u, g)| g.map(|g| (u, g)))
        .map(|(u, gi)| {
            let g = &result.state.groups[gi];
            CateRecord {
                unit_id: u,
                group_id: g.id,
                treated: d.is_treated(u),
                cate: cates[gi],
                n_treated: g.n_treated,
                n_control: g.n_control,
            }
        })
        .collect())
}

/// Mean CATE over the treated records.
pub fn ate(records: &[CateRecord]) -> Result<f64> {
    let treated: Vec<f64> = records.iter().filter(|r| r.treated).map(|r| r.cate).collect();
    if treated.is_empty() {
        return Err(AemrError::Empty("no treated CATE records"));
    }
    Ok(treated.iter().sum::<f64>() / treated.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covset::CovariateSet;

    fn group(members: &[usize], d: &Dataset) -> MatchedGroup {
        let nt = members.iter().filter(|&&u| d.is_treated(u)).count();
        MatchedGroup {
            id: GroupId { iteration: 0, rank: 0 },
            dropped: CovariateSet::empty(),
            retained: CovariateSet::full(1),
            key_values: vec![0],
            members: members.to_vec(),
            main_members: members.to_vec(),
            aux_members: vec![],
            n_treated: nt,
            n_control: members.len() - nt,
        }
    }

    fn data(t: &[u8], y: &[f64]) -> Dataset {
        let rows = vec![vec![0u32]; t.len()];
        Dataset::binary(&rows, t, y).unwrap()
    }

    fn record(cate: f64, treated: bool) -> CateRecord {
        CateRecord {
            unit_id: 0,
            group_id: GroupId { iteration: 0, rank: 0 },
            treated,
            cate,
            n_treated: 1,
            n_control: 1,
        }
    }

    #[test]
    fn single_pair() {
        let d = data(&[1, 0], &[3.0, 1.0]);
        assert_eq!(group_cate(&group(&[0, 1], &d), &d).unwrap(), 2.0);
    }

    #[test]
    fn two_by_two() {
        let d = data(&[1, 1, 0, 0], &[2.0, 4.0, 1.0, 3.0]);
        assert_eq!(group_cate(&group(&[0, 1, 2, 3], &d), &d).unwrap(), 1.0);
    }

    #[test]
    fn auxiliary_outcomes_count() {
        let d = data(&[1, 0, 0], &[5.0, 0.0, 10.0]);
        let mut g = group(&[0, 1, 2], &d);
        g.main_members = vec![0, 1];
        g.aux_members = vec![2];
        assert_eq!(group_cate(&g, &d).unwrap(), 0.0);
    }

    #[test]
    fn one_sided_group_is_error() {
        let d = data(&[1, 1], &[1.0, 2.0]);
        assert!(group_cate(&group(&[0, 1], &d), &d).is_err());
    }

    #[test]
    fn ate_over_treated_only() {
        assert_eq!(ate(&[record(2.0, true)]).unwrap(), 2.0);
        assert_eq!(ate(&[record(2.0, true), record(4.0, true), record(100.0, false)]).unwrap(), 3.0);
        assert!(ate(&[]).is_err());
        assert!(ate(&[record(1.0, false)]).is_err());
    }
}
