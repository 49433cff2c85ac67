//! Covariate relevance from a holdout set: least-squares fits, prediction
//! error, balancing factor, match quality, and permutation importance.
//!
//! Design matrices use the raw covariate codes as numeric regressors with an
//! intercept column first.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::covset::{CovariateSet, WeightVector};
use crate::data::Dataset;
use crate::error::{AemrError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Coefficients in design-column order.
    pub beta: Vec<f64>,
    /// Mean squared training residual.
    pub training_loss: f64,
    /// Set when `λ = 0` and the design is rank deficient; `beta` is then the
    /// minimum-norm solution.
    pub rank_deficient: bool,
}

/// Minimizes `‖y − Xβ‖² + λ‖β‖²`. With `λ = 0` this is ordinary least
/// squares, falling back to the minimum-norm solution on rank deficiency.
pub fn fit_least_squares(x: &DMatrix<f64>, y: &DVector<f64>, ridge_lambda: f64) -> Result<FitResult> {
    if x.nrows() == 0 {
        return Err(AemrError::Empty("least-squares fit needs at least one row"));
    }
    if x.nrows() != y.len() {
        return Err(AemrError::DimensionMismatch {
            expected: x.nrows(),
            found: y.len(),
        });
    }
    if !(ridge_lambda >= 0.0 && ridge_lambda.is_finite()) {
        return Err(AemrError::Config(format!("ridge lambda must be >= 0, got {ridge_lambda}")));
    }
    let (beta, rank_deficient) = if ridge_lambda > 0.0 {
        let q = x.ncols();
        let gram = x.tr_mul(x) + DMatrix::identity(q, q) * ridge_lambda;
        let rhs = x.tr_mul(y);
        let beta = gram
            .clone()
            .cholesky()
            .map(|c| c.solve(&rhs))
            .or_else(|| gram.lu().solve(&rhs))
            .ok_or_else(|| AemrError::Parse("ridge system is singular".into()))?;
        (beta, false)
    } else {
        let svd = x.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let tol = smax * f64::EPSILON * x.nrows().max(x.ncols()) as f64;
        let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
        let beta = svd
            .solve(y, tol)
            .map_err(|e| AemrError::Parse(e.to_string()))?;
        (beta, rank < x.ncols())
    };
    let rss = rounding_floor((y - x * &beta).norm_squared(), y.norm_squared(), x.nrows());
    Ok(FitResult {
        training_loss: rss / x.nrows() as f64,
        beta: beta.iter().copied().collect(),
        rank_deficient,
    })
}

/// `[1, x_j for j in retained]` for the given rows.
pub fn design_matrix(d: &Dataset, rows: &[usize], retained: &CovariateSet) -> DMatrix<f64> {
    let cols: Vec<usize> = retained.iter().collect();
    DMatrix::from_fn(rows.len(), cols.len() + 1, |i, c| {
        if c == 0 {
            1.0
        } else {
            f64::from(d.code(rows[i], cols[c - 1]))
        }
    })
}

fn arm_rows(d: &Dataset, arm: u8) -> Vec<usize> {
    (0..d.n()).filter(|&u| d.treatment()[u] == arm).collect()
}

/// Control-fit MSE plus treated-fit MSE on the holdout, using only the
/// covariates not in `dropped`.
pub fn prediction_error(holdout: &Dataset, dropped: &CovariateSet, ridge_lambda: f64) -> Result<f64> {
    dropped.check_bound(holdout.p())?;
    let retained = dropped.complement(holdout.p());
    let mut pe = 0.0;
    for arm in [0u8, 1] {
        let rows = arm_rows(holdout, arm);
        if rows.is_empty() {
            return Err(AemrError::Empty("prediction error needs treated and control holdout units"));
        }
        let x = design_matrix(holdout, &rows, &retained);
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&u| holdout.outcome()[u]));
        pe += fit_least_squares(&x, &y, ridge_lambda)?.training_loss;
    }
    Ok(pe)
}

/// Sufficient statistics of one arm for repeated sub-design fits.
#[derive(Debug, Clone)]
struct ArmGram {
    xtx: DMatrix<f64>,
    xty: DVector<f64>,
    yty: f64,
    n: usize,
}

impl ArmGram {
    fn new(d: &Dataset, arm: u8) -> Result<Self> {
        let rows = arm_rows(d, arm);
        if rows.is_empty() {
            return Err(AemrError::Empty("prediction error needs treated and control holdout units"));
        }
        let x = design_matrix(d, &rows, &CovariateSet::full(d.p()));
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&u| d.outcome()[u]));
        Ok(Self {
            xtx: x.tr_mul(&x),
            xty: x.tr_mul(&y),
            yty: y.norm_squared(),
            n: rows.len(),
        })
    }

    /// Training MSE of the fit on design columns `cols` (0 is the intercept).
    fn mse(&self, cols: &[usize], lambda: f64) -> f64 {
        let q = cols.len();
        let g = DMatrix::from_fn(q, q, |i, j| self.xtx[(cols[i], cols[j])]);
        let b = DVector::from_fn(q, |i, _| self.xty[cols[i]]);
        let beta = solve_normal(&g, &b, lambda);
        let rss = self.yty - 2.0 * beta.dot(&b) + (&g * &beta).dot(&beta);
        rounding_floor(rss, self.yty, self.n) / self.n as f64
    }
}

/// Residual sums of squares within rounding noise of `‖y‖²` count as an
/// exact fit.
fn rounding_floor(rss: f64, yty: f64, n: usize) -> f64 {
    let floor = yty * f64::EPSILON * (n.max(1) as f64) * 64.0;
    if rss <= floor {
        0.0
    } else {
        rss
    }
}

fn solve_normal(g: &DMatrix<f64>, b: &DVector<f64>, lambda: f64) -> DVector<f64> {
    let q = g.nrows();
    let a = g + DMatrix::identity(q, q) * lambda;
    if let Some(c) = a.clone().cholesky() {
        let beta = c.solve(b);
        if beta.iter().all(|v| v.is_finite()) {
            return beta;
        }
    }
    let svd = a.svd(true, true);
    let tol = svd.singular_values.max() * f64::EPSILON * q as f64 * 16.0;
    svd.solve(b, tol).unwrap_or_else(|_| DVector::zeros(q))
}

/// Prediction-error scorer over many candidate sets of one holdout. Works
/// from per-arm Gram matrices and memoizes by dropped set.
#[derive(Debug, Clone)]
pub struct PeScorer {
    p: usize,
    lambda: f64,
    control: ArmGram,
    treated: ArmGram,
    cache: HashMap<CovariateSet, f64>,
}

impl PeScorer {
    pub fn new(holdout: &Dataset, ridge_lambda: f64) -> Result<Self> {
        Ok(Self {
            p: holdout.p(),
            lambda: ridge_lambda,
            control: ArmGram::new(holdout, 0)?,
            treated: ArmGram::new(holdout, 1)?,
            cache: HashMap::new(),
        })
    }

    /// Uncached evaluation; safe to call concurrently.
    pub fn compute(&self, dropped: &CovariateSet) -> f64 {
        let cols: Vec<usize> = std::iter::once(0)
            .chain((0..self.p).filter(|j| !dropped.contains(*j)).map(|j| j + 1))
            .collect();
        self.control.mse(&cols, self.lambda) + self.treated.mse(&cols, self.lambda)
    }

    pub fn pe(&mut self, dropped: &CovariateSet) -> f64 {
        if let Some(&v) = self.cache.get(dropped) {
            return v;
        }
        let v = self.compute(dropped);
        self.cache.insert(dropped.clone(), v);
        v
    }

    pub fn cached(&self, dropped: &CovariateSet) -> Option<f64> {
        self.cache.get(dropped).copied()
    }

    pub fn insert(&mut self, dropped: CovariateSet, pe: f64) {
        self.cache.insert(dropped, pe);
    }
}

/// `matched_control / remaining_control + matched_treated / remaining_treated`.
///
/// A side with nothing remaining contributes 0 when nothing was matched on
/// it and 1 otherwise.
pub fn balancing_factor(
    matched_control: usize,
    remaining_control: usize,
    matched_treated: usize,
    remaining_treated: usize,
) -> f64 {
    fn ratio(m: usize, r: usize) -> f64 {
        if r == 0 {
            if m == 0 {
                0.0
            } else {
                1.0
            }
        } else {
            (m as f64 / r as f64).min(1.0)
        }
    }
    ratio(matched_control, remaining_control) + ratio(matched_treated, remaining_treated)
}

/// `C · bf − pe`; larger is better.
pub fn match_quality(pe: f64, bf: f64, tradeoff: f64) -> f64 {
    tradeoff * bf - pe
}

/// Per-covariate permutation importance on a holdout.
///
/// A ridge model on `[1, T, x_0..x_{p-1}]` is fit once; then for each
/// covariate the column is shuffled `n_shuffles` times, the model refit, and
/// the mean shuffled training loss divided by the unshuffled loss. Scores
/// near 1 mean the covariate carries no signal.
pub fn permutation_importance(
    holdout: &Dataset,
    n_shuffles: usize,
    ridge_lambda: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    if n_shuffles == 0 {
        return Err(AemrError::Config("n_shuffles must be >= 1".into()));
    }
    if holdout.n() == 0 {
        return Err(AemrError::Empty("permutation importance needs holdout units"));
    }
    let n = holdout.n();
    let p = holdout.p();
    let q = p + 2;
    let column = |c: usize| -> Vec<f64> {
        match c {
            0 => vec![1.0; n],
            1 => holdout.treatment().iter().map(|&t| f64::from(t)).collect(),
            _ => (0..n).map(|u| f64::from(holdout.code(u, c - 2))).collect(),
        }
    };
    let cols: Vec<Vec<f64>> = (0..q).map(column).collect();
    let y = holdout.outcome();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let gram = DMatrix::from_fn(q, q, |i, j| dot(&cols[i], &cols[j]));
    let xty = DVector::from_fn(q, |i, _| dot(&cols[i], y));
    let yty = dot(y, y);
    let loss = |g: &DMatrix<f64>, b: &DVector<f64>| {
        let beta = solve_normal(g, b, ridge_lambda);
        let rss = yty - 2.0 * beta.dot(b) + (g * &beta).dot(&beta);
        rss.max(0.0) / n as f64
    };
    let base = loss(&gram, &xty);
    // A perfect base fit makes every ratio infinite; floor the denominator.
    let floor = 1e-12 * (yty / n as f64 + 1.0);
    let denom = base.max(floor);

    let scores = (0..p)
        .into_par_iter()
        .map(|j| {
            let c = j + 2;
            let mut total = 0.0;
            for k in 0..n_shuffles {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream((j * n_shuffles + k) as u64);
                let mut perm = cols[c].clone();
                perm.shuffle(&mut rng);
                let mut g = gram.clone();
                for (i, col) in cols.iter().enumerate() {
                    if i != c {
                        let v = dot(&perm, col);
                        g[(i, c)] = v;
                        g[(c, i)] = v;
                    }
                }
                let mut b = xty.clone();
                b[c] = dot(&perm, y);
                total += loss(&g, &b);
            }
            total / n_shuffles as f64 / denom
        })
        .collect();
    Ok(scores)
}

/// `w_j = max(0, score_j − min_k score_k)`.
pub fn weights_from_scores(scores: &[f64]) -> Result<WeightVector> {
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    WeightVector::new(scores.iter().map(|s| (s - min).max(0.0)).collect())
}

/// Midpoint of the widest gap between consecutive sorted weights; separates
/// a cluster of heavy covariates from light ones. `None` with fewer than two
/// distinct weights.
pub fn largest_gap_threshold(w: &WeightVector) -> Option<f64> {
    let mut v = w.as_slice().to_vec();
    v.sort_by(f64::total_cmp);
    v.windows(2)
        .filter(|p| p[1] > p[0])
        .max_by(|a, b| (a[1] - a[0]).total_cmp(&(b[1] - b[0])))
        .map(|p| 0.5 * (p[0] + p[1]))
}
