//! Seeded synthetic data for the simulation scenarios.
//!
//! Outcomes follow
//! `y = Σ α_i x_i + T Σ β_i x_i + T·U Σ_{i<γ} x_i x_γ + τ ε`, with the
//! interaction running over the first `interaction_span` covariates.
//! Every row draws from its own ChaCha stream, so output depends only on the
//! spec and seed, never on thread count.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{CovariateSpec, Dataset};
use crate::error::{AemrError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Irrelevant,
    ExpDecay,
    Imbalance,
    Noise,
    MissingCorrelated,
}

impl std::str::FromStr for Scenario {
    type Err = AemrError;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "irrelevant" => Scenario::Irrelevant,
            "exp_decay" | "exp-decay" => Scenario::ExpDecay,
            "imbalance" => Scenario::Imbalance,
            "noise" => Scenario::Noise,
            "missing_correlated" | "missing-correlated" | "missing" => Scenario::MissingCorrelated,
            other => return Err(AemrError::Config(format!("unknown scenario {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub scenario: Scenario,
    pub n_control: usize,
    pub n_treated: usize,
    pub p_important: usize,
    pub p_irrelevant: usize,
    /// Overrides the scenario's outcome coefficients when set.
    pub alpha: Option<Vec<f64>>,
    pub beta: Option<Vec<f64>>,
    pub u: f64,
    pub tau: f64,
    pub noise_sd: f64,
    pub missing_rate: f64,
    /// Latent correlation for the missing-data scenario; block default when
    /// absent.
    pub correlation: Option<Vec<Vec<f64>>>,
    /// Imbalance scenario: the control pool holds `pool_ratio · n_treated`
    /// units and `n_control` of them are used.
    pub pool_ratio: usize,
    /// Holdout arm sizes; default to the main sizes.
    pub holdout_control: Option<usize>,
    pub holdout_treated: Option<usize>,
    pub seed: u64,
}

impl DgpSpec {
    fn base(scenario: Scenario, n_control: usize, n_treated: usize, seed: u64) -> Self {
        Self {
            scenario,
            n_control,
            n_treated,
            p_important: 5,
            p_irrelevant: 10,
            alpha: None,
            beta: None,
            u: 0.0,
            tau: 0.0,
            noise_sd: 1.0,
            missing_rate: 0.0,
            correlation: None,
            pool_ratio: 20,
            holdout_control: None,
            holdout_treated: None,
            seed,
        }
    }

    /// 5 important and 10 irrelevant covariates.
    pub fn irrelevant(n_control: usize, n_treated: usize, seed: u64) -> Self {
        Self::base(Scenario::Irrelevant, n_control, n_treated, seed)
    }

    /// `p` covariates with `α_i = 64 · 2^{-i}` (1-based `i`).
    pub fn exp_decay(n_control: usize, n_treated: usize, p: usize, seed: u64) -> Self {
        Self {
            p_important: p,
            p_irrelevant: 0,
            ..Self::base(Scenario::ExpDecay, n_control, n_treated, seed)
        }
    }

    /// Exponential-decay covariates with `ratio · n_treated` controls drawn
    /// from a pool of `20 · n_treated`.
    pub fn imbalance(n_treated: usize, ratio: usize, p: usize, seed: u64) -> Self {
        Self {
            p_important: p,
            p_irrelevant: 0,
            ..Self::base(Scenario::Imbalance, ratio * n_treated, n_treated, seed)
        }
    }

    /// Irrelevant-covariate design with noise `τ · N(0, sd)`.
    pub fn noise(n_control: usize, n_treated: usize, tau: f64, noise_sd: f64, seed: u64) -> Self {
        Self {
            tau,
            noise_sd,
            ..Self::base(Scenario::Noise, n_control, n_treated, seed)
        }
    }

    /// Correlated binary covariates with entries deleted at `missing_rate`.
    pub fn missing(n_control: usize, n_treated: usize, p: usize, missing_rate: f64, seed: u64) -> Self {
        Self {
            p_important: p,
            p_irrelevant: 0,
            missing_rate,
            ..Self::base(Scenario::MissingCorrelated, n_control, n_treated, seed)
        }
    }

    pub fn p(&self) -> usize {
        self.p_important + self.p_irrelevant
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.p();
        if p == 0 {
            return Err(AemrError::Config("spec needs at least one covariate".into()));
        }
        for (name, v) in [("alpha", &self.alpha), ("beta", &self.beta)] {
            if let Some(v) = v {
                if v.len() != p {
                    return Err(AemrError::Config(format!("{name} has {} entries, expected {p}", v.len())));
                }
            }
        }
        if !(0.0..=1.0).contains(&self.missing_rate) {
            return Err(AemrError::Config(format!("missing_rate {} outside [0, 1]", self.missing_rate)));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) || !self.tau.is_finite() || !self.u.is_finite() {
            return Err(AemrError::Config("noise_sd must be >= 0; tau and u finite".into()));
        }
        if self.scenario == Scenario::Imbalance && self.n_control > self.pool_ratio * self.n_treated {
            return Err(AemrError::Config(format!(
                "n_control {} exceeds the control pool of {}",
                self.n_control,
                self.pool_ratio * self.n_treated
            )));
        }
        if self.scenario != Scenario::MissingCorrelated && self.missing_rate > 0.0 {
            return Err(AemrError::Config("missing_rate applies only to the missing_correlated scenario".into()));
        }
        if let Some(c) = &self.correlation {
            if c.len() != p || c.iter().any(|r| r.len() != p) {
                return Err(AemrError::Config(format!("correlation must be {p}x{p}")));
            }
        }
        Ok(())
    }
}

/// Coefficients of the outcome model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutcomeModel {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub u: f64,
    pub tau: f64,
    pub noise_sd: f64,
    pub interaction_span: usize,
}

impl OutcomeModel {
    fn interaction(&self, x: &[u32]) -> f64 {
        let span = self.interaction_span.min(x.len());
        let ones = x[..span].iter().filter(|&&v| v != 0).count();
        // Σ_{i<γ} x_i x_γ over binary x is the number of pairs of ones.
        let pairs = (ones * ones.saturating_sub(1) / 2) as f64;
        if x[..span].iter().all(|&v| v <= 1) {
            pairs
        } else {
            let mut s = 0.0;
            for i in 0..span {
                for g in i + 1..span {
                    s += x[i] as f64 * x[g] as f64;
                }
            }
            s
        }
    }

    /// Noiseless outcome.
    pub fn mean(&self, x: &[u32], t: u8) -> f64 {
        let base: f64 = self.alpha.iter().zip(x).map(|(a, &v)| a * v as f64).sum();
        if t == 0 {
            return base;
        }
        base + self.effect(x)
    }

    /// `Σ β_i x_i + U Σ_{i<γ} x_i x_γ`.
    fn effect(&self, x: &[u32]) -> f64 {
        let lin: f64 = self.beta.iter().zip(x).map(|(b, &v)| b * v as f64).sum();
        lin + self.u * self.interaction(x)
    }

    /// Difference of the noiseless treated and control outcomes.
    pub fn true_cate(&self, x: &[u32]) -> f64 {
        self.mean(x, 1) - self.mean(x, 0)
    }
}

/// Outcome for covariates `x` under treatment `t`; the noise term draws from
/// `rng` only when `τ ≠ 0`.
pub fn gen_outcome<R: Rng + ?Sized>(x: &[u32], t: u8, model: &OutcomeModel, rng: &mut R) -> f64 {
    let mut y = model.mean(x, t);
    if model.tau != 0.0 {
        let eps: f64 = rng.sample(StandardNormal);
        y += model.tau * model.noise_sd * eps;
    }
    y
}

/// Output of a generator run.
#[derive(Debug, Clone)]
pub struct Generated {
    pub data: Dataset,
    pub holdout: Dataset,
    /// Noiseless treatment effect per unit of `data`.
    pub true_cate: Vec<f64>,
    pub holdout_true_cate: Vec<f64>,
    pub model: OutcomeModel,
}

const STREAM_COEF: u64 = 0;
const STREAM_MAIN: u64 = 1;
const STREAM_HOLDOUT: u64 = 2;

/// Independent per-row generator: stream `section << 40 | row`.
fn row_rng(seed: u64, section: u64, row: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(section << 40 | row as u64);
    rng
}

fn exp_decay_alpha(p: usize) -> Vec<f64> {
    (1..=p).map(|i| 64.0 * 0.5f64.powi(i as i32)).collect()
}

fn draw_model(spec: &DgpSpec) -> OutcomeModel {
    let p = spec.p();
    let mut rng = row_rng(spec.seed, STREAM_COEF, 0);
    let beta_dist = Normal::new(1.5, 0.15).expect("valid");
    let alpha = spec.alpha.clone().unwrap_or_else(|| match spec.scenario {
        Scenario::ExpDecay | Scenario::Imbalance => exp_decay_alpha(p),
        _ => (0..p)
            .map(|i| {
                if i < spec.p_important {
                    let s = if rng.random_bool(0.5) { 10.0 } else { -10.0 };
                    s + rng.sample::<f64, _>(StandardNormal)
                } else {
                    0.0
                }
            })
            .collect(),
    });
    let beta = spec.beta.clone().unwrap_or_else(|| {
        (0..p)
            .map(|i| if i < spec.p_important { beta_dist.sample(&mut rng) } else { 0.0 })
            .collect()
    });
    OutcomeModel {
        alpha,
        beta,
        u: spec.u,
        tau: spec.tau,
        noise_sd: spec.noise_sd,
        interaction_span: spec.p_important,
    }
}

/// Covariate row for the independent-Bernoulli scenarios.
fn draw_bernoulli_row(spec: &DgpSpec, t: u8, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let important = Bernoulli::new(0.5).expect("valid");
    let irrelevant = Bernoulli::new(if t == 1 { 0.9 } else { 0.1 }).expect("valid");
    (0..spec.p())
        .map(|i| {
            let b = if i < spec.p_important { important.sample(rng) } else { irrelevant.sample(rng) };
            b as u32
        })
        .collect()
}

struct Rows {
    codes: Vec<Vec<u32>>,
    missing: Vec<Vec<bool>>,
    treatment: Vec<u8>,
    outcome: Vec<f64>,
    true_cate: Vec<f64>,
}

/// Generates `arms` (treatment, pool row index) with a per-row stream.
fn gen_rows<F>(spec: &DgpSpec, model: &OutcomeModel, section: u64, arms: &[(u8, usize)], draw: F) -> Rows
where
    F: Fn(u8, &mut ChaCha8Rng) -> (Vec<u32>, Vec<bool>) + Sync,
{
    let out: Vec<(Vec<u32>, Vec<bool>, f64, f64)> = arms
        .par_iter()
        .map(|&(t, idx)| {
            let mut rng = row_rng(spec.seed, section, idx);
            let (x, miss) = draw(t, &mut rng);
            let y = gen_outcome(&x, t, model, &mut rng);
            let cate = model.true_cate(&x);
            (x, miss, y, cate)
        })
        .collect();
    let mut rows = Rows {
        codes: Vec::with_capacity(out.len()),
        missing: Vec::with_capacity(out.len()),
        treatment: arms.iter().map(|a| a.0).collect(),
        outcome: Vec::with_capacity(out.len()),
        true_cate: Vec::with_capacity(out.len()),
    };
    for (x, m, y, c) in out {
        rows.codes.push(x);
        rows.missing.push(m);
        rows.outcome.push(y);
        rows.true_cate.push(c);
    }
    rows
}

/// Row layout: controls first, then treated. Pool indices keep the
/// imbalance scenario's control draws stable across ratios.
fn arm_layout(spec: &DgpSpec, n_control: usize, n_treated: usize) -> Vec<(u8, usize)> {
    let treated_base = match spec.scenario {
        Scenario::Imbalance => spec.pool_ratio * spec.n_treated,
        _ => n_control,
    };
    (0..n_control)
        .map(|i| (0u8, i))
        .chain((0..n_treated).map(|i| (1u8, treated_base + i)))
        .collect()
}

fn build_dataset(specs: Vec<CovariateSpec>, rows: &Rows, with_mask: bool, arity: u32) -> Result<Dataset> {
    let p = specs.len();
    let mut codes = Vec::with_capacity(rows.codes.len() * p);
    let mut mask = Vec::new();
    for (x, m) in rows.codes.iter().zip(&rows.missing) {
        for j in 0..p {
            if with_mask && m[j] {
                codes.push(arity - 1);
            } else {
                codes.push(x[j]);
            }
        }
        if with_mask {
            mask.extend_from_slice(m);
        }
    }
    Dataset::new(
        specs,
        codes,
        rows.treatment.clone(),
        rows.outcome.clone(),
        with_mask.then_some(mask),
    )
}

fn names(p: usize) -> Vec<String> {
    (0..p).map(|j| format!("x{j}")).collect()
}

/// Generates a dataset, a same-process holdout and the true CATE for the
/// Bernoulli scenarios (irrelevant, exp_decay, imbalance, noise).
pub fn gen_scenario(spec: &DgpSpec) -> Result<Generated> {
    spec.validate()?;
    if spec.scenario == Scenario::MissingCorrelated {
        return gen_missing_correlated(spec);
    }
    let p = spec.p();
    let model = draw_model(spec);
    let specs: Vec<CovariateSpec> = names(p).into_iter().map(|n| CovariateSpec::new(n, 2)).collect();
    let draw = |t: u8, rng: &mut ChaCha8Rng| (draw_bernoulli_row(spec, t, rng), vec![false; p]);

    let main = gen_rows(spec, &model, STREAM_MAIN, &arm_layout(spec, spec.n_control, spec.n_treated), draw);
    let hc = spec.holdout_control.unwrap_or(spec.n_control);
    let ht = spec.holdout_treated.unwrap_or(spec.n_treated);
    let hold = gen_rows(spec, &model, STREAM_HOLDOUT, &arm_layout(spec, hc, ht), draw);
    Ok(Generated {
        data: build_dataset(specs.clone(), &main, false, 2)?,
        holdout: build_dataset(specs, &hold, false, 2)?,
        true_cate: main.true_cate,
        holdout_true_cate: hold.true_cate,
        model,
    })
}

/// Block-diagonal correlation: `rho` within consecutive blocks of `block`
/// covariates, 0 across blocks, 1 on the diagonal.
pub fn block_correlation(p: usize, block: usize, rho: f64) -> Vec<Vec<f64>> {
    let block = block.max(1);
    (0..p)
        .map(|i| {
            (0..p)
                .map(|j| if i == j { 1.0 } else if i / block == j / block { rho } else { 0.0 })
                .collect()
        })
        .collect()
}

/// Lower-triangular `L` with `L Lᵀ = Σ`. Semi-definite matrices are accepted;
/// zero pivots produce zero columns.
pub fn psd_factor(sigma: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let p = sigma.len();
    let m = DMatrix::from_fn(p, p, |i, j| sigma[i][j]);
    let scale = m.amax().max(1.0);
    let tol = 1e-10 * scale;
    if (0..p).any(|i| (0..p).any(|j| (m[(i, j)] - m[(j, i)]).abs() > tol)) {
        return Err(AemrError::NotPsd);
    }
    let mut l = DMatrix::<f64>::zeros(p, p);
    for j in 0..p {
        let mut diag = m[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if diag < -tol {
            return Err(AemrError::NotPsd);
        }
        if diag <= tol {
            // Column must vanish for Σ to be PSD.
            for i in j + 1..p {
                let mut v = m[(i, j)];
                for k in 0..j {
                    v -= l[(i, k)] * l[(j, k)];
                }
                if v.abs() > 1e-8 * scale {
                    return Err(AemrError::NotPsd);
                }
            }
            continue;
        }
        let d = diag.sqrt();
        l[(j, j)] = d;
        for i in j + 1..p {
            let mut v = m[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / d;
        }
    }
    Ok(l)
}

/// Correlated binary covariates `X_j = 1{Z_j > 0}`, `Z ~ N(0, Σ)`, with cells
/// deleted completely at random. Missing cells carry the sentinel code 2 of
/// arity-3 covariates. The holdout is drawn complete.
pub fn gen_missing_correlated(spec: &DgpSpec) -> Result<Generated> {
    spec.validate()?;
    let p = spec.p();
    let sigma = spec.correlation.clone().unwrap_or_else(|| block_correlation(p, 5, 0.5));
    let l = psd_factor(&sigma)?;
    let model = draw_model(spec);
    let rate = spec.missing_rate;
    let draw_x = |rng: &mut ChaCha8Rng| -> Vec<u32> {
        let z: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        (0..p)
            .map(|i| {
                let zi: f64 = (0..=i).map(|k| l[(i, k)] * z[k]).sum();
                (zi > 0.0) as u32
            })
            .collect()
    };
    let draw_main = |_t: u8, rng: &mut ChaCha8Rng| {
        let x = draw_x(rng);
        let miss = (0..p).map(|_| rate > 0.0 && rng.random_bool(rate)).collect();
        (x, miss)
    };
    let draw_hold = |_t: u8, rng: &mut ChaCha8Rng| (draw_x(rng), vec![false; p]);

    let specs: Vec<CovariateSpec> = names(p).into_iter().map(|n| CovariateSpec::new(n, 3)).collect();
    let main = gen_rows(spec, &model, STREAM_MAIN, &arm_layout(spec, spec.n_control, spec.n_treated), draw_main);
    let hc = spec.holdout_control.unwrap_or(spec.n_control);
    let ht = spec.holdout_treated.unwrap_or(spec.n_treated);
    let hold = gen_rows(spec, &model, STREAM_HOLDOUT, &arm_layout(spec, hc, ht), draw_hold);
    Ok(Generated {
        data: build_dataset(specs.clone(), &main, true, 3)?,
        holdout: build_dataset(specs, &hold, false, 3)?,
        true_cate: main.true_cate,
        holdout_true_cate: hold.true_cate,
        model,
    })
}

/// Uniform random binary data for benchmarks: treatment is a fair coin.
pub fn gen_uniform(n: usize, p: usize, arity: u32, seed: u64) -> Result<Dataset> {
    let rows: Vec<(Vec<u32>, u8)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = row_rng(seed, STREAM_MAIN, i);
            let x = (0..p).map(|_| rng.random_range(0..arity)).collect();
            (x, rng.random_bool(0.5) as u8)
        })
        .collect();
    let specs = names(p).into_iter().map(|n| CovariateSpec::new(n, arity)).collect();
    let codes = rows.iter().flat_map(|r| r.0.iter().copied()).collect();
    let t = rows.iter().map(|r| r.1).collect();
    Dataset::new(specs, codes, t, vec![0.0; n], None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(alpha: Vec<f64>, beta: Vec<f64>, u: f64) -> OutcomeModel {
        let span = alpha.len();
        OutcomeModel {
            alpha,
            beta,
            u,
            tau: 0.0,
            noise_sd: 1.0,
            interaction_span: span,
        }
    }

    #[test]
    fn zero_covariates_give_zero() {
        let m = model(vec![3.0, 4.0], vec![1.0, 1.0], 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(gen_outcome(&[0, 0], 1, &m, &mut rng), 0.0);
        assert_eq!(gen_outcome(&[0, 0], 0, &m, &mut rng), 0.0);
    }

    #[test]
    fn direct_substitution() {
        let m = model(vec![1.0, 2.0], vec![3.0, 4.0], 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(gen_outcome(&[1, 1], 1, &m, &mut rng), 11.0);
        assert_eq!(m.true_cate(&[1, 1]), 8.0);
        assert_eq!(m.mean(&[1, 1], 1) - m.mean(&[1, 1], 0), 8.0);
    }

    #[test]
    fn interaction_counts_pairs() {
        let m = model(vec![0.0; 4], vec![0.0; 4], 1.0);
        assert_eq!(m.true_cate(&[1, 1, 1, 0]), 3.0);
        assert_eq!(m.true_cate(&[2, 1, 1, 0]), 5.0);
    }

    #[test]
    fn exp_decay_third_coefficient() {
        assert_eq!(exp_decay_alpha(5)[2], 8.0);
        let g = gen_scenario(&DgpSpec::exp_decay(10, 10, 5, 1)).unwrap();
        assert_eq!(g.model.alpha, vec![32.0, 16.0, 8.0, 4.0, 2.0]);
    }

    #[test]
    fn irrelevant_dimensions() {
        let s = DgpSpec::irrelevant(15000, 15000, 7);
        assert_eq!((s.n_control, s.n_treated, s.p_important, s.p_irrelevant), (15000, 15000, 5, 10));
    }

    #[test]
    fn counts_and_determinism() {
        let s = DgpSpec::irrelevant(30, 20, 3);
        let a = gen_scenario(&s).unwrap();
        let b = gen_scenario(&s).unwrap();
        assert_eq!(a.data, b.data);
        assert_eq!(a.data.n_treated(), 20);
        assert_eq!(a.data.n_control(), 30);
        assert_eq!(a.holdout.n(), 50);
        for u in 0..a.data.n() {
            assert_eq!(a.true_cate[u], a.model.true_cate(a.data.row(u)));
        }
    }

    #[test]
    fn imbalance_controls_are_a_pool_prefix() {
        let a = gen_scenario(&DgpSpec::imbalance(10, 5, 4, 9)).unwrap();
        let b = gen_scenario(&DgpSpec::imbalance(10, 10, 4, 9)).unwrap();
        assert_eq!(a.data.n_control(), 50);
        for u in 0..50 {
            assert_eq!(a.data.row(u), b.data.row(u));
        }
        // Treated rows do not depend on the ratio.
        assert_eq!(a.data.row(50), b.data.row(100));
    }

    #[test]
    fn factor_reconstructs_and_rejects() {
        let s = block_correlation(6, 3, 0.5);
        let l = psd_factor(&s).unwrap();
        let r = &l * l.transpose();
        for i in 0..6 {
            for j in 0..6 {
                assert!((r[(i, j)] - s[i][j]).abs() < 1e-12);
            }
        }
        let bad = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        assert!(matches!(psd_factor(&bad), Err(AemrError::NotPsd)));
        let singular = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        assert!(psd_factor(&singular).is_ok());
    }

    #[test]
    fn zero_missing_rate_gives_clean_mask() {
        let g = gen_missing_correlated(&DgpSpec::missing(40, 20, 6, 0.0, 1)).unwrap();
        assert!(g.data.missing_mask().unwrap().iter().all(|&m| !m));
        assert!(g.data.codes().iter().all(|&c| c < 2));
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = DgpSpec::irrelevant(10, 10, 0);
        s.alpha = Some(vec![1.0]);
        assert!(s.validate().is_err());
        let mut s = DgpSpec::imbalance(10, 5, 4, 0);
        s.n_control = 1000;
        assert!(s.validate().is_err());
        let mut s = DgpSpec::irrelevant(10, 10, 0);
        s.missing_rate = 0.2;
        assert!(s.validate().is_err());
    }
}
