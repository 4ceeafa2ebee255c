//! Three-level hierarchical logistic regression in non-centered form.
//!
//! Model:
//!
//! ```text
//! mu        ~ Normal(beta0, diag(sigma0))
//! sigma     ~ HalfNormal(tau)
//! beta_raw  ~ Normal(0, I)            (J x p)
//! beta_j    = mu + sigma * beta_raw_j
//! y_ij      ~ Bernoulli(logistic(beta_j . x_ij))
//! ```
//!
//! The sampler works on the unconstrained vector
//! `[mu (p), log_sigma, beta_raw (J x p, row-major)]`. The log density keeps
//! every normalizing constant, including the `log 2` of the half-normal, and
//! adds the `log_sigma` Jacobian of the log transform.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SMECollection};
use crate::error::{validation, Error, Result};
use crate::math::{bernoulli_logit_ll, dot, logistic, mean, nearest_rank_quantile};
use crate::nuts::LogDensity;
use crate::shap_prior::PriorSpec;
use crate::trace::PosteriorTrace;

/// Name of the constant column appended for the intercept.
pub const INTERCEPT: &str = "intercept";
/// Prior mean and variance of the intercept coefficient, which the
/// attribution prior does not cover.
pub const INTERCEPT_PRIOR: (f64, f64) = (0.0, 4.0);

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Standardized features and labels of every SME.
#[derive(Debug, Clone, PartialEq)]
pub struct HierData {
    p: usize,
    /// Row-major features per SME.
    x: Vec<Vec<f64>>,
    y: Vec<Vec<u8>>,
}

impl HierData {
    pub fn new(p: usize, x: Vec<Vec<f64>>, y: Vec<Vec<u8>>) -> Result<Self> {
        if p == 0 {
            return Err(validation!("need at least one feature"));
        }
        if x.len() != y.len() {
            return Err(validation!("{} feature blocks but {} label blocks", x.len(), y.len()));
        }
        for (j, (xj, yj)) in x.iter().zip(&y).enumerate() {
            if xj.len() != yj.len() * p {
                return Err(validation!("SME {j}: feature block does not match {} rows", yj.len()));
            }
            if yj.iter().any(|&v| v > 1) {
                return Err(validation!("SME {j}: labels must be 0/1"));
            }
            if xj.iter().any(|v| !v.is_finite()) {
                return Err(validation!("SME {j}: non-finite feature value"));
            }
        }
        Ok(HierData { p, x, y })
    }

    pub fn from_datasets(smes: &[Dataset]) -> Result<Self> {
        let p = smes.first().map_or(0, Dataset::n_features);
        if smes.iter().any(|d| d.n_features() != p) {
            return Err(validation!("SMEs disagree on feature count"));
        }
        HierData::new(
            p,
            smes.iter().map(|d| d.features().to_vec()).collect(),
            smes.iter().map(|d| d.labels().to_vec()).collect(),
        )
    }

    /// SME data with a constant-1 intercept column appended.
    pub fn from_collection(collection: &SMECollection) -> Result<Self> {
        let smes = collection
            .smes()
            .iter()
            .map(|d| d.with_constant_column(INTERCEPT))
            .collect::<Result<Vec<_>>>()?;
        HierData::from_datasets(&smes)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n_smes(&self) -> usize {
        self.y.len()
    }

    pub fn n_rows(&self, j: usize) -> usize {
        self.y[j].len()
    }

    pub fn rows(&self, j: usize) -> impl Iterator<Item = (&[f64], u8)> + '_ {
        self.x[j].chunks_exact(self.p).zip(self.y[j].iter().copied())
    }

    /// Length of the unconstrained parameter vector.
    pub fn dim(&self) -> usize {
        self.p + 1 + self.n_smes() * self.p
    }
}

/// Hyperparameters of the top two levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierHyper {
    pub beta0: Vec<f64>,
    pub sigma0_diag: Vec<f64>,
    pub tau: f64,
}

impl HierHyper {
    pub fn new(beta0: Vec<f64>, sigma0_diag: Vec<f64>, tau: f64) -> Result<Self> {
        let h = HierHyper {
            beta0,
            sigma0_diag,
            tau,
        };
        h.validate()?;
        Ok(h)
    }

    /// Hyperparameters for data built by [`HierData::from_collection`]:
    /// the extracted prior plus [`INTERCEPT_PRIOR`] for the trailing
    /// intercept.
    pub fn from_prior(prior: &PriorSpec, tau: f64) -> Result<Self> {
        let mut beta0 = prior.beta0.clone();
        let mut sigma0 = prior.sigma0_diag.clone();
        beta0.push(INTERCEPT_PRIOR.0);
        sigma0.push(INTERCEPT_PRIOR.1);
        HierHyper::new(beta0, sigma0, tau)
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta0.len() != self.sigma0_diag.len() {
            return Err(validation!("prior mean and variance lengths differ"));
        }
        if self.beta0.iter().any(|b| !b.is_finite()) {
            return Err(validation!("prior mean must be finite"));
        }
        if self.sigma0_diag.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(validation!("prior variances must be positive and finite"));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(validation!("tau must be positive, got {}", self.tau));
        }
        Ok(())
    }

    pub fn p(&self) -> usize {
        self.beta0.len()
    }
}

/// Unconstrained parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierParams {
    pub mu: Vec<f64>,
    pub log_sigma: f64,
    /// `J x p`, row-major.
    pub beta_raw: Vec<f64>,
}

impl HierParams {
    /// Starting point: `mu = beta0`, `log_sigma = 0`, `beta_raw = 0`.
    pub fn initial(hyper: &HierHyper, n_smes: usize) -> Self {
        HierParams {
            mu: hyper.beta0.clone(),
            log_sigma: 0.0,
            beta_raw: vec![0.0; n_smes * hyper.p()],
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.mu.len() + 1 + self.beta_raw.len());
        v.extend_from_slice(&self.mu);
        v.push(self.log_sigma);
        v.extend_from_slice(&self.beta_raw);
        v
    }

    pub fn from_flat(theta: &[f64], p: usize) -> Result<Self> {
        if theta.len() < p + 1 || (theta.len() - p - 1) % p != 0 {
            return Err(validation!("vector of length {} is not a layout for p = {p}", theta.len()));
        }
        Ok(HierParams {
            mu: theta[..p].to_vec(),
            log_sigma: theta[p],
            beta_raw: theta[p + 1..].to_vec(),
        })
    }

    pub fn sigma(&self) -> f64 {
        self.log_sigma.exp()
    }
}

/// Flat-order parameter names: `mu[k]`, `log_sigma`, `beta_raw[j,k]`.
pub fn param_names(p: usize, n_smes: usize) -> Vec<String> {
    let mut names: Vec<String> = (0..p).map(|k| format!("mu[{k}]")).collect();
    names.push("log_sigma".into());
    for j in 0..n_smes {
        for k in 0..p {
            names.push(format!("beta_raw[{j},{k}]"));
        }
    }
    names
}

fn check_dims(theta: &[f64], data: &HierData, hyper: &HierHyper) -> Result<()> {
    if hyper.p() != data.p() {
        return Err(validation!("prior has {} coefficients, data {}", hyper.p(), data.p()));
    }
    if theta.len() != data.dim() {
        return Err(validation!("parameter vector has length {}, expected {}", theta.len(), data.dim()));
    }
    if let Some(i) = theta.iter().position(|v| !v.is_finite()) {
        return Err(validation!("parameter {i} is not finite"));
    }
    Ok(())
}

/// Log density at flat `theta`; if `grad` is given it receives the gradient.
/// Dimensions are trusted.
fn evaluate(theta: &[f64], data: &HierData, hyper: &HierHyper, mut grad: Option<&mut [f64]>) -> f64 {
    let p = data.p();
    let mu = &theta[..p];
    let s = theta[p];
    let sigma = s.exp();
    let raw = &theta[p + 1..];
    let tau2 = hyper.tau * hyper.tau;

    if let Some(g) = grad.as_deref_mut() {
        g.fill(0.0);
    }

    let mut lp = 0.0;
    for k in 0..p {
        let v = hyper.sigma0_diag[k];
        let d = mu[k] - hyper.beta0[k];
        lp += -0.5 * (LN_2PI + v.ln()) - d * d / (2.0 * v);
        if let Some(g) = grad.as_deref_mut() {
            g[k] = -d / v;
        }
    }
    lp += std::f64::consts::LN_2 - 0.5 * LN_2PI - hyper.tau.ln() - sigma * sigma / (2.0 * tau2) + s;
    let mut g_sigma = -sigma * sigma / tau2 + 1.0;

    let mut beta = vec![0.0; p];
    let mut g_beta = vec![0.0; p];
    for j in 0..data.n_smes() {
        let r = &raw[j * p..(j + 1) * p];
        lp += r.iter().map(|v| -0.5 * (LN_2PI + v * v)).sum::<f64>();
        for k in 0..p {
            beta[k] = mu[k] + sigma * r[k];
        }
        g_beta.fill(0.0);
        for (x, y) in data.rows(j) {
            let z = dot(&beta, x);
            lp += bernoulli_logit_ll(y, z);
            if grad.is_some() {
                let resid = f64::from(y) - logistic(z);
                for (gb, xi) in g_beta.iter_mut().zip(x) {
                    *gb += resid * xi;
                }
            }
        }
        if let Some(g) = grad.as_deref_mut() {
            for k in 0..p {
                g[k] += g_beta[k];
                g[p + 1 + j * p + k] = -r[k] + sigma * g_beta[k];
            }
            g_sigma += sigma * dot(r, &g_beta);
        }
    }
    if let Some(g) = grad {
        g[p] = g_sigma;
    }
    lp
}

/// Joint log density of parameters and data in the unconstrained space.
pub fn log_posterior(params: &HierParams, data: &HierData, hyper: &HierHyper) -> Result<f64> {
    let theta = params.to_flat();
    check_dims(&theta, data, hyper)?;
    let lp = evaluate(&theta, data, hyper, None);
    if lp.is_nan() {
        return Err(Error::Convergence("log posterior evaluated to NaN".into()));
    }
    Ok(lp)
}

/// Analytic gradient of [`log_posterior`] in flat order.
pub fn grad_log_posterior(params: &HierParams, data: &HierData, hyper: &HierHyper) -> Result<Vec<f64>> {
    let theta = params.to_flat();
    check_dims(&theta, data, hyper)?;
    let mut g = vec![0.0; theta.len()];
    evaluate(&theta, data, hyper, Some(&mut g));
    if g.iter().any(|v| v.is_nan()) {
        return Err(Error::Convergence("gradient evaluated to NaN".into()));
    }
    Ok(g)
}

/// `beta_j = mu + sigma * beta_raw_j` for every SME.
pub fn centered_betas(params: &HierParams) -> Vec<Vec<f64>> {
    let p = params.mu.len();
    let sigma = params.sigma();
    params
        .beta_raw
        .chunks_exact(p)
        .map(|r| params.mu.iter().zip(r).map(|(m, v)| m + sigma * v).collect())
        .collect()
}

/// The hierarchical posterior as a sampler target.
#[derive(Debug, Clone)]
pub struct HierTarget {
    pub data: HierData,
    pub hyper: HierHyper,
}

impl HierTarget {
    pub fn new(data: HierData, hyper: HierHyper) -> Result<Self> {
        hyper.validate()?;
        if hyper.p() != data.p() {
            return Err(validation!("prior has {} coefficients, data {}", hyper.p(), data.p()));
        }
        Ok(HierTarget { data, hyper })
    }

    pub fn initial_point(&self) -> Vec<f64> {
        HierParams::initial(&self.hyper, self.data.n_smes()).to_flat()
    }

    pub fn param_names(&self) -> Vec<String> {
        param_names(self.data.p(), self.data.n_smes())
    }
}

impl LogDensity for HierTarget {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let lp = evaluate(x, &self.data, &self.hyper, Some(grad));
        if lp.is_nan() {
            f64::NEG_INFINITY
        } else {
            lp
        }
    }
}

/// Posterior predictive mean and equal-tailed interval of a churn
/// probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Predictive {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Layout `(p, J)` of a hierarchical trace given the feature count.
fn trace_layout(trace: &PosteriorTrace, p: usize) -> Result<usize> {
    let d = trace.dim();
    if p == 0 || d < p + 1 || (d - p - 1) % p != 0 {
        return Err(validation!("trace of dimension {d} does not fit {p} features"));
    }
    Ok((d - p - 1) / p)
}

/// Every retained draw of `beta_j`, all chains pooled.
pub fn sme_coefficient_draws(trace: &PosteriorTrace, p: usize, sme: usize) -> Result<Vec<Vec<f64>>> {
    let n_smes = trace_layout(trace, p)?;
    if sme >= n_smes {
        return Err(validation!("SME index {sme} out of range (J = {n_smes})"));
    }
    if trace.n_total() == 0 {
        return Err(validation!("trace holds no draws"));
    }
    Ok(trace
        .iter_draws()
        .map(|th| {
            let sigma = th[p].exp();
            let r = &th[p + 1 + sme * p..p + 1 + (sme + 1) * p];
            th[..p].iter().zip(r).map(|(m, v)| m + sigma * v).collect()
        })
        .collect())
}

/// Mean and nearest-rank interval of `logistic(beta . x)` over draws.
pub fn predict_with_draws(draws: &[Vec<f64>], x: &[f64], interval_mass: f64) -> Result<Predictive> {
    if !(0.0..=1.0).contains(&interval_mass) {
        return Err(validation!("interval mass must lie in [0, 1], got {interval_mass}"));
    }
    if draws.is_empty() {
        return Err(validation!("no draws"));
    }
    let mut probs: Vec<f64> = draws.iter().map(|b| logistic(dot(b, x))).collect();
    let m = mean(&probs);
    probs.sort_by(f64::total_cmp);
    let tail = (1.0 - interval_mass) / 2.0;
    Ok(Predictive {
        mean: m,
        lower: nearest_rank_quantile(&probs, tail),
        upper: nearest_rank_quantile(&probs, 1.0 - tail),
    })
}

/// Posterior predictive for SME `sme` at features `x` (including the
/// intercept column when the model has one). Intervals take the draws at
/// sorted index `round(q * (M - 1))` for `q = (1 - mass)/2` and
/// `1 - (1 - mass)/2`.
pub fn posterior_predict(
    trace: &PosteriorTrace,
    x: &[f64],
    sme: usize,
    interval_mass: f64,
) -> Result<Predictive> {
    let draws = sme_coefficient_draws(trace, x.len(), sme)?;
    predict_with_draws(&draws, x, interval_mass)
}

/// `lambda = s_ind / (s_ind + s_within / n)`.
pub fn shrinkage_weight(sigma_industry_sq: f64, sigma_within_sq: f64, n: usize) -> Result<f64> {
    if !(sigma_industry_sq >= 0.0) || !(sigma_within_sq >= 0.0) || n == 0 {
        return Err(validation!("shrinkage inputs must be non-negative with n >= 1"));
    }
    let noise = sigma_within_sq / n as f64;
    if sigma_industry_sq + noise == 0.0 {
        return Err(validation!("shrinkage weight undefined when both variances are zero"));
    }
    Ok(sigma_industry_sq / (sigma_industry_sq + noise))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrinkageEntry {
    pub sme: usize,
    pub feature: usize,
    #[serde(with = "crate::json_float")]
    pub mle: f64,
    /// Diagonal of the inverse observed information at the MLE.
    #[serde(with = "crate::json_float")]
    pub mle_variance: f64,
    pub posterior_mean: f64,
    pub population_mean: f64,
    #[serde(with = "crate::json_float")]
    pub lambda: f64,
    /// Set when the per-SME MLE is not identifiable (separation or a
    /// singular information matrix); flagged entries are left out of the
    /// mean.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrinkageReport {
    pub sigma_sq_posterior_mean: f64,
    pub entries: Vec<ShrinkageEntry>,
    #[serde(with = "crate::json_float")]
    pub mean_lambda: f64,
    pub n_flagged: usize,
}

impl ShrinkageReport {
    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        crate::data::write_json(path, self)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        crate::data::read_json(path)
    }
}

const MLE_RIDGE: f64 = 1e-6;
const SEPARATION_BOUND: f64 = 20.0;

/// Ridge-stabilized per-SME MLE and the inverse observed information.
fn sme_mle(data: &HierData, j: usize) -> Option<(Vec<f64>, Vec<f64>)> {
    let p = data.p();
    let mut beta = DVector::<f64>::zeros(p);
    for _ in 0..100 {
        let mut g = DVector::<f64>::from_iterator(p, beta.iter().map(|b| -MLE_RIDGE * b));
        let mut h = DMatrix::<f64>::identity(p, p) * MLE_RIDGE;
        for (x, y) in data.rows(j) {
            let xv = DVector::from_column_slice(x);
            let pr = logistic(beta.dot(&xv));
            g.axpy(f64::from(y) - pr, &xv, 1.0);
            h.ger(pr * (1.0 - pr), &xv, &xv, 1.0);
        }
        let step = h.clone().cholesky()?.solve(&g);
        beta += &step;
        if beta.amax() > SEPARATION_BOUND || !beta.iter().all(|b| b.is_finite()) {
            return None;
        }
        if step.amax() < 1e-10 {
            let mut h = DMatrix::<f64>::identity(p, p) * MLE_RIDGE;
            for (x, _) in data.rows(j) {
                let xv = DVector::from_column_slice(x);
                let pr = logistic(beta.dot(&xv));
                h.ger(pr * (1.0 - pr), &xv, &xv, 1.0);
            }
            let inv = h.cholesky()?.inverse();
            return Some((beta.iter().copied().collect(), inv.diagonal().iter().copied().collect()));
        }
    }
    None
}

/// Per-SME, per-coefficient shrinkage weights with the posterior mean of
/// `sigma^2` as the between-SME variance and the MLE's asymptotic variance
/// as the within-SME noise.
pub fn shrinkage_report(trace: &PosteriorTrace, data: &HierData, hyper: &HierHyper) -> Result<ShrinkageReport> {
    let p = data.p();
    if hyper.p() != p {
        return Err(validation!("prior has {} coefficients, data {}", hyper.p(), p));
    }
    if trace.dim() != data.dim() {
        return Err(validation!("trace dimension {} does not match data {}", trace.dim(), data.dim()));
    }
    if trace.n_total() == 0 {
        return Err(validation!("trace holds no draws"));
    }
    let sigma_sq: Vec<f64> = trace.iter_draws().map(|th| (2.0 * th[p]).exp()).collect();
    let s_ind = mean(&sigma_sq);
    let mut mu_mean = vec![0.0; p];
    for th in trace.iter_draws() {
        for k in 0..p {
            mu_mean[k] += th[k];
        }
    }
    let m = trace.n_total() as f64;
    mu_mean.iter_mut().for_each(|v| *v /= m);

    let mut entries = Vec::with_capacity(data.n_smes() * p);
    for j in 0..data.n_smes() {
        let draws = sme_coefficient_draws(trace, p, j)?;
        let post: Vec<f64> = (0..p).map(|k| draws.iter().map(|b| b[k]).sum::<f64>() / m).collect();
        let mle = sme_mle(data, j);
        for k in 0..p {
            let (b, v) = match &mle {
                Some((b, v)) => (b[k], v[k]),
                None => (f64::NAN, f64::NAN),
            };
            let flagged = !(v.is_finite() && v > 0.0);
            let lambda = if flagged { f64::NAN } else { shrinkage_weight(s_ind, v, 1)? };
            entries.push(ShrinkageEntry {
                sme: j,
                feature: k,
                mle: b,
                mle_variance: v,
                posterior_mean: post[k],
                population_mean: mu_mean[k],
                lambda,
                flagged,
            });
        }
    }
    let kept: Vec<f64> = entries.iter().filter(|e| !e.flagged).map(|e| e.lambda).collect();
    let n_flagged = entries.len() - kept.len();
    Ok(ShrinkageReport {
        sigma_sq_posterior_mean: s_ind,
        mean_lambda: if kept.is_empty() { f64::NAN } else { mean(&kept) },
        n_flagged,
        entries,
    })
}

/// Half-normal log density of `sigma` with scale `tau`, all constants kept.
pub fn half_normal_ln_pdf(sigma: f64, tau: f64) -> f64 {
    (2.0 / (PI * tau * tau)).sqrt().ln() - sigma * sigma / (2.0 * tau * tau)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hyper(p: usize) -> HierHyper {
        HierHyper::new(vec![0.3; p], vec![0.5; p], 2.0).unwrap()
    }

    #[test]
    fn single_row_at_zero_margin() {
        let data = HierData::new(2, vec![vec![0.7, -1.2]], vec![vec![1]]).unwrap();
        let h = HierHyper::new(vec![0.0; 2], vec![1.0; 2], 2.0).unwrap();
        let params = HierParams::initial(&h, 1);
        let empty = HierData::new(2, vec![vec![]], vec![vec![]]).unwrap();
        let with = log_posterior(&params, &data, &h).unwrap();
        let without = log_posterior(&params, &empty, &h).unwrap();
        assert!((with - without - 0.5f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn prior_mode_has_zero_mu_and_raw_gradient() {
        let h = hyper(3);
        let data = HierData::new(3, vec![vec![]; 4], vec![vec![]; 4]).unwrap();
        let mut params = HierParams::initial(&h, 4);
        params.log_sigma = h.tau.ln();
        let g = grad_log_posterior(&params, &data, &h).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-15), "{g:?}");
    }

    #[test]
    fn centered_betas_examples() {
        let params = HierParams {
            mu: vec![0.0, 0.0],
            log_sigma: 2f64.ln(),
            beta_raw: vec![1.0, -1.0, 0.0, 0.0],
        };
        let b = centered_betas(&params);
        assert!((b[0][0] - 2.0).abs() < 1e-15 && (b[0][1] + 2.0).abs() < 1e-15);
        assert_eq!(b[1], vec![0.0, 0.0]);
        let degenerate = HierParams {
            mu: vec![1.5, -0.5],
            log_sigma: -800.0,
            beta_raw: vec![3.0, 4.0],
        };
        assert_eq!(centered_betas(&degenerate), vec![vec![1.5, -0.5]]);
    }

    #[test]
    fn shrinkage_weight_examples() {
        assert_eq!(shrinkage_weight(0.25, 25.0, 100).unwrap(), 0.5);
        assert_eq!(shrinkage_weight(0.3, 0.3, 1).unwrap(), 0.5);
        assert!(shrinkage_weight(1.0, 1.0, 1_000_000_000).unwrap() > 0.999_999);
        assert!(shrinkage_weight(0.0, 0.0, 5).is_err());
    }

    #[test]
    fn half_normal_matches_closed_form() {
        // 50-digit value of log(sqrt(2/pi)/2) - 1/8 for sigma = 1, tau = 2.
        let want = -1.0439385332046727417803297364056176398613974736377;
        assert!((half_normal_ln_pdf(1.0, 2.0) - want).abs() < 1e-15);
    }

    #[test]
    fn non_finite_parameters_are_rejected() {
        let h = hyper(1);
        let data = HierData::new(1, vec![vec![1.0]], vec![vec![0]]).unwrap();
        let mut params = HierParams::initial(&h, 1);
        params.mu[0] = f64::NAN;
        assert!(log_posterior(&params, &data, &h).is_err());
        assert!(grad_log_posterior(&params, &data, &h).is_err());
    }

    #[test]
    fn far_margins_stay_finite() {
        let h = hyper(1);
        let data = HierData::new(1, vec![vec![1.0]], vec![vec![0]]).unwrap();
        let params = HierParams {
            mu: vec![900.0],
            log_sigma: 0.0,
            beta_raw: vec![0.0],
        };
        let lp = log_posterior(&params, &data, &h).unwrap();
        assert!(lp.is_finite());
    }
}
