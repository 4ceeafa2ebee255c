use std::collections::VecDeque;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SMECollection};
use crate::error::{validation, Error, Result};
use crate::math::{dot, logistic, softplus};

const MAX_ITER: usize = 500;
const GRAD_TOL: f64 = 1e-6;
const HISTORY: usize = 10;

/// L2-penalized logistic regression with an unpenalized intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogReg {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub c: f64,
    pub iterations: usize,
}

impl LogReg {
    pub fn margin(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.intercept
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        logistic(self.margin(x))
    }

    pub fn predict_proba_all(&self, data: &Dataset) -> Vec<f64> {
        data.rows().map(|r| self.predict_proba(r)).collect()
    }
}

/// `0.5 |w|^2 + C * sum_i logloss_i`, with gradient written into `grad`
/// (`grad[p]` is the intercept).
fn objective(data: &Dataset, c: f64, theta: &[f64], grad: &mut [f64]) -> f64 {
    let p = data.n_features();
    let (w, b) = theta.split_at(p);
    let b = b[0];
    grad[..p].copy_from_slice(w);
    grad[p] = 0.0;
    let mut f = 0.5 * dot(w, w);
    for (x, &y) in data.rows().zip(data.labels()) {
        let z = dot(w, x) + b;
        let s = if y == 1 { 1.0 } else { -1.0 };
        f += c * softplus(-s * z);
        let r = c * (logistic(z) - f64::from(y));
        for (g, xi) in grad[..p].iter_mut().zip(x) {
            *g += r * xi;
        }
        grad[p] += r;
    }
    f
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Minimizes the penalized log loss with limited-memory BFGS until the
/// gradient max-norm drops below `1e-6`.
pub fn fit_logreg_l2(train: &Dataset, c: f64) -> Result<LogReg> {
    if !train.has_both_classes() {
        return Err(validation!("logistic regression needs both classes"));
    }
    if !(c > 0.0) || !c.is_finite() {
        return Err(validation!("C must be positive and finite, got {c}"));
    }
    let p = train.n_features();
    let d = p + 1;
    let mut theta = vec![0.0; d];
    let rate = train.positive_rate();
    theta[p] = (rate / (1.0 - rate)).ln();
    let mut grad = vec![0.0; d];
    let mut f = objective(train, c, &theta, &mut grad);
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(HISTORY);
    let mut new_theta = vec![0.0; d];
    let mut new_grad = vec![0.0; d];

    for iter in 0..MAX_ITER {
        if max_abs(&grad) < GRAD_TOL {
            return Ok(finish(theta, c, iter));
        }
        // Two-loop recursion.
        let mut dir: Vec<f64> = grad.iter().map(|g| -g).collect();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &dir);
            for (di, yi) in dir.iter_mut().zip(y) {
                *di -= a * yi;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            dir.iter_mut().for_each(|di| *di *= gamma);
        } else {
            let scale = 1.0 / max_abs(&grad).max(1.0);
            dir.iter_mut().for_each(|di| *di *= scale);
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let bta = rho * dot(y, &dir);
            for (di, si) in dir.iter_mut().zip(s) {
                *di += (a - bta) * si;
            }
        }
        let mut slope = dot(&grad, &dir);
        if slope >= 0.0 {
            history.clear();
            dir = grad.iter().map(|g| -g).collect();
            slope = -dot(&grad, &grad);
        }

        // Backtracking Armijo search; the slack absorbs summation rounding
        // once the decrease is at machine precision.
        let mut step = 1.0;
        let slack = 1e-13 * f.abs().max(1.0);
        let mut f_new = f64::INFINITY;
        for _ in 0..60 {
            for ((nt, t), di) in new_theta.iter_mut().zip(&theta).zip(&dir) {
                *nt = t + step * di;
            }
            f_new = objective(train, c, &new_theta, &mut new_grad);
            if f_new <= f + 1e-4 * step * slope + slack {
                break;
            }
            step *= 0.5;
        }
        if !f_new.is_finite() || f_new > f + slack {
            return Err(Error::Convergence(format!(
                "line search failed at iteration {iter}; gradient max-norm {:.3e}",
                max_abs(&grad)
            )));
        }
        let s: Vec<f64> = new_theta.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = new_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if history.len() == HISTORY {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        std::mem::swap(&mut theta, &mut new_theta);
        std::mem::swap(&mut grad, &mut new_grad);
        f = f_new;
    }
    if max_abs(&grad) < GRAD_TOL {
        return Ok(finish(theta, c, MAX_ITER));
    }
    Err(Error::Convergence(format!(
        "no convergence in {MAX_ITER} iterations; gradient max-norm {:.3e}",
        max_abs(&grad)
    )))
}

fn finish(mut theta: Vec<f64>, c: f64, iterations: usize) -> LogReg {
    let intercept = theta.pop().expect("intercept slot");
    LogReg {
        weights: theta,
        intercept,
        c,
        iterations,
    }
}

/// No-pooling and complete-pooling fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baselines {
    /// One fit per SME; `None` for SMEs whose data hold a single class.
    pub independent: Vec<Option<LogReg>>,
    pub pooled: LogReg,
}

pub fn fit_baselines(collection: &SMECollection, c: f64) -> Result<Baselines> {
    let mut independent = Vec::with_capacity(collection.len());
    for (id, sme) in collection.ids().iter().zip(collection.smes()) {
        if sme.has_both_classes() {
            independent.push(Some(fit_logreg_l2(sme, c)?));
        } else {
            warn!("SME {id} holds a single class; no independent model");
            independent.push(None);
        }
    }
    let pooled = fit_logreg_l2(&collection.concat()?, c)?;
    Ok(Baselines { independent, pooled })
}
