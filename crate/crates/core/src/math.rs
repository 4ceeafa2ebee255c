//! Small numerical helpers shared across modules.

/// Probabilities are clipped to `[PROB_CLIP, 1 - PROB_CLIP]` wherever a
/// log-loss is evaluated.
pub const PROB_CLIP: f64 = 1e-12;

/// Numerically stable `1 / (1 + exp(-z))`.
#[inline]
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(t))` without overflow.
#[inline]
pub fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Bernoulli log-likelihood of label `y` under margin `z`:
/// `-log(1 + exp(-(2y - 1) z))`.
#[inline]
pub fn bernoulli_logit_ll(y: u8, z: f64) -> f64 {
    let s = if y == 1 { 1.0 } else { -1.0 };
    -softplus(-s * z)
}

pub fn clip_prob(p: f64) -> f64 {
    p.clamp(PROB_CLIP, 1.0 - PROB_CLIP)
}

/// Mean binary cross-entropy with clipped probabilities.
pub fn log_loss(probs: &[f64], labels: &[u8]) -> f64 {
    let n = probs.len() as f64;
    probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = clip_prob(p);
            if y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum::<f64>()
        / n
}

pub fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance (denominator `n - 1`).
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Population variance (denominator `n`).
pub fn population_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64
}

/// Nearest-rank quantile of an ascending slice: the element at index
/// `round(q * (len - 1))`. Never interpolates, so the result is always one
/// of the inputs.
pub fn nearest_rank_quantile(sorted: &[f64], q: f64) -> f64 {
    let idx = (q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64).round() as usize;
    sorted[idx]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logistic_symmetry_and_extremes() {
        assert_eq!(logistic(0.0), 0.5);
        assert!((logistic(3.0) + logistic(-3.0) - 1.0).abs() < 1e-15);
        assert_eq!(logistic(-800.0), 0.0);
        assert_eq!(logistic(800.0), 1.0);
    }

    #[test]
    fn bernoulli_ll_is_finite_far_out() {
        assert_eq!(bernoulli_logit_ll(1, 0.0), 0.5f64.ln());
        assert!((bernoulli_logit_ll(0, 800.0) + 800.0).abs() < 1e-9);
        assert!(bernoulli_logit_ll(1, 800.0).abs() < 1e-300);
    }

    #[test]
    fn lse_handles_neg_infinity() {
        assert_eq!(log_sum_exp(f64::NEG_INFINITY, 1.5), 1.5);
        assert!((log_sum_exp(0.0, 0.0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn nearest_rank() {
        let s = [0.2, 0.8];
        assert_eq!(nearest_rank_quantile(&s, 0.05), 0.2);
        assert_eq!(nearest_rank_quantile(&s, 0.95), 0.8);
        assert_eq!(nearest_rank_quantile(&[1.0, 2.0, 3.0], 0.5), 2.0);
    }
}
