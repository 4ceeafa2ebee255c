//! Split-R-hat and effective sample size.

use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{read_json, write_json};
use crate::error::Result;
use crate::math::{mean, nearest_rank_quantile, sample_variance};
use crate::trace::PosteriorTrace;

/// Each chain cut into two halves; with an odd length the middle draw is
/// dropped.
fn split_chains(chains: &[Vec<f64>]) -> Vec<&[f64]> {
    let mut out = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let half = c.len() / 2;
        out.push(&c[..half]);
        out.push(&c[c.len() - half..]);
    }
    out
}

/// Split potential scale reduction `sqrt((n-1)/n + B/(n W))`, with `n` the
/// split-chain length. Constant chains give `+inf`.
pub fn rhat(chains: &[Vec<f64>]) -> f64 {
    let split = split_chains(chains);
    let n = split.first().map_or(0, |c| c.len());
    if split.len() < 2 || n < 2 {
        return f64::NAN;
    }
    let means: Vec<f64> = split.iter().map(|c| mean(c)).collect();
    let w = mean(&split.iter().map(|c| sample_variance(c)).collect::<Vec<_>>());
    let b_over_n = sample_variance(&means);
    if w == 0.0 {
        warn!("R-hat requested for chains with zero within-chain variance");
        return f64::INFINITY;
    }
    let n = n as f64;
    ((n - 1.0) / n + b_over_n / w).sqrt()
}

/// Geyer initial-monotone-sequence ESS over several chains of equal
/// length, without splitting or rank transformation.
pub fn ess(chains: &[&[f64]]) -> f64 {
    let m = chains.len();
    let n = chains.first().map_or(0, |c| c.len());
    if m == 0 || n < 4 {
        return f64::NAN;
    }
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let acov = |t: usize| -> f64 {
        chains
            .iter()
            .zip(&means)
            .map(|(c, mu)| (0..n - t).map(|i| (c[i] - mu) * (c[i + t] - mu)).sum::<f64>() / n as f64)
            .sum::<f64>()
            / m as f64
    };
    let nf = n as f64;
    let acov0 = acov(0);
    let mean_var = acov0 * nf / (nf - 1.0);
    let mut var_plus = mean_var * (nf - 1.0) / nf;
    if m > 1 {
        var_plus += sample_variance(&means);
    }
    if var_plus == 0.0 {
        warn!("ESS requested for constant draws");
        return 0.0;
    }
    let rho = |t: usize| 1.0 - (mean_var - acov(t)) / var_plus;

    let mut rho_hat = vec![0.0; n + 2];
    rho_hat[0] = 1.0;
    rho_hat[1] = rho(1);
    let (mut even, mut odd) = (1.0, rho_hat[1]);
    let mut t = 1;
    while t + 5 < n && even + odd > 0.0 {
        even = rho(t + 1);
        odd = rho(t + 2);
        if even + odd >= 0.0 {
            rho_hat[t + 1] = even;
            rho_hat[t + 2] = odd;
        }
        t += 2;
    }
    let max_t = t;
    if even > 0.0 {
        rho_hat[max_t + 1] = even;
    }
    // Initial monotone sequence on the paired sums.
    let mut k = 1;
    while k + 2 <= max_t {
        let prev = rho_hat[k - 1] + rho_hat[k];
        if rho_hat[k + 1] + rho_hat[k + 2] > prev {
            rho_hat[k + 1] = prev / 2.0;
            rho_hat[k + 2] = prev / 2.0;
        }
        k += 2;
    }
    let total = (m * n) as f64;
    let tau = (-1.0 + 2.0 * rho_hat[..max_t].iter().sum::<f64>() + rho_hat[max_t + 1]).max(1.0 / total.log10());
    (total / tau).min(10.0 * total)
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn split_owned(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    split_chains(chains).into_iter().map(<[f64]>::to_vec).collect()
}

fn ess_of(chains: &[Vec<f64>]) -> f64 {
    let refs: Vec<&[f64]> = chains.iter().map(Vec::as_slice).collect();
    ess(&refs)
}

/// Bulk ESS: split chains, pooled ranks mapped through the normal
/// quantile function, then [`ess`].
pub fn ess_bulk(chains: &[Vec<f64>]) -> f64 {
    let split = split_owned(chains);
    let flat: Vec<f64> = split.iter().flatten().copied().collect();
    if flat.iter().all(|v| *v == flat[0]) {
        warn!("ESS requested for constant draws");
        return 0.0;
    }
    let ranks = average_ranks(&flat);
    let s = flat.len() as f64;
    let normal = Normal::standard();
    let z: Vec<f64> = ranks.iter().map(|r| normal.inverse_cdf((r - 0.375) / (s + 0.25))).collect();
    let len = split[0].len();
    let zs: Vec<Vec<f64>> = z.chunks(len.max(1)).map(<[f64]>::to_vec).collect();
    ess_of(&zs)
}

/// Tail ESS: the smaller ESS of the indicators `x <= q05` and `x <= q95`
/// on split chains.
pub fn ess_tail(chains: &[Vec<f64>]) -> f64 {
    let split = split_owned(chains);
    let mut sorted: Vec<f64> = split.iter().flatten().copied().collect();
    sorted.sort_by(f64::total_cmp);
    [0.05, 0.95]
        .iter()
        .map(|&q| {
            let cut = nearest_rank_quantile(&sorted, q);
            let ind: Vec<Vec<f64>> = split
                .iter()
                .map(|c| c.iter().map(|&v| f64::from(u8::from(v <= cut))).collect())
                .collect();
            ess_of(&ind)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Per-parameter convergence summary of a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub param_names: Vec<String>,
    #[serde(with = "crate::json_float::vec")]
    pub rhat: Vec<f64>,
    #[serde(with = "crate::json_float::vec")]
    pub ess_bulk: Vec<f64>,
    #[serde(with = "crate::json_float::vec")]
    pub ess_tail: Vec<f64>,
    pub n_divergent: usize,
    #[serde(with = "crate::json_float")]
    pub mean_accept: f64,
    pub n_draws: usize,
}

impl Diagnostics {
    pub fn from_trace(trace: &PosteriorTrace) -> Self {
        let d = trace.dim();
        let mut rh = Vec::with_capacity(d);
        let mut bulk = Vec::with_capacity(d);
        let mut tail = Vec::with_capacity(d);
        for k in 0..d {
            let chains = trace.param_chains(k);
            rh.push(rhat(&chains));
            bulk.push(ess_bulk(&chains));
            tail.push(ess_tail(&chains));
        }
        let acc = &trace.header.accept_stats;
        Diagnostics {
            param_names: trace.header.param_names.clone(),
            rhat: rh,
            ess_bulk: bulk,
            ess_tail: tail,
            n_divergent: trace.n_divergent(),
            mean_accept: if acc.is_empty() { f64::NAN } else { mean(acc) },
            n_draws: trace.n_total(),
        }
    }

    pub fn max_rhat(&self) -> f64 {
        self.rhat.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_ess_bulk(&self) -> f64 {
        self.ess_bulk.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn min_ess_tail(&self) -> f64 {
        self.ess_tail.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn divergence_rate(&self) -> f64 {
        self.n_divergent as f64 / self.n_draws.max(1) as f64
    }

    /// True when every R-hat is below `max_rhat` and every bulk and tail
    /// ESS exceeds `min_ess`.
    pub fn converged(&self, max_rhat: f64, min_ess: f64) -> bool {
        self.rhat.iter().all(|r| *r < max_rhat)
            && self.ess_bulk.iter().chain(&self.ess_tail).all(|e| *e > min_ess)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path)
    }
}
