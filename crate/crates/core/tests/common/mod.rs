//! Shared oracles and fixtures for the integration tests.
#![allow(dead_code)]

use churnpool::gbdt::{TreeEnsemble, TreeNode};
use churnpool::hier::{HierData, HierHyper, HierParams};
use churnpool::nuts::LogDensity;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// A log-posterior case with its value computed at 50 significant digits.
pub struct Case {
    pub p: usize,
    pub x: &'static [&'static [f64]],
    pub y: &'static [&'static [u8]],
    pub beta0: &'static [f64],
    pub sigma0: &'static [f64],
    pub tau: f64,
    pub theta: &'static [f64],
    pub expected: f64,
}

impl Case {
    pub fn build(&self) -> (HierParams, HierData, HierHyper) {
        let data = HierData::new(
            self.p,
            self.x.iter().map(|b| b.to_vec()).collect(),
            self.y.iter().map(|b| b.to_vec()).collect(),
        )
        .unwrap();
        let hyper = HierHyper::new(self.beta0.to_vec(), self.sigma0.to_vec(), self.tau).unwrap();
        (HierParams::from_flat(self.theta, self.p).unwrap(), data, hyper)
    }
}

pub const LOG_POSTERIOR_CASES: &[Case] = &[
    Case {
        p: 1,
        x: &[&[-1.768, -1.722, 1.004, -3.441]],
        y: &[&[0, 1, 0, 0]],
        beta0: &[0.398],
        sigma0: &[0.991],
        tau: 2.0,
        theta: &[-0.286, 0.027, 1.252],
        expected: -7.2692363080935163781,
    },
    Case {
        p: 2,
        x: &[&[-0.218, -0.109, 0.252, 1.188, 2.211, -1.282], &[1.441, 2.259, 1.338, 1.592, 0.063, 0.064]],
        y: &[&[0, 0, 0], &[0, 0, 1]],
        beta0: &[-0.259, 0.613],
        sigma0: &[1.765, 1.289],
        tau: 2.0,
        theta: &[1.095, 2.392, 0.849, 2.447, -0.155, 0.14, -2.016],
        expected: -31.165705009093220574,
    },
    Case {
        p: 3,
        x: &[&[1.791, -0.117, 1.342, 0.819, -1.816, -1.938, -1.334, 1.286, 0.567, -0.799, 2.174, 0.676, 1.556, 0.517, 1.032], &[3.397, -1.369, -0.956, 1.191, -1.489, -0.474, -2.052, 2.017, -2.25, 0.687, -2.657, -2.614, 0.827, 0.767, 0.707], &[-1.514, -3.16, -0.249, -0.009, 1.672, -2.209, -1.397, -0.844, 0.93, -3.79, 1.698, 0.464, 1.738, -0.552, 0.646]],
        y: &[&[1, 0, 1, 1, 1], &[0, 0, 0, 1, 1], &[0, 0, 0, 1, 0]],
        beta0: &[0.107, 1.338, 0.509],
        sigma0: &[0.901, 0.206, 1.841],
        tau: 2.0,
        theta: &[-0.979, 1.142, 0.238, 0.279, -0.449, -0.281, -2.43, -1.203, -1.287, 0.837, 0.663, 1.142, 1.556],
        expected: -43.709428937655819728,
    },
    Case {
        p: 2,
        x: &[&[-0.458, 1.583, 2.933, -0.013, 1.63, -0.248, -2.419, 0.18, -1.233, 0.163, -0.695, 0.48, -3.206, 3.126, 2.04, -0.526, -1.364, 0.006, 1.013, 0.635, 0.603, -2.954, -1.696, 2.016, 0.36, -2.282, -1.303, -2.172, -1.531, 1.772, -0.333, 1.697, 0.284, -2.281, -0.985, 3.482, -1.165, -1.598, 1.883, 0.137, -0.01, 2.239, -2.688, 0.638, -1.611, -2.144, -1.244, 1.761, -0.215, -2.807, -1.697, 2.334, 1.567, -1.671, 3.714, -0.561, -1.83, -0.209, 1.435, 2.468], &[1.578, -0.655, -0.861, -2.232, -0.113, -0.914, 0.375, -1.942, -0.793, -1.352, -1.846, -1.817, -1.563, -1.815, 0.873, 0.153, -2.027, 0.787, 0.441, 2.24, -0.299, -0.321, -1.057, 0.191, 0.757, 0.268, -0.39, 0.866, 0.141, 0.379, -1.433, 0.317, -1.529, -1.294, 0.247, 3.232, 1.529, 0.006, -0.275, 1.516, 2.122, 1.873, -0.285, 0.289, -0.506, -0.438, -1.311, -0.383, -3.303, -1.84, 0.653, -1.421, 0.829, -1.985, -0.566, 0.607, -1.592, -1.096, 3.794, -1.045], &[-1.083, -0.88, 0.051, -0.041, 1.509, 1.215, -0.619, -0.547, -2.171, -2.296, -1.134, 1.122, 0.184, 1.232, 1.444, -0.252, 3.222, -0.803, -0.959, -0.659, 1.744, -0.209, -1.134, 0.666, 1.737, -0.172, -0.387, 1.663, 1.508, 1.45, -1.171, 0.435, 0.556, -2.753, 1.844, 0.153, -0.523, 3.471, 0.224, -1.104, -0.096, 0.864, 1.247, -0.088, -1.325, -1.069, -1.252, -1.612, -0.031, -0.752, 0.083, -1.266, -1.328, -0.284, -0.534, 1.764, -1.384, 0.315, -0.063, -2.004], &[1.114, 0.26, -3.214, 0.92, 1.436, -1.22, 2.593, 0.238, -1.765, 0.861, -0.551, -2.049, -3.283, 0.375, -1.125, 0.986, 0.593, -0.796, -0.812, 2.704, 2.611, 1.151, -0.545, -1.502, -0.592, 2.545, 0.705, -0.443, -1.876, 0.256, -1.344, 0.02, 1.135, 1.637, 0.214, -0.523, 0.348, 2.754, 0.574, -2.138, 2.371, 0.384, 5.318, -0.716, -0.143, -0.453, 0.577, -0.884, -2.254, -2.934, -0.189, -0.784, -0.885, 3.236, 1.214, 1.665, -0.762, 0.458, -0.322, -0.311]],
        y: &[&[0, 1, 0, 1, 0, 0, 1, 0, 0, 1, 0, 1, 1, 1, 1, 1, 0, 0, 1, 0, 1, 0, 1, 0, 0, 1, 1, 0, 0, 1], &[1, 1, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 1, 1, 1, 1, 0, 0, 1, 0, 0, 1, 0, 0, 0, 1, 0, 0, 1, 1], &[0, 1, 1, 1, 1, 1, 0, 1, 1, 1, 1, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 0, 1, 1, 1], &[1, 1, 1, 1, 0, 0, 0, 0, 0, 1, 1, 1, 0, 1, 0, 1, 0, 1, 0, 0, 1, 0, 1, 1, 1, 0, 0, 1, 1, 0]],
        beta0: &[1.097, 1.003],
        sigma0: &[0.653, 1.381],
        tau: 2.0,
        theta: &[-0.077, -0.592, 0.068, 0.214, 0.049, 0.401, -2.192, 1.57, -0.569, 0.651, -0.8],
        expected: -148.84899933970784343,
    },
];

/// Random problem of the given shape with standard-normal features.
pub fn random_problem(p: usize, j: usize, n: usize, seed: u64) -> (HierData, HierHyper, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for _ in 0..j {
        x.push((0..n * p).map(|_| rng.sample::<f64, _>(StandardNormal)).collect());
        y.push((0..n).map(|_| u8::from(rng.random::<bool>())).collect());
    }
    let beta0 = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
    let sigma0 = (0..p).map(|_| rng.random_range(0.05..3.0)).collect();
    let hyper = HierHyper::new(beta0, sigma0, rng.random_range(0.5..5.0)).unwrap();
    (HierData::new(p, x, y).unwrap(), hyper, rng)
}

/// Straightforward compensated-sum evaluation of the same density.
pub fn naive_log_posterior(theta: &[f64], data: &HierData, hyper: &HierHyper) -> f64 {
    let p = data.p();
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let mut acc = Kahan::default();
    for k in 0..p {
        let d = theta[k] - hyper.beta0[k];
        acc.add(-0.5 * (ln2pi + hyper.sigma0_diag[k].ln()));
        acc.add(-d * d / (2.0 * hyper.sigma0_diag[k]));
    }
    let s = theta[p];
    let sigma = s.exp();
    acc.add(2f64.ln() - 0.5 * ln2pi - hyper.tau.ln());
    acc.add(-sigma * sigma / (2.0 * hyper.tau * hyper.tau));
    acc.add(s);
    for j in 0..data.n_smes() {
        let raw = &theta[p + 1 + j * p..p + 1 + (j + 1) * p];
        for r in raw {
            acc.add(-0.5 * ln2pi - 0.5 * r * r);
        }
        for (x, y) in data.rows(j) {
            let z: f64 = (0..p).map(|k| (theta[k] + sigma * raw[k]) * x[k]).sum();
            // log(sigmoid(z)) = -log1p(exp(-z)), written stably for both signs.
            let signed = if y == 1 { z } else { -z };
            let ll = if signed >= 0.0 {
                -(-signed).exp().ln_1p()
            } else {
                signed - signed.exp().ln_1p()
            };
            acc.add(ll);
        }
    }
    acc.sum
}

#[derive(Default)]
pub struct Kahan {
    pub sum: f64,
    c: f64,
}

impl Kahan {
    pub fn add(&mut self, v: f64) {
        let y = v - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }
}

/// Worst relative error of `grad` against central differences, measured
/// as `|a - f| / max(|a|, |f|, 1)`.
pub fn finite_difference_error(f: impl Fn(&[f64]) -> f64, theta: &[f64], grad: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    let mut t = theta.to_vec();
    for i in 0..theta.len() {
        let h = 1e-5 * theta[i].abs().max(1.0);
        t[i] = theta[i] + h;
        let up = f(&t);
        t[i] = theta[i] - h;
        let down = f(&t);
        t[i] = theta[i];
        let fd = (up - down) / (2.0 * h);
        let err = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1.0);
        worst = worst.max(err);
    }
    worst
}

// ---------------------------------------------------------------------------
// Shapley values by coalition enumeration.

/// Expected tree output when only the features in `known` are observed;
/// unknown splits average their children by cover.
fn conditional_value(node: &TreeNode, x: &[f64], known: u32) -> f64 {
    match node {
        TreeNode::Leaf { value, .. } => *value,
        TreeNode::Split {
            feature_index,
            threshold,
            left,
            right,
            ..
        } => {
            if known & (1 << feature_index) != 0 {
                if x[*feature_index] <= *threshold {
                    conditional_value(left, x, known)
                } else {
                    conditional_value(right, x, known)
                }
            } else {
                let (cl, cr) = (left.cover(), right.cover());
                (cl * conditional_value(left, x, known) + cr * conditional_value(right, x, known)) / (cl + cr)
            }
        }
    }
}

pub fn shap_value(model: &TreeEnsemble, x: &[f64], known: u32) -> f64 {
    let s: f64 = model.trees.iter().map(|t| conditional_value(t, x, known)).sum();
    model.init_logodds + model.learning_rate * s
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

pub fn brute_force_shap(model: &TreeEnsemble, x: &[f64]) -> Vec<f64> {
    let p = x.len();
    let mut phi = vec![0.0; p];
    for (i, phi_i) in phi.iter_mut().enumerate() {
        for s in 0u32..(1 << p) {
            if s & (1 << i) != 0 {
                continue;
            }
            let size = s.count_ones() as usize;
            let w = factorial(size) * factorial(p - size - 1) / factorial(p);
            *phi_i += w * (shap_value(model, x, s | (1 << i)) - shap_value(model, x, s));
        }
    }
    phi
}

fn random_tree(rng: &mut ChaCha8Rng, depth: usize, p: usize) -> TreeNode {
    if depth == 0 || rng.random::<f64>() < 0.2 {
        return TreeNode::Leaf {
            value: rng.random_range(-2.0..2.0),
            cover: rng.random_range(1..50) as f64,
        };
    }
    let left = random_tree(rng, depth - 1, p);
    let right = random_tree(rng, depth - 1, p);
    TreeNode::Split {
        feature_index: rng.random_range(0..p),
        threshold: rng.random_range(-1.0..1.0),
        gain: 1.0,
        cover: left.cover() + right.cover(),
        left: Box::new(left),
        right: Box::new(right),
    }
}

pub fn random_ensemble(seed: u64, p: usize, depth: usize, n_trees: usize) -> TreeEnsemble {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    TreeEnsemble {
        init_logodds: rng.random_range(-1.0..1.0),
        learning_rate: rng.random_range(0.05..1.0),
        feature_names: (0..p).map(|k| format!("f{k}")).collect(),
        trees: (0..n_trees).map(|_| random_tree(&mut rng, depth, p)).collect(),
    }
}

// ---------------------------------------------------------------------------
// Penalized logistic regression by damped Newton.

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

/// Minimizes `0.5 |w|^2 + C * sum logloss` by Newton steps with
/// backtracking; the intercept is the last coordinate and unpenalized.
pub fn newton_reference(rows: &[Vec<f64>], y: &[u8], c: f64) -> Vec<f64> {
    let p = rows[0].len();
    let d = p + 1;
    let aug: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().copied().chain([1.0]).collect()).collect();
    let obj = |t: &[f64]| -> f64 {
        let mut f = 0.5 * t[..p].iter().map(|v| v * v).sum::<f64>();
        for (x, &yi) in aug.iter().zip(y) {
            let z: f64 = x.iter().zip(t).map(|(a, b)| a * b).sum();
            let s = if yi == 1 { -z } else { z };
            f += c * if s > 0.0 { s + (-s).exp().ln_1p() } else { s.exp().ln_1p() };
        }
        f
    };
    let mut t = vec![0.0; d];
    for _ in 0..100 {
        let mut g = vec![0.0; d];
        let mut h = vec![vec![0.0; d]; d];
        for k in 0..p {
            g[k] = t[k];
            h[k][k] = 1.0;
        }
        for (x, &yi) in aug.iter().zip(y) {
            let z: f64 = x.iter().zip(&t).map(|(a, b)| a * b).sum();
            let pr = sigmoid(z);
            for i in 0..d {
                g[i] += c * (pr - f64::from(yi)) * x[i];
                for j in 0..d {
                    h[i][j] += c * pr * (1.0 - pr) * x[i] * x[j];
                }
            }
        }
        if g.iter().all(|v| v.abs() < 1e-13) {
            break;
        }
        let step = solve(h, g.clone());
        let f0 = obj(&t);
        let mut a = 1.0;
        loop {
            let cand: Vec<f64> = t.iter().zip(&step).map(|(v, s)| v - a * s).collect();
            if obj(&cand) <= f0 || a < 1e-10 {
                t = cand;
                break;
            }
            a *= 0.5;
        }
    }
    t
}

pub fn toy_logistic(n: usize, p: usize, scale: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for _ in 0..n {
        let x: Vec<f64> = (0..p).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
        let z: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + 0.5;
        y.push(u8::from(rng.random::<f64>() < sigmoid(z)));
        rows.push(x);
    }
    (rows, y)
}

// ---------------------------------------------------------------------------
// Analytic sampler targets.

/// Gaussian with precision matrix `prec` and mean `mean`.
pub struct Gaussian {
    pub mean: Vec<f64>,
    pub prec: Vec<Vec<f64>>,
}

impl Gaussian {
    pub fn diagonal(mean: &[f64], sd: &[f64]) -> Self {
        let d = mean.len();
        let prec = (0..d)
            .map(|i| (0..d).map(|j| if i == j { 1.0 / (sd[i] * sd[i]) } else { 0.0 }).collect())
            .collect();
        Gaussian { mean: mean.to_vec(), prec }
    }
}

impl LogDensity for Gaussian {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let d: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        let mut lp = 0.0;
        for i in 0..d.len() {
            let row: f64 = (0..d.len()).map(|j| self.prec[i][j] * d[j]).sum();
            grad[i] = -row;
            lp -= 0.5 * d[i] * row;
        }
        lp
    }
}

// ---------------------------------------------------------------------------
// Synthetic chains.

pub fn normal_chains(m: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..m).map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect()).collect()
}

pub fn ar1_chains(m: usize, n: usize, rho: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let innov = (1.0 - rho * rho).sqrt();
    (0..m)
        .map(|_| {
            let mut x: f64 = rng.sample(StandardNormal);
            (0..n)
                .map(|_| {
                    let e: f64 = rng.sample(StandardNormal);
                    x = rho * x + innov * e;
                    x
                })
                .collect()
        })
        .collect()
}


// ---------------------------------------------------------------------------
// Persistence round trips.

/// Saves and reloads one artifact; the reloaded value must serialize to
/// the same bytes and compare equal when it holds no NaN.
fn round_trip<T: PartialEq + std::fmt::Debug>(
    name: &str,
    value: &T,
    path: &std::path::Path,
    save: impl Fn(&T, &std::path::Path) -> churnpool::Result<()>,
    load: impl Fn(&std::path::Path) -> churnpool::Result<T>,
    has_nan: bool,
) -> Result<(), String> {
    save(value, path).map_err(|e| format!("{name}: save failed: {e}"))?;
    let first = std::fs::read(path).map_err(|e| e.to_string())?;
    let back = load(path).map_err(|e| format!("{name}: load failed: {e}"))?;
    if !has_nan && &back != value {
        return Err(format!("{name}: reloaded value differs"));
    }
    save(&back, path).map_err(|e| e.to_string())?;
    if std::fs::read(path).map_err(|e| e.to_string())? != first {
        return Err(format!("{name}: re-saved bytes differ"));
    }
    Ok(())
}

/// Round-trips every persisted artifact type through `dir`; returns the
/// names checked.
pub fn persistence_round_trips(dir: &std::path::Path) -> Result<Vec<&'static str>, String> {
    use churnpool::conformal::calibrate_split;
    use churnpool::data::{generate_hierarchical_population, sample_public_corpus, standardize, HierGroundTruth, SMECollection, StandardizationStats};
    use churnpool::gbdt::{fit_gbdt, GbdtConfig};
    use churnpool::hier::{shrinkage_report, HierTarget};
    use churnpool::nuts::{sample, Diagnostics, SamplerConfig};
    use churnpool::shap_prior::{extract_priors, PriorSpec};
    use churnpool::trace::PosteriorTrace;
    use churnpool::hier::ShrinkageReport;
    use churnpool::conformal::CalibrationResult;

    let e = |e: churnpool::Error| e.to_string();
    let mut checked = Vec::new();

    // Awkward doubles that a short decimal rendering would corrupt.
    let (coll, truth) = generate_hierarchical_population(3, 3, 40, 0.7, 0.4, 11).map_err(e)?;
    round_trip("ground truth", &truth, &dir.join("truth.json"), |v, p| v.save(p), |p| HierGroundTruth::load(p), false)?;
    checked.push("ground truth");

    let manifest = coll.save(dir.join("smes"), false).map_err(e)?;
    let back = SMECollection::load(&manifest).map_err(e)?;
    if back.ids() != coll.ids() || back.smes().iter().zip(coll.smes()).any(|(a, b)| a.features() != b.features() || a.labels() != b.labels()) {
        return Err("SME collection: reloaded data differ".into());
    }
    checked.push("SME collection");

    let public = sample_public_corpus(&truth.mu_true, 0.3, 3, 200, 12).map_err(e)?;
    let (std_public, stats) = standardize(&public).map_err(e)?;
    round_trip("standardization", &stats, &dir.join("stats.json"), |v, p| v.save(p), |p| StandardizationStats::load(p), false)?;
    checked.push("standardization");

    let model = fit_gbdt(&std_public, &std_public, &GbdtConfig { iterations: 20, ..GbdtConfig::default() }).map_err(e)?;
    round_trip("tree ensemble", &model, &dir.join("model.json"), |v, p| v.save(p), |p| churnpool::gbdt::TreeEnsemble::load(p), false)?;
    checked.push("tree ensemble");

    let prior = extract_priors(&model, &std_public, &stats, 1.0).map_err(e)?;
    round_trip("prior", &prior, &dir.join("prior.json"), |v, p| v.save(p), |p| PriorSpec::load(p), false)?;
    checked.push("prior");

    let data = HierData::from_collection(&coll).map_err(e)?;
    let hyper = HierHyper::from_prior(&prior, 2.0).map_err(e)?;
    let target = HierTarget::new(data.clone(), hyper.clone()).map_err(e)?;
    let cfg = SamplerConfig { chains: 2, warmup: 150, draws: 50, ..SamplerConfig::default() };
    let (trace, diag) = sample(&target, &target.initial_point(), target.param_names(), &cfg).map_err(e)?;
    round_trip("trace", &trace, &dir.join("trace.bin"), |v, p| v.save(p), |p| PosteriorTrace::load(p), false)?;
    if PosteriorTrace::from_bytes(&trace.to_bytes().map_err(e)?).map_err(e)?.values.iter().zip(&trace.values).any(|(a, b)| a.to_bits() != b.to_bits()) {
        return Err("trace: payload bits differ".into());
    }
    checked.push("trace");

    round_trip("diagnostics", &diag, &dir.join("diag.json"), |v, p| v.save(p), |p| Diagnostics::load(p), false)?;
    let mut odd = diag.clone();
    odd.rhat[0] = f64::INFINITY;
    odd.ess_bulk[0] = f64::NAN;
    round_trip("diagnostics (non-finite)", &odd, &dir.join("diag_odd.json"), |v, p| v.save(p), |p| Diagnostics::load(p), true)?;
    let back = Diagnostics::load(dir.join("diag_odd.json")).map_err(e)?;
    if back.rhat[0] != f64::INFINITY || !back.ess_bulk[0].is_nan() {
        return Err("diagnostics: non-finite values lost".into());
    }
    checked.push("diagnostics");

    let report = shrinkage_report(&trace, &data, &hyper).map_err(e)?;
    let has_nan = report.entries.iter().any(|en| en.lambda.is_nan());
    round_trip("shrinkage report", &report, &dir.join("shrink.json"), |v, p| v.save(p), |p| ShrinkageReport::load(p), has_nan)?;
    checked.push("shrinkage report");

    let cal = calibrate_split(&[0.1, 0.7, 0.30000000000000004, 0.2, 0.9], 0.1).map_err(e)?;
    round_trip("calibration", &cal, &dir.join("cal.json"), |v, p| v.save(p), |p| CalibrationResult::load(p), false)?;
    checked.push("calibration");
    Ok(checked)
}
