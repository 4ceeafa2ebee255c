//! No-U-Turn sampler with multinomial trajectory sampling, dual-averaging
//! step-size adaptation and a windowed diagonal mass matrix.

mod adapt;
mod diagnostics;

use log::warn;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::math::log_sum_exp;
use crate::rng::{self, ChaCha8Rng};
use crate::trace::{PosteriorTrace, TraceHeader};

pub use adapt::{DualAveraging, WindowSchedule};
pub use diagnostics::{ess, ess_bulk, ess_tail, rhat, Diagnostics};

/// A differentiable log density on `R^dim`.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Returns `log p(x)` and writes its gradient into `grad`. Points outside
    /// the support may return `-inf`; non-finite values are treated as
    /// divergent by the sampler.
    fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

/// How chains are started from the supplied initial point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Init {
    /// Every chain starts exactly at the initial point.
    Exact,
    /// Each coordinate is perturbed by `Uniform(-radius, radius)`.
    Jitter { radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub chains: usize,
    pub warmup: usize,
    pub draws: usize,
    pub target_accept: f64,
    pub max_tree_depth: usize,
    pub max_energy_error: f64,
    pub seed: u64,
    pub init: Init,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            chains: 4,
            warmup: 1000,
            draws: 2000,
            target_accept: 0.90,
            max_tree_depth: 10,
            max_energy_error: 1000.0,
            seed: 42,
            init: Init::Jitter { radius: 0.1 },
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 {
            return Err(validation!("need at least one chain"));
        }
        if self.warmup < 100 {
            return Err(validation!("warmup must be at least 100, got {}", self.warmup));
        }
        if self.draws == 0 {
            return Err(validation!("draws must be at least 1"));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(validation!("target_accept must lie in (0, 1), got {}", self.target_accept));
        }
        if self.max_tree_depth == 0 {
            return Err(validation!("max_tree_depth must be at least 1"));
        }
        if !(self.max_energy_error > 0.0) {
            return Err(validation!("divergence threshold must be positive"));
        }
        if let Init::Jitter { radius } = self.init {
            if !(radius >= 0.0 && radius.is_finite()) {
                return Err(validation!("jitter radius must be non-negative"));
            }
        }
        Ok(())
    }
}

/// Position, momentum and cached log density / gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub grad: Vec<f64>,
    pub logp: f64,
}

impl PhaseState {
    pub fn new<T: LogDensity + ?Sized>(target: &T, q: Vec<f64>, p: Vec<f64>) -> Self {
        let mut grad = vec![0.0; q.len()];
        let logp = target.log_density_and_grad(&q, &mut grad);
        PhaseState { q, p, grad, logp }
    }

    pub fn kinetic(&self, inv_mass: &[f64]) -> f64 {
        0.5 * self.p.iter().zip(inv_mass).map(|(p, m)| m * p * p).sum::<f64>()
    }

    /// Total energy; `+inf` when the log density is not finite.
    pub fn hamiltonian(&self, inv_mass: &[f64]) -> f64 {
        let h = -self.logp + self.kinetic(inv_mass);
        if h.is_nan() {
            f64::INFINITY
        } else {
            h
        }
    }

    fn velocity(&self, inv_mass: &[f64]) -> Vec<f64> {
        self.p.iter().zip(inv_mass).map(|(p, m)| m * p).collect()
    }
}

/// One velocity-Verlet step of size `eps` (negative to integrate backwards)
/// under the diagonal inverse mass `inv_mass`.
pub fn leapfrog<T: LogDensity + ?Sized>(target: &T, z: &mut PhaseState, eps: f64, inv_mass: &[f64]) {
    for (p, g) in z.p.iter_mut().zip(&z.grad) {
        *p += 0.5 * eps * g;
    }
    for ((q, p), m) in z.q.iter_mut().zip(&z.p).zip(inv_mass) {
        *q += eps * m * p;
    }
    z.logp = target.log_density_and_grad(&z.q, &mut z.grad);
    for (p, g) in z.p.iter_mut().zip(&z.grad) {
        *p += 0.5 * eps * g;
    }
}

fn add_into(acc: &mut [f64], v: &[f64]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}

fn sum(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn no_u_turn(sharp_a: &[f64], sharp_b: &[f64], rho: &[f64]) -> bool {
    crate::math::dot(sharp_a, rho) > 0.0 && crate::math::dot(sharp_b, rho) > 0.0
}

/// A finished subtree. `near` is the end adjacent to the trajectory it
/// extends, `far` the outermost state.
struct Subtree {
    p_near: Vec<f64>,
    sharp_near: Vec<f64>,
    p_far: Vec<f64>,
    sharp_far: Vec<f64>,
    rho: Vec<f64>,
    log_sum_weight: f64,
    proposal: PhaseState,
}

/// Outcome of one NUTS transition.
#[derive(Debug, Clone, Copy)]
pub struct TransitionInfo {
    pub accept_stat: f64,
    pub divergent: bool,
    pub depth: usize,
    pub n_leapfrog: usize,
}

struct Integrator<'a, T: LogDensity + ?Sized> {
    target: &'a T,
    inv_mass: &'a [f64],
    eps: f64,
    h0: f64,
    max_energy_error: f64,
    n_leapfrog: usize,
    sum_accept: f64,
    divergent: bool,
}

impl<T: LogDensity + ?Sized> Integrator<'_, T> {
    fn build(&mut self, z: &mut PhaseState, depth: usize, sign: f64, rng: &mut ChaCha8Rng) -> Option<Subtree> {
        if depth == 0 {
            leapfrog(self.target, z, sign * self.eps, self.inv_mass);
            self.n_leapfrog += 1;
            let h = z.hamiltonian(self.inv_mass);
            if h - self.h0 > self.max_energy_error {
                self.divergent = true;
            }
            let log_w = self.h0 - h;
            self.sum_accept += if log_w > 0.0 { 1.0 } else { log_w.exp() };
            if self.divergent {
                return None;
            }
            let sharp = z.velocity(self.inv_mass);
            return Some(Subtree {
                p_near: z.p.clone(),
                sharp_near: sharp.clone(),
                p_far: z.p.clone(),
                sharp_far: sharp,
                rho: z.p.clone(),
                log_sum_weight: log_w,
                proposal: z.clone(),
            });
        }
        let init = self.build(z, depth - 1, sign, rng)?;
        let fin = self.build(z, depth - 1, sign, rng)?;
        let log_sum_weight = log_sum_exp(init.log_sum_weight, fin.log_sum_weight);
        let take_final = fin.log_sum_weight > log_sum_weight
            || rng.random::<f64>() < (fin.log_sum_weight - log_sum_weight).exp();
        let rho = sum(&init.rho, &fin.rho);
        let persist = no_u_turn(&init.sharp_near, &fin.sharp_far, &rho)
            && no_u_turn(&init.sharp_near, &fin.sharp_near, &sum(&init.rho, &fin.p_near))
            && no_u_turn(&init.sharp_far, &fin.sharp_far, &sum(&fin.rho, &init.p_far));
        if !persist {
            return None;
        }
        Some(Subtree {
            p_near: init.p_near,
            sharp_near: init.sharp_near,
            p_far: fin.p_far,
            sharp_far: fin.sharp_far,
            rho,
            log_sum_weight,
            proposal: if take_final { fin.proposal } else { init.proposal },
        })
    }
}

/// One NUTS transition from `current`, which is replaced by the selected
/// state.
pub fn transition<T: LogDensity + ?Sized>(
    target: &T,
    current: &mut PhaseState,
    eps: f64,
    inv_mass: &[f64],
    max_depth: usize,
    max_energy_error: f64,
    rng: &mut ChaCha8Rng,
) -> TransitionInfo {
    for (p, m) in current.p.iter_mut().zip(inv_mass) {
        let n: f64 = rng.sample(StandardNormal);
        *p = n / m.sqrt();
    }
    let mut integ = Integrator {
        target,
        inv_mass,
        eps,
        h0: current.hamiltonian(inv_mass),
        max_energy_error,
        n_leapfrog: 0,
        sum_accept: 0.0,
        divergent: false,
    };
    let sharp0 = current.velocity(inv_mass);
    let mut z_fwd = current.clone();
    let mut z_bck = current.clone();
    let (mut p_fwd, mut sharp_fwd) = (current.p.clone(), sharp0.clone());
    let (mut p_bck, mut sharp_bck) = (current.p.clone(), sharp0);
    let mut rho = current.p.clone();
    let mut log_sum_weight = 0.0;
    let mut sample = current.clone();
    let mut depth = 0;

    while depth < max_depth {
        let forward = rng.random::<f64>() > 0.5;
        let built = if forward {
            integ.build(&mut z_fwd, depth, 1.0, rng)
        } else {
            integ.build(&mut z_bck, depth, -1.0, rng)
        };
        let Some(sub) = built else { break };
        depth += 1;

        // Biased progressive sampling favours the new subtree.
        if sub.log_sum_weight > log_sum_weight
            || rng.random::<f64>() < (sub.log_sum_weight - log_sum_weight).exp()
        {
            sample = sub.proposal.clone();
        }
        log_sum_weight = log_sum_exp(log_sum_weight, sub.log_sum_weight);

        let (p_old_near, sharp_old_near, sharp_old_far) = if forward {
            (&p_fwd, &sharp_fwd, &sharp_bck)
        } else {
            (&p_bck, &sharp_bck, &sharp_fwd)
        };
        let rho_old = rho.clone();
        add_into(&mut rho, &sub.rho);
        let persist = no_u_turn(sharp_old_far, &sub.sharp_far, &rho)
            && no_u_turn(sharp_old_far, &sub.sharp_near, &sum(&rho_old, &sub.p_near))
            && no_u_turn(sharp_old_near, &sub.sharp_far, &sum(&sub.rho, p_old_near));
        if forward {
            p_fwd = sub.p_far;
            sharp_fwd = sub.sharp_far;
        } else {
            p_bck = sub.p_far;
            sharp_bck = sub.sharp_far;
        }
        if !persist {
            break;
        }
    }
    let n_leapfrog = integ.n_leapfrog;
    let info = TransitionInfo {
        accept_stat: if n_leapfrog == 0 { 0.0 } else { integ.sum_accept / n_leapfrog as f64 },
        divergent: integ.divergent,
        depth,
        n_leapfrog,
    };
    *current = sample;
    info
}

/// Doubles or halves `eps` until a single leapfrog step's acceptance
/// crosses 0.8.
pub fn find_reasonable_step_size<T: LogDensity + ?Sized>(
    target: &T,
    z: &PhaseState,
    eps: f64,
    inv_mass: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let threshold = 0.8f64.ln();
    let mut eps = eps;
    let trial = |eps: f64, rng: &mut ChaCha8Rng| {
        let mut s = z.clone();
        for (p, m) in s.p.iter_mut().zip(inv_mass) {
            let n: f64 = rng.sample(StandardNormal);
            *p = n / m.sqrt();
        }
        let h0 = s.hamiltonian(inv_mass);
        leapfrog(target, &mut s, eps, inv_mass);
        h0 - s.hamiltonian(inv_mass)
    };
    let up = trial(eps, rng) > threshold;
    loop {
        let delta = trial(eps, rng);
        if up && !(delta > threshold) || !up && !(delta < threshold) {
            return Ok(eps);
        }
        eps = if up { eps * 2.0 } else { eps * 0.5 };
        if eps > 1e7 {
            return Err(Error::Diagnostic("step size search diverged upward; the target looks improper".into()));
        }
        if eps < 1e-300 {
            return Err(Error::Diagnostic("step size search collapsed to zero; the target is not finite near the initial point".into()));
        }
    }
}

/// Output of one chain.
#[derive(Debug, Clone)]
pub struct ChainResult {
    /// `draws x dim`, row-major.
    pub values: Vec<f64>,
    pub divergent: Vec<bool>,
    pub accept_stats: Vec<f64>,
    pub step_size: f64,
    /// Step size found by the initial search, before adaptation.
    pub initial_step_size: f64,
    pub inv_mass: Vec<f64>,
    pub warmup_divergences: usize,
}

/// Runs one chain: warmup with adaptation, then `config.draws` retained
/// transitions.
pub fn run_chain<T: LogDensity + ?Sized>(
    target: &T,
    init: &[f64],
    config: &SamplerConfig,
    chain: usize,
) -> Result<ChainResult> {
    let d = target.dim();
    let mut rng = rng::stream(config.seed, chain as u64);
    let q: Vec<f64> = match config.init {
        Init::Exact => init.to_vec(),
        Init::Jitter { radius } => init
            .iter()
            .map(|v| v + radius * (2.0 * rng.random::<f64>() - 1.0))
            .collect(),
    };
    let mut z = PhaseState::new(target, q, vec![0.0; d]);
    if !z.logp.is_finite() || z.grad.iter().any(|g| !g.is_finite()) {
        return Err(validation!("chain {chain}: target is not finite at the initial point"));
    }
    let mut inv_mass = vec![1.0; d];
    let mut eps = find_reasonable_step_size(target, &z, 1.0, &inv_mass, &mut rng)?;
    let initial_step_size = eps;
    let mut dual = DualAveraging::new(config.target_accept, eps);
    let mut windows = WindowSchedule::new(config.warmup);
    let mut warmup_divergences = 0;

    for i in 0..config.warmup {
        let info = transition(target, &mut z, eps, &inv_mass, config.max_tree_depth, config.max_energy_error, &mut rng);
        warmup_divergences += usize::from(info.divergent);
        eps = dual.update(info.accept_stat);
        if let Some(var) = windows.observe(i, &z.q) {
            inv_mass = var;
            eps = find_reasonable_step_size(target, &z, eps, &inv_mass, &mut rng)?;
            dual = DualAveraging::new(config.target_accept, eps);
        }
    }
    if warmup_divergences == config.warmup {
        return Err(Error::Diagnostic(format!(
            "chain {chain}: every warmup transition diverged; increase target_accept (e.g. to 0.95)"
        )));
    }
    eps = dual.final_step_size();

    let mut values = Vec::with_capacity(config.draws * d);
    let mut divergent = Vec::with_capacity(config.draws);
    let mut accept_stats = Vec::with_capacity(config.draws);
    for _ in 0..config.draws {
        let info = transition(target, &mut z, eps, &inv_mass, config.max_tree_depth, config.max_energy_error, &mut rng);
        values.extend_from_slice(&z.q);
        divergent.push(info.divergent);
        accept_stats.push(info.accept_stat);
    }
    Ok(ChainResult {
        values,
        divergent,
        accept_stats,
        step_size: eps,
        initial_step_size,
        inv_mass,
        warmup_divergences,
    })
}

/// Samples `config.chains` chains in parallel and computes diagnostics.
pub fn sample<T: LogDensity + ?Sized>(
    target: &T,
    init: &[f64],
    param_names: Vec<String>,
    config: &SamplerConfig,
) -> Result<(PosteriorTrace, Diagnostics)> {
    config.validate()?;
    let d = target.dim();
    if init.len() != d || param_names.len() != d {
        return Err(validation!("initial point / names do not match dimension {d}"));
    }
    let results: Vec<Result<ChainResult>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..config.chains)
            .map(|c| scope.spawn(move || run_chain(target, init, config, c)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sampler thread panicked"))
            .collect()
    });
    let chains = results.into_iter().collect::<Result<Vec<_>>>()?;

    let mut values = Vec::with_capacity(config.chains * config.draws * d);
    let mut divergent = Vec::new();
    for (c, ch) in chains.iter().enumerate() {
        values.extend_from_slice(&ch.values);
        divergent.extend(ch.divergent.iter().enumerate().filter(|(_, &f)| f).map(|(s, _)| (c, s)));
    }
    let warm_div: usize = chains.iter().map(|c| c.warmup_divergences).sum();
    if warm_div > 0 {
        warn!("{warm_div} divergent transitions during warmup");
    }
    let trace = PosteriorTrace {
        header: TraceHeader {
            param_names,
            chains: config.chains,
            draws: config.draws,
            dim: d,
            seed: config.seed,
            config: serde_json::to_value(config)?,
            step_sizes: chains.iter().map(|c| c.step_size).collect(),
            inv_mass: chains.iter().map(|c| c.inv_mass.clone()).collect(),
            divergent,
            accept_stats: chains
                .iter()
                .map(|c| c.accept_stats.iter().sum::<f64>() / c.accept_stats.len() as f64)
                .collect(),
            sampler: "nuts-multinomial-biased-progressive".into(),
        },
        values,
    };
    let diagnostics = Diagnostics::from_trace(&trace);
    Ok((trace, diagnostics))
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Gauss {
        mean: Vec<f64>,
        sd: Vec<f64>,
    }

    impl LogDensity for Gauss {
        fn dim(&self) -> usize {
            self.mean.len()
        }
        fn log_density_and_grad(&self, x: &[f64], g: &mut [f64]) -> f64 {
            let mut lp = 0.0;
            for k in 0..x.len() {
                let z = (x[k] - self.mean[k]) / self.sd[k];
                lp -= 0.5 * z * z;
                g[k] = -z / self.sd[k];
            }
            lp
        }
    }

    struct Flat(usize);

    impl LogDensity for Flat {
        fn dim(&self) -> usize {
            self.0
        }
        fn log_density_and_grad(&self, _: &[f64], g: &mut [f64]) -> f64 {
            g.fill(0.0);
            0.0
        }
    }

    #[test]
    fn leapfrog_is_reversible() {
        let t = Gauss { mean: vec![0.0], sd: vec![1.0] };
        let mut z = PhaseState::new(&t, vec![0.7], vec![-1.3]);
        let start = z.clone();
        leapfrog(&t, &mut z, 0.01, &[1.0]);
        z.p[0] = -z.p[0];
        leapfrog(&t, &mut z, 0.01, &[1.0]);
        assert!((z.q[0] - start.q[0]).abs() < 1e-12);
        assert!((z.p[0] + start.p[0]).abs() < 1e-12);
    }

    #[test]
    fn free_particle_moves_by_velocity() {
        let t = Flat(2);
        let mut z = PhaseState::new(&t, vec![1.0, 2.0], vec![0.5, -3.0]);
        leapfrog(&t, &mut z, 0.25, &[2.0, 0.5]);
        assert_eq!(z.q, vec![1.0 + 0.25 * 2.0 * 0.5, 2.0 + 0.25 * 0.5 * -3.0]);
        assert_eq!(z.p, vec![0.5, -3.0]);
    }

    #[test]
    fn harmonic_energy_drift_is_bounded() {
        let t = Gauss { mean: vec![0.0], sd: vec![1.0] };
        let mut z = PhaseState::new(&t, vec![1.0], vec![0.0]);
        let h0 = z.hamiltonian(&[1.0]);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            leapfrog(&t, &mut z, 0.1, &[1.0]);
            worst = worst.max((z.hamiltonian(&[1.0]) - h0).abs());
        }
        assert!(worst < 0.01, "drift {worst}");
    }

    #[test]
    fn config_validation() {
        assert!(SamplerConfig::default().validate().is_ok());
        let bad = SamplerConfig { warmup: 50, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = SamplerConfig { target_accept: 1.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn trace_has_exact_length_and_is_deterministic() {
        let t = Gauss { mean: vec![1.0, -1.0], sd: vec![1.0, 2.0] };
        let cfg = SamplerConfig { chains: 2, warmup: 150, draws: 40, seed: 5, ..Default::default() };
        let names = vec!["a".to_string(), "b".to_string()];
        let (a, _) = sample(&t, &[0.0, 0.0], names.clone(), &cfg).unwrap();
        let (b, _) = sample(&t, &[0.0, 0.0], names, &cfg).unwrap();
        assert_eq!(a.values.len(), 2 * 40 * 2);
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.values), bits(&b.values));
    }
}
