//! Warmup adaptation: dual averaging of the step size and windowed
//! estimation of the diagonal inverse mass.

const GAMMA: f64 = 0.05;
const T0: f64 = 10.0;
const KAPPA: f64 = 0.75;

/// Nesterov dual averaging on `log(eps)` toward a target acceptance rate.
#[derive(Debug, Clone)]
pub struct DualAveraging {
    delta: f64,
    mu: f64,
    counter: f64,
    s_bar: f64,
    x_bar: f64,
}

impl DualAveraging {
    /// Shrinkage point `mu = log(10 * eps0)`.
    pub fn new(target_accept: f64, eps0: f64) -> Self {
        DualAveraging {
            delta: target_accept,
            mu: (10.0 * eps0).ln(),
            counter: 0.0,
            s_bar: 0.0,
            x_bar: 0.0,
        }
    }

    /// Feeds one acceptance statistic and returns the next step size.
    pub fn update(&mut self, accept_stat: f64) -> f64 {
        self.counter += 1.0;
        let a = accept_stat.min(1.0);
        let eta = 1.0 / (self.counter + T0);
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.delta - a);
        let x = self.mu - self.s_bar * self.counter.sqrt() / GAMMA;
        let w = self.counter.powf(-KAPPA);
        self.x_bar = (1.0 - w) * self.x_bar + w * x;
        x.exp()
    }

    /// Averaged step size used once adaptation ends.
    pub fn final_step_size(&self) -> f64 {
        self.x_bar.exp()
    }
}

/// Expanding variance windows: an initial buffer of 75 iterations, windows
/// of 25, 50, 100, ... and a terminal buffer of 50. For short warmups the
/// buffers become 15% and 10% of the warmup.
#[derive(Debug, Clone)]
pub struct WindowSchedule {
    warmup: usize,
    init_buffer: usize,
    term_buffer: usize,
    window_size: usize,
    next_end: usize,
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl WindowSchedule {
    pub fn new(warmup: usize) -> Self {
        let (mut init_buffer, mut term_buffer, mut base) = (75, 50, 25);
        if init_buffer + base + term_buffer > warmup {
            init_buffer = (0.15 * warmup as f64) as usize;
            term_buffer = (0.1 * warmup as f64) as usize;
            base = warmup - init_buffer - term_buffer;
        }
        WindowSchedule {
            warmup,
            init_buffer,
            term_buffer,
            window_size: base,
            next_end: init_buffer + base - 1,
            n: 0,
            mean: Vec::new(),
            m2: Vec::new(),
        }
    }

    fn last_end(&self) -> usize {
        self.warmup - self.term_buffer - 1
    }

    /// Records the state after warmup iteration `i`. Returns the new
    /// inverse-mass diagonal at the end of each window.
    pub fn observe(&mut self, i: usize, q: &[f64]) -> Option<Vec<f64>> {
        if i >= self.init_buffer && i < self.warmup - self.term_buffer {
            if self.mean.is_empty() {
                self.mean = vec![0.0; q.len()];
                self.m2 = vec![0.0; q.len()];
            }
            self.n += 1;
            let n = self.n as f64;
            for k in 0..q.len() {
                let d = q[k] - self.mean[k];
                self.mean[k] += d / n;
                self.m2[k] += d * (q[k] - self.mean[k]);
            }
        }
        if i != self.next_end || i == self.warmup {
            return None;
        }
        if self.next_end != self.last_end() {
            self.window_size *= 2;
            self.next_end = i + self.window_size;
            if self.next_end != self.last_end() && self.next_end + 2 * self.window_size >= self.warmup - self.term_buffer {
                self.next_end = self.last_end();
            }
        }
        let n = self.n as f64;
        let var = self
            .m2
            .iter()
            .map(|m| {
                let v = if n > 1.0 { m / (n - 1.0) } else { 1.0 };
                (n / (n + 5.0)) * v + 5.0 / (n + 5.0)
            })
            .collect();
        self.n = 0;
        self.mean.clear();
        self.m2.clear();
        Some(var)
    }
}
