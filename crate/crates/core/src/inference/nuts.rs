//! No-U-turn sampler with multinomial trajectory sampling, dual-averaging
//! step size and windowed diagonal metric adaptation.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::rng::StreamRng;
use crate::special::log_add_exp;

/// Differentiable log density.
pub trait LogDensity {
    fn dim(&self) -> usize;
    /// Writes the gradient into `grad` and returns the log density.
    fn logp_grad(&self, q: &[f64], grad: &mut [f64]) -> f64;
}

#[derive(Clone, Copy, Debug)]
pub struct NutsSettings {
    pub n_warmup: usize,
    pub n_samples: usize,
    pub target_accept: f64,
    pub max_depth: usize,
    pub metric: MetricKind,
}

/// Shape of the adapted mass matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Diag,
    Dense,
    /// Dense over the leading `n` coordinates, diagonal elsewhere.
    Block(usize),
}

impl Default for MetricKind {
    fn default() -> Self {
        MetricKind::Block(2)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainStats {
    pub step_size: f64,
    pub mean_accept: f64,
    pub n_divergent: usize,
    pub mean_tree_depth: f64,
    pub n_leapfrog: usize,
    pub max_depth_hits: usize,
}

pub struct ChainOutput {
    pub draws: Vec<Vec<f64>>,
    pub stats: ChainStats,
}

const MAX_DELTA_H: f64 = 1000.0;

#[derive(Clone)]
struct Point {
    q: Vec<f64>,
    p: Vec<f64>,
    grad: Vec<f64>,
    logp: f64,
}

/// Inverse mass matrix: the position-space covariance estimate.
#[derive(Clone, Debug)]
enum Metric {
    Diag(Vec<f64>),
    Dense { cov: DMatrix<f64>, chol: DMatrix<f64> },
}

impl Metric {
    fn unit(dim: usize) -> Self {
        Metric::Diag(vec![1.0; dim])
    }

    fn dense(cov: DMatrix<f64>) -> Option<Self> {
        let chol = cov.clone().cholesky()?.l();
        Some(Metric::Dense { cov, chol })
    }

    /// `M^{-1} p`.
    fn sharp(&self, p: &[f64]) -> Vec<f64> {
        match self {
            Metric::Diag(m) => p.iter().zip(m).map(|(pi, mi)| pi * mi).collect(),
            Metric::Dense { cov, .. } => (cov * DVector::from_column_slice(p)).as_slice().to_vec(),
        }
    }

    /// Momentum ~ N(0, M): `p = L^{-T} z` with `M^{-1} = L L^T`.
    fn sample(&self, rng: &mut StreamRng, p: &mut [f64]) {
        let z: Vec<f64> = (0..p.len()).map(|_| rng.sample(StandardNormal)).collect();
        match self {
            Metric::Diag(m) => {
                for ((pi, zi), mi) in p.iter_mut().zip(&z).zip(m) {
                    *pi = zi / mi.sqrt();
                }
            }
            Metric::Dense { chol, .. } => {
                let v = chol
                    .tr_solve_lower_triangular(&DVector::from_vec(z))
                    .expect("Cholesky factor has a positive diagonal");
                p.copy_from_slice(v.as_slice());
            }
        }
    }
}

struct Hamiltonian<'a, T: LogDensity> {
    target: &'a T,
    metric: Metric,
    n_leapfrog: usize,
}

impl<T: LogDensity> Hamiltonian<'_, T> {
    fn kinetic(&self, p: &[f64]) -> f64 {
        0.5 * dot(p, &self.metric.sharp(p))
    }

    fn energy(&self, z: &Point) -> f64 {
        let h = -z.logp + self.kinetic(&z.p);
        if h.is_finite() { h } else { f64::INFINITY }
    }

    fn p_sharp(&self, p: &[f64]) -> Vec<f64> {
        self.metric.sharp(p)
    }

    fn sample_momentum(&self, rng: &mut StreamRng, p: &mut [f64]) {
        self.metric.sample(rng, p);
    }

    fn leapfrog(&mut self, z: &mut Point, eps: f64) {
        for (p, g) in z.p.iter_mut().zip(&z.grad) {
            *p += 0.5 * eps * g;
        }
        let v = self.metric.sharp(&z.p);
        for (q, vi) in z.q.iter_mut().zip(&v) {
            *q += eps * vi;
        }
        z.logp = self.target.logp_grad(&z.q, &mut z.grad);
        if !z.logp.is_finite() || z.grad.iter().any(|g| !g.is_finite()) {
            z.logp = f64::NEG_INFINITY;
            return;
        }
        for (p, g) in z.p.iter_mut().zip(&z.grad) {
            *p += 0.5 * eps * g;
        }
        self.n_leapfrog += 1;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn no_u_turn(p_sharp_minus: &[f64], p_sharp_plus: &[f64], rho: &[f64]) -> bool {
    dot(p_sharp_plus, rho) > 0.0 && dot(p_sharp_minus, rho) > 0.0
}

struct TreeState {
    sum_metro: f64,
    n_leapfrog: usize,
    divergent: bool,
}

struct Subtree {
    rho: Vec<f64>,
    p_sharp_beg: Vec<f64>,
    p_sharp_end: Vec<f64>,
    p_beg: Vec<f64>,
    p_end: Vec<f64>,
    log_w: f64,
    proposal: Point,
    ok: bool,
}

#[allow(clippy::too_many_arguments)]
fn build_tree<T: LogDensity>(
    ham: &mut Hamiltonian<T>,
    rng: &mut StreamRng,
    z: &mut Point,
    depth: usize,
    eps: f64,
    h0: f64,
    st: &mut TreeState,
) -> Subtree {
    if depth == 0 {
        ham.leapfrog(z, eps);
        st.n_leapfrog += 1;
        let h = ham.energy(z);
        let ok = !(h - h0 > MAX_DELTA_H) && h.is_finite();
        if !ok {
            st.divergent = true;
        }
        let log_w = if h.is_finite() { h0 - h } else { f64::NEG_INFINITY };
        st.sum_metro += if h0 - h > 0.0 { 1.0 } else { (h0 - h).exp() };
        let ps = ham.p_sharp(&z.p);
        return Subtree {
            rho: z.p.clone(),
            p_sharp_beg: ps.clone(),
            p_sharp_end: ps,
            p_beg: z.p.clone(),
            p_end: z.p.clone(),
            log_w,
            proposal: z.clone(),
            ok,
        };
    }
    let left = build_tree(ham, rng, z, depth - 1, eps, h0, st);
    if !left.ok {
        return left;
    }
    let right = build_tree(ham, rng, z, depth - 1, eps, h0, st);
    if !right.ok {
        return Subtree { ok: false, ..right };
    }
    let log_w = log_add_exp(left.log_w, right.log_w);
    let accept_right = right.log_w - log_w;
    let proposal = if accept_right > 0.0 || rng.random::<f64>().ln() < accept_right {
        right.proposal
    } else {
        left.proposal
    };
    let rho: Vec<f64> = left.rho.iter().zip(&right.rho).map(|(a, b)| a + b).collect();
    let mut ok = no_u_turn(&left.p_sharp_beg, &right.p_sharp_end, &rho);
    // Extra checks across the subtree boundary.
    let rho_extended: Vec<f64> = left.rho.iter().zip(&right.p_beg).map(|(a, b)| a + b).collect();
    ok &= no_u_turn(&left.p_sharp_beg, &right.p_sharp_beg, &rho_extended);
    let rho_extended: Vec<f64> = right.rho.iter().zip(&left.p_end).map(|(a, b)| a + b).collect();
    ok &= no_u_turn(&left.p_sharp_end, &right.p_sharp_end, &rho_extended);
    Subtree {
        rho,
        p_sharp_beg: left.p_sharp_beg,
        p_sharp_end: right.p_sharp_end,
        p_beg: left.p_beg,
        p_end: right.p_end,
        log_w,
        proposal,
        ok,
    }
}

struct Transition {
    accept: f64,
    depth: usize,
    divergent: bool,
}

fn transition<T: LogDensity>(
    ham: &mut Hamiltonian<T>,
    rng: &mut StreamRng,
    current: &mut Point,
    eps: f64,
    max_depth: usize,
) -> Transition {
    ham.sample_momentum(rng, &mut current.p);
    let h0 = ham.energy(current);
    let mut minus = current.clone();
    let mut plus = current.clone();
    let mut sample = current.clone();
    let mut rho = current.p.clone();
    let mut p_sharp_minus = ham.p_sharp(&current.p);
    let mut p_sharp_plus = p_sharp_minus.clone();
    let mut p_minus = current.p.clone();
    let mut p_plus = current.p.clone();
    let mut log_w = 0.0;
    let mut st = TreeState { sum_metro: 0.0, n_leapfrog: 0, divergent: false };
    let mut depth = 0;
    while depth < max_depth {
        let forward = rng.random::<bool>();
        let sub = if forward {
            build_tree(ham, rng, &mut plus, depth, eps, h0, &mut st)
        } else {
            build_tree(ham, rng, &mut minus, depth, -eps, h0, &mut st)
        };
        depth += 1;
        if !sub.ok {
            break;
        }
        // Biased progressive sampling favours the new subtree.
        if sub.log_w > log_w || rng.random::<f64>() < (sub.log_w - log_w).exp() {
            sample = sub.proposal.clone();
        }
        log_w = log_add_exp(log_w, sub.log_w);
        let (rho_old, ps_old_beg, ps_old_end, p_old_beg, p_old_end) =
            (rho.clone(), p_sharp_minus.clone(), p_sharp_plus.clone(), p_minus.clone(), p_plus.clone());
        rho = rho_old.iter().zip(&sub.rho).map(|(a, b)| a + b).collect();
        let mut ok;
        if forward {
            p_sharp_plus = sub.p_sharp_end.clone();
            p_plus = sub.p_end.clone();
            ok = no_u_turn(&p_sharp_minus, &p_sharp_plus, &rho);
            let r1: Vec<f64> = rho_old.iter().zip(&sub.p_beg).map(|(a, b)| a + b).collect();
            ok &= no_u_turn(&ps_old_beg, &sub.p_sharp_beg, &r1);
            let r2: Vec<f64> = sub.rho.iter().zip(&p_old_end).map(|(a, b)| a + b).collect();
            ok &= no_u_turn(&ps_old_end, &p_sharp_plus, &r2);
        } else {
            // The new subtree sits on the left; its "end" is the new minus end.
            p_sharp_minus = sub.p_sharp_end.clone();
            p_minus = sub.p_end.clone();
            ok = no_u_turn(&p_sharp_minus, &p_sharp_plus, &rho);
            let r1: Vec<f64> = sub.rho.iter().zip(&p_old_beg).map(|(a, b)| a + b).collect();
            ok &= no_u_turn(&p_sharp_minus, &ps_old_beg, &r1);
            let r2: Vec<f64> = rho_old.iter().zip(&sub.p_beg).map(|(a, b)| a + b).collect();
            ok &= no_u_turn(&sub.p_sharp_beg, &ps_old_end, &r2);
        }
        if !ok {
            break;
        }
    }
    let accept = if st.n_leapfrog > 0 { st.sum_metro / st.n_leapfrog as f64 } else { 0.0 };
    *current = sample;
    Transition { accept, depth, divergent: st.divergent }
}

struct DualAveraging {
    mu: f64,
    target: f64,
    counter: f64,
    s_bar: f64,
    x_bar: f64,
}

impl DualAveraging {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    fn new(eps: f64, target: f64) -> Self {
        DualAveraging { mu: (10.0 * eps).ln(), target, counter: 0.0, s_bar: 0.0, x_bar: 0.0 }
    }

    fn update(&mut self, accept: f64) -> f64 {
        self.counter += 1.0;
        let accept = accept.min(1.0);
        let eta = 1.0 / (self.counter + Self::T0);
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.target - accept);
        let x = self.mu - self.s_bar * self.counter.sqrt() / Self::GAMMA;
        let x_eta = self.counter.powf(-Self::KAPPA);
        self.x_bar = (1.0 - x_eta) * self.x_bar + x_eta * x;
        x.exp()
    }

    fn final_step(&self) -> f64 {
        self.x_bar.exp()
    }
}

/// Warmup schedule: initial fast buffer, doubling slow windows for the
/// metric, terminal fast buffer.
struct Windows {
    n_warmup: usize,
    init_buffer: usize,
    term_buffer: usize,
    window_size: usize,
    next_window: usize,
    adapt_metric: bool,
}

impl Windows {
    fn new(n_warmup: usize) -> Self {
        let (mut init_buffer, mut term_buffer, mut base) = (75, 50, 25);
        let adapt_metric = n_warmup >= 20;
        if init_buffer + base + term_buffer > n_warmup {
            init_buffer = (0.15 * n_warmup as f64) as usize;
            term_buffer = (0.1 * n_warmup as f64) as usize;
            base = n_warmup - (init_buffer + term_buffer);
        }
        Windows {
            n_warmup,
            init_buffer,
            term_buffer,
            window_size: base,
            next_window: (init_buffer + base).saturating_sub(1),
            adapt_metric,
        }
    }

    fn in_window(&self, i: usize) -> bool {
        self.adapt_metric && i >= self.init_buffer && i < self.n_warmup - self.term_buffer && i != self.n_warmup
    }

    fn window_end(&self, i: usize) -> bool {
        self.adapt_metric && i == self.next_window && i != self.n_warmup
    }

    fn advance(&mut self, i: usize) {
        let last = self.n_warmup - self.term_buffer - 1;
        if self.next_window == last {
            return;
        }
        self.window_size *= 2;
        self.next_window = i + self.window_size;
        if self.next_window != last && self.next_window + 2 * self.window_size >= self.n_warmup - self.term_buffer {
            self.next_window = last;
        }
    }
}

/// Streaming mean and covariance of warmup positions.
struct Welford {
    n: f64,
    mean: DVector<f64>,
    m2: DMatrix<f64>,
}

impl Welford {
    fn new(dim: usize) -> Self {
        Welford { n: 0.0, mean: DVector::zeros(dim), m2: DMatrix::zeros(dim, dim) }
    }

    fn push(&mut self, q: &[f64]) {
        let x = DVector::from_column_slice(q);
        self.n += 1.0;
        let d = &x - &self.mean;
        self.mean += &d / self.n;
        let d2 = &x - &self.mean;
        self.m2 += &d * d2.transpose();
    }

    /// Covariance shrunk towards 1e-3 I, as used for the metric.
    fn metric(&self, kind: MetricKind) -> Metric {
        let n = self.n;
        let shrink = |c: f64| (n / (n + 5.0)) * c + 1e-3 * (5.0 / (n + 5.0));
        let cov = &self.m2 / (n - 1.0);
        let diag: Vec<f64> = cov.diagonal().iter().map(|&c| shrink(c)).collect();
        match kind {
            MetricKind::Diag => Metric::Diag(diag),
            MetricKind::Dense | MetricKind::Block(_) => {
                let mut c = cov * (n / (n + 5.0));
                if let MetricKind::Block(b) = kind {
                    for i in 0..c.nrows() {
                        for j in 0..c.ncols() {
                            if i != j && (i >= b || j >= b) {
                                c[(i, j)] = 0.0;
                            }
                        }
                    }
                }
                for i in 0..c.nrows() {
                    c[(i, i)] = diag[i];
                }
                Metric::dense(c).unwrap_or(Metric::Diag(diag))
            }
        }
    }
}

fn init_step_size<T: LogDensity>(ham: &mut Hamiltonian<T>, rng: &mut StreamRng, z: &Point, mut eps: f64) -> f64 {
    let log_target = 0.8f64.ln();
    let probe = |ham: &mut Hamiltonian<T>, rng: &mut StreamRng, eps: f64| {
        let mut w = z.clone();
        ham.sample_momentum(rng, &mut w.p);
        let h0 = ham.energy(&w);
        ham.leapfrog(&mut w, eps);
        let h = ham.energy(&w);
        let d = h0 - h;
        if d.is_nan() { f64::NEG_INFINITY } else { d }
    };
    let direction = if probe(ham, rng, eps) > log_target { 1.0 } else { -1.0 };
    for _ in 0..100 {
        let d = probe(ham, rng, eps);
        if (direction > 0.0 && !(d > log_target)) || (direction < 0.0 && !(d < log_target)) {
            break;
        }
        eps = if direction > 0.0 { 2.0 * eps } else { 0.5 * eps };
        if !(1e-12..=1e7).contains(&eps) {
            break;
        }
    }
    eps
}

/// Runs one chain from `init`; warmup draws are discarded.
pub fn run_chain<T: LogDensity>(target: &T, init: Vec<f64>, settings: &NutsSettings, rng: &mut StreamRng) -> ChainOutput {
    let dim = target.dim();
    let mut ham = Hamiltonian { target, metric: Metric::unit(dim), n_leapfrog: 0 };
    let mut grad = vec![0.0; dim];
    let logp = target.logp_grad(&init, &mut grad);
    let mut z = Point { q: init, p: vec![0.0; dim], grad, logp };

    let mut eps = init_step_size(&mut ham, rng, &z, 1.0);
    let mut da = DualAveraging::new(eps, settings.target_accept);
    let mut windows = Windows::new(settings.n_warmup);
    let mut welford = Welford::new(dim);

    for i in 0..settings.n_warmup {
        let t = transition(&mut ham, rng, &mut z, eps, settings.max_depth);
        eps = da.update(t.accept);
        if windows.in_window(i) {
            welford.push(&z.q);
        }
        if windows.window_end(i) {
            windows.advance(i);
            ham.metric = welford.metric(settings.metric);
            welford = Welford::new(dim);
            eps = init_step_size(&mut ham, rng, &z, eps);
            da = DualAveraging::new(eps, settings.target_accept);
        }
    }
    if settings.n_warmup > 0 {
        eps = da.final_step();
    }

    ham.n_leapfrog = 0;
    let mut stats = ChainStats { step_size: eps, ..Default::default() };
    let mut draws = Vec::with_capacity(settings.n_samples);
    let mut depth_sum = 0usize;
    for _ in 0..settings.n_samples {
        let t = transition(&mut ham, rng, &mut z, eps, settings.max_depth);
        stats.mean_accept += t.accept;
        stats.n_divergent += t.divergent as usize;
        stats.max_depth_hits += (t.depth >= settings.max_depth) as usize;
        depth_sum += t.depth;
        draws.push(z.q.clone());
    }
    if settings.n_samples > 0 {
        stats.mean_accept /= settings.n_samples as f64;
        stats.mean_tree_depth = depth_sum as f64 / settings.n_samples as f64;
    }
    stats.n_leapfrog = ham.n_leapfrog;
    ChainOutput { draws, stats }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Seed;
    use crate::stats::{mean, variance};

    struct Gaussian {
        mu: Vec<f64>,
        sd: Vec<f64>,
    }

    impl LogDensity for Gaussian {
        fn dim(&self) -> usize {
            self.mu.len()
        }
        fn logp_grad(&self, q: &[f64], grad: &mut [f64]) -> f64 {
            let mut lp = 0.0;
            for i in 0..q.len() {
                let z = (q[i] - self.mu[i]) / self.sd[i];
                lp -= 0.5 * z * z;
                grad[i] = -z / self.sd[i];
            }
            lp
        }
    }

    #[test]
    fn recovers_anisotropic_gaussian_moments() {
        let target = Gaussian { mu: vec![1.0, -2.0, 0.0], sd: vec![0.1, 3.0, 1.0] };
        let settings = NutsSettings { n_warmup: 1000, n_samples: 4000, target_accept: 0.8, max_depth: 10, metric: MetricKind::Dense };
        let out = run_chain(&target, vec![0.0; 3], &settings, &mut Seed(5).rng());
        for i in 0..3 {
            let xs: Vec<f64> = out.draws.iter().map(|d| d[i]).collect();
            let m = mean(&xs);
            let sd = variance(&xs).sqrt();
            assert!((m - target.mu[i]).abs() < 0.1 * target.sd[i], "mean {i}: {m}");
            assert!((sd / target.sd[i] - 1.0).abs() < 0.1, "sd {i}: {sd}");
        }
        assert_eq!(out.stats.n_divergent, 0);
        // The averaged step size runs a little smaller than the last iterate.
        assert!((0.7..0.97).contains(&out.stats.mean_accept), "{}", out.stats.mean_accept);
    }

    #[test]
    fn same_seed_same_chain() {
        let target = Gaussian { mu: vec![0.0; 2], sd: vec![1.0; 2] };
        let settings = NutsSettings { n_warmup: 100, n_samples: 50, target_accept: 0.8, max_depth: 10, metric: MetricKind::Dense };
        let a = run_chain(&target, vec![0.5, 0.5], &settings, &mut Seed(1).rng());
        let b = run_chain(&target, vec![0.5, 0.5], &settings, &mut Seed(1).rng());
        assert_eq!(a.draws, b.draws);
    }

    #[test]
    fn warmup_schedule_matches_reference_boundaries() {
        // 1000 warmup: buffers 75/50, windows 25, 50, 100, 200, 500 ending at 999 - 50.
        let mut w = Windows::new(1000);
        let mut ends = Vec::new();
        for i in 0..1000 {
            if w.window_end(i) {
                ends.push(i);
                w.advance(i);
            }
        }
        assert_eq!(ends, vec![99, 149, 249, 449, 949]);
        let short = Windows::new(100);
        assert_eq!((short.init_buffer, short.term_buffer, short.window_size), (15, 10, 75));
    }

    /// Bivariate normal with unit variances and correlation `rho`, padded
    /// with independent standard normals.
    struct Correlated {
        rho: f64,
        extra: usize,
    }

    impl LogDensity for Correlated {
        fn dim(&self) -> usize {
            2 + self.extra
        }
        fn logp_grad(&self, q: &[f64], grad: &mut [f64]) -> f64 {
            let c = 1.0 / (1.0 - self.rho * self.rho);
            let (x, y) = (q[0], q[1]);
            grad[0] = -c * (x - self.rho * y);
            grad[1] = -c * (y - self.rho * x);
            let mut lp = -0.5 * c * (x * x - 2.0 * self.rho * x * y + y * y);
            for i in 2..q.len() {
                lp -= 0.5 * q[i] * q[i];
                grad[i] = -q[i];
            }
            lp
        }
    }

    #[test]
    fn every_metric_recovers_correlation() {
        let target = Correlated { rho: 0.95, extra: 3 };
        for metric in [MetricKind::Diag, MetricKind::Dense, MetricKind::Block(2)] {
            let settings = NutsSettings { n_warmup: 1000, n_samples: 4000, target_accept: 0.8, max_depth: 10, metric };
            let out = run_chain(&target, vec![0.1; 5], &settings, &mut Seed(3).rng());
            let xs: Vec<f64> = out.draws.iter().map(|d| d[0]).collect();
            let ys: Vec<f64> = out.draws.iter().map(|d| d[1]).collect();
            let (mx, my) = (mean(&xs), mean(&ys));
            let cov = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / (xs.len() - 1) as f64;
            let r = cov / (variance(&xs) * variance(&ys)).sqrt();
            assert!((r - 0.95).abs() < 0.02, "{metric:?}: rho {r}");
            assert!(mx.abs() < 0.15 && my.abs() < 0.15, "{metric:?}: means {mx} {my}");
        }
    }

    #[test]
    fn block_metric_drops_cross_terms() {
        let mut w = Welford::new(3);
        for i in 0..50 {
            let t = i as f64 * 0.37;
            w.push(&[t.sin(), t.sin() + 0.1 * t.cos(), t.sin() * 0.5 + t.cos()]);
        }
        let Metric::Dense { cov, .. } = w.metric(MetricKind::Block(2)) else { panic!("expected a dense metric") };
        assert!(cov[(0, 1)].abs() > 0.1);
        assert_eq!((cov[(0, 2)], cov[(2, 1)]), (0.0, 0.0));
    }
}
