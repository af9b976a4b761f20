//! Single-chain multinomial NUTS with warm-up adaptation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{SamplerConfig, TargetDensity, DIVERGENCE_THRESHOLD};

pub(crate) struct ChainResult {
    pub draws: Vec<Vec<f64>>,
    pub warmup_divergences: Vec<bool>,
    pub sampling_divergences: Vec<bool>,
    pub step_size: f64,
    pub inv_mass: Vec<f64>,
    pub mean_accept: f64,
}

#[derive(Clone)]
struct State {
    q: Vec<f64>,
    p: Vec<f64>,
    grad: Vec<f64>,
    logp: f64,
}

struct Hamiltonian<'a, T: ?Sized> {
    target: &'a T,
    inv_mass: Vec<f64>,
}

impl<'a, T: TargetDensity + ?Sized> Hamiltonian<'a, T> {
    fn energy(&self, s: &State) -> f64 {
        let kinetic: f64 = s
            .p
            .iter()
            .zip(&self.inv_mass)
            .map(|(p, m)| 0.5 * p * p * m)
            .sum();
        -s.logp + kinetic
    }

    /// One leapfrog step; returns false on a non-finite state.
    fn step(&self, s: &mut State, eps: f64) -> bool {
        let dim = s.q.len();
        for i in 0..dim {
            s.p[i] += 0.5 * eps * s.grad[i];
        }
        for i in 0..dim {
            s.q[i] += eps * self.inv_mass[i] * s.p[i];
        }
        s.logp = self.target.log_density_gradient(&s.q, &mut s.grad);
        if !s.logp.is_finite() || s.grad.iter().any(|g| !g.is_finite()) {
            return false;
        }
        for i in 0..dim {
            s.p[i] += 0.5 * eps * s.grad[i];
        }
        true
    }

    fn sample_momentum(&self, rng: &mut ChaCha8Rng, s: &mut State) {
        for (p, m) in s.p.iter_mut().zip(&self.inv_mass) {
            let z: f64 = rng.sample(StandardNormal);
            *p = z / m.sqrt();
        }
    }

    fn p_sharp(&self, s: &State) -> Vec<f64> {
        s.p.iter().zip(&self.inv_mass).map(|(p, m)| p * m).collect()
    }
}

/// Subtree summary carried through the doubling recursion.
struct Tree {
    minus: State,
    plus: State,
    proposal: State,
    /// Momentum sum over all states in the subtree.
    rho: Vec<f64>,
    /// log of the multinomial weight: logsumexp of h0 - energy over states.
    log_weight: f64,
    accept_sum: f64,
    n_states: usize,
    diverging: bool,
    turning: bool,
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn is_turning(rho: &[f64], p_sharp_minus: &[f64], p_sharp_plus: &[f64]) -> bool {
    let fwd: f64 = rho.iter().zip(p_sharp_plus).map(|(r, p)| r * p).sum();
    let bwd: f64 = rho.iter().zip(p_sharp_minus).map(|(r, p)| r * p).sum();
    fwd <= 0.0 || bwd <= 0.0
}

struct NutsKernel<'a, T: ?Sized> {
    ham: Hamiltonian<'a, T>,
    eps: f64,
    max_depth: usize,
}

impl<'a, T: TargetDensity + ?Sized> NutsKernel<'a, T> {
    fn leaf(&self, mut state: State, dir: f64, h0: f64) -> Tree {
        let ok = self.ham.step(&mut state, dir * self.eps);
        let (log_weight, energy_error, diverging) = if ok {
            let err = self.ham.energy(&state) - h0;
            (-err, err, err > DIVERGENCE_THRESHOLD)
        } else {
            (f64::NEG_INFINITY, f64::INFINITY, true)
        };
        Tree {
            rho: state.p.clone(),
            minus: state.clone(),
            plus: state.clone(),
            proposal: state,
            log_weight,
            accept_sum: (-energy_error).exp().min(1.0),
            n_states: 1,
            diverging,
            turning: false,
        }
    }

    /// Build a subtree of 2^depth states extending from `from` in `dir`.
    fn build_tree(&self, depth: usize, from: State, dir: f64, h0: f64, rng: &mut ChaCha8Rng) -> Tree {
        if depth == 0 {
            return self.leaf(from, dir, h0);
        }
        let first = self.build_tree(depth - 1, from, dir, h0, rng);
        if first.diverging || first.turning {
            return first;
        }
        let grow_from = if dir > 0.0 { first.plus.clone() } else { first.minus.clone() };
        let second = self.build_tree(depth - 1, grow_from, dir, h0, rng);

        let mut tree = first;
        tree.accept_sum += second.accept_sum;
        tree.n_states += second.n_states;
        if second.diverging {
            tree.diverging = true;
            return tree;
        }
        // Multinomial sampling within the combined subtree.
        let total = log_add_exp(tree.log_weight, second.log_weight);
        if (rng.gen::<f64>()).ln() < second.log_weight - total {
            tree.proposal = second.proposal.clone();
        }
        tree.log_weight = total;
        for (r, p) in tree.rho.iter_mut().zip(&second.rho) {
            *r += p;
        }
        if dir > 0.0 {
            tree.plus = second.plus;
        } else {
            tree.minus = second.minus;
        }
        if second.turning
            || is_turning(
                &tree.rho,
                &self.ham.p_sharp(&tree.minus),
                &self.ham.p_sharp(&tree.plus),
            )
        {
            tree.turning = true;
        }
        tree
    }

    /// One NUTS transition. Returns (next state, divergence flag, mean accept).
    fn transition(&self, mut state: State, rng: &mut ChaCha8Rng) -> (State, bool, f64) {
        self.ham.sample_momentum(rng, &mut state);
        let h0 = self.ham.energy(&state);

        let mut tree = Tree {
            rho: state.p.clone(),
            minus: state.clone(),
            plus: state.clone(),
            proposal: state,
            log_weight: 0.0,
            accept_sum: 0.0,
            n_states: 0,
            diverging: false,
            turning: false,
        };
        let mut diverged = false;
        for depth in 0..self.max_depth {
            let dir: f64 = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            let from = if dir > 0.0 { tree.plus.clone() } else { tree.minus.clone() };
            let sub = self.build_tree(depth, from, dir, h0, rng);
            tree.accept_sum += sub.accept_sum;
            tree.n_states += sub.n_states;
            if sub.diverging {
                diverged = true;
                break;
            }
            if sub.turning {
                break;
            }
            // Progressive, biased sampling between the existing tree and the
            // new subtree.
            let accept_ln = sub.log_weight - tree.log_weight;
            if accept_ln >= 0.0 || (rng.gen::<f64>()).ln() < accept_ln {
                tree.proposal = sub.proposal.clone();
            }
            tree.log_weight = log_add_exp(tree.log_weight, sub.log_weight);
            for (r, p) in tree.rho.iter_mut().zip(&sub.rho) {
                *r += p;
            }
            if dir > 0.0 {
                tree.plus = sub.plus;
            } else {
                tree.minus = sub.minus;
            }
            if is_turning(
                &tree.rho,
                &self.ham.p_sharp(&tree.minus),
                &self.ham.p_sharp(&tree.plus),
            ) {
                break;
            }
        }
        let accept = if tree.n_states > 0 {
            tree.accept_sum / tree.n_states as f64
        } else {
            0.0
        };
        (tree.proposal, diverged, accept)
    }
}

struct DualAveraging {
    mu: f64,
    log_eps: f64,
    log_eps_bar: f64,
    h_bar: f64,
    t: f64,
    target: f64,
}

impl DualAveraging {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    fn new(eps0: f64, target: f64) -> Self {
        DualAveraging {
            mu: (10.0 * eps0).ln(),
            log_eps: eps0.ln(),
            log_eps_bar: eps0.ln(),
            h_bar: 0.0,
            t: 0.0,
            target,
        }
    }

    fn update(&mut self, accept: f64) {
        self.t += 1.0;
        let eta = 1.0 / (self.t + Self::T0);
        self.h_bar = (1.0 - eta) * self.h_bar + eta * (self.target - accept);
        self.log_eps = self.mu - self.t.sqrt() / Self::GAMMA * self.h_bar;
        let w = self.t.powf(-Self::KAPPA);
        self.log_eps_bar = w * self.log_eps + (1.0 - w) * self.log_eps_bar;
    }

    fn current(&self) -> f64 {
        self.log_eps.exp()
    }

    fn adapted(&self) -> f64 {
        self.log_eps_bar.exp()
    }
}

/// Running mean/variance for mass-matrix estimation.
struct Welford {
    n: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    fn new(dim: usize) -> Self {
        Welford { n: 0.0, mean: vec![0.0; dim], m2: vec![0.0; dim] }
    }

    fn push(&mut self, x: &[f64]) {
        self.n += 1.0;
        for i in 0..x.len() {
            let d = x[i] - self.mean[i];
            self.mean[i] += d / self.n;
            self.m2[i] += d * (x[i] - self.mean[i]);
        }
    }

    /// Regularized variance estimate, shrunk toward a small diagonal.
    fn regularized_variance(&self) -> Option<Vec<f64>> {
        if self.n < 3.0 {
            return None;
        }
        let shrink = self.n / (self.n + 5.0);
        Some(
            self.m2
                .iter()
                .map(|m2| (shrink * m2 / (self.n - 1.0) + 1e-3 * (1.0 - shrink)).max(1e-10))
                .collect(),
        )
    }
}

fn find_reasonable_step_size<T: TargetDensity + ?Sized>(
    ham: &Hamiltonian<'_, T>,
    state: &State,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let mut eps = 1.0;
    let mut s = state.clone();
    ham.sample_momentum(rng, &mut s);
    let h0 = ham.energy(&s);
    let accept_at = |eps: f64| -> f64 {
        let mut trial = s.clone();
        if ham.step(&mut trial, eps) {
            (h0 - ham.energy(&trial)).exp()
        } else {
            0.0
        }
    };
    let a0 = accept_at(eps);
    let go_up = a0 > 0.5;
    for _ in 0..60 {
        let a = accept_at(eps);
        if go_up {
            if a <= 0.5 {
                break;
            }
            eps *= 2.0;
        } else {
            if a > 0.5 {
                break;
            }
            eps *= 0.5;
        }
        if eps < 1e-10 || eps > 1e7 {
            break;
        }
    }
    eps.clamp(1e-10, 1e7)
}

/// Warm-up phase boundaries: step-size-only lead-in, expanding mass windows,
/// step-size-only tail (15% / 75% / 10%).
fn mass_window_ends(n_warmup: usize) -> Vec<usize> {
    if n_warmup < 20 {
        return Vec::new();
    }
    let init = ((n_warmup as f64) * 0.15).round() as usize;
    let term = ((n_warmup as f64) * 0.10).round() as usize;
    let end_middle = n_warmup - term;
    let mut ends = Vec::new();
    let mut start = init;
    let mut size = 25usize.min(end_middle.saturating_sub(init)).max(1);
    while start < end_middle {
        let mut end = start + size;
        // Absorb a too-small final window into this one.
        if end_middle < end + size * 2 {
            end = end_middle;
        }
        ends.push(end.min(end_middle));
        start = end;
        size *= 2;
    }
    ends
}

pub(crate) fn run_chain<T: TargetDensity + ?Sized>(
    target: &T,
    config: &SamplerConfig,
    init: &[f64],
    chain_id: usize,
) -> ChainResult {
    let dim = target.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(0x6368_61696e_0000 + chain_id as u64);

    let mut q: Vec<f64> = init.to_vec();
    for qi in q.iter_mut() {
        *qi += rng.gen_range(-0.1..0.1);
    }
    let mut grad = vec![0.0; dim];
    let logp = target.log_density_gradient(&q, &mut grad);
    let mut state = State { q, p: vec![0.0; dim], grad, logp };

    let mut kernel = NutsKernel {
        ham: Hamiltonian { target, inv_mass: vec![1.0; dim] },
        eps: 1.0,
        max_depth: config.max_tree_depth,
    };
    kernel.eps = find_reasonable_step_size(&kernel.ham, &state, &mut rng);
    let mut da = DualAveraging::new(kernel.eps, config.target_accept);

    let window_ends = mass_window_ends(config.n_warmup);
    let mass_start = ((config.n_warmup as f64) * 0.15).round() as usize;
    let mut welford = Welford::new(dim);
    let mut next_window = 0usize;

    let mut warmup_divergences = Vec::with_capacity(config.n_warmup);
    for iter in 0..config.n_warmup {
        kernel.eps = da.current();
        let (next, diverged, accept) = kernel.transition(state, &mut rng);
        state = next;
        warmup_divergences.push(diverged);
        da.update(accept);

        if !window_ends.is_empty() && iter + 1 > mass_start {
            welford.push(&state.q);
        }
        if next_window < window_ends.len() && iter + 1 == window_ends[next_window] {
            if let Some(var) = welford.regularized_variance() {
                kernel.ham.inv_mass = var;
                welford = Welford::new(dim);
                // Re-tune the step size for the new metric.
                let eps0 = find_reasonable_step_size(&kernel.ham, &state, &mut rng);
                da = DualAveraging::new(eps0, config.target_accept);
            }
            next_window += 1;
        }
    }

    kernel.eps = if config.n_warmup > 0 { da.adapted() } else { da.current() };
    let mut draws = Vec::with_capacity(config.n_draws);
    let mut sampling_divergences = Vec::with_capacity(config.n_draws);
    let mut accept_total = 0.0;
    for _ in 0..config.n_draws {
        let (next, diverged, accept) = kernel.transition(state, &mut rng);
        state = next;
        draws.push(state.q.clone());
        sampling_divergences.push(diverged);
        accept_total += accept;
    }

    ChainResult {
        draws,
        warmup_divergences,
        sampling_divergences,
        step_size: kernel.eps,
        inv_mass: kernel.ham.inv_mass,
        mean_accept: accept_total / config.n_draws as f64,
    }
}
