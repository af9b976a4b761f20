//! Gradient-based MCMC: leapfrog integration, No-U-Turn tree building with
//! multinomial proposal sampling, dual-averaging step-size adaptation,
//! windowed diagonal mass-matrix adaptation, and convergence diagnostics.

pub mod diagnostics;
mod nuts;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use diagnostics::{diagnostics, DiagnosticsReport};

/// A differentiable unnormalized log density. Must be safe to evaluate from
/// several chains at once.
pub trait TargetDensity: Sync {
    fn dim(&self) -> usize;

    /// Returns the log density at `position` and writes the gradient into
    /// `grad` (length `dim`).
    fn log_density_gradient(&self, position: &[f64], grad: &mut [f64]) -> f64;

    fn log_density(&self, position: &[f64]) -> f64 {
        let mut grad = vec![0.0; self.dim()];
        self.log_density_gradient(position, &mut grad)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_warmup: usize,
    pub n_draws: usize,
    pub target_accept: f64,
    pub max_tree_depth: usize,
    pub seed: u64,
    pub n_chains: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_warmup: 250,
            n_draws: 1000,
            target_accept: 0.8,
            max_tree_depth: 10,
            seed: 0,
            n_chains: 4,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.target_accept && self.target_accept < 1.0) {
            return Err(Error::validation(format!(
                "target_accept must be in (0,1), got {}",
                self.target_accept
            )));
        }
        if self.n_draws == 0 || self.n_chains == 0 || self.max_tree_depth == 0 {
            return Err(Error::validation("counts must be positive"));
        }
        Ok(())
    }
}

/// Hamiltonian error beyond which a transition is flagged divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1000.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplerOutput {
    pub dim: usize,
    pub config: SamplerConfig,
    /// draws[chain][draw][coordinate], warm-up excluded.
    pub draws: Vec<Vec<Vec<f64>>>,
    pub warmup_divergences: Vec<Vec<bool>>,
    pub sampling_divergences: Vec<Vec<bool>>,
    /// Adapted step size per chain.
    pub step_sizes: Vec<f64>,
    /// Adapted diagonal inverse mass per chain.
    pub inv_mass: Vec<Vec<f64>>,
    /// Mean acceptance statistic over the sampling phase, per chain.
    pub mean_accept: Vec<f64>,
}

impl SamplerOutput {
    pub fn n_total_draws(&self) -> usize {
        self.draws.iter().map(|c| c.len()).sum()
    }

    fn fraction(flags: &[Vec<bool>]) -> f64 {
        let total: usize = flags.iter().map(|c| c.len()).sum();
        if total == 0 {
            return 0.0;
        }
        let hits: usize = flags.iter().flatten().filter(|&&d| d).count();
        hits as f64 / total as f64
    }

    /// Fraction of warm-up transitions that diverged (the Table-4 statistic).
    pub fn warmup_divergence_fraction(&self) -> f64 {
        Self::fraction(&self.warmup_divergences)
    }

    pub fn sampling_divergence_fraction(&self) -> f64 {
        Self::fraction(&self.sampling_divergences)
    }

    /// Iterate over all kept draws, chain-major.
    pub fn flat_draws(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.draws.iter().flatten()
    }

    /// One row per draw with named columns.
    pub fn write_draws_csv<W: Write>(&self, names: &[String], mut w: W) -> Result<()> {
        if names.len() != self.dim {
            return Err(Error::validation(format!(
                "{} names for {} coordinates",
                names.len(),
                self.dim
            )));
        }
        write!(w, "chain,draw")?;
        for n in names {
            write!(w, ",{n}")?;
        }
        writeln!(w)?;
        for (c, chain) in self.draws.iter().enumerate() {
            for (d, draw) in chain.iter().enumerate() {
                write!(w, "{c},{d}")?;
                for v in draw {
                    write!(w, ",{v}")?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }
}

/// leapfrog: `n_steps` position-momentum updates under
/// H(q, p) = -log_density(q) + p' M^-1 p / 2 with diagonal `inv_mass`
/// (identity when `None`). A non-finite state is a divergence signal,
/// reported as `None` rather than an error.
pub fn leapfrog<T: TargetDensity + ?Sized>(
    target: &T,
    position: &[f64],
    momentum: &[f64],
    step_size: f64,
    n_steps: usize,
    inv_mass: Option<&[f64]>,
) -> Option<(Vec<f64>, Vec<f64>)> {
    let dim = target.dim();
    assert_eq!(position.len(), dim);
    assert_eq!(momentum.len(), dim);
    let ones;
    let inv_mass = match inv_mass {
        Some(m) => m,
        None => {
            ones = vec![1.0; dim];
            &ones
        }
    };
    let mut q = position.to_vec();
    let mut p = momentum.to_vec();
    if n_steps == 0 {
        return Some((q, p));
    }
    let mut grad = vec![0.0; dim];
    let logp = target.log_density_gradient(&q, &mut grad);
    if !logp.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return None;
    }
    for _ in 0..n_steps {
        for i in 0..dim {
            p[i] += 0.5 * step_size * grad[i];
        }
        for i in 0..dim {
            q[i] += step_size * inv_mass[i] * p[i];
        }
        let logp = target.log_density_gradient(&q, &mut grad);
        if !logp.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return None;
        }
        for i in 0..dim {
            p[i] += 0.5 * step_size * grad[i];
        }
    }
    Some((q, p))
}

/// nuts_sample: run `config.n_chains` independent NUTS chains from
/// `init` (with per-chain jitter), adapting step size and diagonal mass
/// during warm-up. Deterministic given (seed, config, target).
pub fn nuts_sample<T: TargetDensity + ?Sized>(
    target: &T,
    config: &SamplerConfig,
    init: &[f64],
) -> Result<SamplerOutput> {
    config.validate()?;
    if init.len() != target.dim() {
        return Err(Error::validation(format!(
            "init length {} does not match target dimension {}",
            init.len(),
            target.dim()
        )));
    }
    if !target.log_density(init).is_finite() {
        return Err(Error::numerical("log density is not finite at the initial point"));
    }
    let chains: Vec<nuts::ChainResult> = (0..config.n_chains)
        .into_par_iter()
        .map(|chain_id| nuts::run_chain(target, config, init, chain_id))
        .collect();

    let mut out = SamplerOutput {
        dim: target.dim(),
        config: config.clone(),
        draws: Vec::new(),
        warmup_divergences: Vec::new(),
        sampling_divergences: Vec::new(),
        step_sizes: Vec::new(),
        inv_mass: Vec::new(),
        mean_accept: Vec::new(),
    };
    for c in chains {
        out.draws.push(c.draws);
        out.warmup_divergences.push(c.warmup_divergences);
        out.sampling_divergences.push(c.sampling_divergences);
        out.step_sizes.push(c.step_size);
        out.inv_mass.push(c.inv_mass);
        out.mean_accept.push(c.mean_accept);
    }
    if out.step_sizes.iter().any(|e| !e.is_finite() || *e <= 0.0) {
        return Err(Error::numerical("step size adaptation failed"));
    }
    Ok(out)
}
