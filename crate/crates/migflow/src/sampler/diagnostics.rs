//! Convergence diagnostics: per-phase divergence fractions, split R-hat, and
//! bulk effective sample size per coordinate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::SamplerOutput;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub warmup_divergence_fraction: f64,
    pub sampling_divergence_fraction: f64,
    /// Split R-hat per coordinate.
    pub rhat: Vec<f64>,
    /// Bulk effective sample size per coordinate.
    pub ess_bulk: Vec<f64>,
}

impl DiagnosticsReport {
    pub fn max_rhat(&self) -> f64 {
        self.rhat.iter().copied().fold(f64::NAN, f64::max)
    }

    pub fn min_ess(&self) -> f64 {
        self.ess_bulk.iter().copied().fold(f64::NAN, f64::min)
    }
}

/// Split each chain in half; returns sequences of equal length.
fn split_chains(chains: &[Vec<f64>]) -> Vec<&[f64]> {
    let mut seqs = Vec::with_capacity(chains.len() * 2);
    for c in chains {
        let half = c.len() / 2;
        seqs.push(&c[..half]);
        seqs.push(&c[half..half * 2]);
    }
    seqs
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Split R-hat for one coordinate given per-chain sequences.
fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let seqs = split_chains(chains);
    let n = seqs[0].len();
    if n < 2 {
        return f64::NAN;
    }
    let m = seqs.len() as f64;
    let means: Vec<f64> = seqs.iter().map(|s| mean(s)).collect();
    let grand = mean(&means);
    let b = n as f64 / (m - 1.0) * means.iter().map(|mu| (mu - grand).powi(2)).sum::<f64>();
    let w = seqs
        .iter()
        .zip(&means)
        .map(|(s, mu)| s.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n as f64 - 1.0))
        .sum::<f64>()
        / m;
    if w <= 0.0 {
        return f64::NAN;
    }
    let var_plus = (n as f64 - 1.0) / n as f64 * w + b / n as f64;
    (var_plus / w).sqrt()
}

/// Bulk ESS via Geyer's initial monotone positive sequence over the
/// chain-averaged autocorrelations.
fn bulk_ess(chains: &[Vec<f64>]) -> f64 {
    let seqs = split_chains(chains);
    let n = seqs[0].len();
    let m = seqs.len() as f64;
    if n < 4 {
        return f64::NAN;
    }
    let means: Vec<f64> = seqs.iter().map(|s| mean(s)).collect();
    let grand = mean(&means);
    let b = n as f64 / (m - 1.0) * means.iter().map(|mu| (mu - grand).powi(2)).sum::<f64>();
    let vars: Vec<f64> = seqs
        .iter()
        .zip(&means)
        .map(|(s, mu)| s.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n as f64 - 1.0))
        .collect();
    let w = mean(&vars);
    if w <= 0.0 {
        return f64::NAN;
    }
    let var_plus = (n as f64 - 1.0) / n as f64 * w + b / n as f64;

    // Chain-averaged autocovariance at a given lag (biased, 1/n).
    let acov = |lag: usize| -> f64 {
        let per_chain: Vec<f64> = seqs
            .iter()
            .zip(&means)
            .map(|(s, mu)| {
                (0..n - lag)
                    .map(|i| (s[i] - mu) * (s[i + lag] - mu))
                    .sum::<f64>()
                    / n as f64
            })
            .collect();
        mean(&per_chain)
    };

    let rho = |lag: usize| 1.0 - (w - acov(lag)) / var_plus;
    let mut prev_pair = rho(0) + rho(1);
    let mut lag = 2;
    let mut sum_pairs = prev_pair;
    while lag + 1 < n {
        let pair = rho(lag) + rho(lag + 1);
        if pair <= 0.0 {
            break;
        }
        // Enforce monotone nonincreasing pair sums.
        let pair = pair.min(prev_pair);
        sum_pairs += pair;
        prev_pair = pair;
        lag += 2;
    }
    let tau = (-1.0 + 2.0 * sum_pairs).max(1.0 / (m * n as f64));
    let total = m * n as f64;
    (total / tau).min(total * total.log10().max(1.0))
}

/// diagnostics: divergence fractions, split R-hat, and bulk ESS.
pub fn diagnostics(output: &SamplerOutput) -> Result<DiagnosticsReport> {
    if output.draws.len() < 2 {
        return Err(Error::validation("diagnostics need at least 2 chains"));
    }
    let dim = output.dim;
    let mut rhat = Vec::with_capacity(dim);
    let mut ess = Vec::with_capacity(dim);
    for d in 0..dim {
        let per_chain: Vec<Vec<f64>> = output
            .draws
            .iter()
            .map(|chain| chain.iter().map(|draw| draw[d]).collect())
            .collect();
        rhat.push(split_rhat(&per_chain));
        ess.push(bulk_ess(&per_chain));
    }
    Ok(DiagnosticsReport {
        warmup_divergence_fraction: output.warmup_divergence_fraction(),
        sampling_divergence_fraction: output.sampling_divergence_fraction(),
        rhat,
        ess_bulk: ess,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::SamplerConfig;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    fn fake_output(chains: Vec<Vec<Vec<f64>>>) -> SamplerOutput {
        SamplerOutput {
            dim: chains[0][0].len(),
            config: SamplerConfig::default(),
            warmup_divergences: vec![vec![false; 10]; chains.len()],
            sampling_divergences: vec![vec![false; chains[0].len()]; chains.len()],
            step_sizes: vec![0.5; chains.len()],
            inv_mass: vec![vec![1.0]; chains.len()],
            mean_accept: vec![0.9; chains.len()],
            draws: chains,
        }
    }

    fn iid_chains(n_chains: usize, n: usize, offset: f64, seed: u64) -> Vec<Vec<Vec<f64>>> {
        let mut rng = StdRng::seed_from_u64(seed);
        (0..n_chains)
            .map(|c| {
                (0..n)
                    .map(|_| {
                        let z: f64 = rng.sample(StandardNormal);
                        vec![z + if c == 0 { offset } else { 0.0 }]
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn rhat_near_one_for_iid_chains() {
        let out = fake_output(iid_chains(4, 2000, 0.0, 1));
        let report = diagnostics(&out).unwrap();
        assert!(report.rhat[0] > 0.99 && report.rhat[0] < 1.01, "rhat {}", report.rhat[0]);
        assert!(report.ess_bulk[0] > 2000.0, "ess {}", report.ess_bulk[0]);
    }

    #[test]
    fn rhat_detects_offset_chain() {
        let out = fake_output(iid_chains(4, 1000, 10.0, 2));
        let report = diagnostics(&out).unwrap();
        assert!(report.rhat[0] > 1.5, "rhat {}", report.rhat[0]);
    }

    #[test]
    fn zero_divergence_flags_mean_zero_fraction() {
        let out = fake_output(iid_chains(2, 100, 0.0, 3));
        let report = diagnostics(&out).unwrap();
        assert_eq!(report.warmup_divergence_fraction, 0.0);
        assert_eq!(report.sampling_divergence_fraction, 0.0);
    }

    #[test]
    fn needs_two_chains() {
        let out = fake_output(iid_chains(1, 100, 0.0, 4));
        assert!(diagnostics(&out).is_err());
    }
}
