//! The four hierarchical model specifications as differentiable target
//! densities (non-centered, truncated-normal likelihood, OLS-anchored
//! hyperparameters), posterior prediction, sign-agreement reporting,
//! parameter counting, and a synthetic panel generator for oracle tests.

mod target;

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::classical::{OlsFit, UnpooledEntry, UnpooledFits};
use crate::data::{draw_truncated_normal, FlowObservation, FlowPanel, PairIndex, Region};
use crate::error::{Error, Result};
use crate::features::{DesignMatrix, ModelForm};
use crate::sampler::{nuts_sample, SamplerConfig, SamplerOutput};

pub use target::HierarchicalTarget;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variation {
    InterceptOnly,
    AllParameters,
}

/// Which hierarchy to fit: family (gravity/radiation) and which parameters
/// vary by pair. In the all-parameters gravity model the distance coefficient
/// stays common because distance is not time-varying.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: ModelForm,
    pub variation: Variation,
}

impl ModelSpec {
    pub fn hg1() -> Self {
        ModelSpec { family: ModelForm::Gravity, variation: Variation::InterceptOnly }
    }

    pub fn hg2() -> Self {
        ModelSpec { family: ModelForm::Gravity, variation: Variation::AllParameters }
    }

    pub fn hr1() -> Self {
        ModelSpec { family: ModelForm::Radiation, variation: Variation::InterceptOnly }
    }

    pub fn hr2() -> Self {
        ModelSpec { family: ModelForm::Radiation, variation: Variation::AllParameters }
    }

    pub fn name(&self) -> &'static str {
        match (self.family, self.variation) {
            (ModelForm::Gravity, Variation::InterceptOnly) => "HG1",
            (ModelForm::Gravity, Variation::AllParameters) => "HG2",
            (ModelForm::Radiation, Variation::InterceptOnly) => "HR1",
            (ModelForm::Radiation, Variation::AllParameters) => "HR2",
        }
    }

    /// Per-feature flag: does coefficient k vary by pair?
    pub fn varying_coefficients(&self) -> Vec<bool> {
        let k = self.family.n_features();
        match self.variation {
            Variation::InterceptOnly => vec![false; k],
            Variation::AllParameters => match self.family {
                // Distance (column 2) stays common in HG2.
                ModelForm::Gravity => vec![true, true, false],
                ModelForm::Radiation => vec![true; k],
            },
        }
    }
}

/// OLS-anchored hyperparameters for the hierarchy's top level.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HyperParams {
    pub mu_alpha_loc: f64,
    pub mu_alpha_scale: f64,
    pub beta_loc: Vec<f64>,
    pub beta_scale: f64,
    pub sigma_alpha_scale: f64,
    pub sigma_beta_scale: f64,
    pub mu_sigma_loc: f64,
    pub mu_sigma_scale: f64,
    pub tau_sigma_scale: f64,
}

impl HyperParams {
    /// Anchor locations at the pooled OLS estimates; scales use the default
    /// wide settings (5 for locations, half-normal(2) for group scales,
    /// half-normal(1) for the variance pooling scale).
    pub fn from_ols(fit: &OlsFit) -> Result<Self> {
        if fit.coefficients.len() < 2 {
            return Err(Error::validation("OLS fit must include an intercept and features"));
        }
        let sigma = if fit.sigma_hat > 0.0 { fit.sigma_hat } else { 1e-3 };
        Ok(HyperParams {
            mu_alpha_loc: fit.coefficients[0],
            mu_alpha_scale: 5.0,
            beta_loc: fit.coefficients[1..].to_vec(),
            beta_scale: 5.0,
            sigma_alpha_scale: 2.0,
            sigma_beta_scale: 2.0,
            mu_sigma_loc: sigma.ln(),
            mu_sigma_scale: 1.0,
            tau_sigma_scale: 1.0,
        })
    }
}

/// Placement of one regression coefficient in the flat parameter vector.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub enum CoefLayout {
    Common { idx: usize },
    Varying { z_off: usize, mu_idx: usize, log_sigma_idx: usize },
}

/// Named slices of the flat sampling vector. Offsets partition the vector
/// exactly; `dim` is a deterministic function of (spec, n_pairs).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParameterLayout {
    pub n_pairs: usize,
    pub z_alpha: usize,
    pub mu_alpha: usize,
    pub log_sigma_alpha: usize,
    pub coefs: Vec<CoefLayout>,
    pub mu_sigma: usize,
    pub log_tau_sigma: usize,
    pub z_sigma: usize,
    pub dim: usize,
}

impl ParameterLayout {
    pub fn new(spec: &ModelSpec, n_pairs: usize) -> Self {
        let mut cursor = 0;
        let z_alpha = cursor;
        cursor += n_pairs;
        let mu_alpha = cursor;
        cursor += 1;
        let log_sigma_alpha = cursor;
        cursor += 1;
        let mut coefs = Vec::new();
        for varying in spec.varying_coefficients() {
            if varying {
                let z_off = cursor;
                cursor += n_pairs;
                let mu_idx = cursor;
                cursor += 1;
                let log_sigma_idx = cursor;
                cursor += 1;
                coefs.push(CoefLayout::Varying { z_off, mu_idx, log_sigma_idx });
            } else {
                coefs.push(CoefLayout::Common { idx: cursor });
                cursor += 1;
            }
        }
        let mu_sigma = cursor;
        cursor += 1;
        let log_tau_sigma = cursor;
        cursor += 1;
        let z_sigma = cursor;
        cursor += n_pairs;
        ParameterLayout {
            n_pairs,
            z_alpha,
            mu_alpha,
            log_sigma_alpha,
            coefs,
            mu_sigma,
            log_tau_sigma,
            z_sigma,
            dim: cursor,
        }
    }

    /// Offsets of every length-`n_pairs` z block.
    pub fn z_offsets(&self) -> Vec<usize> {
        let mut offs = vec![self.z_alpha];
        for coef in &self.coefs {
            if let CoefLayout::Varying { z_off, .. } = *coef {
                offs.push(z_off);
            }
        }
        offs.push(self.z_sigma);
        offs
    }

    /// Count of predictive parameters (intercepts and coefficients only):
    /// per-pair slots for varying terms plus one slot per common term.
    pub fn predictive_parameter_count(&self) -> usize {
        let varying = 1 + self
            .coefs
            .iter()
            .filter(|c| matches!(c, CoefLayout::Varying { .. }))
            .count();
        let common = self
            .coefs
            .iter()
            .filter(|c| matches!(c, CoefLayout::Common { .. }))
            .count();
        self.n_pairs * varying + common
    }
}

/// count_parameters: number of parameters in the posterior predictive
/// mean (intercepts and coefficients; hyperparameters and variance terms are
/// excluded).
pub fn count_parameters(spec: &ModelSpec, n_regions: usize) -> usize {
    let n_pairs = n_regions * (n_regions - 1);
    ParameterLayout::new(spec, n_pairs).predictive_parameter_count()
}

/// truncated_normal_logpdf: log density of Normal(mu, sigma) truncated
/// to [0, inf). Returns -inf below the support.
pub fn truncated_normal_logpdf(x: f64, mu: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::validation(format!("sigma must be positive, got {sigma}")));
    }
    if x < 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let d = (x - mu) / sigma;
    Ok(-sigma.ln() - 0.5 * target::LN_2PI - 0.5 * d * d - target::log_ndtr(mu / sigma))
}

/// build_target: the non-centered log-joint for `spec` over `design`,
/// with analytic gradient.
pub fn build_target(
    spec: &ModelSpec,
    design: &DesignMatrix,
    hyper: &HyperParams,
    pair_index: &PairIndex,
) -> Result<HierarchicalTarget> {
    if design.model_form != spec.family {
        return Err(Error::validation(format!(
            "design built for {:?} but spec family is {:?}",
            design.model_form, spec.family
        )));
    }
    if hyper.beta_loc.len() != design.n_features() {
        return Err(Error::validation(format!(
            "{} hyperparameter locations for {} features",
            hyper.beta_loc.len(),
            design.n_features()
        )));
    }
    let n_pairs = pair_index.len();
    if let Some(&bad) = design.pair_ids.iter().find(|&&p| p >= n_pairs) {
        return Err(Error::validation(format!(
            "design pair id {bad} outside the pair index (size {n_pairs})"
        )));
    }
    // Center the feature columns; the intercept hierarchy then lives on
    // alpha + beta . x_bar, and its OLS anchor shifts by the same amount.
    let n_feat = design.n_features();
    let n_rows = design.n_rows() as f64;
    let mut x_bar = vec![0.0; n_feat];
    for row in &design.features {
        for (k, x) in row.iter().enumerate() {
            x_bar[k] += x;
        }
    }
    for m in x_bar.iter_mut() {
        *m /= n_rows;
    }
    let rows: Vec<Vec<f64>> = design
        .features
        .iter()
        .map(|row| row.iter().zip(&x_bar).map(|(x, m)| x - m).collect())
        .collect();
    let mut hyper = hyper.clone();
    hyper.mu_alpha_loc += hyper.beta_loc.iter().zip(&x_bar).map(|(b, m)| b * m).sum::<f64>();
    Ok(HierarchicalTarget {
        spec: *spec,
        layout: ParameterLayout::new(spec, n_pairs),
        hyper,
        x_bar,
        rows,
        response: design.response.clone(),
        row_pair: design.pair_ids.clone(),
    })
}

/// Posterior summary of a fitted hierarchical model. The raw draws are kept
/// in memory but excluded from JSON serialization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorFit {
    pub spec: ModelSpec,
    pub layout: ParameterLayout,
    pub config: SamplerConfig,
    pub seed: u64,
    pub feature_names: Vec<String>,
    /// Posterior means of the centered per-pair intercepts.
    pub alpha_mean: Vec<f64>,
    /// alpha_ci[pair] = equal-tailed 90% interval.
    pub alpha_ci: Vec<(f64, f64)>,
    /// beta_mean[k][pair]; common coefficients repeat the shared value.
    pub beta_mean: Vec<Vec<f64>>,
    pub beta_ci: Vec<Vec<(f64, f64)>>,
    /// Population-level means used for unseen pairs.
    pub mu_alpha_mean: f64,
    pub mu_beta_mean: Vec<f64>,
    pub pair_observed: Vec<bool>,
    pub warmup_divergence_fraction: f64,
    pub sampling_divergence_fraction: f64,
    #[serde(skip)]
    pub sampler: Option<SamplerOutput>,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

fn summarize(mut draws: Vec<f64>) -> (f64, (f64, f64)) {
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
    (mean, (quantile(&draws, 0.05), quantile(&draws, 0.95)))
}

/// fit_model: run NUTS on the model's target and summarize the centered
/// per-pair parameters with posterior means and 90% credible intervals.
pub fn fit_model(
    spec: &ModelSpec,
    design: &DesignMatrix,
    hyper: &HyperParams,
    config: &SamplerConfig,
    pair_index: &PairIndex,
) -> Result<PosteriorFit> {
    let target = build_target(spec, design, hyper, pair_index)?;
    let layout = target.layout.clone();
    let x_bar = target.x_bar.clone();
    let init = vec![0.0; layout.dim];
    let output = nuts_sample(&target, config, &init)?;

    let n_pairs = layout.n_pairs;
    let n_draws = output.n_total_draws();
    if n_draws == 0 {
        return Err(Error::numerical("sampler produced no draws"));
    }

    // Per-draw coefficient for pair p (non-centering identity for varying
    // coefficients, the shared scalar otherwise).
    let beta_draw = |d: &[f64], coef: &CoefLayout, p: usize| -> f64 {
        match *coef {
            CoefLayout::Common { idx } => d[idx],
            CoefLayout::Varying { z_off, mu_idx, log_sigma_idx } => {
                d[mu_idx] + d[log_sigma_idx].exp() * d[z_off + p]
            }
        }
    };

    // The sampler's intercept is centered (absorbs beta . x_bar); undo the
    // shift per draw so summaries live on the original scale.
    let mut alpha_mean = Vec::with_capacity(n_pairs);
    let mut alpha_ci = Vec::with_capacity(n_pairs);
    for p in 0..n_pairs {
        let draws: Vec<f64> = output
            .flat_draws()
            .map(|d| {
                let centered =
                    d[layout.mu_alpha] + d[layout.log_sigma_alpha].exp() * d[layout.z_alpha + p];
                let shift: f64 = layout
                    .coefs
                    .iter()
                    .zip(&x_bar)
                    .map(|(coef, m)| beta_draw(d, coef, p) * m)
                    .sum();
                centered - shift
            })
            .collect();
        let (mean, ci) = summarize(draws);
        alpha_mean.push(mean);
        alpha_ci.push(ci);
    }

    let mut beta_mean = Vec::new();
    let mut beta_ci = Vec::new();
    let mut mu_beta_mean = Vec::new();
    for coef in &layout.coefs {
        match *coef {
            CoefLayout::Common { idx } => {
                let draws: Vec<f64> = output.flat_draws().map(|d| d[idx]).collect();
                let (mean, ci) = summarize(draws);
                beta_mean.push(vec![mean; n_pairs]);
                beta_ci.push(vec![ci; n_pairs]);
                mu_beta_mean.push(mean);
            }
            CoefLayout::Varying { z_off, mu_idx, log_sigma_idx } => {
                let mut means = Vec::with_capacity(n_pairs);
                let mut cis = Vec::with_capacity(n_pairs);
                for p in 0..n_pairs {
                    let draws: Vec<f64> = output
                        .flat_draws()
                        .map(|d| d[mu_idx] + d[log_sigma_idx].exp() * d[z_off + p])
                        .collect();
                    let (mean, ci) = summarize(draws);
                    means.push(mean);
                    cis.push(ci);
                }
                beta_mean.push(means);
                beta_ci.push(cis);
                let mu: f64 =
                    output.flat_draws().map(|d| d[mu_idx]).sum::<f64>() / n_draws as f64;
                mu_beta_mean.push(mu);
            }
        }
    }
    // Population-level intercept on the original scale, for unseen pairs.
    let mu_alpha_mean: f64 = output
        .flat_draws()
        .map(|d| {
            let shift: f64 = layout
                .coefs
                .iter()
                .zip(&x_bar)
                .map(|(coef, m)| {
                    let mu_b = match *coef {
                        CoefLayout::Common { idx } => d[idx],
                        CoefLayout::Varying { mu_idx, .. } => d[mu_idx],
                    };
                    mu_b * m
                })
                .sum();
            d[layout.mu_alpha] - shift
        })
        .sum::<f64>()
        / n_draws as f64;

    let mut pair_observed = vec![false; n_pairs];
    for &p in &design.pair_ids {
        pair_observed[p] = true;
    }

    Ok(PosteriorFit {
        spec: *spec,
        config: config.clone(),
        seed: config.seed,
        feature_names: design.feature_names.clone(),
        alpha_mean,
        alpha_ci,
        beta_mean,
        beta_ci,
        mu_alpha_mean,
        mu_beta_mean,
        pair_observed,
        warmup_divergence_fraction: output.warmup_divergence_fraction(),
        sampling_divergence_fraction: output.sampling_divergence_fraction(),
        sampler: Some(output),
        layout,
    })
}

/// posterior_predict: M-hat = exp(posterior-mean location). Pairs never
/// seen in training fall back to the common effects only.
pub fn posterior_predict(fit: &PosteriorFit, design: &DesignMatrix) -> Result<Vec<f64>> {
    if design.feature_names != fit.feature_names {
        return Err(Error::validation(format!(
            "design columns {:?} do not match fit columns {:?}",
            design.feature_names, fit.feature_names
        )));
    }
    design
        .features
        .iter()
        .zip(&design.pair_ids)
        .map(|(row, &p)| {
            if p >= fit.layout.n_pairs {
                return Err(Error::validation(format!("pair id {p} outside the fitted layout")));
            }
            let seen = fit.pair_observed[p];
            let mut mu = if seen { fit.alpha_mean[p] } else { fit.mu_alpha_mean };
            for (k, x) in row.iter().enumerate() {
                let b = if seen { fit.beta_mean[k][p] } else { fit.mu_beta_mean[k] };
                mu += b * x;
            }
            Ok(mu.exp())
        })
        .collect()
}

/// Per-coefficient interval collections keyed by feature, the common input to
/// sign-agreement reporting for both Bayesian and unpooled fits.
#[derive(Debug, Clone)]
pub struct CoefficientIntervals {
    pub feature_names: Vec<String>,
    /// intervals[k] = one (lo, hi) interval per pair that has one.
    pub intervals: Vec<Vec<(f64, f64)>>,
}

impl PosteriorFit {
    /// 90% credible intervals per coefficient over pairs observed in
    /// training (the intercept is excluded).
    pub fn coefficient_intervals(&self) -> CoefficientIntervals {
        let intervals = self
            .beta_ci
            .iter()
            .map(|cis| {
                cis.iter()
                    .zip(&self.pair_observed)
                    .filter(|(_, &seen)| seen)
                    .map(|(ci, _)| *ci)
                    .collect()
            })
            .collect();
        CoefficientIntervals { feature_names: self.feature_names.clone(), intervals }
    }

    /// Per-pair posterior-mean parameter vectors (intercept plus every
    /// varying coefficient) for the clustering analysis, restricted to
    /// observed pairs. Errors for intercept-only fits: a single varying
    /// dimension has no directional structure worth clustering.
    pub fn pair_vectors(&self) -> Result<Vec<crate::analysis::PairVector>> {
        let varying: Vec<usize> = self
            .layout
            .coefs
            .iter()
            .enumerate()
            .filter(|(_, c)| matches!(c, CoefLayout::Varying { .. }))
            .map(|(k, _)| k)
            .collect();
        if varying.is_empty() {
            return Err(Error::validation(format!(
                "{} varies only the intercept; clustering needs a model with \
                 varying coefficients (all-parameters variant)",
                self.spec.name()
            )));
        }
        Ok((0..self.layout.n_pairs)
            .filter(|&p| self.pair_observed[p])
            .map(|p| crate::analysis::PairVector {
                pair_id: p,
                values: std::iter::once(self.alpha_mean[p])
                    .chain(varying.iter().map(|&k| self.beta_mean[k][p]))
                    .collect(),
            })
            .collect())
    }

    /// Pair-level CSV of posterior parameter means (analysis-module input).
    pub fn write_pair_means_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        write!(w, "pair_id,alpha")?;
        for name in &self.feature_names {
            write!(w, ",{name}")?;
        }
        writeln!(w)?;
        for p in 0..self.layout.n_pairs {
            if !self.pair_observed[p] {
                continue;
            }
            write!(w, "{p},{}", self.alpha_mean[p])?;
            for k in 0..self.feature_names.len() {
                write!(w, ",{}", self.beta_mean[k][p])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

impl UnpooledFits {
    pub fn to_coefficient_intervals(&self, feature_names: &[String]) -> CoefficientIntervals {
        let intervals = (0..feature_names.len())
            .map(|k| self.coefficient_intervals(k))
            .collect();
        CoefficientIntervals { feature_names: feature_names.to_vec(), intervals }
    }

    /// Number of pairs carrying a usable fit.
    pub fn n_fitted(&self) -> usize {
        self.fits
            .values()
            .filter(|e| matches!(e, UnpooledEntry::Fit { .. }))
            .count()
    }
}

/// sign_agreement: share of pairs whose interval endpoints both carry
/// the sign the level-form model implies for that coefficient.
pub fn sign_agreement(
    intervals: &CoefficientIntervals,
    family: ModelForm,
) -> Result<Vec<(String, f64)>> {
    let signs = family.expected_signs();
    if signs.len() != intervals.intervals.len() {
        return Err(Error::validation(format!(
            "{} interval sets for {} expected signs",
            intervals.intervals.len(),
            signs.len()
        )));
    }
    Ok(intervals
        .intervals
        .iter()
        .zip(&signs)
        .zip(&intervals.feature_names)
        .map(|((cis, &sign), name)| {
            let total = cis.len();
            let agree = cis
                .iter()
                .filter(|(lo, hi)| {
                    if sign > 0.0 {
                        *lo > 0.0 && *hi > 0.0
                    } else {
                        *lo < 0.0 && *hi < 0.0
                    }
                })
                .count();
            let pct = if total == 0 { f64::NAN } else { 100.0 * agree as f64 / total as f64 };
            (name.clone(), pct)
        })
        .collect())
}

/// Upsampling mode: replicate each pair's training rows `factor` times,
/// capped at `cap` rows per pair.
pub fn upsample_design(design: &DesignMatrix, factor: usize, cap: usize) -> DesignMatrix {
    let mut by_pair: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (row, &p) in design.pair_ids.iter().enumerate() {
        by_pair.entry(p).or_default().push(row);
    }
    let mut out = DesignMatrix {
        model_form: design.model_form,
        feature_names: design.feature_names.clone(),
        features: Vec::new(),
        response: Vec::new(),
        pair_ids: Vec::new(),
        years: Vec::new(),
        distances_km: Vec::new(),
    };
    for rows in by_pair.values() {
        let mut taken = 0;
        'rep: for _ in 0..factor {
            for &r in rows {
                if taken >= cap {
                    break 'rep;
                }
                out.features.push(design.features[r].clone());
                out.response.push(design.response[r]);
                out.pair_ids.push(design.pair_ids[r]);
                out.years.push(design.years[r]);
                out.distances_km.push(design.distances_km[r]);
                taken += 1;
            }
        }
    }
    out
}

/// Ground-truth generating configuration for synthetic panels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationTruth {
    pub family: ModelForm,
    /// Common coefficient means.
    pub beta: Vec<f64>,
    /// Pair-level intercept spread.
    pub sigma_alpha: f64,
    /// Pair-level coefficient spreads (one per feature).
    pub sigma_beta: Vec<f64>,
    /// Likelihood scale sigma_ij (shared across pairs).
    pub residual_sigma: f64,
    /// Target mean of log flows; the intercept location is solved to hit it.
    pub mean_log_flow: f64,
}

impl SimulationTruth {
    pub fn gravity_default() -> Self {
        SimulationTruth {
            family: ModelForm::Gravity,
            beta: vec![1.0, 1.0, -1.0],
            sigma_alpha: 1.0,
            sigma_beta: vec![0.0, 0.0, 0.0],
            residual_sigma: 0.3,
            mean_log_flow: 5.0,
        }
    }
}

/// Everything needed to score a fit against the generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub truth: SimulationTruth,
    /// Resolved intercept location after centering to `mean_log_flow`.
    pub mu_alpha: f64,
    /// Per-pair centered parameters in pair-index order.
    pub pair_alpha: Vec<f64>,
    pub pair_beta: Vec<Vec<f64>>,
}

/// simulate_panel: random geography, log-uniform populations with a slow
/// multiplicative drift, pair parameters drawn from the hierarchy, and flows
/// M = exp(y) with y ~ TN+(mu_ijt, sigma), emitted as degenerate CIs [M, M].
pub fn simulate_panel(
    truth: &SimulationTruth,
    n_regions: usize,
    years: &[i32],
    seed: u64,
) -> Result<(FlowPanel, GroundTruth)> {
    if n_regions < 3 {
        return Err(Error::validation("need at least 3 regions"));
    }
    if truth.sigma_beta.len() != truth.family.n_features() {
        return Err(Error::validation("sigma_beta length must match the family's feature count"));
    }
    if years.is_empty() {
        return Err(Error::validation("need at least one year"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let regions: Vec<Region> = (0..n_regions)
        .map(|k| Region {
            id: format!("R{k:03}"),
            name: format!("Region {k}"),
            capital_lat: rng.gen_range(25.0..48.0),
            capital_lon: rng.gen_range(-122.0..-70.0),
            land_area_sqmi: rng.gen_range(1.0e4..2.0e5),
        })
        .collect();
    let pair_index = crate::data::build_pair_index(&regions)?;

    let mut populations: HashMap<(usize, i32), f64> = HashMap::new();
    let mut covariates: BTreeMap<String, HashMap<(usize, i32), f64>> = BTreeMap::new();
    for r in 0..n_regions {
        let mut pop = (rng.gen_range(1.0e5_f64.ln()..5.0e6_f64.ln())).exp();
        let housing_base: f64 = rng.gen_range(50.0..300.0);
        for &t in years {
            let shock: f64 = rng.sample(StandardNormal);
            pop *= (0.02 * shock).exp();
            populations.insert((r, t), pop);
            let hshock: f64 = rng.sample(StandardNormal);
            covariates
                .entry("housing_index_pct".into())
                .or_default()
                .insert((r, t), housing_base * (0.05 * hshock).exp());
            covariates
                .entry("disaster_cost_busd".into())
                .or_default()
                .insert((r, t), rng.gen_range(0.1..20.0));
        }
    }

    let mut distances = vec![vec![0.0; n_regions]; n_regions];
    for i in 0..n_regions {
        for j in 0..n_regions {
            if i != j {
                distances[i][j] = crate::data::great_circle_km(
                    (regions[i].capital_lat, regions[i].capital_lon),
                    (regions[j].capital_lat, regions[j].capital_lon),
                )?;
            }
        }
    }

    let feature_row = |i: usize, j: usize, t: i32| -> Vec<f64> {
        let p_i = populations[&(i, t)];
        let p_j = populations[&(j, t)];
        match truth.family {
            ModelForm::Gravity => vec![p_i.ln(), p_j.ln(), distances[i][j].ln()],
            ModelForm::Radiation => {
                let mut s = 0.0;
                for k in 0..n_regions {
                    if k != i && k != j && distances[i][k] < distances[i][j] {
                        s += populations[&(k, t)];
                    }
                }
                vec![p_i.ln(), p_j.ln(), (p_i + s).ln(), (p_i + p_j + s).ln()]
            }
        }
    };

    // Solve the intercept location so mean log flow lands near the target.
    let first_year = years[0];
    let mean_dot: f64 = pair_index
        .iter()
        .map(|(_, (i, j))| {
            feature_row(i, j, first_year)
                .iter()
                .zip(&truth.beta)
                .map(|(x, b)| x * b)
                .sum::<f64>()
        })
        .sum::<f64>()
        / pair_index.len() as f64;
    let mu_alpha = truth.mean_log_flow - mean_dot;

    let mut pair_alpha = Vec::with_capacity(pair_index.len());
    let mut pair_beta = Vec::with_capacity(pair_index.len());
    for _ in 0..pair_index.len() {
        let za: f64 = rng.sample(StandardNormal);
        pair_alpha.push(mu_alpha + truth.sigma_alpha * za);
        let betas: Vec<f64> = truth
            .beta
            .iter()
            .zip(&truth.sigma_beta)
            .map(|(b, s)| {
                let z: f64 = rng.sample(StandardNormal);
                b + s * z
            })
            .collect();
        pair_beta.push(betas);
    }

    let mut observations = Vec::new();
    for (pid, (i, j)) in pair_index.iter() {
        for &t in years {
            let x = feature_row(i, j, t);
            let mu: f64 = pair_alpha[pid]
                + x.iter().zip(&pair_beta[pid]).map(|(x, b)| x * b).sum::<f64>();
            let y = draw_truncated_normal(&mut rng, mu, truth.residual_sigma);
            let m = y.exp();
            observations.push(FlowObservation {
                origin: i,
                dest: j,
                year: t,
                flow_lo: m,
                flow_hi: m,
            });
        }
    }

    let panel = FlowPanel::new(regions, observations, populations, covariates)?;
    Ok((
        panel,
        GroundTruth { seed, truth: truth.clone(), mu_alpha, pair_alpha, pair_beta },
    ))
}
