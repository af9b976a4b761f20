//! Pooled and per-pair ordinary least squares for the log-linear gravity and
//! radiation forms.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::data::PairIndex;
use crate::error::{Error, Result};
use crate::features::DesignMatrix;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OlsFit {
    /// "intercept" followed by the design's feature names.
    pub coef_names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Residual standard deviation, sqrt(RSS / (n - rank)).
    pub sigma_hat: f64,
    pub r_squared: f64,
    pub n_obs: usize,
    /// Effective column rank of the design (== column count unless the
    /// minimum-norm path was taken).
    pub rank: usize,
}

/// Per-pair OLS with 90% confidence intervals, or a marker when the pair has
/// too few observations to fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum UnpooledEntry {
    Fit { fit: OlsFit, ci: Vec<(f64, f64)> },
    InsufficientData { n_obs: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UnpooledFits {
    pub ci_level: f64,
    pub fits: HashMap<usize, UnpooledEntry>,
}

impl UnpooledFits {
    /// 90% intervals per fitted pair for coefficient `k` (0 = first feature,
    /// the intercept is excluded).
    pub fn coefficient_intervals(&self, k: usize) -> Vec<(f64, f64)> {
        let mut pairs: Vec<_> = self.fits.iter().collect();
        pairs.sort_by_key(|(pid, _)| **pid);
        pairs
            .into_iter()
            .filter_map(|(_, entry)| match entry {
                UnpooledEntry::Fit { ci, .. } => Some(ci[k + 1]),
                UnpooledEntry::InsufficientData { .. } => None,
            })
            .collect()
    }
}

/// Least squares via SVD (no explicit inverse of X'X). Returns the
/// minimum-norm solution when `allow_rank_deficient`, otherwise errors naming
/// the first dependent column.
fn solve_ls(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    names: &[String],
    allow_rank_deficient: bool,
) -> Result<OlsFit> {
    let n = x.nrows();
    let p = x.ncols();
    let svd = x.clone().svd(true, true);
    let max_sv = svd.singular_values.max();
    let tol = max_sv * (n.max(p) as f64) * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if rank < p && !allow_rank_deficient {
        // With plain QR/SVD the dependent column is not uniquely identified;
        // report the full candidate set.
        return Err(Error::numerical(format!(
            "design is rank deficient (rank {rank} < {p} columns): collinear among {:?}",
            names
        )));
    }
    if n <= rank {
        return Err(Error::validation(format!(
            "need more observations ({n}) than effective parameters ({rank})"
        )));
    }
    let u = svd.u.as_ref().expect("svd u");
    let vt = svd.v_t.as_ref().expect("svd v_t");
    let uty = u.transpose() * y;
    let mut scaled = DVector::zeros(p.min(n));
    for i in 0..scaled.len() {
        let s = svd.singular_values[i];
        scaled[i] = if s > tol { uty[i] / s } else { 0.0 };
    }
    let beta = vt.transpose() * scaled;

    let fitted = x * &beta;
    let resid = y - &fitted;
    let rss: f64 = resid.iter().map(|r| r * r).sum();
    let dof = (n - rank) as f64;
    let sigma2 = rss / dof;
    // diag of pinv(X'X) = V diag(1/s^2) V'.
    let mut se = vec![0.0; p];
    for j in 0..p {
        let mut acc = 0.0;
        for i in 0..svd.singular_values.len() {
            let s = svd.singular_values[i];
            if s > tol {
                let v_ji = vt[(i, j)];
                acc += v_ji * v_ji / (s * s);
            }
        }
        se[j] = (sigma2 * acc).sqrt();
    }
    let ybar = y.iter().sum::<f64>() / n as f64;
    let sst: f64 = y.iter().map(|v| (v - ybar).powi(2)).sum();
    let r_squared = if sst > 0.0 { 1.0 - rss / sst } else { f64::NAN };
    Ok(OlsFit {
        coef_names: names.to_vec(),
        coefficients: beta.iter().copied().collect(),
        std_errors: se,
        sigma_hat: sigma2.sqrt(),
        r_squared,
        n_obs: n,
        rank,
    })
}

fn with_intercept(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    let k = rows.first().map_or(0, |r| r.len());
    DMatrix::from_fn(n, k + 1, |r, c| if c == 0 { 1.0 } else { rows[r][c - 1] })
}

/// Low-level OLS of `y` on an intercept plus the given feature rows.
pub fn ols(rows: &[Vec<f64>], y: &[f64], feature_names: &[String]) -> Result<OlsFit> {
    let mut names = vec!["intercept".to_string()];
    names.extend_from_slice(feature_names);
    solve_ls(&with_intercept(rows), &DVector::from_column_slice(y), &names, false)
}

/// ols_fit: pooled OLS of log flow on the design's log features.
pub fn ols_fit(design: &DesignMatrix) -> Result<OlsFit> {
    ols(&design.features, &design.response, &design.feature_names)
}

/// unpooled_fit: independent OLS per pair with t-based confidence
/// intervals. Pairs with fewer than p + 1 observations are flagged. Pairs
/// whose within-pair design is rank deficient (e.g. constant distance) get
/// the minimum-norm solution, mirroring pseudo-inverse-based tooling.
pub fn unpooled_fit(
    design: &DesignMatrix,
    pair_index: &PairIndex,
    ci_level: f64,
) -> Result<UnpooledFits> {
    if !(0.0 < ci_level && ci_level < 1.0) {
        return Err(Error::validation(format!("ci_level must be in (0,1), got {ci_level}")));
    }
    let p = design.n_features() + 1;
    let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
    for (row, &pid) in design.pair_ids.iter().enumerate() {
        groups.entry(pid).or_default().push(row);
    }
    let mut names = vec!["intercept".to_string()];
    names.extend_from_slice(&design.feature_names);

    let fits: HashMap<usize, UnpooledEntry> = groups
        .into_par_iter()
        .map(|(pid, rows)| {
            let entry = if rows.len() < p + 1 {
                UnpooledEntry::InsufficientData { n_obs: rows.len() }
            } else {
                let xr: Vec<Vec<f64>> = rows.iter().map(|&r| design.features[r].clone()).collect();
                let yr: Vec<f64> = rows.iter().map(|&r| design.response[r]).collect();
                match solve_ls(&with_intercept(&xr), &DVector::from_column_slice(&yr), &names, true)
                {
                    Ok(fit) => {
                        let dof = (fit.n_obs as f64 - fit.rank as f64).max(1.0);
                        let t = StudentsT::new(0.0, 1.0, dof)
                            .expect("valid dof")
                            .inverse_cdf(0.5 + ci_level / 2.0);
                        let ci = fit
                            .coefficients
                            .iter()
                            .zip(&fit.std_errors)
                            .map(|(b, s)| (b - t * s, b + t * s))
                            .collect();
                        UnpooledEntry::Fit { fit, ci }
                    }
                    Err(_) => UnpooledEntry::InsufficientData { n_obs: rows.len() },
                }
            };
            (pid, entry)
        })
        .collect();
    if let Some(bad) = fits.keys().find(|&&pid| pid >= pair_index.len()) {
        return Err(Error::validation(format!(
            "design references pair id {bad} outside the pair index"
        )));
    }
    Ok(UnpooledFits { ci_level, fits })
}

/// predict_classical: M-hat = exp(intercept + sum beta_k x_k).
pub fn predict_classical(fit: &OlsFit, design: &DesignMatrix) -> Result<Vec<f64>> {
    let mut expected = vec!["intercept".to_string()];
    expected.extend_from_slice(&design.feature_names);
    if fit.coef_names != expected {
        return Err(Error::validation(format!(
            "design columns {:?} do not match fit columns {:?}",
            expected, fit.coef_names
        )));
    }
    Ok(design
        .features
        .iter()
        .map(|row| {
            let mut mu = fit.coefficients[0];
            for (b, x) in fit.coefficients[1..].iter().zip(row) {
                mu += b * x;
            }
            mu.exp()
        })
        .collect())
}
