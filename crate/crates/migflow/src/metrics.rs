//! Out-of-sample evaluation: MAE, R², Common Part of Commuters, and its
//! distance-binned variant, aggregated over sampled flow paths.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_lengths(observed: &[f64], predicted: &[f64]) -> Result<()> {
    if observed.len() != predicted.len() {
        return Err(Error::validation(format!(
            "length mismatch: {} observed vs {} predicted",
            observed.len(),
            predicted.len()
        )));
    }
    if observed.is_empty() {
        return Err(Error::validation("empty input"));
    }
    Ok(())
}

/// mae: mean absolute error in level (person-count) space.
pub fn mae(observed: &[f64], predicted: &[f64]) -> Result<f64> {
    check_lengths(observed, predicted)?;
    Ok(observed
        .iter()
        .zip(predicted)
        .map(|(m, p)| (m - p).abs())
        .sum::<f64>()
        / observed.len() as f64)
}

/// r2: 1 - SSE/SST in level space; may be negative.
pub fn r2(observed: &[f64], predicted: &[f64]) -> Result<f64> {
    check_lengths(observed, predicted)?;
    let mean = observed.iter().sum::<f64>() / observed.len() as f64;
    let sst: f64 = observed.iter().map(|m| (m - mean).powi(2)).sum();
    if sst <= 0.0 {
        return Err(Error::validation("observed vector is constant"));
    }
    let sse: f64 = observed.iter().zip(predicted).map(|(m, p)| (m - p).powi(2)).sum();
    Ok(1.0 - sse / sst)
}

/// cpc: 2 sum(min) / (sum + sum), the Common Part of Commuters.
pub fn cpc(observed: &[f64], predicted: &[f64]) -> Result<f64> {
    check_lengths(observed, predicted)?;
    if observed.iter().chain(predicted).any(|&v| v < 0.0) {
        return Err(Error::validation("flows must be nonnegative"));
    }
    let total: f64 = observed.iter().sum::<f64>() + predicted.iter().sum::<f64>();
    if total == 0.0 {
        return Err(Error::validation("both flow totals are zero"));
    }
    let overlap: f64 = observed.iter().zip(predicted).map(|(m, p)| m.min(*p)).sum();
    Ok(2.0 * overlap / total)
}

/// Flow-weighted histogram over half-open 2 km distance bins [2k-2, 2k).
fn distance_histogram(flows: &[f64], distances: &[f64]) -> Result<Vec<f64>> {
    let max_d = distances.iter().copied().fold(0.0_f64, f64::max);
    let n_bins = (max_d / 2.0).floor() as usize + 1;
    let mut bins = vec![0.0; n_bins];
    for (&m, &d) in flows.iter().zip(distances) {
        if !(d > 0.0) {
            return Err(Error::validation(format!("distance must be positive, got {d}")));
        }
        bins[(d / 2.0).floor() as usize] += m;
    }
    Ok(bins)
}

/// cpc_d: CPC applied to flow-weighted 2 km distance histograms.
pub fn cpc_d(
    observed: &[f64],
    observed_distances: &[f64],
    predicted: &[f64],
    predicted_distances: &[f64],
) -> Result<f64> {
    check_lengths(observed, predicted)?;
    check_lengths(observed_distances, predicted_distances)?;
    let mut h_obs = distance_histogram(observed, observed_distances)?;
    let mut h_pred = distance_histogram(predicted, predicted_distances)?;
    let n = h_obs.len().max(h_pred.len());
    h_obs.resize(n, 0.0);
    h_pred.resize(n, 0.0);
    cpc(&h_obs, &h_pred)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MetricSet {
    pub mae: f64,
    pub r2: f64,
    pub cpc: f64,
    pub cpc_d: f64,
}

/// Observed/predicted flows for one sampled path, with the pair distance of
/// each entry (km).
#[derive(Debug, Clone)]
pub struct PathPrediction {
    pub path_id: usize,
    pub observed: Vec<f64>,
    pub predicted: Vec<f64>,
    pub distances_km: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub path_ids: Vec<usize>,
    pub per_path: Vec<MetricSet>,
    pub mean: MetricSet,
    /// 1.96 sd / sqrt(n_paths), the normal-approximation 95% half-width.
    pub half_width_95: MetricSet,
}

fn mean_and_half_width(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * var.sqrt() / n.sqrt())
}

/// evaluate: per-path metrics plus across-path mean and 95% band.
pub fn evaluate(model: &str, paths: &[PathPrediction]) -> Result<EvalReport> {
    if paths.is_empty() {
        return Err(Error::validation("no paths to evaluate"));
    }
    let mut per_path = Vec::with_capacity(paths.len());
    for p in paths {
        per_path.push(MetricSet {
            mae: mae(&p.observed, &p.predicted)?,
            r2: r2(&p.observed, &p.predicted)?,
            cpc: cpc(&p.observed, &p.predicted)?,
            cpc_d: cpc_d(&p.observed, &p.distances_km, &p.predicted, &p.distances_km)?,
        });
    }
    let collect = |f: fn(&MetricSet) -> f64| -> Vec<f64> { per_path.iter().map(f).collect() };
    let (mae_m, mae_h) = mean_and_half_width(&collect(|m| m.mae));
    let (r2_m, r2_h) = mean_and_half_width(&collect(|m| m.r2));
    let (cpc_m, cpc_h) = mean_and_half_width(&collect(|m| m.cpc));
    let (cpcd_m, cpcd_h) = mean_and_half_width(&collect(|m| m.cpc_d));
    Ok(EvalReport {
        model: model.to_string(),
        path_ids: paths.iter().map(|p| p.path_id).collect(),
        per_path,
        mean: MetricSet { mae: mae_m, r2: r2_m, cpc: cpc_m, cpc_d: cpcd_m },
        half_width_95: MetricSet { mae: mae_h, r2: r2_h, cpc: cpc_h, cpc_d: cpcd_h },
    })
}

/// Render reports as a Markdown table (one row per model).
pub fn markdown_table(reports: &[EvalReport]) -> String {
    let mut out = String::from("| Model | MAE | R² | CPC | CPC_D |\n|---|---|---|---|---|\n");
    for r in reports {
        out.push_str(&format!(
            "| {} | {:.1} ± {:.1} | {:.3} ± {:.3} | {:.3} ± {:.3} | {:.3} ± {:.3} |\n",
            r.model,
            r.mean.mae,
            r.half_width_95.mae,
            r.mean.r2,
            r.half_width_95.r2,
            r.mean.cpc,
            r.half_width_95.cpc,
            r.mean.cpc_d,
            r.half_width_95.cpc_d,
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mae_hand_values() {
        assert_eq!(mae(&[10.0, 20.0], &[10.0, 20.0]).unwrap(), 0.0);
        assert_eq!(mae(&[10.0, 20.0], &[12.0, 16.0]).unwrap(), 3.0);
        assert!(mae(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn r2_hand_values() {
        assert_eq!(r2(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(r2(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap(), 0.0);
        assert!(r2(&[2.0, 2.0], &[1.0, 3.0]).is_err());
    }

    #[test]
    fn cpc_hand_values() {
        assert_eq!(cpc(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), 1.0);
        assert_eq!(cpc(&[5.0, 0.0], &[0.0, 5.0]).unwrap(), 0.0);
        assert_eq!(cpc(&[2.0, 2.0], &[1.0, 3.0]).unwrap(), 0.75);
        assert!(cpc(&[0.0], &[0.0]).is_err());
    }

    #[test]
    fn cpc_symmetry_and_scale() {
        let a = [1.0, 7.0, 2.5];
        let b = [0.5, 6.0, 4.0];
        assert_eq!(cpc(&a, &b).unwrap(), cpc(&b, &a).unwrap());
        let scaled_a: Vec<f64> = a.iter().map(|x| x * 3.7).collect();
        let scaled_b: Vec<f64> = b.iter().map(|x| x * 3.7).collect();
        assert!((cpc(&a, &b).unwrap() - cpc(&scaled_a, &scaled_b).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn cpc_d_binning_oracle() {
        // Distances 1.5, 3.0, 3.9 km: bin 1 holds pair 1, bin 2 holds pairs
        // 2 and 3.
        let obs = [10.0, 5.0, 5.0];
        let dist = [1.5, 3.0, 3.9];
        let pred = [8.0, 6.0, 6.0];
        let got = cpc_d(&obs, &dist, &pred, &dist).unwrap();
        // Hand-built histograms: obs [10, 10], pred [8, 12].
        let oracle = cpc(&[10.0, 10.0], &[8.0, 12.0]).unwrap();
        assert!((got - oracle).abs() < 1e-15);
        assert_eq!(cpc_d(&obs, &dist, &obs, &dist).unwrap(), 1.0);
    }

    #[test]
    fn cpc_d_boundary_rule() {
        // Exactly 2.0 km falls in the second bin [2, 4).
        let a = cpc_d(&[1.0, 1.0], &[1.0, 2.0], &[1.0, 1.0], &[1.0, 3.9]).unwrap();
        assert_eq!(a, 1.0);
        let b = cpc_d(&[1.0], &[2.0], &[1.0], &[1.9]).unwrap();
        assert_eq!(b, 0.0);
    }

    #[test]
    fn cpc_d_disjoint_bins() {
        let got = cpc_d(&[3.0], &[1.0], &[3.0], &[11.0]).unwrap();
        assert_eq!(got, 0.0);
    }

    #[test]
    fn evaluate_bands() {
        let p = |id: usize, pred: f64| PathPrediction {
            path_id: id,
            observed: vec![10.0, 20.0],
            predicted: vec![pred, 20.0],
            distances_km: vec![1.0, 3.0],
        };
        let single = evaluate("m", &[p(0, 10.0)]).unwrap();
        assert_eq!(single.half_width_95.mae, 0.0);
        let same = evaluate("m", &[p(0, 12.0), p(1, 12.0), p(2, 12.0)]).unwrap();
        assert_eq!(same.half_width_95.mae, 0.0);
        assert_eq!(same.mean.mae, 1.0);

        // Spreadsheet-style recomputation over unequal paths.
        let rep = evaluate("m", &[p(0, 10.0), p(1, 12.0), p(2, 14.0)]).unwrap();
        let maes = [0.0, 1.0, 2.0];
        let mean = 1.0;
        let sd = (maes.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 2.0).sqrt();
        assert!((rep.mean.mae - mean).abs() < 1e-12);
        assert!((rep.half_width_95.mae - 1.96 * sd / 3.0_f64.sqrt()).abs() < 1e-12);
    }
}
