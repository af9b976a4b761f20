//! Log-feature design matrices for the gravity and radiation regression
//! forms, the intervening-population term, and the logistic z-score scaler.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{FlowPanel, PairIndex, SampledPath};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelForm {
    Gravity,
    Radiation,
}

impl ModelForm {
    pub fn feature_names(self) -> Vec<String> {
        match self {
            ModelForm::Gravity => vec![
                "log_pop_origin".into(),
                "log_pop_dest".into(),
                "log_distance".into(),
            ],
            ModelForm::Radiation => vec![
                "log_pop_origin".into(),
                "log_pop_dest".into(),
                "log_pop_origin_plus_s".into(),
                "log_pop_both_plus_s".into(),
            ],
        }
    }

    pub fn n_features(self) -> usize {
        match self {
            ModelForm::Gravity => 3,
            ModelForm::Radiation => 4,
        }
    }

    /// Expected coefficient signs implied by the level-form models:
    /// populations enter positively, distance and the intervening-opportunity
    /// denominators negatively.
    pub fn expected_signs(self) -> Vec<f64> {
        match self {
            ModelForm::Gravity => vec![1.0, 1.0, -1.0],
            ModelForm::Radiation => vec![1.0, 1.0, -1.0, -1.0],
        }
    }
}

/// Which flow values feed the response column.
#[derive(Debug, Clone, Copy)]
pub enum FlowSource<'a> {
    /// CI midpoints from the panel.
    Midpoint,
    /// A sampled plausible path (zeros already dropped).
    Path(&'a SampledPath),
}

/// Per-observation log-feature rows plus the log-flow response.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignMatrix {
    pub model_form: ModelForm,
    pub feature_names: Vec<String>,
    /// Row-major, n_rows x n_features.
    pub features: Vec<Vec<f64>>,
    /// log M per row (natural log).
    pub response: Vec<f64>,
    pub pair_ids: Vec<usize>,
    pub years: Vec<i32>,
    pub distances_km: Vec<f64>,
}

impl DesignMatrix {
    pub fn n_rows(&self) -> usize {
        self.features.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Observed flows in level space (exp of the response).
    pub fn flows(&self) -> Vec<f64> {
        self.response.iter().map(|y| y.exp()).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "pair_id,year")?;
        for name in &self.feature_names {
            write!(w, ",{name}")?;
        }
        writeln!(w, ",log_flow")?;
        for row in 0..self.n_rows() {
            write!(w, "{},{}", self.pair_ids[row], self.years[row])?;
            for x in &self.features[row] {
                write!(w, ",{x}")?;
            }
            writeln!(w, ",{}", self.response[row])?;
        }
        Ok(())
    }
}

/// intervening_population: total population at year `t` of regions
/// strictly closer to `i` than `j` is, excluding `i` and `j` themselves.
pub fn intervening_population(
    i: usize,
    j: usize,
    t: i32,
    panel: &FlowPanel,
    distances: &[Vec<f64>],
) -> Result<f64> {
    let d_ij = distances[i][j];
    let mut s = 0.0;
    for k in 0..panel.n_regions() {
        if k != i && k != j && distances[i][k] < d_ij {
            s += panel.population(k, t)?;
        }
    }
    Ok(s)
}

/// build_design: log-feature rows for one model form, in canonical
/// (pair index, year) order. Natural log throughout.
pub fn build_design(
    panel: &FlowPanel,
    pair_index: &PairIndex,
    distances: &[Vec<f64>],
    form: ModelForm,
    source: FlowSource<'_>,
    years: Option<&[i32]>,
) -> Result<DesignMatrix> {
    let mut rows: Vec<(usize, i32, f64)> = match source {
        FlowSource::Midpoint => panel
            .observations
            .iter()
            .map(|o| {
                let pid = pair_index.index(o.origin, o.dest).ok_or_else(|| {
                    Error::validation(format!(
                        "pair ({}, {}) missing from pair index",
                        panel.regions[o.origin].id, panel.regions[o.dest].id
                    ))
                })?;
                Ok((pid, o.year, 0.5 * (o.flow_lo + o.flow_hi)))
            })
            .collect::<Result<_>>()?,
        FlowSource::Path(path) => path
            .flows
            .iter()
            .map(|&(i, j, t, m)| {
                let pid = pair_index.index(i, j).ok_or_else(|| {
                    Error::validation(format!(
                        "pair ({}, {}) missing from pair index",
                        panel.regions[i].id, panel.regions[j].id
                    ))
                })?;
                Ok((pid, t, m))
            })
            .collect::<Result<_>>()?,
    };
    if let Some(keep) = years {
        rows.retain(|(_, t, _)| keep.contains(t));
    }
    rows.sort_by_key(|&(pid, t, _)| (pid, t));

    let mut features = Vec::with_capacity(rows.len());
    let mut response = Vec::with_capacity(rows.len());
    let mut pair_ids = Vec::with_capacity(rows.len());
    let mut years_out = Vec::with_capacity(rows.len());
    let mut distances_km = Vec::with_capacity(rows.len());
    for (row_no, &(pid, t, flow)) in rows.iter().enumerate() {
        let (i, j) = pair_index.pair(pid);
        let check = |name: &str, v: f64| -> Result<f64> {
            if v > 0.0 {
                Ok(v.ln())
            } else {
                Err(Error::validation(format!(
                    "row {row_no} (pair {}->{}, year {t}): nonpositive {name} = {v}",
                    panel.regions[i].id, panel.regions[j].id
                )))
            }
        };
        let p_i = panel.population(i, t)?;
        let p_j = panel.population(j, t)?;
        let row = match form {
            ModelForm::Gravity => vec![
                check("origin population", p_i)?,
                check("destination population", p_j)?,
                check("distance", distances[i][j])?,
            ],
            ModelForm::Radiation => {
                let s = intervening_population(i, j, t, panel, distances)?;
                vec![
                    check("origin population", p_i)?,
                    check("destination population", p_j)?,
                    check("origin population + S", p_i + s)?,
                    check("populations + S", p_i + p_j + s)?,
                ]
            }
        };
        response.push(check("flow", flow)?);
        features.push(row);
        pair_ids.push(pid);
        years_out.push(t);
        distances_km.push(distances[i][j]);
    }
    Ok(DesignMatrix {
        model_form: form,
        feature_names: form.feature_names(),
        features,
        response,
        pair_ids,
        years: years_out,
        distances_km,
    })
}

/// logistic_zscore: 1 / (1 + exp(-(x - mean)/sd)), mapping to (0, 1).
pub fn logistic_zscore(x: f64, mean: f64, sd: f64) -> Result<f64> {
    if !(sd > 0.0) {
        return Err(Error::validation(format!("sd must be positive, got {sd}")));
    }
    Ok(1.0 / (1.0 + (-(x - mean) / sd).exp()))
}
