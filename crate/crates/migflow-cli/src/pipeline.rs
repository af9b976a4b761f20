//! The five pipeline stages. Each stage writes only under its own
//! subdirectory of `out_dir` and re-reading another stage's artifacts is the
//! only coupling between them.

use std::path::{Path, PathBuf};
use std::time::Instant;

use migflow::analysis::{agglomerative_cluster, conditional_covariate_report, ClusterReport};
use migflow::bayes::{
    count_parameters, fit_model, posterior_predict, sign_agreement, upsample_design, HyperParams,
    PosteriorFit, SimulationTruth,
};
use migflow::classical::{ols_fit, predict_classical, OlsFit};
use migflow::data::{build_pair_index, load_panel, sample_flow_paths, FlowPanel, PairIndex};
use migflow::features::{build_design, FlowSource, ModelForm};
use migflow::metrics::{evaluate, markdown_table, EvalReport, PathPrediction};
use migflow::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ModelChoice, RunConfig};

/// One fitted model on one sampled path, plus the resolved config that
/// produced it. Deterministic payload: identical seeds give identical bytes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitArtifact {
    pub config: RunConfig,
    pub model: ModelChoice,
    pub path_id: usize,
    pub sampler_seed: u64,
    pub classical: Option<OlsFit>,
    pub bayes: Option<PosteriorFit>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalArtifact {
    pub config: RunConfig,
    pub reports: Vec<EvalReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterArtifact {
    pub config: RunConfig,
    pub model: ModelChoice,
    pub path_id: usize,
    pub k: usize,
    /// (origin id, destination id) per clustered pair, aligned with the
    /// report's assignment vector.
    pub pair_labels: Vec<(String, String)>,
    pub report: Option<ClusterReport>,
    /// Present when covariate tests were skipped (e.g. k != 2).
    pub notice: Option<String>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::validation(format!(
            "missing artifact {}: run the producing stage first ({e})",
            path.display()
        ))
    })?;
    Ok(serde_json::from_str(&text)?)
}

fn fit_path(out_dir: &Path, model: ModelChoice, path_id: usize) -> PathBuf {
    out_dir.join("fits").join(format!("{model}_path{path_id}.json"))
}

pub struct LoadedData {
    pub panel: FlowPanel,
    pub pair_index: PairIndex,
    pub distances: Vec<Vec<f64>>,
}

pub fn load_data(config: &RunConfig) -> Result<LoadedData> {
    let paths = config.data_paths();
    let panel = load_panel(
        &paths["flows"],
        &paths["populations"],
        &paths["regions"],
        &paths["covariates"],
    )?;
    let pair_index = build_pair_index(&panel.regions)?;
    let distances = panel.distance_matrix()?;
    Ok(LoadedData { panel, pair_index, distances })
}

/// Stage seed for one model x path job: decorrelates jobs while staying a
/// pure function of the run seed.
fn job_seed(config: &RunConfig, model: ModelChoice, path_id: usize) -> u64 {
    let model_idx = ModelChoice::ALL.iter().position(|m| *m == model).unwrap() as u64;
    config
        .seed
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(model_idx * 1009 + path_id as u64)
}

pub fn cmd_simulate(
    config: &RunConfig,
    n_regions: usize,
    sigma_alpha: f64,
    sigma_beta: f64,
    family: ModelForm,
) -> Result<()> {
    let mut truth = SimulationTruth::gravity_default();
    truth.family = family;
    if family == ModelForm::Radiation {
        truth.beta = vec![1.0, 1.0, -1.0, -1.0];
    }
    truth.sigma_alpha = sigma_alpha;
    truth.sigma_beta = vec![sigma_beta; family.n_features()];
    let mut years = config.train_years.clone();
    years.extend(&config.test_years);
    years.sort_unstable();
    let (panel, ground_truth) = migflow::bayes::simulate_panel(
        &truth,
        n_regions,
        &years,
        config.seed,
    )?;
    std::fs::create_dir_all(&config.out_dir)?;
    panel.write_csvs(&config.out_dir)?;
    write_json(&config.out_dir.join("ground_truth.json"), &ground_truth)?;
    eprintln!(
        "simulate: wrote {} regions x {} years to {}",
        n_regions,
        years.len(),
        config.out_dir.display()
    );
    Ok(())
}

fn fit_one(
    config: &RunConfig,
    data: &LoadedData,
    model: ModelChoice,
    path: &migflow::data::SampledPath,
) -> Result<FitArtifact> {
    let start = Instant::now();
    let mut design = build_design(
        &data.panel,
        &data.pair_index,
        &data.distances,
        model.family(),
        FlowSource::Path(path),
        Some(&config.train_years),
    )?;
    if config.upsample {
        design = upsample_design(&design, 5, 60);
    }
    let pooled = ols_fit(&design)?;
    let sampler_seed = job_seed(config, model, path.path_id);
    let bayes = match model.spec() {
        None => None,
        Some(spec) => {
            let hyper = HyperParams::from_ols(&pooled)?;
            let mut sampler = config.sampler.clone();
            sampler.seed = sampler_seed;
            Some(fit_model(&spec, &design, &hyper, &sampler, &data.pair_index)?)
        }
    };
    let artifact = FitArtifact {
        config: config.clone(),
        model,
        path_id: path.path_id,
        sampler_seed,
        classical: if model.is_bayesian() { None } else { Some(pooled) },
        bayes,
    };
    eprintln!(
        "fit: {model} path {} done in {:.1}s",
        path.path_id,
        start.elapsed().as_secs_f64()
    );
    Ok(artifact)
}

pub fn cmd_fit(config: &RunConfig) -> Result<()> {
    let data = load_data(config)?;
    let paths = sample_flow_paths(&data.panel, config.n_paths, config.seed)?;
    let jobs: Vec<(ModelChoice, usize)> = config
        .models
        .iter()
        .flat_map(|&m| (0..config.n_paths).map(move |p| (m, p)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::numerical(format!("worker pool: {e}")))?;
    let artifacts: Result<Vec<FitArtifact>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(model, p)| fit_one(config, &data, model, &paths[p]))
            .collect()
    });
    for artifact in artifacts? {
        let mut slim = artifact;
        // Raw draws stay out of the JSON payload; summaries are embedded.
        if let Some(b) = slim.bayes.as_mut() {
            b.sampler = None;
        }
        write_json(&fit_path(&config.out_dir, slim.model, slim.path_id), &slim)?;
    }
    Ok(())
}

pub fn cmd_evaluate(config: &RunConfig) -> Result<()> {
    let data = load_data(config)?;
    let paths = sample_flow_paths(&data.panel, config.n_paths, config.seed)?;
    let mut reports = Vec::new();
    for &model in &config.models {
        let mut predictions = Vec::new();
        for path in &paths {
            let artifact: FitArtifact =
                read_json(&fit_path(&config.out_dir, model, path.path_id))?;
            let test_design = build_design(
                &data.panel,
                &data.pair_index,
                &data.distances,
                model.family(),
                FlowSource::Path(path),
                Some(&config.test_years),
            )?;
            let predicted = match (&artifact.classical, &artifact.bayes) {
                (Some(fit), _) => predict_classical(fit, &test_design)?,
                (None, Some(fit)) => posterior_predict(fit, &test_design)?,
                (None, None) => {
                    return Err(Error::validation(format!(
                        "artifact for {model} path {} holds no fit",
                        path.path_id
                    )))
                }
            };
            predictions.push(PathPrediction {
                path_id: path.path_id,
                observed: test_design.flows(),
                predicted,
                distances_km: test_design.distances_km.clone(),
            });
        }
        reports.push(evaluate(&model.to_string(), &predictions)?);
    }
    let eval_dir = config.out_dir.join("eval");
    write_json(&eval_dir.join("eval.json"), &EvalArtifact {
        config: config.clone(),
        reports: reports.clone(),
    })?;
    std::fs::create_dir_all(&eval_dir)?;
    std::fs::write(eval_dir.join("eval.md"), markdown_table(&reports))?;
    eprintln!("evaluate: wrote {}", eval_dir.join("eval.md").display());
    Ok(())
}

pub fn cmd_cluster(
    config: &RunConfig,
    model: ModelChoice,
    path_id: usize,
    k: usize,
    covariates: &[String],
    n_bins: usize,
) -> Result<()> {
    let data = load_data(config)?;
    let artifact: FitArtifact = read_json(&fit_path(&config.out_dir, model, path_id))?;
    let fit = artifact.bayes.as_ref().ok_or_else(|| {
        Error::validation(format!(
            "{model} is a pooled model; clustering needs an all-parameters \
             hierarchical fit (hg2 or hr2)"
        ))
    })?;
    let vectors = fit.pair_vectors()?;
    let clustering = agglomerative_cluster(&vectors, k)?;
    let pairs: Vec<(usize, usize)> =
        vectors.iter().map(|v| data.pair_index.pair(v.pair_id)).collect();
    let pair_labels: Vec<(String, String)> = pairs
        .iter()
        .map(|&(i, j)| (data.panel.regions[i].id.clone(), data.panel.regions[j].id.clone()))
        .collect();

    let (report, notice) = if k == 2 {
        let report =
            conditional_covariate_report(&clustering, &pairs, &data.panel, covariates, n_bins)?;
        (Some(report), None)
    } else {
        (
            None,
            Some(format!(
                "covariate homogeneity tests require k=2, got k={k}; tests skipped"
            )),
        )
    };

    let cluster_dir = config.out_dir.join("cluster");
    std::fs::create_dir_all(&cluster_dir)?;
    // Plot-data CSV: one row per pair with assignment and parameter vector.
    let mut csv_text = String::from("pair_id,origin,dest,cluster");
    for i in 0..vectors[0].values.len() {
        csv_text.push_str(&format!(",v{i}"));
    }
    csv_text.push('\n');
    for (row, v) in vectors.iter().enumerate() {
        csv_text.push_str(&format!(
            "{},{},{},{}",
            v.pair_id, pair_labels[row].0, pair_labels[row].1, clustering.assignment[row]
        ));
        for value in &v.values {
            csv_text.push_str(&format!(",{value}"));
        }
        csv_text.push('\n');
    }
    std::fs::write(cluster_dir.join(format!("{model}_path{path_id}_pairs.csv")), csv_text)?;
    if let Some(n) = &notice {
        eprintln!("cluster: {n}");
    }
    write_json(
        &cluster_dir.join(format!("{model}_path{path_id}_k{k}.json")),
        &ClusterArtifact {
            config: config.clone(),
            model,
            path_id,
            k,
            pair_labels,
            report,
            notice,
        },
    )?;
    Ok(())
}

pub fn cmd_report(config: &RunConfig) -> Result<()> {
    let eval: EvalArtifact = read_json(&config.out_dir.join("eval").join("eval.json"))?;
    let data = load_data(config)?;
    let n = data.panel.regions.len();

    let mut md = String::from("# Run report\n\n## Held-out metrics (mean over paths)\n\n");
    md.push_str(&markdown_table(&eval.reports));

    md.push_str("\n## Model size\n\n| Model | Parameters |\n|---|---|\n");
    for &model in &config.models {
        if let Some(spec) = model.spec() {
            md.push_str(&format!("| {model} | {} |\n", count_parameters(&spec, n)));
        }
    }

    md.push_str("\n## Sampler health and coefficient signs\n\n");
    for &model in &config.models {
        if !model.is_bayesian() {
            continue;
        }
        for path_id in 0..config.n_paths {
            let artifact: FitArtifact = read_json(&fit_path(&config.out_dir, model, path_id))?;
            let fit = artifact.bayes.as_ref().ok_or_else(|| {
                Error::validation(format!("artifact for {model} path {path_id} holds no fit"))
            })?;
            md.push_str(&format!(
                "- {model} path {path_id}: divergent transitions {:.2}% of draws",
                100.0 * fit.sampling_divergence_fraction
            ));
            let agreement = sign_agreement(&fit.coefficient_intervals(), model.family())?;
            for (name, pct) in agreement {
                md.push_str(&format!("; {name} sign agreement {pct:.0}%"));
            }
            md.push('\n');
        }
    }
    md.push_str(&format!(
        "\nSeed {}; train years {:?}; test years {:?}; {} paths.\n",
        config.seed, config.train_years, config.test_years, config.n_paths
    ));
    std::fs::create_dir_all(&config.out_dir)?;
    std::fs::write(config.out_dir.join("report.md"), md)?;
    eprintln!("report: wrote {}", config.out_dir.join("report.md").display());
    Ok(())
}
