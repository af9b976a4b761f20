//! `migflow` command-line front end.
//!
//! Exit codes: 0 success, 1 validation/config error, 2 numerical failure.

mod config;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use migflow::features::ModelForm;
use migflow::Error;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "migflow", version, about = "Origin-destination migration-flow models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every stage; each one overrides the config file.
#[derive(Args, Debug)]
struct CommonArgs {
    /// Flat key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory holding regions/flows/populations/covariates CSVs.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Output directory for artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated models: gravity,radiation,hg1,hg2,hr1,hr2.
    #[arg(long)]
    models: Option<String>,
    /// Number of interval-sampled flow paths.
    #[arg(long)]
    paths: Option<usize>,
    /// Run seed (recorded in every artifact).
    #[arg(long)]
    seed: Option<u64>,
    /// Concurrent model x path jobs.
    #[arg(long)]
    workers: Option<usize>,
    /// Replicate training rows 5x (capped at 60 rows per pair).
    #[arg(long)]
    upsample: bool,
    /// Training years, "2005:2016" or comma-separated.
    #[arg(long)]
    train_years: Option<String>,
    /// Held-out years, "2017:2019" or comma-separated.
    #[arg(long)]
    test_years: Option<String>,
}

impl CommonArgs {
    fn resolve(&self) -> migflow::Result<RunConfig> {
        let mut config = RunConfig::load(self.config.as_deref())?;
        if let Some(d) = &self.data_dir {
            config.data_dir = d.clone();
        }
        if let Some(o) = &self.out {
            config.out_dir = o.clone();
        }
        if let Some(m) = &self.models {
            config.models = config::parse_models(m)?;
        }
        if let Some(p) = self.paths {
            config.n_paths = p;
        }
        if let Some(s) = self.seed {
            config.seed = s;
        }
        if let Some(w) = self.workers {
            config.workers = w;
        }
        if self.upsample {
            config.upsample = true;
        }
        if let Some(y) = &self.train_years {
            config.train_years = config::parse_years(y)?;
        }
        if let Some(y) = &self.test_years {
            config.test_years = config::parse_years(y)?;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic panel (CSV files plus ground-truth JSON).
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Number of regions.
        #[arg(long, default_value_t = 10)]
        regions: usize,
        /// Pair-level intercept spread (0 = homogeneous pairs).
        #[arg(long, default_value_t = 1.0)]
        sigma_alpha: f64,
        /// Pair-level coefficient spread.
        #[arg(long, default_value_t = 0.0)]
        sigma_beta: f64,
        /// Generating family: gravity or radiation.
        #[arg(long, default_value = "gravity")]
        family: String,
    },
    /// Fit every requested model on every sampled path.
    Fit {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Score fitted models on the held-out years.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Cluster per-pair parameters of an all-parameters hierarchical fit.
    Cluster {
        #[command(flatten)]
        common: CommonArgs,
        /// Which fitted model to cluster (hg2 or hr2).
        #[arg(long, default_value = "hg2")]
        model: String,
        /// Which path's fit to use.
        #[arg(long, default_value_t = 0)]
        path: usize,
        /// Number of clusters to cut at.
        #[arg(long, default_value_t = 2)]
        k: usize,
        /// Comma-separated covariates for the log-ratio homogeneity tests.
        #[arg(long, default_value = "land_area_sqmi")]
        covariates: String,
        /// Histogram bins for those tests.
        #[arg(long, default_value_t = 8)]
        bins: usize,
    },
    /// Combine fit and evaluation artifacts into a Markdown summary.
    Report {
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn run(cli: Cli) -> migflow::Result<()> {
    match cli.command {
        Command::Simulate { common, regions, sigma_alpha, sigma_beta, family } => {
            let config = common.resolve()?;
            let family = match family.to_ascii_lowercase().as_str() {
                "gravity" => ModelForm::Gravity,
                "radiation" => ModelForm::Radiation,
                other => {
                    return Err(Error::validation(format!(
                        "unknown family {other:?}; expected gravity or radiation"
                    )))
                }
            };
            pipeline::cmd_simulate(&config, regions, sigma_alpha, sigma_beta, family)
        }
        Command::Fit { common } => pipeline::cmd_fit(&common.resolve()?),
        Command::Evaluate { common } => pipeline::cmd_evaluate(&common.resolve()?),
        Command::Cluster { common, model, path, k, covariates, bins } => {
            let config = common.resolve()?;
            let model = model.parse()?;
            let names: Vec<String> =
                covariates.split(',').map(|s| s.trim().to_string()).collect();
            pipeline::cmd_cluster(&config, model, path, k, &names, bins)
        }
        Command::Report { common } => pipeline::cmd_report(&common.resolve()?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Numerical(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
