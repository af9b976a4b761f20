//! Flat key=value run configuration with CLI-flag overrides. The resolved
//! config is embedded in every artifact so runs can be audited and replayed.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use migflow::sampler::SamplerConfig;
use migflow::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelChoice {
    Gravity,
    Radiation,
    Hg1,
    Hg2,
    Hr1,
    Hr2,
}

impl ModelChoice {
    pub const ALL: [ModelChoice; 6] = [
        ModelChoice::Gravity,
        ModelChoice::Radiation,
        ModelChoice::Hg1,
        ModelChoice::Hg2,
        ModelChoice::Hr1,
        ModelChoice::Hr2,
    ];

    pub fn is_bayesian(&self) -> bool {
        !matches!(self, ModelChoice::Gravity | ModelChoice::Radiation)
    }

    pub fn family(&self) -> migflow::features::ModelForm {
        match self {
            ModelChoice::Gravity | ModelChoice::Hg1 | ModelChoice::Hg2 => {
                migflow::features::ModelForm::Gravity
            }
            _ => migflow::features::ModelForm::Radiation,
        }
    }

    pub fn spec(&self) -> Option<migflow::bayes::ModelSpec> {
        match self {
            ModelChoice::Hg1 => Some(migflow::bayes::ModelSpec::hg1()),
            ModelChoice::Hg2 => Some(migflow::bayes::ModelSpec::hg2()),
            ModelChoice::Hr1 => Some(migflow::bayes::ModelSpec::hr1()),
            ModelChoice::Hr2 => Some(migflow::bayes::ModelSpec::hr2()),
            _ => None,
        }
    }
}

impl fmt::Display for ModelChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ModelChoice::Gravity => "gravity",
            ModelChoice::Radiation => "radiation",
            ModelChoice::Hg1 => "hg1",
            ModelChoice::Hg2 => "hg2",
            ModelChoice::Hr1 => "hr1",
            ModelChoice::Hr2 => "hr2",
        };
        f.write_str(s)
    }
}

impl FromStr for ModelChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gravity" => Ok(ModelChoice::Gravity),
            "radiation" => Ok(ModelChoice::Radiation),
            "hg1" => Ok(ModelChoice::Hg1),
            "hg2" => Ok(ModelChoice::Hg2),
            "hr1" => Ok(ModelChoice::Hr1),
            "hr2" => Ok(ModelChoice::Hr2),
            other => Err(Error::validation(format!(
                "unknown model {other:?}; expected one of gravity, radiation, hg1, hg2, hr1, hr2"
            ))),
        }
    }
}

/// Fully resolved run configuration. Every artifact embeds a copy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub models: Vec<ModelChoice>,
    pub train_years: Vec<i32>,
    pub test_years: Vec<i32>,
    pub n_paths: usize,
    pub seed: u64,
    pub workers: usize,
    pub upsample: bool,
    pub sampler: SamplerConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("out"),
            models: vec![ModelChoice::Gravity, ModelChoice::Hg1],
            train_years: (2005..=2016).collect(),
            test_years: (2017..=2019).collect(),
            n_paths: 5,
            seed: 20260826,
            workers: 4,
            upsample: false,
            sampler: SamplerConfig::default(),
        }
    }
}

/// Parse "2005:2016" (inclusive) or "2005,2006,2007".
pub fn parse_years(s: &str) -> Result<Vec<i32>> {
    let s = s.trim();
    let bad = |s: &str| Error::validation(format!("cannot parse year spec {s:?}"));
    if let Some((lo, hi)) = s.split_once(':') {
        let lo: i32 = lo.trim().parse().map_err(|_| bad(s))?;
        let hi: i32 = hi.trim().parse().map_err(|_| bad(s))?;
        if lo > hi {
            return Err(Error::validation(format!("empty year range {s:?}")));
        }
        return Ok((lo..=hi).collect());
    }
    s.split(',')
        .map(|y| y.trim().parse::<i32>().map_err(|_| bad(s)))
        .collect()
}

pub fn parse_models(s: &str) -> Result<Vec<ModelChoice>> {
    s.split(',').map(|m| m.parse()).collect()
}

impl RunConfig {
    /// Start from defaults, apply the config file if given, then per-flag
    /// overrides supplied by the caller.
    pub fn load(file: Option<&Path>) -> Result<Self> {
        let mut config = RunConfig::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)?;
            config.apply_file(&text)?;
        }
        Ok(config)
    }

    fn apply_file(&mut self, text: &str) -> Result<()> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::validation(format!("config line {}: expected key=value", lineno + 1))
            })?;
            self.set(key.trim(), value.trim()).map_err(|e| {
                Error::validation(format!("config line {}: {e}", lineno + 1))
            })?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let parse_num = |v: &str| -> Result<f64> {
            v.parse()
                .map_err(|_| Error::validation(format!("cannot parse number {v:?}")))
        };
        match key {
            "data_dir" => self.data_dir = PathBuf::from(value),
            "out" | "out_dir" => self.out_dir = PathBuf::from(value),
            "models" => self.models = parse_models(value)?,
            "train_years" => self.train_years = parse_years(value)?,
            "test_years" => self.test_years = parse_years(value)?,
            "paths" | "n_paths" => self.n_paths = parse_num(value)? as usize,
            "seed" => self.seed = parse_num(value)? as u64,
            "workers" => self.workers = parse_num(value)? as usize,
            "upsample" => {
                self.upsample = value
                    .parse()
                    .map_err(|_| Error::validation(format!("cannot parse bool {value:?}")))?
            }
            "warmup" => self.sampler.n_warmup = parse_num(value)? as usize,
            "draws" => self.sampler.n_draws = parse_num(value)? as usize,
            "chains" => self.sampler.n_chains = parse_num(value)? as usize,
            "target_accept" => self.sampler.target_accept = parse_num(value)?,
            "max_tree_depth" => self.sampler.max_tree_depth = parse_num(value)? as usize,
            other => {
                return Err(Error::validation(format!("unknown config key {other:?}")));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::validation("no models requested"));
        }
        if self.n_paths == 0 {
            return Err(Error::validation("paths must be at least 1"));
        }
        if self.workers == 0 {
            return Err(Error::validation("workers must be at least 1"));
        }
        if self.train_years.is_empty() || self.test_years.is_empty() {
            return Err(Error::validation("train and test year sets must be non-empty"));
        }
        let overlap: Vec<i32> = self
            .train_years
            .iter()
            .filter(|y| self.test_years.contains(y))
            .copied()
            .collect();
        if !overlap.is_empty() {
            return Err(Error::validation(format!(
                "train and test years overlap: {overlap:?}"
            )));
        }
        self.sampler.validate()?;
        Ok(())
    }

    pub fn data_paths(&self) -> BTreeMap<&'static str, PathBuf> {
        let mut m = BTreeMap::new();
        for name in ["regions", "flows", "populations", "covariates"] {
            m.insert(name, self.data_dir.join(format!("{name}.csv")));
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn year_specs() {
        assert_eq!(parse_years("2005:2007").unwrap(), vec![2005, 2006, 2007]);
        assert_eq!(parse_years("2017, 2019").unwrap(), vec![2017, 2019]);
        assert!(parse_years("2019:2005").is_err());
        assert!(parse_years("abc").is_err());
    }

    #[test]
    fn file_then_override() {
        let mut config = RunConfig::default();
        config
            .apply_file("# comment\nseed = 7\nmodels = gravity,hr2\nwarmup = 100\n")
            .unwrap();
        assert_eq!(config.seed, 7);
        assert_eq!(config.models, vec![ModelChoice::Gravity, ModelChoice::Hr2]);
        assert_eq!(config.sampler.n_warmup, 100);
        config.set("seed", "9").unwrap();
        assert_eq!(config.seed, 9);
        assert!(config.set("bogus", "1").is_err());
    }

    #[test]
    fn disjoint_years_enforced() {
        let mut config = RunConfig::default();
        config.test_years = vec![2016, 2017];
        assert!(config.validate().is_err());
        config.test_years = vec![2017];
        assert!(config.validate().is_ok());
    }
}
