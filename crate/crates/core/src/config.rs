//! Pipeline configuration file (TOML).
//!
//! ```toml
//! seed = 2024
//! out_dir = "out"             # relative to this file
//! chains = 1
//!
//! [data]
//! path = "metabolic.csv"
//! log_transform = ["trig", "IR", "GB", "G2"]
//!
//! [model]                     # optional; otherwise taken from select-dim
//! factors = 2
//! zero_cells = [[3, 1], [5, 2]]
//! positive_cells = [[5, 1], [3, 2]]
//!
//! [prior]
//! loading_variance = 100.0
//!
//! [chain]
//! iterations = 50000
//! burn_in = 10000
//!
//! [dimension]
//! max_factors = 4
//! splits = 5
//! anchors = { 2 = [5, 3] }
//! chain = { iterations = 10000, burn_in = 2500 }
//!
//! [compare]
//! models = "models.txt"
//! prior_draws = 1000000
//! model_prior = [0.25, 0.25, 0.5]
//! ```
//!
//! Cells and anchors are 1-based. Schema errors name the offending field.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::dimension::DimensionSettings;
use crate::error::{Error, Result};
use crate::marginal::MarginalSettings;
use crate::sampler::{ChainSettings, PriorSpec};
use crate::types::{Cell, UcfmSpec};

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default = "default_chains")]
    pub chains: usize,
    pub data: DataConfig,
    #[serde(default)]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub prior: PriorSpec,
    #[serde(default)]
    pub chain: ChainSettings,
    #[serde(default)]
    pub dimension: DimensionConfig,
    #[serde(default)]
    pub compare: Option<CompareConfig>,
}

fn default_seed() -> u64 {
    1
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("bayes-cfa-out")
}

fn default_chains() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub path: PathBuf,
    #[serde(default)]
    pub log_transform: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub factors: usize,
    #[serde(default)]
    pub zero_cells: Vec<[usize; 2]>,
    #[serde(default)]
    pub positive_cells: Vec<[usize; 2]>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimensionConfig {
    #[serde(default)]
    pub max_factors: Option<usize>,
    #[serde(default)]
    pub splits: Option<usize>,
    /// 1-based anchor rows keyed by the number of factors.
    #[serde(default)]
    pub anchors: BTreeMap<String, Vec<usize>>,
    #[serde(default)]
    pub chain: Option<ChainSettings>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub models: PathBuf,
    #[serde(default = "default_prior_draws")]
    pub prior_draws: usize,
    #[serde(default)]
    pub model_prior: Option<Vec<f64>>,
}

fn default_prior_draws() -> usize {
    1_000_000
}

fn config_error(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Config { path: path.into(), message: message.into() }
}

impl Config {
    /// Reads and validates a config file; relative paths are resolved
    /// against its directory.
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Config::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.resolve_paths(base);
        Ok(config)
    }

    /// Parses and validates config text without touching the filesystem.
    pub fn parse(text: &str) -> Result<Config> {
        let de = toml::Deserializer::parse(text).map_err(|e| config_error("<document>", e.message()))?;
        let config: Config = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let path = if path == "." { "<document>".to_string() } else { path };
            config_error(path, e.into_inner().message())
        })?;
        config.validate()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.out_dir);
        join(&mut self.data.path);
        if let Some(c) = &mut self.compare {
            join(&mut c.models);
        }
    }

    fn validate(&self) -> Result<()> {
        if self.chains == 0 {
            return Err(config_error("chains", "must be at least 1"));
        }
        self.chain.validate().map_err(|e| config_error("chain", strip(e)))?;
        if let Some(m) = &self.model {
            self.base_spec_for(m).map(|_| ()).map_err(|e| match e {
                Error::Config { .. } => e,
                other => config_error("model", strip(other)),
            })?;
            self.prior.validate(m.factors).map_err(|e| config_error("prior", strip(e)))?;
        } else {
            self.prior.validate(1).map_err(|e| config_error("prior", strip(e)))?;
        }
        if let Some(c) = &self.dimension.chain {
            c.validate().map_err(|e| config_error("dimension.chain", strip(e)))?;
        }
        if self.dimension.splits == Some(0) {
            return Err(config_error("dimension.splits", "must be at least 1"));
        }
        for (key, rows) in &self.dimension.anchors {
            let m: usize = key
                .parse()
                .map_err(|_| config_error(format!("dimension.anchors.{key}"), "key must be a number of factors"))?;
            if rows.len() != m {
                return Err(config_error(
                    format!("dimension.anchors.{key}"),
                    format!("expected {m} anchor rows, got {}", rows.len()),
                ));
            }
            if rows.contains(&0) {
                return Err(config_error(format!("dimension.anchors.{key}"), "rows are 1-based"));
            }
        }
        if let Some(c) = &self.compare {
            if c.prior_draws == 0 {
                return Err(config_error("compare.prior_draws", "must be positive"));
            }
        }
        Ok(())
    }

    fn base_spec_for(&self, m: &ModelConfig) -> Result<UcfmSpec> {
        let cells = |list: &[[usize; 2]], field: &str| -> Result<Vec<Cell>> {
            list.iter()
                .enumerate()
                .map(|(i, &[j, k])| {
                    Cell::one_based(j, k)
                        .filter(|c| c.col < m.factors)
                        .ok_or_else(|| config_error(format!("model.{field}[{i}]"), format!("invalid cell [{j}, {k}]")))
                })
                .collect()
        };
        let zero = cells(&m.zero_cells, "zero_cells")?;
        let positive = cells(&m.positive_cells, "positive_cells")?;
        let p = zero.iter().chain(&positive).map(|c| c.row + 1).max().unwrap_or(0);
        Ok(UcfmSpec::new(p, m.factors, zero, positive))
    }

    /// The configured base model for `p` variables, if any.
    pub fn base_spec(&self, p: usize) -> Result<Option<UcfmSpec>> {
        let Some(m) = &self.model else { return Ok(None) };
        let spec = self.base_spec_for(m)?;
        if spec.p() > p {
            return Err(config_error("model", format!("cells refer to row {} but the data has {p} variables", spec.p())));
        }
        Ok(Some(UcfmSpec::new(p, m.factors, spec.zero_cells().iter().copied(), spec.positive_cells().iter().copied())))
    }

    /// Dimension-selection settings with 0-based anchors.
    pub fn dimension_settings(&self) -> DimensionSettings {
        let defaults = MarginalSettings::default();
        DimensionSettings {
            max_factors: self.dimension.max_factors,
            anchors: self
                .dimension
                .anchors
                .iter()
                .filter_map(|(k, rows)| Some((k.parse().ok()?, rows.iter().map(|r| r - 1).collect())))
                .collect(),
            marginal: MarginalSettings {
                chain: self.dimension.chain.unwrap_or(defaults.chain),
                splits: self.dimension.splits.unwrap_or(defaults.splits),
            },
        }
    }
}

fn strip(e: Error) -> String {
    match e {
        Error::Spec(m) | Error::Precondition(m) => m,
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[data]\npath = \"x.csv\"\n";

    #[test]
    fn minimal_config_uses_defaults() {
        let c = Config::parse(MINIMAL).unwrap();
        assert_eq!(c.seed, 1);
        assert_eq!(c.chain, ChainSettings::default());
        assert_eq!(c.prior, PriorSpec::default());
        assert!(c.model.is_none() && c.compare.is_none());
        assert_eq!(c.dimension_settings().marginal, MarginalSettings::default());
    }

    fn error_path(text: &str) -> String {
        match Config::parse(text) {
            Err(Error::Config { path, .. }) => path,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn schema_errors_name_the_field() {
        assert_eq!(error_path("[data]\npath = 3\n"), "data.path");
        assert_eq!(error_path(&format!("{MINIMAL}[prior]\nloading_varianse = 1.0\n")), "prior.loading_varianse");
        assert_eq!(error_path(&format!("{MINIMAL}[chain]\niterations = 10\nburn_in = 20\n")), "chain");
        assert_eq!(error_path(&format!("{MINIMAL}[model]\nfactors = 2\nzero_cells = [[3, 3]]\n")), "model.zero_cells[0]");
        assert_eq!(error_path(&format!("{MINIMAL}[dimension]\nanchors = {{ 2 = [1] }}\n")), "dimension.anchors.2");
        assert_eq!(error_path("seed = 1\n"), "<document>");
        assert_eq!(error_path(&format!("{MINIMAL}[compare]\nmodels = \"m.txt\"\nprior_draws = -5\n")), "compare.prior_draws");
    }

    #[test]
    fn paths_resolve_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, format!("out_dir = \"out\"\n{MINIMAL}")).unwrap();
        let c = Config::load(&path).unwrap();
        assert_eq!(c.data.path, dir.path().join("x.csv"));
        assert_eq!(c.out_dir, dir.path().join("out"));
    }

    #[test]
    fn base_spec_and_anchors() {
        let text = format!(
            "{MINIMAL}[model]\nfactors = 2\nzero_cells = [[3, 1], [5, 2]]\npositive_cells = [[5, 1], [3, 2]]\n[dimension]\nanchors = {{ 2 = [5, 3] }}\n"
        );
        let c = Config::parse(&text).unwrap();
        assert_eq!(c.base_spec(8).unwrap().unwrap(), crate::synthetic::metabolic_spec());
        assert!(c.base_spec(4).is_err());
        assert_eq!(c.dimension_settings().anchors[&2], vec![4, 2]);
    }
}
