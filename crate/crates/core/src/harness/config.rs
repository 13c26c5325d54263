//! TOML experiment configuration.
//!
//! ```toml
//! seed = 7
//!
//! [paths]
//! train = "train.letor"
//! valid = "valid.letor"
//! test = "test.letor"
//! criteria = "criteria.txt"
//!
//! [schema]
//! feature_dim = 17
//! base_score_column = 17          # 1-based
//! [[schema.variables]]
//! name = "col11"
//! columns = [13, 14]              # 1-based
//!
//! [model]
//! k = 5
//! hidden_dim = 64
//! ```
//!
//! Every section and field is optional except where a subcommand needs it.
//! Relative paths are resolved against the directory of the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{CategoricalSchema, CategoricalVariable};
use crate::error::{read_text, Error, Result};
use crate::mmr::{default_grid, MmrConfig};
use crate::model::ModelConfig;
use crate::simulate::SimConfig;
use crate::training::{BaselineKind, TrainConfig, TrainMode};

fn config_err(path: &str, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    /// Graded-relevance inputs of `simulate`.
    pub raw_train: Option<PathBuf>,
    pub raw_valid: Option<PathBuf>,
    pub raw_test: Option<PathBuf>,
    /// Augmented splits.
    pub train: Option<PathBuf>,
    pub valid: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Criteria sidecar covering every augmented split.
    pub criteria: Option<PathBuf>,
    pub checkpoint_dir: Option<PathBuf>,
    pub report_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariableConfig {
    pub name: String,
    /// 1-based feature columns holding the one-hot encoding.
    pub columns: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaConfig {
    pub feature_dim: usize,
    /// 1-based column carrying the base ranker's score.
    pub base_score_column: usize,
    pub variables: Vec<VariableConfig>,
}

impl SchemaConfig {
    pub fn to_schema(&self) -> Result<CategoricalSchema> {
        if self.base_score_column == 0 || self.base_score_column > self.feature_dim {
            return Err(config_err(
                "schema.base_score_column",
                format!("{} not in 1..={}", self.base_score_column, self.feature_dim),
            ));
        }
        let mut vars = Vec::with_capacity(self.variables.len());
        for (i, v) in self.variables.iter().enumerate() {
            if let Some(&bad) = v.columns.iter().find(|&&c| c == 0 || c > self.feature_dim) {
                return Err(config_err(
                    &format!("schema.variables[{i}].columns"),
                    format!("column {bad} not in 1..={}", self.feature_dim),
                ));
            }
            if v.columns.contains(&self.base_score_column) {
                return Err(config_err(
                    &format!("schema.variables[{i}].columns"),
                    "overlaps the base score column",
                ));
            }
            vars.push(CategoricalVariable {
                name: v.name.clone(),
                indices: v.columns.iter().map(|c| c - 1).collect(),
            });
        }
        CategoricalSchema::new(vars, self.feature_dim).map_err(|e| config_err("schema.variables", e.to_string()))
    }

    pub fn from_schema(schema: &CategoricalSchema, base_score_column: usize) -> Self {
        Self {
            feature_dim: schema.feature_dim(),
            base_score_column: base_score_column + 1,
            variables: schema
                .variables()
                .iter()
                .map(|v| VariableConfig {
                    name: v.name.clone(),
                    columns: v.indices.iter().map(|i| i + 1).collect(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub eta: f64,
    pub nu: usize,
    pub max_len: usize,
    pub click_threshold: f64,
    /// Number of binary columns promoted to categorical variables.
    pub criteria_columns: usize,
}

impl Default for SimSection {
    fn default() -> Self {
        let d = SimConfig::default();
        Self {
            eta: d.eta,
            nu: d.nu,
            max_len: d.max_len,
            click_threshold: d.click_threshold,
            criteria_columns: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineName {
    Ema,
    BatchMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub mode: String,
    pub alpha: f64,
    pub beta: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub baseline: BaselineName,
    pub baseline_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            mode: "rl".into(),
            alpha: d.alpha,
            beta: d.beta,
            lr: d.lr,
            batch_size: d.batch_size,
            baseline: BaselineName::Ema,
            baseline_decay: 0.99,
            max_epochs: d.max_epochs,
            patience: d.patience,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub dropout: f64,
    pub k: usize,
    pub use_condition_info: bool,
    pub batch_norm: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            embed_dim: 256,
            hidden_dim: 256,
            dropout: 0.1,
            k: 10,
            use_condition_info: true,
            batch_norm: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MmrSection {
    pub lambda: f64,
    pub grid: Vec<f64>,
}

impl Default for MmrSection {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            grid: default_grid(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub paths: PathsConfig,
    pub schema: Option<SchemaConfig>,
    pub sim: SimSection,
    pub train: TrainSection,
    pub model: ModelSection,
    pub mmr: MmrSection,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| config_err("<toml>", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| config_err(&path.display().to_string(), e.to_string()))?;
        cfg.validate()?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| config_err("<toml>", e.to_string()))
    }

    fn resolve_paths(&mut self, dir: &Path) {
        let p = &mut self.paths;
        for slot in [
            &mut p.raw_train,
            &mut p.raw_valid,
            &mut p.raw_test,
            &mut p.train,
            &mut p.valid,
            &mut p.test,
            &mut p.criteria,
            &mut p.checkpoint_dir,
            &mut p.report_dir,
        ] {
            if let Some(path) = slot.as_mut() {
                if path.is_relative() {
                    *path = dir.join(&*path);
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sim_config().map_err(|e| config_err("sim", e.to_string()))?;
        if self.sim.criteria_columns == 0 {
            return Err(config_err("sim.criteria_columns", "must be at least 1"));
        }
        let t = &self.train;
        t.mode
            .parse::<TrainMode>()
            .map_err(|e| config_err("train.mode", e.to_string()))?;
        for (field, ok) in [
            ("train.alpha", (0.0..=1.0).contains(&t.alpha)),
            ("train.beta", t.beta > 0.0 && t.beta.is_finite()),
            ("train.lr", t.lr > 0.0 && t.lr.is_finite()),
            ("train.batch_size", t.batch_size >= 1),
            ("train.baseline_decay", (0.0..1.0).contains(&t.baseline_decay)),
            ("train.max_epochs", t.max_epochs >= 1),
            ("model.embed_dim", self.model.embed_dim >= 1),
            ("model.hidden_dim", self.model.hidden_dim >= 1),
            ("model.dropout", (0.0..1.0).contains(&self.model.dropout)),
            ("model.k", self.model.k >= 1),
            ("mmr.lambda", (0.0..=1.0).contains(&self.mmr.lambda)),
        ] {
            if !ok {
                return Err(config_err(field, "value out of range"));
            }
        }
        MmrConfig {
            lambda: self.mmr.lambda,
            k: self.model.k,
            grid: self.mmr.grid.clone(),
        }
        .validate()
        .map_err(|e| config_err("mmr.grid", e.to_string()))?;
        if let Some(schema) = &self.schema {
            schema.to_schema()?;
        }
        Ok(())
    }

    pub fn schema(&self) -> Result<CategoricalSchema> {
        self.schema
            .as_ref()
            .ok_or_else(|| config_err("schema", "section required"))?
            .to_schema()
    }

    /// 0-based base score column.
    pub fn base_score_column(&self) -> Result<usize> {
        Ok(self
            .schema
            .as_ref()
            .ok_or_else(|| config_err("schema", "section required"))?
            .base_score_column
            - 1)
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        let cfg = SimConfig {
            eta: self.sim.eta,
            nu: self.sim.nu,
            max_len: self.sim.max_len,
            click_threshold: self.sim.click_threshold,
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        Ok(TrainConfig {
            mode: self.train.mode.parse()?,
            alpha: self.train.alpha,
            beta: self.train.beta,
            lr: self.train.lr,
            batch_size: self.train.batch_size,
            baseline: match self.train.baseline {
                BaselineName::Ema => BaselineKind::Ema {
                    decay: self.train.baseline_decay,
                },
                BaselineName::BatchMean => BaselineKind::BatchMean,
            },
            max_epochs: self.train.max_epochs,
            patience: self.train.patience,
            seed: self.seed,
        })
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        let schema = self.schema()?;
        let cfg = ModelConfig {
            feature_dim: schema.feature_dim(),
            ci_dim: schema.total_categories(),
            embed_dim: self.model.embed_dim,
            hidden_dim: self.model.hidden_dim,
            dropout: self.model.dropout,
            k: self.model.k,
            use_condition_info: self.model.use_condition_info,
            batch_norm: self.model.batch_norm,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Path of a required `[paths]` entry.
    pub fn require_path(&self, name: &str) -> Result<PathBuf> {
        let p = &self.paths;
        let slot = match name {
            "raw_train" => &p.raw_train,
            "raw_valid" => &p.raw_valid,
            "raw_test" => &p.raw_test,
            "train" => &p.train,
            "valid" => &p.valid,
            "test" => &p.test,
            "criteria" => &p.criteria,
            "checkpoint_dir" => &p.checkpoint_dir,
            "report_dir" => &p.report_dir,
            other => return Err(config_err(&format!("paths.{other}"), "unknown path entry")),
        };
        slot.clone()
            .ok_or_else(|| config_err(&format!("paths.{name}"), "required for this command"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse() {
        let cfg = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(cfg.model.k, 10);
        assert_eq!(cfg.train_config().unwrap().beta, 0.1);
        assert!(cfg.schema().is_err());
    }

    #[test]
    fn schema_section() {
        let cfg = ExperimentConfig::from_toml_str(
            "[schema]\nfeature_dim = 5\nbase_score_column = 5\n[[schema.variables]]\nname = \"a\"\ncolumns = [1, 2]\n",
        )
        .unwrap();
        let schema = cfg.schema().unwrap();
        assert_eq!(schema.variables()[0].indices, vec![0, 1]);
        assert_eq!(cfg.base_score_column().unwrap(), 4);
        assert_eq!(cfg.model_config().unwrap().ci_dim, 2);
    }

    #[test]
    fn errors_name_the_field() {
        let cases = [
            ("[train]\nalpha = 2.0\n", "train.alpha"),
            ("[train]\nmode = \"xx\"\n", "train.mode"),
            ("[mmr]\ngrid = [0.5, 0.1]\n", "mmr.grid"),
            (
                "[schema]\nfeature_dim = 3\nbase_score_column = 3\n[[schema.variables]]\nname = \"a\"\ncolumns = [1, 9]\n",
                "schema.variables[0].columns",
            ),
        ];
        for (text, field) in cases {
            match ExperimentConfig::from_toml_str(text) {
                Err(Error::Config { path, .. }) => assert_eq!(path, field, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
        assert!(matches!(
            ExperimentConfig::from_toml_str("[train]\nbogus = 1\n"),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = ExperimentConfig::default();
        cfg.paths.train = Some("a/train.letor".into());
        cfg.seed = 3;
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
    }
}
