//! Laptop-scale end-to-end benchmark on synthetic data: score order, the
//! MMR sweep and trained re-rankers compared on the test split.

use std::time::Instant;

use crate::data::CandidateSet;
use crate::error::Result;
use crate::metrics::MeanScore;
use crate::mmr::{default_grid, lambda_sweep, SweepResult};
use crate::model::ModelConfig;
use crate::simulate::SimConfig;
use crate::training::{decodable, evaluate_model, train, TrainConfig, TrainMode, TrainOutcome};

use super::pipeline::{score_order_scores, simulate_splits, Simulated};
use super::synthetic::{generate, split, SyntheticConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct DeskConfig {
    pub queries: usize,
    pub k: usize,
    pub alpha: f64,
    pub criteria_columns: usize,
    pub max_len: usize,
    pub epochs: usize,
    pub hidden: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for DeskConfig {
    fn default() -> Self {
        Self {
            queries: 200,
            k: 5,
            alpha: 0.5,
            criteria_columns: 2,
            max_len: 20,
            epochs: 60,
            hidden: 32,
            lr: 1e-3,
            batch_size: 32,
            seed: 1,
        }
    }
}

/// Simulated splits plus the two training-free reference methods.
#[derive(Debug, Clone)]
pub struct Desk {
    pub config: DeskConfig,
    pub data: Simulated,
    pub score_order: MeanScore,
    pub sweep: SweepResult,
}

/// Test metrics of one trained variant.
#[derive(Debug, Clone)]
pub struct DeskRun {
    pub mode: TrainMode,
    pub condition_info: bool,
    pub outcome: TrainOutcome,
    pub test: MeanScore,
    pub seconds: f64,
}

impl Desk {
    pub fn prepare(config: DeskConfig) -> Result<Self> {
        let raw = generate(&SyntheticConfig {
            num_queries: config.queries,
            seed: config.seed,
            ..SyntheticConfig::default()
        })?;
        let [tr, va, te] = split(raw, 0.6, 0.2)?;
        let sim = SimConfig {
            max_len: config.max_len,
            seed: config.seed,
            ..SimConfig::web30k()
        };
        let data = simulate_splits(&tr, &va, &te, config.criteria_columns, &sim)?;
        let test: Vec<&CandidateSet> = data.test.iter().filter(|s| decodable(s, config.k)).collect();
        let score_order = MeanScore::from_scores(&score_order_scores(&test, &data.schema, config.k, config.alpha)?);
        let sweep = lambda_sweep(&test, &data.schema, &default_grid(), config.k, config.alpha)?;
        Ok(Self {
            config,
            data,
            score_order,
            sweep,
        })
    }

    /// Test sets long enough for a full slate.
    pub fn test_sets(&self) -> Vec<&CandidateSet> {
        self.data.test.iter().filter(|s| decodable(s, self.config.k)).collect()
    }

    pub fn best_mmr(&self) -> &MeanScore {
        &self.sweep.best_row().mean
    }

    pub fn model_config(&self, condition_info: bool) -> ModelConfig {
        let schema = &self.data.schema;
        ModelConfig {
            embed_dim: self.config.hidden,
            hidden_dim: self.config.hidden,
            use_condition_info: condition_info,
            ..ModelConfig::new(schema.feature_dim(), schema.total_categories(), self.config.k)
        }
    }

    pub fn train_config(&self, mode: TrainMode) -> TrainConfig {
        TrainConfig {
            mode,
            alpha: self.config.alpha,
            lr: self.config.lr,
            batch_size: self.config.batch_size,
            max_epochs: self.config.epochs,
            patience: self.config.epochs,
            seed: self.config.seed,
            ..TrainConfig::default()
        }
    }

    pub fn run(&self, mode: TrainMode, condition_info: bool) -> Result<DeskRun> {
        let start = Instant::now();
        let outcome = train(
            &self.data.train,
            &self.data.valid,
            &self.data.schema,
            &self.model_config(condition_info),
            &self.train_config(mode),
        )?;
        let test = MeanScore::from_scores(&evaluate_model(
            &outcome.model,
            &self.test_sets(),
            &self.data.schema,
            self.config.alpha,
        )?);
        Ok(DeskRun {
            mode,
            condition_info,
            outcome,
            test,
            seconds: start.elapsed().as_secs_f64(),
        })
    }
}
