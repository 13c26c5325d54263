//! Reinforcement and supervised training of the re-ranker, and the epoch
//! loop with validation-based early stopping.

pub mod loss;
pub mod update;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{CandidateSet, CategoricalSchema};
use crate::error::{Error, Result};
use crate::metrics::{ideal_dcg, score_slate, MeanScore, SlateScore};
use crate::model::{CssoModel, DecodeMode, ModelConfig};
use crate::nn::AdaBelief;

pub use loss::{
    slate_rank_loss, soft_gap, soft_slate_distribution, step_labels, step_rank_loss, step_weight,
    supervised_loss,
};
pub use update::{
    reinforce_gradient, reinforce_update, supervised_gradient, supervised_update, Baseline,
    BaselineKind, BatchGradient,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    Rl,
    Sl,
}

impl std::str::FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rl" => Ok(Self::Rl),
            "sl" => Ok(Self::Sl),
            other => Err(Error::arg(format!("unknown training mode `{other}` (rl or sl)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub alpha: f64,
    pub beta: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub baseline: BaselineKind,
    pub max_epochs: usize,
    /// Epochs without validation improvement tolerated before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::Rl,
            alpha: 0.5,
            beta: 0.1,
            lr: 1e-4,
            batch_size: 1024,
            baseline: BaselineKind::Ema { decay: 0.99 },
            max_epochs: 100,
            patience: 5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::arg(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::arg(format!("beta {} must be positive", self.beta)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::arg(format!("learning rate {} must be positive", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::arg("batch size must be at least 1"));
        }
        if self.max_epochs == 0 {
            return Err(Error::arg("max_epochs must be at least 1"));
        }
        if let BaselineKind::Ema { decay } = self.baseline {
            Baseline::ema(decay)?;
        }
        Ok(())
    }

    fn fresh_baseline(&self) -> Baseline {
        match self.baseline {
            BaselineKind::Ema { decay } => Baseline {
                kind: BaselineKind::Ema { decay },
                value: 0.0,
            },
            BaselineKind::BatchMean => Baseline::batch_mean(),
        }
    }
}

/// Sets a model can decode: at least `k` real items.
pub fn decodable(set: &CandidateSet, k: usize) -> bool {
    set.real_count() >= k
}

/// Sets usable for training: decodable and with at least one relevant item.
pub fn trainable(set: &CandidateSet, k: usize) -> bool {
    decodable(set, k) && ideal_dcg(&set.labels(), k) > 0.0
}

/// Greedy-decodes every set and scores the slates.
pub fn evaluate_model(
    model: &CssoModel,
    sets: &[&CandidateSet],
    schema: &CategoricalSchema,
    alpha: f64,
) -> Result<Vec<SlateScore>> {
    let k = model.config().k;
    // greedy decoding never touches the generator
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    model
        .generate_slates(sets, schema, DecodeMode::Greedy, &mut rng)?
        .iter()
        .zip(sets)
        .map(|(out, set)| score_slate(set, &out.slate, schema, alpha, k))
        .collect()
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// `train` rows describe the sampled slates of the epoch, `valid` rows
    /// greedy slates on the validation split.
    pub split: &'static str,
    pub ndcg: f64,
    pub gap: f64,
    pub goodness: f64,
    /// Mean differentiated objective (train rows only).
    pub loss: Option<f64>,
    /// Best validation goodness so far (valid rows only).
    pub best_goodness: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the best validation goodness.
    pub model: CssoModel,
    pub best_epoch: usize,
    pub best_goodness: f64,
    pub log: Vec<EpochRecord>,
    /// Wall-clock seconds per epoch, kept apart from the deterministic log.
    pub epoch_seconds: Vec<f64>,
}

/// Trains from a fresh initialization derived from `cfg.seed`.
pub fn train(
    train_sets: &[CandidateSet],
    valid_sets: &[CandidateSet],
    schema: &CategoricalSchema,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let model = CssoModel::new(model_cfg.clone(), cfg.seed)?;
    train_from(model, train_sets, valid_sets, schema, cfg)
}

/// Continues training `model`.
pub fn train_from(
    mut model: CssoModel,
    train_sets: &[CandidateSet],
    valid_sets: &[CandidateSet],
    schema: &CategoricalSchema,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let k = model.config().k;
    let train_pool: Vec<&CandidateSet> = train_sets.iter().filter(|s| trainable(s, k)).collect();
    let valid_pool: Vec<&CandidateSet> = valid_sets.iter().filter(|s| decodable(s, k)).collect();
    if train_pool.is_empty() {
        return Err(Error::arg("training split has no usable queries"));
    }
    if valid_pool.is_empty() {
        return Err(Error::arg("validation split has no usable queries"));
    }
    log::info!(
        "training on {} of {} queries, validating on {} of {}",
        train_pool.len(),
        train_sets.len(),
        valid_pool.len(),
        valid_sets.len()
    );

    let optimizer = AdaBelief::new(cfg.lr);
    let mut baseline = cfg.fresh_baseline();
    // stream offset keeps data order independent of the initialization seed
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_7a1e);
    let mut order: Vec<usize> = (0..train_pool.len()).collect();

    let mut best: Option<(usize, f64, CssoModel)> = None;
    let mut log_rows = Vec::new();
    let mut epoch_seconds = Vec::new();
    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut objective_sum = 0.0;
        let mut batches = 0usize;
        let mut sampled = Vec::with_capacity(order.len());
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&CandidateSet> = chunk.iter().map(|&i| train_pool[i]).collect();
            let step = match cfg.mode {
                TrainMode::Rl => reinforce_update(
                    &model.network,
                    &mut model.store,
                    &optimizer,
                    &mut baseline,
                    &batch,
                    schema,
                    cfg.alpha,
                    &mut rng,
                )?,
                TrainMode::Sl => supervised_update(
                    &model.network,
                    &mut model.store,
                    &optimizer,
                    &mut baseline,
                    &batch,
                    schema,
                    cfg.alpha,
                    cfg.beta,
                    &mut rng,
                )?,
            };
            objective_sum += step.objective;
            batches += 1;
            sampled.extend(step.scores);
        }
        let train_mean = MeanScore::from_scores(&sampled);
        log_rows.push(EpochRecord {
            epoch,
            split: "train",
            ndcg: train_mean.ndcg,
            gap: train_mean.gap,
            goodness: train_mean.goodness,
            loss: Some(objective_sum / batches as f64),
            best_goodness: None,
        });

        let valid = MeanScore::from_scores(&evaluate_model(&model, &valid_pool, schema, cfg.alpha)?);
        let improved = best.as_ref().is_none_or(|(_, g, _)| valid.goodness > *g);
        if improved {
            best = Some((epoch, valid.goodness, model.clone()));
        }
        let (best_epoch, best_goodness, _) = best.as_ref().expect("set on first epoch");
        log_rows.push(EpochRecord {
            epoch,
            split: "valid",
            ndcg: valid.ndcg,
            gap: valid.gap,
            goodness: valid.goodness,
            loss: None,
            best_goodness: Some(*best_goodness),
        });
        epoch_seconds.push(started.elapsed().as_secs_f64());
        log::info!(
            "epoch {epoch}: valid nDCG {:.4} GAP {:.4} R_s {:.4} (best {:.4} @ {best_epoch})",
            valid.ndcg,
            valid.gap,
            valid.goodness,
            best_goodness
        );
        if epoch - best_epoch >= cfg.patience {
            break;
        }
    }
    let (best_epoch, best_goodness, model) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        model,
        best_epoch,
        best_goodness,
        log: log_rows,
        epoch_seconds,
    })
}
