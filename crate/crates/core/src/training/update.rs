//! One optimization step of either regime.

use rand::Rng;

use crate::data::{CandidateSet, CategoricalSchema, Slate};
use crate::error::{Error, Result};
use crate::metrics::{score_slate, SlateScore};
use crate::model::{Actions, CssoNetwork, DecodeMode};
use crate::nn::{AdaBelief, BatchNorm, Gradients, Graph, Mat, ParamStore, Phase};

use super::loss::supervised_loss_node;

/// How the variance-reduction baseline is formed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaselineKind {
    /// Exponential moving average of batch means, updated after each batch.
    Ema { decay: f64 },
    /// Mean of the current batch.
    BatchMean,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Baseline {
    pub kind: BaselineKind,
    pub value: f64,
}

impl Baseline {
    pub fn ema(decay: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&decay) {
            return Err(Error::arg(format!("baseline decay {decay} outside [0, 1)")));
        }
        Ok(Self {
            kind: BaselineKind::Ema { decay },
            value: 0.0,
        })
    }

    pub fn batch_mean() -> Self {
        Self {
            kind: BaselineKind::BatchMean,
            value: 0.0,
        }
    }

    /// Baseline to subtract for a batch with the given returns.
    pub fn current(&self, batch: &[f64]) -> f64 {
        match self.kind {
            BaselineKind::Ema { .. } => self.value,
            BaselineKind::BatchMean => mean(batch),
        }
    }

    /// Folds a finished batch into the running value.
    pub fn update(&mut self, batch: &[f64]) {
        let m = mean(batch);
        self.value = match self.kind {
            BaselineKind::Ema { decay } => decay * self.value + (1.0 - decay) * m,
            BaselineKind::BatchMean => m,
        };
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Gradient of one batch plus what was observed while computing it.
#[derive(Debug, Clone)]
pub struct BatchGradient {
    pub grads: Gradients,
    /// Value of the surrogate objective that was differentiated.
    pub objective: f64,
    /// Per-row returns (rewards for RL, losses for SL).
    pub returns: Vec<f64>,
    /// Discrete scores of the sampled slates.
    pub scores: Vec<SlateScore>,
    pub bn_updates: Vec<crate::nn::RunningStatsUpdate>,
}

fn check_finite(value: f64, what: &str) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric {
            param: what.to_string(),
            detail: format!("value {value}"),
        })
    }
}

/// Policy-gradient step direction: descends
/// `-(1/N) sum_i (R_i - b) sum_t ln pi(a_t | s_t)` for sampled slates,
/// with `b` supplied by the caller.
#[allow(clippy::too_many_arguments)]
pub fn reinforce_gradient(
    network: &CssoNetwork,
    store: &ParamStore,
    sets: &[&CandidateSet],
    schema: &CategoricalSchema,
    alpha: f64,
    baseline: &Baseline,
    rng: &mut impl Rng,
) -> Result<BatchGradient> {
    let k = network.config.k;
    let mut g = Graph::new();
    let rollout = network.rollout(
        &mut g,
        store,
        sets,
        schema,
        Actions::Decode(DecodeMode::Sample),
        Phase::Train,
        rng,
    )?;
    let scores: Vec<SlateScore> = sets
        .iter()
        .zip(&rollout.actions)
        .map(|(set, a)| score_slate(set, &Slate::new(a.clone(), set)?, schema, alpha, k))
        .collect::<Result<_>>()?;
    let rewards: Vec<f64> = scores.iter().map(|s| s.reward).collect();
    let b = baseline.current(&rewards);
    let n = sets.len() as f64;
    let advantage = Mat::from_shape_fn((sets.len(), 1), |(i, _)| -(rewards[i] - b) / n);
    let logp = rollout.trajectory_log_prob(&mut g)?;
    let weighted = g.mul_const(logp, advantage)?;
    let objective = g.sum_all(weighted);
    let value = g.scalar(objective);
    check_finite(value, "policy-gradient objective")?;
    Ok(BatchGradient {
        grads: g.backward(objective)?,
        objective: value,
        returns: rewards,
        scores,
        bn_updates: rollout.bn_updates,
    })
}

/// Supervised step direction: descends
/// `(1/N) sum_i [(L_i - b) sum_t ln pi(a_t | s_t) + L_i]` where `L_i` is the
/// hybrid loss of the i-th sampled trajectory (held constant in the first
/// term).
#[allow(clippy::too_many_arguments)]
pub fn supervised_gradient(
    network: &CssoNetwork,
    store: &ParamStore,
    sets: &[&CandidateSet],
    schema: &CategoricalSchema,
    alpha: f64,
    beta: f64,
    baseline: &Baseline,
    rng: &mut impl Rng,
) -> Result<BatchGradient> {
    let k = network.config.k;
    let mut g = Graph::new();
    let rollout = network.rollout(
        &mut g,
        store,
        sets,
        schema,
        Actions::Decode(DecodeMode::Sample),
        Phase::Train,
        rng,
    )?;
    let losses_node = supervised_loss_node(&mut g, &rollout, sets, schema, alpha, beta)?;
    let losses: Vec<f64> = g.value(losses_node).column(0).to_vec();
    let b = baseline.current(&losses);
    let n = sets.len() as f64;
    let advantage = Mat::from_shape_fn((sets.len(), 1), |(i, _)| (losses[i] - b) / n);
    let logp = rollout.trajectory_log_prob(&mut g)?;
    let score_term = g.mul_const(logp, advantage)?;
    let path_term = g.scale(losses_node, 1.0 / n);
    let per_row = g.add(score_term, path_term)?;
    let objective = g.sum_all(per_row);
    let value = g.scalar(objective);
    check_finite(value, "supervised objective")?;
    let scores = sets
        .iter()
        .zip(&rollout.actions)
        .map(|(set, a)| score_slate(set, &Slate::new(a.clone(), set)?, schema, alpha, k))
        .collect::<Result<_>>()?;
    Ok(BatchGradient {
        grads: g.backward(objective)?,
        objective: value,
        returns: losses,
        scores,
        bn_updates: rollout.bn_updates,
    })
}

/// Applies a batch gradient: optimizer step, batch-norm statistics, then
/// the baseline.
pub fn apply_gradient(
    store: &mut ParamStore,
    optimizer: &AdaBelief,
    baseline: &mut Baseline,
    step: &BatchGradient,
) -> Result<()> {
    optimizer.step(store, &step.grads)?;
    BatchNorm::apply_updates(store, &step.bn_updates)?;
    baseline.update(&step.returns);
    Ok(())
}

/// One REINFORCE update on a batch.
#[allow(clippy::too_many_arguments)]
pub fn reinforce_update(
    network: &CssoNetwork,
    store: &mut ParamStore,
    optimizer: &AdaBelief,
    baseline: &mut Baseline,
    sets: &[&CandidateSet],
    schema: &CategoricalSchema,
    alpha: f64,
    rng: &mut impl Rng,
) -> Result<BatchGradient> {
    let step = reinforce_gradient(network, store, sets, schema, alpha, baseline, rng)?;
    apply_gradient(store, optimizer, baseline, &step)?;
    Ok(step)
}

/// One supervised update on a batch.
#[allow(clippy::too_many_arguments)]
pub fn supervised_update(
    network: &CssoNetwork,
    store: &mut ParamStore,
    optimizer: &AdaBelief,
    baseline: &mut Baseline,
    sets: &[&CandidateSet],
    schema: &CategoricalSchema,
    alpha: f64,
    beta: f64,
    rng: &mut impl Rng,
) -> Result<BatchGradient> {
    let step = supervised_gradient(network, store, sets, schema, alpha, beta, baseline, rng)?;
    apply_gradient(store, optimizer, baseline, &step)?;
    Ok(step)
}
