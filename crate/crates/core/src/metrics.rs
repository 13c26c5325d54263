//! Slate quality: nDCG@k, per-variable distribution gaps, GAP, the
//! alpha-weighted slate reward and the slate goodness used for comparisons.

use crate::data::{slate_distribution, CandidateSet, CategoricalSchema, DistributionalCriteria, Slate};
use crate::error::{Error, Result};

/// All quality scalars for one slate.
#[derive(Debug, Clone, PartialEq)]
pub struct SlateScore {
    pub ndcg: f64,
    pub gap: f64,
    pub per_variable_gaps: Vec<f64>,
    pub reward: f64,
    pub goodness: f64,
}

fn discount(position: usize) -> f64 {
    1.0 / ((position + 2) as f64).log2()
}

/// Ideal DCG of the `k` largest labels in `labels`.
pub fn ideal_dcg(labels: &[f64], k: usize) -> f64 {
    let mut sorted = labels.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted.iter().take(k).enumerate().map(|(t, y)| y * discount(t)).sum()
}

/// nDCG of the first `k` slate positions. Gain is the raw label, discount
/// `1/log2(t+1)`. The ideal ordering is taken over the whole candidate set,
/// and a zero ideal DCG scores 0.
pub fn ndcg_at_k(labels: &[f64], slate: &Slate, k: usize) -> Result<f64> {
    if k > slate.len() {
        return Err(Error::arg(format!("k = {k} exceeds slate length {}", slate.len())));
    }
    if labels.iter().any(|&y| y < 0.0 || !y.is_finite()) {
        return Err(Error::arg("labels must be finite and non-negative"));
    }
    let idcg = ideal_dcg(labels, k);
    if idcg == 0.0 {
        return Ok(0.0);
    }
    let mut dcg = 0.0;
    for (t, &a) in slate.indices.iter().take(k).enumerate() {
        let y = labels
            .get(a)
            .ok_or_else(|| Error::arg(format!("slate index {a} out of range")))?;
        dcg += y * discount(t);
    }
    Ok(dcg / idcg)
}

/// L-infinity distance between a target and a realized distribution.
pub fn categorical_gap(target: &[f64], realized: &[f64]) -> Result<f64> {
    if target.len() != realized.len() {
        return Err(Error::dim(format!(
            "target has {} categories, realized distribution {}",
            target.len(),
            realized.len()
        )));
    }
    Ok(target
        .iter()
        .zip(realized)
        .map(|(d, r)| (d - r).abs())
        .fold(0.0, f64::max))
}

/// Per-variable gaps between criteria and slate distributions.
pub fn per_variable_gaps(criteria: &DistributionalCriteria, dists: &[Vec<f64>]) -> Result<Vec<f64>> {
    if criteria.num_variables() != dists.len() {
        return Err(Error::dim(format!(
            "{} criteria against {} distributions",
            criteria.num_variables(),
            dists.len()
        )));
    }
    criteria
        .targets()
        .iter()
        .zip(dists)
        .map(|(d, r)| categorical_gap(d, r))
        .collect()
}

/// Mean categorical gap over all variables.
pub fn gap(criteria: &DistributionalCriteria, dists: &[Vec<f64>]) -> Result<f64> {
    if criteria.num_variables() == 0 {
        return Err(Error::arg("GAP needs at least one categorical variable"));
    }
    let gaps = per_variable_gaps(criteria, dists)?;
    Ok(gaps.iter().sum::<f64>() / gaps.len() as f64)
}

pub fn slate_reward(ndcg: f64, gap: f64, alpha: f64) -> f64 {
    alpha * ndcg - (1.0 - alpha) * gap
}

pub fn slate_goodness(ndcg: f64, gap: f64) -> f64 {
    0.5 * ndcg - 0.5 * gap + 0.5
}

pub fn score_slate(
    cands: &CandidateSet,
    slate: &Slate,
    schema: &CategoricalSchema,
    alpha: f64,
    k: usize,
) -> Result<SlateScore> {
    slate.validate(cands)?;
    let ndcg = ndcg_at_k(&cands.labels(), slate, k)?;
    let dists = slate_distribution(slate, cands, schema)?;
    let per_variable_gaps = per_variable_gaps(&cands.criteria, &dists)?;
    if per_variable_gaps.is_empty() {
        return Err(Error::arg("GAP needs at least one categorical variable"));
    }
    let gap = per_variable_gaps.iter().sum::<f64>() / per_variable_gaps.len() as f64;
    Ok(SlateScore {
        ndcg,
        gap,
        reward: slate_reward(ndcg, gap, alpha),
        goodness: slate_goodness(ndcg, gap),
        per_variable_gaps,
    })
}

/// Means of a set of slate scores.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MeanScore {
    pub count: usize,
    pub ndcg: f64,
    pub gap: f64,
    pub per_variable_gaps: Vec<f64>,
    pub reward: f64,
    pub goodness: f64,
}

impl MeanScore {
    pub fn from_scores<'a>(scores: impl IntoIterator<Item = &'a SlateScore>) -> Self {
        let mut acc = MeanScore::default();
        for s in scores {
            if acc.per_variable_gaps.is_empty() {
                acc.per_variable_gaps = vec![0.0; s.per_variable_gaps.len()];
            }
            acc.count += 1;
            acc.ndcg += s.ndcg;
            acc.gap += s.gap;
            acc.reward += s.reward;
            acc.goodness += s.goodness;
            acc.per_variable_gaps
                .iter_mut()
                .zip(&s.per_variable_gaps)
                .for_each(|(a, g)| *a += g);
        }
        if acc.count > 0 {
            let n = acc.count as f64;
            acc.ndcg /= n;
            acc.gap /= n;
            acc.reward /= n;
            acc.goodness /= n;
            acc.per_variable_gaps.iter_mut().for_each(|g| *g /= n);
        }
        acc
    }
}
