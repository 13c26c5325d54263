//! Greedy baseline that trades normalized base scores against the remaining
//! category budget of the distributional criteria.
//!
//! Each pick maximizes `lambda * s'[i] + (1 - lambda) * mean_j d'_j[cat_j(i)]`
//! where `d'_j` starts at the target `d_j` and loses `1/k` in the picked
//! item's category after every pick.

use rayon::prelude::*;

use crate::data::{category_of, CandidateSet, CategoricalSchema, Slate};
use crate::error::{Error, Result};
use crate::metrics::{score_slate, MeanScore, SlateScore};

/// `0, 0.05, ..., 1`.
pub fn default_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmrConfig {
    pub lambda: f64,
    pub k: usize,
    pub grid: Vec<f64>,
}

impl MmrConfig {
    pub fn new(lambda: f64, k: usize) -> Self {
        Self {
            lambda,
            k,
            grid: default_grid(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::arg(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if self.k == 0 {
            return Err(Error::arg("k must be at least 1"));
        }
        validate_grid(&self.grid)
    }
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::arg("lambda grid is empty"));
    }
    if grid.iter().any(|l| !(0.0..=1.0).contains(l)) {
        return Err(Error::arg("lambda grid values must lie in [0, 1]"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::arg("lambda grid must be strictly increasing"));
    }
    Ok(())
}

/// Affine map onto `[0, 1]`; constant input maps to zeros.
pub fn minmax_normalize(s: &[f64]) -> Vec<f64> {
    let min = s.iter().copied().fold(f64::INFINITY, f64::min);
    let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    if range > 0.0 {
        s.iter().map(|v| (v - min) / range).collect()
    } else {
        vec![0.0; s.len()]
    }
}

/// Builds a `k`-item slate from the items' base scores.
pub fn mmr_rerank(
    cands: &CandidateSet,
    schema: &CategoricalSchema,
    lambda: f64,
    k: usize,
) -> Result<Slate> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::arg(format!("lambda {lambda} outside [0, 1]")));
    }
    if cands.real_count() < k {
        return Err(Error::arg(format!(
            "query {} has {} real items, fewer than k = {k}",
            cands.query_id,
            cands.real_count()
        )));
    }
    cands.criteria.check_schema(schema)?;
    let real: Vec<usize> = (0..cands.len()).filter(|&i| !cands.items[i].is_padding).collect();
    let norm = minmax_normalize(&real.iter().map(|&i| cands.items[i].base_score).collect::<Vec<_>>());
    let mut s = vec![0.0; cands.len()];
    for (&i, &v) in real.iter().zip(&norm) {
        s[i] = v;
    }
    let c = schema.num_variables();
    let cats: Vec<Vec<usize>> = cands
        .items
        .iter()
        .map(|it| (0..c).map(|j| category_of(it, j, schema)).collect())
        .collect::<Result<_>>()?;
    let mut budget: Vec<Vec<f64>> = cands.criteria.targets().to_vec();
    let mut taken = vec![false; cands.len()];
    let mut slate = Vec::with_capacity(k);
    for _ in 0..k {
        let mut best: Option<(usize, f64)> = None;
        for &i in &real {
            if taken[i] {
                continue;
            }
            let fill = (0..c).map(|j| budget[j][cats[i][j]]).sum::<f64>() / c as f64;
            let value = lambda * s[i] + (1.0 - lambda) * fill;
            // strict comparisons keep the lower index on a full tie
            let better = match best {
                None => true,
                Some((bi, bv)) => value > bv || (value == bv && s[i] > s[bi]),
            };
            if better {
                best = Some((i, value));
            }
        }
        let (pick, _) = best.expect("k real items checked above");
        taken[pick] = true;
        slate.push(pick);
        for j in 0..c {
            budget[j][cats[pick][j]] -= 1.0 / k as f64;
        }
    }
    Slate::new(slate, cands)
}

/// Top-`k` real items by base score (stable, lower index first on ties).
pub fn score_order(cands: &CandidateSet, k: usize) -> Result<Slate> {
    let mut idx: Vec<usize> = (0..cands.len()).filter(|&i| !cands.items[i].is_padding).collect();
    if idx.len() < k {
        return Err(Error::arg(format!("query {} has fewer than k = {k} real items", cands.query_id)));
    }
    idx.sort_by(|&a, &b| cands.items[b].base_score.total_cmp(&cands.items[a].base_score));
    idx.truncate(k);
    Slate::new(idx, cands)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub lambda: f64,
    pub mean: MeanScore,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Index of the row with the highest mean goodness (first on ties).
    pub best: usize,
}

impl SweepResult {
    pub fn best_row(&self) -> &SweepRow {
        &self.rows[self.best]
    }
}

/// Scores every slate of one lambda.
pub fn evaluate_lambda(
    sets: &[&CandidateSet],
    schema: &CategoricalSchema,
    lambda: f64,
    k: usize,
    alpha: f64,
) -> Result<Vec<SlateScore>> {
    sets.iter()
        .map(|set| score_slate(set, &mmr_rerank(set, schema, lambda, k)?, schema, alpha, k))
        .collect()
}

/// Evaluates every grid value over all sets.
pub fn lambda_sweep(
    sets: &[&CandidateSet],
    schema: &CategoricalSchema,
    grid: &[f64],
    k: usize,
    alpha: f64,
) -> Result<SweepResult> {
    validate_grid(grid)?;
    if sets.is_empty() {
        return Err(Error::arg("lambda sweep over zero queries"));
    }
    let rows: Vec<SweepRow> = grid
        .par_iter()
        .map(|&lambda| {
            let scores = evaluate_lambda(sets, schema, lambda, k, alpha)?;
            Ok(SweepRow {
                lambda,
                mean: MeanScore::from_scores(&scores),
            })
        })
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, row) in rows.iter().enumerate() {
        if row.mean.goodness > rows[best].mean.goodness {
            best = i;
        }
    }
    Ok(SweepResult { rows, best })
}
