//! Supervised hybrid loss, both as plain functions over probability vectors
//! and as graph nodes over a [`Rollout`].
//!
//! The ranking part is a per-step cross-entropy between the policy and the
//! normalized labels of the items still available, weighted by the nDCG
//! discount of the step. The distribution part is a soft GAP computed from
//! the expected category mass the policy puts on each step.

use std::rc::Rc;

use crate::data::{categorical_slice, CandidateSet, CategoricalSchema, DistributionalCriteria};
use crate::error::{Error, Result};
use crate::metrics::categorical_gap;
use crate::model::Rollout;
use crate::nn::{Graph, Mat, Var};

/// Discount of 1-based step `t`: `1 / log2(t + 1)`.
pub fn step_weight(t: usize) -> f64 {
    1.0 / ((t + 1) as f64).log2()
}

/// Labels per step with already selected items zeroed: entry `t` masks
/// `actions[..t]`.
pub fn step_labels(labels: &[f64], actions: &[usize]) -> Vec<Vec<f64>> {
    let mut y = labels.to_vec();
    let mut out = Vec::with_capacity(actions.len());
    for &a in actions {
        out.push(y.clone());
        if let Some(v) = y.get_mut(a) {
            *v = 0.0;
        }
    }
    out
}

/// Label row normalized to sum 1, or `None` when it has no positive mass.
fn normalized(y: &[f64]) -> Option<Vec<f64>> {
    let total: f64 = y.iter().sum();
    (total > 0.0).then(|| y.iter().map(|v| v / total).collect())
}

/// `-sum_i (y_i / sum y) ln p_i`; 0 when every label is 0.
pub fn step_rank_loss(p: &[f64], y: &[f64]) -> Result<f64> {
    if p.len() != y.len() {
        return Err(Error::dim(format!("{} probabilities for {} labels", p.len(), y.len())));
    }
    if y.iter().any(|&v| v < 0.0) {
        return Err(Error::arg("labels must be non-negative"));
    }
    let Some(w) = normalized(y) else {
        return Ok(0.0);
    };
    Ok(-w
        .iter()
        .zip(p)
        .filter(|(w, _)| **w > 0.0)
        .map(|(w, p)| w * p.ln())
        .sum::<f64>())
}

/// Discount-weighted sum of step losses over a whole slate.
pub fn slate_rank_loss(probs: &[Vec<f64>], labels: &[Vec<f64>]) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::dim(format!("{} steps of policy, {} of labels", probs.len(), labels.len())));
    }
    probs
        .iter()
        .zip(labels)
        .enumerate()
        .map(|(t, (p, y))| Ok(step_weight(t + 1) * step_rank_loss(p, y)?))
        .sum()
}

/// Expected category distribution of each variable: the per-step
/// probability-weighted slices averaged over the `k` steps.
pub fn soft_slate_distribution(
    probs: &[Vec<f64>],
    cands: &CandidateSet,
    schema: &CategoricalSchema,
) -> Result<Vec<Vec<f64>>> {
    if probs.is_empty() {
        return Err(Error::arg("soft distribution of zero steps"));
    }
    let k = probs.len() as f64;
    let mut out: Vec<Vec<f64>> = schema
        .category_counts()
        .into_iter()
        .map(|c| vec![0.0; c])
        .collect();
    for p in probs {
        if p.len() != cands.len() {
            return Err(Error::dim(format!("policy over {} items for {} candidates", p.len(), cands.len())));
        }
        for (item, &pi) in cands.items.iter().zip(p) {
            if pi == 0.0 {
                continue;
            }
            for (j, dist) in out.iter_mut().enumerate() {
                let slice = categorical_slice(item, j, schema)?;
                dist.iter_mut().zip(&slice).for_each(|(d, s)| *d += pi * s / k);
            }
        }
    }
    Ok(out)
}

/// Mean L-infinity distance between targets and soft distributions.
pub fn soft_gap(criteria: &DistributionalCriteria, soft: &[Vec<f64>]) -> Result<f64> {
    if criteria.num_variables() != soft.len() || soft.is_empty() {
        return Err(Error::dim(format!(
            "{} targets for {} soft distributions",
            criteria.num_variables(),
            soft.len()
        )));
    }
    let total = criteria
        .targets()
        .iter()
        .zip(soft)
        .map(|(d, r)| categorical_gap(d, r))
        .sum::<Result<f64>>()?;
    Ok(total / soft.len() as f64)
}

/// `alpha * beta * L_rank + (1 - alpha) * soft GAP`.
pub fn supervised_loss(
    probs: &[Vec<f64>],
    labels: &[Vec<f64>],
    cands: &CandidateSet,
    schema: &CategoricalSchema,
    alpha: f64,
    beta: f64,
) -> Result<f64> {
    let rank = slate_rank_loss(probs, labels)?;
    let gap = if alpha < 1.0 {
        soft_gap(&cands.criteria, &soft_slate_distribution(probs, cands, schema)?)?
    } else {
        0.0
    };
    Ok(alpha * beta * rank + (1.0 - alpha) * gap)
}

/// `B x 1` ranking loss of every row of a rollout.
pub fn rank_loss_node(g: &mut Graph, rollout: &Rollout, sets: &[&CandidateSet]) -> Result<Var> {
    let n = rollout.n;
    let batch = sets.len();
    let mut total: Option<Var> = None;
    let step_y: Vec<Vec<Vec<f64>>> = sets
        .iter()
        .zip(&rollout.actions)
        .map(|(s, a)| step_labels(&s.labels(), a))
        .collect();
    for (t, &lp) in rollout.log_probs.iter().enumerate() {
        let mut target = Mat::zeros((batch, n));
        for (b, ys) in step_y.iter().enumerate() {
            if let Some(w) = normalized(&ys[t]) {
                target.row_mut(b).iter_mut().zip(&w).for_each(|(dst, v)| *dst = *v);
            }
        }
        let weighted = g.mul_const(lp, target)?;
        let row = g.sum_cols(weighted);
        let row = g.scale(row, -step_weight(t + 1));
        total = Some(match total {
            Some(acc) => g.add(acc, row)?,
            None => row,
        });
    }
    total.ok_or_else(|| Error::arg("rollout has no steps"))
}

/// `B x 1` soft GAP of every row of a rollout.
pub fn soft_gap_node(
    g: &mut Graph,
    rollout: &Rollout,
    sets: &[&CandidateSet],
    schema: &CategoricalSchema,
) -> Result<Var> {
    let n = rollout.n;
    let total_cats = schema.total_categories();
    // item-by-category matrix per row, zero rows beyond each set
    let mats: Vec<Mat> = sets
        .iter()
        .map(|set| {
            let mut m = Mat::zeros((n, total_cats));
            for (i, item) in set.items.iter().enumerate() {
                let mut col = 0;
                for j in 0..schema.num_variables() {
                    for v in categorical_slice(item, j, schema)? {
                        m[[i, col]] = v;
                        col += 1;
                    }
                }
            }
            Ok(m)
        })
        .collect::<Result<_>>()?;
    let mats = Rc::new(mats);
    let mut mass: Option<Var> = None;
    for &p in &rollout.probs {
        let gamma = g.row_mat_const(p, Rc::clone(&mats))?;
        mass = Some(match mass {
            Some(acc) => g.add(acc, gamma)?,
            None => gamma,
        });
    }
    let mass = mass.ok_or_else(|| Error::arg("rollout has no steps"))?;
    let soft = g.scale(mass, 1.0 / rollout.probs.len() as f64);

    let counts = schema.category_counts();
    let mut gap: Option<Var> = None;
    let mut start = 0;
    for (j, &width) in counts.iter().enumerate() {
        let mut target = Mat::zeros((sets.len(), width));
        for (b, set) in sets.iter().enumerate() {
            let d = &set.criteria.targets()[j];
            target.row_mut(b).iter_mut().zip(d).for_each(|(dst, v)| *dst = *v);
        }
        let r = g.slice_cols(soft, start, start + width)?;
        let d = g.constant(target);
        let diff = g.sub(d, r)?;
        let abs = g.abs(diff);
        let worst = g.row_max(abs);
        gap = Some(match gap {
            Some(acc) => g.add(acc, worst)?,
            None => worst,
        });
        start += width;
    }
    let gap = gap.ok_or_else(|| Error::arg("GAP needs at least one categorical variable"))?;
    Ok(g.scale(gap, 1.0 / counts.len() as f64))
}

/// `B x 1` supervised loss of every row of a rollout.
pub fn supervised_loss_node(
    g: &mut Graph,
    rollout: &Rollout,
    sets: &[&CandidateSet],
    schema: &CategoricalSchema,
    alpha: f64,
    beta: f64,
) -> Result<Var> {
    let rank = rank_loss_node(g, rollout, sets)?;
    let rank = g.scale(rank, alpha * beta);
    if alpha >= 1.0 {
        return Ok(rank);
    }
    let gap = soft_gap_node(g, rollout, sets, schema)?;
    let gap = g.scale(gap, 1.0 - alpha);
    g.add(rank, gap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::fixtures::{binary_schema, cands, item};
    use crate::data::{slate_distribution, Slate};
    use crate::metrics::gap;
    use approx::assert_abs_diff_eq;

    #[test]
    fn step_loss_examples() {
        assert_eq!(step_rank_loss(&[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0]).unwrap(), 0.0);
        assert_abs_diff_eq!(
            step_rank_loss(&[0.5, 0.25, 0.25], &[1.0, 1.0, 0.0]).unwrap(),
            1.0397,
            epsilon = 1e-4
        );
        assert_abs_diff_eq!(
            step_rank_loss(&[0.25; 4], &[2.0; 4]).unwrap(),
            4f64.ln(),
            epsilon = 1e-12
        );
        assert_eq!(step_rank_loss(&[0.5, 0.5], &[0.0, 0.0]).unwrap(), 0.0);
        assert!(step_rank_loss(&[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn slate_loss_weights() {
        assert_eq!(step_weight(1), 1.0);
        let p = vec![vec![0.5, 0.25, 0.25]];
        let y = vec![vec![1.0, 1.0, 0.0]];
        assert_eq!(slate_rank_loss(&p, &y).unwrap(), step_rank_loss(&p[0], &y[0]).unwrap());
        let p2 = vec![vec![0.5, 0.25, 0.25], vec![0.0, 0.5, 0.5]];
        let y2 = step_labels(&[1.0, 1.0, 2.0], &[0, 2]);
        assert_eq!(y2, vec![vec![1.0, 1.0, 2.0], vec![0.0, 1.0, 2.0]]);
        let doubled: Vec<Vec<f64>> = y2.iter().map(|y| y.iter().map(|v| 2.0 * v).collect()).collect();
        assert_abs_diff_eq!(
            slate_rank_loss(&p2, &y2).unwrap(),
            slate_rank_loss(&p2, &doubled).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn soft_distribution_examples() {
        let schema = binary_schema();
        let set = cands(
            vec![item(0, 1.0, 0.5), item(1, 0.0, 0.4), item(0, 0.0, 0.3)],
            vec![0.5, 0.5],
        );
        let uniform = vec![vec![0.5, 0.5, 0.0]; 2];
        assert_eq!(soft_slate_distribution(&uniform, &set, &schema).unwrap(), vec![vec![0.5, 0.5]]);

        let one_hot = vec![vec![0.0, 0.0, 1.0], vec![0.0, 1.0, 0.0]];
        let slate = Slate::new(vec![2, 1], &set).unwrap();
        let soft = soft_slate_distribution(&one_hot, &set, &schema).unwrap();
        assert_eq!(soft, slate_distribution(&slate, &set, &schema).unwrap());
        assert_eq!(
            soft_gap(&set.criteria, &soft).unwrap(),
            gap(&set.criteria, &slate_distribution(&slate, &set, &schema).unwrap()).unwrap()
        );
        assert_eq!(soft_gap(&set.criteria, &[vec![0.5, 0.5]]).unwrap(), 0.0);
    }

    #[test]
    fn supervised_loss_mixes_terms() {
        let schema = binary_schema();
        let set = cands(
            vec![item(0, 1.0, 0.5), item(0, 1.0, 0.4), item(1, 0.0, 0.3)],
            vec![0.3, 0.7],
        );
        let p = vec![vec![0.5, 0.25, 0.25]];
        let y = vec![vec![1.0, 1.0, 0.0]];
        let rank = slate_rank_loss(&p, &y).unwrap();
        let soft = soft_gap(&set.criteria, &soft_slate_distribution(&p, &set, &schema).unwrap()).unwrap();
        assert_abs_diff_eq!(soft, 0.45, epsilon = 1e-12);
        assert_abs_diff_eq!(
            supervised_loss(&p, &y, &set, &schema, 1.0, 0.1).unwrap(),
            0.1 * rank,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            supervised_loss(&p, &y, &set, &schema, 0.0, 0.1).unwrap(),
            soft,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(0.5 * 0.1 * 1.0397 + 0.5 * 0.2, 0.15199, epsilon = 1e-5);
    }
}
