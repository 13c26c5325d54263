//! Numerical self-checks of the training gradients on toy instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{CandidateSet, CategoricalSchema, CategoricalVariable, DistributionalCriteria, Item, Slate};
use crate::error::{Error, Result};
use crate::metrics::score_slate;
use crate::model::{Actions, CssoNetwork, ModelConfig};
use crate::nn::{grad_check, GradCheckReport, Graph, Mat, ParamStore, Phase, FD_STEP};
use crate::training::loss::supervised_loss_node;
use crate::training::{reinforce_gradient, Baseline};

/// Toy instances: `count` sets of `n` items with two one-hot variables
/// (2 and 3 categories), two dense features and labels in `0..=2`.
pub fn toy_instance(n: usize, count: usize, seed: u64) -> Result<(CategoricalSchema, Vec<CandidateSet>)> {
    let schema = CategoricalSchema::new(
        vec![
            CategoricalVariable {
                name: "a".into(),
                indices: vec![0, 1],
            },
            CategoricalVariable {
                name: "b".into(),
                indices: vec![2, 3, 4],
            },
        ],
        7,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sets = (0..count)
        .map(|q| {
            let items: Vec<Item> = (0..n)
                .map(|_| {
                    let mut f = vec![0.0; 7];
                    f[rng.random_range(0..2)] = 1.0;
                    f[2 + rng.random_range(0..3)] = 1.0;
                    f[5] = rng.random_range(-1.0..1.0);
                    f[6] = rng.random_range(-1.0..1.0);
                    let label = rng.random_range(0..3) as f64;
                    let score = f[6];
                    Item::new(f, label, score)
                })
                .collect();
            let a: f64 = rng.random_range(0.2..0.8);
            let raw: Vec<f64> = (0..3).map(|_| rng.random_range(0.1..1.0)).collect();
            let s: f64 = raw.iter().sum();
            let b = raw.iter().map(|v| v / s).collect();
            Ok(CandidateSet {
                query_id: format!("toy{q}"),
                items,
                criteria: DistributionalCriteria::new(vec![vec![a, 1.0 - a], b])?,
            })
        })
        .collect::<Result<_>>()?;
    Ok((schema, sets))
}

/// Finite-difference check of the batch-summed supervised loss along fixed
/// (teacher-forced) trajectories.
pub fn check_supervised_gradient(
    n: usize,
    k: usize,
    hidden: usize,
    batch: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let (schema, sets) = toy_instance(n, batch, seed)?;
    let cfg = ModelConfig {
        embed_dim: hidden,
        hidden_dim: hidden,
        dropout: 0.0,
        ..ModelConfig::new(schema.feature_dim(), schema.total_categories(), k)
    };
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let network = CssoNetwork::new(cfg, &mut store, &mut rng)?;
    let actions: Vec<Vec<usize>> = (0..batch)
        .map(|b| (0..k).map(|t| (t * 2 + b) % n).collect())
        .collect();
    if actions.iter().any(|a| {
        let mut s = a.clone();
        s.sort();
        s.dedup();
        s.len() != k
    }) {
        return Err(Error::arg("toy trajectory needs k distinct items; use n coprime to 2 or n >= 2k"));
    }
    let refs: Vec<&CandidateSet> = sets.iter().collect();
    grad_check(
        &store,
        |s, g: &mut Graph| {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let r = network.rollout(g, s, &refs, &schema, Actions::Forced(&actions), Phase::Train, &mut rng)?;
            let l = supervised_loss_node(g, &r, &refs, &schema, 0.5, 0.1)?;
            Ok(g.sum_all(l))
        },
        FD_STEP,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyGradientReport {
    /// Trainable gradient entries compared.
    pub components: usize,
    /// Slates sampled in total.
    pub samples: usize,
    /// Largest `|estimate - exact| / standard error` over all entries.
    pub max_z: f64,
    /// Entries farther than three standard errors from the exact value.
    pub outside_3se: usize,
    /// Largest exact gradient magnitude, to show the check is not vacuous.
    pub max_abs_exact: f64,
}

/// Compares the sampled policy-gradient estimate (fixed baseline of zero)
/// with the exact gradient of the expected reward on one `n`-item toy set.
/// The exact value enumerates every ordered `k`-slate and differentiates
/// `sum_s pi(s) R(s)` through the same graph.
pub fn check_policy_gradient(
    n: usize,
    k: usize,
    batches: usize,
    batch_size: usize,
    seed: u64,
) -> Result<PolicyGradientReport> {
    if batches < 2 || batch_size == 0 {
        return Err(Error::arg("need at least two batches to estimate a standard error"));
    }
    let alpha = 0.5;
    let (schema, sets) = toy_instance(n, 1, seed)?;
    let set = &sets[0];
    let cfg = ModelConfig {
        embed_dim: 4,
        hidden_dim: 4,
        dropout: 0.0,
        batch_norm: false,
        ..ModelConfig::new(schema.feature_dim(), schema.total_categories(), k)
    };
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let network = CssoNetwork::new(cfg, &mut store, &mut rng)?;

    let slates = ordered_slates(n, k);
    let rows = vec![set; slates.len()];
    let mut g = Graph::new();
    let r = network.rollout(&mut g, &store, &rows, &schema, Actions::Forced(&slates), Phase::Train, &mut rng)?;
    let rewards = slates
        .iter()
        .map(|s| Ok(score_slate(set, &Slate::new(s.clone(), set)?, &schema, alpha, k)?.reward))
        .collect::<Result<Vec<f64>>>()?;
    let logp = r.trajectory_log_prob(&mut g)?;
    let p = g.exp(logp);
    let total_p: f64 = g.value(p).sum();
    if (total_p - 1.0).abs() > 1e-9 {
        return Err(Error::Numeric {
            param: "slate distribution".into(),
            detail: format!("probabilities of all slates sum to {total_p}"),
        });
    }
    let weighted = g.mul_const(p, Mat::from_shape_vec((slates.len(), 1), rewards).expect("column"))?;
    let expected = g.sum_all(weighted);
    let exact = g.backward(expected)?.flatten(&store);

    // per-batch means of the estimator; their spread gives the standard error
    let batch_rows = vec![set; batch_size];
    let baseline = Baseline::ema(0.99)?;
    let dim = exact.len();
    let mut sum = vec![0.0; dim];
    let mut sum_sq = vec![0.0; dim];
    for _ in 0..batches {
        let bg = reinforce_gradient(&network, &store, &batch_rows, &schema, alpha, &baseline, &mut rng)?;
        // the step direction descends -E[R]
        for (i, v) in bg.grads.flatten(&store).into_iter().enumerate() {
            sum[i] -= v;
            sum_sq[i] += v * v;
        }
    }
    let b = batches as f64;
    let mut max_z: f64 = 0.0;
    let mut outside = 0;
    for i in 0..dim {
        let mean = sum[i] / b;
        let var = ((sum_sq[i] - b * mean * mean) / (b - 1.0)).max(0.0);
        let se = (var / b).sqrt();
        let diff = (mean - exact[i]).abs();
        let z = if se > 0.0 {
            diff / se
        } else if diff <= 1e-12 {
            0.0
        } else {
            f64::INFINITY
        };
        if z > 3.0 {
            outside += 1;
        }
        max_z = max_z.max(z);
    }
    Ok(PolicyGradientReport {
        components: dim,
        samples: batches * batch_size,
        max_z,
        outside_3se: outside,
        max_abs_exact: exact.iter().fold(0.0, |m, v| m.max(v.abs())),
    })
}

fn ordered_slates(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..k {
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<usize>| {
                (0..n)
                    .filter(|i| !prefix.contains(i))
                    .map(|i| {
                        let mut s = prefix.clone();
                        s.push(i);
                        s
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
    }
    out
}
