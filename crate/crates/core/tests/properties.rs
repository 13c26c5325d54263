mod common;

use csso::data::{
    condition_info, infer_criteria, partial_slate_distribution, slate_distribution, CandidateSet, DistributionalCriteria,
    Item, Slate,
};
use csso::metrics::{gap, ndcg_at_k, slate_goodness, slate_reward};
use csso::mmr::{mmr_rerank, score_order};
use csso::model::{CssoModel, CssoNetwork, DecodeMode, ModelConfig};
use csso::nn::{masked_softmax, AdaBelief, ParamStore};
use csso::training::{
    reinforce_update, slate_rank_loss, step_labels, step_rank_loss, supervised_loss, Baseline,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn instance(seed: u64, real: usize, padding: usize) -> CandidateSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    common::random_set(&mut rng, &common::schema(), real, padding, None)
}

fn random_slate(seed: u64, set: &CandidateSet, k: usize) -> Slate {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..set.real_count()).collect();
    idx.shuffle(&mut rng);
    idx.truncate(k);
    Slate::new(idx, set).unwrap()
}

fn permutations(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n, k - 1) {
        for i in (0..n).filter(|i| !p.contains(i)) {
            let mut q = p.clone();
            q.push(i);
            out.push(q);
        }
    }
    out
}

/// Every step spreads its mass over the items that are still available.
fn soft_policy(seed: u64, set: &CandidateSet, slate: &Slate) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut taken = vec![false; set.len()];
    slate
        .indices
        .iter()
        .map(|&a| {
            let scores: Vec<f64> = (0..set.len()).map(|_| rng.random_range(-2.0..2.0)).collect();
            let forbidden: Vec<bool> = (0..set.len()).map(|i| taken[i] || set.items[i].is_padding).collect();
            taken[a] = true;
            masked_softmax(&scores, &forbidden).unwrap()
        })
        .collect()
}

proptest! {
    #[test]
    fn slate_distributions_are_probability_vectors(seed in any::<u64>(), real in 1usize..9, pad in 0usize..3, k in 1usize..6) {
        let set = instance(seed, real, pad);
        let slate = random_slate(seed, &set, k.min(real));
        let schema = common::schema();
        let dists = slate_distribution(&slate, &set, &schema).unwrap();
        for d in &dists {
            prop_assert!(d.iter().all(|&v| v >= 0.0));
            prop_assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        prop_assert_eq!(&dists, &partial_slate_distribution(&slate.indices, &set, &schema).unwrap());
        for t in 1..=slate.len() {
            let ci = condition_info(&set.criteria, &slate.indices[..t], &set, &schema).unwrap();
            for delta in &ci.deltas {
                prop_assert!(delta.iter().sum::<f64>().abs() < 1e-12);
            }
        }
        let ci0 = condition_info(&set.criteria, &[], &set, &schema).unwrap();
        prop_assert_eq!(&ci0.deltas, &set.criteria.targets().to_vec());
    }

    #[test]
    fn identical_items_imply_their_own_criteria(seed in any::<u64>(), real in 1usize..8, pad in 0usize..3) {
        let template = instance(seed, 1, 0).items[0].clone();
        let mut set = instance(seed, real, pad);
        for it in set.items.iter_mut().filter(|it| !it.is_padding) {
            *it = template.clone();
        }
        let inferred = infer_criteria(&set, &common::schema()).unwrap();
        let schema = common::schema();
        for (j, v) in schema.variables().iter().enumerate() {
            let slice: Vec<f64> = v.indices.iter().map(|&i| template.features[i]).collect();
            prop_assert_eq!(&inferred.targets()[j], &slice);
        }
    }

    #[test]
    fn label_sorted_slate_is_ideal(seed in any::<u64>(), n in 1usize..7, k in 1usize..4) {
        let k = k.min(n);
        let set = instance(seed, n, 0);
        let labels = set.labels();
        prop_assume!(labels.iter().any(|&l| l > 0.0));
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| labels[b].total_cmp(&labels[a]));
        order.truncate(k);
        let best = ndcg_at_k(&labels, &Slate::new(order, &set).unwrap(), k).unwrap();
        prop_assert!((best - 1.0).abs() < 1e-12);
        for p in permutations(n, k) {
            let v = ndcg_at_k(&labels, &Slate::new(p, &set).unwrap(), k).unwrap();
            prop_assert!(v <= best + 1e-12);
        }
    }

    #[test]
    fn gap_ignores_slate_order(seed in any::<u64>(), real in 2usize..9, k in 2usize..6) {
        let set = instance(seed, real, 1);
        let schema = common::schema();
        let slate = random_slate(seed, &set, k.min(real));
        let mut rev = slate.indices.clone();
        rev.reverse();
        let rev = Slate::new(rev, &set).unwrap();
        let a = gap(&set.criteria, &slate_distribution(&slate, &set, &schema).unwrap()).unwrap();
        let b = gap(&set.criteria, &slate_distribution(&rev, &set, &schema).unwrap()).unwrap();
        prop_assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn goodness_orders_and_matches_balanced_reward(n in 0.0f64..1.0, g in 0.0f64..1.0, d in 1e-6f64..0.5) {
        prop_assert!(slate_goodness(n + d, g) > slate_goodness(n, g));
        prop_assert!(slate_goodness(n, g + d) < slate_goodness(n, g));
        prop_assert!((slate_reward(n, g, 0.5) - (slate_goodness(n, g) - 0.5)).abs() < 1e-15);
    }

    #[test]
    fn masked_softmax_is_a_shift_invariant_distribution(
        scores in prop::collection::vec(-30.0f64..30.0, 1..10),
        mask_seed in any::<u64>(),
        shift in -50.0f64..50.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(mask_seed);
        let mut forbidden: Vec<bool> = scores.iter().map(|_| rng.random_bool(0.3)).collect();
        let keep = rng.random_range(0..scores.len());
        forbidden[keep] = false;
        let p = masked_softmax(&scores, &forbidden).unwrap();
        prop_assert!(p.iter().all(|&v| v >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(p.iter().zip(&forbidden).filter(|(_, &f)| f).all(|(&v, _)| v == 0.0));
        let shifted: Vec<f64> = scores.iter().map(|s| s + shift).collect();
        let q = masked_softmax(&shifted, &forbidden).unwrap();
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_loss_is_bounded_by_label_entropy(
        labels in prop::collection::vec(0.0f64..4.0, 2..8),
        seed in any::<u64>(),
    ) {
        let total: f64 = labels.iter().sum();
        prop_assume!(total > 0.0);
        let w: Vec<f64> = labels.iter().map(|l| l / total).collect();
        let entropy: f64 = -w.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scores: Vec<f64> = labels.iter().map(|_| rng.random_range(-3.0..3.0)).collect();
        let p = masked_softmax(&scores, &vec![false; labels.len()]).unwrap();
        prop_assert!(step_rank_loss(&p, &labels).unwrap() >= entropy - 1e-12);
        // equality when the policy is the normalized labels
        prop_assert!((step_rank_loss(&w, &labels).unwrap() - entropy).abs() < 1e-12);
    }

    #[test]
    fn supervised_loss_ignores_label_scale(seed in any::<u64>(), real in 3usize..9, factor in 0.01f64..100.0, alpha in 0.0f64..1.0) {
        let set = instance(seed, real, 1);
        let schema = common::schema();
        let slate = random_slate(seed, &set, 3);
        let probs = soft_policy(seed, &set, &slate);
        let y = step_labels(&set.labels(), &slate.indices);
        let scaled: Vec<Vec<f64>> = y.iter().map(|r| r.iter().map(|v| v * factor).collect()).collect();
        let a = supervised_loss(&probs, &y, &set, &schema, alpha, 0.1).unwrap();
        let b = supervised_loss(&probs, &scaled, &set, &schema, alpha, 0.1).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        prop_assert!((slate_rank_loss(&probs, &y).unwrap() - slate_rank_loss(&probs, &scaled).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn ranking_only_loss_ignores_criteria(seed in any::<u64>(), real in 3usize..9) {
        let set = instance(seed, real, 0);
        let schema = common::schema();
        let slate = random_slate(seed, &set, 3);
        let probs = soft_policy(seed, &set, &slate);
        let y = step_labels(&set.labels(), &slate.indices);
        let mut other = set.clone();
        other.criteria = DistributionalCriteria::new(vec![vec![1.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
        prop_assert_eq!(
            supervised_loss(&probs, &y, &set, &schema, 1.0, 0.1).unwrap(),
            supervised_loss(&probs, &y, &other, &schema, 1.0, 0.1).unwrap()
        );
    }

    #[test]
    fn mmr_slates_are_valid_and_lambda_one_is_score_order(seed in any::<u64>(), real in 1usize..10, pad in 0usize..3, k in 1usize..5, lambda in 0.0f64..=1.0) {
        let k = k.min(real);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let set = common::random_set(&mut rng, &common::schema(), real, pad, Some(4));
        let schema = common::schema();
        let s = mmr_rerank(&set, &schema, lambda, k).unwrap();
        let mut seen = s.indices.clone();
        seen.sort();
        seen.dedup();
        prop_assert_eq!(seen.len(), k);
        prop_assert!(s.indices.iter().all(|&i| !set.items[i].is_padding));
        prop_assert_eq!(mmr_rerank(&set, &schema, 1.0, k).unwrap(), score_order(&set, k).unwrap());
    }
}

fn small_model(k: usize, use_ci: bool, batch_norm: bool) -> CssoModel {
    let schema = common::schema();
    let cfg = ModelConfig {
        embed_dim: 6,
        hidden_dim: 6,
        use_condition_info: use_ci,
        batch_norm,
        ..ModelConfig::new(schema.feature_dim(), schema.total_categories(), k)
    };
    CssoModel::new(cfg, 11).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ablated_model_never_reads_criteria(seed in any::<u64>(), real in 3usize..9) {
        let schema = common::schema();
        let model = small_model(3, false, true);
        let set = instance(seed, real, 2);
        let mut other = set.clone();
        other.criteria = DistributionalCriteria::new(vec![vec![0.0, 1.0], vec![1.0, 0.0, 0.0]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = model.generate_slate(&set, &schema, DecodeMode::Greedy, &mut rng).unwrap();
        let b = model.generate_slate(&other, &schema, DecodeMode::Greedy, &mut rng).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn conditioned_model_reacts_to_criteria(seed in any::<u64>(), real in 3usize..9) {
        let schema = common::schema();
        let model = small_model(3, true, true);
        let set = instance(seed, real, 0);
        let mut other = set.clone();
        let flipped: Vec<Vec<f64>> = set.criteria.targets().iter().map(|d| d.iter().rev().copied().collect()).collect();
        prop_assume!(flipped != set.criteria.targets());
        other.criteria = DistributionalCriteria::new(flipped).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = model.generate_slate(&set, &schema, DecodeMode::Greedy, &mut rng).unwrap();
        let b = model.generate_slate(&other, &schema, DecodeMode::Greedy, &mut rng).unwrap();
        prop_assert_ne!(a.probs, b.probs);
    }

    #[test]
    fn sampled_policies_exclude_previous_picks(seed in any::<u64>(), real in 3usize..9, pad in 0usize..3) {
        let schema = common::schema();
        let model = small_model(3, true, true);
        let set = instance(seed, real, pad);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let out = model.generate_slate(&set, &schema, DecodeMode::Sample, &mut rng).unwrap();
        for (t, p) in out.probs.iter().enumerate() {
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            for &prev in &out.slate.indices[..t] {
                prop_assert_eq!(p[prev], 0.0);
            }
            for (i, it) in set.items.iter().enumerate() {
                if it.is_padding {
                    prop_assert_eq!(p[i], 0.0);
                }
            }
        }
        let replay = model.replay_log_prob(&[&set], &schema, std::slice::from_ref(&out.slate.indices)).unwrap();
        let direct: f64 = out.probs.iter().zip(&out.slate.indices).map(|(p, &a)| p[a].ln()).sum();
        prop_assert!((replay[0] - direct).abs() < 1e-10);
    }
}

/// With interchangeable items every slate earns the same reward, so the
/// batch-mean baseline makes the advantage exactly zero and the step leaves
/// every trainable value untouched; batch-norm running statistics still
/// move.
#[test]
fn zero_advantage_step_changes_no_weights() {
    let schema = common::schema();
    for batch_norm in [false, true] {
        let model = small_model(2, true, batch_norm);
        let network: &CssoNetwork = &model.network;
        let mut store: ParamStore = model.store.clone();
        let mut set = instance(5, 6, 0);
        let first = set.items[0].clone();
        set.items.iter_mut().for_each(|it| *it = first.clone());
        let optimizer = AdaBelief::new(1e-2);
        let mut baseline = Baseline::batch_mean();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let step = reinforce_update(network, &mut store, &optimizer, &mut baseline, &[&set, &set], &schema, 0.5, &mut rng).unwrap();
        assert!(step.grads.flatten(&store).iter().all(|&g| g == 0.0));
        let mut moved_buffers = 0;
        for ((_, before), (_, after)) in model.store.iter().zip(store.iter()) {
            if before.trainable {
                assert_eq!(before.value, after.value, "{}", before.name);
            } else if before.value != after.value {
                moved_buffers += 1;
            }
        }
        assert_eq!(moved_buffers > 0, batch_norm);
        assert_eq!(baseline.value, step.returns[0]);
    }
}

/// The moving-average baseline used for a batch is the value from before
/// that batch; the batch only enters afterwards.
#[test]
fn ema_baseline_lags_one_batch() {
    let schema = common::schema();
    let model = small_model(2, true, false);
    let mut store = model.store.clone();
    let optimizer = AdaBelief::new(1e-3);
    let mut baseline = Baseline::ema(0.99).unwrap();
    baseline.value = 0.25;
    let sets: Vec<CandidateSet> = (0..4).map(|s| instance(s, 5, 0)).collect();
    let refs: Vec<&CandidateSet> = sets.iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let step = reinforce_update(&model.network, &mut store, &optimizer, &mut baseline, &refs, &schema, 0.5, &mut rng).unwrap();
    let mean = step.returns.iter().sum::<f64>() / 4.0;
    assert!((baseline.value - (0.99 * 0.25 + 0.01 * mean)).abs() < 1e-15);
}

#[test]
fn padding_items_have_zero_slices() {
    let pad = Item::padding(7);
    assert!(pad.is_padding);
    assert!(pad.features.iter().all(|&v| v == 0.0));
}
