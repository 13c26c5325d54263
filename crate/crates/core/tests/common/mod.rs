#![allow(dead_code)]

use csso::data::{CandidateSet, CategoricalSchema, CategoricalVariable, DistributionalCriteria, Item};
use rand::Rng;

/// Two variables (2 and 3 categories) followed by two dense features.
pub fn schema() -> CategoricalSchema {
    CategoricalSchema::new(
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
    )
    .unwrap()
}

pub fn random_distribution(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..len).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// `real` items then `padding` padding items. Scores are drawn from
/// `score_levels` distinct values when given, which forces ties.
pub fn random_set(
    rng: &mut impl Rng,
    schema: &CategoricalSchema,
    real: usize,
    padding: usize,
    score_levels: Option<usize>,
) -> CandidateSet {
    let counts = schema.category_counts();
    let mut items: Vec<Item> = (0..real)
        .map(|_| {
            let mut f = vec![0.0; schema.feature_dim()];
            let mut offset = 0;
            for &c in &counts {
                f[offset + rng.random_range(0..c)] = 1.0;
                offset += c;
            }
            for v in &mut f[offset..] {
                *v = rng.random_range(-1.0..1.0);
            }
            let score = match score_levels {
                Some(l) => rng.random_range(0..l) as f64,
                None => rng.random_range(-2.0..2.0),
            };
            Item::new(f, rng.random_range(0..5) as f64, score)
        })
        .collect();
    items.extend((0..padding).map(|_| Item::padding(schema.feature_dim())));
    let targets = counts.iter().map(|&c| random_distribution(rng, c)).collect();
    CandidateSet {
        query_id: format!("q{}", rng.random::<u32>()),
        items,
        criteria: DistributionalCriteria::new(targets).unwrap(),
    }
}
