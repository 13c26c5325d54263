//! Synthetic graded-relevance data with binary attributes that correlate
//! with relevance, so that a relevance-only ordering over-represents some
//! categories at the top.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{RawItem, RawQuery};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub num_queries: usize,
    pub items_per_query: usize,
    pub continuous_features: usize,
    pub binary_features: usize,
    /// Log-odds change of each binary attribute per unit of latent relevance.
    pub attribute_coupling: Vec<f64>,
    /// Standard deviation of the label noise.
    pub label_noise: f64,
    /// Standard deviation of the continuous feature noise.
    pub feature_noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            num_queries: 200,
            items_per_query: 20,
            continuous_features: 10,
            binary_features: 2,
            attribute_coupling: vec![1.5, 0.8],
            label_noise: 0.6,
            feature_noise: 0.7,
            seed: 0,
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Generates queries whose raw features are the continuous columns followed
/// by the binary attribute columns. Labels are integers in `0..=4`.
pub fn generate(cfg: &SyntheticConfig) -> Result<Vec<RawQuery>> {
    if cfg.items_per_query < 2 || cfg.num_queries == 0 {
        return Err(Error::arg("synthetic data needs queries with at least two items"));
    }
    if cfg.attribute_coupling.len() != cfg.binary_features {
        return Err(Error::arg("one coupling value per binary attribute required"));
    }
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // fixed loadings shared by all queries: each continuous feature mixes
    // relevance with the attributes
    let relevance_loading: Vec<f64> = (0..cfg.continuous_features)
        .map(|l| if l % 3 == 2 { 0.0 } else { 0.4 + 0.6 * rng.random::<f64>() })
        .collect();
    let attribute_loading: Vec<Vec<f64>> = (0..cfg.continuous_features)
        .map(|_| (0..cfg.binary_features).map(|_| 1.5 * normal.sample(&mut rng)).collect())
        .collect();

    let mut queries = Vec::with_capacity(cfg.num_queries);
    for q in 0..cfg.num_queries {
        let offset = 0.5 * normal.sample(&mut rng);
        let prior: Vec<f64> = (0..cfg.binary_features)
            .map(|_| rng.random_range(-0.8..0.8))
            .collect();
        let mut items = Vec::with_capacity(cfg.items_per_query);
        for _ in 0..cfg.items_per_query {
            let z: f64 = normal.sample(&mut rng);
            let attrs: Vec<f64> = prior
                .iter()
                .zip(&cfg.attribute_coupling)
                .map(|(p, c)| if rng.random::<f64>() < sigmoid(p + c * z) { 1.0 } else { 0.0 })
                .collect();
            let mut features: Vec<f64> = (0..cfg.continuous_features)
                .map(|l| {
                    let attr: f64 = attribute_loading[l].iter().zip(&attrs).map(|(w, a)| w * a).sum();
                    relevance_loading[l] * z + attr + cfg.feature_noise * normal.sample(&mut rng)
                })
                .collect();
            features.extend(&attrs);
            let grade = 1.5 + offset + 1.2 * z + cfg.label_noise * normal.sample(&mut rng);
            items.push(RawItem {
                label: grade.round().clamp(0.0, 4.0),
                features,
                comment: None,
            });
        }
        queries.push(RawQuery {
            query_id: format!("{}", q + 1),
            items,
        });
    }
    Ok(queries)
}

/// Splits queries into consecutive train/valid/test blocks by fraction.
pub fn split(queries: Vec<RawQuery>, train: f64, valid: f64) -> Result<[Vec<RawQuery>; 3]> {
    if !(train > 0.0 && valid >= 0.0 && train + valid < 1.0) {
        return Err(Error::arg("split fractions must leave room for a test split"));
    }
    let n = queries.len();
    let n_train = (n as f64 * train).round() as usize;
    let n_valid = (n as f64 * valid).round() as usize;
    let mut rest = queries;
    let test = rest.split_off((n_train + n_valid).min(n));
    let valid = rest.split_off(n_train.min(rest.len()));
    Ok([rest, valid, test])
}
