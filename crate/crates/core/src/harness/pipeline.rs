//! Experiment steps shared by the command-line tool and the tests.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::data::{CandidateSet, CategoricalSchema, RawQuery};
use crate::error::{Error, Result};
use crate::metrics::{score_slate, SlateScore};
use crate::mmr::score_order;
use crate::simulate::{augment_dataset, select_variance_columns, AugmentedLayout, SimConfig};

use super::base_ranker::{LinearScorer, RIDGE_LAMBDA};
use super::config::{ExperimentConfig, SchemaConfig};
use super::letor::{parse_letor, to_items, write_letor};
use super::sidecar::{parse_sidecar, write_sidecar, Sidecar};

/// Output of the click simulation over train/valid/test raw splits.
#[derive(Debug, Clone)]
pub struct Simulated {
    pub layout: AugmentedLayout,
    pub schema: CategoricalSchema,
    pub scorer: LinearScorer,
    pub train: Vec<CandidateSet>,
    pub valid: Vec<CandidateSet>,
    pub test: Vec<CandidateSet>,
}

/// Fits the base ranker and picks the criteria columns on the training
/// split, then simulates clicks on every split.
pub fn simulate_splits(
    train: &[RawQuery],
    valid: &[RawQuery],
    test: &[RawQuery],
    criteria_columns: usize,
    sim: &SimConfig,
) -> Result<Simulated> {
    let scorer = LinearScorer::fit(train, RIDGE_LAMBDA)?;
    let columns = select_variance_columns(train, criteria_columns)?;
    if columns.len() < criteria_columns {
        log::warn!(
            "only {} binary columns available, {} requested",
            columns.len(),
            criteria_columns
        );
    }
    let all: Vec<RawQuery> = train.iter().chain(valid).chain(test).cloned().collect();
    let layout = AugmentedLayout::for_queries(&all, &columns)?;
    let run = |qs: &[RawQuery]| augment_dataset(qs, &scorer.score_queries(qs), &layout, sim);
    let (train, valid, test) = (run(train)?, run(valid)?, run(test)?);
    Ok(Simulated {
        schema: train.schema.clone(),
        layout,
        scorer,
        train: train.sets,
        valid: valid.sets,
        test: test.sets,
    })
}

/// Writes augmented splits, the criteria sidecar and an experiment config
/// pointing at them into `dir`; returns that config.
pub fn write_simulated(dir: &Path, data: &Simulated, base: &ExperimentConfig) -> Result<ExperimentConfig> {
    fs::create_dir_all(dir)?;
    let mut seen = std::collections::HashSet::new();
    for set in data.train.iter().chain(&data.valid).chain(&data.test) {
        if !seen.insert(set.query_id.as_str()) {
            return Err(Error::arg(format!("query id {} occurs in more than one split", set.query_id)));
        }
    }
    for (name, sets) in [("train", &data.train), ("valid", &data.valid), ("test", &data.test)] {
        let mut out = BufWriter::new(File::create(dir.join(format!("{name}.letor")))?);
        write_letor(&mut out, sets)?;
    }
    let mut side = BufWriter::new(File::create(dir.join("criteria.txt"))?);
    for sets in [&data.train, &data.valid, &data.test] {
        write_sidecar(&mut side, sets, &data.schema)?;
    }
    drop(side);

    let mut cfg = base.clone();
    cfg.paths.train = Some(PathBuf::from("train.letor"));
    cfg.paths.valid = Some(PathBuf::from("valid.letor"));
    cfg.paths.test = Some(PathBuf::from("test.letor"));
    cfg.paths.criteria = Some(PathBuf::from("criteria.txt"));
    cfg.paths.raw_train = None;
    cfg.paths.raw_valid = None;
    cfg.paths.raw_test = None;
    cfg.schema = Some(SchemaConfig::from_schema(&data.schema, data.layout.base_score_column()));
    fs::write(dir.join("experiment.toml"), cfg.to_toml_string()?)?;
    Ok(cfg)
}

/// Reads an augmented split and joins it with its criteria.
pub fn load_split(
    letor: &Path,
    sidecar: &Sidecar,
    schema: &CategoricalSchema,
    base_score_column: usize,
) -> Result<Vec<CandidateSet>> {
    parse_letor(letor)?
        .iter()
        .map(|q| {
            Ok(CandidateSet {
                query_id: q.query_id.clone(),
                items: to_items(q, schema.feature_dim(), base_score_column)?,
                criteria: sidecar.criteria_for(&q.query_id, schema)?,
            })
        })
        .collect()
}

/// Loads the named split (`train`, `valid` or `test`) of an experiment.
pub fn load_named_split(cfg: &ExperimentConfig, split: &str) -> Result<Vec<CandidateSet>> {
    let schema = cfg.schema()?;
    let sidecar = parse_sidecar(&cfg.require_path("criteria")?)?;
    load_split(&cfg.require_path(split)?, &sidecar, &schema, cfg.base_score_column()?)
}

/// Scores of the base ranker's own top-`k` on every set.
pub fn score_order_scores(
    sets: &[&CandidateSet],
    schema: &CategoricalSchema,
    k: usize,
    alpha: f64,
) -> Result<Vec<SlateScore>> {
    sets.iter()
        .map(|s| score_slate(s, &score_order(s, k)?, schema, alpha, k))
        .collect()
}
