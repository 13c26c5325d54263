mod common;

use std::collections::HashMap;
use std::fs;

use csso::harness::config::ExperimentConfig;
use csso::harness::pipeline::{load_named_split, load_split, simulate_splits, write_simulated, Simulated};
use csso::harness::sidecar::{parse_sidecar_str, Sidecar};
use csso::harness::synthetic::{generate, split, SyntheticConfig};
use csso::mmr::{default_grid, lambda_sweep};
use csso::simulate::SimConfig;
use csso::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn simulated(seed: u64) -> Simulated {
    let raw = generate(&SyntheticConfig {
        num_queries: 20,
        seed,
        ..SyntheticConfig::default()
    })
    .unwrap();
    let [tr, va, te] = split(raw, 0.6, 0.2).unwrap();
    let sim = SimConfig {
        nu: 5,
        max_len: 12,
        seed,
        ..SimConfig::web30k()
    };
    simulate_splits(&tr, &va, &te, 2, &sim).unwrap()
}

#[test]
fn written_splits_parse_back_identically() {
    let data = simulated(3);
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_simulated(dir.path(), &data, &ExperimentConfig::default()).unwrap();
    let loaded_cfg = ExperimentConfig::load(&dir.path().join("experiment.toml")).unwrap();
    assert_eq!(loaded_cfg.schema().unwrap(), data.schema);
    for (name, sets) in [("train", &data.train), ("valid", &data.valid), ("test", &data.test)] {
        let back = load_named_split(&loaded_cfg, name).unwrap();
        assert_eq!(&back, sets, "{name} differs after a round trip");
    }
    assert_eq!(cfg.schema().unwrap(), data.schema);
}

#[test]
fn missing_criteria_is_an_error() {
    let data = simulated(4);
    let dir = tempfile::tempdir().unwrap();
    write_simulated(dir.path(), &data, &ExperimentConfig::default()).unwrap();
    let sidecar_text = fs::read_to_string(dir.path().join("criteria.txt")).unwrap();
    let dropped = &data.test[0].query_id;
    let kept: String = sidecar_text
        .lines()
        .filter(|l| !l.starts_with(&format!("{dropped} ")) && !l.starts_with(&format!("{dropped}\t")))
        .map(|l| format!("{l}\n"))
        .collect();
    assert!(kept.len() < sidecar_text.len(), "sidecar record of {dropped} not found");
    let sidecar: Sidecar = parse_sidecar_str(&kept).unwrap();
    let err = load_split(
        &dir.path().join("test.letor"),
        &sidecar,
        &data.schema,
        data.layout.base_score_column(),
    )
    .unwrap_err();
    assert!(err.to_string().contains(dropped.as_str()), "{err}");
}

#[test]
fn simulation_output_shape() {
    let data = simulated(5);
    let mut criteria: HashMap<String, Vec<Vec<f64>>> = HashMap::new();
    for set in data.train.iter().chain(&data.valid).chain(&data.test) {
        assert_eq!(set.len(), 12);
        assert!(set.padding_is_trailing());
        assert!(set.items.iter().all(|it| it.label == 0.0 || it.label == 1.0));
        let parent = set.query_id.rsplit_once('_').unwrap().0.to_string();
        let d = set.criteria.targets().to_vec();
        assert_eq!(criteria.entry(parent).or_insert_with(|| d.clone()), &d);
    }
    assert_eq!(data.train.len(), 12 * 5);
}

#[test]
fn simulation_is_reproducible_and_schedule_free() {
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = one.install(|| simulated(6));
    let b = four.install(|| simulated(6));
    assert_eq!(a.train, b.train);
    assert_eq!(a.test, b.test);
    assert_ne!(a.train, simulated(7).train);

    let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write_simulated(da.path(), &a, &ExperimentConfig::default()).unwrap();
    write_simulated(db.path(), &b, &ExperimentConfig::default()).unwrap();
    for f in ["train.letor", "valid.letor", "test.letor", "criteria.txt", "experiment.toml"] {
        assert_eq!(fs::read(da.path().join(f)).unwrap(), fs::read(db.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn full_diversification_lowers_mean_gap() {
    let schema = common::schema();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let sets: Vec<_> = (0..250).map(|_| common::random_set(&mut rng, &schema, 12, 0, None)).collect();
    let refs: Vec<_> = sets.iter().collect();
    let sweep = lambda_sweep(&refs, &schema, &default_grid(), 5, 0.5).unwrap();
    let first = &sweep.rows.first().unwrap().mean;
    let last = &sweep.rows.last().unwrap().mean;
    assert_eq!(sweep.rows.len(), 21);
    assert!(first.gap <= last.gap, "{} vs {}", first.gap, last.gap);
}

#[test]
fn config_errors_name_the_field() {
    let err = ExperimentConfig::from_toml_str("[train]\nalpha = 1.5\n")
        .and_then(|c| c.validate().map(|_| c))
        .unwrap_err();
    assert!(matches!(err, Error::Config { .. }), "{err:?}");
    assert!(err.to_string().contains("alpha"), "{err}");
}
