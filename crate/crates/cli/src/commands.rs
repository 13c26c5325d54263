use std::fmt;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use csso::data::CandidateSet;
use csso::harness::config::ExperimentConfig;
use csso::harness::pipeline::{load_named_split, score_order_scores, simulate_splits, write_simulated};
use csso::harness::report::{
    write_query_scores, write_slates, write_summary, write_sweep, write_timings, write_train_log,
};
use csso::harness::synthetic::{generate, split, SyntheticConfig};
use csso::harness::verify::{check_policy_gradient, check_supervised_gradient};
use csso::harness::parse_letor;
use csso::metrics::MeanScore;
use csso::mmr::lambda_sweep;
use csso::model::{CssoModel, DecodeMode};
use csso::nn::Checkpoint;
use csso::training::{decodable, evaluate_model, train};
use rand::SeedableRng;

use crate::{Cli, Command, Mode, ModelArgs};

pub const CHECKPOINT_FILE: &str = "model.ckpt";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(csso::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(csso::Error::Config { .. }) => 1,
            CliError::Core(csso::Error::Numeric { .. }) => 3,
            CliError::Core(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<csso::Error> for CliError {
    fn from(e: csso::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Simulate => simulate(cli, &cfg),
        Command::Train => train_cmd(cli, &cfg),
        Command::Evaluate(args) => evaluate(cli, &cfg, args),
        Command::Rerank(args) => rerank(cli, &cfg, args),
        Command::SweepMmr(args) => sweep(cli, &cfg, args),
        Command::GradCheck => grad_check(&cfg),
    }
}

/// The config file (or defaults) with command-line overrides applied.
fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(alpha) = cli.alpha {
        cfg.train.alpha = alpha;
    }
    if let Some(lambda) = cli.lambda {
        cfg.mmr.lambda = lambda;
    }
    if let Some(k) = cli.k {
        cfg.model.k = k;
    }
    if let Some(mode) = cli.mode {
        cfg.train.mode = match mode {
            Mode::Rl => "rl",
            Mode::Sl => "sl",
        }
        .into();
    }
    if cli.no_condition_info {
        cfg.model.use_condition_info = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// `--out`, else the configured directory, created if missing.
fn out_dir(cli: &Cli, fallback: Option<&PathBuf>, what: &str) -> Result<PathBuf> {
    let dir = cli
        .out
        .clone()
        .or_else(|| fallback.cloned())
        .ok_or_else(|| usage(format!("no output directory: pass --out or set paths.{what}")))?;
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn with_path(path: &Path, e: std::io::Error) -> CliError {
    std::io::Error::new(e.kind(), format!("{}: {e}", path.display())).into()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| with_path(path, e))
}

fn simulate(cli: &Cli, cfg: &ExperimentConfig) -> Result<()> {
    let out = cli.out.clone().ok_or_else(|| usage("simulate needs --out"))?;
    let p = &cfg.paths;
    let [train, valid, test] = match (&p.raw_train, &p.raw_valid, &p.raw_test) {
        (Some(a), Some(b), Some(c)) => [parse_letor(a)?, parse_letor(b)?, parse_letor(c)?],
        (None, None, None) => {
            log::info!("no raw splits configured, generating synthetic queries");
            let queries = generate(&SyntheticConfig {
                seed: cfg.seed,
                ..SyntheticConfig::default()
            })?;
            split(queries, 0.6, 0.2)?
        }
        _ => return Err(usage("set all of paths.raw_train, raw_valid and raw_test, or none")),
    };
    let data = simulate_splits(&train, &valid, &test, cfg.sim.criteria_columns, &cfg.sim_config()?)?;
    write_simulated(&out, &data, cfg)?;
    println!(
        "simulated {} / {} / {} sub-queries with {} categorical variables into {}",
        data.train.len(),
        data.valid.len(),
        data.test.len(),
        data.schema.num_variables(),
        out.display()
    );
    Ok(())
}

fn train_cmd(cli: &Cli, cfg: &ExperimentConfig) -> Result<()> {
    let schema = cfg.schema()?;
    let train_sets = load_named_split(cfg, "train")?;
    let valid_sets = load_named_split(cfg, "valid")?;
    let out = out_dir(cli, cfg.paths.checkpoint_dir.as_ref(), "checkpoint_dir")?;
    let outcome = train(&train_sets, &valid_sets, &schema, &cfg.model_config()?, &cfg.train_config()?)?;
    fs::write(out.join(CHECKPOINT_FILE), outcome.model.to_checkpoint().encode()?)?;
    write_train_log(create(&out.join("train_log.csv"))?, &outcome.log)?;
    write_timings(create(&out.join("timings.csv"))?, &outcome.epoch_seconds)?;
    println!(
        "best validation goodness {:.4} at epoch {}; checkpoint in {}",
        outcome.best_goodness,
        outcome.best_epoch,
        out.display()
    );
    Ok(())
}

fn load_model(cfg: &ExperimentConfig, args: &ModelArgs) -> Result<CssoModel> {
    let path = match &args.checkpoint {
        Some(p) => p.clone(),
        None => cfg.require_path("checkpoint_dir")?.join(CHECKPOINT_FILE),
    };
    let model = CssoModel::from_checkpoint(&Checkpoint::decode(&fs::read(&path).map_err(|e| with_path(&path, e))?)?)?;
    Ok(model)
}

/// Sets of `split` long enough for `k`-item slates.
fn usable(sets: &[CandidateSet], k: usize, split: &str) -> Vec<usize> {
    let keep: Vec<usize> = (0..sets.len()).filter(|&i| decodable(&sets[i], k)).collect();
    if keep.len() < sets.len() {
        log::warn!("{split}: skipping {} queries with fewer than {k} items", sets.len() - keep.len());
    }
    keep
}

fn check_k(cli: &Cli, model: &CssoModel) -> Result<usize> {
    let k = model.config().k;
    match cli.k {
        Some(flag) if flag != k => Err(usage(format!("--k {flag} differs from the checkpoint's k = {k}"))),
        _ => Ok(k),
    }
}

fn evaluate(cli: &Cli, cfg: &ExperimentConfig, args: &ModelArgs) -> Result<()> {
    let model = load_model(cfg, args)?;
    let k = check_k(cli, &model)?;
    let schema = cfg.schema()?;
    let sets = load_named_split(cfg, &args.split.split)?;
    let refs: Vec<&CandidateSet> = usable(&sets, k, &args.split.split).into_iter().map(|i| &sets[i]).collect();
    if refs.is_empty() {
        return Err(usage(format!("{} split has no query with {k} items", args.split.split)));
    }
    let alpha = cfg.train.alpha;
    let scores = evaluate_model(&model, &refs, &schema, alpha)?;
    let baseline = score_order_scores(&refs, &schema, k, alpha)?;
    let out = out_dir(cli, cfg.paths.report_dir.as_ref(), "report_dir")?;
    let qids: Vec<&str> = refs.iter().map(|s| s.query_id.as_str()).collect();
    write_query_scores(create(&out.join("query_scores.csv"))?, &schema, &qids, &scores)?;
    let model_mean = MeanScore::from_scores(&scores);
    let base_mean = MeanScore::from_scores(&baseline);
    write_summary(
        create(&out.join("summary.csv"))?,
        &schema,
        &[("csso", model_mean.clone()), ("score_order", base_mean.clone())],
    )?;
    for (name, m) in [("csso", &model_mean), ("score_order", &base_mean)] {
        println!("{name:>12}: ndcg {:.4} gap {:.4} goodness {:.4}", m.ndcg, m.gap, m.goodness);
    }
    Ok(())
}

fn rerank(cli: &Cli, cfg: &ExperimentConfig, args: &ModelArgs) -> Result<()> {
    let model = load_model(cfg, args)?;
    let k = check_k(cli, &model)?;
    let schema = cfg.schema()?;
    let sets = load_named_split(cfg, &args.split.split)?;
    let refs: Vec<&CandidateSet> = usable(&sets, k, &args.split.split).into_iter().map(|i| &sets[i]).collect();
    // greedy decoding draws nothing from the generator
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let generated = model.generate_slates(&refs, &schema, DecodeMode::Greedy, &mut rng)?;
    let out = out_dir(cli, cfg.paths.report_dir.as_ref(), "report_dir")?;
    let qids: Vec<&str> = refs.iter().map(|s| s.query_id.as_str()).collect();
    let slates: Vec<_> = generated.into_iter().map(|g| g.slate).collect();
    write_slates(create(&out.join("slates.csv"))?, &qids, &slates)?;
    println!("wrote {} slates to {}", slates.len(), out.join("slates.csv").display());
    Ok(())
}

fn sweep(cli: &Cli, cfg: &ExperimentConfig, split: &crate::SplitArg) -> Result<()> {
    let schema = cfg.schema()?;
    let k = cfg.model.k;
    let sets = load_named_split(cfg, &split.split)?;
    let refs: Vec<&CandidateSet> = usable(&sets, k, &split.split).into_iter().map(|i| &sets[i]).collect();
    if refs.is_empty() {
        return Err(usage(format!("{} split has no query with {k} items", split.split)));
    }
    let grid = match cli.lambda {
        Some(l) => vec![l],
        None => cfg.mmr.grid.clone(),
    };
    let alpha = cfg.train.alpha;
    let result = lambda_sweep(&refs, &schema, &grid, k, alpha)?;
    let base = MeanScore::from_scores(&score_order_scores(&refs, &schema, k, alpha)?);
    let out = out_dir(cli, cfg.paths.report_dir.as_ref(), "report_dir")?;
    write_sweep(create(&out.join("sweep.csv"))?, &schema, &result)?;
    let best = result.best_row();
    write_summary(
        create(&out.join("summary.csv"))?,
        &schema,
        &[("mmr", best.mean.clone()), ("score_order", base)],
    )?;
    for r in &result.rows {
        println!("lambda {:.2}: ndcg {:.4} gap {:.4} goodness {:.4}", r.lambda, r.mean.ndcg, r.mean.gap, r.mean.goodness);
    }
    println!("best lambda {:.2} (goodness {:.4})", best.lambda, best.mean.goodness);
    Ok(())
}

fn grad_check(cfg: &ExperimentConfig) -> Result<()> {
    let sl = check_supervised_gradient(5, 3, 8, 2, cfg.seed)?;
    println!(
        "supervised loss: max relative error {:.3e} ({}, {} entries)",
        sl.max_rel_error, sl.worst, sl.entries_checked
    );
    let pg = check_policy_gradient(4, 2, 1000, 100, cfg.seed)?;
    println!(
        "policy gradient: {} samples, max deviation {:.2} standard errors, {} of {} entries beyond 3",
        pg.samples, pg.max_z, pg.outside_3se, pg.components
    );
    if sl.max_rel_error >= 1e-4 || pg.outside_3se > 0 {
        return Err(CliError::Core(csso::Error::Numeric {
            param: "gradient check".into(),
            detail: "tolerance exceeded".into(),
        }));
    }
    Ok(())
}
