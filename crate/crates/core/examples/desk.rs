//! Synthetic end-to-end benchmark: simulated clicks on generated data,
//! score order vs. the MMR sweep vs. trained re-rankers on the test split.
//!
//! `cargo run --release -p csso-core --example desk -- [rl|sl|abl|all] [epochs] [batch] [lr] [seed] [queries]`

use csso::harness::desk::{Desk, DeskConfig};
use csso::metrics::MeanScore;
use csso::training::TrainMode;

fn arg<T: std::str::FromStr>(i: usize, default: T) -> T {
    std::env::args().nth(i).and_then(|a| a.parse().ok()).unwrap_or(default)
}

fn show(name: &str, m: &MeanScore) {
    println!("{name:>12}: ndcg {:.4} gap {:.4} R_s {:.4}", m.ndcg, m.gap, m.goodness);
}

fn main() -> csso::Result<()> {
    env_logger::init();
    let base = DeskConfig::default();
    let which: String = arg(1, "all".to_string());
    let config = DeskConfig {
        epochs: arg(2, base.epochs),
        batch_size: arg(3, base.batch_size),
        lr: arg(4, base.lr),
        seed: arg(5, base.seed),
        queries: arg(6, base.queries),
        ..base
    };
    let desk = Desk::prepare(config)?;
    let d = &desk.data;
    println!(
        "sets: train {} valid {} test {} (decodable test {})",
        d.train.len(),
        d.valid.len(),
        d.test.len(),
        desk.test_sets().len()
    );
    show("score order", &desk.score_order);
    for r in &desk.sweep.rows {
        println!("   mmr {:.2}: ndcg {:.4} gap {:.4} R_s {:.4}", r.lambda, r.mean.ndcg, r.mean.gap, r.mean.goodness);
    }
    show("best mmr", desk.best_mmr());

    let variants: Vec<(TrainMode, bool)> = match which.as_str() {
        "rl" => vec![(TrainMode::Rl, true)],
        "sl" => vec![(TrainMode::Sl, true)],
        "abl" => vec![(TrainMode::Rl, false)],
        _ => vec![(TrainMode::Rl, true), (TrainMode::Sl, true), (TrainMode::Rl, false)],
    };
    for (mode, ci) in variants {
        let run = desk.run(mode, ci)?;
        println!(
            "{mode:?} ci={ci}: best epoch {} in {:.1}s",
            run.outcome.best_epoch, run.seconds
        );
        show("model", &run.test);
        println!(
            "   gap ratio {:.3}  ndcg ratio {:.3}  R_s - best mmr {:+.4}",
            run.test.gap / desk.score_order.gap,
            run.test.ndcg / desk.score_order.ndcg,
            run.test.goodness - desk.best_mmr().goodness
        );
    }
    Ok(())
}
