//! Vary the constraint weight and write results plus a plot.
//!
//! cargo run --release --example sweep -- out/sweep

use claire::harness::{self, DataSource, ExperimentConfig, SweepParam};

fn main() -> claire::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "out/sweep".into());
    let mut cfg = ExperimentConfig {
        data: DataSource::Synthetic { n: 1000 },
        repetitions: 2,
        posterior_samples: 100,
        ..ExperimentConfig::default()
    };
    cfg.hp.epochs = 200;
    cfg.hp.vae_epochs = 200;
    let out = harness::sweep(&cfg, SweepParam::Beta, &[0.01, 0.1, 1.0, 10.0, 100.0])?;
    for ((beta, wass), (_, rmse)) in out.series("wass").into_iter().zip(out.series("rmse")) {
        println!("beta {beta:>6}: rmse {rmse:.3}, wass {wass:.3}");
    }
    out.write(&dir)?;
    println!("wrote {dir}/results.csv and {dir}/plot.svg");
    Ok(())
}
