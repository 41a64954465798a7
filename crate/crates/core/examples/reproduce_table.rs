//! Run a result table at reduced size. Pass the table id as the first
//! argument (1 to 4, default 2); `--full` keeps the published settings.
//!
//! cargo run --release --example reproduce_table -- 3

use claire::harness::{self, DataSource, ExperimentConfig};

fn main() -> claire::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let id = args.iter().find_map(|a| a.parse::<u8>().ok()).unwrap_or(2);
    let mut cfg = ExperimentConfig::table(id)?;
    if !args.iter().any(|a| a == "--full") {
        cfg.data = DataSource::Synthetic { n: 800 };
        cfg.repetitions = 2;
        cfg.posterior_samples = 100;
        cfg.cfp_epochs = 300;
        cfg.hp.epochs = 150;
        cfg.hp.vae_epochs = 150;
    }
    let out = harness::run(&cfg)?;
    for row in &out.rows {
        println!("{:<16} {:<10} {:>8.3} ± {:.3}", row.method, row.metric, row.mean, row.std);
    }
    for (method, secs) in &out.seconds {
        println!("{method:<16} {secs:>7.1}s");
    }
    Ok(())
}
