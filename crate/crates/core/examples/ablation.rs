//! ERM, IRM and the CLAIRE variants on the same repetitions.
//!
//! cargo run --release --example ablation

use claire::harness::{self, DataSource, ExperimentConfig};

fn main() -> claire::Result<()> {
    let mut cfg = ExperimentConfig {
        data: DataSource::Synthetic { n: 1000 },
        repetitions: 2,
        posterior_samples: 100,
        ..ExperimentConfig::default()
    };
    cfg.hp.epochs = 200;
    cfg.hp.vae_epochs = 200;
    let out = harness::ablation(&cfg)?;
    for method in ["ERM", "IRM", "CLAIRE-NI", "CLAIRE-M", "CLAIRE-A"] {
        let get = |metric| out.get(method, metric).map_or(f64::NAN, |r| r.mean);
        println!("{method:<10} rmse {:.3}  wass {:.3}", get("rmse"), get("wass"));
    }
    Ok(())
}
