//! Table 1 style comparison on the Law School admissions data. Expects
//! `data/law_data.csv` (columns race, UGPA, LSAT, ZFYA) under the workspace
//! root and exits quietly without it.
//!
//! cargo run --release --example law_school

use claire::harness::{self, ExperimentConfig};

fn main() -> claire::Result<()> {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    if !root.join("data/law_data.csv").exists() {
        eprintln!("data/law_data.csv not found; nothing to do");
        return Ok(());
    }
    std::env::set_current_dir(&root)?;
    let mut cfg = ExperimentConfig::from_json_file("configs/law_school.json")?;
    cfg.repetitions = 2;
    let out = harness::run(&cfg)?;
    for row in out.rows.iter().filter(|r| ["rmse", "mae", "wass", "mmd"].contains(&r.metric.as_str())) {
        println!("{:<14} {:<5} {:.3} ± {:.3}", row.method, row.metric, row.mean, row.std);
    }
    Ok(())
}
