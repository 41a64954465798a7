//! Round-trip a dataset through CSV with a schema, then fit a causal model
//! to it from a graph alone.
//!
//! cargo run --release --example csv_data

use claire::data::{load_csv, write_csv, FeatureColumn, FeatureType, Schema, SensitiveColumn, TargetColumn, Task};
use claire::scm::{claire_synthetic, fit_linear_scm};

fn main() -> claire::Result<()> {
    let truth = claire_synthetic();
    let (data, _) = truth.sample(5000, 12)?;
    let dir = std::env::temp_dir().join("claire-csv-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("data.csv");
    write_csv(&data, &path)?;

    let schema = Schema {
        features: data
            .feature_names
            .iter()
            .map(|name| FeatureColumn {
                name: name.clone(),
                kind: FeatureType::Continuous,
            })
            .collect(),
        sensitive: SensitiveColumn {
            name: "s".into(),
            values: (0..data.num_sensitive).map(|s| s.to_string()).collect(),
        },
        target: TargetColumn {
            name: "y".into(),
            task: Task::Regression,
            positive: vec![],
        },
    };
    let (loaded, report) = load_csv(&path, &schema)?;
    println!("loaded {} rows from {} ({report:?})", loaded.len(), path.display());

    // the same graph with every mechanism re-estimated from the file
    let fitted = fit_linear_scm(truth.graph(), &loaded)?;
    for node in 0..fitted.graph().len() {
        println!("{:<3} {:?}", fitted.graph().name(node), fitted.mechanism(node));
    }
    Ok(())
}
