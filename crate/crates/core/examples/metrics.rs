//! Accuracy and counterfactual divergence on hand-made predictions.
//!
//! cargo run --release --example metrics

use claire::metrics::{divergence_report, mmd_rbf, rmse, wasserstein1, Bandwidth, CounterfactualSet};

fn main() -> claire::Result<()> {
    let truth = [1.0, 2.0, 3.0, 4.0];
    println!("rmse {:.3}", rmse(&[1.1, 1.9, 3.2, 3.7], &truth)?);

    let a = [0.0, 1.0, 2.0, 3.0];
    let shifted: Vec<f64> = a.iter().map(|v| v + 0.5).collect();
    println!("wasserstein-1 under a shift of 0.5: {:.3}", wasserstein1(&a, &shifted)?);
    println!("mmd under the same shift: {:.4}", mmd_rbf(&a, &shifted, Bandwidth::MedianHeuristic)?);

    // predictions of four test rows under each of three imposed sensitive values
    let cf = CounterfactualSet::new(vec![
        vec![1.0, 2.0, 3.0, 4.0],
        vec![1.0, 2.0, 3.0, 4.0],
        vec![2.0, 3.0, 4.0, 5.0],
    ])?;
    let report = divergence_report(&cf)?;
    for p in &report.pairs {
        println!("pair ({}, {}): wass {:.3}, mmd {:.4}", p.s, p.s_prime, p.wass, p.mmd);
    }
    println!("average: wass {:.3}, mmd {:.4}", report.wass_avg, report.mmd_avg);
    Ok(())
}
