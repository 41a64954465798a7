//! Train the stage-2 predictor on VAE counterfactuals and score it against
//! the ground-truth counterfactuals of the synthetic model.
//!
//! cargo run --release --example fair_representation

use claire::augment::{generate_counterfactuals, train_claire_m};
use claire::data::split;
use claire::fairrep::{train_logged, HyperParams};
use claire::harness::evaluate;
use claire::scm::claire_synthetic;

fn main() -> claire::Result<()> {
    let scm = claire_synthetic();
    let (data, _) = scm.sample(1500, 5)?;
    let idx = split(data.len(), 5)?;
    let (train, validation, test) = (data.subset(&idx.train), data.subset(&idx.validation), data.subset(&idx.test));
    let cf_tests = (0..data.num_sensitive)
        .map(|s| scm.counterfactual_dataset(&test, s, 200, 9))
        .collect::<claire::Result<Vec<_>>>()?;

    let hp = HyperParams {
        epochs: 200,
        vae_epochs: 200,
        ..HyperParams::default()
    };
    let vae = train_claire_m(&train, &hp)?;
    let augmented = generate_counterfactuals(&vae, &train, hp.k_samples, 1)?;

    for (label, beta, lambda) in [("unconstrained", 0.0, 0.0), ("invariance only", 0.0, 1.0), ("full objective", hp.beta, hp.lambda)] {
        let hp = HyperParams { beta, lambda, ..hp.clone() };
        let (model, log) = train_logged(&train, &augmented, Some(&validation), &hp)?;
        let report = evaluate(&model, &test, &cf_tests)?;
        println!(
            "{label:<16} train risk {:.3}  test rmse {:.3}  wass {:.3}  mmd {:.4}",
            log.risk.last().unwrap_or(&f64::NAN),
            report.rmse.unwrap_or(f64::NAN),
            report.wass_avg,
            report.mmd_avg
        );
    }
    Ok(())
}
