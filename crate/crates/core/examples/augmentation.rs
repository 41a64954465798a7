//! Train both stage-1 variants and look at the counterfactuals they decode.
//!
//! cargo run --release --example augmentation

use claire::augment::{embedding_mmd, generate_counterfactuals, train_vae, Regularizer};
use claire::fairrep::HyperParams;
use claire::scm::claire_synthetic;

fn main() -> claire::Result<()> {
    let (data, _) = claire_synthetic().sample(1200, 3)?;
    let hp = HyperParams {
        vae_epochs: 200,
        ..HyperParams::default()
    };
    for regularizer in [Regularizer::None, Regularizer::Mmd, Regularizer::Adversarial] {
        let (vae, log) = train_vae(&data, &hp, regularizer)?;
        println!(
            "{regularizer:?}: final negative ELBO {:.3}, embedding MMD {:.4}",
            log.elbo.last().unwrap_or(&f64::NAN),
            embedding_mmd(&vae, &data)?
        );
        let aug = generate_counterfactuals(&vae, &data.subset(&[0]), hp.k_samples, 1)?;
        for (s, (x, y)) in aug.instance(0).counterfactuals.iter().enumerate() {
            let x: Vec<String> = x.iter().map(|v| format!("{v:.2}")).collect();
            println!("    as S = {s}: x = [{}], y = {y:.2}", x.join(", "));
        }
    }
    Ok(())
}
