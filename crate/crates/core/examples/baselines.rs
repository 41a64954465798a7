//! The comparison predictors, including the causal ones under a correct and
//! a mis-specified model.
//!
//! cargo run --release --example baselines

use claire::baselines::{cfp_o, cfp_u, constant_predictor, full_predictor, unaware_predictor, CfpConfig, Predictor};
use claire::data::split;
use claire::harness::evaluate;
use claire::scm::{claire_synthetic, IncorrectVariant};

fn main() -> claire::Result<()> {
    let scm = claire_synthetic();
    let (data, _) = scm.sample(1500, 2)?;
    let idx = split(data.len(), 2)?;
    let (train, test) = (data.subset(&idx.train), data.subset(&idx.test));
    let cf_tests = (0..data.num_sensitive)
        .map(|s| scm.counterfactual_dataset(&test, s, 200, 4))
        .collect::<claire::Result<Vec<_>>>()?;

    let reversed = scm.incorrect_variant(IncorrectVariant::M1, &train)?;
    let config = |scm| CfpConfig {
        posterior_samples: 200,
        epochs: 300,
        ..CfpConfig::new(scm)
    };
    let predictors: Vec<(&str, Box<dyn Predictor>)> = vec![
        ("constant", Box::new(constant_predictor(&train)?)),
        ("full", Box::new(full_predictor(&train)?)),
        ("unaware", Box::new(unaware_predictor(&train)?)),
        ("CFP-U (true)", Box::new(cfp_u(&config(scm.clone()), &train)?)),
        ("CFP-U (M1)", Box::new(cfp_u(&config(reversed.clone()), &train)?)),
        ("CFP-O (true)", Box::new(cfp_o(&config(scm.clone()), &train)?)),
        ("CFP-O (M1)", Box::new(cfp_o(&config(reversed), &train)?)),
    ];
    for (name, p) in &predictors {
        let r = evaluate(p.as_ref(), &test, &cf_tests)?;
        println!("{name:<14} rmse {:.3}  wass {:.3}  mmd {:.4}", r.rmse.unwrap_or(f64::NAN), r.wass_avg, r.mmd_avg);
    }
    Ok(())
}
