//! Sample the synthetic benchmark, infer latents and compute counterfactuals.
//!
//! cargo run --release --example synthetic_scm

use claire::scm::{claire_synthetic, IncorrectVariant};

fn main() -> claire::Result<()> {
    let scm = claire_synthetic();
    let (data, _) = scm.sample(1000, 7)?;
    let sizes: Vec<usize> = data.groups().iter().map(Vec::len).collect();
    println!("sampled {} rows, subgroup sizes {sizes:?}", data.len());

    let first = data.subset(&[0, 1, 2]);
    let latents = scm.infer_latents(&first)?;
    for i in 0..first.len() {
        println!("row {i}: s = {}, y = {:.3}, E[U | x, y] = {:.3}", first.s[i], first.y[i], latents.get(i, 0));
    }

    for s_new in 0..data.num_sensitive {
        let cf = scm.counterfactual_dataset(&first, s_new, 500, 1)?;
        let ys: Vec<String> = cf.y.iter().map(|y| format!("{y:.3}")).collect();
        println!("do(S = {s_new}): y = [{}]", ys.join(", "));
    }

    // the mis-specified models used by the causal baselines
    for which in [IncorrectVariant::M1, IncorrectVariant::M2] {
        let wrong = scm.incorrect_variant(which, &data)?;
        println!("{which:?} edges: {:?}", wrong.graph().edge_names());
    }
    Ok(())
}
