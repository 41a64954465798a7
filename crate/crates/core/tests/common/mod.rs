//! Shared fixtures for the integration and acceptance tests.
#![allow(dead_code)]

use claire::augment::{adversarial_log_likelihood, elbo_terms, mmd_penalty};
use claire::data::Task;
use claire::fairrep::{cf_constraint_var, irm_terms, total_loss_var, LossInputs};
use claire::numerics::{gradient_check, seeded_rng, GradCheck, Matrix, Mlp, OutputActivation};
use claire::Result;
use rand::Rng;
use rand_distr::StandardNormal;

pub const GRAD_STEP: f64 = 1e-5;
pub const GRAD_COORDINATES: usize = 100;
pub const GRAD_TOLERANCE: f64 = 1e-4;

fn normal(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    m.data_mut().iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
    m
}

fn onehot(s: &[usize], k: usize) -> Matrix {
    let mut m = Matrix::zeros(s.len(), k);
    for (i, &v) in s.iter().enumerate() {
        m.set(i, v, 1.0);
    }
    m
}

fn groups(s: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut g = vec![Vec::new(); k];
    s.iter().enumerate().for_each(|(i, &v)| g[v].push(i));
    g
}

fn params_of(nets: &[&Mlp]) -> Vec<Matrix> {
    nets.iter().flat_map(|n| n.parameters().into_iter().cloned()).collect()
}

/// Every training objective checked against central differences at
/// [`GRAD_COORDINATES`] random coordinates.
pub fn gradient_suite() -> Result<Vec<(&'static str, GradCheck)>> {
    let mut rng = seeded_rng(11);
    let (n, d, k, latent, hidden) = (12usize, 3usize, 3usize, 2usize, 6usize);
    let s: Vec<usize> = (0..n).map(|i| i % k).collect();
    let s1h = onehot(&s, k);
    let grp = groups(&s, k);
    let mut xy = normal(n, d + 1, &mut rng);
    let eps = normal(n, latent, &mut rng);
    let encoder = Mlp::two_layer(d + 1, hidden, 2 * latent, OutputActivation::Identity, &mut rng);
    let decoder = Mlp::two_layer(latent + k, hidden, d + 1, OutputActivation::Identity, &mut rng);
    let disc = Mlp::two_layer(latent, hidden, k, OutputActivation::Softmax, &mut rng);
    let vae_params = params_of(&[&encoder, &decoder]);
    let n_enc = encoder.parameters().len();

    let mut out = Vec::new();
    let elbo = |task: Task, xy: Matrix| {
        let (encoder, decoder, s1h, eps) = (&encoder, &decoder, &s1h, &eps);
        gradient_check(&vae_params, GRAD_COORDINATES, GRAD_STEP, 1, move |tape, p| {
            let enc = encoder.bind_params(p[..n_enc].to_vec())?;
            let dec = decoder.bind_params(p[n_enc..].to_vec())?;
            let t = elbo_terms(&enc, &dec, tape.constant(xy.clone()), tape.constant(s1h.clone()), tape.constant(eps.clone()), task)?;
            Ok(t.loss)
        })
    };
    out.push(("negative ELBO, continuous target", elbo(Task::Regression, xy.clone())?));
    for i in 0..n {
        xy.set(i, d, (i % 2) as f64);
    }
    out.push(("negative ELBO, binary target", elbo(Task::Classification, xy.clone())?));

    out.push((
        "ELBO + embedding MMD",
        gradient_check(&vae_params, GRAD_COORDINATES, GRAD_STEP, 2, |tape, p| {
            let enc = encoder.bind_params(p[..n_enc].to_vec())?;
            let dec = decoder.bind_params(p[n_enc..].to_vec())?;
            let t = elbo_terms(&enc, &dec, tape.constant(xy.clone()), tape.constant(s1h.clone()), tape.constant(eps.clone()), Task::Classification)?;
            let pen = mmd_penalty(t.mean, &grp, 0.8)?;
            t.loss.add(pen.scale(2.0))
        })?,
    ));

    let mut adv_params = vae_params.clone();
    adv_params.extend(disc.parameters().into_iter().cloned());
    let n_vae = vae_params.len();
    out.push((
        "ELBO + adversarial log-likelihood",
        gradient_check(&adv_params, GRAD_COORDINATES, GRAD_STEP, 3, |tape, p| {
            let enc = encoder.bind_params(p[..n_enc].to_vec())?;
            let dec = decoder.bind_params(p[n_enc..n_vae].to_vec())?;
            let h = disc.bind_params(p[n_vae..].to_vec())?;
            let t = elbo_terms(&enc, &dec, tape.constant(xy.clone()), tape.constant(s1h.clone()), tape.constant(eps.clone()), Task::Classification)?;
            let ll = adversarial_log_likelihood(&h, t.mean, tape.constant(s1h.clone()))?;
            t.loss.add(ll)
        })?,
    ));

    let rep_dim = 4;
    let phi = Mlp::two_layer(d, hidden, rep_dim, OutputActivation::Identity, &mut rng);
    let head = Mlp::two_layer(rep_dim, hidden, 1, OutputActivation::Identity, &mut rng);
    let x = normal(n, d, &mut rng);
    let y_reg = normal(n, 1, &mut rng);
    let y_bin = Matrix::column(&(0..n).map(|i| ((i / 2) % 2) as f64).collect::<Vec<_>>());
    let counterfactuals: Vec<(Vec<usize>, Matrix)> = (0..k)
        .map(|s_new| {
            let rows: Vec<usize> = (0..n).filter(|&i| s[i] != s_new).collect();
            let cf = normal(rows.len(), d, &mut rng);
            (rows, cf)
        })
        .collect();
    let n_phi = phi.parameters().len();
    let net_params = params_of(&[&phi, &head]);

    out.push((
        "counterfactual cosine constraint",
        gradient_check(&params_of(&[&phi]), GRAD_COORDINATES, GRAD_STEP, 4, |tape, p| {
            let f = phi.bind_params(p.to_vec())?;
            let z = f.forward(tape.constant(x.clone()))?;
            let cf = counterfactuals
                .iter()
                .map(|(rows, m)| Ok((rows.clone(), f.forward(tape.constant(m.clone()))?)))
                .collect::<Result<Vec<_>>>()?;
            cf_constraint_var(z, &cf)
        })?,
    ));

    for (name, task, y) in [
        ("risk + invariance penalty, squared error", Task::Regression, &y_reg),
        ("risk + invariance penalty, cross-entropy", Task::Classification, &y_bin),
    ] {
        out.push((
            name,
            gradient_check(&net_params, GRAD_COORDINATES, GRAD_STEP, 5, |tape, p| {
                let f = phi.bind_params(p[..n_phi].to_vec())?;
                let g = head.bind_params(p[n_phi..].to_vec())?;
                let logits = g.forward_logits(f.forward(tape.constant(x.clone()))?)?;
                let t = irm_terms(logits, tape.constant(y.clone()), task)?;
                t.risk.add(t.penalty)
            })?,
        ));
    }

    for (name, task, y) in [
        ("total representation objective, squared error", Task::Regression, &y_reg),
        ("total representation objective, cross-entropy", Task::Classification, &y_bin),
    ] {
        let inputs = LossInputs {
            x: x.clone(),
            y: y.clone(),
            groups: grp.clone(),
            counterfactuals: counterfactuals.clone(),
        };
        out.push((
            name,
            gradient_check(&net_params, GRAD_COORDINATES, GRAD_STEP, 6, |_, p| {
                let f = phi.bind_params(p[..n_phi].to_vec())?;
                let g = head.bind_params(p[n_phi..].to_vec())?;
                Ok(total_loss_var(&f, &g, &inputs, task, 5.0, 1.0)?.total)
            })?,
        ));
    }
    Ok(out)
}

/// One fitted-versus-closed-form regression coefficient.
pub struct OracleCoefficient {
    pub regression: &'static str,
    pub fitted: f64,
    pub expected: f64,
}

pub const OLS_ROWS: usize = 100_000;
pub const OLS_TOLERANCE: f64 = 0.02;

/// Regressions of `Y` on nested feature sets of the mixed chain model,
/// paired with their population coefficients.
pub fn ols_oracle(seed: u64) -> Result<Vec<OracleCoefficient>> {
    use claire::baselines::LinearModel;
    use claire::scm::{mixed_chain, ChainParams};

    let p = ChainParams {
        sigma_u: 1.0,
        sigma_1: 1.0,
        sigma_y: 1.0,
        sigma_2: 0.5,
        sigma_3: 1.0,
    };
    let (data, _) = mixed_chain(p)?.sample(OLS_ROWS, seed)?;
    let col = |name: &str| data.feature_index(name).expect("chain feature");
    let (x1, x2, x3) = (col("X1"), col("X2"), col("X3"));
    let spurious = p.sigma_2.powi(2) / (p.sigma_2.powi(2) + p.sigma_y.powi(2));
    let cases: [(&'static str, Vec<usize>, Vec<f64>); 3] = [
        ("Y ~ X3", vec![x3], vec![1.0]),
        ("Y ~ X1 + X3", vec![x1, x3], vec![1.0, 1.0]),
        ("Y ~ X1 + X2 + X3", vec![x1, x2, x3], vec![spurious, 1.0 - spurious, spurious]),
    ];
    let mut out = Vec::new();
    for (regression, columns, expected) in cases {
        let fit = LinearModel::fit_ols(&data.x.select_cols(&columns), &data.y)?;
        for (fitted, expected) in fit.coefficients.into_iter().zip(expected) {
            out.push(OracleCoefficient { regression, fitted, expected });
        }
    }
    Ok(out)
}

pub mod props;
