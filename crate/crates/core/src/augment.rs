//! Counterfactual data augmentation with a VAE whose decoder alone sees the
//! sensitive attribute.
//!
//! The encoder maps `(X, Y)` to a diagonal Gaussian over an embedding `H`;
//! the decoder maps `(H, onehot S)` back to `(X, Y)`. Two regularizers push
//! the embedding towards independence from `S`: an RBF-MMD penalty between
//! subgroup embeddings ([`Regularizer::Mmd`]) or an adversarial
//! discriminator ([`Regularizer::Adversarial`]). Counterfactuals are produced
//! by decoding several embedding draws with every sensitive value and
//! averaging.

use std::io::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{onehot, ColumnKind, Dataset, Scaler, Task};
use crate::error::{Error, Result};
use crate::fairrep::HyperParams;
use crate::metrics::median_heuristic;
use crate::numerics::{seeded_rng, Adam, BoundMlp, Matrix, Mlp, OutputActivation, Rng as SeededRng, Tape, Var};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Which penalty keeps the embedding free of the sensitive attribute.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularizer {
    /// Plain ELBO.
    None,
    /// Average pairwise MMD between subgroup embeddings, weight `alpha`.
    Mmd,
    /// Softmax discriminator on the embedding, weight `alpha_prime`.
    Adversarial,
}

/// Encoder, decoder and the column scaling they were trained under.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vae {
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub latent_dim: usize,
    pub num_sensitive: usize,
    pub task: Task,
    /// Scaling of the `[X, Y]` columns; a binary target passes through.
    pub scaler: Scaler,
}

impl Vae {
    pub fn new(num_features: usize, num_sensitive: usize, task: Task, hp: &HyperParams, scaler: Scaler, rng: &mut SeededRng) -> Self {
        let io = num_features + 1;
        Self {
            encoder: Mlp::two_layer(io, hp.hidden, 2 * hp.latent_dim, OutputActivation::Identity, rng),
            decoder: Mlp::two_layer(hp.latent_dim + num_sensitive, hp.hidden, io, OutputActivation::Identity, rng),
            latent_dim: hp.latent_dim,
            num_sensitive,
            task,
            scaler,
        }
    }

    pub fn num_features(&self) -> usize {
        self.encoder.input_dim() - 1
    }

    /// Scaled `[X, Y]` matrix of a dataset.
    pub fn encode_input(&self, data: &Dataset) -> Result<Matrix> {
        if data.num_features() != self.num_features() {
            return Err(Error::shape(
                "Vae::encode_input",
                format!("{} features for a {}-feature model", data.num_features(), self.num_features()),
            ));
        }
        Ok(self.scaler.transform(&data.x.hconcat(&data.y_column())?))
    }

    /// Posterior means and log-variances of the embedding.
    pub fn posterior(&self, data: &Dataset) -> Result<(Matrix, Matrix)> {
        let out = self.encoder.forward(&self.encode_input(data)?)?;
        Ok((out.slice_cols(0, self.latent_dim), out.slice_cols(self.latent_dim, 2 * self.latent_dim)))
    }

    /// Decodes embeddings with a sensitive value per row into unscaled
    /// `[X, Y]`; a binary target comes back as a probability.
    pub fn decode(&self, h: &Matrix, s: &[usize]) -> Result<Matrix> {
        let out = self.decoder.forward(&h.hconcat(&onehot(s, self.num_sensitive))?)?;
        let mut out = self.scaler.inverse(&out);
        if self.task == Task::Classification {
            let c = out.cols() - 1;
            for r in 0..out.rows() {
                let v = out.get(r, c);
                out.set(r, c, crate::numerics::sigmoid(v));
            }
        }
        Ok(out)
    }

    fn bind<'t>(&self, tape: &'t Tape) -> (BoundMlp<'t>, BoundMlp<'t>) {
        (self.encoder.bind(tape), self.decoder.bind(tape))
    }
}

/// Terms of the evidence lower bound for one batch.
pub struct ElboTerms<'t> {
    /// Mean negative ELBO per instance.
    pub loss: Var<'t>,
    pub reconstruction: Var<'t>,
    pub kl: Var<'t>,
    /// Posterior means, `n x latent_dim`.
    pub mean: Var<'t>,
}

/// Negative ELBO with one reparameterized draw per row. `xy` is the scaled
/// `[X, Y]` batch, `eps` the standard-normal draw (`n x latent_dim`).
///
/// Continuous columns use a unit-variance Gaussian likelihood; a binary
/// target uses Bernoulli cross-entropy on the decoder logit.
pub fn elbo_terms<'t>(
    encoder: &BoundMlp<'t>,
    decoder: &BoundMlp<'t>,
    xy: Var<'t>,
    s_onehot: Var<'t>,
    eps: Var<'t>,
    task: Task,
) -> Result<ElboTerms<'t>> {
    let (n, io) = xy.shape();
    if n == 0 {
        return Err(Error::Empty("elbo_terms"));
    }
    let latent = eps.shape().1;
    let enc = encoder.forward(xy)?;
    let mean = enc.slice_cols(0, latent)?;
    let logvar = enc.slice_cols(latent, 2 * latent)?;
    let h = mean.add(logvar.scale(0.5).exp().mul(eps)?)?;
    let recon_out = decoder.forward(h.concat_cols(s_onehot)?)?;
    let inv_n = 1.0 / n as f64;
    let reconstruction = match task {
        Task::Regression => recon_out
            .sub(xy)?
            .square()
            .sum()
            .scale(0.5 * inv_n)
            .add_scalar(io as f64 * HALF_LN_2PI),
        Task::Classification => {
            let feats = io - 1;
            let gauss = recon_out
                .slice_cols(0, feats)?
                .sub(xy.slice_cols(0, feats)?)?
                .square()
                .sum()
                .scale(0.5 * inv_n)
                .add_scalar(feats as f64 * HALF_LN_2PI);
            let bern = recon_out
                .slice_cols(feats, io)?
                .bce_with_logits(xy.slice_cols(feats, io)?)?
                .mean();
            gauss.add(bern)?
        }
    };
    // KL(N(mu, sigma^2) || N(0, I)) = 0.5 * sum(mu^2 + sigma^2 - 1 - log sigma^2)
    let kl = mean
        .square()
        .add(logvar.exp())?
        .sub(logvar)?
        .add_scalar(-1.0)
        .sum()
        .scale(0.5 * inv_n);
    Ok(ElboTerms {
        loss: reconstruction.add(kl)?,
        reconstruction,
        kl,
        mean,
    })
}

/// Closed-form KL of a diagonal Gaussian against the standard normal.
pub fn gaussian_kl(mean: &[f64], logvar: &[f64]) -> f64 {
    0.5 * mean
        .iter()
        .zip(logvar)
        .map(|(m, lv)| m * m + lv.exp() - 1.0 - lv)
        .sum::<f64>()
}

/// Average MMD over pairs of subgroups with at least two rows each.
pub fn mmd_penalty<'t>(embedding: Var<'t>, groups: &[Vec<usize>], bandwidth: f64) -> Result<Var<'t>> {
    let usable: Vec<&Vec<usize>> = groups.iter().filter(|g| g.len() >= 2).collect();
    if usable.len() < 2 {
        return Ok(embedding.tape().constant(Matrix::scalar(0.0)));
    }
    let parts: Vec<Var<'t>> = usable
        .iter()
        .map(|g| embedding.select_rows(g))
        .collect::<Result<_>>()?;
    let mut total: Option<Var<'t>> = None;
    let mut pairs = 0usize;
    for a in 0..parts.len() {
        for b in (a + 1)..parts.len() {
            let term = parts[a].mmd_rbf(parts[b], bandwidth)?;
            total = Some(match total {
                Some(t) => t.add(term)?,
                None => term,
            });
            pairs += 1;
        }
    }
    Ok(total.expect("at least one pair").scale(1.0 / pairs as f64))
}

/// Mean log-probability the discriminator assigns to the true sensitive value.
pub fn adversarial_log_likelihood<'t>(
    discriminator: &BoundMlp<'t>,
    embedding: Var<'t>,
    s_onehot: Var<'t>,
) -> Result<Var<'t>> {
    let logp = discriminator.forward_logits(embedding)?.log_softmax_rows();
    let n = embedding.shape().0 as f64;
    Ok(logp.mul(s_onehot)?.sum().scale(1.0 / n))
}

/// Per-epoch training trace.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    /// Generator objective per epoch (mean over batches).
    pub objective: Vec<f64>,
    /// Negative ELBO per epoch.
    pub elbo: Vec<f64>,
    /// Regularizer value per epoch, before weighting.
    pub penalty: Vec<f64>,
}

fn check_groups(data: &Dataset) -> Result<Vec<Vec<usize>>> {
    if data.num_sensitive < 2 {
        return Err(Error::Config("augmentation needs at least two sensitive values".into()));
    }
    let groups = data.groups();
    for (s, g) in groups.iter().enumerate() {
        if g.len() < 2 {
            return Err(Error::Config(format!(
                "sensitive subgroup {s} has {} instance(s); at least 2 required",
                g.len()
            )));
        }
    }
    Ok(groups)
}

fn batches(n: usize, batch_size: Option<usize>, rng: &mut SeededRng) -> Vec<Vec<usize>> {
    match batch_size {
        Some(b) if b > 0 && b < n => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(rng);
            idx.chunks(b).map(<[usize]>::to_vec).collect()
        }
        _ => vec![(0..n).collect()],
    }
}

fn standard_normal(rows: usize, cols: usize, rng: &mut SeededRng) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    m.data_mut().iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
    m
}

/// `[X, Y]` scaler; a classification target is left as 0/1.
fn fit_scaler(data: &Dataset) -> Result<Scaler> {
    let mut kinds = if data.feature_kinds.is_empty() {
        vec![ColumnKind::Continuous; data.num_features()]
    } else {
        data.feature_kinds.clone()
    };
    kinds.push(match data.task {
        Task::Regression => ColumnKind::Continuous,
        Task::Classification => ColumnKind::Indicator,
    });
    let rows: Vec<usize> = (0..data.len()).collect();
    Scaler::fit(&data.x.hconcat(&data.y_column())?, &rows, &kinds)
}

/// Trains the augmentation VAE with the given regularizer.
pub fn train_vae(data: &Dataset, hp: &HyperParams, regularizer: Regularizer) -> Result<(Vae, TrainingLog)> {
    hp.validate()?;
    check_groups(data)?;
    let mut rng = seeded_rng(hp.seed);
    let mut vae = Vae::new(data.num_features(), data.num_sensitive, data.task, hp, fit_scaler(data)?, &mut rng);
    let k = data.num_sensitive;
    let mut discriminator = Mlp::two_layer(hp.latent_dim, hp.hidden, k, OutputActivation::Softmax, &mut rng);
    let xy_all = vae.encode_input(data)?;
    let s_all = data.s_onehot();
    let mut adam = Adam::new(hp.lr);
    let mut disc_adam = Adam::new(hp.lr);
    let mut log = TrainingLog::default();
    let n = data.len();

    for epoch in 0..hp.vae_epochs {
        let mut sums = (0.0, 0.0, 0.0);
        let parts = batches(n, hp.batch_size, &mut rng);
        for rows in &parts {
            let xy = xy_all.select_rows(rows);
            let s1h = s_all.select_rows(rows);
            let batch_s: Vec<usize> = rows.iter().map(|&r| data.s[r]).collect();
            let batch_groups = {
                let mut g = vec![Vec::new(); k];
                batch_s.iter().enumerate().for_each(|(i, &s)| g[s].push(i));
                g
            };
            let eps = standard_normal(rows.len(), hp.latent_dim, &mut rng);

            if regularizer == Regularizer::Adversarial && hp.alpha_prime != 0.0 {
                // discriminator ascends the log-likelihood on detached embeddings
                let (mu, _) = {
                    let out = vae.encoder.forward(&xy)?;
                    (out.slice_cols(0, hp.latent_dim), ())
                };
                let tape = Tape::new();
                let disc = discriminator.bind(&tape);
                let ll = adversarial_log_likelihood(&disc, tape.constant(mu), tape.constant(s1h.clone()))?;
                let grads = tape
                    .backward(ll.scale(-1.0))
                    .map_err(|e| Error::Diverged { epoch, source: Box::new(e) })?;
                let g = disc.gradients(&grads);
                drop(disc);
                disc_adam.step(&mut discriminator.parameters_mut(), &g)?;
            }

            let tape = Tape::new();
            let (enc, dec) = vae.bind(&tape);
            let terms = elbo_terms(
                &enc,
                &dec,
                tape.constant(xy),
                tape.constant(s1h.clone()),
                tape.constant(eps),
                data.task,
            )?;
            let mut objective = terms.loss;
            let mut penalty_value = 0.0;
            match regularizer {
                Regularizer::Mmd if hp.alpha != 0.0 => {
                    let mu = terms.mean.value();
                    let bandwidth = embedding_bandwidth(&mu, &batch_groups);
                    let pen = mmd_penalty(terms.mean, &batch_groups, bandwidth)?;
                    penalty_value = pen.scalar();
                    objective = objective.add(pen.scale(hp.alpha))?;
                }
                Regularizer::Adversarial if hp.alpha_prime != 0.0 => {
                    let disc = discriminator.bind(&tape);
                    let ll = adversarial_log_likelihood(&disc, terms.mean, tape.constant(s1h))?;
                    penalty_value = ll.scalar();
                    objective = objective.add(ll.scale(hp.alpha_prime))?;
                }
                _ => {}
            }
            let value = objective.scalar();
            if !value.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    source: Box::new(Error::NonFinite { op: "vae objective" }),
                });
            }
            sums.0 += value;
            sums.1 += terms.loss.scalar();
            sums.2 += penalty_value;
            let grads = tape
                .backward(objective)
                .map_err(|e| Error::Diverged { epoch, source: Box::new(e) })?;
            let mut g = enc.gradients(&grads);
            g.extend(dec.gradients(&grads));
            drop((enc, dec));
            let mut params = vae.encoder.parameters_mut();
            params.extend(vae.decoder.parameters_mut());
            adam.step(&mut params, &g)?;
        }
        let m = parts.len() as f64;
        log.objective.push(sums.0 / m);
        log.elbo.push(sums.1 / m);
        log.penalty.push(sums.2 / m);
    }
    Ok((vae, log))
}

/// Median-heuristic bandwidth over the embeddings of all usable subgroups.
fn embedding_bandwidth(mu: &Matrix, groups: &[Vec<usize>]) -> f64 {
    let rows: Vec<usize> = groups.iter().filter(|g| g.len() >= 2).flatten().copied().collect();
    let pooled = mu.select_rows(&rows);
    median_heuristic(&pooled, &Matrix::zeros(0, mu.cols()))
}

/// CLAIRE-M: ELBO plus `alpha` times the average pairwise embedding MMD.
pub fn train_claire_m(data: &Dataset, hp: &HyperParams) -> Result<Vae> {
    Ok(train_vae(data, hp, Regularizer::Mmd)?.0)
}

/// CLAIRE-A: ELBO plus `alpha_prime` times the discriminator log-likelihood,
/// alternating one discriminator and one generator update.
pub fn train_claire_a(data: &Dataset, hp: &HyperParams) -> Result<Vae> {
    Ok(train_vae(data, hp, Regularizer::Adversarial)?.0)
}

/// Mean negative ELBO of `vae` on `data` with one seeded draw per row.
pub fn elbo_loss(vae: &Vae, data: &Dataset, seed: u64) -> Result<f64> {
    let tape = Tape::new();
    let (enc, dec) = vae.bind(&tape);
    let eps = standard_normal(data.len(), vae.latent_dim, &mut seeded_rng(seed));
    let terms = elbo_terms(
        &enc,
        &dec,
        tape.constant(vae.encode_input(data)?),
        tape.constant(data.s_onehot()),
        tape.constant(eps),
        data.task,
    )?;
    let v = terms.loss.scalar();
    if !v.is_finite() {
        return Err(Error::NonFinite { op: "elbo" });
    }
    Ok(v)
}

/// Average pairwise MMD between subgroup posterior means.
pub fn embedding_mmd(vae: &Vae, data: &Dataset) -> Result<f64> {
    let (mu, _) = vae.posterior(data)?;
    let groups = data.groups();
    let tape = Tape::new();
    let bandwidth = embedding_bandwidth(&mu, &groups);
    Ok(mmd_penalty(tape.constant(mu), &groups, bandwidth)?.scalar())
}

/// Counterfactuals of one instance for every sensitive value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentedInstance {
    /// `(x_cf, y_cf)` indexed by the imposed sensitive value.
    pub counterfactuals: Vec<(Vec<f64>, f64)>,
}

/// Counterfactual copies of a whole dataset, indexed by imposed sensitive value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentedSet {
    pub x: Vec<Matrix>,
    pub y: Vec<Vec<f64>>,
    pub feature_names: Vec<String>,
}

impl AugmentedSet {
    pub fn num_sensitive(&self) -> usize {
        self.x.len()
    }

    pub fn len(&self) -> usize {
        self.y.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn instance(&self, i: usize) -> AugmentedInstance {
        AugmentedInstance {
            counterfactuals: self
                .x
                .iter()
                .zip(&self.y)
                .map(|(x, y)| (x.row(i).to_vec(), y[i]))
                .collect(),
        }
    }

    /// Rows whose imposed value differs from the factual one, per value.
    pub fn for_value(&self, s_new: usize, factual_s: &[usize]) -> (Vec<usize>, Matrix) {
        let rows: Vec<usize> = (0..factual_s.len()).filter(|&r| factual_s[r] != s_new).collect();
        let x = self.x[s_new].select_rows(&rows);
        (rows, x)
    }

    /// Long-format CSV: instance id, imposed value, features, target.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        write!(w, "instance,s_cf")?;
        for name in &self.feature_names {
            write!(w, ",{name}")?;
        }
        writeln!(w, ",y_cf")?;
        for i in 0..self.len() {
            for (s, (x, y)) in self.x.iter().zip(&self.y).enumerate() {
                write!(w, "{i},{s}")?;
                for v in x.row(i) {
                    write!(w, ",{v}")?;
                }
                writeln!(w, ",{}", y[i])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Elementwise mean of equally shaped matrices.
pub fn aggregate_mean(parts: &[Matrix]) -> Result<Matrix> {
    let first = parts.first().ok_or(Error::Empty("aggregate_mean"))?;
    let mut acc = Matrix::zeros(first.rows(), first.cols());
    for p in parts {
        if p.shape() != first.shape() {
            return Err(Error::shape("aggregate_mean", "parts differ in shape"));
        }
        acc.add_assign(p);
    }
    acc.scale_assign(1.0 / parts.len() as f64);
    Ok(acc)
}

/// Draws `k` embeddings per row from the encoder posterior, decodes each with
/// every sensitive value and averages the decodes.
pub fn generate_counterfactuals(vae: &Vae, data: &Dataset, k: usize, seed: u64) -> Result<AugmentedSet> {
    if k == 0 {
        return Err(Error::Config("K must be at least 1".into()));
    }
    let (mu, logvar) = vae.posterior(data)?;
    let sd = logvar.map(|v| (0.5 * v).exp());
    let mut rng = seeded_rng(seed);
    let n = data.len();
    let draws: Vec<Matrix> = (0..k)
        .map(|_| {
            let eps = standard_normal(n, vae.latent_dim, &mut rng);
            let mut h = sd.zip_map(&eps, |a, b| a * b);
            h.add_assign(&mu);
            h
        })
        .collect();
    let d = vae.num_features();
    let mut xs = Vec::with_capacity(vae.num_sensitive);
    let mut ys = Vec::with_capacity(vae.num_sensitive);
    for s_new in 0..vae.num_sensitive {
        let s = vec![s_new; n];
        let decodes = draws
            .iter()
            .map(|h| vae.decode(h, &s))
            .collect::<Result<Vec<_>>>()?;
        let mean = aggregate_mean(&decodes)?;
        xs.push(mean.slice_cols(0, d));
        ys.push(mean.col(d));
    }
    Ok(AugmentedSet {
        x: xs,
        y: ys,
        feature_names: data.feature_names.clone(),
    })
}

/// Counterfactuals of a single instance.
pub fn generate_for_instance(vae: &Vae, x: &[f64], s: usize, y: f64, k: usize, seed: u64) -> Result<AugmentedInstance> {
    let names = (0..x.len()).map(|i| format!("x{i}")).collect();
    let data = Dataset::new(names, Matrix::row_vector(x), vec![s], vec![y], vae.task, vae.num_sensitive)?;
    Ok(generate_counterfactuals(vae, &data, k, seed)?.instance(0))
}

impl Vae {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&VaeFile { version: 1, vae: self.clone() })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: VaeFile = serde_json::from_str(text)?;
        if file.version != 1 {
            return Err(Error::Config(format!("unsupported VAE file version {}", file.version)));
        }
        Ok(file.vae)
    }
}

#[derive(Serialize, Deserialize)]
struct VaeFile {
    version: u32,
    vae: Vae,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scm::claire_synthetic;

    fn small_hp(epochs: usize) -> HyperParams {
        HyperParams {
            vae_epochs: epochs,
            ..HyperParams::default()
        }
    }

    #[test]
    fn kl_closed_form() {
        assert_eq!(gaussian_kl(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert!((gaussian_kl(&[1.0], &[0.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn elbo_terms_reduce_to_constant() {
        // zero-weight encoder and a decoder outputting the input exactly
        let tape = Tape::new();
        let mut rng = seeded_rng(0);
        let mut enc = Mlp::two_layer(2, 4, 2, OutputActivation::Identity, &mut rng);
        enc.parameters_mut().into_iter().for_each(|p| p.data_mut().fill(0.0));
        let mut dec = Mlp::two_layer(3, 4, 2, OutputActivation::Identity, &mut rng);
        dec.parameters_mut().into_iter().for_each(|p| p.data_mut().fill(0.0));
        let (e, d) = (enc.bind(&tape), dec.bind(&tape));
        let xy = tape.constant(Matrix::zeros(5, 2));
        let s = tape.constant(onehot(&[0, 1, 0, 1, 0], 2));
        let eps = tape.constant(Matrix::filled(5, 1, 0.3));
        let t = elbo_terms(&e, &d, xy, s, eps, Task::Regression).unwrap();
        assert_eq!(t.kl.scalar(), 0.0);
        assert!((t.loss.scalar() - 2.0 * HALF_LN_2PI).abs() < 1e-15);
    }

    #[test]
    fn aggregation_is_order_invariant() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![3.0, -1.0]]).unwrap();
        let c = Matrix::from_rows(&[vec![0.5, 0.25]]).unwrap();
        let x = aggregate_mean(&[a.clone(), b.clone(), c.clone()]).unwrap();
        let y = aggregate_mean(&[c, a.clone(), b]).unwrap();
        for (p, q) in x.data().iter().zip(y.data()) {
            assert!((p - q).abs() < 1e-15);
        }
        assert_eq!(aggregate_mean(&[a.clone(), a.clone()]).unwrap(), a);
    }

    #[test]
    fn rejects_tiny_subgroup() {
        let d = Dataset::new(
            vec!["x".into()],
            Matrix::column(&[0.0, 1.0, 2.0]),
            vec![0, 0, 1],
            vec![0.0, 1.0, 2.0],
            Task::Regression,
            2,
        )
        .unwrap();
        assert!(matches!(train_claire_m(&d, &small_hp(1)), Err(Error::Config(_))));
    }

    #[test]
    fn zero_alpha_matches_plain_vae() {
        let (d, _) = claire_synthetic().sample(200, 1).unwrap();
        let hp = HyperParams { alpha: 0.0, ..small_hp(20) };
        let (_, with_m) = train_vae(&d, &hp, Regularizer::Mmd).unwrap();
        let (_, plain) = train_vae(&d, &hp, Regularizer::None).unwrap();
        assert_eq!(with_m.objective, plain.objective);
    }

    #[test]
    fn zero_alpha_prime_matches_plain_vae() {
        let (d, _) = claire_synthetic().sample(200, 1).unwrap();
        let hp = HyperParams { alpha_prime: 0.0, ..small_hp(20) };
        let (_, adv) = train_vae(&d, &hp, Regularizer::Adversarial).unwrap();
        let (_, plain) = train_vae(&d, &hp, Regularizer::None).unwrap();
        assert_eq!(adv.objective, plain.objective);
    }

    #[test]
    fn elbo_decreases_early() {
        let (d, _) = claire_synthetic().sample(400, 2).unwrap();
        let (_, log) = train_vae(&d, &small_hp(50), Regularizer::None).unwrap();
        assert!(log.elbo[49] < log.elbo[0], "{:?}", (log.elbo[0], log.elbo[49]));
    }

    #[test]
    fn single_draw_with_zero_variance_is_single_decode() {
        let (d, _) = claire_synthetic().sample(200, 3).unwrap();
        let mut vae = train_claire_m(&d, &small_hp(2)).unwrap();
        // force log-variance output to a huge negative constant
        let last = vae.encoder.layers.last_mut().unwrap();
        for r in 0..last.weight.rows() {
            for c in vae.latent_dim..2 * vae.latent_dim {
                last.weight.set(r, c, 0.0);
            }
        }
        for c in vae.latent_dim..2 * vae.latent_dim {
            last.bias.set(0, c, -800.0);
        }
        let set = generate_counterfactuals(&vae, &d, 1, 9).unwrap();
        let (mu, _) = vae.posterior(&d).unwrap();
        let direct = vae.decode(&mu, &vec![2; d.len()]).unwrap();
        for r in 0..d.len() {
            for c in 0..3 {
                assert!((set.x[2].get(r, c) - direct.get(r, c)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let (d, _) = claire_synthetic().sample(200, 3).unwrap();
        let vae = train_claire_a(&d, &small_hp(3)).unwrap();
        let back = Vae::from_json(&vae.to_json().unwrap()).unwrap();
        assert_eq!(back, vae);
    }

    #[test]
    fn csv_export_layout() {
        let (d, _) = claire_synthetic().sample(200, 3).unwrap();
        let vae = train_claire_m(&d, &small_hp(1)).unwrap();
        let set = generate_counterfactuals(&vae, &d.subset(&(0..10).collect::<Vec<_>>()), 2, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cf.csv");
        set.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "instance,s_cf,X0,X1,X2,y_cf");
        assert_eq!(lines.len(), 1 + 10 * 4);
    }
}
