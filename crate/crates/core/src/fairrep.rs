//! Fair representation learning on augmented counterfactuals.
//!
//! A representation network maps features to `Z` and a head predicts from
//! `Z`. Training minimizes the subgroup-averaged risk plus an invariance
//! penalty per subgroup, plus a cosine-distance constraint tying the
//! representation of every instance to those of its generated
//! counterfactuals.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::augment::AugmentedSet;
use crate::baselines::Predictor;
use crate::data::{Dataset, Scaler, Task};
use crate::error::{Error, Result};
use crate::numerics::{seeded_rng, Adam, BoundMlp, Matrix, Mlp, OutputActivation, Tape, Var, DEFAULT_HIDDEN, DEFAULT_LR};

/// Default minibatch size of both training stages.
pub const DEFAULT_BATCH_SIZE: usize = 128;

/// Hyperparameters of both stages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperParams {
    /// Weight of the embedding MMD penalty (CLAIRE-M).
    pub alpha: f64,
    /// Weight of the adversarial term (CLAIRE-A).
    pub alpha_prime: f64,
    /// Weight of the counterfactual constraint.
    pub beta: f64,
    /// Weight of the invariance penalty.
    pub lambda: f64,
    /// Embedding draws averaged per counterfactual.
    pub k_samples: usize,
    /// Representation-learning epochs.
    pub epochs: usize,
    /// Augmentation VAE epochs.
    pub vae_epochs: usize,
    pub lr: f64,
    pub hidden: usize,
    pub rep_dim: usize,
    pub latent_dim: usize,
    /// Minibatch size for both stages; `None` means full batch.
    pub batch_size: Option<usize>,
    /// Keep the epoch with the lowest validation risk instead of the last.
    pub select_best_epoch: bool,
    pub seed: u64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            alpha_prime: 1.0,
            beta: 5.0,
            lambda: 1.0,
            k_samples: 20,
            epochs: 500,
            vae_epochs: 500,
            lr: DEFAULT_LR,
            hidden: DEFAULT_HIDDEN,
            rep_dim: 10,
            latent_dim: 10,
            batch_size: Some(DEFAULT_BATCH_SIZE),
            select_best_epoch: false,
            seed: 0,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let weights = [self.alpha, self.alpha_prime, self.beta, self.lambda];
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Config("alpha, alpha', beta and lambda must be finite and non-negative".into()));
        }
        if self.k_samples == 0 {
            return Err(Error::Config("K must be at least 1".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.batch_size == Some(0) {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.hidden == 0 || self.rep_dim == 0 || self.latent_dim == 0 {
            return Err(Error::Config("network widths must be positive".into()));
        }
        Ok(())
    }
}

/// Representation network, prediction head and the scaling they use.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClaireModel {
    pub phi: Mlp,
    pub g: Mlp,
    pub task: Task,
    pub x_scaler: Scaler,
    pub y_shift: f64,
    pub y_scale: f64,
    pub hp: HyperParams,
}

impl ClaireModel {
    pub fn new(num_features: usize, task: Task, x_scaler: Scaler, y_shift: f64, y_scale: f64, hp: &HyperParams) -> Self {
        let mut rng = seeded_rng(hp.seed);
        let head = match task {
            Task::Regression => OutputActivation::Identity,
            Task::Classification => OutputActivation::Sigmoid,
        };
        Self {
            phi: Mlp::two_layer(num_features, hp.hidden, hp.rep_dim, OutputActivation::Identity, &mut rng),
            g: Mlp::two_layer(hp.rep_dim, hp.hidden, 1, head, &mut rng),
            task,
            x_scaler,
            y_shift,
            y_scale,
            hp: hp.clone(),
        }
    }

    /// Representations of unscaled features.
    pub fn represent(&self, x: &Matrix) -> Result<Matrix> {
        self.phi.forward(&self.x_scaler.transform(x))
    }

    pub fn predict_matrix(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols() != self.phi.input_dim() {
            return Err(Error::shape(
                "ClaireModel::predict",
                format!("{} columns for a {}-feature model", x.cols(), self.phi.input_dim()),
            ));
        }
        let out = self.g.forward(&self.represent(x)?)?;
        Ok(out.data().iter().map(|v| v * self.y_scale + self.y_shift).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    fn scaled_target(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|v| (v - self.y_shift) / self.y_scale).collect()
    }
}

impl Predictor for ClaireModel {
    fn predict(&self, data: &Dataset) -> Result<Vec<f64>> {
        self.predict_matrix(&data.x)
    }
}

/// Risk and invariance penalty of one subgroup.
pub struct IrmTerms<'t> {
    pub risk: Var<'t>,
    /// Derivative of the risk of `w * f` at `w = 1`.
    pub derivative: Var<'t>,
    pub penalty: Var<'t>,
}

/// Subgroup risk and squared invariance derivative from head outputs.
///
/// For squared error the derivative of `mean((w f - y)^2)` at `w = 1` is
/// `2 mean((f - y) f)`. For cross-entropy on logits `l` it is
/// `mean((sigmoid(l) - y) l)`.
pub fn irm_terms<'t>(output: Var<'t>, target: Var<'t>, task: Task) -> Result<IrmTerms<'t>> {
    if output.shape().0 == 0 {
        return Err(Error::Empty("irm subgroup"));
    }
    let (risk, derivative) = match task {
        Task::Regression => {
            let resid = output.sub(target)?;
            (resid.square().mean(), resid.mul(output)?.mean().scale(2.0))
        }
        Task::Classification => {
            let risk = output.bce_with_logits(target)?.mean();
            let d = output.sigmoid().sub(target)?.mul(output)?.mean();
            (risk, d)
        }
    };
    Ok(IrmTerms {
        risk,
        derivative,
        penalty: derivative.square(),
    })
}

/// Plain-value risk and derivative for one subgroup.
pub fn irm_penalty(model: &ClaireModel, data: &Dataset, s: usize) -> Result<(f64, f64)> {
    let rows: Vec<usize> = (0..data.len()).filter(|&r| data.s[r] == s).collect();
    if rows.is_empty() {
        return Err(Error::Empty("irm subgroup"));
    }
    let tape = Tape::new();
    let phi = model.phi.bind(&tape);
    let g = model.g.bind(&tape);
    let x = tape.constant(model.x_scaler.transform(&data.x.select_rows(&rows)));
    let y = tape.constant(Matrix::column(&model.scaled_target(&rows.iter().map(|&r| data.y[r]).collect::<Vec<_>>())));
    let out = g.forward_logits(phi.forward(x)?)?;
    let t = irm_terms(out, y, model.task)?;
    Ok((t.risk.scalar(), t.penalty.scalar()))
}

/// Mean cosine distance between each factual representation and the
/// representations of its counterfactuals, over all `(i, s')` with
/// `s' != s_i`.
pub fn cf_constraint_var<'t>(factual: Var<'t>, counterfactual: &[(Vec<usize>, Var<'t>)]) -> Result<Var<'t>> {
    let mut total: Option<Var<'t>> = None;
    let mut count = 0usize;
    for (rows, z_cf) in counterfactual {
        if rows.is_empty() {
            continue;
        }
        let d = factual.select_rows(rows)?.cosine_distance_rows(*z_cf)?.sum();
        count += rows.len();
        total = Some(match total {
            Some(t) => t.add(d)?,
            None => d,
        });
    }
    match total {
        Some(t) => Ok(t.scale(1.0 / count as f64)),
        None => Ok(factual.tape().constant(Matrix::scalar(0.0))),
    }
}

/// Counterfactual constraint of a trained model on a dataset and its
/// augmentation.
pub fn cf_constraint(model: &ClaireModel, data: &Dataset, augmented: &AugmentedSet) -> Result<f64> {
    let tape = Tape::new();
    let phi = model.phi.bind(&tape);
    let z = phi.forward(tape.constant(model.x_scaler.transform(&data.x)))?;
    let mut cf = Vec::new();
    for s_new in 0..augmented.num_sensitive() {
        let (rows, x) = augmented.for_value(s_new, &data.s);
        cf.push((rows, phi.forward(tape.constant(model.x_scaler.transform(&x)))?));
    }
    Ok(cf_constraint_var(z, &cf)?.scalar())
}

/// Scaled inputs of one training batch.
pub struct LossInputs {
    pub x: Matrix,
    pub y: Matrix,
    /// Row indices per sensitive value.
    pub groups: Vec<Vec<usize>>,
    /// Per imposed value: factual rows it applies to and their scaled counterfactual features.
    pub counterfactuals: Vec<(Vec<usize>, Matrix)>,
}

/// Value of the training objective and its parts.
pub struct LossParts<'t> {
    pub total: Var<'t>,
    pub risk: f64,
    pub penalty: f64,
    pub constraint: f64,
}

/// `(1/|S|) sum_s (R^s + lambda D_s^2) + beta L_c` over the subgroups present.
pub fn total_loss_var<'t>(phi: &BoundMlp<'t>, g: &BoundMlp<'t>, inputs: &LossInputs, task: Task, beta: f64, lambda: f64) -> Result<LossParts<'t>> {
    let tape = phi.params[0].tape();
    let z = phi.forward(tape.constant(inputs.x.clone()))?;
    let out = g.forward_logits(z)?;
    let y = tape.constant(inputs.y.clone());
    let present: Vec<&Vec<usize>> = inputs.groups.iter().filter(|g| !g.is_empty()).collect();
    if present.is_empty() {
        return Err(Error::Empty("total_loss"));
    }
    let mut irm: Option<Var<'t>> = None;
    let (mut risk, mut penalty) = (0.0, 0.0);
    for rows in &present {
        let t = irm_terms(out.select_rows(rows)?, y.select_rows(rows)?, task)?;
        risk += t.risk.scalar();
        penalty += t.penalty.scalar();
        let term = if lambda == 0.0 { t.risk } else { t.risk.add(t.penalty.scale(lambda))? };
        irm = Some(match irm {
            Some(a) => a.add(term)?,
            None => term,
        });
    }
    let k = present.len() as f64;
    let mut total = irm.expect("nonempty").scale(1.0 / k);
    let mut constraint = 0.0;
    if beta != 0.0 {
        let cf = inputs
            .counterfactuals
            .iter()
            .map(|(rows, x)| Ok((rows.clone(), phi.forward(tape.constant(x.clone()))?)))
            .collect::<Result<Vec<_>>>()?;
        let lc = cf_constraint_var(z, &cf)?;
        constraint = lc.scalar();
        total = total.add(lc.scale(beta))?;
    }
    Ok(LossParts {
        total,
        risk: risk / k,
        penalty: penalty / k,
        constraint,
    })
}

/// Objective value of a model on a dataset and its augmentation.
pub fn total_loss(model: &ClaireModel, data: &Dataset, augmented: &AugmentedSet, hp: &HyperParams) -> Result<f64> {
    let inputs = loss_inputs(model, data, augmented, &(0..data.len()).collect::<Vec<_>>())?;
    for (s, g) in inputs.groups.iter().enumerate() {
        if g.is_empty() {
            return Err(Error::Data(format!("sensitive subgroup {s} is empty")));
        }
    }
    let tape = Tape::new();
    let phi = model.phi.bind(&tape);
    let g = model.g.bind(&tape);
    Ok(total_loss_var(&phi, &g, &inputs, model.task, hp.beta, hp.lambda)?.total.scalar())
}

fn loss_inputs(model: &ClaireModel, data: &Dataset, augmented: &AugmentedSet, rows: &[usize]) -> Result<LossInputs> {
    if augmented.len() != data.len() || augmented.num_sensitive() != data.num_sensitive {
        return Err(Error::shape(
            "augmented set",
            format!(
                "{} rows x {} values for {} rows x {} values",
                augmented.len(),
                augmented.num_sensitive(),
                data.len(),
                data.num_sensitive
            ),
        ));
    }
    let x = model.x_scaler.transform(&data.x.select_rows(rows));
    let y_raw: Vec<f64> = rows.iter().map(|&r| data.y[r]).collect();
    let y = Matrix::column(&model.scaled_target(&y_raw));
    let mut groups = vec![Vec::new(); data.num_sensitive];
    for (i, &r) in rows.iter().enumerate() {
        groups[data.s[r]].push(i);
    }
    let mut counterfactuals = Vec::new();
    for s_new in 0..data.num_sensitive {
        let local: Vec<usize> = (0..rows.len()).filter(|&i| data.s[rows[i]] != s_new).collect();
        let global: Vec<usize> = local.iter().map(|&i| rows[i]).collect();
        let x_cf = model.x_scaler.transform(&augmented.x[s_new].select_rows(&global));
        counterfactuals.push((local, x_cf));
    }
    Ok(LossInputs { x, y, groups, counterfactuals })
}

/// Per-epoch trace of the training objective.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitLog {
    pub total: Vec<f64>,
    pub risk: Vec<f64>,
    pub penalty: Vec<f64>,
    pub constraint: Vec<f64>,
    pub validation_risk: Vec<f64>,
    pub best_epoch: Option<usize>,
}

/// Trains for `hp.epochs` with Adam and returns the final model.
pub fn train(data: &Dataset, augmented: &AugmentedSet, hp: &HyperParams) -> Result<ClaireModel> {
    Ok(train_logged(data, augmented, None, hp)?.0)
}

/// Training with an optional validation set. With `hp.select_best_epoch`
/// the epoch with the lowest validation risk is returned.
pub fn train_logged(
    data: &Dataset,
    augmented: &AugmentedSet,
    validation: Option<&Dataset>,
    hp: &HyperParams,
) -> Result<(ClaireModel, FitLog)> {
    hp.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("train"));
    }
    for (s, g) in data.groups().iter().enumerate() {
        if g.is_empty() {
            return Err(Error::Data(format!("sensitive subgroup {s} is empty")));
        }
    }
    let n = data.len();
    let all: Vec<usize> = (0..n).collect();
    let x_scaler = Scaler::fit(&data.x, &all, &data.feature_kinds)?;
    let (y_shift, y_scale) = match data.task {
        Task::Regression => {
            let m = data.y.iter().sum::<f64>() / n as f64;
            let sd = (data.y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt();
            (m, if sd > 1e-12 { sd } else { 1.0 })
        }
        Task::Classification => (0.0, 1.0),
    };
    let mut model = ClaireModel::new(data.num_features(), data.task, x_scaler, y_shift, y_scale, hp);
    let full = loss_inputs(&model, data, augmented, &all)?;
    let mut rng = seeded_rng(hp.seed.wrapping_add(1));
    let mut adam = Adam::new(hp.lr);
    let mut log = FitLog::default();
    let mut best: Option<(f64, ClaireModel)> = None;

    for epoch in 0..hp.epochs {
        let batches: Vec<LossInputs> = match hp.batch_size {
            Some(b) if b > 0 && b < n => {
                let mut idx = all.clone();
                idx.shuffle(&mut rng);
                idx.chunks(b)
                    .map(|rows| loss_inputs(&model, data, augmented, rows))
                    .collect::<Result<_>>()?
            }
            _ => Vec::new(),
        };
        let parts: Vec<&LossInputs> = if batches.is_empty() { vec![&full] } else { batches.iter().collect() };
        let mut sums = [0.0; 4];
        for inputs in &parts {
            let tape = Tape::new();
            let phi = model.phi.bind(&tape);
            let g = model.g.bind(&tape);
            let loss = total_loss_var(&phi, &g, inputs, data.task, hp.beta, hp.lambda)?;
            let value = loss.total.scalar();
            if !value.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    source: Box::new(Error::NonFinite { op: "total loss" }),
                });
            }
            sums[0] += value;
            sums[1] += loss.risk;
            sums[2] += loss.penalty;
            sums[3] += loss.constraint;
            let grads = tape
                .backward(loss.total)
                .map_err(|e| Error::Diverged { epoch, source: Box::new(e) })?;
            let mut grad_list = phi.gradients(&grads);
            grad_list.extend(g.gradients(&grads));
            drop((phi, g));
            let mut params = model.phi.parameters_mut();
            params.extend(model.g.parameters_mut());
            adam.step(&mut params, &grad_list)?;
        }
        let m = parts.len() as f64;
        log.total.push(sums[0] / m);
        log.risk.push(sums[1] / m);
        log.penalty.push(sums[2] / m);
        log.constraint.push(sums[3] / m);
        if let Some(val) = validation {
            let risk = validation_risk(&model, val)?;
            log.validation_risk.push(risk);
            if hp.select_best_epoch && best.as_ref().is_none_or(|(b, _)| risk < *b) {
                best = Some((risk, model.clone()));
                log.best_epoch = Some(epoch);
            }
        }
    }
    if let Some((_, m)) = best {
        model = m;
    }
    Ok((model, log))
}

fn validation_risk(model: &ClaireModel, data: &Dataset) -> Result<f64> {
    let pred = model.predict(data)?;
    Ok(match model.task {
        Task::Regression => {
            pred.iter().zip(&data.y).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / data.len().max(1) as f64
        }
        Task::Classification => {
            pred.iter()
                .zip(&data.y)
                .map(|(p, y)| {
                    let p = p.clamp(1e-12, 1.0 - 1e-12);
                    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
                })
                .sum::<f64>()
                / data.len().max(1) as f64
        }
    })
}

/// Rebuilds the same model from its hyperparameters and data, for exact replay checks.
pub fn replay(data: &Dataset, augmented: &AugmentedSet, model: &ClaireModel) -> Result<ClaireModel> {
    train(data, augmented, &model.hp)
}
