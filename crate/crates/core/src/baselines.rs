//! Comparison predictors: constant, full, unaware, CFP-U and CFP-O.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{onehot, ColumnKind, Dataset, Scaler, Task};
use crate::error::{Error, Result};
use crate::numerics::{
    seeded_rng, Adam, Matrix, Mlp, OutputActivation, Tape, DEFAULT_HIDDEN, DEFAULT_LR,
};
use crate::scm::{Scm, DEFAULT_POSTERIOR_SAMPLES};

const IRLS_TOL: f64 = 1e-8;
const IRLS_MAX_ITER: usize = 100;

/// Anything that maps a dataset to one prediction per row. Classification
/// predictors return probabilities.
pub trait Predictor {
    fn predict(&self, data: &Dataset) -> Result<Vec<f64>>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Identity,
    Logistic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub link: Link,
}

fn with_intercept(x: &Matrix) -> DMatrix<f64> {
    DMatrix::from_fn(x.rows(), x.cols() + 1, |r, c| if c == 0 { 1.0 } else { x.get(r, c - 1) })
}

impl LinearModel {
    /// Ordinary least squares with an intercept.
    pub fn fit_ols(x: &Matrix, y: &[f64]) -> Result<Self> {
        let design = Matrix::filled(x.rows(), 1, 1.0).hconcat(x)?;
        let beta = crate::numerics::linalg::least_squares(&design, y)?;
        Ok(Self {
            intercept: beta[0],
            coefficients: beta[1..].to_vec(),
            link: Link::Identity,
        })
    }

    /// Logistic regression by iteratively reweighted least squares.
    pub fn fit_logistic(x: &Matrix, y: &[f64]) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::shape("fit_logistic", format!("{} rows vs {} targets", x.rows(), y.len())));
        }
        if x.rows() <= x.cols() {
            return Err(Error::Fit("too few rows for logistic regression".into()));
        }
        let design = with_intercept(x);
        let target = DVector::from_column_slice(y);
        let mut beta = DVector::<f64>::zeros(design.ncols());
        let mut converged = false;
        for _ in 0..IRLS_MAX_ITER {
            let eta = &design * &beta;
            let p = eta.map(crate::numerics::sigmoid);
            let w = p.map(|p| (p * (1.0 - p)).max(1e-12));
            let mut xtwx = DMatrix::<f64>::zeros(design.ncols(), design.ncols());
            for r in 0..design.nrows() {
                let row = design.row(r);
                xtwx += w[r] * row.transpose() * row;
            }
            let grad = design.transpose() * (&target - &p);
            let step = xtwx
                .cholesky()
                .ok_or_else(|| Error::Fit("singular weighted design in IRLS".into()))?
                .solve(&grad);
            beta += &step;
            if !beta.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite { op: "irls" });
            }
            if step.amax() < IRLS_TOL {
                converged = true;
                break;
            }
        }
        if !converged {
            log::warn!("IRLS stopped after {IRLS_MAX_ITER} iterations without converging");
        }
        Ok(Self {
            intercept: beta[0],
            coefficients: beta.iter().skip(1).copied().collect(),
            link: Link::Logistic,
        })
    }

    pub fn fit(x: &Matrix, y: &[f64], task: Task) -> Result<Self> {
        match task {
            Task::Regression => Self::fit_ols(x, y),
            Task::Classification => Self::fit_logistic(x, y),
        }
    }

    pub fn predict_matrix(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols() != self.coefficients.len() {
            return Err(Error::shape(
                "LinearModel::predict",
                format!("{} columns for {} coefficients", x.cols(), self.coefficients.len()),
            ));
        }
        Ok((0..x.rows())
            .map(|r| {
                let eta = self.intercept
                    + x.row(r).iter().zip(&self.coefficients).map(|(a, b)| a * b).sum::<f64>();
                match self.link {
                    Link::Identity => eta,
                    Link::Logistic => crate::numerics::sigmoid(eta),
                }
            })
            .collect())
    }
}

/// Feature columns kept for an intercept model: the first indicator of each
/// one-hot group (`name=level` columns sharing `name`) is dropped.
pub fn reference_coded_columns(data: &Dataset) -> Vec<usize> {
    let mut keep = Vec::with_capacity(data.num_features());
    let mut previous_group: Option<&str> = None;
    for (c, name) in data.feature_names.iter().enumerate() {
        if data.feature_kinds.get(c) != Some(&ColumnKind::Indicator) {
            previous_group = None;
            keep.push(c);
            continue;
        }
        let group = name.split_once('=').map_or(name.as_str(), |(g, _)| g);
        if previous_group == Some(group) {
            keep.push(c);
        }
        previous_group = Some(group);
    }
    keep
}

/// Selected features plus one-hot `S` without its first level (the intercept absorbs it).
fn features_with_dummies(data: &Dataset, columns: &[usize]) -> Matrix {
    let dummies = data.s_onehot().slice_cols(1, data.num_sensitive);
    data.x.select_cols(columns).hconcat(&dummies).expect("row counts match")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantPredictor {
    pub value: f64,
}

/// Mean of the training targets, the minimizer of training MSE.
pub fn constant_predictor(train: &Dataset) -> Result<ConstantPredictor> {
    if train.is_empty() {
        return Err(Error::Empty("constant_predictor"));
    }
    Ok(ConstantPredictor {
        value: train.y.iter().sum::<f64>() / train.len() as f64,
    })
}

impl Predictor for ConstantPredictor {
    fn predict(&self, data: &Dataset) -> Result<Vec<f64>> {
        Ok(vec![self.value; data.len()])
    }
}

/// Linear model over all features, optionally with the sensitive attribute.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearPredictor {
    pub model: LinearModel,
    pub uses_sensitive: bool,
    /// Feature columns entering the model.
    pub columns: Vec<usize>,
}

impl LinearPredictor {
    fn design(&self, data: &Dataset) -> Matrix {
        if self.uses_sensitive {
            features_with_dummies(data, &self.columns)
        } else {
            data.x.select_cols(&self.columns)
        }
    }
}

impl Predictor for LinearPredictor {
    fn predict(&self, data: &Dataset) -> Result<Vec<f64>> {
        self.model.predict_matrix(&self.design(data))
    }
}

/// Linear or logistic model on every feature plus one-hot `S`.
pub fn full_predictor(train: &Dataset) -> Result<LinearPredictor> {
    let columns = reference_coded_columns(train);
    Ok(LinearPredictor {
        model: LinearModel::fit(&features_with_dummies(train, &columns), &train.y, train.task)?,
        uses_sensitive: true,
        columns,
    })
}

/// Linear or logistic model on every feature except `S`.
pub fn unaware_predictor(train: &Dataset) -> Result<LinearPredictor> {
    let columns = reference_coded_columns(train);
    Ok(LinearPredictor {
        model: LinearModel::fit(&train.x.select_cols(&columns), &train.y, train.task)?,
        uses_sensitive: false,
        columns,
    })
}

/// Settings shared by the two counterfactually fair baselines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CfpConfig {
    /// The assumed causal model, possibly mis-specified.
    pub scm: Scm,
    pub posterior_samples: usize,
    pub epochs: usize,
    pub lr: f64,
    pub fairness_weight: f64,
    pub hidden: usize,
    pub seed: u64,
}

impl CfpConfig {
    pub fn new(scm: Scm) -> Self {
        Self {
            scm,
            posterior_samples: DEFAULT_POSTERIOR_SAMPLES,
            epochs: 2000,
            lr: DEFAULT_LR,
            fairness_weight: 1.0,
            hidden: DEFAULT_HIDDEN,
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.posterior_samples == 0 || self.epochs == 0 || self.hidden == 0 {
            return Err(Error::Config("CFP counts must be positive".into()));
        }
        if !(self.lr > 0.0) || !(self.fairness_weight >= 0.0) {
            return Err(Error::Config("CFP lr must be positive and fairness weight non-negative".into()));
        }
        Ok(())
    }
}

/// Linear model on inferred latents plus the features that are not
/// descendants of `S` under the assumed model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CfpU {
    pub config: CfpConfig,
    /// Dataset columns of the non-descendant features.
    pub feature_columns: Vec<usize>,
    pub feature_names: Vec<String>,
    pub model: LinearModel,
}

impl CfpU {
    fn design(&self, data: &Dataset) -> Result<Matrix> {
        let latents = self.config.scm.infer_latents_sampled(
            data,
            self.config.posterior_samples,
            self.config.seed,
        )?;
        latents.hconcat(&data.x.select_cols(&self.feature_columns))
    }
}

impl Predictor for CfpU {
    fn predict(&self, data: &Dataset) -> Result<Vec<f64>> {
        self.model.predict_matrix(&self.design(data)?)
    }
}

pub fn cfp_u(config: &CfpConfig, data: &Dataset) -> Result<CfpU> {
    config.validate()?;
    let graph = config.scm.graph();
    let descendants = graph.descendants(graph.sensitive());
    let feature_nodes: Vec<usize> = graph
        .feature_nodes()
        .into_iter()
        .filter(|&i| !descendants[i])
        .collect();
    if feature_nodes.is_empty() && graph.latent_nodes().is_empty() {
        return Err(Error::Config(
            "CFP-U needs a latent node or a non-descendant feature".into(),
        ));
    }
    let feature_names: Vec<String> = feature_nodes.iter().map(|&i| graph.name(i).to_string()).collect();
    let feature_columns = feature_names
        .iter()
        .map(|n| {
            data.feature_index(n)
                .ok_or_else(|| Error::Data(format!("dataset lacks column `{n}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut predictor = CfpU {
        config: config.clone(),
        feature_columns,
        feature_names,
        model: LinearModel {
            coefficients: vec![],
            intercept: 0.0,
            link: Link::Identity,
        },
    };
    let design = predictor.design(data)?;
    predictor.model = LinearModel::fit(&design, &data.y, data.task)?;
    Ok(predictor)
}

/// Network `f(X, onehot S)` trained with a counterfactual-difference penalty
/// under the assumed causal model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CfpO {
    pub config: CfpConfig,
    pub net: Mlp,
    pub x_scaler: Scaler,
    /// Target mean and std for regression; identity for classification.
    pub y_shift: f64,
    pub y_scale: f64,
    pub task: Task,
}

impl CfpO {
    fn input(&self, x: &Matrix, s: &[usize], k: usize) -> Matrix {
        self.x_scaler
            .transform(x)
            .hconcat(&onehot(s, k))
            .expect("row counts match")
    }
}

impl Predictor for CfpO {
    fn predict(&self, data: &Dataset) -> Result<Vec<f64>> {
        let out = self.net.forward(&self.input(&data.x, &data.s, data.num_sensitive))?;
        Ok(out.data().iter().map(|v| v * self.y_scale + self.y_shift).collect())
    }
}

pub fn cfp_o(config: &CfpConfig, data: &Dataset) -> Result<CfpO> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("cfp_o"));
    }
    let k = data.num_sensitive;
    let n = data.len();
    let rows: Vec<usize> = (0..n).collect();
    let x_scaler = Scaler::fit(&data.x, &rows, &data.feature_kinds)?;
    let (y_shift, y_scale) = match data.task {
        Task::Regression => {
            let m = data.y.iter().sum::<f64>() / n as f64;
            let sd = (data.y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt();
            (m, if sd > 1e-12 { sd } else { 1.0 })
        }
        Task::Classification => (0.0, 1.0),
    };
    let mut rng = seeded_rng(config.seed);
    let activation = match data.task {
        Task::Regression => OutputActivation::Identity,
        Task::Classification => OutputActivation::Sigmoid,
    };
    let mut model = CfpO {
        config: config.clone(),
        net: Mlp::two_layer(data.num_features() + k, config.hidden, 1, activation, &mut rng),
        x_scaler,
        y_shift,
        y_scale,
        task: data.task,
    };

    // factual input and every counterfactual copy under the assumed model
    let factual = model.input(&data.x, &data.s, k);
    let target = Matrix::column(&data.y.iter().map(|v| (v - y_shift) / y_scale).collect::<Vec<_>>());
    let mut cf_inputs = Vec::new();
    let mut cf_rows = Vec::new();
    for s_new in 0..k {
        let rows: Vec<usize> = (0..n).filter(|&r| data.s[r] != s_new).collect();
        if rows.is_empty() || config.fairness_weight == 0.0 {
            continue;
        }
        let sub = data.subset(&rows);
        let cf = config.scm.counterfactual_dataset(
            &sub,
            s_new,
            config.posterior_samples,
            config.seed.wrapping_add(s_new as u64),
        )?;
        cf_inputs.push(model.input(&cf.x, &cf.s, k));
        cf_rows.push(rows);
    }
    let pair_count: usize = cf_rows.iter().map(Vec::len).sum();

    let mut adam = Adam::new(config.lr);
    for epoch in 0..config.epochs {
        let tape = Tape::new();
        let net = model.net.bind(&tape);
        let pred = net.forward_logits(tape.constant(factual.clone()))?;
        let y = tape.constant(target.clone());
        let mut loss = match data.task {
            Task::Regression => pred.sub(y)?.square().mean(),
            Task::Classification => pred.bce_with_logits(y)?.mean(),
        };
        if pair_count > 0 {
            let out = match data.task {
                Task::Regression => pred,
                Task::Classification => pred.sigmoid(),
            };
            let mut penalty: Option<crate::numerics::Var> = None;
            for (input, rows) in cf_inputs.iter().zip(&cf_rows) {
                let cf_pred = net.forward(tape.constant(input.clone()))?;
                let diff = cf_pred.sub(out.select_rows(rows)?)?.abs().sum();
                penalty = Some(match penalty {
                    Some(p) => p.add(diff)?,
                    None => diff,
                });
            }
            let penalty = penalty.expect("at least one counterfactual block");
            loss = loss.add(penalty.scale(config.fairness_weight / pair_count as f64))?;
        }
        let grads = tape
            .backward(loss)
            .map_err(|e| Error::Diverged { epoch, source: Box::new(e) })?;
        let g = net.gradients(&grads);
        drop(net);
        adam.step(&mut model.net.parameters_mut(), &g)?;
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scm::{claire_synthetic, mixed_chain, ChainParams};

    fn toy(x: Vec<f64>, y: Vec<f64>, task: Task) -> Dataset {
        let n = x.len();
        let s = (0..n).map(|i| i % 2).collect();
        Dataset::new(vec!["x".into()], Matrix::column(&x), s, y, task, 2).unwrap()
    }

    #[test]
    fn one_hot_groups_lose_their_first_level() {
        let names = ["age", "sex=F", "sex=M", "m=a", "m=b", "m=c"].map(String::from).to_vec();
        let x = Matrix::from_rows(&[
            vec![30.0, 1.0, 0.0, 1.0, 0.0, 0.0],
            vec![40.0, 0.0, 1.0, 0.0, 1.0, 0.0],
            vec![50.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            vec![35.0, 0.0, 1.0, 1.0, 0.0, 0.0],
            vec![45.0, 1.0, 0.0, 0.0, 1.0, 0.0],
            vec![55.0, 0.0, 1.0, 0.0, 0.0, 1.0],
            vec![33.0, 1.0, 0.0, 0.0, 1.0, 0.0],
        ])
        .unwrap();
        let mut d = Dataset::new(names, x, vec![0, 1, 0, 1, 0, 1, 0], vec![1.0, 2.0, 3.0, 2.5, 2.0, 3.5, 1.0], Task::Regression, 2)
            .unwrap();
        d.feature_kinds = vec![
            ColumnKind::Continuous,
            ColumnKind::Indicator,
            ColumnKind::Indicator,
            ColumnKind::Indicator,
            ColumnKind::Indicator,
            ColumnKind::Indicator,
        ];
        assert_eq!(reference_coded_columns(&d), vec![0, 2, 4, 5]);
        // full one-hot plus intercept would be singular
        assert!(unaware_predictor(&d).is_ok());
    }

    #[test]
    fn constant_is_training_mean() {
        let d = toy(vec![0.0, 1.0, 2.0], vec![1.0, 2.0, 3.0], Task::Regression);
        assert_eq!(constant_predictor(&d).unwrap().value, 2.0);
        let d = toy(vec![0.0, 1.0, 2.0], vec![0.0, 0.0, 1.0], Task::Classification);
        assert!((constant_predictor(&d).unwrap().value - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn ols_exact_line() {
        let x = Matrix::column(&[0.0, 1.0, 2.0, 3.0]);
        let m = LinearModel::fit_ols(&x, &[0.0, 2.0, 4.0, 6.0]).unwrap();
        assert!((m.coefficients[0] - 2.0).abs() < 1e-12 && m.intercept.abs() < 1e-12);
    }

    #[test]
    fn logistic_matches_known_fit() {
        // non-separable data; optimum satisfies the score equations
        let xs = [-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, -1.5, 1.5, 0.2];
        let ys = [0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0, 1.0];
        let m = LinearModel::fit_logistic(&Matrix::column(&xs), &ys).unwrap();
        let p = m.predict_matrix(&Matrix::column(&xs)).unwrap();
        let score0: f64 = ys.iter().zip(&p).map(|(y, p)| y - p).sum();
        let score1: f64 = ys.iter().zip(&p).zip(&xs).map(|((y, p), x)| (y - p) * x).sum();
        assert!(score0.abs() < 1e-9 && score1.abs() < 1e-9);
    }

    #[test]
    fn full_fits_at_least_as_well_as_unaware() {
        let scm = claire_synthetic();
        let (d, _) = scm.sample(3000, 5).unwrap();
        let sse = |p: Vec<f64>| p.iter().zip(&d.y).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let full = sse(full_predictor(&d).unwrap().predict(&d).unwrap());
        let unaware = sse(unaware_predictor(&d).unwrap().predict(&d).unwrap());
        assert!(full <= unaware + 1e-9);
    }

    #[test]
    fn cfp_u_excludes_descendants() {
        let scm = claire_synthetic();
        let (d, _) = scm.sample(500, 1).unwrap();
        let mut cfg = CfpConfig::new(scm);
        cfg.posterior_samples = 50;
        let model = cfp_u(&cfg, &d).unwrap();
        assert_eq!(model.feature_names, vec!["X0".to_string()]);
        assert_eq!(model.model.coefficients.len(), 2);
    }

    #[test]
    fn cfp_u_under_incorrect_models_uses_more_inputs() {
        use crate::scm::IncorrectVariant;
        let truth = claire_synthetic();
        let (d, _) = truth.sample(2000, 2).unwrap();
        let m1 = truth.incorrect_variant(IncorrectVariant::M1, &d).unwrap();
        let m2 = truth.incorrect_variant(IncorrectVariant::M2, &d).unwrap();
        let mut c1 = CfpConfig::new(m1);
        c1.posterior_samples = 20;
        let mut c2 = CfpConfig::new(m2);
        c2.posterior_samples = 20;
        assert_eq!(cfp_u(&c1, &d).unwrap().feature_names, vec!["X0", "X2"]);
        assert_eq!(cfp_u(&c2, &d).unwrap().feature_names, vec!["X0", "X1", "X2"]);
    }

    #[test]
    fn appendix_regressions() {
        let (s2, sy) = (1.0_f64, 0.5_f64);
        let scm = mixed_chain(ChainParams {
            sigma_u: 1.0,
            sigma_1: 1.0,
            sigma_y: sy,
            sigma_2: s2,
            sigma_3: 1.0,
        })
        .unwrap();
        let (d, _) = scm.sample(100_000, 3).unwrap();
        let col = |n: &str| d.x.col(d.feature_index(n).unwrap());
        let m = LinearModel::fit_ols(&Matrix::from_vec(d.len(), 1, col("X3")).unwrap(), &d.y).unwrap();
        assert!((m.coefficients[0] - 1.0).abs() < 0.02);
        let x123 = d.x.select_cols(&[
            d.feature_index("X1").unwrap(),
            d.feature_index("X2").unwrap(),
            d.feature_index("X3").unwrap(),
        ]);
        let m = LinearModel::fit_ols(&x123, &d.y).unwrap();
        let a = s2 * s2 / (s2 * s2 + sy * sy);
        let b = sy * sy / (s2 * s2 + sy * sy);
        for (got, want) in m.coefficients.iter().zip([a, b, a]) {
            assert!((got - want).abs() < 0.02, "{got} vs {want}");
        }
    }

    #[test]
    fn cfp_o_without_penalty_trains() {
        let scm = claire_synthetic();
        let (d, _) = scm.sample(300, 4).unwrap();
        let mut cfg = CfpConfig::new(scm);
        cfg.fairness_weight = 0.0;
        cfg.epochs = 300;
        cfg.lr = 1e-2;
        let model = cfp_o(&cfg, &d).unwrap();
        let pred = model.predict(&d).unwrap();
        let mse = pred.iter().zip(&d.y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / d.len() as f64;
        let var = {
            let m = d.y.iter().sum::<f64>() / d.len() as f64;
            d.y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / d.len() as f64
        };
        assert!(mse < 0.5 * var, "mse {mse} var {var}");
    }

    #[test]
    fn serializes_with_config() {
        let scm = claire_synthetic();
        let (d, _) = scm.sample(200, 4).unwrap();
        let mut cfg = CfpConfig::new(scm);
        cfg.posterior_samples = 10;
        let model = cfp_u(&cfg, &d).unwrap();
        let text = serde_json::to_string(&model).unwrap();
        let back: CfpU = serde_json::from_str(&text).unwrap();
        assert_eq!(back.predict(&d).unwrap(), model.predict(&d).unwrap());
    }
}
