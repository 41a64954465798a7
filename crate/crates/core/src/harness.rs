//! Experiment orchestration: repeated runs, ablations, sweeps and reports.
//!
//! Each repetition uses seed `base_seed + r`. Within a repetition every
//! method sees the same data, the same split, the same augmentation and the
//! same ground-truth counterfactual test sets.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{generate_counterfactuals, train_vae, AugmentedSet, Regularizer, Vae};
use crate::baselines::{cfp_o, cfp_u, constant_predictor, full_predictor, unaware_predictor, CfpConfig, Predictor};
use crate::data::{load_csv, split, Dataset, Schema, Task};
use crate::error::{Error, Result};
use crate::fairrep::{self, HyperParams};
use crate::metrics::{accuracy, divergence_report, mae, rmse, CounterfactualSet, MetricsReport};
use crate::scm::{claire_synthetic, fit_linear_scm, CausalGraph, IncorrectVariant, Scm, DEFAULT_POSTERIOR_SAMPLES};

/// Causal model handed to the CFP baselines.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScmChoice {
    True,
    M1,
    M2,
}

impl ScmChoice {
    fn variant(self) -> Option<IncorrectVariant> {
        match self {
            ScmChoice::True => None,
            ScmChoice::M1 => Some(IncorrectVariant::M1),
            ScmChoice::M2 => Some(IncorrectVariant::M2),
        }
    }
}

impl FromStr for ScmChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "true" => Ok(ScmChoice::True),
            "m1" => Ok(ScmChoice::M1),
            "m2" => Ok(ScmChoice::M2),
            other => Err(Error::Config(format!("unknown causal model choice `{other}`"))),
        }
    }
}

impl fmt::Display for ScmChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScmChoice::True => "true",
            ScmChoice::M1 => "M1",
            ScmChoice::M2 => "M2",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Constant,
    Full,
    Unaware,
    /// `None` uses the experiment-level causal model choice.
    CfpU(Option<ScmChoice>),
    CfpO(Option<ScmChoice>),
    ClaireM,
    ClaireA,
    Erm,
    Irm,
    ClaireNi,
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        let (name, choice) = match lower.split_once(':') {
            Some((n, c)) => (n.to_string(), Some(c.parse::<ScmChoice>()?)),
            None => (lower.clone(), None),
        };
        let m = match name.replace('-', "_").as_str() {
            "constant" => Method::Constant,
            "full" => Method::Full,
            "unaware" => Method::Unaware,
            "cfp_u" => Method::CfpU(choice),
            "cfp_o" => Method::CfpO(choice),
            "claire_m" => Method::ClaireM,
            "claire_a" => Method::ClaireA,
            "erm" => Method::Erm,
            "irm" => Method::Irm,
            "claire_ni" => Method::ClaireNi,
            _ => return Err(Error::Config(format!("unknown method `{s}`"))),
        };
        if choice.is_some() && !matches!(m, Method::CfpU(_) | Method::CfpO(_)) {
            return Err(Error::Config(format!("method `{name}` takes no causal model choice")));
        }
        Ok(m)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Constant => f.write_str("constant"),
            Method::Full => f.write_str("full"),
            Method::Unaware => f.write_str("unaware"),
            Method::CfpU(None) => f.write_str("cfp_u"),
            Method::CfpU(Some(c)) => write!(f, "cfp_u:{}", c.to_string().to_ascii_lowercase()),
            Method::CfpO(None) => f.write_str("cfp_o"),
            Method::CfpO(Some(c)) => write!(f, "cfp_o:{}", c.to_string().to_ascii_lowercase()),
            Method::ClaireM => f.write_str("claire_m"),
            Method::ClaireA => f.write_str("claire_a"),
            Method::Erm => f.write_str("erm"),
            Method::Irm => f.write_str("irm"),
            Method::ClaireNi => f.write_str("claire_ni"),
        }
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Where the rows come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    /// Fresh sample of the synthetic benchmark model per repetition.
    Synthetic { n: usize },
    /// A CSV file with its schema and the causal graph used for evaluation.
    Csv { path: PathBuf, schema: PathBuf, graph: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub id: String,
    pub data: DataSource,
    pub methods: Vec<Method>,
    pub hp: HyperParams,
    pub scm: ScmChoice,
    pub repetitions: usize,
    pub base_seed: u64,
    /// Posterior draws per ground-truth and CFP counterfactual.
    pub posterior_samples: usize,
    pub cfp_epochs: usize,
    pub cfp_lr: f64,
    pub cfp_fairness_weight: f64,
    /// Sensitive-value pairs reported separately in addition to the averages.
    pub pairs: Vec<(usize, usize)>,
    /// Worker threads; 0 uses the global pool.
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            id: "experiment".into(),
            data: DataSource::Synthetic { n: DEFAULT_SYNTHETIC_ROWS },
            methods: vec![Method::Constant, Method::ClaireM],
            hp: HyperParams::default(),
            scm: ScmChoice::True,
            repetitions: 10,
            base_seed: 0,
            posterior_samples: DEFAULT_POSTERIOR_SAMPLES,
            cfp_epochs: 2000,
            cfp_lr: crate::numerics::DEFAULT_LR,
            cfp_fairness_weight: 1.0,
            pairs: vec![],
            workers: 0,
        }
    }
}

/// Rows drawn from the synthetic model per repetition.
pub const DEFAULT_SYNTHETIC_ROWS: usize = 2000;

impl ExperimentConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("methods must not be empty".into()));
        }
        if self.posterior_samples == 0 || self.cfp_epochs == 0 {
            return Err(Error::Config("sample and epoch counts must be positive".into()));
        }
        if let DataSource::Synthetic { n } = self.data {
            if n < 20 {
                return Err(Error::Config(format!("synthetic n = {n} is too small")));
            }
        }
        self.hp.validate()
    }

    /// Preset for table `id` (1 to 4).
    pub fn table(id: u8) -> Result<Self> {
        let base = Self::default();
        let m = |v: &[&str]| v.iter().map(|s| s.parse()).collect::<Result<Vec<Method>>>();
        Ok(match id {
            1 => Self {
                id: "table1".into(),
                methods: m(&["constant", "full", "unaware", "cfp_u:true", "cfp_o:true", "claire_m", "claire_a"])?,
                ..base
            },
            2 => Self {
                id: "table2".into(),
                methods: m(&["cfp_u:true", "cfp_u:m1", "cfp_o:true", "cfp_o:m1", "claire_m", "claire_a"])?,
                scm: ScmChoice::M1,
                ..base
            },
            3 => Self {
                id: "table3".into(),
                methods: m(&["cfp_u:true", "cfp_u:m2", "cfp_o:true", "cfp_o:m2", "claire_m", "claire_a"])?,
                scm: ScmChoice::M2,
                pairs: vec![(0, 1), (0, 2)],
                ..base
            },
            4 => Self {
                id: "table4".into(),
                methods: m(&["cfp_u:true", "cfp_u:m2", "cfp_o:true", "cfp_o:m2", "claire_m", "claire_a"])?,
                scm: ScmChoice::M2,
                pairs: vec![(2, 3)],
                ..base
            },
            other => return Err(Error::Config(format!("no table preset {other}; expected 1 to 4"))),
        })
    }
}

/// Mean and standard deviation of one metric over repetitions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
}

/// Aggregated rows plus the per-repetition reports behind them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub id: String,
    pub rows: Vec<ResultRow>,
    /// `reports[r]` lists `(method, report)` of repetition `r`.
    pub reports: Vec<Vec<(String, MetricsReport)>>,
    /// Wall-clock seconds per method summed over repetitions, plus a
    /// `"setup"` entry for sampling and ground-truth counterfactuals. A
    /// cached stage-1 model is charged to the first method that trains it.
    pub seconds: Vec<(String, f64)>,
}

impl RunOutput {
    pub fn get(&self, method: &str, metric: &str) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.method == method && r.metric == metric)
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        write_rows(dir.as_ref(), &self.rows)
    }

    /// Summed seconds of the setup plus the named methods.
    pub fn seconds_for(&self, methods: &[&str]) -> f64 {
        self.seconds
            .iter()
            .filter(|(m, _)| m == "setup" || methods.contains(&m.as_str()))
            .map(|(_, t)| t)
            .sum()
    }
}

/// Writes `results.json` and `results.csv`.
pub fn write_rows(dir: &Path, rows: &[ResultRow]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("results.json"), serde_json::to_string_pretty(rows)?)?;
    let mut w = csv::Writer::from_path(dir.join("results.csv"))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Scores `predictor` on the test rows and on each counterfactual copy.
pub fn evaluate(predictor: &dyn Predictor, test: &Dataset, cf_tests: &[Dataset]) -> Result<MetricsReport> {
    let pred = predictor.predict(test)?;
    let cf = CounterfactualSet::new(
        cf_tests
            .iter()
            .map(|d| predictor.predict(d))
            .collect::<Result<Vec<_>>>()?,
    )?;
    let mut report = divergence_report(&cf)?;
    match test.task {
        Task::Regression => {
            report.rmse = Some(rmse(&pred, &test.y)?);
            report.mae = Some(mae(&pred, &test.y)?);
        }
        Task::Classification => report.accuracy = Some(accuracy(&pred, &test.y)?),
    }
    Ok(report)
}

/// Everything one repetition shares across methods.
pub struct Repetition {
    pub seed: u64,
    pub truth: Scm,
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
    /// Ground-truth counterfactual test sets indexed by imposed value.
    pub cf_tests: Vec<Dataset>,
    vaes: HashMap<(Regularizer, u64), Vae>,
    scms: HashMap<ScmChoice, Scm>,
}

/// Loaded CSV data and the causal model fitted on it, shared by all repetitions.
struct Prepared {
    data: Option<(Dataset, Scm)>,
}

fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    match &config.data {
        DataSource::Synthetic { .. } => Ok(Prepared { data: None }),
        DataSource::Csv { path, schema, graph } => {
            let schema = Schema::from_json_file(schema)?;
            let (data, report) = load_csv(path, &schema)?;
            log::info!("loaded {} rows ({report:?})", data.len());
            let graph_text = std::fs::read_to_string(graph)?;
            let graph = CausalGraph::from_json(&graph_text)?;
            let scm = fit_linear_scm(&graph, &data).map_err(|e| e.context("fitting the evaluation causal model"))?;
            Ok(Prepared { data: Some((data, scm)) })
        }
    }
}

impl Repetition {
    /// Data, split and ground-truth test sets of repetition `index`.
    pub fn new(config: &ExperimentConfig, index: usize) -> Result<Self> {
        config.validate()?;
        Self::build(config, &prepare(config)?, index)
    }

    fn build(config: &ExperimentConfig, prepared: &Prepared, rep: usize) -> Result<Self> {
        let seed = config.base_seed.wrapping_add(rep as u64);
        let (data, truth) = match (&config.data, &prepared.data) {
            (DataSource::Synthetic { n }, _) => {
                let truth = claire_synthetic();
                let (d, _) = truth.sample(*n, seed)?;
                (d, truth)
            }
            (_, Some((d, scm))) => (d.clone(), scm.clone()),
            _ => unreachable!("csv data is prepared"),
        };
        let idx = split(data.len(), seed)?;
        let train = data.subset(&idx.train);
        let validation = data.subset(&idx.validation);
        let test = data.subset(&idx.test);
        let cf_tests = (0..data.num_sensitive)
            .map(|s| truth.counterfactual_dataset(&test, s, config.posterior_samples, seed ^ 0x5eed))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            seed,
            truth,
            train,
            validation,
            test,
            cf_tests,
            vaes: HashMap::new(),
            scms: HashMap::new(),
        })
    }

    fn scm(&mut self, choice: ScmChoice) -> Result<Scm> {
        if let Some(s) = self.scms.get(&choice) {
            return Ok(s.clone());
        }
        let scm = match choice.variant() {
            None => self.truth.clone(),
            Some(v) => self.truth.incorrect_variant(v, &self.train)?,
        };
        self.scms.insert(choice, scm.clone());
        Ok(scm)
    }

    fn vae(&mut self, regularizer: Regularizer, hp: &HyperParams) -> Result<Vae> {
        let weight = match regularizer {
            Regularizer::Mmd => hp.alpha,
            Regularizer::Adversarial => hp.alpha_prime,
            Regularizer::None => 0.0,
        };
        let key = (regularizer, weight.to_bits());
        if let Some(v) = self.vaes.get(&key) {
            return Ok(v.clone());
        }
        let hp = HyperParams { seed: self.seed, ..hp.clone() };
        let (vae, _) = train_vae(&self.train, &hp, regularizer)?;
        self.vaes.insert(key, vae.clone());
        Ok(vae)
    }

    fn augmentation(&mut self, regularizer: Regularizer, hp: &HyperParams) -> Result<AugmentedSet> {
        let vae = self.vae(regularizer, hp)?;
        generate_counterfactuals(&vae, &self.train, hp.k_samples, self.seed.wrapping_add(7))
    }

    /// Stage-1 model for `regularizer`, trained once per repetition and weight.
    pub fn vae_for(&mut self, regularizer: Regularizer, hp: &HyperParams) -> Result<Vae> {
        self.vae(regularizer, hp)
    }

    /// Trains the two-stage model for one of the CLAIRE-family methods.
    pub fn train_claire(&mut self, method: Method, hp: &HyperParams) -> Result<fairrep::ClaireModel> {
        match method {
            Method::ClaireM => self.claire(Regularizer::Mmd, hp),
            Method::ClaireA => self.claire(Regularizer::Adversarial, hp),
            Method::Erm => self.claire(Regularizer::Mmd, &HyperParams { beta: 0.0, lambda: 0.0, ..hp.clone() }),
            Method::Irm => self.claire(Regularizer::Mmd, &HyperParams { beta: 0.0, ..hp.clone() }),
            Method::ClaireNi => self.claire(Regularizer::Mmd, &HyperParams { lambda: 0.0, ..hp.clone() }),
            other => Err(Error::Config(format!("`{other}` is not a representation-learning method"))),
        }
    }

    fn claire(&mut self, regularizer: Regularizer, hp: &HyperParams) -> Result<fairrep::ClaireModel> {
        let aug = if hp.beta == 0.0 {
            // the constraint is off, so only the shapes of the set matter
            empty_augmentation(&self.train)
        } else {
            self.augmentation(regularizer, hp)?
        };
        let hp = HyperParams { seed: self.seed, ..hp.clone() };
        let validation = hp.select_best_epoch.then_some(&self.validation);
        Ok(fairrep::train_logged(&self.train, &aug, validation, &hp)?.0)
    }

    /// Trains `method` and evaluates it on this repetition's test sets.
    pub fn run_method(&mut self, method: Method, config: &ExperimentConfig) -> Result<MetricsReport> {
        let hp = &config.hp;
        let cfp = |rep: &mut Self, choice: Option<ScmChoice>| -> Result<CfpConfig> {
            let scm = rep.scm(choice.unwrap_or(config.scm))?;
            Ok(CfpConfig {
                posterior_samples: config.posterior_samples,
                epochs: config.cfp_epochs,
                lr: config.cfp_lr,
                fairness_weight: config.cfp_fairness_weight,
                hidden: hp.hidden,
                seed: rep.seed,
                ..CfpConfig::new(scm)
            })
        };
        let predictor: Box<dyn Predictor> = match method {
            Method::Constant => Box::new(constant_predictor(&self.train)?),
            Method::Full => Box::new(full_predictor(&self.train)?),
            Method::Unaware => Box::new(unaware_predictor(&self.train)?),
            Method::CfpU(choice) => {
                let c = cfp(self, choice)?;
                Box::new(cfp_u(&c, &self.train)?)
            }
            Method::CfpO(choice) => {
                let c = cfp(self, choice)?;
                Box::new(cfp_o(&c, &self.train)?)
            }
            Method::ClaireM | Method::ClaireA | Method::Erm | Method::Irm | Method::ClaireNi => {
                Box::new(self.train_claire(method, hp)?)
            }
        };
        evaluate(predictor.as_ref(), &self.test, &self.cf_tests)
    }
}

fn empty_augmentation(data: &Dataset) -> AugmentedSet {
    AugmentedSet {
        x: vec![data.x.clone(); data.num_sensitive],
        y: vec![data.y.clone(); data.num_sensitive],
        feature_names: data.feature_names.clone(),
    }
}

/// Display name used in result rows.
pub fn method_label(method: Method, config: &ExperimentConfig) -> String {
    match method {
        Method::CfpU(c) => format!("CFP-U ({})", c.unwrap_or(config.scm)),
        Method::CfpO(c) => format!("CFP-O ({})", c.unwrap_or(config.scm)),
        Method::Constant => "Constant".into(),
        Method::Full => "Full".into(),
        Method::Unaware => "Unaware".into(),
        Method::ClaireM => "CLAIRE-M".into(),
        Method::ClaireA => "CLAIRE-A".into(),
        Method::Erm => "ERM".into(),
        Method::Irm => "IRM".into(),
        Method::ClaireNi => "CLAIRE-NI".into(),
    }
}

fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Runs every method for every repetition and aggregates.
pub fn run(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    let prepared = prepare(config).map_err(|e| e.context(format!("experiment `{}`", config.id)))?;
    let timed: Vec<(Vec<(String, MetricsReport)>, Vec<f64>)> = with_pool(config.workers, || {
        (0..config.repetitions)
            .into_par_iter()
            .map(|r| -> Result<_> {
                let start = Instant::now();
                let mut rep = Repetition::build(config, &prepared, r)?;
                let mut seconds = vec![start.elapsed().as_secs_f64()];
                let mut reports = Vec::with_capacity(config.methods.len());
                for &m in &config.methods {
                    let start = Instant::now();
                    let report = rep
                        .run_method(m, config)
                        .map_err(|e| e.context(format!("experiment `{}`, repetition {r}, method {m}", config.id)))?;
                    seconds.push(start.elapsed().as_secs_f64());
                    log::info!("{} rep {r} {m}: wass {:.4}", config.id, report.wass_avg);
                    reports.push((method_label(m, config), report));
                }
                Ok((reports, seconds))
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let labels = std::iter::once("setup".to_string()).chain(config.methods.iter().map(|&m| method_label(m, config)));
    let seconds = labels
        .enumerate()
        .map(|(i, label)| (label, timed.iter().map(|(_, t)| t[i]).sum()))
        .collect();
    let reports: Vec<_> = timed.into_iter().map(|(r, _)| r).collect();
    Ok(RunOutput {
        id: config.id.clone(),
        rows: aggregate(&reports, &config.pairs),
        reports,
        seconds,
    })
}

/// ERM, IRM, CLAIRE-NI, CLAIRE-M and CLAIRE-A under one configuration.
pub fn ablation(config: &ExperimentConfig) -> Result<RunOutput> {
    let cfg = ExperimentConfig {
        id: format!("{}-ablation", config.id),
        methods: vec![Method::Erm, Method::Irm, Method::ClaireNi, Method::ClaireM, Method::ClaireA],
        ..config.clone()
    };
    run(&cfg)
}

fn metric_values(report: &MetricsReport, pairs: &[(usize, usize)]) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    if let Some(v) = report.rmse {
        out.push(("rmse".to_string(), v));
    }
    if let Some(v) = report.mae {
        out.push(("mae".to_string(), v));
    }
    if let Some(v) = report.accuracy {
        out.push(("accuracy".to_string(), v));
    }
    out.push(("mmd".to_string(), report.mmd_avg));
    out.push(("wass".to_string(), report.wass_avg));
    for &(a, b) in pairs {
        if let Some(p) = report.pair(a, b) {
            out.push((format!("mmd[{a},{b}]"), p.mmd));
            out.push((format!("wass[{a},{b}]"), p.wass));
        }
    }
    out
}

/// Mean and sample standard deviation per method and metric, in first-seen order.
pub fn aggregate(reports: &[Vec<(String, MetricsReport)>], pairs: &[(usize, usize)]) -> Vec<ResultRow> {
    let mut order: Vec<(String, String)> = Vec::new();
    let mut values: HashMap<(String, String), Vec<f64>> = HashMap::new();
    for rep in reports {
        for (method, report) in rep {
            for (metric, v) in metric_values(report, pairs) {
                let key = (method.clone(), metric);
                if !values.contains_key(&key) {
                    order.push(key.clone());
                }
                values.entry(key).or_default().push(v);
            }
        }
    }
    order
        .into_iter()
        .map(|key| {
            let v = &values[&key];
            let (mean, std) = mean_std(v);
            ResultRow {
                method: key.0,
                metric: key.1,
                mean,
                std,
            }
        })
        .collect()
}

pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Hyperparameter varied by [`sweep`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Alpha,
    K,
    Beta,
    Lambda,
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "alpha" => Ok(SweepParam::Alpha),
            "k" => Ok(SweepParam::K),
            "beta" => Ok(SweepParam::Beta),
            "lambda" => Ok(SweepParam::Lambda),
            other => Err(Error::Config(format!("cannot sweep `{other}`; expected alpha, k, beta or lambda"))),
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepParam::Alpha => "alpha",
            SweepParam::K => "K",
            SweepParam::Beta => "beta",
            SweepParam::Lambda => "lambda",
        })
    }
}

impl SweepParam {
    pub fn apply(self, hp: &HyperParams, value: f64) -> Result<HyperParams> {
        let mut hp = hp.clone();
        match self {
            SweepParam::Alpha => hp.alpha = value,
            SweepParam::Beta => hp.beta = value,
            SweepParam::Lambda => hp.lambda = value,
            SweepParam::K => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(Error::Config(format!("K must be a positive integer, got {value}")));
                }
                hp.k_samples = value as usize;
            }
        }
        hp.validate()?;
        Ok(hp)
    }
}

/// One sweep grid point with per-repetition reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub rows: Vec<ResultRow>,
    pub reports: Vec<MetricsReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepOutput {
    pub param: SweepParam,
    pub method: String,
    pub points: Vec<SweepPoint>,
}

impl SweepOutput {
    /// Result rows labelled `method[param=value]`.
    pub fn rows(&self) -> Vec<ResultRow> {
        self.points
            .iter()
            .flat_map(|p| {
                p.rows.iter().map(move |r| ResultRow {
                    method: format!("{}[{}={}]", r.method, self.param, p.value),
                    ..r.clone()
                })
            })
            .collect()
    }

    pub fn series(&self, metric: &str) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .filter_map(|p| p.rows.iter().find(|r| r.metric == metric).map(|r| (p.value, r.mean)))
            .collect()
    }

    /// `results.json`, `results.csv` and `plot.svg`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        write_rows(dir, &self.rows())?;
        let perf = if self.points.first().is_some_and(|p| p.rows.iter().any(|r| r.metric == "rmse")) {
            "rmse"
        } else {
            "accuracy"
        };
        let svg = sweep_svg(&format!("{} sweep", self.param), &[(perf, self.series(perf)), ("wass", self.series("wass"))]);
        std::fs::write(dir.join("plot.svg"), svg)?;
        Ok(())
    }
}

/// Varies one hyperparameter of the first CLAIRE method in `config.methods`
/// (CLAIRE-M when there is none), all else fixed.
pub fn sweep(config: &ExperimentConfig, param: SweepParam, values: &[f64]) -> Result<SweepOutput> {
    config.validate()?;
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let method = config
        .methods
        .iter()
        .copied()
        .find(|m| matches!(m, Method::ClaireM | Method::ClaireA))
        .unwrap_or(Method::ClaireM);
    let grids = values
        .iter()
        .map(|&v| param.apply(&config.hp, v))
        .collect::<Result<Vec<_>>>()?;
    let prepared = prepare(config)?;
    let per_rep: Vec<Vec<MetricsReport>> = with_pool(config.workers, || {
        (0..config.repetitions)
            .into_par_iter()
            .map(|r| -> Result<Vec<MetricsReport>> {
                let mut rep = Repetition::build(config, &prepared, r)?;
                grids
                    .iter()
                    .map(|hp| {
                        let cfg = ExperimentConfig { hp: hp.clone(), ..config.clone() };
                        rep.run_method(method, &cfg)
                    })
                    .collect()
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let label = method_label(method, config);
    let points = values
        .iter()
        .enumerate()
        .map(|(i, &value)| {
            let reports: Vec<MetricsReport> = per_rep.iter().map(|r| r[i].clone()).collect();
            let wrapped: Vec<Vec<(String, MetricsReport)>> =
                reports.iter().map(|r| vec![(label.clone(), r.clone())]).collect();
            SweepPoint {
                value,
                rows: aggregate(&wrapped, &config.pairs),
                reports,
            }
        })
        .collect();
    Ok(SweepOutput {
        param,
        method: label,
        points,
    })
}

/// Line chart of several series over a log-scaled x axis, one panel per series.
pub fn sweep_svg(title: &str, series: &[(&str, Vec<(f64, f64)>)]) -> String {
    let (w, h, pad) = (360.0, 220.0, 40.0);
    let total_w = w * series.len().max(1) as f64;
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{total_w}\" height=\"{}\" font-family=\"sans-serif\" font-size=\"11\">\n",
        h + 30.0
    );
    out.push_str(&format!("<text x=\"8\" y=\"16\" font-size=\"13\">{title}</text>\n"));
    for (panel, (name, pts)) in series.iter().enumerate() {
        let x0 = panel as f64 * w;
        let tx = |x: f64| if x > 0.0 { x.log10() } else { x };
        let xs: Vec<f64> = pts.iter().map(|p| tx(p.0)).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let (xmin, xmax) = bounds(&xs);
        let (ymin, ymax) = bounds(&ys);
        let px = |x: f64| x0 + pad + (x - xmin) / (xmax - xmin) * (w - 2.0 * pad);
        let py = |y: f64| 30.0 + (h - pad) - (y - ymin) / (ymax - ymin) * (h - 2.0 * pad);
        out.push_str(&format!(
            "<rect x=\"{}\" y=\"30\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#999\"/>\n",
            x0 + pad / 2.0,
            w - pad,
            h - pad / 2.0
        ));
        out.push_str(&format!("<text x=\"{}\" y=\"44\">{name}</text>\n", x0 + pad));
        let path: Vec<String> = xs.iter().zip(&ys).map(|(&x, &y)| format!("{:.1},{:.1}", px(x), py(y))).collect();
        out.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\"/>\n",
            path.join(" ")
        ));
        for ((&x, &y), (raw, _)) in xs.iter().zip(&ys).zip(pts) {
            out.push_str(&format!(
                "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"#1f77b4\"><title>{raw}: {y:.4}</title></circle>\n",
                px(x),
                py(y)
            ));
            out.push_str(&format!("<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">{raw}</text>\n", px(x), h + 22.0));
        }
        out.push_str(&format!("<text x=\"{}\" y=\"{:.1}\">{ymax:.3}</text>\n", x0 + pad / 2.0 + 2.0, py(ymax) - 3.0));
        out.push_str(&format!("<text x=\"{}\" y=\"{:.1}\">{ymin:.3}</text>\n", x0 + pad / 2.0 + 2.0, py(ymin) + 12.0));
    }
    out.push_str("</svg>\n");
    out
}

fn bounds(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if (hi - lo).abs() < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for k in i..=j {
                r[idx[k]] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}
