//! Prediction-quality metrics and counterfactual divergence metrics.
//!
//! Divergences compare the distributions of a predictor's outputs on the
//! ground-truth counterfactual copies of a test set, one copy per sensitive
//! value. A counterfactually fair predictor yields identical distributions.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{mmd_rbf_value, seeded_rng, Matrix};

/// Largest pooled sample used for the median-heuristic bandwidth.
const MEDIAN_HEURISTIC_CAP: usize = 1000;

fn check_pair(pred: &[f64], truth: &[f64], what: &'static str) -> Result<()> {
    if pred.is_empty() {
        return Err(Error::Empty(what));
    }
    if pred.len() != truth.len() {
        return Err(Error::shape(what, format!("{} vs {}", pred.len(), truth.len())));
    }
    Ok(())
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth, "rmse")?;
    let mse = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>()
        / pred.len() as f64;
    Ok(mse.sqrt())
}

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth, "mae")?;
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

/// Accuracy of probabilities thresholded at 0.5 against 0/1 labels.
pub fn accuracy(prob: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(prob, truth, "accuracy")?;
    let hits = prob
        .iter()
        .zip(truth)
        .filter(|(p, t)| (**p >= 0.5) == (**t >= 0.5))
        .count();
    Ok(hits as f64 / prob.len() as f64)
}

/// Wasserstein-1 distance between two 1-D empirical distributions.
///
/// With unequal lengths the longer sample is subsampled (seed 0) to the
/// shorter length.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> Result<f64> {
    wasserstein1_seeded(a, b, 0)
}

pub fn wasserstein1_seeded(a: &[f64], b: &[f64], seed: u64) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("wasserstein1"));
    }
    let (mut a, mut b) = equalize(a, b, seed);
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
}

fn equalize(a: &[f64], b: &[f64], seed: u64) -> (Vec<f64>, Vec<f64>) {
    use std::cmp::Ordering;
    let sub = |v: &[f64], n: usize| -> Vec<f64> {
        let mut rng = seeded_rng(seed);
        sample(&mut rng, v.len(), n).into_iter().map(|i| v[i]).collect()
    };
    match a.len().cmp(&b.len()) {
        Ordering::Equal => (a.to_vec(), b.to_vec()),
        Ordering::Greater => (sub(a, b.len()), b.to_vec()),
        Ordering::Less => (a.to_vec(), sub(b, a.len())),
    }
}

/// Kernel bandwidth choice for [`mmd_rbf`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    Fixed(f64),
    MedianHeuristic,
}

/// Median pairwise Euclidean distance over the pooled rows of `a` and `b`.
/// Falls back to 1 when the median is zero.
pub fn median_heuristic(a: &Matrix, b: &Matrix) -> f64 {
    let pooled = a.vconcat(b).expect("same dimension");
    let n = pooled.rows();
    let stride = n.div_ceil(MEDIAN_HEURISTIC_CAP).max(1);
    let idx: Vec<usize> = (0..n).step_by(stride).collect();
    let mut dists = Vec::with_capacity(idx.len() * idx.len() / 2);
    for (k, &i) in idx.iter().enumerate() {
        for &j in &idx[k + 1..] {
            let d: f64 = pooled
                .row(i)
                .iter()
                .zip(pooled.row(j))
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            dists.push(d.sqrt());
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    let mid = dists.len() / 2;
    let (_, m, _) = dists.select_nth_unstable_by(mid, f64::total_cmp);
    if *m > 0.0 {
        *m
    } else {
        1.0
    }
}

/// Biased squared-MMD estimate with a Gaussian RBF kernel. Rows are samples.
pub fn mmd_rbf_matrix(a: &Matrix, b: &Matrix, bandwidth: Bandwidth) -> Result<f64> {
    if a.rows() == 0 || b.rows() == 0 {
        return Err(Error::Empty("mmd_rbf"));
    }
    if a.cols() != b.cols() {
        return Err(Error::shape("mmd_rbf", "sample dimensions differ"));
    }
    let h = match bandwidth {
        Bandwidth::Fixed(h) if h > 0.0 => h,
        Bandwidth::Fixed(h) => return Err(Error::Config(format!("bandwidth {h} must be positive"))),
        Bandwidth::MedianHeuristic => median_heuristic(a, b),
    };
    Ok(mmd_rbf_value(a, b, h))
}

/// [`mmd_rbf_matrix`] for scalar samples.
pub fn mmd_rbf(a: &[f64], b: &[f64], bandwidth: Bandwidth) -> Result<f64> {
    mmd_rbf_matrix(&Matrix::column(a), &Matrix::column(b), bandwidth)
}

/// Predictions on each counterfactual copy of a test set, indexed by the
/// sensitive value that was imposed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualSet {
    pub predictions: Vec<Vec<f64>>,
}

impl CounterfactualSet {
    pub fn new(predictions: Vec<Vec<f64>>) -> Result<Self> {
        if let Some(first) = predictions.first() {
            if predictions.iter().any(|p| p.len() != first.len()) {
                return Err(Error::shape("CounterfactualSet", "prediction vectors differ in length"));
            }
        }
        Ok(Self { predictions })
    }

    pub fn num_sensitive(&self) -> usize {
        self.predictions.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Divergence {
    Mmd,
    Wass,
}

/// Divergence between the predictions under `S <- s` and `S <- s_prime`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairDivergence {
    pub s: usize,
    pub s_prime: usize,
    pub mmd: f64,
    pub wass: f64,
}

/// Per-method evaluation summary.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rmse: Option<f64>,
    pub mae: Option<f64>,
    pub accuracy: Option<f64>,
    pub mmd_avg: f64,
    pub wass_avg: f64,
    pub pairs: Vec<PairDivergence>,
}

impl MetricsReport {
    pub fn pair(&self, s: usize, s_prime: usize) -> Option<&PairDivergence> {
        let (lo, hi) = (s.min(s_prime), s.max(s_prime));
        self.pairs.iter().find(|p| p.s == lo && p.s_prime == hi)
    }
}

/// Divergence of every unordered pair of counterfactual prediction vectors
/// and their average over the `|S|(|S|-1)/2` pairs.
pub fn counterfactual_divergence(
    cf: &CounterfactualSet,
    metric: Divergence,
) -> Result<(f64, Vec<((usize, usize), f64)>)> {
    let k = cf.num_sensitive();
    if k < 2 {
        return Err(Error::Config(format!(
            "counterfactual divergence needs at least 2 sensitive values, got {k}"
        )));
    }
    let mut pairs = Vec::with_capacity(k * (k - 1) / 2);
    for s in 0..k {
        for t in (s + 1)..k {
            let (a, b) = (&cf.predictions[s], &cf.predictions[t]);
            let v = match metric {
                Divergence::Mmd => mmd_rbf(a, b, Bandwidth::MedianHeuristic)?,
                Divergence::Wass => wasserstein1(a, b)?,
            };
            pairs.push(((s, t), v));
        }
    }
    let avg = pairs.iter().map(|(_, v)| v).sum::<f64>() / pairs.len() as f64;
    Ok((avg, pairs))
}

/// Both divergences for one counterfactual prediction set.
pub fn divergence_report(cf: &CounterfactualSet) -> Result<MetricsReport> {
    let (mmd_avg, mmd_pairs) = counterfactual_divergence(cf, Divergence::Mmd)?;
    let (wass_avg, wass_pairs) = counterfactual_divergence(cf, Divergence::Wass)?;
    let pairs = mmd_pairs
        .into_iter()
        .zip(wass_pairs)
        .map(|(((s, t), mmd), (_, wass))| PairDivergence {
            s,
            s_prime: t,
            mmd,
            wass,
        })
        .collect();
    Ok(MetricsReport {
        mmd_avg,
        wass_avg,
        pairs,
        ..Default::default()
    })
}
