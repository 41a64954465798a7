//! Linear-Gaussian structural causal models.
//!
//! An [`Scm`] pairs a [`CausalGraph`] with one [`Mechanism`] per node. It is
//! the ground truth for synthetic data and for evaluation counterfactuals,
//! and the causal model handed to the CFP baselines.
//!
//! Counterfactuals follow abduction, action, prediction: the posterior of the
//! latent nodes given an instance is obtained by exact Gaussian conditioning,
//! the exogenous noise of every observed node is recovered as its residual,
//! the sensitive node is set to the new value and all nodes are recomputed in
//! topological order.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use crate::data::{Dataset, Task};
use crate::error::{Error, Result};
use crate::numerics::linalg::{least_squares, psd_pinv, psd_sqrt};
use crate::numerics::{seeded_rng, Matrix};

/// Default number of posterior draws averaged per counterfactual.
pub const DEFAULT_POSTERIOR_SAMPLES: usize = 500;

/// Fitted noise variances are floored here.
const MIN_NOISE_VAR: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeRole {
    Observed,
    Latent,
    Sensitive,
    Target,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub name: String,
    pub role: NodeRole,
}

impl NodeSpec {
    pub fn new(name: impl Into<String>, role: NodeRole) -> Self {
        Self {
            name: name.into(),
            role,
        }
    }
}

/// Directed graph over named, role-tagged variables.
#[derive(Clone, Debug, PartialEq)]
pub struct CausalGraph {
    nodes: Vec<NodeSpec>,
    /// Sorted parent indices per node.
    parents: Vec<Vec<usize>>,
}

impl CausalGraph {
    /// Builds a graph from named edges. Structural checks are left to [`validate`](Self::validate).
    pub fn new<A: AsRef<str>, B: AsRef<str>>(nodes: Vec<NodeSpec>, edges: &[(A, B)]) -> Result<Self> {
        for (i, n) in nodes.iter().enumerate() {
            if nodes[..i].iter().any(|m| m.name == n.name) {
                return Err(Error::InvalidScm(format!("duplicate node `{}`", n.name)));
            }
        }
        let mut parents = vec![Vec::new(); nodes.len()];
        for (from, to) in edges {
            let idx = |name: &str| {
                nodes
                    .iter()
                    .position(|n| n.name == name)
                    .ok_or_else(|| Error::InvalidScm(format!("edge references unknown node `{name}`")))
            };
            let (f, t) = (idx(from.as_ref())?, idx(to.as_ref())?);
            if !parents[t].contains(&f) {
                parents[t].push(f);
            }
        }
        parents.iter_mut().for_each(|p| p.sort_unstable());
        Ok(Self { nodes, parents })
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    pub fn name(&self, node: usize) -> &str {
        &self.nodes[node].name
    }

    pub fn role(&self, node: usize) -> NodeRole {
        self.nodes[node].role
    }

    pub fn parents(&self, node: usize) -> &[usize] {
        &self.parents[node]
    }

    pub fn children(&self, node: usize) -> Vec<usize> {
        (0..self.len()).filter(|&c| self.parents[c].contains(&node)).collect()
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.parents[to].contains(&from)
    }

    /// Edges as `(from, to)` index pairs, ordered by target then source.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.parents
            .iter()
            .enumerate()
            .flat_map(|(t, ps)| ps.iter().map(move |&f| (f, t)))
            .collect()
    }

    pub fn edge_names(&self) -> Vec<(String, String)> {
        self.edges()
            .into_iter()
            .map(|(f, t)| (self.nodes[f].name.clone(), self.nodes[t].name.clone()))
            .collect()
    }

    pub fn nodes_with_role(&self, role: NodeRole) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.nodes[i].role == role).collect()
    }

    pub fn sensitive(&self) -> usize {
        self.nodes_with_role(NodeRole::Sensitive)[0]
    }

    pub fn target(&self) -> usize {
        self.nodes_with_role(NodeRole::Target)[0]
    }

    /// Observed non-sensitive, non-target nodes, in node order.
    pub fn feature_nodes(&self) -> Vec<usize> {
        self.nodes_with_role(NodeRole::Observed)
    }

    pub fn latent_nodes(&self) -> Vec<usize> {
        self.nodes_with_role(NodeRole::Latent)
    }

    /// Kahn ordering; fails on cycles.
    pub fn topological_order(&self) -> Result<Vec<usize>> {
        let n = self.len();
        let mut indegree: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut queue: VecDeque<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for c in self.children(v) {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
        if order.len() != n {
            let stuck: Vec<&str> = (0..n)
                .filter(|i| !order.contains(i))
                .map(|i| self.name(i))
                .collect();
            return Err(Error::InvalidScm(format!("cycle through {}", stuck.join(", "))));
        }
        Ok(order)
    }

    /// Acyclic, exactly one parentless sensitive node, exactly one target.
    pub fn validate(&self) -> Result<()> {
        self.topological_order()?;
        let sensitive = self.nodes_with_role(NodeRole::Sensitive);
        if sensitive.len() != 1 {
            return Err(Error::InvalidScm(format!(
                "expected exactly one sensitive node, found {}",
                sensitive.len()
            )));
        }
        if !self.parents[sensitive[0]].is_empty() {
            return Err(Error::InvalidScm(format!(
                "sensitive node `{}` has parents",
                self.name(sensitive[0])
            )));
        }
        let targets = self.nodes_with_role(NodeRole::Target).len();
        if targets != 1 {
            return Err(Error::InvalidScm(format!(
                "expected exactly one target node, found {targets}"
            )));
        }
        Ok(())
    }

    /// `out[i]` is true when `i` is a strict descendant of `node`.
    pub fn descendants(&self, node: usize) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        let mut stack = self.children(node);
        while let Some(v) = stack.pop() {
            if !seen[v] {
                seen[v] = true;
                stack.extend(self.children(v));
            }
        }
        seen
    }

    fn with_edges(&self, edges: Vec<(usize, usize)>) -> CausalGraph {
        let mut parents = vec![Vec::new(); self.len()];
        for (f, t) in edges {
            if !parents[t].contains(&f) {
                parents[t].push(f);
            }
        }
        parents.iter_mut().for_each(|p| p.sort_unstable());
        CausalGraph {
            nodes: self.nodes.clone(),
            parents,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ScmDocument = serde_json::from_str(text)?;
        doc.graph()
    }
}

/// Structural equation of one node.
///
/// For the linear kinds the node value is
/// `intercept + sensitive term + Σ weight·parent + noise`. With
/// `LinearGaussian` a sensitive parent enters through its numeric value like
/// any other parent. With `LinearGaussianByS` the sensitive term is
/// `sensitive_weights[s]·s` (empty when the sensitive node is not a parent)
/// and the noise scale is indexed by the sensitive value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mechanism {
    CategoricalRoot {
        probabilities: Vec<f64>,
    },
    LinearGaussian {
        intercept: f64,
        weights: Vec<f64>,
        noise_std: f64,
    },
    LinearGaussianByS {
        intercept: f64,
        weights: Vec<f64>,
        #[serde(default)]
        sensitive_weights: Vec<f64>,
        noise_std: Vec<f64>,
    },
}

impl Mechanism {
    /// Standard normal latent root.
    pub fn standard_normal() -> Self {
        Mechanism::LinearGaussian {
            intercept: 0.0,
            weights: vec![],
            noise_std: 1.0,
        }
    }

    fn is_categorical(&self) -> bool {
        matches!(self, Mechanism::CategoricalRoot { .. })
    }
}

/// Linearized view of a continuous node for a fixed sensitive value.
#[derive(Clone, Debug)]
struct LinearNode {
    /// Non-sensitive parents and their weights.
    parents: Vec<usize>,
    weights: Vec<f64>,
}

/// Graph plus structural equations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScmDocument", into = "ScmDocument")]
pub struct Scm {
    graph: CausalGraph,
    mechanisms: Vec<Mechanism>,
    #[serde(skip)]
    order: Vec<usize>,
    #[serde(skip)]
    num_sensitive: usize,
}

/// Latent values and realized noise behind a sample.
#[derive(Clone, Debug)]
pub struct SampleRecord {
    /// Every node value, `n x nodes`.
    pub values: Matrix,
    /// Realized additive noise per node (zero for categorical roots).
    pub noise: Matrix,
}

impl Scm {
    pub fn new(graph: CausalGraph, mechanisms: Vec<Mechanism>) -> Result<Self> {
        if mechanisms.len() != graph.len() {
            return Err(Error::InvalidScm(format!(
                "{} mechanisms for {} nodes",
                mechanisms.len(),
                graph.len()
            )));
        }
        let mut scm = Self {
            graph,
            mechanisms,
            order: vec![],
            num_sensitive: 0,
        };
        scm.validate()?;
        Ok(scm)
    }

    /// Checks graph structure and that every mechanism agrees with its parents.
    pub fn validate(&mut self) -> Result<()> {
        self.graph.validate()?;
        self.order = self.graph.topological_order()?;
        let s_node = self.graph.sensitive();
        let k = match &self.mechanisms[s_node] {
            Mechanism::CategoricalRoot { probabilities } => probabilities.len(),
            _ => {
                return Err(Error::InvalidScm(
                    "sensitive node must have a categorical root mechanism".into(),
                ))
            }
        };
        if k < 2 {
            return Err(Error::InvalidScm("sensitive node needs at least two values".into()));
        }
        self.num_sensitive = k;
        for i in 0..self.graph.len() {
            let name = self.graph.name(i).to_string();
            let parents = self.graph.parents(i);
            let bad = |msg: String| Err(Error::InvalidScm(format!("node `{name}`: {msg}")));
            match &self.mechanisms[i] {
                Mechanism::CategoricalRoot { probabilities } => {
                    if !parents.is_empty() {
                        return bad("categorical root has parents".into());
                    }
                    if probabilities.iter().any(|&p| p < 0.0 || !p.is_finite())
                        || (probabilities.iter().sum::<f64>() - 1.0).abs() > 1e-9
                    {
                        return bad("probabilities must be non-negative and sum to 1".into());
                    }
                    if self.graph.role(i) == NodeRole::Latent {
                        return bad("latent categorical nodes are not supported".into());
                    }
                }
                Mechanism::LinearGaussian {
                    weights, noise_std, ..
                } => {
                    if weights.len() != parents.len() {
                        return bad(format!("{} weights for {} parents", weights.len(), parents.len()));
                    }
                    if !(*noise_std >= 0.0) {
                        return bad("noise std must be non-negative".into());
                    }
                }
                Mechanism::LinearGaussianByS {
                    weights,
                    sensitive_weights,
                    noise_std,
                    ..
                } => {
                    let has_s = parents.contains(&s_node);
                    let expected = parents.len() - usize::from(has_s);
                    if weights.len() != expected {
                        return bad(format!("{} weights for {expected} non-sensitive parents", weights.len()));
                    }
                    if has_s && sensitive_weights.len() != k {
                        return bad(format!("needs {k} sensitive weights"));
                    }
                    if !has_s && sensitive_weights.iter().any(|&w| w != 0.0) {
                        return bad("sensitive weights without a sensitive parent".into());
                    }
                    if noise_std.len() != k || noise_std.iter().any(|v| !(*v >= 0.0)) {
                        return bad(format!("needs {k} non-negative noise stds"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn graph(&self) -> &CausalGraph {
        &self.graph
    }

    pub fn mechanisms(&self) -> &[Mechanism] {
        &self.mechanisms
    }

    pub fn mechanism(&self, node: usize) -> &Mechanism {
        &self.mechanisms[node]
    }

    pub fn num_sensitive(&self) -> usize {
        self.num_sensitive
    }

    pub fn topological_order(&self) -> &[usize] {
        &self.order
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Additive part that does not depend on non-sensitive parents.
    fn offset(&self, node: usize, s: usize) -> f64 {
        let s_node = self.graph.sensitive();
        match &self.mechanisms[node] {
            Mechanism::CategoricalRoot { .. } => 0.0,
            Mechanism::LinearGaussian {
                intercept, weights, ..
            } => {
                let mut v = *intercept;
                for (p, w) in self.graph.parents(node).iter().zip(weights) {
                    if *p == s_node {
                        v += w * s as f64;
                    }
                }
                v
            }
            Mechanism::LinearGaussianByS {
                intercept,
                sensitive_weights,
                ..
            } => intercept + sensitive_weights.get(s).map_or(0.0, |w| w * s as f64),
        }
    }

    fn noise_std(&self, node: usize, s: usize) -> f64 {
        match &self.mechanisms[node] {
            Mechanism::CategoricalRoot { .. } => 0.0,
            Mechanism::LinearGaussian { noise_std, .. } => *noise_std,
            Mechanism::LinearGaussianByS { noise_std, .. } => noise_std[s],
        }
    }

    fn linear(&self, node: usize) -> LinearNode {
        let s_node = self.graph.sensitive();
        let parents: Vec<usize> = self
            .graph
            .parents(node)
            .iter()
            .copied()
            .filter(|&p| p != s_node)
            .collect();
        let weights = match &self.mechanisms[node] {
            Mechanism::CategoricalRoot { .. } => vec![],
            Mechanism::LinearGaussian { weights, .. } => self
                .graph
                .parents(node)
                .iter()
                .zip(weights)
                .filter(|(p, _)| **p != s_node)
                .map(|(_, w)| *w)
                .collect(),
            Mechanism::LinearGaussianByS { weights, .. } => weights.clone(),
        };
        LinearNode { parents, weights }
    }

    /// Structural value of `node` given all parent values in `v`, without noise.
    fn structural_mean(&self, node: usize, s: usize, v: &[f64]) -> f64 {
        let lin = self.linear(node);
        self.offset(node, s)
            + lin
                .parents
                .iter()
                .zip(&lin.weights)
                .map(|(&p, w)| w * v[p])
                .sum::<f64>()
    }

    /// Ancestral sampling of `n` instances.
    pub fn sample(&self, n: usize, seed: u64) -> Result<(Dataset, SampleRecord)> {
        self.sample_inner(n, seed, None)
    }

    /// Ancestral sampling under the intervention `S <- s`.
    pub fn sample_do(&self, n: usize, seed: u64, s: usize) -> Result<(Dataset, SampleRecord)> {
        if s >= self.num_sensitive {
            return Err(Error::Config(format!("sensitive value {s} out of range")));
        }
        self.sample_inner(n, seed, Some(s))
    }

    fn sample_inner(&self, n: usize, seed: u64, fixed_s: Option<usize>) -> Result<(Dataset, SampleRecord)> {
        let mut rng = seeded_rng(seed);
        let k = self.graph.len();
        let s_node = self.graph.sensitive();
        let mut values = Matrix::zeros(n, k);
        let mut noise = Matrix::zeros(n, k);
        for r in 0..n {
            let mut v = vec![0.0; k];
            let mut s = 0usize;
            for &i in &self.order {
                match &self.mechanisms[i] {
                    Mechanism::CategoricalRoot { probabilities } => {
                        let u: f64 = rng.random();
                        let mut acc = 0.0;
                        let mut pick = probabilities.len() - 1;
                        for (j, p) in probabilities.iter().enumerate() {
                            acc += p;
                            if u < acc {
                                pick = j;
                                break;
                            }
                        }
                        if i == s_node {
                            if let Some(fixed) = fixed_s {
                                pick = fixed;
                            }
                            s = pick;
                        }
                        v[i] = pick as f64;
                    }
                    _ => {
                        let z: f64 = rng.sample(StandardNormal);
                        let e = self.noise_std(i, s) * z;
                        v[i] = self.structural_mean(i, s, &v) + e;
                        noise.set(r, i, e);
                    }
                }
            }
            values.row_mut(r).copy_from_slice(&v);
        }
        let dataset = self.dataset_from_values(&values)?;
        Ok((dataset, SampleRecord { values, noise }))
    }

    /// Projects full node values onto a [`Dataset`] of observed features.
    pub fn dataset_from_values(&self, values: &Matrix) -> Result<Dataset> {
        let features = self.graph.feature_nodes();
        let names = features.iter().map(|&i| self.graph.name(i).to_string()).collect();
        let x = values.select_cols(&features);
        let s_node = self.graph.sensitive();
        let t_node = self.graph.target();
        let s = (0..values.rows()).map(|r| values.get(r, s_node) as usize).collect();
        let y = values.col(t_node);
        Dataset::new(names, x, s, y, Task::Regression, self.num_sensitive)
    }

    /// Column of `data` holding each feature node of the graph.
    pub fn feature_columns(&self, data: &Dataset) -> Result<Vec<usize>> {
        self.graph
            .feature_nodes()
            .iter()
            .map(|&i| {
                data.feature_index(self.graph.name(i)).ok_or_else(|| {
                    Error::Data(format!("dataset lacks column for node `{}`", self.graph.name(i)))
                })
            })
            .collect()
    }

    /// Full node vector for one dataset row; latent slots are zero.
    fn node_values(&self, data: &Dataset, cols: &[usize], row: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.graph.len()];
        for (&node, &c) in self.graph.feature_nodes().iter().zip(cols) {
            v[node] = data.x.get(row, c);
        }
        v[self.graph.sensitive()] = data.s[row] as f64;
        v[self.graph.target()] = data.y[row];
        v
    }

    /// Gaussian posterior machinery for latent nodes given `evidence` nodes
    /// under sensitive value `s`.
    pub fn abductor(&self, s: usize, evidence: &[usize]) -> Result<Abductor> {
        if s >= self.num_sensitive {
            return Err(Error::Config(format!("sensitive value {s} out of range")));
        }
        let k = self.graph.len();
        let cont: Vec<usize> = (0..k).filter(|&i| !self.mechanisms[i].is_categorical()).collect();
        let mut pos = vec![None; k];
        for (j, &i) in cont.iter().enumerate() {
            pos[i] = Some(j);
        }
        for &e in evidence {
            if pos[e].is_none() {
                return Err(Error::Config(format!(
                    "evidence node `{}` is categorical",
                    self.graph.name(e)
                )));
            }
        }
        let latent = self.graph.latent_nodes();
        let m = cont.len();
        // v = B v + c + e  =>  v = (I - B)^{-1} (c + e)
        let mut i_minus_b = DMatrix::<f64>::identity(m, m);
        for (j, &i) in cont.iter().enumerate() {
            let lin = self.linear(i);
            for (&p, &w) in lin.parents.iter().zip(&lin.weights) {
                if let Some(pj) = pos[p] {
                    i_minus_b[(j, pj)] -= w;
                }
            }
        }
        let a = i_minus_b
            .try_inverse()
            .ok_or_else(|| Error::InvalidScm("structural system is singular".into()))?;
        let d = DMatrix::from_diagonal(&DVector::from_iterator(
            m,
            cont.iter().map(|&i| self.noise_std(i, s).powi(2)),
        ));
        let cov = &a * d * a.transpose();
        let li: Vec<usize> = latent.iter().map(|&l| pos[l].expect("latent nodes are continuous")).collect();
        let ei: Vec<usize> = evidence.iter().map(|&e| pos[e].unwrap()).collect();
        let sub = |rows: &[usize], cols: &[usize]| {
            DMatrix::from_fn(rows.len(), cols.len(), |r, c| cov[(rows[r], cols[c])])
        };
        let s_ll = sub(&li, &li);
        let s_le = sub(&li, &ei);
        let s_ee = sub(&ei, &ei);
        let gain = &s_le * psd_pinv(&s_ee);
        let post_cov = &s_ll - &gain * s_le.transpose();
        let post_cov = (&post_cov + post_cov.transpose()) * 0.5;
        let factor = psd_sqrt(&post_cov);
        Ok(Abductor {
            s,
            cont,
            latent,
            evidence: evidence.to_vec(),
            latent_pos: li,
            evidence_pos: ei,
            a,
            gain,
            factor,
        })
    }

    /// Posterior mean of the latent nodes for every row of `data`, given the
    /// feature columns only. Returns `n x latents`.
    pub fn infer_latents(&self, data: &Dataset) -> Result<Matrix> {
        let cols = self.feature_columns(data)?;
        let evidence = self.graph.feature_nodes();
        let abductors: Vec<Abductor> = (0..self.num_sensitive)
            .map(|s| self.abductor(s, &evidence))
            .collect::<Result<_>>()?;
        let nl = self.graph.latent_nodes().len();
        let mut out = Matrix::zeros(data.len(), nl);
        for r in 0..data.len() {
            let v = self.node_values(data, &cols, r);
            let mean = abductors[data.s[r]].posterior_mean(self, &v);
            out.row_mut(r).copy_from_slice(&mean);
        }
        Ok(out)
    }

    /// Monte-Carlo estimate of the latent posterior mean from `n_samples`
    /// exact posterior draws, conditioning on features only.
    pub fn infer_latents_sampled(&self, data: &Dataset, n_samples: usize, seed: u64) -> Result<Matrix> {
        if n_samples == 0 {
            return Err(Error::Config("at least one posterior sample required".into()));
        }
        let cols = self.feature_columns(data)?;
        let evidence = self.graph.feature_nodes();
        let abductors: Vec<Abductor> = (0..self.num_sensitive)
            .map(|s| self.abductor(s, &evidence))
            .collect::<Result<_>>()?;
        let nl = self.graph.latent_nodes().len();
        let draws = standard_normal_draws(n_samples, nl, seed);
        let mut out = Matrix::zeros(data.len(), nl);
        for r in 0..data.len() {
            let v = self.node_values(data, &cols, r);
            let ab = &abductors[data.s[r]];
            let mean = ab.posterior_mean(self, &v);
            let row = out.row_mut(r);
            for d in 0..n_samples {
                for (o, u) in row.iter_mut().zip(ab.draw(&mean, draws.row(d))) {
                    *o += u;
                }
            }
            row.iter_mut().for_each(|o| *o /= n_samples as f64);
        }
        Ok(out)
    }

    /// Counterfactual of one instance under `S <- s_new`, averaged over
    /// `n_samples` posterior draws. `x` lists feature-node values in graph
    /// order. Returns `(x_cf, y_cf)`.
    pub fn counterfactual(
        &self,
        x: &[f64],
        s: usize,
        y: f64,
        s_new: usize,
        n_samples: usize,
        seed: u64,
    ) -> Result<(Vec<f64>, f64)> {
        let names = self
            .graph
            .feature_nodes()
            .iter()
            .map(|&i| self.graph.name(i).to_string())
            .collect();
        let data = Dataset::new(
            names,
            Matrix::row_vector(x),
            vec![s],
            vec![y],
            Task::Regression,
            self.num_sensitive,
        )?;
        let cf = self.counterfactual_dataset(&data, s_new, n_samples, seed)?;
        Ok((cf.x.row(0).to_vec(), cf.y[0]))
    }

    /// Counterfactual copy of every row of `data` under `S <- s_new`,
    /// conditioning on features and target. Feature columns not in the graph
    /// are copied unchanged.
    pub fn counterfactual_dataset(
        &self,
        data: &Dataset,
        s_new: usize,
        n_samples: usize,
        seed: u64,
    ) -> Result<Dataset> {
        if s_new >= self.num_sensitive {
            return Err(Error::Config(format!(
                "intervention value {s_new} outside 0..{}",
                self.num_sensitive
            )));
        }
        if n_samples == 0 {
            return Err(Error::Config("at least one posterior sample required".into()));
        }
        let cols = self.feature_columns(data)?;
        let mut evidence = self.graph.feature_nodes();
        evidence.push(self.graph.target());
        let abductors: Vec<Abductor> = (0..self.num_sensitive)
            .map(|s| self.abductor(s, &evidence))
            .collect::<Result<_>>()?;
        let latent = self.graph.latent_nodes();
        let draws = standard_normal_draws(n_samples, latent.len(), seed);
        let s_node = self.graph.sensitive();
        let t_node = self.graph.target();

        let mut out = data.clone();
        out.s = vec![s_new; data.len()];
        for r in 0..data.len() {
            let v = self.node_values(data, &cols, r);
            let s = data.s[r];
            let ab = &abductors[s];
            let mean = ab.posterior_mean(self, &v);
            let mut acc = vec![0.0; v.len()];
            for d in 0..n_samples {
                let u = ab.draw(&mean, draws.row(d));
                let mut fact = v.clone();
                for (&l, &val) in latent.iter().zip(&u) {
                    fact[l] = val;
                }
                let cf = self.propagate(&fact, s, s_new, s_node);
                for (a, c) in acc.iter_mut().zip(&cf) {
                    *a += c;
                }
            }
            let inv = 1.0 / n_samples as f64;
            for (&node, &c) in self.graph.feature_nodes().iter().zip(&cols) {
                out.x.set(r, c, acc[node] * inv);
            }
            out.y[r] = acc[t_node] * inv;
        }
        Ok(out)
    }

    /// Abduct residual noise from the factual `v` (latents filled in), set the
    /// sensitive node and recompute descendants in topological order.
    fn propagate(&self, v: &[f64], s: usize, s_new: usize, s_node: usize) -> Vec<f64> {
        let mut cf = v.to_vec();
        cf[s_node] = s_new as f64;
        for &i in &self.order {
            if self.mechanisms[i].is_categorical() || self.graph.role(i) == NodeRole::Latent {
                continue;
            }
            let residual = v[i] - self.structural_mean(i, s, v);
            cf[i] = self.structural_mean(i, s_new, &cf) + residual;
        }
        cf
    }
}

/// Shared standard-normal draws (`n x dim`); every instance reuses the same
/// draws, so identical rows give identical Monte-Carlo averages.
fn standard_normal_draws(n: usize, dim: usize, seed: u64) -> Matrix {
    let mut rng = seeded_rng(seed);
    let mut m = Matrix::zeros(n, dim);
    m.data_mut().iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
    m
}

/// Exact Gaussian posterior of the latent nodes for one sensitive value and
/// evidence set.
pub struct Abductor {
    s: usize,
    cont: Vec<usize>,
    latent: Vec<usize>,
    evidence: Vec<usize>,
    latent_pos: Vec<usize>,
    evidence_pos: Vec<usize>,
    a: DMatrix<f64>,
    gain: DMatrix<f64>,
    factor: DMatrix<f64>,
}

impl Abductor {
    /// Posterior mean of the latents; `v` holds the evidence and any
    /// categorical node values.
    pub fn posterior_mean(&self, scm: &Scm, v: &[f64]) -> Vec<f64> {
        let c = DVector::from_iterator(
            self.cont.len(),
            self.cont.iter().map(|&i| {
                let mut off = scm.offset(i, self.s);
                let lin = scm.linear(i);
                for (&p, &w) in lin.parents.iter().zip(&lin.weights) {
                    if scm.mechanisms[p].is_categorical() {
                        off += w * v[p];
                    }
                }
                off
            }),
        );
        let mu = &self.a * c;
        let resid = DVector::from_iterator(
            self.evidence.len(),
            self.evidence
                .iter()
                .zip(&self.evidence_pos)
                .map(|(&e, &p)| v[e] - mu[p]),
        );
        let shift = &self.gain * resid;
        self.latent_pos
            .iter()
            .enumerate()
            .map(|(j, &p)| mu[p] + shift[j])
            .collect()
    }

    /// `mean + L z` for one standard-normal draw `z`.
    pub fn draw(&self, mean: &[f64], z: &[f64]) -> Vec<f64> {
        (0..self.latent.len())
            .map(|j| mean[j] + (0..z.len()).map(|k| self.factor[(j, k)] * z[k]).sum::<f64>())
            .collect()
    }

    pub fn posterior_cov_sqrt(&self) -> &DMatrix<f64> {
        &self.factor
    }
}

/// Fits every mechanism of `graph` from `data`.
///
/// Observed and target nodes are regressed by OLS on their observed parents;
/// a sensitive parent enters as per-value offsets. Latent parents get a fixed
/// unit coefficient and a standard normal marginal, so their unit variance is
/// subtracted from the residual variance. Noise scales are fitted per
/// sensitive subgroup. The sensitive root is fitted by empirical frequencies.
pub fn fit_linear_scm(graph: &CausalGraph, data: &Dataset) -> Result<Scm> {
    graph.validate()?;
    let mut mechanisms = Vec::with_capacity(graph.len());
    for node in 0..graph.len() {
        mechanisms.push(fit_node(graph, data, node)?);
    }
    Scm::new(graph.clone(), mechanisms)
}

fn column_for(graph: &CausalGraph, data: &Dataset, node: usize) -> Result<Vec<f64>> {
    match graph.role(node) {
        NodeRole::Target => Ok(data.y.clone()),
        NodeRole::Observed => {
            let c = data.feature_index(graph.name(node)).ok_or_else(|| {
                Error::Data(format!("dataset lacks column for node `{}`", graph.name(node)))
            })?;
            Ok(data.x.col(c))
        }
        NodeRole::Sensitive => Ok(data.s.iter().map(|&s| s as f64).collect()),
        NodeRole::Latent => Err(Error::Fit("latent values are not observed".into())),
    }
}

fn fit_node(graph: &CausalGraph, data: &Dataset, node: usize) -> Result<Mechanism> {
    let k = data.num_sensitive;
    let n = data.len();
    if n == 0 {
        return Err(Error::Empty("fit_linear_scm"));
    }
    let s_node = graph.sensitive();
    match graph.role(node) {
        NodeRole::Sensitive => {
            let mut counts = vec![0.0; k];
            data.s.iter().for_each(|&s| counts[s] += 1.0);
            Ok(Mechanism::CategoricalRoot {
                probabilities: counts.iter().map(|c| c / n as f64).collect(),
            })
        }
        NodeRole::Latent => {
            if !graph.parents(node).is_empty() {
                return Err(Error::Fit(format!(
                    "latent node `{}` with parents cannot be fitted",
                    graph.name(node)
                )));
            }
            Ok(Mechanism::standard_normal())
        }
        NodeRole::Observed | NodeRole::Target => {
            let parents = graph.parents(node);
            let has_s = parents.contains(&s_node);
            let observed: Vec<usize> = parents
                .iter()
                .copied()
                .filter(|&p| p != s_node && graph.role(p) != NodeRole::Latent)
                .collect();
            let latent_count = parents.iter().filter(|&&p| graph.role(p) == NodeRole::Latent).count();
            let target = column_for(graph, data, node)?;
            let parent_cols: Vec<Vec<f64>> = observed
                .iter()
                .map(|&p| column_for(graph, data, p))
                .collect::<Result<_>>()?;
            let dummies = if has_s { k - 1 } else { 0 };
            let width = 1 + observed.len() + dummies;
            let mut design = Matrix::zeros(n, width);
            for r in 0..n {
                design.set(r, 0, 1.0);
                for (j, col) in parent_cols.iter().enumerate() {
                    design.set(r, 1 + j, col[r]);
                }
                if has_s && data.s[r] > 0 {
                    design.set(r, observed.len() + data.s[r], 1.0);
                }
            }
            let beta = least_squares(&design, &target).map_err(|e| {
                e.context(format!("fitting node `{}`", graph.name(node)))
            })?;
            let fitted = design.matmul(&Matrix::column(&beta))?;
            let resid: Vec<f64> = target.iter().zip(fitted.data()).map(|(t, f)| t - f).collect();

            let pooled = resid.iter().map(|r| r * r).sum::<f64>() / n as f64;
            let mut noise_std = Vec::with_capacity(k);
            for s in 0..k {
                let group: Vec<f64> = (0..n).filter(|&r| data.s[r] == s).map(|r| resid[r]).collect();
                let var = if group.len() >= 2 {
                    group.iter().map(|r| r * r).sum::<f64>() / group.len() as f64
                } else {
                    pooled
                };
                noise_std.push((var - latent_count as f64).max(MIN_NOISE_VAR).sqrt());
            }

            // reassemble weights in graph parent order, latent parents fixed to 1
            let mut weights = Vec::new();
            let mut oi = 0;
            for &p in parents {
                if p == s_node {
                    continue;
                }
                if graph.role(p) == NodeRole::Latent {
                    weights.push(1.0);
                } else {
                    weights.push(beta[1 + oi]);
                    oi += 1;
                }
            }
            let sensitive_weights = if has_s {
                (0..k)
                    .map(|s| if s == 0 { 0.0 } else { beta[observed.len() + s] / s as f64 })
                    .collect()
            } else {
                vec![]
            };
            Ok(Mechanism::LinearGaussianByS {
                intercept: beta[0],
                weights,
                sensitive_weights,
                noise_std,
            })
        }
    }
}

/// The two mis-specified causal models studied on the synthetic data.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IncorrectVariant {
    /// Edges out of the target are reversed: its children become its parents.
    M1,
    /// Edges out of the sensitive node are dropped.
    M2,
}

impl FromStr for IncorrectVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "M1" => Ok(IncorrectVariant::M1),
            "M2" => Ok(IncorrectVariant::M2),
            other => Err(Error::Config(format!("unknown incorrect-model variant `{other}`"))),
        }
    }
}

impl fmt::Display for IncorrectVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IncorrectVariant::M1 => f.write_str("M1"),
            IncorrectVariant::M2 => f.write_str("M2"),
        }
    }
}

impl Scm {
    /// Mis-specified copy of this model. The mechanisms of nodes whose parent
    /// set changed are refitted on `data`; all others are kept.
    pub fn incorrect_variant(&self, which: IncorrectVariant, data: &Dataset) -> Result<Scm> {
        let g = &self.graph;
        let mut affected = Vec::new();
        let edges: Vec<(usize, usize)> = match which {
            IncorrectVariant::M1 => {
                let t = g.target();
                affected.push(t);
                g.edges()
                    .into_iter()
                    .map(|(f, to)| {
                        if f == t {
                            affected.push(to);
                            (to, f)
                        } else {
                            (f, to)
                        }
                    })
                    .collect()
            }
            IncorrectVariant::M2 => {
                let s = g.sensitive();
                g.edges()
                    .into_iter()
                    .filter(|&(f, to)| {
                        if f == s {
                            affected.push(to);
                            false
                        } else {
                            true
                        }
                    })
                    .collect()
            }
        };
        let graph = g.with_edges(edges);
        graph.validate()?;
        let mut mechanisms = self.mechanisms.clone();
        for &node in &affected {
            mechanisms[node] = fit_node(&graph, data, node)?;
        }
        Scm::new(graph, mechanisms)
    }
}

/// Parameters of the synthetic benchmark model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub probabilities: Vec<f64>,
    pub sigma_u: f64,
    pub sigma_0: f64,
    /// Noise std of `X1`, `Y` and `X2`, indexed by sensitive value.
    pub sigma_by_s: Vec<f64>,
    /// `W_S`, indexed by sensitive value.
    pub w_by_s: Vec<f64>,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            probabilities: vec![0.5, 0.4, 0.05, 0.05],
            sigma_u: 1.0,
            sigma_0: 1.0,
            sigma_by_s: vec![0.5, 1.0, 1.5, 2.0],
            w_by_s: vec![0.1, 0.2, 1.0, 2.0],
        }
    }
}

/// Synthetic benchmark model:
///
/// ```text
/// S ~ Categorical(π), U ~ N(0, σ_U²), X0 ~ N(0, σ_0²)
/// X1 = W_S·S + U + N(0, σ_S²)
/// Y  = X1 + X0 + N(0, σ_S²)
/// X2 = Y + N(0, σ_S²)
/// ```
pub fn claire_synthetic() -> Scm {
    synthetic_with(&SyntheticParams::default()).expect("default synthetic model is valid")
}

pub fn synthetic_with(p: &SyntheticParams) -> Result<Scm> {
    let nodes = vec![
        NodeSpec::new("S", NodeRole::Sensitive),
        NodeSpec::new("U", NodeRole::Latent),
        NodeSpec::new("X0", NodeRole::Observed),
        NodeSpec::new("X1", NodeRole::Observed),
        NodeSpec::new("Y", NodeRole::Target),
        NodeSpec::new("X2", NodeRole::Observed),
    ];
    let graph = CausalGraph::new(
        nodes,
        &[("S", "X1"), ("U", "X1"), ("X1", "Y"), ("X0", "Y"), ("Y", "X2")],
    )?;
    let mechanisms = vec![
        Mechanism::CategoricalRoot {
            probabilities: p.probabilities.clone(),
        },
        Mechanism::LinearGaussian {
            intercept: 0.0,
            weights: vec![],
            noise_std: p.sigma_u,
        },
        Mechanism::LinearGaussian {
            intercept: 0.0,
            weights: vec![],
            noise_std: p.sigma_0,
        },
        Mechanism::LinearGaussianByS {
            intercept: 0.0,
            weights: vec![1.0],
            sensitive_weights: p.w_by_s.clone(),
            noise_std: p.sigma_by_s.clone(),
        },
        Mechanism::LinearGaussianByS {
            intercept: 0.0,
            weights: vec![1.0, 1.0],
            sensitive_weights: vec![],
            noise_std: p.sigma_by_s.clone(),
        },
        Mechanism::LinearGaussianByS {
            intercept: 0.0,
            weights: vec![1.0],
            sensitive_weights: vec![],
            noise_std: p.sigma_by_s.clone(),
        },
    ];
    Scm::new(graph, mechanisms)
}

/// Noise scales of the mixed-feature chain model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainParams {
    pub sigma_u: f64,
    pub sigma_1: f64,
    pub sigma_y: f64,
    pub sigma_2: f64,
    pub sigma_3: f64,
}

/// Model with a causal non-descendant `X3`, a causal descendant `X1` of the
/// sensitive attribute and a spurious child `X2` of the target:
///
/// ```text
/// X1 = S + U + N(0, σ1²), Y = X1 + X3 + N(0, σY²), X2 = Y + N(0, σ2²), X3 ~ N(0, σ3²)
/// ```
///
/// `S` is a balanced binary root.
pub fn mixed_chain(p: ChainParams) -> Result<Scm> {
    let nodes = vec![
        NodeSpec::new("S", NodeRole::Sensitive),
        NodeSpec::new("U", NodeRole::Latent),
        NodeSpec::new("X1", NodeRole::Observed),
        NodeSpec::new("X3", NodeRole::Observed),
        NodeSpec::new("Y", NodeRole::Target),
        NodeSpec::new("X2", NodeRole::Observed),
    ];
    let graph = CausalGraph::new(
        nodes,
        &[("S", "X1"), ("U", "X1"), ("X1", "Y"), ("X3", "Y"), ("Y", "X2")],
    )?;
    let lg = |weights: Vec<f64>, sd: f64| Mechanism::LinearGaussian {
        intercept: 0.0,
        weights,
        noise_std: sd,
    };
    let mechanisms = vec![
        Mechanism::CategoricalRoot {
            probabilities: vec![0.5, 0.5],
        },
        lg(vec![], p.sigma_u),
        lg(vec![1.0, 1.0], p.sigma_1),
        lg(vec![], p.sigma_3),
        lg(vec![1.0, 1.0], p.sigma_y),
        lg(vec![1.0], p.sigma_2),
    ];
    Scm::new(graph, mechanisms)
}

/// JSON layout of an [`Scm`] (or of a bare graph when mechanisms are omitted).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScmDocument {
    pub nodes: Vec<NodeDocument>,
    pub edges: Vec<(String, String)>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NodeDocument {
    pub name: String,
    pub role: NodeRole,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mechanism: Option<Mechanism>,
}

impl ScmDocument {
    pub fn graph(&self) -> Result<CausalGraph> {
        let nodes = self
            .nodes
            .iter()
            .map(|n| NodeSpec::new(n.name.clone(), n.role))
            .collect();
        CausalGraph::new(nodes, &self.edges)
    }
}

impl TryFrom<ScmDocument> for Scm {
    type Error = Error;

    fn try_from(doc: ScmDocument) -> Result<Self> {
        let graph = doc.graph()?;
        let mechanisms = doc
            .nodes
            .into_iter()
            .map(|n| {
                n.mechanism
                    .ok_or_else(|| Error::InvalidScm(format!("node `{}` has no mechanism", n.name)))
            })
            .collect::<Result<_>>()?;
        Scm::new(graph, mechanisms)
    }
}

impl From<Scm> for ScmDocument {
    fn from(scm: Scm) -> Self {
        let edges = scm.graph.edge_names();
        let nodes = scm
            .graph
            .nodes
            .iter()
            .zip(scm.mechanisms)
            .map(|(n, m)| NodeDocument {
                name: n.name.clone(),
                role: n.role,
                mechanism: Some(m),
            })
            .collect();
        ScmDocument { nodes, edges }
    }
}

impl From<&CausalGraph> for ScmDocument {
    fn from(g: &CausalGraph) -> Self {
        ScmDocument {
            nodes: g
                .nodes
                .iter()
                .map(|n| NodeDocument {
                    name: n.name.clone(),
                    role: n.role,
                    mechanism: None,
                })
                .collect(),
            edges: g.edge_names(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge_set(scm: &Scm) -> Vec<(String, String)> {
        let mut e = scm.graph().edge_names();
        e.sort();
        e
    }

    fn pair(a: &str, b: &str) -> (String, String) {
        (a.to_string(), b.to_string())
    }

    #[test]
    fn synthetic_model_matches_definition() {
        let scm = claire_synthetic();
        match scm.mechanism(0) {
            Mechanism::CategoricalRoot { probabilities } => {
                assert_eq!(probabilities, &vec![0.5, 0.4, 0.05, 0.05])
            }
            other => panic!("unexpected {other:?}"),
        }
        let g = scm.graph();
        assert_eq!(scm.noise_std(g.index("U").unwrap(), 0), 1.0);
        assert_eq!(scm.noise_std(g.index("X0").unwrap(), 0), 1.0);
        let mut expected = vec![
            pair("S", "X1"),
            pair("U", "X1"),
            pair("X1", "Y"),
            pair("X0", "Y"),
            pair("Y", "X2"),
        ];
        expected.sort();
        assert_eq!(edge_set(&scm), expected);
        let x1 = g.index("X1").unwrap();
        assert_eq!(scm.offset(x1, 3), 6.0);
        assert_eq!(scm.noise_std(x1, 2), 1.5);
    }

    #[test]
    fn rejects_sensitive_with_parent() {
        let nodes = vec![
            NodeSpec::new("S", NodeRole::Sensitive),
            NodeSpec::new("X1", NodeRole::Observed),
            NodeSpec::new("Y", NodeRole::Target),
        ];
        let g = CausalGraph::new(nodes, &[("X1", "S"), ("X1", "Y")]).unwrap();
        let err = g.validate().unwrap_err();
        assert!(err.to_string().contains("has parents"), "{err}");
    }

    #[test]
    fn rejects_cycle() {
        let nodes = vec![
            NodeSpec::new("S", NodeRole::Sensitive),
            NodeSpec::new("A", NodeRole::Observed),
            NodeSpec::new("B", NodeRole::Target),
        ];
        let g = CausalGraph::new(nodes, &[("A", "B"), ("B", "A")]).unwrap();
        let err = g.validate().unwrap_err();
        assert!(err.to_string().contains("cycle"), "{err}");
    }

    #[test]
    fn rejects_mechanism_parent_mismatch() {
        let nodes = vec![
            NodeSpec::new("S", NodeRole::Sensitive),
            NodeSpec::new("Y", NodeRole::Target),
        ];
        let g = CausalGraph::new(nodes, &[("S", "Y")]).unwrap();
        let res = Scm::new(
            g.clone(),
            vec![
                Mechanism::CategoricalRoot { probabilities: vec![0.5, 0.5] },
                Mechanism::LinearGaussian { intercept: 0.0, weights: vec![], noise_std: 1.0 },
            ],
        );
        assert!(res.is_err());
        let res = Scm::new(g, vec![Mechanism::CategoricalRoot { probabilities: vec![0.5, 0.5] }]);
        assert!(res.is_err());
    }

    #[test]
    fn zero_noise_sampling_propagates_exactly() {
        let params = SyntheticParams {
            sigma_u: 0.0,
            sigma_0: 0.0,
            sigma_by_s: vec![0.0; 4],
            ..Default::default()
        };
        let scm = synthetic_with(&params).unwrap();
        let (d, rec) = scm.sample_do(50, 3, 0).unwrap();
        let g = scm.graph();
        for r in 0..d.len() {
            let u = rec.values.get(r, g.index("U").unwrap());
            let x0 = rec.values.get(r, g.index("X0").unwrap());
            assert_eq!(d.y[r], u + x0);
        }
    }

    #[test]
    fn zero_noise_sampling_with_nonzero_latent() {
        let params = SyntheticParams {
            sigma_by_s: vec![0.0; 4],
            ..Default::default()
        };
        let scm = synthetic_with(&params).unwrap();
        let (d, rec) = scm.sample_do(20, 4, 0).unwrap();
        let g = scm.graph();
        for r in 0..d.len() {
            let u = rec.values.get(r, g.index("U").unwrap());
            let x0 = rec.values.get(r, g.index("X0").unwrap());
            assert!((d.y[r] - (u + x0)).abs() < 1e-12);
        }
    }

    #[test]
    fn counterfactual_shift_without_noise() {
        let params = SyntheticParams {
            sigma_by_s: vec![0.0; 4],
            ..Default::default()
        };
        let scm = synthetic_with(&params).unwrap();
        let (d, _) = scm.sample_do(10, 9, 0).unwrap();
        let cf = scm.counterfactual_dataset(&d, 2, 50, 1).unwrap();
        for r in 0..d.len() {
            assert!((cf.x.get(r, 0) - d.x.get(r, 0)).abs() < 1e-9, "X0 unchanged");
            assert!((cf.x.get(r, 1) - d.x.get(r, 1) - 2.0).abs() < 1e-9, "X1 shift");
            assert!((cf.y[r] - d.y[r] - 2.0).abs() < 1e-9, "Y shift");
            assert!((cf.x.get(r, 2) - d.x.get(r, 2) - 2.0).abs() < 1e-9, "X2 shift");
        }
    }

    #[test]
    fn null_intervention_is_identity() {
        let scm = claire_synthetic();
        let (d, _) = scm.sample(40, 11).unwrap();
        for s in 0..4 {
            let idx: Vec<usize> = (0..d.len()).filter(|&r| d.s[r] == s).collect();
            if idx.is_empty() {
                continue;
            }
            let sub = d.subset(&idx);
            let cf = scm.counterfactual_dataset(&sub, s, 500, 5).unwrap();
            for (a, b) in cf.x.data().iter().zip(sub.x.data()) {
                assert!((a - b).abs() < 1e-9);
            }
            for (a, b) in cf.y.iter().zip(&sub.y) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn deterministic_chain_intervention() {
        let nodes = vec![
            NodeSpec::new("A", NodeRole::Sensitive),
            NodeSpec::new("B", NodeRole::Target),
        ];
        let g = CausalGraph::new(nodes, &[("A", "B")]).unwrap();
        let scm = Scm::new(
            g,
            vec![
                Mechanism::CategoricalRoot { probabilities: vec![0.2, 0.3, 0.5] },
                Mechanism::LinearGaussian { intercept: 0.0, weights: vec![1.0], noise_std: 0.0 },
            ],
        )
        .unwrap();
        let (_, y_cf) = scm.counterfactual(&[], 0, 0.0, 2, 1, 0).unwrap();
        assert_eq!(y_cf, 2.0);
    }

    #[test]
    fn counterfactual_rejects_out_of_range() {
        let scm = claire_synthetic();
        assert!(scm.counterfactual(&[0.0, 0.0, 0.0], 0, 0.0, 4, 10, 0).is_err());
    }

    #[test]
    fn sensitive_frequencies() {
        let scm = claire_synthetic();
        let (d, _) = scm.sample(1_000_000, 17).unwrap();
        let mut counts = [0usize; 4];
        d.s.iter().for_each(|&s| counts[s] += 1);
        for (c, p) in counts.iter().zip([0.5, 0.4, 0.05, 0.05]) {
            assert!((*c as f64 / d.len() as f64 - p).abs() < 0.005);
        }
    }

    #[test]
    fn regressing_y_on_parents_recovers_unit_weights() {
        let scm = claire_synthetic();
        let (d, _) = scm.sample(100_000, 21).unwrap();
        let mut design = Matrix::zeros(d.len(), 3);
        for r in 0..d.len() {
            design.set(r, 0, 1.0);
            design.set(r, 1, d.x.get(r, 0));
            design.set(r, 2, d.x.get(r, 1));
        }
        let beta = least_squares(&design, &d.y).unwrap();
        assert!((beta[1] - 1.0).abs() < 0.02 && (beta[2] - 1.0).abs() < 0.02, "{beta:?}");
    }

    #[test]
    fn fit_recovers_simple_linear_model() {
        let nodes = vec![
            NodeSpec::new("S", NodeRole::Sensitive),
            NodeSpec::new("X", NodeRole::Observed),
            NodeSpec::new("Y", NodeRole::Target),
        ];
        let g = CausalGraph::new(nodes, &[("X", "Y")]).unwrap();
        let truth = Scm::new(
            g.clone(),
            vec![
                Mechanism::CategoricalRoot { probabilities: vec![0.5, 0.5] },
                Mechanism::standard_normal(),
                Mechanism::LinearGaussian { intercept: 0.0, weights: vec![2.0], noise_std: 0.1 },
            ],
        )
        .unwrap();
        let (d, _) = truth.sample(100_000, 2).unwrap();
        let fitted = fit_linear_scm(&g, &d).unwrap();
        match fitted.mechanism(2) {
            Mechanism::LinearGaussianByS { weights, noise_std, .. } => {
                assert!((weights[0] - 2.0).abs() < 0.01);
                assert!(noise_std.iter().all(|s| (s - 0.1).abs() < 0.01));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn fit_reproduces_sensitive_offsets() {
        let truth = claire_synthetic();
        let (d, _) = truth.sample(200_000, 8).unwrap();
        let fitted = fit_linear_scm(truth.graph(), &d).unwrap();
        let x1 = truth.graph().index("X1").unwrap();
        for s in 1..4 {
            assert!((fitted.offset(x1, s) - truth.offset(x1, s)).abs() < 0.05, "s={s}");
        }
        for s in 0..4 {
            assert!((fitted.noise_std(x1, s) - truth.noise_std(x1, s)).abs() < 0.15, "s={s}");
        }
    }

    #[test]
    fn incorrect_variants() {
        let truth = claire_synthetic();
        let (d, _) = truth.sample(20_000, 4).unwrap();
        let m1 = truth.incorrect_variant(IncorrectVariant::M1, &d).unwrap();
        let e1 = edge_set(&m1);
        assert!(e1.contains(&pair("X2", "Y")) && !e1.contains(&pair("Y", "X2")));
        let m2 = truth.incorrect_variant(IncorrectVariant::M2, &d).unwrap();
        let e2 = edge_set(&m2);
        assert!(!e2.contains(&pair("S", "X1")) && e2.contains(&pair("U", "X1")));
        assert!(m1.graph().validate().is_ok() && m2.graph().validate().is_ok());
        assert!("M3".parse::<IncorrectVariant>().is_err());

        // M2 leaves X1 unchanged under an intervention on S
        let cf = m2.counterfactual_dataset(&d.subset(&[0, 1, 2, 3]), 3, 10, 0).unwrap();
        for r in 0..4 {
            assert!((cf.x.get(r, 1) - d.x.get(r, 1)).abs() < 1e-9);
        }
    }

    #[test]
    fn json_round_trip() {
        let scm = claire_synthetic();
        let text = scm.to_json().unwrap();
        let back = Scm::from_json(&text).unwrap();
        assert_eq!(back, scm);
        let graph_only = serde_json::to_string(&ScmDocument::from(scm.graph())).unwrap();
        assert_eq!(CausalGraph::from_json(&graph_only).unwrap(), *scm.graph());
        assert!(Scm::from_json(&graph_only).is_err());
    }

    #[test]
    fn descendants_of_sensitive() {
        let scm = claire_synthetic();
        let g = scm.graph();
        let desc = g.descendants(g.sensitive());
        let names: Vec<&str> = (0..g.len()).filter(|&i| desc[i]).map(|i| g.name(i)).collect();
        assert_eq!(names, vec!["X1", "Y", "X2"]);
    }
}
