//! Reverse-mode gradient accumulation over dense matrices.
//!
//! A [`Tape`] records every operation applied to [`Var`] handles. Calling
//! [`Tape::backward`] on a scalar (1x1) variable walks the record in reverse
//! and accumulates the gradient of every variable that depends on a
//! parameter. Constants never receive gradients.

use std::cell::{Cell, RefCell};

use super::matrix::{matmul_into, matmul_nt_into, matmul_tn_into, Matrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    AddRow(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    LeakyRelu(usize, f64),
    Sigmoid(usize),
    Exp(usize),
    Log(usize),
    Square(usize),
    Abs(usize),
    Mean(usize),
    Sum(usize),
    RowSum(usize),
    SoftmaxRows(usize),
    LogSoftmaxRows(usize),
    ConcatCols(usize, usize),
    SliceCols(usize, usize, usize),
    SelectRows(usize, Vec<usize>),
    CosineDistanceRows(usize, usize),
    MmdRbf(usize, usize, f64),
    BceWithLogits(usize, usize),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::AddRow(..) => "add_row",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::LeakyRelu(..) => "leaky_relu",
            Op::Sigmoid(..) => "sigmoid",
            Op::Exp(..) => "exp",
            Op::Log(..) => "log",
            Op::Square(..) => "square",
            Op::Abs(..) => "abs",
            Op::Mean(..) => "mean",
            Op::Sum(..) => "sum",
            Op::RowSum(..) => "row_sum",
            Op::SoftmaxRows(..) => "softmax",
            Op::LogSoftmaxRows(..) => "log_softmax",
            Op::ConcatCols(..) => "concat_cols",
            Op::SliceCols(..) => "slice_cols",
            Op::SelectRows(..) => "select_rows",
            Op::CosineDistanceRows(..) => "cosine_distance",
            Op::MmdRbf(..) => "mmd_rbf",
            Op::BceWithLogits(..) => "bce_with_logits",
        }
    }
}

struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// Operation record for one forward/backward pass.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    fault: Cell<Option<&'static str>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var").field("id", &self.id).finish()
    }
}

/// Gradients produced by [`Tape::backward`], indexed by variable.
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    pub fn get(&self, var: Var<'_>) -> Option<&Matrix> {
        self.grads[var.id].as_ref()
    }

    /// Gradient of `var`, or zeros of its shape when it does not influence the loss.
    pub fn wrt(&self, var: Var<'_>) -> Matrix {
        match &self.grads[var.id] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[var.id];
                Matrix::zeros(r, c)
            }
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Trainable leaf.
    pub fn param(&self, value: Matrix) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&self, value: Matrix) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Matrix, op: Op, requires_grad: bool) -> Var<'_> {
        if self.fault.get().is_none() && !value.is_finite() {
            self.fault.set(Some(op.name()));
        }
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn requires(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].requires_grad)
    }

    fn unary(&self, a: usize, op: Op, f: impl FnOnce(&Matrix) -> Matrix) -> Var<'_> {
        let value = {
            let nodes = self.nodes.borrow();
            f(&nodes[a].value)
        };
        let rg = self.requires(&[a]);
        self.push(value, op, rg)
    }

    fn binary(
        &self,
        a: usize,
        b: usize,
        op: Op,
        f: impl FnOnce(&Matrix, &Matrix) -> Matrix,
    ) -> Var<'_> {
        let value = {
            let nodes = self.nodes.borrow();
            f(&nodes[a].value, &nodes[b].value)
        };
        let rg = self.requires(&[a, b]);
        self.push(value, op, rg)
    }

    /// Accumulates gradients of the scalar `loss` with respect to every
    /// parameter-dependent variable.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        if let Some(op) = self.fault.get() {
            return Err(Error::NonFinite { op });
        }
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.value.shape() != (1, 1) {
            return Err(Error::shape(
                "backward",
                format!("loss must be 1x1, got {:?}", root.value.shape()),
            ));
        }
        let n = loss.id + 1;
        let mut grads: Vec<Option<Matrix>> = vec![None; nodes.len()];
        grads[loss.id] = Some(Matrix::scalar(1.0));

        for id in (0..n).rev() {
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            backprop(&nodes, id, &g, &mut grads);
            grads[id] = Some(g);
        }
        let shapes = nodes.iter().map(|n| n.value.shape()).collect();
        Ok(Gradients { grads, shapes })
    }
}

fn accumulate(grads: &mut [Option<Matrix>], nodes: &[Node], id: usize, delta: Matrix) {
    if !nodes[id].requires_grad {
        return;
    }
    match &mut grads[id] {
        Some(g) => g.add_assign(&delta),
        slot => *slot = Some(delta),
    }
}

fn backprop(nodes: &[Node], id: usize, g: &Matrix, grads: &mut [Option<Matrix>]) {
    let out = &nodes[id].value;
    match &nodes[id].op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (av, bv) = (&nodes[*a].value, &nodes[*b].value);
            if nodes[*a].requires_grad {
                let mut ga = Matrix::zeros(av.rows(), av.cols());
                matmul_nt_into(g, bv, &mut ga);
                accumulate(grads, nodes, *a, ga);
            }
            if nodes[*b].requires_grad {
                let mut gb = Matrix::zeros(bv.rows(), bv.cols());
                matmul_tn_into(av, g, &mut gb);
                accumulate(grads, nodes, *b, gb);
            }
        }
        Op::AddRow(a, b) => {
            accumulate(grads, nodes, *a, g.clone());
            if nodes[*b].requires_grad {
                accumulate(grads, nodes, *b, g.col_sums());
            }
        }
        Op::Add(a, b) => {
            accumulate(grads, nodes, *a, g.clone());
            accumulate(grads, nodes, *b, g.clone());
        }
        Op::Sub(a, b) => {
            accumulate(grads, nodes, *a, g.clone());
            accumulate(grads, nodes, *b, g.map(|v| -v));
        }
        Op::Mul(a, b) => {
            let (av, bv) = (&nodes[*a].value, &nodes[*b].value);
            if nodes[*a].requires_grad {
                accumulate(grads, nodes, *a, g.zip_map(bv, |x, y| x * y));
            }
            if nodes[*b].requires_grad {
                accumulate(grads, nodes, *b, g.zip_map(av, |x, y| x * y));
            }
        }
        Op::Scale(a, k) => {
            let k = *k;
            accumulate(grads, nodes, *a, g.map(|v| v * k));
        }
        Op::AddScalar(a) => accumulate(grads, nodes, *a, g.clone()),
        Op::LeakyRelu(a, slope) => {
            let slope = *slope;
            let delta = nodes[*a]
                .value
                .zip_map(g, |x, gv| if x > 0.0 { gv } else { slope * gv });
            accumulate(grads, nodes, *a, delta);
        }
        Op::Sigmoid(a) => {
            accumulate(grads, nodes, *a, out.zip_map(g, |y, gv| gv * y * (1.0 - y)));
        }
        Op::Exp(a) => accumulate(grads, nodes, *a, out.zip_map(g, |y, gv| gv * y)),
        Op::Log(a) => {
            accumulate(grads, nodes, *a, nodes[*a].value.zip_map(g, |x, gv| gv / x));
        }
        Op::Square(a) => {
            accumulate(grads, nodes, *a, nodes[*a].value.zip_map(g, |x, gv| 2.0 * x * gv));
        }
        Op::Abs(a) => {
            let delta = nodes[*a].value.zip_map(g, |x, gv| {
                if x > 0.0 {
                    gv
                } else if x < 0.0 {
                    -gv
                } else {
                    0.0
                }
            });
            accumulate(grads, nodes, *a, delta);
        }
        Op::Mean(a) => {
            let av = &nodes[*a].value;
            let k = g.as_scalar() / av.len() as f64;
            accumulate(grads, nodes, *a, Matrix::filled(av.rows(), av.cols(), k));
        }
        Op::Sum(a) => {
            let av = &nodes[*a].value;
            accumulate(grads, nodes, *a, Matrix::filled(av.rows(), av.cols(), g.as_scalar()));
        }
        Op::RowSum(a) => {
            let av = &nodes[*a].value;
            let mut delta = Matrix::zeros(av.rows(), av.cols());
            for r in 0..av.rows() {
                let gr = g.get(r, 0);
                delta.row_mut(r).iter_mut().for_each(|v| *v = gr);
            }
            accumulate(grads, nodes, *a, delta);
        }
        Op::SoftmaxRows(a) => {
            let mut delta = Matrix::zeros(out.rows(), out.cols());
            for r in 0..out.rows() {
                let y = out.row(r);
                let gr = g.row(r);
                let dot: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                for (c, d) in delta.row_mut(r).iter_mut().enumerate() {
                    *d = y[c] * (gr[c] - dot);
                }
            }
            accumulate(grads, nodes, *a, delta);
        }
        Op::LogSoftmaxRows(a) => {
            let mut delta = Matrix::zeros(out.rows(), out.cols());
            for r in 0..out.rows() {
                let y = out.row(r);
                let gr = g.row(r);
                let total: f64 = gr.iter().sum();
                for (c, d) in delta.row_mut(r).iter_mut().enumerate() {
                    *d = gr[c] - y[c].exp() * total;
                }
            }
            accumulate(grads, nodes, *a, delta);
        }
        Op::ConcatCols(a, b) => {
            let split = nodes[*a].value.cols();
            if nodes[*a].requires_grad {
                accumulate(grads, nodes, *a, g.slice_cols(0, split));
            }
            if nodes[*b].requires_grad {
                accumulate(grads, nodes, *b, g.slice_cols(split, g.cols()));
            }
        }
        Op::SliceCols(a, start, end) => {
            let av = &nodes[*a].value;
            let mut delta = Matrix::zeros(av.rows(), av.cols());
            for r in 0..av.rows() {
                delta.row_mut(r)[*start..*end].copy_from_slice(g.row(r));
            }
            accumulate(grads, nodes, *a, delta);
        }
        Op::SelectRows(a, idx) => {
            let av = &nodes[*a].value;
            let mut delta = Matrix::zeros(av.rows(), av.cols());
            for (k, &i) in idx.iter().enumerate() {
                for (d, v) in delta.row_mut(i).iter_mut().zip(g.row(k)) {
                    *d += v;
                }
            }
            accumulate(grads, nodes, *a, delta);
        }
        Op::CosineDistanceRows(a, b) => {
            let (av, bv) = (&nodes[*a].value, &nodes[*b].value);
            let mut ga = Matrix::zeros(av.rows(), av.cols());
            let mut gb = Matrix::zeros(bv.rows(), bv.cols());
            for r in 0..av.rows() {
                let (x, y) = (av.row(r), bv.row(r));
                let nx = norm(x);
                let ny = norm(y);
                if nx == 0.0 || ny == 0.0 {
                    continue;
                }
                let cos = dot(x, y) / (nx * ny);
                let gr = g.get(r, 0);
                for c in 0..x.len() {
                    // d(1 - cos)/dx = -(y/(|x||y|) - cos * x/|x|^2)
                    ga.row_mut(r)[c] = -gr * (y[c] / (nx * ny) - cos * x[c] / (nx * nx));
                    gb.row_mut(r)[c] = -gr * (x[c] / (nx * ny) - cos * y[c] / (ny * ny));
                }
            }
            accumulate(grads, nodes, *a, ga);
            accumulate(grads, nodes, *b, gb);
        }
        Op::MmdRbf(a, b, bandwidth) => {
            let (av, bv) = (&nodes[*a].value, &nodes[*b].value);
            let (ga, gb) = mmd_rbf_grad(av, bv, *bandwidth);
            let k = g.as_scalar();
            let mut ga = ga;
            let mut gb = gb;
            ga.scale_assign(k);
            gb.scale_assign(k);
            accumulate(grads, nodes, *a, ga);
            accumulate(grads, nodes, *b, gb);
        }
        Op::BceWithLogits(a, t) => {
            let (lv, tv) = (&nodes[*a].value, &nodes[*t].value);
            let mut delta = Matrix::zeros(lv.rows(), lv.cols());
            for ((d, &l), (&y, &gv)) in delta
                .data_mut()
                .iter_mut()
                .zip(lv.data())
                .zip(tv.data().iter().zip(g.data()))
            {
                *d = gv * (sigmoid(l) - y);
            }
            accumulate(grads, nodes, *a, delta);
        }
    }
}

#[inline]
fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

#[inline]
fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Biased (V-statistic) squared MMD with a Gaussian kernel
/// `k(x, y) = exp(-|x - y|^2 / (2 h^2))`, rows are samples.
pub fn mmd_rbf_value(a: &Matrix, b: &Matrix, bandwidth: f64) -> f64 {
    let gamma = 1.0 / (2.0 * bandwidth * bandwidth);
    let mean_kernel = |p: &Matrix, q: &Matrix| {
        let mut acc = 0.0;
        for i in 0..p.rows() {
            for j in 0..q.rows() {
                acc += (-gamma * sq_dist(p.row(i), q.row(j))).exp();
            }
        }
        acc / (p.rows() * q.rows()) as f64
    };
    let v = mean_kernel(a, a) + mean_kernel(b, b) - 2.0 * mean_kernel(a, b);
    v.max(0.0)
}

fn mmd_rbf_grad(a: &Matrix, b: &Matrix, bandwidth: f64) -> (Matrix, Matrix) {
    let gamma = 1.0 / (2.0 * bandwidth * bandwidth);
    let (na, nb) = (a.rows() as f64, b.rows() as f64);
    let d = a.cols();
    let mut ga = Matrix::zeros(a.rows(), d);
    let mut gb = Matrix::zeros(b.rows(), d);
    // dk(x,y)/dx = -2 gamma k (x - y)
    // within-sample terms: each unordered pair appears twice
    let within = |p: &Matrix, gp: &mut Matrix, n: f64| {
        let w = 1.0 / (n * n);
        for i in 0..p.rows() {
            for j in (i + 1)..p.rows() {
                let k = (-gamma * sq_dist(p.row(i), p.row(j))).exp();
                let coef = 2.0 * w * (-2.0 * gamma * k);
                for c in 0..d {
                    let diff = p.get(i, c) - p.get(j, c);
                    let v = coef * diff;
                    gp.row_mut(i)[c] += v;
                    gp.row_mut(j)[c] -= v;
                }
            }
        }
    };
    within(a, &mut ga, na);
    within(b, &mut gb, nb);
    let w = -2.0 / (na * nb);
    for i in 0..a.rows() {
        for j in 0..b.rows() {
            let k = (-gamma * sq_dist(a.row(i), b.row(j))).exp();
            let coef = w * (-2.0 * gamma * k);
            for c in 0..d {
                let diff = a.get(i, c) - b.get(j, c);
                ga.row_mut(i)[c] += coef * diff;
                gb.row_mut(j)[c] -= coef * diff;
            }
        }
    }
    (ga, gb)
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Matrix {
        self.tape.nodes.borrow()[self.id].value.clone()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.tape.nodes.borrow()[self.id].value.shape()
    }

    /// Scalar value of a 1x1 variable.
    pub fn scalar(&self) -> f64 {
        self.tape.nodes.borrow()[self.id].value.as_scalar()
    }

    pub fn matmul(self, rhs: Var<'t>) -> Result<Var<'t>> {
        let (ar, ac) = self.shape();
        let (br, bc) = rhs.shape();
        if ac != br {
            return Err(Error::shape("matmul", format!("{ar}x{ac} times {br}x{bc}")));
        }
        Ok(self.tape.binary(self.id, rhs.id, Op::MatMul(self.id, rhs.id), |a, b| {
            let mut out = Matrix::zeros(a.rows(), b.cols());
            matmul_into(a, b, &mut out);
            out
        }))
    }

    /// Adds a 1 x cols row vector to every row.
    pub fn add_row(self, bias: Var<'t>) -> Result<Var<'t>> {
        let (_, c) = self.shape();
        if bias.shape() != (1, c) {
            return Err(Error::shape("add_row", format!("bias {:?} for {c} cols", bias.shape())));
        }
        Ok(self.tape.binary(self.id, bias.id, Op::AddRow(self.id, bias.id), |a, b| {
            let mut out = a.clone();
            for r in 0..out.rows() {
                for (o, v) in out.row_mut(r).iter_mut().zip(b.data()) {
                    *o += v;
                }
            }
            out
        }))
    }

    fn same_shape(self, rhs: Var<'t>, op: &'static str) -> Result<()> {
        if self.shape() != rhs.shape() {
            return Err(Error::shape(op, format!("{:?} vs {:?}", self.shape(), rhs.shape())));
        }
        Ok(())
    }

    pub fn add(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.same_shape(rhs, "add")?;
        Ok(self.tape.binary(self.id, rhs.id, Op::Add(self.id, rhs.id), |a, b| {
            a.zip_map(b, |x, y| x + y)
        }))
    }

    pub fn sub(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.same_shape(rhs, "sub")?;
        Ok(self.tape.binary(self.id, rhs.id, Op::Sub(self.id, rhs.id), |a, b| {
            a.zip_map(b, |x, y| x - y)
        }))
    }

    /// Elementwise product.
    pub fn mul(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.same_shape(rhs, "mul")?;
        Ok(self.tape.binary(self.id, rhs.id, Op::Mul(self.id, rhs.id), |a, b| {
            a.zip_map(b, |x, y| x * y)
        }))
    }

    pub fn scale(self, k: f64) -> Var<'t> {
        self.tape.unary(self.id, Op::Scale(self.id, k), |a| a.map(|x| x * k))
    }

    pub fn add_scalar(self, k: f64) -> Var<'t> {
        self.tape.unary(self.id, Op::AddScalar(self.id), |a| a.map(|x| x + k))
    }

    pub fn leaky_relu(self, slope: f64) -> Var<'t> {
        self.tape.unary(self.id, Op::LeakyRelu(self.id, slope), |a| {
            a.map(|x| if x > 0.0 { x } else { slope * x })
        })
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.tape.unary(self.id, Op::Sigmoid(self.id), |a| a.map(sigmoid))
    }

    pub fn exp(self) -> Var<'t> {
        self.tape.unary(self.id, Op::Exp(self.id), |a| a.map(f64::exp))
    }

    pub fn ln(self) -> Var<'t> {
        self.tape.unary(self.id, Op::Log(self.id), |a| a.map(f64::ln))
    }

    pub fn square(self) -> Var<'t> {
        self.tape.unary(self.id, Op::Square(self.id), |a| a.map(|x| x * x))
    }

    pub fn abs(self) -> Var<'t> {
        self.tape.unary(self.id, Op::Abs(self.id), |a| a.map(f64::abs))
    }

    /// Mean over all entries (1x1).
    pub fn mean(self) -> Var<'t> {
        self.tape.unary(self.id, Op::Mean(self.id), |a| Matrix::scalar(a.mean()))
    }

    /// Sum over all entries (1x1).
    pub fn sum(self) -> Var<'t> {
        self.tape.unary(self.id, Op::Sum(self.id), |a| Matrix::scalar(a.sum()))
    }

    /// Per-row sums (n x 1).
    pub fn row_sum(self) -> Var<'t> {
        self.tape.unary(self.id, Op::RowSum(self.id), |a| {
            let sums: Vec<f64> = (0..a.rows()).map(|r| a.row(r).iter().sum()).collect();
            Matrix::column(&sums)
        })
    }

    pub fn softmax_rows(self) -> Var<'t> {
        self.tape
            .unary(self.id, Op::SoftmaxRows(self.id), |a| softmax_rows(a))
    }

    pub fn log_softmax_rows(self) -> Var<'t> {
        self.tape.unary(self.id, Op::LogSoftmaxRows(self.id), |a| {
            let mut out = a.clone();
            for r in 0..out.rows() {
                let row = out.row_mut(r);
                let lse = log_sum_exp(row);
                row.iter_mut().for_each(|v| *v -= lse);
            }
            out
        })
    }

    pub fn concat_cols(self, rhs: Var<'t>) -> Result<Var<'t>> {
        if self.shape().0 != rhs.shape().0 {
            return Err(Error::shape(
                "concat_cols",
                format!("{:?} vs {:?}", self.shape(), rhs.shape()),
            ));
        }
        Ok(self
            .tape
            .binary(self.id, rhs.id, Op::ConcatCols(self.id, rhs.id), |a, b| {
                a.hconcat(b).expect("row counts checked")
            }))
    }

    pub fn slice_cols(self, start: usize, end: usize) -> Result<Var<'t>> {
        if start > end || end > self.shape().1 {
            return Err(Error::shape("slice_cols", format!("{start}..{end} of {:?}", self.shape())));
        }
        Ok(self
            .tape
            .unary(self.id, Op::SliceCols(self.id, start, end), |a| a.slice_cols(start, end)))
    }

    pub fn select_rows(self, indices: &[usize]) -> Result<Var<'t>> {
        let rows = self.shape().0;
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(Error::shape("select_rows", format!("row {bad} of {rows}")));
        }
        Ok(self.tape.unary(
            self.id,
            Op::SelectRows(self.id, indices.to_vec()),
            |a| a.select_rows(indices),
        ))
    }

    /// Row-wise cosine distance `1 - cos(a_i, b_i)` (n x 1). A zero-norm row
    /// yields distance 1 and no gradient.
    pub fn cosine_distance_rows(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.same_shape(rhs, "cosine_distance")?;
        Ok(self.tape.binary(
            self.id,
            rhs.id,
            Op::CosineDistanceRows(self.id, rhs.id),
            |a, b| {
                let d: Vec<f64> = (0..a.rows())
                    .map(|r| cosine_distance(a.row(r), b.row(r)))
                    .collect();
                Matrix::column(&d)
            },
        ))
    }

    /// Biased squared MMD between the row samples of `self` and `rhs` (1x1).
    pub fn mmd_rbf(self, rhs: Var<'t>, bandwidth: f64) -> Result<Var<'t>> {
        if self.shape().1 != rhs.shape().1 {
            return Err(Error::shape("mmd_rbf", "sample dimensions differ"));
        }
        if self.shape().0 == 0 || rhs.shape().0 == 0 {
            return Err(Error::Empty("mmd_rbf"));
        }
        Ok(self.tape.binary(
            self.id,
            rhs.id,
            Op::MmdRbf(self.id, rhs.id, bandwidth),
            |a, b| Matrix::scalar(mmd_rbf_value(a, b, bandwidth)),
        ))
    }

    /// Elementwise binary cross-entropy of `sigmoid(self)` against `targets`.
    pub fn bce_with_logits(self, targets: Var<'t>) -> Result<Var<'t>> {
        self.same_shape(targets, "bce_with_logits")?;
        Ok(self.tape.binary(
            self.id,
            targets.id,
            Op::BceWithLogits(self.id, targets.id),
            |l, y| {
                l.zip_map(y, |l, y| l.max(0.0) - l * y + (-l.abs()).exp().ln_1p())
            },
        ))
    }
}

pub(crate) fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub(crate) fn softmax_rows(a: &Matrix) -> Matrix {
    let mut out = a.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            total += *v;
        }
        row.iter_mut().for_each(|v| *v /= total);
    }
    out
}

/// `1 - cos(x, y)`, or 1 when either vector has zero norm.
pub fn cosine_distance(x: &[f64], y: &[f64]) -> f64 {
    let (nx, ny) = (norm(x), norm(y));
    if nx == 0.0 || ny == 0.0 {
        log::debug!("zero-norm representation in cosine distance");
        return 1.0;
    }
    1.0 - dot(x, y) / (nx * ny)
}
