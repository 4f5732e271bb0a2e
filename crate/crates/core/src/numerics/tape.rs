//! Reverse-mode differentiation over a recorded list of tensor ops.
//!
//! A [`Tape`] is built fresh for every forward pass. Ops append nodes in
//! evaluation order, so walking the list backwards is a valid topological
//! order and no cycle can be formed.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Result, TegError};
use crate::numerics::tensor::{gemm, silu, silu_grad};
use crate::numerics::{Csr, ParamStore, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Affine(Var, Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRowBroadcast(Var, Var),
    MulCol(Var, Var),
    Concat(Vec<Var>),
    GatherRows(Var, Arc<[usize]>),
    ScatterAddRows(Var, Arc<[usize]>),
    SumRows(Var),
    MeanRows(Var),
    Sum(Var),
    Mean(Var),
    Square(Var),
    PairwiseSqDist(Var, Var),
    Relu(Var),
    Silu(Var),
    Dropout(Var, Vec<f64>),
    LogSoftmax(Var),
    Nll(Var, Arc<[usize]>),
    SparseMatMul(Arc<Csr>, Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradients of a scalar loss with respect to every entry of a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    grads: BTreeMap<String, Tensor>,
}

impl ParamGrads {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.grads.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.grads.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn from_map(grads: BTreeMap<String, Tensor>) -> Self {
        Self { grads }
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: BTreeMap<String, Var>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Binds a stored parameter as a differentiable leaf. Binding the same
    /// name twice returns the same node.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let value = store.get(name)?.clone();
        let v = self.push(value, Op::Leaf, true);
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    /// Same value, no gradient path.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    fn mismatch(&self, op: &'static str, a: Var, b: Var) -> TegError {
        TegError::ShapeMismatch {
            op,
            lhs: self.value(a).shape().to_vec(),
            rhs: self.value(b).shape().to_vec(),
        }
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(self.mismatch(op, a, b));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self
            .value(a)
            .matmul(self.value(b))
            .map_err(|_| self.mismatch("matmul", a, b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    /// `x · w + b` with `b` a `1×n` row broadcast over rows.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let mut value = self
            .value(x)
            .matmul(self.value(w))
            .map_err(|_| self.mismatch("affine", x, w))?;
        let bias = self.value(b);
        if bias.len() != value.cols() {
            return Err(TegError::ShapeMismatch {
                op: "affine_bias",
                lhs: value.shape().to_vec(),
                rhs: bias.shape().to_vec(),
            });
        }
        let n = value.cols();
        for row in value.data_mut().chunks_mut(n.max(1)) {
            for (o, bi) in row.iter_mut().zip(bias.data()) {
                *o += bi;
            }
        }
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        Ok(self.push(value, Op::Affine(x, w, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Sub(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).map(|x| x * s);
        let rg = self.rg(a);
        self.push(value, Op::Scale(a, s), rg)
    }

    /// Adds a `1×n` row to every row of an `m×n` tensor.
    pub fn add_row_broadcast(&mut self, x: Var, row: Var) -> Result<Var> {
        let xv = self.value(x);
        let rv = self.value(row);
        if rv.len() != xv.cols() {
            return Err(self.mismatch("add_row_broadcast", x, row));
        }
        let mut value = xv.clone();
        let n = value.cols();
        for r in value.data_mut().chunks_mut(n.max(1)) {
            for (o, b) in r.iter_mut().zip(rv.data()) {
                *o += b;
            }
        }
        let rg = self.rg(x) || self.rg(row);
        Ok(self.push(value, Op::AddRowBroadcast(x, row), rg))
    }

    /// Scales row `r` of an `m×n` tensor by `c[r]`, with `c` shaped `m×1`.
    pub fn mul_col(&mut self, x: Var, c: Var) -> Result<Var> {
        let xv = self.value(x);
        let cv = self.value(c);
        if cv.len() != xv.rows() {
            return Err(self.mismatch("mul_col", x, c));
        }
        let mut value = xv.clone();
        let n = value.cols();
        for (r, s) in value.data_mut().chunks_mut(n.max(1)).zip(cv.data()) {
            for o in r.iter_mut() {
                *o *= s;
            }
        }
        let rg = self.rg(x) || self.rg(c);
        Ok(self.push(value, Op::MulCol(x, c), rg))
    }

    /// Concatenation along the last axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.value(parts[0]).rows();
        for &p in parts {
            if self.value(p).rows() != rows {
                return Err(self.mismatch("concat", parts[0], p));
            }
        }
        let widths: Vec<usize> = parts.iter().map(|&p| self.value(p).cols()).collect();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let value = Tensor::new(&[rows, total], data)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(value, Op::Concat(parts.to_vec()), rg))
    }

    pub fn gather_rows(&mut self, x: Var, idx: Arc<[usize]>) -> Result<Var> {
        let rows = self.value(x).rows();
        if let Some(&bad) = idx.iter().find(|&&i| i >= rows) {
            return Err(TegError::DimensionMismatch(format!(
                "gather_rows index {bad} out of {rows} rows"
            )));
        }
        let value = self.value(x).gather_rows(&idx);
        let rg = self.rg(x);
        Ok(self.push(value, Op::GatherRows(x, idx), rg))
    }

    /// Row `r` of `x` is added into row `idx[r]` of an `out_rows`-row result.
    pub fn scatter_add_rows(&mut self, x: Var, idx: Arc<[usize]>, out_rows: usize) -> Result<Var> {
        let xv = self.value(x);
        if idx.len() != xv.rows() {
            return Err(TegError::DimensionMismatch(format!(
                "scatter_add_rows: {} indices for {} rows",
                idx.len(),
                xv.rows()
            )));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= out_rows) {
            return Err(TegError::DimensionMismatch(format!(
                "scatter_add_rows target {bad} out of {out_rows} rows"
            )));
        }
        let n = xv.cols();
        let mut value = Tensor::zeros(&[out_rows, n]);
        for (r, &t) in idx.iter().enumerate() {
            for (o, v) in value.row_mut(t).iter_mut().zip(xv.row(r)) {
                *o += v;
            }
        }
        let rg = self.rg(x);
        Ok(self.push(value, Op::ScatterAddRows(x, idx), rg))
    }

    /// Per-row sum, `m×n → m×1`.
    pub fn sum_rows(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let data: Vec<f64> = (0..xv.rows()).map(|r| xv.row(r).iter().sum()).collect();
        let value = Tensor::new(&[xv.rows(), 1], data).unwrap();
        let rg = self.rg(x);
        self.push(value, Op::SumRows(x), rg)
    }

    /// Per-row mean, `m×n → m×1`.
    pub fn mean_rows(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let n = xv.cols() as f64;
        let data: Vec<f64> = (0..xv.rows())
            .map(|r| xv.row(r).iter().sum::<f64>() / n)
            .collect();
        let value = Tensor::new(&[xv.rows(), 1], data).unwrap();
        let rg = self.rg(x);
        self.push(value, Op::MeanRows(x), rg)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        let rg = self.rg(x);
        self.push(value, Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let value = Tensor::scalar(xv.sum() / xv.len() as f64);
        let rg = self.rg(x);
        self.push(value, Op::Mean(x), rg)
    }

    pub fn square(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v * v);
        let rg = self.rg(x);
        self.push(value, Op::Square(x), rg)
    }

    /// `D[i][j] = ||a_i − b_j||²`.
    pub fn pairwise_sqdist(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self
            .value(a)
            .pairwise_sqdist(self.value(b))
            .map_err(|_| self.mismatch("pairwise_sqdist", a, b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::PairwiseSqDist(a, b), rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(0.0));
        let rg = self.rg(x);
        self.push(value, Op::Relu(x), rg)
    }

    pub fn silu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(silu);
        let rg = self.rg(x);
        self.push(value, Op::Silu(x), rg)
    }

    /// Inverted dropout: each entry is zeroed with probability `rate` and
    /// survivors are scaled by `1/(1−rate)`. A rate of zero records nothing.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f64, rng: &mut R) -> Var {
        if rate <= 0.0 {
            return x;
        }
        let keep = 1.0 - rate;
        let xv = self.value(x);
        let mask: Vec<f64> = (0..xv.len())
            .map(|_| {
                if rng.random::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
            .collect();
        let data = xv.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let value = Tensor::new(xv.shape(), data).unwrap();
        let rg = self.rg(x);
        self.push(value, Op::Dropout(x, mask), rg)
    }

    pub fn log_softmax(&mut self, x: Var) -> Var {
        let value = self.value(x).log_softmax_rows();
        let rg = self.rg(x);
        self.push(value, Op::LogSoftmax(x), rg)
    }

    /// `−Σ_r logp[r][target_r]` as a scalar.
    pub fn nll(&mut self, logp: Var, targets: Arc<[usize]>) -> Result<Var> {
        let lv = self.value(logp);
        if targets.len() != lv.rows() || targets.iter().any(|&t| t >= lv.cols()) {
            return Err(TegError::DimensionMismatch(format!(
                "nll: {} targets for log-probs shaped {:?}",
                targets.len(),
                lv.shape()
            )));
        }
        let total: f64 = targets
            .iter()
            .enumerate()
            .map(|(r, &t)| -lv.get(r, t))
            .sum();
        let rg = self.rg(logp);
        Ok(self.push(Tensor::scalar(total), Op::Nll(logp, targets), rg))
    }

    /// Fixed sparse operator applied on the left.
    pub fn sparse_matmul(&mut self, a: Arc<Csr>, x: Var) -> Result<Var> {
        let value = a.matmul(self.value(x))?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::SparseMatMul(a, x), rg))
    }

    /// Exact gradients of the scalar `loss` for every parameter in `store`.
    /// Parameters never bound on this tape, or not reachable from `loss`,
    /// get zeros.
    pub fn backward(&self, loss: Var, store: &ParamStore) -> Result<ParamGrads> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(TegError::DimensionMismatch(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            self.propagate(i, &node.op, &g, &mut grads);
            // Leaves keep their gradient for collection below.
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(g);
            }
        }

        let mut out = BTreeMap::new();
        for p in store.iter() {
            let g = self
                .params
                .get(&p.name)
                .filter(|v| v.0 <= loss.0)
                .and_then(|v| grads[v.0].clone())
                .unwrap_or_else(|| Tensor::zeros(p.value.shape()));
            out.insert(p.name.clone(), g);
        }
        Ok(ParamGrads { grads: out })
    }

    fn propagate(&self, i: usize, op: &Op, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        let mut acc = |v: Var, t: Tensor| {
            assert!(v.0 < i, "tape order violated");
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.axpy(1.0, &t),
                slot @ None => *slot = Some(t),
            }
        };
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                if self.rg(*a) {
                    let mut da = vec![0.0; m * k];
                    gemm(g.data(), false, bv.data(), true, &mut da, m, n, k, 0.0);
                    acc(*a, Tensor::new(&[m, k], da).unwrap());
                }
                if self.rg(*b) {
                    let mut db = vec![0.0; k * n];
                    gemm(av.data(), true, g.data(), false, &mut db, k, m, n, 0.0);
                    acc(*b, Tensor::new(&[k, n], db).unwrap());
                }
            }
            Op::Affine(x, w, b) => {
                let (xv, wv) = (val(*x), val(*w));
                let (m, k, n) = (xv.rows(), xv.cols(), wv.cols());
                if self.rg(*x) {
                    let mut dx = vec![0.0; m * k];
                    gemm(g.data(), false, wv.data(), true, &mut dx, m, n, k, 0.0);
                    acc(*x, Tensor::new(xv.shape(), dx).unwrap());
                }
                if self.rg(*w) {
                    let mut dw = vec![0.0; k * n];
                    gemm(xv.data(), true, g.data(), false, &mut dw, k, m, n, 0.0);
                    acc(*w, Tensor::new(wv.shape(), dw).unwrap());
                }
                if self.rg(*b) {
                    acc(*b, column_sums(g, val(*b).shape()));
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                if self.rg(*a) {
                    acc(*a, g.zip_map(val(*b), |x, y| x * y));
                }
                if self.rg(*b) {
                    acc(*b, g.zip_map(val(*a), |x, y| x * y));
                }
            }
            Op::Scale(a, s) => acc(*a, g.map(|v| v * s)),
            Op::AddRowBroadcast(x, row) => {
                acc(*x, g.clone());
                if self.rg(*row) {
                    acc(*row, column_sums(g, val(*row).shape()));
                }
            }
            Op::MulCol(x, c) => {
                let (xv, cv) = (val(*x), val(*c));
                let n = xv.cols();
                if self.rg(*x) {
                    let mut dx = g.clone();
                    for (r, s) in dx.data_mut().chunks_mut(n.max(1)).zip(cv.data()) {
                        for o in r.iter_mut() {
                            *o *= s;
                        }
                    }
                    acc(*x, dx);
                }
                if self.rg(*c) {
                    let data = (0..xv.rows())
                        .map(|r| g.row(r).iter().zip(xv.row(r)).map(|(a, b)| a * b).sum())
                        .collect();
                    acc(*c, Tensor::new(cv.shape(), data).unwrap());
                }
            }
            Op::Concat(parts) => {
                let rows = g.rows();
                let mut offset = 0;
                for &p in parts {
                    let w = val(p).cols();
                    if self.rg(p) {
                        let mut d = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            d.extend_from_slice(&g.row(r)[offset..offset + w]);
                        }
                        acc(p, Tensor::new(val(p).shape(), d).unwrap());
                    }
                    offset += w;
                }
            }
            Op::GatherRows(x, idx) => {
                let xv = val(*x);
                let mut dx = Tensor::zeros(xv.shape());
                for (r, &src) in idx.iter().enumerate() {
                    for (o, v) in dx.row_mut(src).iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
                acc(*x, dx);
            }
            Op::ScatterAddRows(x, idx) => {
                acc(*x, g.gather_rows(idx));
            }
            Op::SumRows(x) => {
                let xv = val(*x);
                let n = xv.cols();
                let data = g
                    .data()
                    .iter()
                    .flat_map(|&v| std::iter::repeat_n(v, n))
                    .collect();
                acc(*x, Tensor::new(xv.shape(), data).unwrap());
            }
            Op::MeanRows(x) => {
                let xv = val(*x);
                let n = xv.cols();
                let data = g
                    .data()
                    .iter()
                    .flat_map(|&v| std::iter::repeat_n(v / n as f64, n))
                    .collect();
                acc(*x, Tensor::new(xv.shape(), data).unwrap());
            }
            Op::Sum(x) => acc(*x, Tensor::full(val(*x).shape(), g.item())),
            Op::Mean(x) => {
                let xv = val(*x);
                acc(*x, Tensor::full(xv.shape(), g.item() / xv.len() as f64));
            }
            Op::Square(x) => acc(*x, g.zip_map(val(*x), |gv, xv| 2.0 * gv * xv)),
            Op::PairwiseSqDist(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let (n, m, d) = (av.rows(), bv.rows(), av.cols());
                let mut da = Tensor::zeros(av.shape());
                let mut db = Tensor::zeros(bv.shape());
                for i in 0..n {
                    for j in 0..m {
                        let w = 2.0 * g.get(i, j);
                        if w == 0.0 {
                            continue;
                        }
                        for t in 0..d {
                            let diff = av.get(i, t) - bv.get(j, t);
                            da.data_mut()[i * d + t] += w * diff;
                            db.data_mut()[j * d + t] -= w * diff;
                        }
                    }
                }
                acc(*a, da);
                acc(*b, db);
            }
            Op::Relu(x) => acc(
                *x,
                g.zip_map(val(*x), |gv, xv| if xv > 0.0 { gv } else { 0.0 }),
            ),
            Op::Silu(x) => acc(*x, g.zip_map(val(*x), |gv, xv| gv * silu_grad(xv))),
            Op::Dropout(x, mask) => {
                let data = g.data().iter().zip(mask).map(|(a, b)| a * b).collect();
                acc(*x, Tensor::new(g.shape(), data).unwrap());
            }
            Op::LogSoftmax(x) => {
                let y = &self.nodes[i].value;
                let n = y.cols();
                let mut dx = g.clone();
                for r in 0..y.rows() {
                    let gsum: f64 = g.row(r).iter().sum();
                    for c in 0..n {
                        dx.data_mut()[r * n + c] -= y.get(r, c).exp() * gsum;
                    }
                }
                acc(*x, dx);
            }
            Op::Nll(logp, targets) => {
                let lv = val(*logp);
                let mut d = Tensor::zeros(lv.shape());
                for (r, &t) in targets.iter().enumerate() {
                    d.set(r, t, -g.item());
                }
                acc(*logp, d);
            }
            Op::SparseMatMul(a, x) => acc(*x, a.transpose_matmul(g)),
        }
    }
}

fn column_sums(g: &Tensor, shape: &[usize]) -> Tensor {
    let n = g.cols();
    let mut out = vec![0.0; n];
    for r in 0..g.rows() {
        for (o, v) in out.iter_mut().zip(g.row(r)) {
            *o += v;
        }
    }
    Tensor::new(shape, out).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Init;

    fn store_with(name: &str, t: Tensor) -> ParamStore {
        let mut s = ParamStore::new(0);
        s.add_given(name, t.clone()).unwrap();
        s.set(name, t).unwrap();
        s
    }

    #[test]
    fn sum_of_weights_gives_ones() {
        let store = store_with(
            "w",
            Tensor::from_rows(&[vec![1.0, -2.0], vec![3.0, 0.5]]).unwrap(),
        );
        let mut tape = Tape::new();
        let w = tape.param(&store, "w").unwrap();
        let loss = tape.sum(w);
        let g = tape.backward(loss, &store).unwrap();
        assert_eq!(g.get("w").unwrap(), &Tensor::full(&[2, 2], 1.0));
    }

    #[test]
    fn squared_norm_matches_closed_form() {
        // loss = ||W x||², grad = 2 (W x) xᵀ
        let w = Tensor::from_rows(&[vec![0.5, -1.0, 2.0], vec![1.5, 0.25, -0.75]]).unwrap();
        let x = Tensor::from_rows(&[vec![1.0], vec![2.0], vec![-3.0]]).unwrap();
        let store = store_with("w", w.clone());
        let mut tape = Tape::new();
        let wv = tape.param(&store, "w").unwrap();
        let xv = tape.constant(x.clone());
        let y = tape.matmul(wv, xv).unwrap();
        let sq = tape.square(y);
        let loss = tape.sum(sq);
        let g = tape.backward(loss, &store).unwrap();

        let wx = w.matmul(&x).unwrap();
        let expected = wx.matmul(&x.transpose()).unwrap().map(|v| 2.0 * v);
        let got = g.get("w").unwrap();
        for (a, b) in got.data().iter().zip(expected.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn detached_branch_contributes_nothing() {
        let store = store_with("w", Tensor::full(&[1, 3], 2.0));
        let mut tape = Tape::new();
        let w = tape.param(&store, "w").unwrap();
        let d = tape.detach(w);
        let sq = tape.square(d);
        let loss = tape.sum(sq);
        let g = tape.backward(loss, &store).unwrap();
        assert_eq!(g.get("w").unwrap().max_abs(), 0.0);
    }

    #[test]
    fn unreached_params_get_zero_grads() {
        let mut store = ParamStore::new(1);
        store.add("a", &[2, 2], Init::GlorotUniform).unwrap();
        store.add("b", &[3, 1], Init::GlorotUniform).unwrap();
        let mut tape = Tape::new();
        let a = tape.param(&store, "a").unwrap();
        let loss = tape.sum(a);
        let g = tape.backward(loss, &store).unwrap();
        assert_eq!(g.get("b").unwrap(), &Tensor::zeros(&[3, 1]));
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let store = ParamStore::new(0);
        let mut tape = Tape::new();
        let c = tape.constant(Tensor::zeros(&[2, 2]));
        assert!(tape.backward(c, &store).is_err());
    }

    #[test]
    fn shape_error_reports_both_shapes() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[4, 3]));
        let msg = tape.add(a, b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[4, 3]"), "{msg}");
    }

    #[test]
    fn log_softmax_rows_sum_to_one() {
        let mut tape = Tape::new();
        let x = tape.constant(
            Tensor::from_rows(&[vec![3.0, -1.0, 0.2], vec![100.0, 99.0, -50.0]]).unwrap(),
        );
        let y = tape.log_softmax(x);
        let v = tape.value(y);
        for r in 0..2 {
            let s: f64 = v.row(r).iter().map(|l| l.exp()).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dropout_is_deterministic_and_scaled() {
        use rand::SeedableRng;
        let run = || {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
            let mut tape = Tape::new();
            let x = tape.constant(Tensor::full(&[4, 8], 1.0));
            let y = tape.dropout(x, 0.5, &mut rng);
            tape.value(y).clone()
        };
        let a = run();
        assert_eq!(a, run());
        assert!(a.data().iter().all(|&v| v == 0.0 || v == 2.0));
    }
}
