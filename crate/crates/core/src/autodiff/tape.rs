use alloc::vec;
use alloc::vec::Vec;

use super::tensor::Tensor;
use crate::error::{Error, Result};

const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Multiplier magnitude of a gradient reversal node. The backward pass scales
/// the upstream gradient by `-lambda`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GrlLambda(f64);

impl GrlLambda {
    pub fn new(lambda: f64) -> Result<Self> {
        if lambda.is_finite() && lambda >= 0.0 {
            Ok(Self(lambda))
        } else {
            Err(Error::Config(alloc::format!(
                "gradient reversal lambda must be finite and >= 0, got {lambda}"
            )))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl Default for GrlLambda {
    fn default() -> Self {
        Self(1.0)
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulTransB(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Tanh(Var),
    Softmax {
        x: Var,
        axis: usize,
    },
    LogSoftmax {
        x: Var,
        axis: usize,
    },
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    ConcatCols(Var, Var),
    SliceCols {
        x: Var,
        start: usize,
    },
    GradReversal {
        x: Var,
        lambda: f64,
    },
    Sum(Var),
    Reshape(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
    op: Op,
}

/// Flat record of one dynamic computation graph.
///
/// Nodes are appended in evaluation order, so every input precedes the node
/// that consumes it. [`Tape::backward`] walks the record once in reverse.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Splits `(outer, axis_len, inner)` around `axis` of `shape`.
fn axis_layout(shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(Error::InvalidAxis {
            axis,
            shape: shape.to_vec(),
        });
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

fn dims2(op: &'static str, t: &Tensor, other: &Tensor) -> Result<(usize, usize)> {
    t.dims2().ok_or_else(|| Error::Shape {
        op,
        left: t.shape().to_vec(),
        right: other.shape().to_vec(),
    })
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient buffer of `v` after [`Tape::backward`]; `None` when no
    /// gradient reached it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    pub fn contains_gradient_reversal(&self) -> bool {
        self.nodes.iter().any(|n| matches!(n.op, Op::GradReversal { .. }))
    }

    /// True when every value and gradient on the tape is finite.
    pub fn all_finite(&self) -> bool {
        self.nodes
            .iter()
            .all(|n| n.value.is_finite() && n.grad.as_ref().is_none_or(|g| g.iter().all(|v| v.is_finite())))
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k) = dims2("matmul", ta, tb)?;
        let (k2, n) = dims2("matmul", tb, ta)?;
        if k != k2 {
            return Err(Error::Shape {
                op: "matmul",
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let (ad, bd) = (ta.data(), tb.data());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let av = ad[i * k + p];
                let brow = &bd[p * n..(p + 1) * n];
                for (o, &bv) in row.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), rg))
    }

    /// `a · bᵀ` for `a: [m, k]`, `b: [n, k]`.
    pub fn matmul_transpose_b(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k) = dims2("matmul_transpose_b", ta, tb)?;
        let (n, k2) = dims2("matmul_transpose_b", tb, ta)?;
        if k != k2 {
            return Err(Error::Shape {
                op: "matmul_transpose_b",
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let (ad, bd) = (ta.data(), tb.data());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let arow = &ad[i * k..(i + 1) * k];
            for j in 0..n {
                let brow = &bd[j * k..(j + 1) * k];
                out[i * n + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
            }
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMulTransB(a, b), rg))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::Shape {
                op,
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let t = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Add(a, b), rg))
    }

    /// Adds a length-`n` row (shape `[n]` or `[1, n]`) to every row of `x: [m, n]`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (tx, tr) = (self.value(x), self.value(row));
        let (m, n) = dims2("add_row", tx, tr)?;
        if tr.len() != n {
            return Err(Error::Shape {
                op: "add_row",
                left: tx.shape().to_vec(),
                right: tr.shape().to_vec(),
            });
        }
        let rd = tr.data();
        let mut data = tx.data().to_vec();
        for i in 0..m {
            for (o, r) in data[i * n..(i + 1) * n].iter_mut().zip(rd) {
                *o += r;
            }
        }
        let rg = self.rg(x) || self.rg(row);
        Ok(self.push(Tensor::new(vec![m, n], data)?, Op::AddRow(x, row), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let t = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let tx = self.value(x);
        let data: Vec<f64> = tx.data().iter().map(|v| v * factor).collect();
        let t = Tensor::new(tx.shape().to_vec(), data).expect("shape preserved");
        let rg = self.rg(x);
        self.push(t, Op::Scale(x, factor), rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let data: Vec<f64> = tx.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
        let t = Tensor::new(tx.shape().to_vec(), data).expect("shape preserved");
        let rg = self.rg(x);
        self.push(t, Op::Relu(x), rg)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let data: Vec<f64> = tx.data().iter().map(|&v| libm::tanh(v)).collect();
        let t = Tensor::new(tx.shape().to_vec(), data).expect("shape preserved");
        let rg = self.rg(x);
        self.push(t, Op::Tanh(x), rg)
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.softmax_impl(x, axis, None)
    }

    /// Softmax along `axis` where `masked[j]` removes position `j` of that
    /// axis: it receives exactly zero weight and does not enter the
    /// normaliser.
    pub fn masked_softmax(&mut self, x: Var, axis: usize, masked: &[bool]) -> Result<Var> {
        self.softmax_impl(x, axis, Some(masked))
    }

    fn softmax_impl(&mut self, x: Var, axis: usize, masked: Option<&[bool]>) -> Result<Var> {
        let tx = self.value(x);
        let (outer, len, inner) = axis_layout(tx.shape(), axis)?;
        if let Some(m) = masked {
            if m.len() != len {
                return Err(Error::Shape {
                    op: "masked_softmax",
                    left: tx.shape().to_vec(),
                    right: vec![m.len()],
                });
            }
            if m.iter().all(|&b| b) {
                return Err(Error::AllMasked);
            }
        }
        let visible = |j: usize| masked.is_none_or(|m| !m[j]);
        let xd = tx.data();
        let mut out = vec![0.0; xd.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| o * len * inner + j * inner + i;
                let max = (0..len)
                    .filter(|&j| visible(j))
                    .map(|j| xd[at(j)])
                    .fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for j in (0..len).filter(|&j| visible(j)) {
                    let e = libm::exp(xd[at(j)] - max);
                    out[at(j)] = e;
                    total += e;
                }
                for j in (0..len).filter(|&j| visible(j)) {
                    out[at(j)] /= total;
                }
            }
        }
        let t = Tensor::new(tx.shape().to_vec(), out)?;
        let rg = self.rg(x);
        Ok(self.push(t, Op::Softmax { x, axis }, rg))
    }

    pub fn log_softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let tx = self.value(x);
        let (outer, len, inner) = axis_layout(tx.shape(), axis)?;
        let xd = tx.data();
        let mut out = vec![0.0; xd.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| o * len * inner + j * inner + i;
                let max = (0..len).map(|j| xd[at(j)]).fold(f64::NEG_INFINITY, f64::max);
                let total: f64 = (0..len).map(|j| libm::exp(xd[at(j)] - max)).sum();
                let lse = max + libm::log(total);
                for j in 0..len {
                    out[at(j)] = xd[at(j)] - lse;
                }
            }
        }
        let t = Tensor::new(tx.shape().to_vec(), out)?;
        let rg = self.rg(x);
        Ok(self.push(t, Op::LogSoftmax { x, axis }, rg))
    }

    /// Normalises every row of `x: [m, n]` to zero mean and unit variance,
    /// then applies the learned `gamma` scale and `beta` shift (length `n`).
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let (tx, tg, tb) = (self.value(x), self.value(gamma), self.value(beta));
        let (m, n) = dims2("layer_norm", tx, tg)?;
        if tg.len() != n || tb.len() != n {
            return Err(Error::Shape {
                op: "layer_norm",
                left: tx.shape().to_vec(),
                right: tg.shape().to_vec(),
            });
        }
        let xd = tx.data();
        let mut xhat = vec![0.0; m * n];
        let mut inv_std = vec![0.0; m];
        let mut out = vec![0.0; m * n];
        for r in 0..m {
            let row = &xd[r * n..(r + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let is = 1.0 / libm::sqrt(var + LAYER_NORM_EPS);
            inv_std[r] = is;
            for c in 0..n {
                let h = (row[c] - mean) * is;
                xhat[r * n + c] = h;
                out[r * n + c] = h * tg.data()[c] + tb.data()[c];
            }
        }
        let t = Tensor::new(vec![m, n], out)?;
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        Ok(self.push(
            t,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            rg,
        ))
    }

    /// `[m, p] ⊕ [m, q] → [m, p + q]`.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, p) = dims2("concat_cols", ta, tb)?;
        let (m2, q) = dims2("concat_cols", tb, ta)?;
        if m != m2 {
            return Err(Error::Shape {
                op: "concat_cols",
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let mut data = Vec::with_capacity(m * (p + q));
        for r in 0..m {
            data.extend_from_slice(&ta.data()[r * p..(r + 1) * p]);
            data.extend_from_slice(&tb.data()[r * q..(r + 1) * q]);
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(vec![m, p + q], data)?, Op::ConcatCols(a, b), rg))
    }

    /// Columns `start..end` of `x: [m, n]`.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let tx = self.value(x);
        let (m, n) = dims2("slice_cols", tx, tx)?;
        if start >= end || end > n {
            return Err(Error::Shape {
                op: "slice_cols",
                left: tx.shape().to_vec(),
                right: vec![start, end],
            });
        }
        let w = end - start;
        let mut data = Vec::with_capacity(m * w);
        for r in 0..m {
            data.extend_from_slice(&tx.data()[r * n + start..r * n + end]);
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(vec![m, w], data)?, Op::SliceCols { x, start }, rg))
    }

    /// Identity on the forward pass; the backward pass multiplies the upstream
    /// gradient by `-lambda`.
    pub fn gradient_reversal(&mut self, x: Var, lambda: GrlLambda) -> Var {
        let t = self.value(x).clone();
        let rg = self.rg(x);
        self.push(
            t,
            Op::GradReversal {
                x,
                lambda: lambda.get(),
            },
            rg,
        )
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len() as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let t = self.value(x).reshaped(shape)?;
        let rg = self.rg(x);
        Ok(self.push(t, Op::Reshape(x), rg))
    }

    /// Fills the gradient buffer of every node that `loss` depends on with
    /// `d(loss)/d(node)`. Gradients from repeated uses of a value accumulate.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.value(loss).shape();
        if self.value(loss).len() != 1 {
            return Err(Error::NonScalarLoss(shape.to_vec()));
        }
        self.zero_grad();
        if !self.rg(loss) {
            return Ok(());
        }
        self.nodes[loss.0].grad = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let (before, rest) = self.nodes.split_at_mut(i);
            let node = &mut rest[0];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = node.grad.as_deref() else {
                continue;
            };
            propagate(before, &node.op, &node.value, g);
        }
        Ok(())
    }
}

/// Adds `f`'s contribution into the gradient buffer of `v`, allocating it on
/// first touch. Inputs that do not require gradients are skipped.
fn accumulate(nodes: &mut [Node], v: Var, f: impl FnOnce(&[f64], &mut [f64])) {
    let node = &mut nodes[v.0];
    if !node.requires_grad {
        return;
    }
    let n = node.value.len();
    let grad = node.grad.get_or_insert_with(|| vec![0.0; n]);
    f(node.value.data(), grad);
}

fn value(nodes: &[Node], v: Var) -> &Tensor {
    &nodes[v.0].value
}

fn propagate(nodes: &mut [Node], op: &Op, out: &Tensor, g: &[f64]) {
    match *op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (m, k) = value(nodes, a).dims2().expect("rank 2");
            let n = out.shape()[1];
            if nodes[a.0].requires_grad {
                let bd = value(nodes, b).data().to_vec();
                accumulate(nodes, a, |_, ga| {
                    for i in 0..m {
                        for p in 0..k {
                            let brow = &bd[p * n..(p + 1) * n];
                            let grow = &g[i * n..(i + 1) * n];
                            ga[i * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                });
            }
            if nodes[b.0].requires_grad {
                let ad = value(nodes, a).data().to_vec();
                accumulate(nodes, b, |_, gb| {
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let av = ad[i * k + p];
                            for (o, gv) in gb[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                *o += av * gv;
                            }
                        }
                    }
                });
            }
        }
        Op::MatMulTransB(a, b) => {
            let (m, k) = value(nodes, a).dims2().expect("rank 2");
            let n = out.shape()[1];
            if nodes[a.0].requires_grad {
                let bd = value(nodes, b).data().to_vec();
                accumulate(nodes, a, |_, ga| {
                    for i in 0..m {
                        for j in 0..n {
                            let gv = g[i * n + j];
                            for p in 0..k {
                                ga[i * k + p] += gv * bd[j * k + p];
                            }
                        }
                    }
                });
            }
            if nodes[b.0].requires_grad {
                let ad = value(nodes, a).data().to_vec();
                accumulate(nodes, b, |_, gb| {
                    for i in 0..m {
                        for j in 0..n {
                            let gv = g[i * n + j];
                            for p in 0..k {
                                gb[j * k + p] += gv * ad[i * k + p];
                            }
                        }
                    }
                });
            }
        }
        Op::Add(a, b) => {
            for v in [a, b] {
                accumulate(nodes, v, |_, gv| {
                    for (o, x) in gv.iter_mut().zip(g) {
                        *o += x;
                    }
                });
            }
        }
        Op::AddRow(x, row) => {
            accumulate(nodes, x, |_, gx| {
                for (o, v) in gx.iter_mut().zip(g) {
                    *o += v;
                }
            });
            let n = value(nodes, row).len();
            accumulate(nodes, row, |_, gr| {
                for chunk in g.chunks(n) {
                    for (o, v) in gr.iter_mut().zip(chunk) {
                        *o += v;
                    }
                }
            });
        }
        Op::Mul(a, b) => {
            if nodes[a.0].requires_grad {
                let bd = value(nodes, b).data().to_vec();
                accumulate(nodes, a, |_, ga| {
                    for ((o, gv), bv) in ga.iter_mut().zip(g).zip(&bd) {
                        *o += gv * bv;
                    }
                });
            }
            if nodes[b.0].requires_grad {
                let ad = value(nodes, a).data().to_vec();
                accumulate(nodes, b, |_, gb| {
                    for ((o, gv), av) in gb.iter_mut().zip(g).zip(&ad) {
                        *o += gv * av;
                    }
                });
            }
        }
        Op::Scale(x, factor) => accumulate(nodes, x, |_, gx| {
            for (o, v) in gx.iter_mut().zip(g) {
                *o += factor * v;
            }
        }),
        Op::Relu(x) => accumulate(nodes, x, |xv, gx| {
            for ((o, v), &xi) in gx.iter_mut().zip(g).zip(xv) {
                if xi > 0.0 {
                    *o += v;
                }
            }
        }),
        Op::Tanh(x) => accumulate(nodes, x, |_, gx| {
            for ((o, v), y) in gx.iter_mut().zip(g).zip(out.data()) {
                *o += v * (1.0 - y * y);
            }
        }),
        Op::Softmax { x, axis } => {
            let (outer, len, inner) = axis_layout(out.shape(), axis).expect("checked on forward");
            let y = out.data();
            accumulate(nodes, x, |_, gx| {
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |j: usize| o * len * inner + j * inner + i;
                        let dot: f64 = (0..len).map(|j| g[at(j)] * y[at(j)]).sum();
                        for j in 0..len {
                            gx[at(j)] += y[at(j)] * (g[at(j)] - dot);
                        }
                    }
                }
            });
        }
        Op::LogSoftmax { x, axis } => {
            let (outer, len, inner) = axis_layout(out.shape(), axis).expect("checked on forward");
            let y = out.data();
            accumulate(nodes, x, |_, gx| {
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |j: usize| o * len * inner + j * inner + i;
                        let total: f64 = (0..len).map(|j| g[at(j)]).sum();
                        for j in 0..len {
                            gx[at(j)] += g[at(j)] - libm::exp(y[at(j)]) * total;
                        }
                    }
                }
            });
        }
        Op::LayerNorm {
            x,
            gamma,
            beta,
            ref xhat,
            ref inv_std,
        } => {
            let (m, n) = out.dims2().expect("rank 2");
            accumulate(nodes, gamma, |_, gg| {
                for r in 0..m {
                    for c in 0..n {
                        gg[c] += g[r * n + c] * xhat[r * n + c];
                    }
                }
            });
            accumulate(nodes, beta, |_, gb| {
                for r in 0..m {
                    for c in 0..n {
                        gb[c] += g[r * n + c];
                    }
                }
            });
            if nodes[x.0].requires_grad {
                let gam = value(nodes, gamma).data().to_vec();
                accumulate(nodes, x, |_, gx| {
                    let nf = n as f64;
                    for (r, inv) in inv_std.iter().enumerate() {
                        let off = r * n;
                        let dxhat: Vec<f64> = (0..n).map(|c| g[off + c] * gam[c]).collect();
                        let s1: f64 = dxhat.iter().sum();
                        let s2: f64 = (0..n).map(|c| dxhat[c] * xhat[off + c]).sum();
                        for c in 0..n {
                            gx[off + c] += inv / nf * (nf * dxhat[c] - s1 - xhat[off + c] * s2);
                        }
                    }
                });
            }
        }
        Op::ConcatCols(a, b) => {
            let (m, w) = out.dims2().expect("rank 2");
            let p = value(nodes, a).shape()[1];
            accumulate(nodes, a, |_, ga| {
                for r in 0..m {
                    for c in 0..p {
                        ga[r * p + c] += g[r * w + c];
                    }
                }
            });
            let q = w - p;
            accumulate(nodes, b, |_, gb| {
                for r in 0..m {
                    for c in 0..q {
                        gb[r * q + c] += g[r * w + p + c];
                    }
                }
            });
        }
        Op::SliceCols { x, start } => {
            let (m, w) = out.dims2().expect("rank 2");
            let n = value(nodes, x).shape()[1];
            accumulate(nodes, x, |_, gx| {
                for r in 0..m {
                    for c in 0..w {
                        gx[r * n + start + c] += g[r * w + c];
                    }
                }
            });
        }
        Op::GradReversal { x, lambda } => accumulate(nodes, x, |_, gx| {
            for (o, v) in gx.iter_mut().zip(g) {
                *o += -lambda * v;
            }
        }),
        Op::Sum(x) => accumulate(nodes, x, |_, gx| {
            for o in gx.iter_mut() {
                *o += g[0];
            }
        }),
        Op::Reshape(x) => accumulate(nodes, x, |_, gx| {
            for (o, v) in gx.iter_mut().zip(g) {
                *o += v;
            }
        }),
    }
}
