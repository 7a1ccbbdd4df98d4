//! Single-order reverse-mode tape.
//!
//! Every operation evaluates eagerly and records how to propagate an
//! upstream gradient to its inputs. [`Tape::backward`] consumes the tape,
//! so gradients are plain tensors and can never be differentiated again.

use std::borrow::Cow;
use std::collections::HashMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use super::tensor::gemm;
use super::{AutodiffError, GradientMap, ParamStore, Tensor};

/// Probabilities below this are clamped before taking the logarithm.
pub const LOG_FLOOR: f64 = 1e-12;

const LAYER_NORM_EPS: f64 = 1e-12;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Constant,
    Param,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    Softmax(Var),
    Log(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        normalized: Tensor,
        inv_std: Vec<f64>,
    },
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    Concat(Vec<Var>),
    Pick {
        x: Var,
        at: Vec<(usize, usize)>,
    },
    Sum(Var),
    Mean(Var),
    Max {
        x: Var,
        argmax: usize,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Constant => "constant",
            Op::Param => "param",
            Op::MatMul(..) => "matmul",
            Op::MatMulNt(..) => "matmul_nt",
            Op::Add(..) => "add",
            Op::AddRow(..) => "add_row",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Gelu(_) => "gelu",
            Op::Softmax(_) => "softmax",
            Op::Log(_) => "log",
            Op::LayerNorm { .. } => "layer_norm",
            Op::Gather { .. } => "gather",
            Op::SliceCols { .. } => "slice_cols",
            Op::ConcatCols(_) => "concat_cols",
            Op::Concat(_) => "concat",
            Op::Pick { .. } => "pick",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::Max { .. } => "max",
        }
    }
}

struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Records a forward computation for one backward pass.
#[derive(Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
    params: HashMap<String, Var>,
    log_floor_hits: usize,
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
    cdf + x * pdf
}

/// Row-wise softmax of a matrix (or a vector viewed as one row).
pub fn softmax_rows(x: &Tensor) -> Tensor {
    let cols = x.cols();
    let mut out = x.data().to_vec();
    for row in out.chunks_mut(cols.max(1)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    Tensor::new(x.shape().to_vec(), out)
}

impl<'a> Tape<'a> {
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

    /// How many probabilities were clamped to [`LOG_FLOOR`] so far.
    pub fn log_floor_hits(&self) -> usize {
        self.log_floor_hits
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.push_cow(Cow::Owned(value), op, requires_grad)
    }

    fn push_cow(&mut self, value: Cow<'a, Tensor>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant, false)
    }

    /// Binds a named parameter from `store`; repeated calls return the same node.
    ///
    /// Frozen parameters enter the tape as constants.
    /// The tensor is borrowed from `store`, not copied.
    pub fn param(&mut self, store: &'a ParamStore, name: &str) -> Result<Var, AutodiffError> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let tensor = store
            .get(name)
            .ok_or_else(|| AutodiffError::UnknownParameter(name.to_string()))?;
        let trainable = !store.is_frozen(name);
        let v = self.push_cow(Cow::Borrowed(tensor), Op::Param, trainable);
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (m, k, n) = (av.rows(), av.cols(), bv.cols());
        assert_eq!(k, bv.rows(), "matmul inner dimensions differ");
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, av.data(), false, bv.data(), false, &mut out, false);
        let rg = self.needs(&[a, b]);
        self.push(Tensor::matrix(m, n, out), Op::MatMul(a, b), rg)
    }

    /// `a * b^T` for `a: [m,k]`, `b: [n,k]`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (m, k, n) = (av.rows(), av.cols(), bv.rows());
        assert_eq!(k, bv.cols(), "matmul_nt inner dimensions differ");
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, av.data(), false, bv.data(), true, &mut out, false);
        let rg = self.needs(&[a, b]);
        self.push(Tensor::matrix(m, n, out), Op::MatMulNt(a, b), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(av.shape(), bv.shape(), "add shape mismatch");
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x + y).collect();
        let value = Tensor::new(av.shape().to_vec(), data);
        let rg = self.needs(&[a, b]);
        self.push(value, Op::Add(a, b), rg)
    }

    /// Adds vector `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let cols = av.cols();
        assert_eq!(bv.len(), cols, "add_row width mismatch");
        let mut data = av.data().to_vec();
        for row in data.chunks_mut(cols) {
            for (x, y) in row.iter_mut().zip(bv.data()) {
                *x += y;
            }
        }
        let value = Tensor::new(av.shape().to_vec(), data);
        let rg = self.needs(&[a, b]);
        self.push(value, Op::AddRow(a, b), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(av.shape(), bv.shape(), "mul shape mismatch");
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
        let value = Tensor::new(av.shape().to_vec(), data);
        let rg = self.needs(&[a, b]);
        self.push(value, Op::Mul(a, b), rg)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.nodes[a.0].value.scale(factor);
        let rg = self.needs(&[a]);
        self.push(value, Op::Scale(a, factor), rg)
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.map(gelu);
        let rg = self.needs(&[a]);
        self.push(value, Op::Gelu(a), rg)
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let value = softmax_rows(&self.nodes[a.0].value);
        let rg = self.needs(&[a]);
        self.push(value, Op::Softmax(a), rg)
    }

    /// Natural log with inputs clamped from below at [`LOG_FLOOR`].
    pub fn log(&mut self, a: Var) -> Var {
        let src = &self.nodes[a.0].value;
        let hits = src.data().iter().filter(|&&v| v < LOG_FLOOR).count();
        let value = src.map(|v| v.max(LOG_FLOOR).ln());
        self.log_floor_hits += hits;
        let rg = self.needs(&[a]);
        self.push(value, Op::Log(a), rg)
    }

    /// Row-wise layer normalization with elementwise affine parameters.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xv = &self.nodes[x.0].value;
        let (gv, bv) = (&self.nodes[gamma.0].value, &self.nodes[beta.0].value);
        let cols = xv.cols();
        assert_eq!(gv.len(), cols, "layer_norm gamma width");
        assert_eq!(bv.len(), cols, "layer_norm beta width");
        let mut normalized = Vec::with_capacity(xv.len());
        let mut inv_std = Vec::with_capacity(xv.rows());
        let mut out = Vec::with_capacity(xv.len());
        for row in xv.data().chunks(cols) {
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std.push(inv);
            for (j, v) in row.iter().enumerate() {
                let xhat = (v - mean) * inv;
                normalized.push(xhat);
                out.push(xhat * gv.data()[j] + bv.data()[j]);
            }
        }
        let shape = xv.shape().to_vec();
        let rg = self.needs(&[x, gamma, beta]);
        self.push(
            Tensor::new(shape.clone(), out),
            Op::LayerNorm {
                x,
                gamma,
                beta,
                normalized: Tensor::new(shape, normalized),
                inv_std,
            },
            rg,
        )
    }

    /// Row lookup: output row `i` is `table[ids[i]]`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Var {
        let tv = &self.nodes[table.0].value;
        let cols = tv.cols();
        let mut out = Vec::with_capacity(ids.len() * cols);
        for &id in ids {
            assert!(id < tv.rows(), "gather index {id} out of range");
            out.extend_from_slice(tv.row(id));
        }
        let rg = self.needs(&[table]);
        self.push(
            Tensor::matrix(ids.len(), cols, out),
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            rg,
        )
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, width: usize) -> Var {
        let xv = &self.nodes[x.0].value;
        let (rows, cols) = (xv.rows(), xv.cols());
        assert!(start + width <= cols, "slice_cols out of range");
        let mut out = Vec::with_capacity(rows * width);
        for r in 0..rows {
            out.extend_from_slice(&xv.row(r)[start..start + width]);
        }
        let rg = self.needs(&[x]);
        self.push(
            Tensor::matrix(rows, width, out),
            Op::SliceCols { x, start },
            rg,
        )
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols of nothing");
        let rows = self.nodes[parts[0].0].value.rows();
        let total: usize = parts.iter().map(|p| self.nodes[p.0].value.cols()).sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for p in parts {
                let pv = &self.nodes[p.0].value;
                assert_eq!(pv.rows(), rows, "concat_cols row mismatch");
                out.extend_from_slice(pv.row(r));
            }
        }
        let rg = self.needs(parts);
        self.push(
            Tensor::matrix(rows, total, out),
            Op::ConcatCols(parts.to_vec()),
            rg,
        )
    }

    /// Flattens and joins tensors into one vector.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let mut out = Vec::new();
        for p in parts {
            out.extend_from_slice(self.nodes[p.0].value.data());
        }
        let rg = self.needs(parts);
        self.push(Tensor::vector(out), Op::Concat(parts.to_vec()), rg)
    }

    /// Vector of `x[row, col]` for each requested coordinate.
    pub fn pick(&mut self, x: Var, at: &[(usize, usize)]) -> Var {
        let xv = &self.nodes[x.0].value;
        let cols = xv.cols();
        let out = at.iter().map(|&(r, c)| xv.data()[r * cols + c]).collect();
        let rg = self.needs(&[x]);
        self.push(Tensor::vector(out), Op::Pick { x, at: at.to_vec() }, rg)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.nodes[x.0].value.data().iter().sum();
        let rg = self.needs(&[x]);
        self.push(Tensor::scalar(total), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let xv = &self.nodes[x.0].value;
        assert!(!xv.is_empty(), "mean of empty tensor");
        let m = xv.data().iter().sum::<f64>() / xv.len() as f64;
        let rg = self.needs(&[x]);
        self.push(Tensor::scalar(m), Op::Mean(x), rg)
    }

    /// Maximum element. The subgradient goes to the first maximal element.
    pub fn max(&mut self, x: Var) -> Var {
        let xv = &self.nodes[x.0].value;
        assert!(!xv.is_empty(), "max of empty tensor");
        let mut argmax = 0;
        for (i, &v) in xv.data().iter().enumerate() {
            if v > xv.data()[argmax] {
                argmax = i;
            }
        }
        let m = xv.data()[argmax];
        let rg = self.needs(&[x]);
        self.push(Tensor::scalar(m), Op::Max { x, argmax }, rg)
    }

    /// Reverse pass from a scalar `loss`.
    ///
    /// Returns one entry for every trainable parameter bound on this tape,
    /// zero-filled when `loss` does not depend on it.
    pub fn backward(self, loss: Var) -> Result<GradientMap, AutodiffError> {
        let lv = &self.nodes[loss.0].value;
        if lv.len() != 1 {
            return Err(AutodiffError::NonScalarLoss {
                shape: lv.shape().to_vec(),
            });
        }
        if let Some((i, node)) = self
            .nodes
            .iter()
            .enumerate()
            .take(loss.0 + 1)
            .find(|(_, n)| !n.value.all_finite())
        {
            return Err(AutodiffError::NonFinite {
                node: i,
                op: node.op.name(),
                pass: "forward",
            });
        }

        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if !g.all_finite() {
                return Err(AutodiffError::NonFinite {
                    node: i,
                    op: node.op.name(),
                    pass: "backward",
                });
            }
            self.propagate(&node.op, node.value.as_ref(), &g, &mut grads);
            // Parameters keep their gradient for collection below.
            if matches!(node.op, Op::Param) {
                grads[i] = Some(g);
            }
        }

        let mut out = GradientMap::new();
        for (name, var) in &self.params {
            let node = &self.nodes[var.0];
            if !node.requires_grad {
                continue;
            }
            let g = grads[var.0]
                .take()
                .unwrap_or_else(|| Tensor::zeros(node.value.shape()));
            out.insert(name.clone(), g);
        }
        Ok(out)
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    /// Adds `g` into the gradient slot of `v` without allocating a new tensor
    /// when the slot already exists.
    fn accumulate_with(
        &self,
        grads: &mut [Option<Tensor>],
        v: Var,
        fill: impl FnOnce(&mut [f64]),
    ) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        let slot = &mut grads[v.0];
        if slot.is_none() {
            *slot = Some(Tensor::zeros(self.nodes[v.0].value.shape()));
        }
        fill(slot.as_mut().unwrap().data_mut());
    }

    fn propagate(&self, op: &Op, out: &Tensor, g: &Tensor, grads: &mut [Option<Tensor>]) {
        match op {
            Op::Constant | Op::Param => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                // dA = G B^T, dB = A^T G
                self.accumulate_with(grads, *a, |da| {
                    gemm(m, n, k, g.data(), false, bv.data(), true, da, true)
                });
                self.accumulate_with(grads, *b, |db| {
                    gemm(k, m, n, av.data(), true, g.data(), false, db, true)
                });
            }
            Op::MatMulNt(a, b) => {
                let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                let (m, k, n) = (av.rows(), av.cols(), bv.rows());
                // C = A B^T: dA = G B, dB = G^T A
                self.accumulate_with(grads, *a, |da| {
                    gemm(m, n, k, g.data(), false, bv.data(), false, da, true)
                });
                self.accumulate_with(grads, *b, |db| {
                    gemm(n, m, k, g.data(), true, av.data(), false, db, true)
                });
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::AddRow(a, b) => {
                self.accumulate(grads, *a, g.clone());
                let cols = g.cols();
                self.accumulate_with(grads, *b, |db| {
                    for row in g.data().chunks(cols) {
                        for (d, v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                });
            }
            Op::Mul(a, b) => {
                let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                self.accumulate_with(grads, *a, |da| {
                    for ((d, gv), y) in da.iter_mut().zip(g.data()).zip(bv.data()) {
                        *d += gv * y;
                    }
                });
                self.accumulate_with(grads, *b, |db| {
                    for ((d, gv), x) in db.iter_mut().zip(g.data()).zip(av.data()) {
                        *d += gv * x;
                    }
                });
            }
            Op::Scale(a, factor) => {
                self.accumulate(grads, *a, g.scale(*factor));
            }
            Op::Gelu(a) => {
                let av = &self.nodes[a.0].value;
                self.accumulate_with(grads, *a, |da| {
                    for ((d, gv), x) in da.iter_mut().zip(g.data()).zip(av.data()) {
                        *d += gv * gelu_grad(*x);
                    }
                });
            }
            Op::Softmax(a) => {
                let cols = out.cols();
                self.accumulate_with(grads, *a, |da| {
                    for ((drow, grow), yrow) in da
                        .chunks_mut(cols)
                        .zip(g.data().chunks(cols))
                        .zip(out.data().chunks(cols))
                    {
                        let dot: f64 = grow.iter().zip(yrow).map(|(gv, y)| gv * y).sum();
                        for ((d, gv), y) in drow.iter_mut().zip(grow).zip(yrow) {
                            *d += y * (gv - dot);
                        }
                    }
                });
            }
            Op::Log(a) => {
                let av = &self.nodes[a.0].value;
                self.accumulate_with(grads, *a, |da| {
                    for ((d, gv), x) in da.iter_mut().zip(g.data()).zip(av.data()) {
                        if *x >= LOG_FLOOR {
                            *d += gv / x;
                        }
                    }
                });
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                normalized,
                inv_std,
            } => {
                let cols = out.cols();
                let gamma_v = &self.nodes[gamma.0].value;
                self.accumulate_with(grads, *gamma, |dg| {
                    for (grow, nrow) in g.data().chunks(cols).zip(normalized.data().chunks(cols)) {
                        for ((d, gv), xh) in dg.iter_mut().zip(grow).zip(nrow) {
                            *d += gv * xh;
                        }
                    }
                });
                self.accumulate_with(grads, *beta, |db| {
                    for grow in g.data().chunks(cols) {
                        for (d, gv) in db.iter_mut().zip(grow) {
                            *d += gv;
                        }
                    }
                });
                self.accumulate_with(grads, *x, |dx| {
                    let n = cols as f64;
                    for (r, ((drow, grow), nrow)) in dx
                        .chunks_mut(cols)
                        .zip(g.data().chunks(cols))
                        .zip(normalized.data().chunks(cols))
                        .enumerate()
                    {
                        let mut sum_dxhat = 0.0;
                        let mut sum_dxhat_xhat = 0.0;
                        for j in 0..cols {
                            let dxhat = grow[j] * gamma_v.data()[j];
                            sum_dxhat += dxhat;
                            sum_dxhat_xhat += dxhat * nrow[j];
                        }
                        let scale = inv_std[r] / n;
                        for j in 0..cols {
                            let dxhat = grow[j] * gamma_v.data()[j];
                            drow[j] += scale * (n * dxhat - sum_dxhat - nrow[j] * sum_dxhat_xhat);
                        }
                    }
                });
            }
            Op::Gather { table, ids } => {
                let cols = out.cols();
                self.accumulate_with(grads, *table, |dt| {
                    for (i, &id) in ids.iter().enumerate() {
                        let grow = &g.data()[i * cols..(i + 1) * cols];
                        for (d, gv) in dt[id * cols..(id + 1) * cols].iter_mut().zip(grow) {
                            *d += gv;
                        }
                    }
                });
            }
            Op::SliceCols { x, start } => {
                let width = out.cols();
                let cols = self.nodes[x.0].value.cols();
                self.accumulate_with(grads, *x, |dx| {
                    for (r, grow) in g.data().chunks(width).enumerate() {
                        let base = r * cols + start;
                        for (d, gv) in dx[base..base + width].iter_mut().zip(grow) {
                            *d += gv;
                        }
                    }
                });
            }
            Op::ConcatCols(parts) => {
                let total = out.cols();
                let mut offset = 0;
                for p in parts {
                    let width = self.nodes[p.0].value.cols();
                    self.accumulate_with(grads, *p, |dp| {
                        for (r, drow) in dp.chunks_mut(width).enumerate() {
                            let src = &g.data()[r * total + offset..r * total + offset + width];
                            for (d, gv) in drow.iter_mut().zip(src) {
                                *d += gv;
                            }
                        }
                    });
                    offset += width;
                }
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = self.nodes[p.0].value.len();
                    self.accumulate_with(grads, *p, |dp| {
                        for (d, gv) in dp.iter_mut().zip(&g.data()[offset..offset + len]) {
                            *d += gv;
                        }
                    });
                    offset += len;
                }
            }
            Op::Pick { x, at } => {
                let cols = self.nodes[x.0].value.cols();
                self.accumulate_with(grads, *x, |dx| {
                    for (&(r, c), gv) in at.iter().zip(g.data()) {
                        dx[r * cols + c] += gv;
                    }
                });
            }
            Op::Sum(x) => {
                let gv = g.item();
                self.accumulate_with(grads, *x, |dx| dx.iter_mut().for_each(|d| *d += gv));
            }
            Op::Mean(x) => {
                let n = self.nodes[x.0].value.len() as f64;
                let gv = g.item() / n;
                self.accumulate_with(grads, *x, |dx| dx.iter_mut().for_each(|d| *d += gv));
            }
            Op::Max { x, argmax } => {
                let gv = g.item();
                self.accumulate_with(grads, *x, |dx| dx[*argmax] += gv);
            }
        }
    }
}
