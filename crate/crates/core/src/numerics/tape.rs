//! Reverse-mode differentiation over dense rank-2 tensors.
//!
//! A [`Tape`] records every operation of one forward pass. [`Tape::backward`]
//! replays the records in reverse and returns [`Gradients`] for every node
//! that depends on a differentiable leaf or a registered parameter. Tapes are
//! single-use and single-threaded; independent tapes may run on separate
//! threads against the same frozen [`ParamStore`].

use std::collections::HashMap;

use super::{ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    Scale(usize, f64),
    /// Elementwise map with the local derivative stored per entry.
    Map(usize, Vec<f64>),
    Softmax(usize),
    LayerNorm {
        x: usize,
        gain: usize,
        bias: usize,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    Transpose(usize),
    SliceCols {
        x: usize,
        start: usize,
    },
    ConcatCols(Vec<usize>),
    ConcatRows(Vec<usize>),
    GatherRows {
        x: usize,
        rows: Vec<usize>,
    },
    SumAll(usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Recording of one forward computation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, usize>,
    validity_checks: bool,
}

fn dims_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Dimension {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

fn mat(rows: usize, cols: usize, data: Vec<f64>) -> Tensor {
    Tensor::matrix(rows, cols, data).expect("shape computed from operands")
}

fn matmul_kernel(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
    out
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Enables a NaN/overflow sweep after every recorded operation.
    /// `-inf` stays legal since it is the masking sentinel.
    pub fn with_validity_checks(mut self, on: bool) -> Self {
        self.validity_checks = on;
        self
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

    /// Scalar value of a `1×1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Result<Var> {
        if self.validity_checks
            && value
                .data()
                .iter()
                .any(|v| v.is_nan() || *v == f64::INFINITY)
        {
            return Err(Error::NonFinite(op_name(&op)));
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, i: usize) -> bool {
        self.nodes[i].requires_grad
    }

    /// Differentiable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        let value = as_matrix(value);
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Input that never receives a gradient (masks, positional tables).
    pub fn constant(&mut self, value: Tensor) -> Var {
        let value = as_matrix(value);
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Binds a stored parameter to this tape; repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&node) = self.params.get(&id) {
            return Var(node);
        }
        let value = as_matrix(store.value(id).clone());
        self.nodes.push(Node {
            value,
            op: Op::Param,
            requires_grad: true,
        });
        let node = self.nodes.len() - 1;
        self.params.insert(id, node);
        Var(node)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (m, k) = av.dims2();
        let (k2, n) = bv.dims2();
        if k != k2 {
            return Err(dims_err("matmul", av, bv));
        }
        let out = matmul_kernel(av.data(), bv.data(), m, k, n);
        let rg = self.rg(a.0) || self.rg(b.0);
        self.push(mat(m, n, out), Op::MatMul(a.0, b.0), rg)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.dims2() != bv.dims2() {
            return Err(dims_err(op, av, bv));
        }
        Ok(())
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (r, c) = av.dims2();
        mat(
            r,
            c,
            av.data()
                .iter()
                .zip(bv.data())
                .map(|(x, y)| f(*x, *y))
                .collect(),
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.zip_with(a, b, |x, y| x + y);
        let rg = self.rg(a.0) || self.rg(b.0);
        self.push(out, Op::Add(a.0, b.0), rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.zip_with(a, b, |x, y| x - y);
        let rg = self.rg(a.0) || self.rg(b.0);
        self.push(out, Op::Sub(a.0, b.0), rg)
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.zip_with(a, b, |x, y| x * y);
        let rg = self.rg(a.0) || self.rg(b.0);
        self.push(out, Op::Mul(a.0, b.0), rg)
    }

    /// Adds a `1×n` row to every row of an `m×n` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (av, rv) = (&self.nodes[a.0].value, &self.nodes[row.0].value);
        let (m, n) = av.dims2();
        if rv.dims2() != (1, n) {
            return Err(dims_err("add_row", av, rv));
        }
        let mut out = av.data().to_vec();
        for chunk in out.chunks_mut(n.max(1)) {
            for (o, r) in chunk.iter_mut().zip(rv.data()) {
                *o += r;
            }
        }
        let rg = self.rg(a.0) || self.rg(row.0);
        self.push(mat(m, n, out), Op::AddRow(a.0, row.0), rg)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let av = &self.nodes[a.0].value;
        let (r, c) = av.dims2();
        let out = mat(r, c, av.data().iter().map(|x| x * factor).collect());
        let rg = self.rg(a.0);
        self.push(out, Op::Scale(a.0, factor), rg)
    }

    /// Elementwise map; `f` returns `(value, derivative)` for each entry.
    pub fn map(&mut self, a: Var, f: impl Fn(usize, f64) -> (f64, f64)) -> Result<Var> {
        let av = &self.nodes[a.0].value;
        let (r, c) = av.dims2();
        let (vals, derivs): (Vec<f64>, Vec<f64>) =
            av.data().iter().enumerate().map(|(i, &x)| f(i, x)).unzip();
        let rg = self.rg(a.0);
        self.push(mat(r, c, vals), Op::Map(a.0, derivs), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.map(a, |_, x| {
            let s = sigmoid(x);
            (s, s * (1.0 - s))
        })
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.map(a, |_, x| {
            let t = x.tanh();
            (t, 1.0 - t * t)
        })
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.map(a, |_, x| if x > 0.0 { (x, 1.0) } else { (0.0, 0.0) })
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        self.map(a, |_, x| (x.abs(), x.signum() * (x != 0.0) as u8 as f64))
    }

    /// Row-wise softmax, stabilized by max subtraction. `-inf` entries map to
    /// exactly zero; a row made only of `-inf` is an error.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let av = &self.nodes[a.0].value;
        let (r, c) = av.dims2();
        let out = softmax_rows(av.data(), r, c)?;
        let rg = self.rg(a.0);
        self.push(mat(r, c, out), Op::Softmax(a.0), rg)
    }

    /// Row-wise layer normalization with population variance and `eps`
    /// inside the square root; `gain` and `bias` are `1×d` rows.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let xv = &self.nodes[x.0].value;
        let (r, d) = xv.dims2();
        for g in [gain, bias] {
            let gv = &self.nodes[g.0].value;
            if gv.dims2() != (1, d) {
                return Err(dims_err("layer_norm", xv, gv));
            }
        }
        let gv = self.nodes[gain.0].value.data();
        let bv = self.nodes[bias.0].value.data();
        let mut xhat = vec![0.0; r * d];
        let mut rstd = vec![0.0; r];
        let mut out = vec![0.0; r * d];
        for i in 0..r {
            let row = &xv.data()[i * d..(i + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let s = 1.0 / (var + eps).sqrt();
            rstd[i] = s;
            for j in 0..d {
                let h = (row[j] - mean) * s;
                xhat[i * d + j] = h;
                out[i * d + j] = gv[j] * h + bv[j];
            }
        }
        let rg = self.rg(x.0) || self.rg(gain.0) || self.rg(bias.0);
        self.push(
            mat(r, d, out),
            Op::LayerNorm {
                x: x.0,
                gain: gain.0,
                bias: bias.0,
                xhat,
                rstd,
            },
            rg,
        )
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let av = &self.nodes[a.0].value;
        let (r, c) = av.dims2();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = av.data()[i * c + j];
            }
        }
        let rg = self.rg(a.0);
        self.push(mat(c, r, out), Op::Transpose(a.0), rg)
    }

    /// Columns `start..start + len`.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let av = &self.nodes[a.0].value;
        let (r, c) = av.dims2();
        if start + len > c {
            return Err(Error::Dimension {
                op: "slice_cols",
                left: av.shape().to_vec(),
                right: vec![start, len],
            });
        }
        let mut out = Vec::with_capacity(r * len);
        for i in 0..r {
            out.extend_from_slice(&av.data()[i * c + start..i * c + start + len]);
        }
        let rg = self.rg(a.0);
        self.push(mat(r, len, out), Op::SliceCols { x: a.0, start }, rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Evaluation("concat of nothing".into()))?;
        let r = self.nodes[first.0].value.rows();
        for p in parts {
            let pv = &self.nodes[p.0].value;
            if pv.rows() != r {
                return Err(dims_err("concat_cols", &self.nodes[first.0].value, pv));
            }
        }
        let total: usize = parts.iter().map(|p| self.nodes[p.0].value.cols()).sum();
        let mut out = Vec::with_capacity(r * total);
        for i in 0..r {
            for p in parts {
                out.extend_from_slice(self.nodes[p.0].value.row_slice(i));
            }
        }
        let rg = parts.iter().any(|p| self.rg(p.0));
        self.push(
            mat(r, total, out),
            Op::ConcatCols(parts.iter().map(|p| p.0).collect()),
            rg,
        )
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Evaluation("concat of nothing".into()))?;
        let c = self.nodes[first.0].value.cols();
        let mut out = Vec::new();
        let mut rows = 0;
        for p in parts {
            let pv = &self.nodes[p.0].value;
            if pv.cols() != c {
                return Err(dims_err("concat_rows", &self.nodes[first.0].value, pv));
            }
            rows += pv.rows();
            out.extend_from_slice(pv.data());
        }
        let rg = parts.iter().any(|p| self.rg(p.0));
        self.push(
            mat(rows, c, out),
            Op::ConcatRows(parts.iter().map(|p| p.0).collect()),
            rg,
        )
    }

    /// Selects rows by index (repeats allowed); used for embedding lookup.
    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let av = &self.nodes[a.0].value;
        let (r, c) = av.dims2();
        let mut out = Vec::with_capacity(rows.len() * c);
        for &i in rows {
            if i >= r {
                return Err(Error::Dimension {
                    op: "gather_rows",
                    left: av.shape().to_vec(),
                    right: vec![i],
                });
            }
            out.extend_from_slice(av.row_slice(i));
        }
        let rg = self.rg(a.0);
        self.push(
            mat(rows.len(), c, out),
            Op::GatherRows {
                x: a.0,
                rows: rows.to_vec(),
            },
            rg,
        )
    }

    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        let s = self.nodes[a.0].value.data().iter().sum();
        let rg = self.rg(a.0);
        self.push(mat(1, 1, vec![s]), Op::SumAll(a.0), rg)
    }

    pub fn mean_all(&mut self, a: Var) -> Result<Var> {
        let n = self.nodes[a.0].value.len().max(1);
        let s = self.sum_all(a)?;
        self.scale(s, 1.0 / n as f64)
    }

    /// Backpropagates from a `1×1` node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::Evaluation(format!(
                "backward from non-scalar node of shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.backprop_node(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients {
            grads,
            params: self.params.iter().map(|(p, n)| (*p, *n)).collect(),
        })
    }

    fn backprop_node(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let val = |i: usize| &self.nodes[i].value;
        let mut send = |target: usize, delta: Vec<f64>| {
            if !self.nodes[target].requires_grad {
                return;
            }
            match &mut grads[target] {
                Some(acc) => acc.iter_mut().zip(&delta).for_each(|(a, d)| *a += d),
                slot => *slot = Some(delta),
            }
        };
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::MatMul(a, b) => {
                let (m, k) = val(*a).dims2();
                let n = val(*b).cols();
                if self.rg(*a) {
                    let bv = val(*b).data();
                    let mut da = vec![0.0; m * k];
                    for i in 0..m {
                        let g_row = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let b_row = &bv[p * n..(p + 1) * n];
                            da[i * k + p] = g_row.iter().zip(b_row).map(|(x, y)| x * y).sum();
                        }
                    }
                    send(*a, da);
                }
                if self.rg(*b) {
                    let av = val(*a).data();
                    let mut db = vec![0.0; k * n];
                    for i in 0..m {
                        let g_row = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let a_ip = av[i * k + p];
                            if a_ip == 0.0 {
                                continue;
                            }
                            for (d, gv) in db[p * n..(p + 1) * n].iter_mut().zip(g_row) {
                                *d += a_ip * gv;
                            }
                        }
                    }
                    send(*b, db);
                }
            }
            Op::Add(a, b) => {
                send(*a, g.to_vec());
                send(*b, g.to_vec());
            }
            Op::Sub(a, b) => {
                send(*a, g.to_vec());
                send(*b, g.iter().map(|v| -v).collect());
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a).data(), val(*b).data());
                send(*a, g.iter().zip(bv).map(|(x, y)| x * y).collect());
                send(*b, g.iter().zip(av).map(|(x, y)| x * y).collect());
            }
            Op::AddRow(a, row) => {
                send(*a, g.to_vec());
                let n = val(*row).cols();
                let mut dr = vec![0.0; n];
                for chunk in g.chunks(n.max(1)) {
                    dr.iter_mut().zip(chunk).for_each(|(d, v)| *d += v);
                }
                send(*row, dr);
            }
            Op::Scale(a, f) => send(*a, g.iter().map(|v| v * f).collect()),
            Op::Map(a, derivs) => send(*a, g.iter().zip(derivs).map(|(x, d)| x * d).collect()),
            Op::Softmax(a) => {
                let y = node.value.data();
                let (r, c) = node.value.dims2();
                let mut dx = vec![0.0; r * c];
                for i in 0..r {
                    let ys = &y[i * c..(i + 1) * c];
                    let gs = &g[i * c..(i + 1) * c];
                    let dot: f64 = ys.iter().zip(gs).map(|(p, q)| p * q).sum();
                    for j in 0..c {
                        dx[i * c + j] = ys[j] * (gs[j] - dot);
                    }
                }
                send(*a, dx);
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let (r, d) = node.value.dims2();
                let gv = val(*gain).data();
                let mut dgain = vec![0.0; d];
                let mut dbias = vec![0.0; d];
                let mut dx = vec![0.0; r * d];
                for i in 0..r {
                    let gs = &g[i * d..(i + 1) * d];
                    let hs = &xhat[i * d..(i + 1) * d];
                    let mut sum_dh = 0.0;
                    let mut sum_dh_h = 0.0;
                    for j in 0..d {
                        dgain[j] += gs[j] * hs[j];
                        dbias[j] += gs[j];
                        let dh = gs[j] * gv[j];
                        sum_dh += dh;
                        sum_dh_h += dh * hs[j];
                    }
                    let scale = rstd[i] / d as f64;
                    for j in 0..d {
                        let dh = gs[j] * gv[j];
                        dx[i * d + j] = scale * (d as f64 * dh - sum_dh - hs[j] * sum_dh_h);
                    }
                }
                send(*x, dx);
                send(*gain, dgain);
                send(*bias, dbias);
            }
            Op::Transpose(a) => {
                let (r, c) = node.value.dims2();
                let mut dx = vec![0.0; r * c];
                for i in 0..r {
                    for j in 0..c {
                        dx[j * r + i] = g[i * c + j];
                    }
                }
                send(*a, dx);
            }
            Op::SliceCols { x, start } => {
                let (r, c) = val(*x).dims2();
                let len = node.value.cols();
                let mut dx = vec![0.0; r * c];
                for i in 0..r {
                    dx[i * c + start..i * c + start + len]
                        .copy_from_slice(&g[i * len..(i + 1) * len]);
                }
                send(*x, dx);
            }
            Op::ConcatCols(parts) => {
                let (r, total) = node.value.dims2();
                let mut offset = 0;
                for &p in parts {
                    let c = val(p).cols();
                    let mut dp = Vec::with_capacity(r * c);
                    for i in 0..r {
                        dp.extend_from_slice(&g[i * total + offset..i * total + offset + c]);
                    }
                    send(p, dp);
                    offset += c;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = val(p).len();
                    send(p, g[offset..offset + len].to_vec());
                    offset += len;
                }
            }
            Op::GatherRows { x, rows } => {
                let (r, c) = val(*x).dims2();
                let mut dx = vec![0.0; r * c];
                for (k, &i) in rows.iter().enumerate() {
                    for (d, v) in dx[i * c..(i + 1) * c]
                        .iter_mut()
                        .zip(&g[k * c..(k + 1) * c])
                    {
                        *d += v;
                    }
                }
                send(*x, dx);
            }
            Op::SumAll(a) => {
                let n = val(*a).len();
                send(*a, vec![g[0]; n]);
            }
        }
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Param => "param",
        Op::MatMul(..) => "matmul",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::AddRow(..) => "add_row",
        Op::Scale(..) => "scale",
        Op::Map(..) => "map",
        Op::Softmax(_) => "softmax",
        Op::LayerNorm { .. } => "layer_norm",
        Op::Transpose(_) => "transpose",
        Op::SliceCols { .. } => "slice_cols",
        Op::ConcatCols(_) => "concat_cols",
        Op::ConcatRows(_) => "concat_rows",
        Op::GatherRows { .. } => "gather_rows",
        Op::SumAll(_) => "sum_all",
    }
}

fn as_matrix(t: Tensor) -> Tensor {
    let (r, c) = t.dims2();
    t.reshape(vec![r, c]).expect("same element count")
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise stabilized softmax over a row-major `rows × cols` buffer.
pub fn softmax_rows(data: &[f64], rows: usize, cols: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        let row = &data[i * cols..(i + 1) * cols];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::DegenerateMask);
        }
        let mut sum = 0.0;
        for j in 0..cols {
            let e = if row[j] == f64::NEG_INFINITY {
                0.0
            } else {
                (row[j] - max).exp()
            };
            out[i * cols + j] = e;
            sum += e;
        }
        out[i * cols..(i + 1) * cols]
            .iter_mut()
            .for_each(|v| *v /= sum);
    }
    Ok(out)
}

/// Result of [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    params: Vec<(ParamId, usize)>,
}

impl Gradients {
    /// Gradient with respect to a node, `None` when it does not influence the loss.
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Adds parameter gradients into the store's accumulators.
    pub fn accumulate_into(&self, store: &mut ParamStore) {
        for &(id, node) in &self.params {
            if let Some(g) = &self.grads[node] {
                store.accumulate_grad(id, g);
            }
        }
    }
}
