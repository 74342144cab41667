use crate::tensor::gemm;
use crate::{AutodiffError, Result, Tensor};

/// Smallest argument `log` sees; smaller inputs are clamped.
pub const LOG_FLOOR: f64 = 1e-12;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy)]
enum Bcast {
    Same,
    /// rhs `[1, n]` repeated over the rows of lhs.
    Row,
    /// rhs `[r, 1]` repeated over the columns of lhs.
    Col,
    /// rhs holds one element.
    Scalar,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var, Bcast),
    Sub(Var, Var, Bcast),
    Mul(Var, Var, Bcast),
    MatMul(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Scale(Var, f64),
    AddScalar(Var),
    Softmax(Var),
    Concat(Vec<Var>),
    SliceCols(Var, usize),
    SelectRows(Var, Vec<usize>),
    Sum(Var),
    Mean(Var),
    SqDist(Var, Var),
}

struct Node {
    value: Tensor,
    grad: Option<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Append-only computation graph. Node indices are a topological order, so
/// backward is a single reverse sweep.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf: receives a gradient on backward.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Constant leaf: no gradient is tracked through it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Accumulated gradient of `v`; zeros if nothing has flowed into it yet.
    pub fn grad(&self, v: Var) -> Tensor {
        let node = &self.nodes[v.0];
        node.grad
            .clone()
            .unwrap_or_else(|| Tensor::zeros(node.value.shape()))
    }

    pub fn zero_grads(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn unary(&mut self, a: Var, value: Tensor, op: Op) -> Var {
        let rg = self.rg(a);
        self.push(value, op, rg)
    }

    fn dims(&self, op: &'static str, v: Var) -> Result<(usize, usize)> {
        let shape = self.nodes[v.0].value.shape();
        self.nodes[v.0]
            .value
            .dims2()
            .ok_or_else(|| AutodiffError::Rank {
                op,
                shape: shape.to_vec(),
            })
    }

    fn bcast(&self, op: &'static str, a: Var, b: Var) -> Result<Bcast> {
        let sa = self.nodes[a.0].value.shape();
        let sb = self.nodes[b.0].value.shape();
        if sa == sb {
            return Ok(Bcast::Same);
        }
        if self.nodes[b.0].value.is_scalar() {
            return Ok(Bcast::Scalar);
        }
        let mismatch = || AutodiffError::Shape {
            op,
            lhs: sa.to_vec(),
            rhs: sb.to_vec(),
        };
        let (ra, ca) = self.nodes[a.0].value.dims2().ok_or_else(mismatch)?;
        let (rb, cb) = self.nodes[b.0].value.dims2().ok_or_else(mismatch)?;
        match (rb, cb) {
            (1, c) if c == ca => Ok(Bcast::Row),
            (r, 1) if r == ra => Ok(Bcast::Col),
            _ => Err(mismatch()),
        }
    }

    fn binary_value(
        &self,
        a: Var,
        b: Var,
        mode: Bcast,
        f: impl Fn(f64, f64) -> f64,
    ) -> Tensor {
        let ta = &self.nodes[a.0].value;
        let tb = &self.nodes[b.0].value;
        let bd = tb.data();
        let cols = ta.dims2().map(|(_, c)| c).unwrap_or(1);
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let y = match mode {
                    Bcast::Same => bd[i],
                    Bcast::Row => bd[i % cols],
                    Bcast::Col => bd[i / cols],
                    Bcast::Scalar => bd[0],
                };
                f(x, y)
            })
            .collect();
        Tensor::new(ta.shape().to_vec(), data).expect("shape preserved")
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: impl FnOnce(Var, Var, Bcast) -> Op,
    ) -> Result<Var> {
        let mode = self.bcast(name, a, b)?;
        let value = self.binary_value(a, b, mode, f);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, op(a, b, mode), rg))
    }

    /// Elementwise sum. `b` may also be a `[1, n]` row, an `[r, 1]` column, or a scalar.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub)
    }

    /// Elementwise product with the same broadcasting rules as [`Graph::add`].
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims("matmul", a)?;
        let (k2, n) = self.dims("matmul", b)?;
        if k != k2 {
            return Err(AutodiffError::Shape {
                op: "matmul",
                lhs: vec![m, k],
                rhs: vec![k2, n],
            });
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.nodes[a.0].value.data(),
            false,
            self.nodes[b.0].value.data(),
            false,
            &mut out,
            0.0,
        );
        let value = Tensor::matrix(m, n, out)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.map(sigmoid);
        self.unary(a, value, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.map(f64::tanh);
        self.unary(a, value, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.map(f64::exp);
        self.unary(a, value, Op::Exp(a))
    }

    /// Natural log with the input clamped to at least [`LOG_FLOOR`].
    pub fn log(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.map(|x| x.max(LOG_FLOOR).ln());
        self.unary(a, value, Op::Log(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.map(|x| x * x);
        self.unary(a, value, Op::Square(a))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.nodes[a.0].value.map(|x| c * x);
        self.unary(a, value, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let value = self.nodes[a.0].value.map(|x| x + c);
        self.unary(a, value, Op::AddScalar(a))
    }

    /// `1 - a`.
    pub fn one_minus(&mut self, a: Var) -> Var {
        let neg = self.scale(a, -1.0);
        self.add_scalar(neg, 1.0)
    }

    /// Softmax over the last axis, max-shifted per row.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let (rows, cols) = self.dims("softmax", a)?;
        let src = self.nodes[a.0].value.data();
        let mut out = vec![0.0; rows * cols];
        for r in 0..rows {
            let row = &src[r * cols..(r + 1) * cols];
            let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let dst = &mut out[r * cols..(r + 1) * cols];
            let mut total = 0.0;
            for (d, &v) in dst.iter_mut().zip(row) {
                *d = (v - max).exp();
                total += *d;
            }
            for d in dst.iter_mut() {
                *d /= total;
            }
        }
        let value = Tensor::new(self.nodes[a.0].value.shape().to_vec(), out)?;
        Ok(self.unary(a, value, Op::Softmax(a)))
    }

    /// Concatenate along the last axis; every part must have the same row count.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or(AutodiffError::EmptyConcat)?;
        let (rows, _) = self.dims("concat", first)?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.dims("concat", p)?;
            if r != rows {
                return Err(AutodiffError::Shape {
                    op: "concat",
                    lhs: vec![rows, widths.iter().sum()],
                    rhs: vec![r, c],
                });
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.nodes[p.0].value.data()[r * w..(r + 1) * w]);
            }
        }
        let value = Tensor::matrix(rows, total, out)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(value, Op::Concat(parts.to_vec()), rg))
    }

    /// Columns `start..end` of a rank-2 tensor.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (rows, cols) = self.dims("slice", a)?;
        if start >= end || end > cols {
            return Err(AutodiffError::Slice { start, end, cols });
        }
        let w = end - start;
        let src = self.nodes[a.0].value.data();
        let mut out = Vec::with_capacity(rows * w);
        for r in 0..rows {
            out.extend_from_slice(&src[r * cols + start..r * cols + end]);
        }
        let value = Tensor::matrix(rows, w, out)?;
        Ok(self.unary(a, value, Op::SliceCols(a, start)))
    }

    /// Gather rows by index (indices may repeat).
    pub fn select_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let (n, cols) = self.dims("select_rows", a)?;
        if rows.is_empty() {
            return Err(AutodiffError::EmptySelection);
        }
        if let Some(&bad) = rows.iter().find(|&&r| r >= n) {
            return Err(AutodiffError::RowIndex { index: bad, rows: n });
        }
        let src = self.nodes[a.0].value.data();
        let mut out = Vec::with_capacity(rows.len() * cols);
        for &r in rows {
            out.extend_from_slice(&src[r * cols..(r + 1) * cols]);
        }
        let value = Tensor::matrix(rows.len(), cols, out)?;
        Ok(self.unary(a, value, Op::SelectRows(a, rows.to_vec())))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].value.data().iter().sum();
        self.unary(a, Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = &self.nodes[a.0].value;
        let s = t.data().iter().sum::<f64>() / t.numel() as f64;
        self.unary(a, Tensor::scalar(s), Op::Mean(a))
    }

    /// Pairwise squared Euclidean distances between the rows of `a` `[n, p]`
    /// and `b` `[m, p]`, giving `[n, m]`.
    pub fn sq_dist(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, p) = self.dims("sq_dist", a)?;
        let (m, p2) = self.dims("sq_dist", b)?;
        if p != p2 {
            return Err(AutodiffError::Shape {
                op: "sq_dist",
                lhs: vec![n, p],
                rhs: vec![m, p2],
            });
        }
        let ad = self.nodes[a.0].value.data();
        let bd = self.nodes[b.0].value.data();
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let ai = &ad[i * p..(i + 1) * p];
            for j in 0..m {
                let bj = &bd[j * p..(j + 1) * p];
                out[i * m + j] = ai.iter().zip(bj).map(|(x, y)| (x - y) * (x - y)).sum();
            }
        }
        let value = Tensor::matrix(n, m, out)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::SqDist(a, b), rg))
    }

    /// Reverse sweep from a scalar `root`; gradients add onto whatever the
    /// nodes already hold.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        let shape = self.nodes[root.0].value.shape().to_vec();
        if !self.nodes[root.0].value.is_scalar() {
            return Err(AutodiffError::NonScalarRoot { shape });
        }
        // Gradients of this sweep are collected apart from the stored ones so
        // earlier accumulations do not re-propagate.
        let mut local: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        local[root.0] = Some(Tensor::full(&shape, 1.0));
        for i in (0..=root.0).rev() {
            let Some(g) = local[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.propagate(i, &g, &mut local);
            match &mut self.nodes[i].grad {
                Some(acc) => acc.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &Tensor, local: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let out = &node.value;
        let gd = g.data();
        let mut send = |v: Var, t: Tensor| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut local[v.0] {
                Some(acc) => acc.add_assign(&t),
                slot @ None => *slot = Some(t),
            }
        };
        let val = |v: Var| &self.nodes[v.0].value;
        let like = |v: Var, data: Vec<f64>| {
            Tensor::new(self.nodes[v.0].value.shape().to_vec(), data).expect("grad shape")
        };
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b, mode) | Op::Sub(a, b, mode) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                send(*a, g.clone());
                if self.nodes[b.0].requires_grad {
                    let gb = reduce_bcast(gd, out, val(*b), *mode);
                    send(*b, like(*b, gb.into_iter().map(|x| sign * x).collect()));
                }
            }
            Op::Mul(a, b, mode) => {
                let (ta, tb) = (val(*a), val(*b));
                let cols = out.dims2().map(|(_, c)| c).unwrap_or(1);
                let bd = tb.data();
                let bat = |idx: usize| match mode {
                    Bcast::Same => bd[idx],
                    Bcast::Row => bd[idx % cols],
                    Bcast::Col => bd[idx / cols],
                    Bcast::Scalar => bd[0],
                };
                if self.nodes[a.0].requires_grad {
                    let ga = gd.iter().enumerate().map(|(k, &x)| x * bat(k)).collect();
                    send(*a, like(*a, ga));
                }
                if self.nodes[b.0].requires_grad {
                    let prod: Vec<f64> = gd.iter().zip(ta.data()).map(|(x, y)| x * y).collect();
                    send(*b, like(*b, reduce_bcast(&prod, out, tb, *mode)));
                }
            }
            Op::MatMul(a, b) => {
                let (m, k) = val(*a).dims2().expect("rank 2");
                let (_, n) = val(*b).dims2().expect("rank 2");
                if self.nodes[a.0].requires_grad {
                    let mut ga = vec![0.0; m * k];
                    gemm(m, n, k, gd, false, val(*b).data(), true, &mut ga, 0.0);
                    send(*a, like(*a, ga));
                }
                if self.nodes[b.0].requires_grad {
                    let mut gb = vec![0.0; k * n];
                    gemm(k, m, n, val(*a).data(), true, gd, false, &mut gb, 0.0);
                    send(*b, like(*b, gb));
                }
            }
            Op::Sigmoid(a) => {
                let ga = zip_map(gd, out.data(), |g, y| g * y * (1.0 - y));
                send(*a, like(*a, ga));
            }
            Op::Tanh(a) => {
                let ga = zip_map(gd, out.data(), |g, y| g * (1.0 - y * y));
                send(*a, like(*a, ga));
            }
            Op::Exp(a) => {
                let ga = zip_map(gd, out.data(), |g, y| g * y);
                send(*a, like(*a, ga));
            }
            Op::Log(a) => {
                let ga = zip_map(gd, val(*a).data(), |g, x| {
                    if x < LOG_FLOOR {
                        0.0
                    } else {
                        g / x
                    }
                });
                send(*a, like(*a, ga));
            }
            Op::Square(a) => {
                let ga = zip_map(gd, val(*a).data(), |g, x| 2.0 * g * x);
                send(*a, like(*a, ga));
            }
            Op::Scale(a, c) => {
                send(*a, like(*a, gd.iter().map(|g| g * c).collect()));
            }
            Op::AddScalar(a) => send(*a, g.clone()),
            Op::Softmax(a) => {
                let (rows, cols) = out.dims2().expect("rank 2");
                let y = out.data();
                let mut ga = vec![0.0; rows * cols];
                for r in 0..rows {
                    let s = r * cols..(r + 1) * cols;
                    let dot: f64 = gd[s.clone()].iter().zip(&y[s.clone()]).map(|(g, y)| g * y).sum();
                    for c in s {
                        ga[c] = y[c] * (gd[c] - dot);
                    }
                }
                send(*a, like(*a, ga));
            }
            Op::Concat(parts) => {
                let (rows, total) = out.dims2().expect("rank 2");
                let mut offset = 0;
                for &p in parts {
                    let (_, w) = val(p).dims2().expect("rank 2");
                    if self.nodes[p.0].requires_grad {
                        let mut gp = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            gp.extend_from_slice(&gd[r * total + offset..r * total + offset + w]);
                        }
                        send(p, like(p, gp));
                    }
                    offset += w;
                }
            }
            Op::SliceCols(a, start) => {
                let (rows, cols) = val(*a).dims2().expect("rank 2");
                let (_, w) = out.dims2().expect("rank 2");
                let mut ga = vec![0.0; rows * cols];
                for r in 0..rows {
                    ga[r * cols + start..r * cols + start + w]
                        .copy_from_slice(&gd[r * w..(r + 1) * w]);
                }
                send(*a, like(*a, ga));
            }
            Op::SelectRows(a, rows) => {
                let (n, cols) = val(*a).dims2().expect("rank 2");
                let mut ga = vec![0.0; n * cols];
                for (k, &r) in rows.iter().enumerate() {
                    for c in 0..cols {
                        ga[r * cols + c] += gd[k * cols + c];
                    }
                }
                send(*a, like(*a, ga));
            }
            Op::Sum(a) => {
                send(*a, Tensor::full(val(*a).shape(), gd[0]));
            }
            Op::Mean(a) => {
                let n = val(*a).numel() as f64;
                send(*a, Tensor::full(val(*a).shape(), gd[0] / n));
            }
            Op::SqDist(a, b) => {
                let (n, p) = val(*a).dims2().expect("rank 2");
                let (m, _) = val(*b).dims2().expect("rank 2");
                let (ad, bd) = (val(*a).data(), val(*b).data());
                let mut ga = vec![0.0; n * p];
                let mut gb = vec![0.0; m * p];
                for i in 0..n {
                    for j in 0..m {
                        let gij = 2.0 * gd[i * m + j];
                        if gij == 0.0 {
                            continue;
                        }
                        for c in 0..p {
                            let diff = gij * (ad[i * p + c] - bd[j * p + c]);
                            ga[i * p + c] += diff;
                            gb[j * p + c] -= diff;
                        }
                    }
                }
                send(*a, like(*a, ga));
                send(*b, like(*b, gb));
            }
        }
    }
}

fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

/// Sum a full-shape gradient back down to the broadcast operand's shape.
fn reduce_bcast(g: &[f64], out: &Tensor, rhs: &Tensor, mode: Bcast) -> Vec<f64> {
    match mode {
        Bcast::Same => g.to_vec(),
        Bcast::Scalar => vec![g.iter().sum()],
        Bcast::Row => {
            let (_, cols) = out.dims2().expect("rank 2");
            let mut acc = vec![0.0; rhs.numel()];
            for (k, v) in g.iter().enumerate() {
                acc[k % cols] += v;
            }
            acc
        }
        Bcast::Col => {
            let (_, cols) = out.dims2().expect("rank 2");
            let mut acc = vec![0.0; rhs.numel()];
            for (k, v) in g.iter().enumerate() {
                acc[k / cols] += v;
            }
            acc
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(g: &mut Graph, v: &[f64]) -> Var {
        g.param(Tensor::row(v.to_vec()))
    }

    #[test]
    fn add_elementwise() {
        let mut g = Graph::new();
        let a = row(&mut g, &[1.0, 2.0]);
        let b = row(&mut g, &[3.0, 4.0]);
        let c = g.add(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[4.0, 6.0]);
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let mut g = Graph::new();
        let a = row(&mut g, &[0.0, 0.0]);
        let s = g.softmax(a).unwrap();
        assert_eq!(g.value(s).data(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_survives_large_logits() {
        let mut g = Graph::new();
        let a = row(&mut g, &[1000.0, 1000.0, -1000.0]);
        let s = g.softmax(a).unwrap();
        assert_eq!(g.value(s).data(), &[0.5, 0.5, 0.0]);
    }

    #[test]
    fn identity_matmul() {
        let mut g = Graph::new();
        let i = g.constant(Tensor::identity(3));
        let data: Vec<f64> = (0..6).map(|v| v as f64 * 0.5 - 1.0).collect();
        let a = g.param(Tensor::matrix(3, 2, data.clone()).unwrap());
        let p = g.matmul(i, a).unwrap();
        assert_eq!(g.value(p).data(), data.as_slice());
    }

    #[test]
    fn shape_errors_name_op_and_shapes() {
        let mut g = Graph::new();
        let a = g.param(Tensor::zeros(&[2, 3]));
        let b = g.param(Tensor::zeros(&[2, 3]));
        let err = g.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("matmul") && err.contains("[2, 3]"), "{err}");
        let c = g.param(Tensor::zeros(&[3, 2]));
        let err = g.add(a, c).unwrap_err().to_string();
        assert!(err.contains("add") && err.contains("[3, 2]"), "{err}");
    }

    #[test]
    fn sum_of_squares_gradient() {
        let mut g = Graph::new();
        let x = row(&mut g, &[1.0, 2.0, 3.0]);
        let sq = g.square(x);
        let s = g.sum(sq);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).data(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn log_sigmoid_gradient_at_zero() {
        let mut g = Graph::new();
        let w = g.param(Tensor::scalar(0.0));
        let s = g.sigmoid(w);
        let l = g.log(s);
        g.backward(l).unwrap();
        assert!((g.grad(w).item() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn non_scalar_root_rejected() {
        let mut g = Graph::new();
        let x = row(&mut g, &[1.0, 2.0]);
        assert!(matches!(
            g.backward(x),
            Err(AutodiffError::NonScalarRoot { .. })
        ));
    }

    #[test]
    fn gradients_accumulate_until_zeroed() {
        let mut g = Graph::new();
        let x = row(&mut g, &[1.0, -2.0]);
        let sq = g.square(x);
        let s = g.sum(sq);
        g.backward(s).unwrap();
        let first = g.grad(x);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).data(), &[4.0, -8.0]);
        g.zero_grads();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x), first);
    }

    #[test]
    fn fan_out_accumulates() {
        // f = x*x + 3x via two uses of x
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(2.0));
        let xx = g.mul(x, x).unwrap();
        let x3 = g.scale(x, 3.0);
        let f = g.add(xx, x3).unwrap();
        g.backward(f).unwrap();
        assert_eq!(g.grad(x).item(), 7.0);
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut g = Graph::new();
        let c = g.constant(Tensor::row(vec![1.0, 2.0]));
        let x = row(&mut g, &[3.0, 4.0]);
        let p = g.mul(x, c).unwrap();
        let s = g.sum(p);
        g.backward(s).unwrap();
        assert_eq!(g.grad(c).data(), &[0.0, 0.0]);
        assert_eq!(g.grad(x).data(), &[1.0, 2.0]);
    }

    #[test]
    fn log_clamps_small_inputs() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(0.0));
        let l = g.log(x);
        assert_eq!(g.value(l).item(), LOG_FLOOR.ln());
        g.backward(l).unwrap();
        assert_eq!(g.grad(x).item(), 0.0);
    }
}
