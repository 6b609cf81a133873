//! Reverse-mode tape.
//!
//! Nodes are appended in evaluation order, so the node vector is already a
//! topological order; backward walks it once in reverse.

use rand::Rng;

use super::{Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Concat { parts: Vec<Var>, axis: usize },
    Slice { x: Var, axis: usize, start: usize },
    Transpose(Var),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Softmax { x: Var, axis: usize },
    Sum(Var),
    MaskedSse { pred: Var, target: Vec<f64>, mask: Vec<f64>, denom: f64 },
    Dropout { x: Var, keep: Vec<f64> },
    Clamp { x: Var, lo: f64, hi: f64 },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar loss with respect to the leaves of a tape.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient for `v`; zeros when the loss does not depend on it.
    pub fn get(&self, v: Var) -> Tensor {
        let shape = &self.shapes[v.0];
        match &self.grads[v.0] {
            Some(g) => Tensor::new(shape.clone(), g.clone()).expect("gradient shape"),
            None => Tensor::zeros(shape),
        }
    }
}

fn check(op: &'static str, t: &Tensor) -> Result<(), TensorError> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(TensorError::NonFinite { op })
    }
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn matmul_into(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    out
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, delta: Vec<f64>) {
    match &mut grads[v.0] {
        Some(g) => g.iter_mut().zip(&delta).for_each(|(a, d)| *a += d),
        slot @ None => *slot = Some(delta),
    }
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

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, op_name: &'static str, value: Tensor, op: Op, needs_grad: bool) -> Result<Var, TensorError> {
        check(op_name, &value)?;
        self.nodes.push(Node { value, op, needs_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Records a leaf; it receives gradients iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: Tensor) -> Result<Var, TensorError> {
        let needs = t.requires_grad();
        self.push("leaf", t, Op::Leaf, needs)
    }

    pub fn param(&mut self, t: Tensor) -> Result<Var, TensorError> {
        self.leaf(t.with_requires_grad(true))
    }

    pub fn constant(&mut self, t: Tensor) -> Result<Var, TensorError> {
        self.leaf(t.with_requires_grad(false))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (va, vb) = (self.value(a), self.value(b));
        let (m, k) = va.dims2("matmul")?;
        let (k2, n) = vb.dims2("matmul")?;
        if k != k2 {
            return Err(mismatch("matmul", va, vb));
        }
        let out = Tensor::matrix(m, n, matmul_into(va.data(), vb.data(), m, k, n))?;
        let needs = self.needs(a) || self.needs(b);
        self.push("matmul", out, Op::MatMul(a, b), needs)
    }

    fn zip_same(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var, TensorError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(mismatch(name, va, vb));
        }
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| f(*x, *y)).collect();
        let out = Tensor::new(va.shape().to_vec(), data)?;
        let needs = self.needs(a) || self.needs(b);
        self.push(name, out, op, needs)
    }

    /// Elementwise sum. A `1 x n` right operand broadcasts over the rows
    /// of an `m x n` left operand.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() == vb.shape() {
            return self.zip_same("add", a, b, |x, y| x + y, Op::Add(a, b));
        }
        let (m, n) = va.dims2("add")?;
        let (r, c) = vb.dims2("add")?;
        if r != 1 || c != n {
            return Err(mismatch("add", va, vb));
        }
        let mut data = va.data().to_vec();
        for row in data.chunks_mut(n) {
            row.iter_mut().zip(vb.data()).for_each(|(x, y)| *x += y);
        }
        let out = Tensor::matrix(m, n, data)?;
        let needs = self.needs(a) || self.needs(b);
        self.push("add", out, Op::AddRow(a, b), needs)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_same("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_same("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn map(&mut self, name: &'static str, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var, TensorError> {
        let vx = self.value(x);
        let out = Tensor::new(vx.shape().to_vec(), vx.data().iter().map(|v| f(*v)).collect())?;
        let needs = self.needs(x);
        self.push(name, out, op, needs)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var, TensorError> {
        self.map("scale", x, |v| v * c, Op::Scale(x, c))
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Result<Var, TensorError> {
        self.map("add_scalar", x, |v| v + c, Op::AddScalar(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var, TensorError> {
        self.map("sigmoid", x, sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var, TensorError> {
        self.map("tanh", x, f64::tanh, Op::Tanh(x))
    }

    pub fn exp(&mut self, x: Var) -> Result<Var, TensorError> {
        self.map("exp", x, f64::exp, Op::Exp(x))
    }

    /// Clamps to `[lo, hi]`; the gradient is zero where the clamp is active.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Result<Var, TensorError> {
        self.map("clamp", x, |v| v.max(lo).min(hi), Op::Clamp { x, lo, hi })
    }

    /// Concatenates rank-2 tensors along `axis` (0 = rows, 1 = columns).
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var, TensorError> {
        let first = *parts.first().ok_or(TensorError::OutOfRange {
            op: "concat",
            index: 0,
            extent: 0,
        })?;
        let (r0, c0) = self.value(first).dims2("concat")?;
        let mut rows = 0;
        let mut cols = 0;
        for &p in parts {
            let (r, c) = self.value(p).dims2("concat")?;
            let compatible = if axis == 0 { c == c0 } else { r == r0 };
            if !compatible {
                return Err(mismatch("concat", self.value(first), self.value(p)));
            }
            if axis == 0 {
                rows += r;
            } else {
                cols += c;
            }
        }
        let (rows, cols) = if axis == 0 { (rows, c0) } else { (r0, cols) };
        let mut data = Vec::with_capacity(rows * cols);
        if axis == 0 {
            for &p in parts {
                data.extend_from_slice(self.value(p).data());
            }
        } else {
            for r in 0..rows {
                for &p in parts {
                    data.extend_from_slice(self.value(p).row(r));
                }
            }
        }
        let out = Tensor::matrix(rows, cols, data)?;
        let needs = parts.iter().any(|p| self.needs(*p));
        self.push("concat", out, Op::Concat { parts: parts.to_vec(), axis }, needs)
    }

    /// Half-open slice `start..end` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, end: usize) -> Result<Var, TensorError> {
        let vx = self.value(x);
        let (r, c) = vx.dims2("slice")?;
        let extent = if axis == 0 { r } else { c };
        if start >= end || end > extent {
            return Err(TensorError::OutOfRange { op: "slice", index: end, extent });
        }
        let out = if axis == 0 {
            vx.slice_rows(start, end)
        } else {
            let mut data = Vec::with_capacity(r * (end - start));
            for i in 0..r {
                data.extend_from_slice(&vx.row(i)[start..end]);
            }
            Tensor::matrix(r, end - start, data)?
        };
        let needs = self.needs(x);
        self.push("slice", out, Op::Slice { x, axis, start }, needs)
    }

    pub fn row(&mut self, x: Var, r: usize) -> Result<Var, TensorError> {
        self.slice(x, 0, r, r + 1)
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var, TensorError> {
        let vx = self.value(x);
        let (r, c) = vx.dims2("transpose")?;
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = vx.data()[i * c + j];
            }
        }
        let out = Tensor::matrix(c, r, data)?;
        let needs = self.needs(x);
        self.push("transpose", out, Op::Transpose(x), needs)
    }

    /// Softmax along `axis` (0 normalizes each column, 1 each row).
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var, TensorError> {
        let vx = self.value(x);
        let (r, c) = vx.dims2("softmax")?;
        let mut data = vx.data().to_vec();
        let (outer, inner, stride_o, stride_i) = if axis == 1 { (r, c, c, 1) } else { (c, r, 1, c) };
        for o in 0..outer {
            let ix = |i: usize| o * stride_o + i * stride_i;
            let max = (0..inner).map(|i| data[ix(i)]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for i in 0..inner {
                let e = (data[ix(i)] - max).exp();
                data[ix(i)] = e;
                total += e;
            }
            for i in 0..inner {
                data[ix(i)] /= total;
            }
        }
        let out = Tensor::matrix(r, c, data)?;
        let needs = self.needs(x);
        self.push("softmax", out, Op::Softmax { x, axis }, needs)
    }

    /// Sum of all elements as a `1 x 1` tensor.
    pub fn sum(&mut self, x: Var) -> Result<Var, TensorError> {
        let s = self.value(x).data().iter().sum();
        let needs = self.needs(x);
        self.push("sum", Tensor::scalar(s), Op::Sum(x), needs)
    }

    /// `sum(mask * (pred - target)^2) / denom`.
    pub fn masked_sse(&mut self, pred: Var, target: &Tensor, mask: &Tensor, denom: f64) -> Result<Var, TensorError> {
        let vp = self.value(pred);
        if vp.shape() != target.shape() {
            return Err(mismatch("masked_sse", vp, target));
        }
        if vp.shape() != mask.shape() {
            return Err(mismatch("masked_sse", vp, mask));
        }
        let s: f64 = vp
            .data()
            .iter()
            .zip(target.data())
            .zip(mask.data())
            .map(|((p, t), m)| m * (p - t) * (p - t))
            .sum();
        let needs = self.needs(pred);
        let op = Op::MaskedSse {
            pred,
            target: target.data().to_vec(),
            mask: mask.data().to_vec(),
            denom,
        };
        self.push("masked_sse", Tensor::scalar(s / denom), op, needs)
    }

    /// Masked mean squared error `sum(mask * (pred - target)^2) / sum(mask)`.
    pub fn mean_squared_error(&mut self, pred: Var, target: &Tensor, mask: &Tensor) -> Result<Var, TensorError> {
        let denom: f64 = mask.data().iter().sum();
        if denom == 0.0 {
            return Err(TensorError::EmptyMask);
        }
        self.masked_sse(pred, target, mask, denom)
    }

    /// Inverted dropout. Identity when not training or `p == 0`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, p: f64, training: bool, rng: &mut R) -> Result<Var, TensorError> {
        if !(0.0..1.0).contains(&p) {
            return Err(TensorError::DropoutProbability(p));
        }
        if !training || p == 0.0 {
            return Ok(x);
        }
        let scale = 1.0 / (1.0 - p);
        let n = self.value(x).numel();
        let keep: Vec<f64> = (0..n).map(|_| if rng.random::<f64>() < p { 0.0 } else { scale }).collect();
        let vx = self.value(x);
        let data = vx.data().iter().zip(&keep).map(|(v, k)| v * k).collect();
        let out = Tensor::new(vx.shape().to_vec(), data)?;
        let needs = self.needs(x);
        self.push("dropout", out, Op::Dropout { x, keep }, needs)
    }

    /// Gradients of `loss` with respect to every leaf that requires them.
    pub fn backward(&self, loss: Var) -> Result<Gradients, TensorError> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(TensorError::NonScalarLoss(lv.shape().to_vec()));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                grads[i] = None;
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let (m, k) = (va.rows(), va.cols());
                let n = vb.cols();
                if self.needs(*a) {
                    // dA = G B^T
                    let mut da = vec![0.0; m * k];
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let brow = &vb.data()[p * n..(p + 1) * n];
                            da[i * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
                        }
                    }
                    accumulate(grads, *a, da);
                }
                if self.needs(*b) {
                    // dB = A^T G
                    let mut db = vec![0.0; k * n];
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let aip = va.data()[i * k + p];
                            if aip == 0.0 {
                                continue;
                            }
                            for (d, gv) in db[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                *d += aip * gv;
                            }
                        }
                    }
                    accumulate(grads, *b, db);
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if self.needs(*v) {
                        accumulate(grads, *v, g.to_vec());
                    }
                }
            }
            Op::AddRow(a, b) => {
                if self.needs(*a) {
                    accumulate(grads, *a, g.to_vec());
                }
                if self.needs(*b) {
                    let n = self.value(*b).numel();
                    let mut db = vec![0.0; n];
                    for row in g.chunks(n) {
                        db.iter_mut().zip(row).for_each(|(d, x)| *d += x);
                    }
                    accumulate(grads, *b, db);
                }
            }
            Op::Sub(a, b) => {
                if self.needs(*a) {
                    accumulate(grads, *a, g.to_vec());
                }
                if self.needs(*b) {
                    accumulate(grads, *b, g.iter().map(|x| -x).collect());
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.needs(*a) {
                    accumulate(grads, *a, g.iter().zip(vb.data()).map(|(x, y)| x * y).collect());
                }
                if self.needs(*b) {
                    accumulate(grads, *b, g.iter().zip(va.data()).map(|(x, y)| x * y).collect());
                }
            }
            Op::Scale(x, c) => accumulate(grads, *x, g.iter().map(|v| v * c).collect()),
            Op::AddScalar(x) => accumulate(grads, *x, g.to_vec()),
            Op::Sigmoid(x) => accumulate(
                grads,
                *x,
                g.iter().zip(out).map(|(gv, y)| gv * y * (1.0 - y)).collect(),
            ),
            Op::Tanh(x) => accumulate(
                grads,
                *x,
                g.iter().zip(out).map(|(gv, y)| gv * (1.0 - y * y)).collect(),
            ),
            Op::Exp(x) => accumulate(grads, *x, g.iter().zip(out).map(|(gv, y)| gv * y).collect()),
            Op::Clamp { x, lo, hi } => {
                let vx = self.value(*x);
                let d = g
                    .iter()
                    .zip(vx.data())
                    .map(|(gv, v)| if *v < *lo || *v > *hi { 0.0 } else { *gv })
                    .collect();
                accumulate(grads, *x, d);
            }
            Op::Concat { parts, axis } => {
                let cols = node.value.cols();
                let mut offset = 0;
                for &p in parts {
                    let vp = self.value(p);
                    let (pr, pc) = (vp.rows(), vp.cols());
                    if self.needs(p) {
                        let d = if *axis == 0 {
                            g[offset * cols..(offset + pr) * cols].to_vec()
                        } else {
                            let mut d = Vec::with_capacity(pr * pc);
                            for r in 0..pr {
                                d.extend_from_slice(&g[r * cols + offset..r * cols + offset + pc]);
                            }
                            d
                        };
                        accumulate(grads, p, d);
                    }
                    offset += if *axis == 0 { pr } else { pc };
                }
            }
            Op::Slice { x, axis, start } => {
                let vx = self.value(*x);
                let (r, c) = (vx.rows(), vx.cols());
                let mut d = vec![0.0; r * c];
                if *axis == 0 {
                    d[start * c..start * c + g.len()].copy_from_slice(g);
                } else {
                    let w = node.value.cols();
                    for i in 0..r {
                        d[i * c + start..i * c + start + w].copy_from_slice(&g[i * w..(i + 1) * w]);
                    }
                }
                accumulate(grads, *x, d);
            }
            Op::Transpose(x) => {
                let (r, c) = (node.value.rows(), node.value.cols());
                let mut d = vec![0.0; r * c];
                for i in 0..r {
                    for j in 0..c {
                        d[j * r + i] = g[i * c + j];
                    }
                }
                accumulate(grads, *x, d);
            }
            Op::Softmax { x, axis } => {
                let (r, c) = (node.value.rows(), node.value.cols());
                let (outer, inner, so, si) = if *axis == 1 { (r, c, c, 1) } else { (c, r, 1, c) };
                let mut d = vec![0.0; r * c];
                for o in 0..outer {
                    let ix = |i: usize| o * so + i * si;
                    let dot: f64 = (0..inner).map(|i| g[ix(i)] * out[ix(i)]).sum();
                    for i in 0..inner {
                        d[ix(i)] = out[ix(i)] * (g[ix(i)] - dot);
                    }
                }
                accumulate(grads, *x, d);
            }
            Op::Sum(x) => {
                let n = self.value(*x).numel();
                accumulate(grads, *x, vec![g[0]; n]);
            }
            Op::MaskedSse { pred, target, mask, denom } => {
                let vp = self.value(*pred);
                let d = vp
                    .data()
                    .iter()
                    .zip(target)
                    .zip(mask)
                    .map(|((p, t), m)| g[0] * 2.0 * m * (p - t) / denom)
                    .collect();
                accumulate(grads, *pred, d);
            }
            Op::Dropout { x, keep } => {
                accumulate(grads, *x, g.iter().zip(keep).map(|(gv, k)| gv * k).collect());
            }
        }
    }
}
