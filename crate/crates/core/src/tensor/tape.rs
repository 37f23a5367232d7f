use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use super::params::{ParamGrads, ParamId, ParamStore};
use super::{Tensor, TensorError};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(0);

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    id: usize,
    tape: u64,
}

impl Var {
    pub fn index(self) -> usize {
        self.id
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(usize, usize),
    Add(usize, usize),
    AddRow(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Tanh(usize),
    Sigmoid(usize),
    Concat(Vec<usize>),
    StackRows(Vec<usize>),
    RowSelect(usize, Vec<usize>),
    Dropout(usize, Vec<f64>),
    Softmax(usize),
    Nll(usize, usize),
    Sum(usize),
    AddN(Vec<usize>),
    Reshape(usize),
}

#[derive(Debug)]
struct Node {
    rows: usize,
    cols: usize,
    /// Empty for parameter nodes, whose values live in the store.
    value: Vec<f64>,
    /// Extra activations kept for the backward pass.
    saved: Vec<f64>,
    op: Op,
    requires_grad: bool,
}

/// Records a forward computation so it can be replayed backwards.
///
/// Parameters are read through a shared borrow of a [`ParamStore`] and are
/// never copied onto the tape. Each parameter gets at most one node per tape.
pub struct Tape<'p> {
    id: u64,
    params: Option<&'p ParamStore>,
    nodes: Vec<Node>,
    param_nodes: HashMap<ParamId, usize>,
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err(op: &'static str, l: (usize, usize), r: (usize, usize)) -> TensorError {
    TensorError::Shape {
        op,
        left: vec![l.0, l.1],
        right: vec![r.0, r.1],
    }
}

impl<'p> Tape<'p> {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            params: None,
            nodes: Vec::new(),
            param_nodes: HashMap::new(),
        }
    }

    pub fn with_params(params: &'p ParamStore) -> Self {
        let mut t = Self::new();
        t.params = Some(params);
        t
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn check(&self, v: Var) -> Result<usize, TensorError> {
        if v.tape != self.id || v.id >= self.nodes.len() {
            return Err(TensorError::Graph(format!(
                "value #{} does not belong to this tape",
                v.id
            )));
        }
        Ok(v.id)
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op, requires_grad: bool) -> Var {
        debug_assert!(matches!(op, Op::Param(_)) || value.len() == rows * cols);
        self.nodes.push(Node {
            rows,
            cols,
            value,
            saved: Vec::new(),
            op,
            requires_grad,
        });
        Var {
            id: self.nodes.len() - 1,
            tape: self.id,
        }
    }

    fn node_value(&self, idx: usize) -> &[f64] {
        let node = &self.nodes[idx];
        match node.op {
            Op::Param(pid) => self.params.expect("param node without store").get(pid).data(),
            _ => &node.value,
        }
    }

    fn dims(&self, idx: usize) -> (usize, usize) {
        (self.nodes[idx].rows, self.nodes[idx].cols)
    }

    fn rg(&self, idx: usize) -> bool {
        self.nodes[idx].requires_grad
    }

    pub fn value(&self, v: Var) -> &[f64] {
        self.node_value(v.id)
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.dims(v.id)
    }

    /// Copies a recorded value out as a tensor.
    pub fn tensor(&self, v: Var) -> Tensor {
        let (r, c) = self.dims(v.id);
        Tensor::matrix(r, c, self.node_value(v.id).to_vec()).expect("consistent node")
    }

    /// Scalar value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.node_value(v.id)[0]
    }

    /// Records an input tensor. It is differentiated iff `requires_grad` is set.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        let (r, c) = (t.rows(), t.cols());
        self.push(r, c, t.data().to_vec(), Op::Leaf, t.requires_grad)
    }

    /// Records a non-differentiated input.
    pub fn constant(&mut self, t: &Tensor) -> Var {
        let (r, c) = (t.rows(), t.cols());
        self.push(r, c, t.data().to_vec(), Op::Leaf, false)
    }

    /// Node for a stored parameter; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&idx) = self.param_nodes.get(&id) {
            return Var { id: idx, tape: self.id };
        }
        let store = self.params.expect("tape created without a parameter store");
        let t = store.get(id);
        let v = self.push(t.rows(), t.cols(), Vec::new(), Op::Param(id), true);
        self.param_nodes.insert(id, v.id);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ai, bi) = (self.check(a)?, self.check(b)?);
        let ((m, k), (k2, n)) = (self.dims(ai), self.dims(bi));
        if k != k2 {
            return Err(shape_err("matmul", (m, k), (k2, n)));
        }
        let av = self.node_value(ai);
        let bv = self.node_value(bi);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let orow = &mut out[i * n..(i + 1) * n];
            for l in 0..k {
                let x = av[i * k + l];
                let brow = &bv[l * n..(l + 1) * n];
                for (o, y) in orow.iter_mut().zip(brow) {
                    *o += x * y;
                }
            }
        }
        let rg = self.rg(ai) || self.rg(bi);
        Ok(self.push(m, n, out, Op::MatMul(ai, bi), rg))
    }

    fn zip_same(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: fn(usize, usize) -> Op,
    ) -> Result<Var, TensorError> {
        let (ai, bi) = (self.check(a)?, self.check(b)?);
        let (da, db) = (self.dims(ai), self.dims(bi));
        if da != db {
            return Err(shape_err(name, da, db));
        }
        let out: Vec<f64> = self
            .node_value(ai)
            .iter()
            .zip(self.node_value(bi))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let rg = self.rg(ai) || self.rg(bi);
        Ok(self.push(da.0, da.1, out, op(ai, bi), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_same("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_same("sub", a, b, |x, y| x - y, Op::Sub)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_same("mul", a, b, |x, y| x * y, Op::Mul)
    }

    /// Adds a `1 x n` row to every row of an `m x n` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, TensorError> {
        let (ai, bi) = (self.check(a)?, self.check(row)?);
        let ((m, n), (r, c)) = (self.dims(ai), self.dims(bi));
        if r != 1 || c != n {
            return Err(shape_err("add_row", (m, n), (r, c)));
        }
        let bv = self.node_value(bi);
        let out: Vec<f64> = self
            .node_value(ai)
            .iter()
            .enumerate()
            .map(|(idx, x)| x + bv[idx % n])
            .collect();
        let rg = self.rg(ai) || self.rg(bi);
        Ok(self.push(m, n, out, Op::AddRow(ai, bi), rg))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: fn(usize) -> Op) -> Result<Var, TensorError> {
        let ai = self.check(a)?;
        let (m, n) = self.dims(ai);
        let out: Vec<f64> = self.node_value(ai).iter().map(|&x| f(x)).collect();
        let rg = self.rg(ai);
        Ok(self.push(m, n, out, op(ai), rg))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, TensorError> {
        self.unary(a, f64::tanh, Op::Tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, TensorError> {
        self.unary(a, sigmoid, Op::Sigmoid)
    }

    /// Concatenates along columns; all inputs must have the same row count.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        if parts.is_empty() {
            return Err(TensorError::Domain {
                op: "concat",
                msg: "no inputs".into(),
            });
        }
        let idx = parts.iter().map(|&p| self.check(p)).collect::<Result<Vec<_>, _>>()?;
        let rows = self.dims(idx[0]).0;
        for &i in &idx[1..] {
            if self.dims(i).0 != rows {
                return Err(shape_err("concat", self.dims(idx[0]), self.dims(i)));
            }
        }
        let cols: usize = idx.iter().map(|&i| self.dims(i).1).sum();
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &i in &idx {
                let c = self.dims(i).1;
                out.extend_from_slice(&self.node_value(i)[r * c..(r + 1) * c]);
            }
        }
        let rg = idx.iter().any(|&i| self.rg(i));
        Ok(self.push(rows, cols, out, Op::Concat(idx), rg))
    }

    /// Stacks inputs vertically; all inputs must have the same column count.
    pub fn stack_rows(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        if parts.is_empty() {
            return Err(TensorError::Domain {
                op: "stack_rows",
                msg: "no inputs".into(),
            });
        }
        let idx = parts.iter().map(|&p| self.check(p)).collect::<Result<Vec<_>, _>>()?;
        let cols = self.dims(idx[0]).1;
        for &i in &idx[1..] {
            if self.dims(i).1 != cols {
                return Err(shape_err("stack_rows", self.dims(idx[0]), self.dims(i)));
            }
        }
        let rows: usize = idx.iter().map(|&i| self.dims(i).0).sum();
        let mut out = Vec::with_capacity(rows * cols);
        for &i in &idx {
            out.extend_from_slice(self.node_value(i));
        }
        let rg = idx.iter().any(|&i| self.rg(i));
        Ok(self.push(rows, cols, out, Op::StackRows(idx), rg))
    }

    /// Selects rows of a matrix (embedding lookup).
    pub fn rows(&mut self, table: Var, ids: &[usize]) -> Result<Var, TensorError> {
        let ti = self.check(table)?;
        let (m, n) = self.dims(ti);
        if ids.is_empty() {
            return Err(TensorError::Domain {
                op: "row_select",
                msg: "no row ids".into(),
            });
        }
        if let Some(&bad) = ids.iter().find(|&&r| r >= m) {
            return Err(TensorError::Domain {
                op: "row_select",
                msg: format!("row {} out of range for {} rows", bad, m),
            });
        }
        let tv = self.node_value(ti);
        let mut out = Vec::with_capacity(ids.len() * n);
        for &r in ids {
            out.extend_from_slice(&tv[r * n..(r + 1) * n]);
        }
        let rg = self.rg(ti);
        Ok(self.push(ids.len(), n, out, Op::RowSelect(ti, ids.to_vec()), rg))
    }

    /// Multiplies by a fixed mask. Inverted dropout passes a mask of
    /// `0` or `1 / (1 - p)` entries.
    pub fn dropout_mask(&mut self, a: Var, mask: Vec<f64>) -> Result<Var, TensorError> {
        let ai = self.check(a)?;
        let (m, n) = self.dims(ai);
        if mask.len() != m * n {
            return Err(shape_err("dropout", (m, n), (1, mask.len())));
        }
        let out: Vec<f64> = self.node_value(ai).iter().zip(&mask).map(|(x, k)| x * k).collect();
        let rg = self.rg(ai);
        Ok(self.push(m, n, out, Op::Dropout(ai, mask), rg))
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Result<Var, TensorError> {
        let ai = self.check(a)?;
        let (m, n) = self.dims(ai);
        let mut out = Vec::with_capacity(m * n);
        for r in 0..m {
            out.extend(super::softmax_slice(&self.node_value(ai)[r * n..(r + 1) * n])?);
        }
        let rg = self.rg(ai);
        Ok(self.push(m, n, out, Op::Softmax(ai), rg))
    }

    /// `-log softmax(logits)[target]` for a single row of logits.
    pub fn nll(&mut self, logits: Var, target: usize) -> Result<Var, TensorError> {
        let li = self.check(logits)?;
        let (m, n) = self.dims(li);
        if m != 1 {
            return Err(shape_err("nll", (m, n), (1, n)));
        }
        if target >= n {
            return Err(TensorError::Domain {
                op: "nll",
                msg: format!("target {} out of range for {} classes", target, n),
            });
        }
        let probs = super::softmax_slice(self.node_value(li))?;
        let z = self.node_value(li);
        let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        let loss = lse - z[target];
        let rg = self.rg(li);
        let v = self.push(1, 1, vec![loss], Op::Nll(li, target), rg);
        self.nodes[v.id].saved = probs;
        Ok(v)
    }

    /// Sum of all entries.
    pub fn sum(&mut self, a: Var) -> Result<Var, TensorError> {
        let ai = self.check(a)?;
        let s = self.node_value(ai).iter().sum();
        let rg = self.rg(ai);
        Ok(self.push(1, 1, vec![s], Op::Sum(ai), rg))
    }

    /// Same values with a new shape of equal size.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var, TensorError> {
        let ai = self.check(a)?;
        let (m, n) = self.dims(ai);
        if m * n != rows * cols {
            return Err(shape_err("reshape", (m, n), (rows, cols)));
        }
        let out = self.node_value(ai).to_vec();
        let rg = self.rg(ai);
        Ok(self.push(rows, cols, out, Op::Reshape(ai), rg))
    }

    /// Sum of same-shaped inputs, added in the given order.
    pub fn add_n(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        if parts.is_empty() {
            return Err(TensorError::Domain {
                op: "add_n",
                msg: "no inputs".into(),
            });
        }
        let idx = parts.iter().map(|&p| self.check(p)).collect::<Result<Vec<_>, _>>()?;
        let d = self.dims(idx[0]);
        let mut out = vec![0.0; d.0 * d.1];
        for &i in &idx {
            if self.dims(i) != d {
                return Err(shape_err("add_n", d, self.dims(i)));
            }
            for (o, x) in out.iter_mut().zip(self.node_value(i)) {
                *o += x;
            }
        }
        let rg = idx.iter().any(|&i| self.rg(i));
        Ok(self.push(d.0, d.1, out, Op::AddN(idx), rg))
    }

    /// Replays the tape in reverse from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, TensorError> {
        let li = self.check(loss)?;
        if self.dims(li) != (1, 1) {
            return Err(TensorError::Graph(format!(
                "loss must be a scalar, got shape {:?}",
                self.dims(li)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; li + 1];
        grads[li] = Some(vec![1.0]);

        for idx in (0..=li).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let dout = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            self.backward_node(idx, &dout, &mut grads);
            grads[idx] = Some(dout);
        }

        let params = self
            .nodes
            .iter()
            .take(li + 1)
            .map(|n| match n.op {
                Op::Param(p) => Some(p),
                _ => None,
            })
            .collect();
        Ok(Gradients {
            tape: self.id,
            shapes: self.nodes.iter().map(|n| (n.rows, n.cols)).collect(),
            grads,
            params,
        })
    }

    fn backward_node(&self, idx: usize, dout: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let (m, n) = (node.rows, node.cols);
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (a, b) = (*a, *b);
                let k = self.dims(a).1;
                let av = self.node_value(a);
                let bv = self.node_value(b);
                if self.rg(a) {
                    let da = slot(grads, a, m * k);
                    for i in 0..m {
                        let drow = &dout[i * n..(i + 1) * n];
                        for l in 0..k {
                            let brow = &bv[l * n..(l + 1) * n];
                            da[i * k + l] += drow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                }
                if self.rg(b) {
                    let db = slot(grads, b, k * n);
                    for i in 0..m {
                        let drow = &dout[i * n..(i + 1) * n];
                        for l in 0..k {
                            let x = av[i * k + l];
                            let dbrow = &mut db[l * n..(l + 1) * n];
                            for (d, g) in dbrow.iter_mut().zip(drow) {
                                *d += x * g;
                            }
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for (&t, sign) in [(a, 1.0), (b, 1.0)] {
                    if self.rg(t) {
                        axpy(slot(grads, t, m * n), dout, sign);
                    }
                }
            }
            Op::Sub(a, b) => {
                for (&t, sign) in [(a, 1.0), (b, -1.0)] {
                    if self.rg(t) {
                        axpy(slot(grads, t, m * n), dout, sign);
                    }
                }
            }
            Op::AddRow(a, b) => {
                if self.rg(*a) {
                    axpy(slot(grads, *a, m * n), dout, 1.0);
                }
                if self.rg(*b) {
                    let db = slot(grads, *b, n);
                    for r in 0..m {
                        axpy(db, &dout[r * n..(r + 1) * n], 1.0);
                    }
                }
            }
            Op::Mul(a, b) => {
                let (a, b) = (*a, *b);
                if self.rg(a) {
                    let bv = self.node_value(b);
                    let da = slot(grads, a, m * n);
                    for ((d, g), y) in da.iter_mut().zip(dout).zip(bv) {
                        *d += g * y;
                    }
                }
                if self.rg(b) {
                    let av = self.node_value(a);
                    let db = slot(grads, b, m * n);
                    for ((d, g), x) in db.iter_mut().zip(dout).zip(av) {
                        *d += g * x;
                    }
                }
            }
            Op::Tanh(a) => {
                let y = &node.value;
                let da = slot(grads, *a, m * n);
                for ((d, g), y) in da.iter_mut().zip(dout).zip(y) {
                    *d += g * (1.0 - y * y);
                }
            }
            Op::Sigmoid(a) => {
                let y = &node.value;
                let da = slot(grads, *a, m * n);
                for ((d, g), y) in da.iter_mut().zip(dout).zip(y) {
                    *d += g * y * (1.0 - y);
                }
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let c = self.dims(p).1;
                    if self.rg(p) {
                        let dp = slot(grads, p, m * c);
                        for r in 0..m {
                            axpy(
                                &mut dp[r * c..(r + 1) * c],
                                &dout[r * n + offset..r * n + offset + c],
                                1.0,
                            );
                        }
                    }
                    offset += c;
                }
            }
            Op::StackRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.dims(p).0 * n;
                    if self.rg(p) {
                        axpy(slot(grads, p, len), &dout[offset..offset + len], 1.0);
                    }
                    offset += len;
                }
            }
            Op::RowSelect(t, ids) => {
                let rows = self.dims(*t).0;
                let dt = slot(grads, *t, rows * n);
                for (k, &r) in ids.iter().enumerate() {
                    axpy(&mut dt[r * n..(r + 1) * n], &dout[k * n..(k + 1) * n], 1.0);
                }
            }
            Op::Dropout(a, mask) => {
                let da = slot(grads, *a, m * n);
                for ((d, g), k) in da.iter_mut().zip(dout).zip(mask) {
                    *d += g * k;
                }
            }
            Op::Softmax(a) => {
                let y = &node.value;
                let da = slot(grads, *a, m * n);
                for r in 0..m {
                    let yr = &y[r * n..(r + 1) * n];
                    let gr = &dout[r * n..(r + 1) * n];
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for c in 0..n {
                        da[r * n + c] += yr[c] * (gr[c] - dot);
                    }
                }
            }
            Op::Nll(l, target) => {
                let probs = &node.saved;
                let g = dout[0];
                let dl = slot(grads, *l, probs.len());
                for (c, p) in probs.iter().enumerate() {
                    let onehot = if c == *target { 1.0 } else { 0.0 };
                    dl[c] += g * (p - onehot);
                }
            }
            Op::Sum(a) => {
                let (r, c) = self.dims(*a);
                let da = slot(grads, *a, r * c);
                for d in da.iter_mut() {
                    *d += dout[0];
                }
            }
            Op::Reshape(a) => axpy(slot(grads, *a, m * n), dout, 1.0),
            Op::AddN(parts) => {
                for &p in parts {
                    if self.rg(p) {
                        axpy(slot(grads, p, m * n), dout, 1.0);
                    }
                }
            }
        }
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], idx: usize, len: usize) -> &mut Vec<f64> {
    grads[idx].get_or_insert_with(|| vec![0.0; len])
}

fn axpy(dst: &mut [f64], src: &[f64], alpha: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += alpha * s;
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Result of [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    tape: u64,
    shapes: Vec<(usize, usize)>,
    grads: Vec<Option<Vec<f64>>>,
    params: Vec<Option<ParamId>>,
}

impl Gradients {
    /// Gradient with respect to a recorded value; zero if it did not
    /// influence the loss.
    pub fn grad(&self, v: Var) -> Vec<f64> {
        assert_eq!(v.tape, self.tape, "value from a different tape");
        let (r, c) = self.shapes[v.id];
        self.grads
            .get(v.id)
            .and_then(|g| g.clone())
            .unwrap_or_else(|| vec![0.0; r * c])
    }

    /// Gradients of every parameter that was read on the tape.
    pub fn param_grads(&self) -> ParamGrads {
        let mut out = ParamGrads::new();
        for (idx, p) in self.params.iter().enumerate() {
            if let (Some(p), Some(g)) = (p, &self.grads[idx]) {
                out.accumulate(*p, g);
            }
        }
        out
    }

    /// Adds this tape's parameter gradients into `acc`.
    pub fn accumulate_into(&self, acc: &mut ParamGrads) {
        for (idx, p) in self.params.iter().enumerate() {
            if let (Some(p), Some(g)) = (p, &self.grads[idx]) {
                acc.accumulate(*p, g);
            }
        }
    }
}
