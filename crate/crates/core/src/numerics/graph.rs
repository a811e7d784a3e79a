//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Graph`] records every operation in execution order, so the tape is
//! topologically sorted by construction. [`Graph::backward`] walks it in
//! reverse and adds the resulting parameter gradients into a [`ParamStore`].
//!
//! ```
//! use mixtag::numerics::{Graph, ParamStore, Tensor};
//!
//! let mut store = ParamStore::new();
//! let x = store.add("x", Tensor::row(vec![3.0]));
//!
//! let mut g = Graph::new();
//! let xv = g.param(&store, x);
//! let sq = g.mul(xv, xv).unwrap();
//! let loss = g.sum(sq);
//! g.backward(loss, &mut store).unwrap();
//! assert_eq!(store.get(x).grad(), &[6.0]);
//! ```

use std::collections::HashMap;

use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Handle to a tensor owned by a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named, ordered collection of trainable tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a tensor; it is marked `requires_grad`.
    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        let id = ParamId(self.tensors.len());
        self.names.push(name.into());
        self.tensors.push(tensor.with_grad());
        id
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(self.tensors.iter())
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::zero_grad);
    }

    /// Adds `other`'s gradients into this store; layouts must match.
    pub fn add_grads_from(&mut self, other: &ParamStore) {
        for (dst, src) in self.tensors.iter_mut().zip(&other.tensors) {
            for (d, s) in dst.grad_mut().iter_mut().zip(src.grad()) {
                *d += s;
            }
        }
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
    Sigmoid(Var),
    Tanh(Var),
    SoftmaxRows(Var),
    ConcatCols(Var, Var),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    GatherRows(Var, Vec<usize>),
    Transpose(Var),
    Scale(Var, f64),
    Sum(Var),
    Pick(Var, Vec<usize>),
    LogFloor(Var, f64),
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    requires_grad: bool,
}

/// Elementwise operation selector for [`Graph::elementwise`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Elementwise {
    Add,
    Sub,
    Mul,
    Sigmoid,
    Tanh,
}

/// Operation tape for one computation (typically one sentence).
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Vec<f64>>,
    params: Vec<(Var, ParamId)>,
    param_vars: HashMap<ParamId, Var>,
}

fn matrix_dims(shape: &[usize]) -> Option<(usize, usize)> {
    match shape {
        [r, c] => Some((*r, *c)),
        _ => None,
    }
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

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, requires_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            shape,
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records a tensor that never receives gradients.
    pub fn constant(&mut self, t: &Tensor) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf, false)
    }

    /// Records an owned constant without copying.
    pub fn constant_owned(&mut self, t: Tensor) -> Var {
        let shape = t.shape().to_vec();
        self.push(shape, t.into_data(), Op::Leaf, false)
    }

    /// Records a parameter leaf. Repeated calls return the same [`Var`].
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let t = store.get(id);
        let v = self.push(
            t.shape().to_vec(),
            t.data().to_vec(),
            Op::Leaf,
            t.requires_grad(),
        );
        self.params.push((v, id));
        self.param_vars.insert(id, v);
        v
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    /// Copies a recorded value out as a fresh tensor.
    pub fn tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor::new(&n.shape, n.value.clone()).expect("recorded shapes are valid")
    }

    /// Gradient of the last [`Graph::backward`] root with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads
            .get(v.0)
            .filter(|g| !g.is_empty())
            .map(Vec::as_slice)
    }

    fn mat(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        matrix_dims(&self.nodes[v.0].shape).ok_or_else(|| Error::Dimension {
            op,
            left: self.nodes[v.0].shape.clone(),
            right: vec![],
        })
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        if self.nodes[a.0].shape != self.nodes[b.0].shape {
            return Err(Error::Dimension {
                op,
                left: self.nodes[a.0].shape.clone(),
                right: self.nodes[b.0].shape.clone(),
            });
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.mat(a, "matmul")?;
        let (k2, n) = self.mat(b, "matmul")?;
        if k != k2 {
            return Err(Error::Dimension {
                op: "matmul",
                left: vec![m, k],
                right: vec![k2, n],
            });
        }
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let orow = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let x = av[i * k + p];
                if x == 0.0 {
                    continue;
                }
                let brow = &bv[p * n..(p + 1) * n];
                for (o, &bb) in orow.iter_mut().zip(brow) {
                    *o += x * bb;
                }
            }
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(vec![m, n], out, Op::MatMul(a, b), rg))
    }

    pub fn elementwise(&mut self, kind: Elementwise, a: Var, b: Option<Var>) -> Result<Var> {
        let need_b = || Error::Contract(format!("{kind:?} needs two operands"));
        match kind {
            Elementwise::Add => self.add(a, b.ok_or_else(need_b)?),
            Elementwise::Sub => self.sub(a, b.ok_or_else(need_b)?),
            Elementwise::Mul => self.mul(a, b.ok_or_else(need_b)?),
            Elementwise::Sigmoid => Ok(self.sigmoid(a)),
            Elementwise::Tanh => Ok(self.tanh(a)),
        }
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var> {
        self.same_shape(a, b, name)?;
        let out = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(&x, &y)| f(x, y))
            .collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(self.nodes[a.0].shape.clone(), out, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", Op::Mul(a, b), |x, y| x * y)
    }

    /// Adds a `1 × n` (or length-`n`) bias to every row of an `m × n` matrix.
    /// This is the only broadcast the kernel supports.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (m, n) = self.mat(a, "add_row")?;
        let bshape = &self.nodes[bias.0].shape;
        let ok = matches!(bshape.as_slice(), [1, c] if *c == n) || bshape.as_slice() == [n];
        if !ok {
            return Err(Error::Dimension {
                op: "add_row",
                left: vec![m, n],
                right: bshape.clone(),
            });
        }
        let bv = &self.nodes[bias.0].value;
        let mut out = self.nodes[a.0].value.clone();
        for row in out.chunks_mut(n) {
            for (o, &b) in row.iter_mut().zip(bv) {
                *o += b;
            }
        }
        let rg = self.rg(a) || self.rg(bias);
        Ok(self.push(vec![m, n], out, Op::AddRow(a, bias), rg))
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let out = self.nodes[a.0].value.iter().map(|&x| f(x)).collect();
        let rg = self.rg(a);
        self.push(self.nodes[a.0].shape.clone(), out, op, rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), |x| {
            if x >= 0.0 {
                1.0 / (1.0 + (-x).exp())
            } else {
                let e = x.exp();
                e / (1.0 + e)
            }
        })
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), f64::tanh)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::Scale(a, c), |x| x * c)
    }

    /// `ln(max(x, floor))`; the gradient is zero where the floor is active.
    pub fn log_floor(&mut self, a: Var, floor: f64) -> Var {
        self.unary(a, Op::LogFloor(a, floor), |x| x.max(floor).ln())
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.mat(a, "softmax_rows")?;
        let mut out = self.nodes[a.0].value.clone();
        for row in out.chunks_mut(n) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                total += *x;
            }
            for x in row.iter_mut() {
                *x /= total;
            }
        }
        let rg = self.rg(a);
        Ok(self.push(vec![m, n], out, Op::SoftmaxRows(a), rg))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, p) = self.mat(a, "concat_cols")?;
        let (m2, q) = self.mat(b, "concat_cols")?;
        if m != m2 {
            return Err(Error::Dimension {
                op: "concat_cols",
                left: vec![m, p],
                right: vec![m2, q],
            });
        }
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        let mut out = Vec::with_capacity(m * (p + q));
        for i in 0..m {
            out.extend_from_slice(&av[i * p..(i + 1) * p]);
            out.extend_from_slice(&bv[i * q..(i + 1) * q]);
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(vec![m, p + q], out, Op::ConcatCols(a, b), rg))
    }

    /// Stacks matrices with equal column counts on top of each other.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Contract("concat_rows of nothing".into()))?;
        let (_, n) = self.mat(first, "concat_rows")?;
        let mut rows = 0;
        let mut out = Vec::new();
        let mut rg = false;
        for &p in parts {
            let (r, c) = self.mat(p, "concat_rows")?;
            if c != n {
                return Err(Error::Dimension {
                    op: "concat_rows",
                    left: vec![rows, n],
                    right: vec![r, c],
                });
            }
            rows += r;
            out.extend_from_slice(&self.nodes[p.0].value);
            rg |= self.rg(p);
        }
        Ok(self.push(vec![rows, n], out, Op::ConcatRows(parts.to_vec()), rg))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.mat(a, "slice_rows")?;
        if len == 0 || start + len > m {
            return Err(Error::Dimension {
                op: "slice_rows",
                left: vec![m, n],
                right: vec![start, start + len],
            });
        }
        let out = self.nodes[a.0].value[start * n..(start + len) * n].to_vec();
        let rg = self.rg(a);
        Ok(self.push(vec![len, n], out, Op::SliceRows(a, start), rg))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.mat(a, "slice_cols")?;
        if len == 0 || start + len > n {
            return Err(Error::Dimension {
                op: "slice_cols",
                left: vec![m, n],
                right: vec![start, start + len],
            });
        }
        let av = &self.nodes[a.0].value;
        let mut out = Vec::with_capacity(m * len);
        for i in 0..m {
            out.extend_from_slice(&av[i * n + start..i * n + start + len]);
        }
        let rg = self.rg(a);
        Ok(self.push(vec![m, len], out, Op::SliceCols(a, start), rg))
    }

    /// Row lookup: output row `i` is row `ids[i]` of `table`.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (m, n) = self.mat(table, "gather_rows")?;
        if ids.is_empty() {
            return Err(Error::Contract("gather_rows needs at least one id".into()));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= m) {
            return Err(Error::Dimension {
                op: "gather_rows",
                left: vec![m, n],
                right: vec![bad],
            });
        }
        let tv = &self.nodes[table.0].value;
        let mut out = Vec::with_capacity(ids.len() * n);
        for &i in ids {
            out.extend_from_slice(&tv[i * n..(i + 1) * n]);
        }
        let rg = self.rg(table);
        Ok(self.push(
            vec![ids.len(), n],
            out,
            Op::GatherRows(table, ids.to_vec()),
            rg,
        ))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.mat(a, "transpose")?;
        let av = &self.nodes[a.0].value;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = av[i * n + j];
            }
        }
        let rg = self.rg(a);
        Ok(self.push(vec![n, m], out, Op::Transpose(a), rg))
    }

    /// Sum of all entries, as a one-element tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].value.iter().sum();
        let rg = self.rg(a);
        self.push(vec![1], vec![s], Op::Sum(a), rg)
    }

    /// Picks `a[t, cols[t]]` from each row of an `n × k` matrix, giving `[n]`.
    pub fn pick(&mut self, a: Var, cols: &[usize]) -> Result<Var> {
        let (m, n) = self.mat(a, "pick")?;
        if cols.len() != m {
            return Err(Error::Dimension {
                op: "pick",
                left: vec![m, n],
                right: vec![cols.len()],
            });
        }
        if let Some(&bad) = cols.iter().find(|&&c| c >= n) {
            return Err(Error::Contract(format!(
                "pick column {bad} out of range for width {n}"
            )));
        }
        let av = &self.nodes[a.0].value;
        let out = cols.iter().enumerate().map(|(i, &c)| av[i * n + c]).collect();
        let rg = self.rg(a);
        Ok(self.push(vec![m], out, Op::Pick(a, cols.to_vec()), rg))
    }

    /// Reverse pass from a one-element `root`.
    ///
    /// Gradients of parameter leaves are added (`+=`) into `store`; the
    /// caller zeroes them between optimisation steps.
    pub fn backward(&mut self, root: Var, store: &mut ParamStore) -> Result<()> {
        self.backward_nodes(root)?;
        for &(v, id) in &self.params {
            let g = &self.grads[v.0];
            if g.is_empty() {
                continue;
            }
            let dst = store.get_mut(id);
            if !dst.requires_grad() {
                continue;
            }
            for (d, s) in dst.grad_mut().iter_mut().zip(g) {
                *d += s;
            }
        }
        Ok(())
    }

    /// Reverse pass that only fills per-node gradients (see [`Graph::grad`]).
    pub fn backward_nodes(&mut self, root: Var) -> Result<()> {
        if self.nodes[root.0].value.len() != 1 {
            return Err(Error::Contract(format!(
                "backward root must be a single element, got shape {:?}",
                self.nodes[root.0].shape
            )));
        }
        let mut grads: Vec<Vec<f64>> = vec![Vec::new(); self.nodes.len()];
        grads[root.0] = vec![1.0];
        for idx in (0..=root.0).rev() {
            if grads[idx].is_empty() || !self.nodes[idx].requires_grad {
                continue;
            }
            let gout = std::mem::take(&mut grads[idx]);
            self.propagate(idx, &gout, &mut grads);
            grads[idx] = gout;
        }
        self.grads = grads;
        Ok(())
    }

    fn acc<'g>(&self, grads: &'g mut [Vec<f64>], v: Var) -> Option<&'g mut Vec<f64>> {
        if !self.nodes[v.0].requires_grad {
            return None;
        }
        let g = &mut grads[v.0];
        if g.is_empty() {
            *g = vec![0.0; self.nodes[v.0].value.len()];
        }
        Some(g)
    }

    fn propagate(&self, idx: usize, gout: &[f64], grads: &mut [Vec<f64>]) {
        let node = &self.nodes[idx];
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = matrix_dims(&self.nodes[a.0].shape).unwrap();
                let n = node.shape[1];
                let av = &self.nodes[a.0].value;
                let bv = &self.nodes[b.0].value;
                if let Some(ga) = self.acc(grads, *a) {
                    for i in 0..m {
                        let grow = &gout[i * n..(i + 1) * n];
                        for p in 0..k {
                            let brow = &bv[p * n..(p + 1) * n];
                            let dot: f64 = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
                            ga[i * k + p] += dot;
                        }
                    }
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for i in 0..m {
                        let grow = &gout[i * n..(i + 1) * n];
                        for p in 0..k {
                            let x = av[i * k + p];
                            if x == 0.0 {
                                continue;
                            }
                            for (d, &gg) in gb[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                *d += x * gg;
                            }
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                if let Some(ga) = self.acc(grads, *a) {
                    add_into(ga, gout);
                }
                if let Some(gb) = self.acc(grads, *b) {
                    add_into(gb, gout);
                }
            }
            Op::Sub(a, b) => {
                if let Some(ga) = self.acc(grads, *a) {
                    add_into(ga, gout);
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for (d, g) in gb.iter_mut().zip(gout) {
                        *d -= g;
                    }
                }
            }
            Op::Mul(a, b) => {
                let bv = &self.nodes[b.0].value;
                let av = &self.nodes[a.0].value;
                if let Some(ga) = self.acc(grads, *a) {
                    for ((d, g), x) in ga.iter_mut().zip(gout).zip(bv) {
                        *d += g * x;
                    }
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for ((d, g), x) in gb.iter_mut().zip(gout).zip(av) {
                        *d += g * x;
                    }
                }
            }
            Op::AddRow(a, bias) => {
                let n = node.shape[1];
                if let Some(ga) = self.acc(grads, *a) {
                    add_into(ga, gout);
                }
                if let Some(gb) = self.acc(grads, *bias) {
                    for row in gout.chunks(n) {
                        add_into(gb, row);
                    }
                }
            }
            Op::Sigmoid(a) => {
                if let Some(ga) = self.acc(grads, *a) {
                    for ((d, g), s) in ga.iter_mut().zip(gout).zip(y) {
                        *d += g * s * (1.0 - s);
                    }
                }
            }
            Op::Tanh(a) => {
                if let Some(ga) = self.acc(grads, *a) {
                    for ((d, g), t) in ga.iter_mut().zip(gout).zip(y) {
                        *d += g * (1.0 - t * t);
                    }
                }
            }
            Op::Scale(a, c) => {
                if let Some(ga) = self.acc(grads, *a) {
                    for (d, g) in ga.iter_mut().zip(gout) {
                        *d += g * c;
                    }
                }
            }
            Op::LogFloor(a, floor) => {
                let av = &self.nodes[a.0].value;
                if let Some(ga) = self.acc(grads, *a) {
                    for ((d, g), &x) in ga.iter_mut().zip(gout).zip(av) {
                        if x > *floor {
                            *d += g / x;
                        }
                    }
                }
            }
            Op::SoftmaxRows(a) => {
                let n = node.shape[1];
                if let Some(ga) = self.acc(grads, *a) {
                    for ((drow, grow), yrow) in ga.chunks_mut(n).zip(gout.chunks(n)).zip(y.chunks(n))
                    {
                        let dot: f64 = grow.iter().zip(yrow).map(|(g, y)| g * y).sum();
                        for ((d, g), y) in drow.iter_mut().zip(grow).zip(yrow) {
                            *d += y * (g - dot);
                        }
                    }
                }
            }
            Op::ConcatCols(a, b) => {
                let p = self.nodes[a.0].shape[1];
                let q = self.nodes[b.0].shape[1];
                if let Some(ga) = self.acc(grads, *a) {
                    for (drow, grow) in ga.chunks_mut(p).zip(gout.chunks(p + q)) {
                        add_into(drow, &grow[..p]);
                    }
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for (drow, grow) in gb.chunks_mut(q).zip(gout.chunks(p + q)) {
                        add_into(drow, &grow[p..]);
                    }
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = self.nodes[p.0].value.len();
                    if let Some(gp) = self.acc(grads, *p) {
                        add_into(gp, &gout[offset..offset + len]);
                    }
                    offset += len;
                }
            }
            Op::SliceRows(a, start) => {
                let n = node.shape[1];
                if let Some(ga) = self.acc(grads, *a) {
                    add_into(&mut ga[start * n..start * n + gout.len()], gout);
                }
            }
            Op::SliceCols(a, start) => {
                let n = self.nodes[a.0].shape[1];
                let len = node.shape[1];
                if let Some(ga) = self.acc(grads, *a) {
                    for (drow, grow) in ga.chunks_mut(n).zip(gout.chunks(len)) {
                        add_into(&mut drow[*start..start + len], grow);
                    }
                }
            }
            Op::GatherRows(table, ids) => {
                let n = node.shape[1];
                if let Some(gt) = self.acc(grads, *table) {
                    for (r, &i) in ids.iter().enumerate() {
                        add_into(&mut gt[i * n..(i + 1) * n], &gout[r * n..(r + 1) * n]);
                    }
                }
            }
            Op::Transpose(a) => {
                let (m, n) = matrix_dims(&self.nodes[a.0].shape).unwrap();
                if let Some(ga) = self.acc(grads, *a) {
                    for i in 0..m {
                        for j in 0..n {
                            ga[i * n + j] += gout[j * m + i];
                        }
                    }
                }
            }
            Op::Sum(a) => {
                if let Some(ga) = self.acc(grads, *a) {
                    ga.iter_mut().for_each(|d| *d += gout[0]);
                }
            }
            Op::Pick(a, cols) => {
                let n = self.nodes[a.0].shape[1];
                if let Some(ga) = self.acc(grads, *a) {
                    for (i, &c) in cols.iter().enumerate() {
                        ga[i * n + c] += gout[i];
                    }
                }
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
