//! Wengert-list reverse-mode differentiation.
//!
//! Every op appends one node holding its forward value; `backward` walks the
//! list once in reverse. Parameter leaves borrow their data from the owning
//! [`Tensor`], so independent tapes over the same parameters can run on
//! different threads.

use std::borrow::Cow;

use crate::error::{Result, TensorError};
use crate::kernels;
use crate::tensor::{Shape, Tensor};

pub const LAYERNORM_EPS: f64 = 1e-5;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(u32);

impl Var {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Leaf,
    Add,
    Sub,
    Mul,
    Scale,
    AddN,
    Outer,
    MatVec,
    Affine,
    Concat,
    Slice,
    Row,
    Tanh,
    Sigmoid,
    Relu,
    Sum,
    Dot,
    LayerNorm,
    SoftmaxXent,
    MaxN,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddN(Vec<Var>),
    Outer(Var, Var),
    MatVec(Var, Var),
    Affine {
        w: Var,
        x: Var,
        b: Var,
    },
    Concat(Vec<Var>),
    Slice {
        x: Var,
        start: usize,
    },
    Row {
        table: Var,
        row: usize,
    },
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Sum(Var),
    Dot(Var, Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: f64,
    },
    SoftmaxXent {
        logits: Var,
        gold: usize,
        probs: Vec<f64>,
    },
    MaxN {
        inputs: Vec<Var>,
        argmax: Vec<u32>,
    },
}

impl Op {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::Add(..) => OpKind::Add,
            Op::Sub(..) => OpKind::Sub,
            Op::Mul(..) => OpKind::Mul,
            Op::Scale(..) => OpKind::Scale,
            Op::AddN(_) => OpKind::AddN,
            Op::Outer(..) => OpKind::Outer,
            Op::MatVec(..) => OpKind::MatVec,
            Op::Affine { .. } => OpKind::Affine,
            Op::Concat(_) => OpKind::Concat,
            Op::Slice { .. } => OpKind::Slice,
            Op::Row { .. } => OpKind::Row,
            Op::Tanh(_) => OpKind::Tanh,
            Op::Sigmoid(_) => OpKind::Sigmoid,
            Op::Relu(_) => OpKind::Relu,
            Op::Sum(_) => OpKind::Sum,
            Op::Dot(..) => OpKind::Dot,
            Op::LayerNorm { .. } => OpKind::LayerNorm,
            Op::SoftmaxXent { .. } => OpKind::SoftmaxXent,
            Op::MaxN { .. } => OpKind::MaxN,
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Outer(a, b) | Op::MatVec(a, b) | Op::Dot(a, b) => {
                vec![*a, *b]
            }
            Op::Scale(a, _) | Op::Tanh(a) | Op::Sigmoid(a) | Op::Relu(a) | Op::Sum(a) => vec![*a],
            Op::AddN(v) | Op::Concat(v) => v.clone(),
            Op::MaxN { inputs, .. } => inputs.clone(),
            Op::Affine { w, x, b } => vec![*w, *x, *b],
            Op::Slice { x, .. } => vec![*x],
            Op::Row { table, .. } => vec![*table],
            Op::LayerNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
            Op::SoftmaxXent { logits, .. } => vec![*logits],
        }
    }
}

struct Node<'p> {
    value: Cow<'p, [f64]>,
    shape: Shape,
    op: Op,
    requires_grad: bool,
}

/// Read-only view of one recorded node.
#[derive(Debug, Clone)]
pub struct TapeNode {
    pub op_kind: OpKind,
    pub input_ids: Vec<Var>,
}

#[derive(Default)]
pub struct Tape<'p> {
    nodes: Vec<Node<'p>>,
}

/// Gradients of a scalar w.r.t. every node that requires one.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.index()).and_then(|g| g.as_deref())
    }

    /// Gradient for `v`, or zeros of length `len` when nothing flowed there.
    pub fn get_or_zeros(&self, v: Var, len: usize) -> Cow<'_, [f64]> {
        match self.get(v) {
            Some(g) => Cow::Borrowed(g),
            None => Cow::Owned(vec![0.0; len]),
        }
    }
}

fn vec_len(op: &'static str, s: Shape) -> Result<usize> {
    s.len().ok_or_else(|| TensorError::dim(op, "vector", s))
}

impl<'p> Tape<'p> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, v: Var) -> TapeNode {
        let n = &self.nodes[v.index()];
        TapeNode {
            op_kind: n.op.kind(),
            input_ids: n.op.inputs(),
        }
    }

    fn push(&mut self, value: Cow<'p, [f64]>, shape: Shape, op: Op, requires_grad: bool) -> Var {
        debug_assert_eq!(value.len(), shape.numel());
        let id = Var(self.nodes.len() as u32);
        self.nodes.push(Node {
            value,
            shape,
            op,
            requires_grad,
        });
        id
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.index()].requires_grad)
    }

    /// Leaf that takes no gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        let shape = t.shape();
        self.push(Cow::Owned(t.into_data()), shape, Op::Leaf, false)
    }

    pub fn constant_vector(&mut self, data: Vec<f64>) -> Result<Var> {
        Ok(self.constant(Tensor::vector(data)?))
    }

    /// Owned leaf; takes a gradient iff `t.requires_grad`.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let shape = t.shape();
        let rg = t.requires_grad;
        self.push(Cow::Owned(t.into_data()), shape, Op::Leaf, rg)
    }

    /// Borrowed leaf that always takes a gradient.
    pub fn param(&mut self, t: &'p Tensor) -> Var {
        self.push(Cow::Borrowed(t.data()), t.shape(), Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.index()].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.index()].shape
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.index()].requires_grad
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        Tensor::new(self.shape(v), self.value(v).to_vec()).expect("tape node shapes are valid")
    }

    pub fn scalar(&self, v: Var) -> Result<f64> {
        let s = self.shape(v);
        if !s.is_scalar() {
            return Err(TensorError::NotScalar { op: "scalar", shape: s });
        }
        Ok(self.value(v)[0])
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<Shape> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(TensorError::dim(op, sa, sb));
        }
        Ok(sa)
    }

    fn zip_map(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, rec: Op) -> Result<Var> {
        let shape = self.same_shape(op, a, b)?;
        let out: Vec<f64> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let rg = self.rg(&[a, b]);
        Ok(self.push(Cow::Owned(out), shape, rec, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_map("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_map("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_map("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out: Vec<f64> = self.value(a).iter().map(|x| x * s).collect();
        let (shape, rg) = (self.shape(a), self.rg(&[a]));
        self.push(Cow::Owned(out), shape, Op::Scale(a, s), rg)
    }

    /// Sum of same-shaped operands, accumulated left to right.
    pub fn add_n(&mut self, vars: &[Var]) -> Result<Var> {
        let first = *vars.first().ok_or_else(|| TensorError::arg("add_n", "no operands"))?;
        let shape = self.shape(first);
        let mut out = vec![0.0; shape.numel()];
        for &v in vars {
            if self.shape(v) != shape {
                return Err(TensorError::dim("add_n", shape, self.shape(v)));
            }
            kernels::axpy(1.0, self.value(v), &mut out);
        }
        let rg = self.rg(vars);
        Ok(self.push(Cow::Owned(out), shape, Op::AddN(vars.to_vec()), rg))
    }

    pub fn mean_n(&mut self, vars: &[Var]) -> Result<Var> {
        let s = self.add_n(vars)?;
        Ok(self.scale(s, 1.0 / vars.len() as f64))
    }

    /// Element-wise maximum over same-shaped operands; the first maximiser wins ties.
    pub fn max_n(&mut self, vars: &[Var]) -> Result<Var> {
        let first = *vars.first().ok_or_else(|| TensorError::arg("max_n", "no operands"))?;
        let shape = self.shape(first);
        let mut out = self.value(first).to_vec();
        let mut argmax = vec![0u32; out.len()];
        for (k, &v) in vars.iter().enumerate().skip(1) {
            if self.shape(v) != shape {
                return Err(TensorError::dim("max_n", shape, self.shape(v)));
            }
            for (i, &x) in self.value(v).iter().enumerate() {
                if x > out[i] {
                    out[i] = x;
                    argmax[i] = k as u32;
                }
            }
        }
        let rg = self.rg(vars);
        Ok(self.push(
            Cow::Owned(out),
            shape,
            Op::MaxN {
                inputs: vars.to_vec(),
                argmax,
            },
            rg,
        ))
    }

    pub fn outer(&mut self, u: Var, v: Var) -> Result<Var> {
        let (su, sv) = (self.shape(u), self.shape(v));
        let n = match (su, sv) {
            (Shape::Vector(n), Shape::Vector(m)) if n == m => n,
            _ => return Err(TensorError::dim("outer", su, sv)),
        };
        let mut out = vec![0.0; n * n];
        kernels::outer(self.value(u), self.value(v), &mut out);
        let rg = self.rg(&[u, v]);
        Ok(self.push(Cow::Owned(out), Shape::Matrix(n, n), Op::Outer(u, v), rg))
    }

    pub fn matvec(&mut self, m: Var, v: Var) -> Result<Var> {
        let (sm, sv) = (self.shape(m), self.shape(v));
        let (r, c) = match (sm, sv) {
            (Shape::Matrix(r, c), Shape::Vector(n)) if c == n => (r, c),
            _ => return Err(TensorError::dim("matvec", "[r x n]·[n]", format!("{sm}·{sv}"))),
        };
        let mut out = vec![0.0; r];
        kernels::matvec(self.value(m), c, self.value(v), &mut out);
        let rg = self.rg(&[m, v]);
        Ok(self.push(Cow::Owned(out), Shape::Vector(r), Op::MatVec(m, v), rg))
    }

    /// `w x + b`.
    pub fn affine(&mut self, w: Var, x: Var, b: Var) -> Result<Var> {
        let (sw, sx, sb) = (self.shape(w), self.shape(x), self.shape(b));
        let (r, c) = match (sw, sx, sb) {
            (Shape::Matrix(r, c), Shape::Vector(n), Shape::Vector(nb)) if c == n && nb == r => (r, c),
            _ => {
                return Err(TensorError::dim(
                    "affine",
                    "[r x n]·[n] + [r]",
                    format!("{sw}·{sx} + {sb}"),
                ))
            }
        };
        let mut out = self.value(b).to_vec();
        for (o, row) in out.iter_mut().zip(self.value(w).chunks_exact(c)) {
            *o += kernels::dot(row, self.value(x));
        }
        let rg = self.rg(&[w, x, b]);
        Ok(self.push(Cow::Owned(out), Shape::Vector(r), Op::Affine { w, x, b }, rg))
    }

    /// Concatenation of vectors.
    pub fn concat(&mut self, vars: &[Var]) -> Result<Var> {
        if vars.is_empty() {
            return Err(TensorError::arg("concat", "no operands"));
        }
        let mut out = Vec::new();
        for &v in vars {
            vec_len("concat", self.shape(v))?;
            out.extend_from_slice(self.value(v));
        }
        let n = out.len();
        let rg = self.rg(vars);
        Ok(self.push(Cow::Owned(out), Shape::Vector(n), Op::Concat(vars.to_vec()), rg))
    }

    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let n = vec_len("slice", self.shape(x))?;
        if len == 0 || start + len > n {
            return Err(TensorError::Index {
                op: "slice",
                index: start + len,
                len: n,
            });
        }
        let out = self.value(x)[start..start + len].to_vec();
        let rg = self.rg(&[x]);
        Ok(self.push(Cow::Owned(out), Shape::Vector(len), Op::Slice { x, start }, rg))
    }

    /// Row `row` of a matrix, as a vector.
    pub fn row(&mut self, table: Var, row: usize) -> Result<Var> {
        let (r, c) = match self.shape(table) {
            Shape::Matrix(r, c) => (r, c),
            s => return Err(TensorError::dim("row", "matrix", s)),
        };
        if row >= r {
            return Err(TensorError::Index {
                op: "row",
                index: row,
                len: r,
            });
        }
        let out = self.value(table)[row * c..(row + 1) * c].to_vec();
        let rg = self.rg(&[table]);
        Ok(self.push(Cow::Owned(out), Shape::Vector(c), Op::Row { table, row }, rg))
    }

    fn map(&mut self, x: Var, f: impl Fn(f64) -> f64, rec: Op) -> Var {
        let out: Vec<f64> = self.value(x).iter().map(|&v| f(v)).collect();
        let (shape, rg) = (self.shape(x), self.rg(&[x]));
        self.push(Cow::Owned(out), shape, rec, rg)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.map(x, f64::tanh, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, kernels::sigmoid, Op::Sigmoid(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.map(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().sum();
        let rg = self.rg(&[x]);
        self.push(Cow::Owned(vec![s]), Shape::Vector(1), Op::Sum(x), rg)
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.same_shape("dot", a, b)?;
        vec_len("dot", sa)?;
        let s = kernels::dot(self.value(a), self.value(b));
        let rg = self.rg(&[a, b]);
        Ok(self.push(Cow::Owned(vec![s]), Shape::Vector(1), Op::Dot(a, b), rg))
    }

    /// `gamma * (x - mean) / sqrt(var + eps) + beta` over a vector of length ≥ 2.
    pub fn layernorm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let n = vec_len("layernorm", self.shape(x))?;
        if n < 2 {
            return Err(TensorError::dim("layernorm", "length >= 2", n));
        }
        for p in [gamma, beta] {
            if self.shape(p) != Shape::Vector(n) {
                return Err(TensorError::dim("layernorm", Shape::Vector(n), self.shape(p)));
            }
        }
        let xs = self.value(x);
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let inv_std = 1.0 / (var + LAYERNORM_EPS).sqrt();
        let xhat: Vec<f64> = xs.iter().map(|v| (v - mean) * inv_std).collect();
        let out: Vec<f64> = xhat
            .iter()
            .zip(self.value(gamma))
            .zip(self.value(beta))
            .map(|((h, g), b)| h * g + b)
            .collect();
        let rg = self.rg(&[x, gamma, beta]);
        Ok(self.push(
            Cow::Owned(out),
            Shape::Vector(n),
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

    /// Softmax cross-entropy `logsumexp(logits) - logits[gold]`.
    pub fn softmax_xent(&mut self, logits: Var, gold: usize) -> Result<Var> {
        let c = vec_len("softmax_xent", self.shape(logits))?;
        if c < 2 {
            return Err(TensorError::dim("softmax_xent", "at least 2 classes", c));
        }
        if gold >= c {
            return Err(TensorError::Index {
                op: "softmax_xent",
                index: gold,
                len: c,
            });
        }
        let z = self.value(logits);
        let lse = kernels::log_sum_exp(z);
        let loss = lse - z[gold];
        let probs: Vec<f64> = z.iter().map(|v| (v - lse).exp()).collect();
        let rg = self.rg(&[logits]);
        Ok(self.push(
            Cow::Owned(vec![loss]),
            Shape::Vector(1),
            Op::SoftmaxXent { logits, gold, probs },
            rg,
        ))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let shape = self.shape(loss);
        if !shape.is_scalar() {
            return Err(TensorError::NotScalar { op: "backward", shape });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.index() + 1];
        if !self.requires_grad(loss) {
            return Ok(Gradients { grads });
        }
        grads[loss.index()] = Some(vec![1.0]);

        for idx in (0..=loss.index()).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            self.backprop_node(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, node: &Node<'p>, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            let n = &self.nodes[v.index()];
            if !n.requires_grad {
                return;
            }
            let slot = grads[v.index()].get_or_insert_with(|| vec![0.0; n.value.len()]);
            f(slot);
        };
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(*a, &mut |s| kernels::axpy(1.0, g, s));
                acc(*b, &mut |s| kernels::axpy(1.0, g, s));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |s| kernels::axpy(1.0, g, s));
                acc(*b, &mut |s| kernels::axpy(-1.0, g, s));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                acc(*a, &mut |s| {
                    for ((si, gi), bi) in s.iter_mut().zip(g).zip(vb) {
                        *si += gi * bi;
                    }
                });
                acc(*b, &mut |s| {
                    for ((si, gi), ai) in s.iter_mut().zip(g).zip(va) {
                        *si += gi * ai;
                    }
                });
            }
            Op::Scale(a, k) => acc(*a, &mut |s| kernels::axpy(*k, g, s)),
            Op::AddN(vars) => {
                for &v in vars {
                    acc(v, &mut |s| kernels::axpy(1.0, g, s));
                }
            }
            Op::MaxN { inputs, argmax } => {
                for (k, &v) in inputs.iter().enumerate() {
                    acc(v, &mut |s| {
                        for (i, &am) in argmax.iter().enumerate() {
                            if am as usize == k {
                                s[i] += g[i];
                            }
                        }
                    });
                }
            }
            Op::Outer(u, v) => {
                let (vu, vv) = (self.value(*u), self.value(*v));
                let n = vv.len();
                acc(*u, &mut |s| {
                    for (si, row) in s.iter_mut().zip(g.chunks_exact(n)) {
                        *si += kernels::dot(row, vv);
                    }
                });
                acc(*v, &mut |s| kernels::add_matvec_t(g, n, vu, s));
            }
            Op::MatVec(m, v) => {
                let (vm, vv) = (self.value(*m), self.value(*v));
                let c = vv.len();
                acc(*m, &mut |s| kernels::add_outer(g, vv, s));
                acc(*v, &mut |s| kernels::add_matvec_t(vm, c, g, s));
            }
            Op::Affine { w, x, b } => {
                let (vw, vx) = (self.value(*w), self.value(*x));
                let c = vx.len();
                acc(*w, &mut |s| kernels::add_outer(g, vx, s));
                acc(*x, &mut |s| kernels::add_matvec_t(vw, c, g, s));
                acc(*b, &mut |s| kernels::axpy(1.0, g, s));
            }
            Op::Concat(vars) => {
                let mut off = 0;
                for &v in vars {
                    let n = self.nodes[v.index()].value.len();
                    acc(v, &mut |s| kernels::axpy(1.0, &g[off..off + n], s));
                    off += n;
                }
            }
            Op::Slice { x, start } => {
                let start = *start;
                acc(*x, &mut |s| kernels::axpy(1.0, g, &mut s[start..start + g.len()]));
            }
            Op::Row { table, row } => {
                let c = g.len();
                let row = *row;
                acc(*table, &mut |s| kernels::axpy(1.0, g, &mut s[row * c..(row + 1) * c]));
            }
            Op::Tanh(x) => {
                let y = &node.value;
                acc(*x, &mut |s| {
                    for ((si, gi), yi) in s.iter_mut().zip(g).zip(y.iter()) {
                        *si += gi * (1.0 - yi * yi);
                    }
                });
            }
            Op::Sigmoid(x) => {
                let y = &node.value;
                acc(*x, &mut |s| {
                    for ((si, gi), yi) in s.iter_mut().zip(g).zip(y.iter()) {
                        *si += gi * yi * (1.0 - yi);
                    }
                });
            }
            Op::Relu(x) => {
                let vx = self.value(*x);
                acc(*x, &mut |s| {
                    for ((si, gi), xi) in s.iter_mut().zip(g).zip(vx) {
                        if *xi > 0.0 {
                            *si += gi;
                        }
                    }
                });
            }
            Op::Sum(x) => acc(*x, &mut |s| s.iter_mut().for_each(|si| *si += g[0])),
            Op::Dot(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                acc(*a, &mut |s| kernels::axpy(g[0], vb, s));
                acc(*b, &mut |s| kernels::axpy(g[0], va, s));
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let vg = self.value(*gamma);
                let n = xhat.len() as f64;
                let gh: Vec<f64> = g.iter().zip(vg).map(|(a, b)| a * b).collect();
                let sum_gh: f64 = gh.iter().sum();
                let sum_ghx: f64 = kernels::dot(&gh, xhat);
                acc(*x, &mut |s| {
                    for ((si, ghi), hi) in s.iter_mut().zip(&gh).zip(xhat) {
                        *si += inv_std / n * (n * ghi - sum_gh - hi * sum_ghx);
                    }
                });
                acc(*gamma, &mut |s| {
                    for ((si, gi), hi) in s.iter_mut().zip(g).zip(xhat) {
                        *si += gi * hi;
                    }
                });
                acc(*beta, &mut |s| kernels::axpy(1.0, g, s));
            }
            Op::SoftmaxXent { logits, gold, probs } => {
                acc(*logits, &mut |s| {
                    for (i, (si, p)) in s.iter_mut().zip(probs).enumerate() {
                        let t = if i == *gold { 1.0 } else { 0.0 };
                        *si += g[0] * (p - t);
                    }
                });
            }
        }
    }
}
