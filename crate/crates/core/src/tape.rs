//! Tape-based reverse-mode automatic differentiation over dense matrices.
//!
//! Every operation appends a node whose inputs have strictly smaller indices,
//! so the tape is always in topological order and backward is a single
//! reverse sweep. Values live on the tape; parameters enter as leaves via
//! [`Tape::bind`] and gradients flow back into a [`ParamSet`] through
//! [`Gradients::accumulate_into`].

use crate::error::{Error, Result};
use crate::tensor::{ParamSet, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Operation kinds recorded on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    Leaf,
    MatMul,
    Add,
    Sub,
    AddRow,
    Mul,
    Scale,
    LeakyRelu,
    Tanh,
    Softplus,
    Mean,
    Sum,
    Concat,
    SliceCols,
    RowDot,
    Hinge,
    Modulate,
    BatchStd,
    ColAffine,
    SpectralNorm,
    GatherRows,
    CrossEntropy,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    LeakyRelu(Var, f64),
    Tanh(Var),
    Softplus(Var),
    Mean(Var),
    Sum(Var),
    Concat(Vec<Var>),
    SliceCols(Var, usize),
    RowDot(Var, Var),
    Hinge(Var, f64),
    Modulate(Var, Var, Var),
    BatchStd { x: Var, inv_std: Vec<f64> },
    ColAffine { x: Var, scale: Vec<f64> },
    SpectralNorm { w: Var, u: Vec<f64>, v: Vec<f64>, sigma: f64 },
    GatherRows(Var, Vec<usize>),
    CrossEntropy { logits: Var, labels: Vec<usize>, probs: Vec<f64> },
}

impl Op {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::MatMul(..) => OpKind::MatMul,
            Op::Add(..) => OpKind::Add,
            Op::Sub(..) => OpKind::Sub,
            Op::AddRow(..) => OpKind::AddRow,
            Op::Mul(..) => OpKind::Mul,
            Op::Scale(..) => OpKind::Scale,
            Op::LeakyRelu(..) => OpKind::LeakyRelu,
            Op::Tanh(..) => OpKind::Tanh,
            Op::Softplus(..) => OpKind::Softplus,
            Op::Mean(..) => OpKind::Mean,
            Op::Sum(..) => OpKind::Sum,
            Op::Concat(..) => OpKind::Concat,
            Op::SliceCols(..) => OpKind::SliceCols,
            Op::RowDot(..) => OpKind::RowDot,
            Op::Hinge(..) => OpKind::Hinge,
            Op::Modulate(..) => OpKind::Modulate,
            Op::BatchStd { .. } => OpKind::BatchStd,
            Op::ColAffine { .. } => OpKind::ColAffine,
            Op::SpectralNorm { .. } => OpKind::SpectralNorm,
            Op::GatherRows(..) => OpKind::GatherRows,
            Op::CrossEntropy { .. } => OpKind::CrossEntropy,
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::AddRow(a, b)
            | Op::Mul(a, b)
            | Op::RowDot(a, b) => vec![*a, *b],
            Op::Scale(a, _)
            | Op::LeakyRelu(a, _)
            | Op::Tanh(a)
            | Op::Softplus(a)
            | Op::Mean(a)
            | Op::Sum(a)
            | Op::SliceCols(a, _)
            | Op::Hinge(a, _)
            | Op::GatherRows(a, _) => vec![*a],
            Op::Concat(parts) => parts.clone(),
            Op::Modulate(x, g, b) => vec![*x, *g, *b],
            Op::BatchStd { x, .. } | Op::ColAffine { x, .. } => vec![*x],
            Op::SpectralNorm { w, .. } => vec![*w],
            Op::CrossEntropy { logits, .. } => vec![*logits],
        }
    }
}

#[derive(Debug)]
struct Node {
    shape: [usize; 2],
    value: Vec<f64>,
    op: Op,
    requires_grad: bool,
}

/// Leaf handles for every trainable entry of a [`ParamSet`], in slot order.
/// Buffers map to constant leaves.
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var>,
    trainable: Vec<bool>,
}

impl Bound {
    pub fn var(&self, slot: usize) -> Var {
        self.vars[slot]
    }
}

/// Gradients of the root with respect to every leaf that required them.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Adds leaf gradients into the matching parameter gradient buffers.
    /// Trainable parameters that received no gradient get an explicit zero
    /// buffer so the optimizer sees every parameter as populated.
    pub fn accumulate_into(&self, params: &mut ParamSet, bound: &Bound) -> Result<()> {
        if bound.vars.len() != params.len() {
            return Err(Error::Structure(format!(
                "binding has {} slots, parameter set has {}",
                bound.vars.len(),
                params.len()
            )));
        }
        for (slot, (&var, &trainable)) in bound.vars.iter().zip(&bound.trainable).enumerate() {
            if !trainable {
                continue;
            }
            let t = params.tensor_mut(slot);
            match self.get(var) {
                Some(g) => t.accumulate_grad(g)?,
                None => {
                    let zeros = vec![0.0; t.len()];
                    t.accumulate_grad(&zeros)?
                }
            }
        }
        Ok(())
    }
}

/// Recording of one forward computation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    check_all: bool,
}

fn check_finite(op: &'static str, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { op })
    }
}

fn shape_err(op: &'static str, a: [usize; 2], b: [usize; 2]) -> Error {
    Error::Shape { op, detail: format!("{a:?} vs {b:?}") }
}

/// `out += a · b` with `a: m×k`, `b: k×n`.
fn gemm_nn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
}

/// `out += g · bᵀ` with `g: m×n`, `b: k×n`, `out: m×k`.
fn gemm_nt(g: &[f64], b: &[f64], m: usize, n: usize, k: usize, out: &mut [f64]) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            let mut acc = 0.0;
            for (x, y) in grow.iter().zip(brow) {
                acc += x * y;
            }
            out[i * k + p] += acc;
        }
    }
}

/// `out += aᵀ · g` with `a: m×k`, `g: m×n`, `out: k×n`.
fn gemm_tn(a: &[f64], g: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &gv) in orow.iter_mut().zip(grow) {
                *o += aip * gv;
            }
        }
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
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

/// Largest-singular-value estimate `σ = ‖Wᵀu‖` and right vector `v = Wᵀu/σ`
/// for `W: rows×cols`, `u ∈ R^rows`.
pub(crate) fn sigma_and_v(w: &[f64], rows: usize, cols: usize, u: &[f64]) -> (f64, Vec<f64>) {
    let mut v = vec![0.0; cols];
    gemm_tn(w, u, rows, cols, 1, &mut v);
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let sigma = norm.max(crate::spectral::SIGMA_FLOOR);
    v.iter_mut().for_each(|x| *x /= sigma);
    (sigma, v)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Tape that also reports which op produced a non-finite value during
    /// backward. Forward values are always checked.
    pub fn debug() -> Self {
        Self { nodes: Vec::new(), check_all: true }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: [usize; 2], value: Vec<f64>, op: Op, name: &'static str) -> Result<Var> {
        check_finite(name, &value)?;
        let requires_grad = match &op {
            Op::Leaf => false,
            other => other.inputs().iter().any(|v| self.nodes[v.0].requires_grad),
        };
        self.nodes.push(Node { shape, value, op, requires_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes[v.0].shape
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn op_kind(&self, v: Var) -> OpKind {
        self.nodes[v.0].op.kind()
    }

    /// Scalar value of a `1×1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor::new(n.shape.to_vec(), n.value.clone()).expect("tape node shape is consistent")
    }

    /// Adds a leaf from raw values.
    pub fn leaf(&mut self, rows: usize, cols: usize, value: Vec<f64>, requires_grad: bool) -> Result<Var> {
        if rows * cols != value.len() {
            return Err(Error::Shape {
                op: "leaf",
                detail: format!("[{rows}, {cols}] needs {} values, got {}", rows * cols, value.len()),
            });
        }
        check_finite("leaf", &value)?;
        self.nodes.push(Node { shape: [rows, cols], value, op: Op::Leaf, requires_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn tensor(&mut self, t: &Tensor, requires_grad: bool) -> Result<Var> {
        let (r, c) = t.dims2();
        self.leaf(r, c, t.data().to_vec(), requires_grad)
    }

    pub fn constant(&mut self, t: &Tensor) -> Result<Var> {
        self.tensor(t, false)
    }

    /// Binds every entry of `params` as a leaf. Trainable entries require
    /// grad when `requires_grad` is set; buffers never do.
    pub fn bind(&mut self, params: &ParamSet, requires_grad: bool) -> Result<Bound> {
        let mut vars = Vec::with_capacity(params.len());
        let mut trainable = Vec::with_capacity(params.len());
        for p in params.entries() {
            vars.push(self.tensor(&p.tensor, requires_grad && p.trainable)?);
            trainable.push(p.trainable);
        }
        Ok(Bound { vars, trainable })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa[1] != sb[0] {
            return Err(shape_err("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        gemm_nn(&self.node(a).value, &self.node(b).value, m, k, n, &mut out);
        self.push([m, n], out, Op::MatMul(a, b), "matmul")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err("add", sa, sb));
        }
        let out = self.node(a).value.iter().zip(&self.node(b).value).map(|(x, y)| x + y).collect();
        self.push(sa, out, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err("sub", sa, sb));
        }
        let out = self.node(a).value.iter().zip(&self.node(b).value).map(|(x, y)| x - y).collect();
        self.push(sa, out, Op::Sub(a, b), "sub")
    }

    /// Adds a `1×n` row to every row of an `m×n` matrix (bias broadcast).
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (sa, sr) = (self.shape(a), self.shape(row));
        if sr[0] * sr[1] != sa[1] {
            return Err(shape_err("add_row", sa, sr));
        }
        let n = sa[1];
        let r = &self.node(row).value;
        let mut out = self.node(a).value.clone();
        for chunk in out.chunks_mut(n.max(1)) {
            chunk.iter_mut().zip(r).for_each(|(o, b)| *o += b);
        }
        self.push(sa, out, Op::AddRow(a, row), "add_row")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err("mul", sa, sb));
        }
        let out = self.node(a).value.iter().zip(&self.node(b).value).map(|(x, y)| x * y).collect();
        self.push(sa, out, Op::Mul(a, b), "mul")
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let out = self.node(a).value.iter().map(|x| x * c).collect();
        self.push(self.shape(a), out, Op::Scale(a, c), "scale")
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.scale(a, -1.0)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        let out = self.node(a).value.iter().map(|&x| if x > 0.0 { x } else { slope * x }).collect();
        self.push(self.shape(a), out, Op::LeakyRelu(a, slope), "leaky_relu")
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.leaky_relu(a, 0.0)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let out = self.node(a).value.iter().map(|x| x.tanh()).collect();
        self.push(self.shape(a), out, Op::Tanh(a), "tanh")
    }

    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        let out = self.node(a).value.iter().map(|&x| softplus(x)).collect();
        self.push(self.shape(a), out, Op::Softplus(a), "softplus")
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let v = &self.node(a).value;
        if v.is_empty() {
            return Err(Error::Shape { op: "mean", detail: "empty input".into() });
        }
        let m = v.iter().sum::<f64>() / v.len() as f64;
        self.push([1, 1], vec![m], Op::Mean(a), "mean")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.node(a).value.iter().sum::<f64>();
        self.push([1, 1], vec![s], Op::Sum(a), "sum")
    }

    /// Column-wise concatenation of matrices with equal row counts.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::Shape { op: "concat", detail: "no inputs".into() });
        };
        let rows = self.shape(first)[0];
        for &p in parts {
            if self.shape(p)[0] != rows {
                return Err(shape_err("concat", self.shape(first), self.shape(p)));
            }
        }
        let cols: usize = parts.iter().map(|&p| self.shape(p)[1]).sum();
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                let c = self.shape(p)[1];
                out.extend_from_slice(&self.node(p).value[r * c..(r + 1) * c]);
            }
        }
        self.push([rows, cols], out, Op::Concat(parts.to_vec()), "concat")
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let [m, n] = self.shape(a);
        if start >= end || end > n {
            return Err(Error::Shape { op: "slice_cols", detail: format!("{start}..{end} of [{m}, {n}]") });
        }
        let w = end - start;
        let src = &self.node(a).value;
        let mut out = Vec::with_capacity(m * w);
        for r in 0..m {
            out.extend_from_slice(&src[r * n + start..r * n + end]);
        }
        self.push([m, w], out, Op::SliceCols(a, start), "slice_cols")
    }

    /// Row-wise inner product of two `m×n` matrices, giving `m×1`.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err("row_dot", sa, sb));
        }
        let n = sa[1];
        let (va, vb) = (&self.node(a).value, &self.node(b).value);
        let out = (0..sa[0])
            .map(|r| va[r * n..(r + 1) * n].iter().zip(&vb[r * n..(r + 1) * n]).map(|(x, y)| x * y).sum())
            .collect();
        self.push([sa[0], 1], out, Op::RowDot(a, b), "row_dot")
    }

    /// Elementwise `max(0, 1 + sign·s)`; `sign = -1` for real scores, `+1` for fakes.
    pub fn hinge(&mut self, a: Var, sign: f64) -> Result<Var> {
        let out = self.node(a).value.iter().map(|&s| (1.0 + sign * s).max(0.0)).collect();
        self.push(self.shape(a), out, Op::Hinge(a, sign), "hinge")
    }

    /// Scale-shift modulation `x ⊙ (1 + γ) + β`.
    pub fn modulate(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let (sx, sg, sb) = (self.shape(x), self.shape(gamma), self.shape(beta));
        if sx != sg || sx != sb {
            return Err(shape_err("modulate", sx, if sx != sg { sg } else { sb }));
        }
        let (vx, vg, vb) = (&self.node(x).value, &self.node(gamma).value, &self.node(beta).value);
        let out = vx.iter().zip(vg).zip(vb).map(|((x, g), b)| x * (1.0 + g) + b).collect();
        self.push(sx, out, Op::Modulate(x, gamma, beta), "modulate")
    }

    /// Per-column standardization over the batch (rows). Returns the output
    /// node together with the batch mean and biased variance of each column.
    pub fn batch_standardize(&mut self, x: Var, eps: f64) -> Result<(Var, Vec<f64>, Vec<f64>)> {
        let [m, n] = self.shape(x);
        if m < 2 {
            return Err(Error::Shape { op: "batch_standardize", detail: format!("needs ≥2 rows, got {m}") });
        }
        let v = &self.node(x).value;
        let mut mean = vec![0.0; n];
        for row in v.chunks(n) {
            mean.iter_mut().zip(row).for_each(|(a, x)| *a += x);
        }
        mean.iter_mut().for_each(|a| *a /= m as f64);
        let mut var = vec![0.0; n];
        for row in v.chunks(n) {
            for ((s, x), mu) in var.iter_mut().zip(row).zip(&mean) {
                *s += (x - mu) * (x - mu);
            }
        }
        var.iter_mut().for_each(|s| *s /= m as f64);
        let inv_std: Vec<f64> = var.iter().map(|s| 1.0 / (s + eps).sqrt()).collect();
        let mut out = v.clone();
        for row in out.chunks_mut(n) {
            for ((o, mu), is) in row.iter_mut().zip(&mean).zip(&inv_std) {
                *o = (*o - mu) * is;
            }
        }
        let node = self.push([m, n], out, Op::BatchStd { x, inv_std }, "batch_standardize")?;
        Ok((node, mean, var))
    }

    /// Per-column affine map with constant coefficients, `x·scale + shift`.
    pub fn col_affine(&mut self, x: Var, scale: &[f64], shift: &[f64]) -> Result<Var> {
        let [m, n] = self.shape(x);
        if scale.len() != n || shift.len() != n {
            return Err(shape_err("col_affine", [m, n], [1, scale.len()]));
        }
        let mut out = self.node(x).value.clone();
        for row in out.chunks_mut(n.max(1)) {
            for ((o, s), b) in row.iter_mut().zip(scale).zip(shift) {
                *o = *o * s + b;
            }
        }
        self.push([m, n], out, Op::ColAffine { x, scale: scale.to_vec() }, "col_affine")
    }

    /// `W / σ` with `σ = ‖Wᵀu‖` for a fixed left vector `u`. Gradients flow
    /// through `σ` as a function of `W` with `u` held constant.
    pub fn spectral_norm(&mut self, w: Var, u: &[f64]) -> Result<Var> {
        let [r, c] = self.shape(w);
        if u.len() != r {
            return Err(shape_err("spectral_norm", [r, c], [u.len(), 1]));
        }
        let (sigma, v) = sigma_and_v(&self.node(w).value, r, c, u);
        let out = self.node(w).value.iter().map(|x| x / sigma).collect();
        self.push([r, c], out, Op::SpectralNorm { w, u: u.to_vec(), v, sigma }, "spectral_norm")
    }

    /// Selects rows of a table; gradients scatter-add back into the table.
    pub fn gather_rows(&mut self, table: Var, idx: &[usize]) -> Result<Var> {
        let [m, n] = self.shape(table);
        if let Some(&bad) = idx.iter().find(|&&i| i >= m) {
            return Err(Error::Shape { op: "gather_rows", detail: format!("row {bad} of {m}") });
        }
        let src = &self.node(table).value;
        let mut out = Vec::with_capacity(idx.len() * n);
        for &i in idx {
            out.extend_from_slice(&src[i * n..(i + 1) * n]);
        }
        self.push([idx.len(), n], out, Op::GatherRows(table, idx.to_vec()), "gather_rows")
    }

    /// Mean softmax cross-entropy of `m×k` logits against integer labels.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let [m, k] = self.shape(logits);
        if labels.len() != m || labels.iter().any(|&l| l >= k) {
            return Err(Error::Shape {
                op: "cross_entropy",
                detail: format!("{} labels for [{m}, {k}] logits", labels.len()),
            });
        }
        let v = &self.node(logits).value;
        let mut probs = vec![0.0; m * k];
        let mut loss = 0.0;
        for r in 0..m {
            let row = &v[r * k..(r + 1) * k];
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|x| (x - mx).exp()).sum();
            for c in 0..k {
                probs[r * k + c] = (row[c] - mx).exp() / z;
            }
            loss += z.ln() + mx - row[labels[r]];
        }
        let loss = loss / m as f64;
        self.push(
            [1, 1],
            vec![loss],
            Op::CrossEntropy { logits, labels: labels.to_vec(), probs },
            "cross_entropy",
        )
    }

    /// Linear layer `x·W + b` (bias optional).
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let y = self.matmul(x, w)?;
        match b {
            Some(b) => self.add_row(y, b),
            None => Ok(y),
        }
    }

    /// Mean squared error against a constant target.
    pub fn mse(&mut self, a: Var, target: &[f64]) -> Result<Var> {
        let [m, n] = self.shape(a);
        let t = self.leaf(m, n, target.to_vec(), false)?;
        let d = self.sub(a, t)?;
        let sq = self.mul(d, d)?;
        self.mean(sq)
    }

    /// Reverse sweep from a scalar root. Consumes the tape.
    pub fn backward(self, root: Var) -> Result<Gradients> {
        let root_shape = self.shape(root);
        if root_shape != [1, 1] {
            return Err(Error::NonScalarRoot(root_shape.to_vec()));
        }
        let nodes = self.nodes;
        let mut grads: Vec<Option<Vec<f64>>> = (0..nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(vec![1.0]);

        fn acc<'a>(grads: &'a mut [Option<Vec<f64>>], nodes: &[Node], v: Var) -> Option<&'a mut Vec<f64>> {
            if !nodes[v.0].requires_grad {
                return None;
            }
            let len = nodes[v.0].value.len();
            Some(grads[v.0].get_or_insert_with(|| vec![0.0; len]))
        }

        for i in (0..=root.0).rev() {
            let node = &nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if self.check_all {
                check_finite("backward", &g)?;
            }
            for inp in node.op.inputs() {
                // Inputs always precede their consumer.
                assert!(inp.0 < i, "tape is not topologically ordered");
            }
            let [m, n] = node.shape;
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::MatMul(a, b) => {
                    let k = nodes[a.0].shape[1];
                    if nodes[a.0].requires_grad {
                        let bv = &nodes[b.0].value;
                        let ga = acc(&mut grads, &nodes, *a).unwrap();
                        gemm_nt(&g, bv, m, n, k, ga);
                    }
                    if nodes[b.0].requires_grad {
                        let av = &nodes[a.0].value;
                        let gb = acc(&mut grads, &nodes, *b).unwrap();
                        gemm_tn(av, &g, m, k, n, gb);
                    }
                }
                Op::Add(a, b) => {
                    if let Some(ga) = acc(&mut grads, &nodes, *a) {
                        ga.iter_mut().zip(&g).for_each(|(x, y)| *x += y);
                    }
                    if let Some(gb) = acc(&mut grads, &nodes, *b) {
                        gb.iter_mut().zip(&g).for_each(|(x, y)| *x += y);
                    }
                }
                Op::Sub(a, b) => {
                    if let Some(ga) = acc(&mut grads, &nodes, *a) {
                        ga.iter_mut().zip(&g).for_each(|(x, y)| *x += y);
                    }
                    if let Some(gb) = acc(&mut grads, &nodes, *b) {
                        gb.iter_mut().zip(&g).for_each(|(x, y)| *x -= y);
                    }
                }
                Op::AddRow(a, row) => {
                    if let Some(ga) = acc(&mut grads, &nodes, *a) {
                        ga.iter_mut().zip(&g).for_each(|(x, y)| *x += y);
                    }
                    if let Some(gr) = acc(&mut grads, &nodes, *row) {
                        for chunk in g.chunks(n.max(1)) {
                            gr.iter_mut().zip(chunk).for_each(|(x, y)| *x += y);
                        }
                    }
                }
                Op::Mul(a, b) => {
                    if nodes[a.0].requires_grad {
                        let bv = &nodes[b.0].value;
                        let ga = acc(&mut grads, &nodes, *a).unwrap();
                        ga.iter_mut().zip(g.iter().zip(bv)).for_each(|(x, (gy, bv))| *x += gy * bv);
                    }
                    if nodes[b.0].requires_grad {
                        let av = &nodes[a.0].value;
                        let gb = acc(&mut grads, &nodes, *b).unwrap();
                        gb.iter_mut().zip(g.iter().zip(av)).for_each(|(x, (gy, av))| *x += gy * av);
                    }
                }
                Op::Scale(a, c) => {
                    if let Some(ga) = acc(&mut grads, &nodes, *a) {
                        ga.iter_mut().zip(&g).for_each(|(x, y)| *x += c * y);
                    }
                }
                Op::LeakyRelu(a, slope) => {
                    let av = &nodes[a.0].value;
                    let local: Vec<f64> =
                        av.iter().zip(&g).map(|(&x, &gy)| if x > 0.0 { gy } else { slope * gy }).collect();
                    if let Some(ga) = acc(&mut grads, &nodes, *a) {
                        ga.iter_mut().zip(&local).for_each(|(x, y)| *x += y);
                    }
                }
                Op::Tanh(a) => {
                    let local: Vec<f64> = node.value.iter().zip(&g).map(|(t, gy)| gy * (1.0 - t * t)).collect();
                    if let Some(ga) = acc(&mut grads, &nodes, *a) {
                        ga.iter_mut().zip(&local).for_each(|(x, y)| *x += y);
                    }
                }
                Op::Softplus(a) => {
                    let local: Vec<f64> = nodes[a.0].value.iter().zip(&g).map(|(&x, gy)| gy * sigmoid(x)).collect();
                    if let Some(ga) = acc(&mut grads, &nodes, *a) {
                        ga.iter_mut().zip(&local).for_each(|(x, y)| *x += y);
                    }
                }
                Op::Mean(a) => {
                    let len = nodes[a.0].value.len() as f64;
                    if let Some(ga) = acc(&mut grads, &nodes, *a) {
                        ga.iter_mut().for_each(|x| *x += g[0] / len);
                    }
                }
                Op::Sum(a) => {
                    if let Some(ga) = acc(&mut grads, &nodes, *a) {
                        ga.iter_mut().for_each(|x| *x += g[0]);
                    }
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let c = nodes[p.0].shape[1];
                        if let Some(gp) = acc(&mut grads, &nodes, *p) {
                            for r in 0..m {
                                let src = &g[r * n + offset..r * n + offset + c];
                                gp[r * c..(r + 1) * c].iter_mut().zip(src).for_each(|(x, y)| *x += y);
                            }
                        }
                        offset += c;
                    }
                }
                Op::SliceCols(a, start) => {
                    let src_cols = nodes[a.0].shape[1];
                    if let Some(ga) = acc(&mut grads, &nodes, *a) {
                        for r in 0..m {
                            let dst = &mut ga[r * src_cols + start..r * src_cols + start + n];
                            dst.iter_mut().zip(&g[r * n..(r + 1) * n]).for_each(|(x, y)| *x += y);
                        }
                    }
                }
                Op::RowDot(a, b) => {
                    let c = nodes[a.0].shape[1];
                    for (this, other) in [(*a, *b), (*b, *a)] {
                        if !nodes[this.0].requires_grad {
                            continue;
                        }
                        let ov = &nodes[other.0].value;
                        let gt = acc(&mut grads, &nodes, this).unwrap();
                        for r in 0..m {
                            let gr = g[r];
                            gt[r * c..(r + 1) * c]
                                .iter_mut()
                                .zip(&ov[r * c..(r + 1) * c])
                                .for_each(|(x, o)| *x += gr * o);
                        }
                    }
                }
                Op::Hinge(a, sign) => {
                    let local: Vec<f64> = nodes[a.0]
                        .value
                        .iter()
                        .zip(&g)
                        .map(|(&s, gy)| if 1.0 + sign * s > 0.0 { sign * gy } else { 0.0 })
                        .collect();
                    if let Some(ga) = acc(&mut grads, &nodes, *a) {
                        ga.iter_mut().zip(&local).for_each(|(x, y)| *x += y);
                    }
                }
                Op::Modulate(x, gamma, beta) => {
                    if nodes[x.0].requires_grad {
                        let gv = &nodes[gamma.0].value;
                        let gx = acc(&mut grads, &nodes, *x).unwrap();
                        gx.iter_mut().zip(g.iter().zip(gv)).for_each(|(o, (gy, gm))| *o += gy * (1.0 + gm));
                    }
                    if nodes[gamma.0].requires_grad {
                        let xv = &nodes[x.0].value;
                        let gg = acc(&mut grads, &nodes, *gamma).unwrap();
                        gg.iter_mut().zip(g.iter().zip(xv)).for_each(|(o, (gy, xv))| *o += gy * xv);
                    }
                    if let Some(gb) = acc(&mut grads, &nodes, *beta) {
                        gb.iter_mut().zip(&g).for_each(|(o, gy)| *o += gy);
                    }
                }
                Op::BatchStd { x, inv_std } => {
                    // dx = inv_std/m · (m·dy − Σdy − y·Σ(dy·y))
                    let y = &node.value;
                    let mut sum_g = vec![0.0; n];
                    let mut sum_gy = vec![0.0; n];
                    for r in 0..m {
                        for c in 0..n {
                            sum_g[c] += g[r * n + c];
                            sum_gy[c] += g[r * n + c] * y[r * n + c];
                        }
                    }
                    let mf = m as f64;
                    if let Some(gx) = acc(&mut grads, &nodes, *x) {
                        for r in 0..m {
                            for c in 0..n {
                                let k = r * n + c;
                                gx[k] += inv_std[c] / mf * (mf * g[k] - sum_g[c] - y[k] * sum_gy[c]);
                            }
                        }
                    }
                }
                Op::ColAffine { x, scale } => {
                    if let Some(gx) = acc(&mut grads, &nodes, *x) {
                        for r in 0..m {
                            for c in 0..n {
                                gx[r * n + c] += g[r * n + c] * scale[c];
                            }
                        }
                    }
                }
                Op::SpectralNorm { w, u, v, sigma } => {
                    // dW = G/σ − (⟨G, W⟩/σ²) u vᵀ
                    let wv = &nodes[w.0].value;
                    let inner: f64 = g.iter().zip(wv).map(|(a, b)| a * b).sum();
                    let coef = inner / (sigma * sigma);
                    if let Some(gw) = acc(&mut grads, &nodes, *w) {
                        for r in 0..m {
                            for c in 0..n {
                                gw[r * n + c] += g[r * n + c] / sigma - coef * u[r] * v[c];
                            }
                        }
                    }
                }
                Op::GatherRows(table, idx) => {
                    if let Some(gt) = acc(&mut grads, &nodes, *table) {
                        for (r, &i) in idx.iter().enumerate() {
                            gt[i * n..(i + 1) * n].iter_mut().zip(&g[r * n..(r + 1) * n]).for_each(|(x, y)| *x += y);
                        }
                    }
                }
                Op::CrossEntropy { logits, labels, probs } => {
                    let [lm, k] = nodes[logits.0].shape;
                    if let Some(gl) = acc(&mut grads, &nodes, *logits) {
                        for r in 0..lm {
                            for c in 0..k {
                                let ind = if labels[r] == c { 1.0 } else { 0.0 };
                                gl[r * k + c] += g[0] * (probs[r * k + c] - ind) / lm as f64;
                            }
                        }
                    }
                }
            }
        }
        // Only leaf gradients are kept.
        for (i, node) in nodes.iter().enumerate() {
            if !matches!(node.op, Op::Leaf) {
                grads[i] = None;
            } else if let Some(g) = &grads[i] {
                check_finite("backward", g)?;
            }
        }
        Ok(Gradients { grads })
    }
}
