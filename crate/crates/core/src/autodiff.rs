//! Reverse-mode automatic differentiation over dense real vectors.
//!
//! A [`Tape`] records primitive operations on vector-valued nodes in
//! topological order. Values are computed eagerly while recording; a reverse
//! sweep from an output node with a seed cotangent yields `seedᵀ·J` for every
//! input leaf. Matrices travel through the tape flattened row-major, with
//! their shapes carried by the operation that consumes them.
//!
//! ```
//! use implicit_core::autodiff::record;
//!
//! // F(x, y) = (x² + y₁² + y₂² − 4, x·y₁ − 1)
//! let y2 = 2f64.sqrt();
//! let mut rec = record(&[&[1.0], &[1.0, y2]], |t, v| {
//!     let (x, y) = (v[0], v[1]);
//!     let four = t.constant(&[4.0]);
//!     let one = t.constant(&[1.0]);
//!     let y1 = t.slice(y, 0, 1)?;
//!     let xx = t.dot(x, x)?;
//!     let yy = t.dot(y, y)?;
//!     let s = t.add(xx, yy)?;
//!     let f1 = t.sub(s, four)?;
//!     let xy = t.mul(x, y1)?;
//!     let f2 = t.sub(xy, one)?;
//!     t.concat(&[f1, f2])
//! })
//! .unwrap();
//! let jac = rec.jacobian().unwrap();
//! assert!((jac[(0, 2)] - 2.0 * y2).abs() < 1e-12);
//! ```

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_len, Error, Result};
use crate::mat::{all_finite, axpy, dot, Mat};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Elementwise unary primitives.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unary {
    Exp,
    Log,
    Sqrt,
    Square,
    Tanh,
    /// Subgradient at 0 is taken as 0.
    Relu,
}

impl Unary {
    fn apply(self, x: f64) -> f64 {
        match self {
            Unary::Exp => libm::exp(x),
            Unary::Log => libm::log(x),
            Unary::Sqrt => libm::sqrt(x),
            Unary::Square => x * x,
            Unary::Tanh => libm::tanh(x),
            Unary::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
        }
    }

    /// Derivative given input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Unary::Exp => y,
            Unary::Log => 1.0 / x,
            Unary::Sqrt => 0.5 / y,
            Unary::Square => 2.0 * x,
            Unary::Tanh => 1.0 - y * y,
            Unary::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Clone, Debug)]
enum Op {
    Input,
    Const,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Neg(Var),
    /// Length-1 node times a vector.
    Scale(Var, Var),
    Dot(Var, Var),
    MatVec {
        m: Var,
        x: Var,
        rows: usize,
        cols: usize,
    },
    Transpose {
        a: Var,
        rows: usize,
        cols: usize,
    },
    MatMul {
        a: Var,
        b: Var,
        m: usize,
        k: usize,
        n: usize,
    },
    Unary(Var, Unary),
    Sum(Var),
    Concat(Vec<Var>),
    Slice {
        x: Var,
        start: usize,
        len: usize,
    },
    Gather {
        x: Var,
        idx: Vec<usize>,
    },
    ScatterAdd {
        x: Var,
        idx: Vec<usize>,
        len: usize,
    },
    /// `A ⊗ vᵀ` for `A` of shape rows×cols: result rows × (cols·len(v)).
    KronVec {
        a: Var,
        v: Var,
        rows: usize,
        cols: usize,
    },
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Vec<f64>,
}

/// Append-only record of a vector computation.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    inputs: Vec<Var>,
    adjoints: Vec<Vec<f64>>,
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

    /// Differentiable leaf. Rejects non-finite entries.
    pub fn input(&mut self, value: &[f64]) -> Result<Var> {
        if !all_finite(value) {
            return Err(Error::NonFinite { context: "tape input" });
        }
        let v = self.push(Op::Input, value.to_vec());
        self.inputs.push(v);
        Ok(v)
    }

    /// Non-differentiable leaf.
    pub fn constant(&mut self, value: &[f64]) -> Var {
        self.push(Op::Const, value.to_vec())
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.push(Op::Const, vec![value])
    }

    pub fn inputs(&self) -> &[Var] {
        &self.inputs
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    fn size(&self, v: Var) -> usize {
        self.nodes[v.0].value.len()
    }

    fn push(&mut self, op: Op, value: Vec<f64>) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    fn record_op(&mut self, op: Op) -> Var {
        let value = evaluate(&self.nodes, &op);
        self.push(op, value)
    }

    fn same_len(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        check_len(op, self.size(a), self.size(b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_len("add", a, b)?;
        Ok(self.record_op(Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_len("sub", a, b)?;
        Ok(self.record_op(Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_len("mul", a, b)?;
        Ok(self.record_op(Op::Mul(a, b)))
    }

    /// Elementwise quotient.
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_len("div", a, b)?;
        Ok(self.record_op(Op::Div(a, b)))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.record_op(Op::Neg(a))
    }

    /// `s·x` where `s` has length 1.
    pub fn scale(&mut self, s: Var, x: Var) -> Result<Var> {
        check_len("scale", 1, self.size(s))?;
        Ok(self.record_op(Op::Scale(s, x)))
    }

    /// Scales by a fixed constant.
    pub fn scale_by(&mut self, c: f64, x: Var) -> Result<Var> {
        let s = self.scalar(c);
        self.scale(s, x)
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_len("dot", a, b)?;
        Ok(self.record_op(Op::Dot(a, b)))
    }

    /// `M·x` with `m` a flattened rows×cols matrix.
    pub fn matvec(&mut self, m: Var, x: Var, rows: usize, cols: usize) -> Result<Var> {
        check_len("matvec (matrix)", rows * cols, self.size(m))?;
        check_len("matvec (vector)", cols, self.size(x))?;
        Ok(self.record_op(Op::MatVec { m, x, rows, cols }))
    }

    /// Transpose of a flattened rows×cols matrix.
    pub fn transpose(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        check_len("transpose", rows * cols, self.size(a))?;
        Ok(self.record_op(Op::Transpose { a, rows, cols }))
    }

    /// `A·B` for flattened m×k and k×n matrices.
    pub fn matmul(&mut self, a: Var, b: Var, m: usize, k: usize, n: usize) -> Result<Var> {
        check_len("matmul (lhs)", m * k, self.size(a))?;
        check_len("matmul (rhs)", k * n, self.size(b))?;
        Ok(self.record_op(Op::MatMul { a, b, m, k, n }))
    }

    pub fn unary(&mut self, x: Var, f: Unary) -> Var {
        self.record_op(Op::Unary(x, f))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Exp)
    }

    pub fn log(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Log)
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Sqrt)
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Square)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Tanh)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Relu)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        self.record_op(Op::Sum(x))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::InvalidArgument("concat of nothing".into()));
        }
        Ok(self.record_op(Op::Concat(parts.to_vec())))
    }

    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        if start + len > self.size(x) {
            return Err(Error::ShapeMismatch {
                op: "slice",
                expected: start + len,
                found: self.size(x),
            });
        }
        Ok(self.record_op(Op::Slice { x, start, len }))
    }

    /// `out[i] = x[idx[i]]`.
    pub fn gather(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let n = self.size(x);
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(Error::ShapeMismatch {
                op: "gather",
                expected: n,
                found: bad + 1,
            });
        }
        Ok(self.record_op(Op::Gather { x, idx: idx.to_vec() }))
    }

    /// `out = zeros(len); out[idx[i]] += x[i]`.
    pub fn scatter_add(&mut self, x: Var, idx: &[usize], len: usize) -> Result<Var> {
        check_len("scatter_add", idx.len(), self.size(x))?;
        if let Some(&bad) = idx.iter().find(|&&i| i >= len) {
            return Err(Error::ShapeMismatch {
                op: "scatter_add",
                expected: len,
                found: bad + 1,
            });
        }
        Ok(self.record_op(Op::ScatterAdd {
            x,
            idx: idx.to_vec(),
            len,
        }))
    }

    /// `A ⊗ vᵀ` for a flattened rows×cols matrix `A`; the result is a
    /// rows × (cols·len(v)) matrix, flattened.
    pub fn kron_vec(&mut self, a: Var, v: Var, rows: usize, cols: usize) -> Result<Var> {
        check_len("kron_vec", rows * cols, self.size(a))?;
        Ok(self.record_op(Op::KronVec { a, v, rows, cols }))
    }

    /// Recomputes every node from new input values, in recording order.
    ///
    /// `values` supplies one slice per [`Tape::input`] call, in call order.
    pub fn replay(&mut self, values: &[&[f64]]) -> Result<()> {
        check_len("replay (inputs)", self.inputs.len(), values.len())?;
        for (var, v) in self.inputs.iter().zip(values) {
            check_len("replay (input length)", self.nodes[var.0].value.len(), v.len())?;
            if !all_finite(v) {
                return Err(Error::NonFinite { context: "tape input" });
            }
            self.nodes[var.0].value.copy_from_slice(v);
        }
        for i in 0..self.nodes.len() {
            if matches!(self.nodes[i].op, Op::Input | Op::Const) {
                continue;
            }
            let value = evaluate(&self.nodes[..i], &self.nodes[i].op);
            self.nodes[i].value = value;
        }
        Ok(())
    }

    /// Reverse sweep from `output` seeded with `seed`; returns the cotangent
    /// `seedᵀ·∂output/∂input` for every input leaf, in input order.
    pub fn vjp(&mut self, output: Var, seed: &[f64]) -> Result<Vec<Vec<f64>>> {
        check_len("vjp seed", self.size(output), seed.len())?;
        self.sweep(output, seed);
        Ok(self
            .inputs
            .iter()
            .map(|v| {
                let adj = &self.adjoints[v.0];
                if adj.is_empty() {
                    vec![0.0; self.nodes[v.0].value.len()]
                } else {
                    adj.clone()
                }
            })
            .collect())
    }

    /// Full Jacobian of `output` with respect to the listed input leaves,
    /// columns concatenated in the given order. Row `i` is the sweep seeded
    /// with `eᵢ`.
    pub fn jacobian_wrt(&mut self, output: Var, wrt: &[Var]) -> Result<Mat> {
        let m = self.size(output);
        let widths: Vec<usize> = wrt.iter().map(|v| self.size(*v)).collect();
        let total: usize = widths.iter().sum();
        let mut jac = Mat::zeros(m, total);
        let mut seed = vec![0.0; m];
        for i in 0..m {
            seed[i] = 1.0;
            self.sweep(output, &seed);
            seed[i] = 0.0;
            let row = jac.row_mut(i);
            let mut offset = 0;
            for (v, w) in wrt.iter().zip(&widths) {
                let adj = &self.adjoints[v.0];
                if !adj.is_empty() {
                    row[offset..offset + w].copy_from_slice(adj);
                }
                offset += w;
            }
        }
        Ok(jac)
    }

    /// Jacobian with respect to every input leaf.
    pub fn jacobian(&mut self, output: Var) -> Result<Mat> {
        let wrt = self.inputs.clone();
        self.jacobian_wrt(output, &wrt)
    }

    fn sweep(&mut self, output: Var, seed: &[f64]) {
        let count = output.0 + 1;
        self.adjoints.resize(self.nodes.len(), Vec::new());
        for adj in self.adjoints.iter_mut() {
            adj.clear();
        }
        self.adjoints[output.0] = seed.to_vec();
        for i in (0..count).rev() {
            if self.adjoints[i].is_empty() {
                continue;
            }
            let g = core::mem::take(&mut self.adjoints[i]);
            backprop(&self.nodes, i, &g, &mut self.adjoints);
            self.adjoints[i] = g;
        }
    }
}

fn accumulate(adjoints: &mut [Vec<f64>], target: Var, len: usize) -> &mut [f64] {
    let adj = &mut adjoints[target.0];
    if adj.is_empty() {
        adj.resize(len, 0.0);
    }
    adj
}

fn evaluate(nodes: &[Node], op: &Op) -> Vec<f64> {
    let val = |v: &Var| nodes[v.0].value.as_slice();
    match op {
        Op::Input | Op::Const => unreachable!("leaves are not evaluated"),
        Op::Add(a, b) => val(a).iter().zip(val(b)).map(|(x, y)| x + y).collect(),
        Op::Sub(a, b) => val(a).iter().zip(val(b)).map(|(x, y)| x - y).collect(),
        Op::Mul(a, b) => val(a).iter().zip(val(b)).map(|(x, y)| x * y).collect(),
        Op::Div(a, b) => val(a).iter().zip(val(b)).map(|(x, y)| x / y).collect(),
        Op::Neg(a) => val(a).iter().map(|x| -x).collect(),
        Op::Scale(s, x) => {
            let s = val(s)[0];
            val(x).iter().map(|v| s * v).collect()
        }
        Op::Dot(a, b) => vec![dot(val(a), val(b))],
        Op::MatVec { m, x, rows, cols } => {
            let (m, x) = (val(m), val(x));
            (0..*rows).map(|i| dot(&m[i * cols..(i + 1) * cols], x)).collect()
        }
        Op::Transpose { a, rows, cols } => {
            let a = val(a);
            let mut out = vec![0.0; rows * cols];
            for i in 0..*rows {
                for j in 0..*cols {
                    out[j * rows + i] = a[i * cols + j];
                }
            }
            out
        }
        Op::MatMul { a, b, m, k, n } => {
            let (a, b) = (val(a), val(b));
            let mut out = vec![0.0; m * n];
            for i in 0..*m {
                for l in 0..*k {
                    let s = a[i * k + l];
                    if s != 0.0 {
                        axpy(s, &b[l * n..(l + 1) * n], &mut out[i * n..(i + 1) * n]);
                    }
                }
            }
            out
        }
        Op::Unary(x, f) => val(x).iter().map(|&v| f.apply(v)).collect(),
        Op::Sum(x) => vec![val(x).iter().sum()],
        Op::Concat(parts) => parts.iter().flat_map(|p| val(p).iter().copied()).collect(),
        Op::Slice { x, start, len } => val(x)[*start..start + len].to_vec(),
        Op::Gather { x, idx } => {
            let x = val(x);
            idx.iter().map(|&i| x[i]).collect()
        }
        Op::ScatterAdd { x, idx, len } => {
            let mut out = vec![0.0; *len];
            for (&i, v) in idx.iter().zip(val(x)) {
                out[i] += v;
            }
            out
        }
        Op::KronVec { a, v, rows, cols } => {
            let (a, v) = (val(a), val(v));
            let p = v.len();
            let mut out = vec![0.0; rows * cols * p];
            for i in 0..*rows {
                for j in 0..*cols {
                    let s = a[i * cols + j];
                    let base = i * cols * p + j * p;
                    for (o, vk) in out[base..base + p].iter_mut().zip(v) {
                        *o = s * vk;
                    }
                }
            }
            out
        }
    }
}

fn backprop(nodes: &[Node], i: usize, g: &[f64], adj: &mut [Vec<f64>]) {
    let val = |v: &Var| nodes[v.0].value.as_slice();
    match &nodes[i].op {
        Op::Input | Op::Const => {}
        Op::Add(a, b) => {
            axpy(1.0, g, accumulate(adj, *a, g.len()));
            axpy(1.0, g, accumulate(adj, *b, g.len()));
        }
        Op::Sub(a, b) => {
            axpy(1.0, g, accumulate(adj, *a, g.len()));
            axpy(-1.0, g, accumulate(adj, *b, g.len()));
        }
        Op::Mul(a, b) => {
            let (va, vb) = (val(a), val(b));
            for (t, (gi, bi)) in accumulate(adj, *a, g.len()).iter_mut().zip(g.iter().zip(vb)) {
                *t += gi * bi;
            }
            for (t, (gi, ai)) in accumulate(adj, *b, g.len()).iter_mut().zip(g.iter().zip(va)) {
                *t += gi * ai;
            }
        }
        Op::Div(a, b) => {
            let (va, vb) = (val(a), val(b));
            for (t, (gi, bi)) in accumulate(adj, *a, g.len()).iter_mut().zip(g.iter().zip(vb)) {
                *t += gi / bi;
            }
            let tb = accumulate(adj, *b, g.len());
            for k in 0..g.len() {
                tb[k] -= g[k] * va[k] / (vb[k] * vb[k]);
            }
        }
        Op::Neg(a) => axpy(-1.0, g, accumulate(adj, *a, g.len())),
        Op::Scale(s, x) => {
            let (vs, vx) = (val(s)[0], val(x));
            let gs = dot(g, vx);
            accumulate(adj, *s, 1)[0] += gs;
            axpy(vs, g, accumulate(adj, *x, g.len()));
        }
        Op::Dot(a, b) => {
            let (va, vb) = (val(a), val(b));
            axpy(g[0], vb, accumulate(adj, *a, va.len()));
            axpy(g[0], va, accumulate(adj, *b, vb.len()));
        }
        Op::MatVec { m, x, rows, cols } => {
            let (vm, vx) = (val(m), val(x));
            {
                let tm = accumulate(adj, *m, rows * cols);
                for r in 0..*rows {
                    if g[r] != 0.0 {
                        axpy(g[r], vx, &mut tm[r * cols..(r + 1) * cols]);
                    }
                }
            }
            let tx = accumulate(adj, *x, *cols);
            for r in 0..*rows {
                if g[r] != 0.0 {
                    axpy(g[r], &vm[r * cols..(r + 1) * cols], tx);
                }
            }
        }
        Op::Transpose { a, rows, cols } => {
            let ta = accumulate(adj, *a, rows * cols);
            for r in 0..*rows {
                for c in 0..*cols {
                    ta[r * cols + c] += g[c * rows + r];
                }
            }
        }
        Op::MatMul { a, b, m, k, n } => {
            let (va, vb) = (val(a), val(b));
            {
                // dA = G·Bᵀ
                let ta = accumulate(adj, *a, m * k);
                for r in 0..*m {
                    let grow = &g[r * n..(r + 1) * n];
                    for l in 0..*k {
                        ta[r * k + l] += dot(grow, &vb[l * n..(l + 1) * n]);
                    }
                }
            }
            // dB = Aᵀ·G
            let tb = accumulate(adj, *b, k * n);
            for r in 0..*m {
                let grow = &g[r * n..(r + 1) * n];
                for l in 0..*k {
                    let s = va[r * k + l];
                    if s != 0.0 {
                        axpy(s, grow, &mut tb[l * n..(l + 1) * n]);
                    }
                }
            }
        }
        Op::Unary(x, f) => {
            let (vx, vy) = (val(x), nodes[i].value.as_slice());
            let tx = accumulate(adj, *x, g.len());
            for k in 0..g.len() {
                if g[k] != 0.0 {
                    tx[k] += g[k] * f.derivative(vx[k], vy[k]);
                }
            }
        }
        Op::Sum(x) => {
            let n = val(x).len();
            accumulate(adj, *x, n).iter_mut().for_each(|t| *t += g[0]);
        }
        Op::Concat(parts) => {
            let mut offset = 0;
            for p in parts {
                let n = val(p).len();
                axpy(1.0, &g[offset..offset + n], accumulate(adj, *p, n));
                offset += n;
            }
        }
        Op::Slice { x, start, len } => {
            let n = val(x).len();
            axpy(1.0, g, &mut accumulate(adj, *x, n)[*start..start + len]);
        }
        Op::Gather { x, idx } => {
            let tx = accumulate(adj, *x, val(x).len());
            for (&j, gi) in idx.iter().zip(g) {
                tx[j] += gi;
            }
        }
        Op::ScatterAdd { x, idx, .. } => {
            let tx = accumulate(adj, *x, idx.len());
            for (t, &j) in tx.iter_mut().zip(idx) {
                *t += g[j];
            }
        }
        Op::KronVec { a, v, rows, cols } => {
            let (va, vv) = (val(a), val(v));
            let p = vv.len();
            {
                let ta = accumulate(adj, *a, rows * cols);
                for r in 0..*rows {
                    for c in 0..*cols {
                        let base = r * cols * p + c * p;
                        ta[r * cols + c] += dot(&g[base..base + p], vv);
                    }
                }
            }
            let tv = accumulate(adj, *v, p);
            for r in 0..*rows {
                for c in 0..*cols {
                    let base = r * cols * p + c * p;
                    axpy(va[r * cols + c], &g[base..base + p], tv);
                }
            }
        }
    }
}

/// A traced evaluation: the tape, its input leaves and the output node.
#[derive(Clone, Debug)]
pub struct Recording {
    pub tape: Tape,
    pub inputs: Vec<Var>,
    pub output: Var,
}

impl Recording {
    pub fn output_value(&self) -> &[f64] {
        self.tape.value(self.output)
    }

    /// `seedᵀ·J`, one cotangent block per input.
    pub fn vjp(&mut self, seed: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.tape.vjp(self.output, seed)
    }

    /// Full Jacobian with respect to all inputs, columns in input order.
    pub fn jacobian(&mut self) -> Result<Mat> {
        self.tape.jacobian_wrt(self.output, &self.inputs.clone())
    }

    /// Jacobian with respect to a single input block.
    pub fn jacobian_wrt_input(&mut self, k: usize) -> Result<Mat> {
        let v = self.inputs[k];
        self.tape.jacobian_wrt(self.output, &[v])
    }

    /// Re-evaluates on new inputs and returns the new output.
    pub fn replay(&mut self, values: &[&[f64]]) -> Result<&[f64]> {
        self.tape.replay(values)?;
        Ok(self.tape.value(self.output))
    }
}

/// Records `f` applied to fresh input leaves holding `inputs`.
///
/// Fails on non-finite inputs, on shape errors raised by `f`, and when the
/// output contains a non-finite value.
pub fn record<F>(inputs: &[&[f64]], f: F) -> Result<Recording>
where
    F: FnOnce(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars = inputs.iter().map(|v| tape.input(v)).collect::<Result<Vec<_>>>()?;
    let output = f(&mut tape, &vars)?;
    if !all_finite(tape.value(output)) {
        return Err(Error::NonFinite {
            context: "traced output",
        });
    }
    Ok(Recording {
        tape,
        inputs: vars,
        output,
    })
}

/// Central-difference Jacobian with a uniform step `h`:
/// column `j` is `(f(x + h·eⱼ) − f(x − h·eⱼ)) / 2h`.
pub fn finite_diff_jacobian<F>(f: F, x: &[f64], step: f64) -> Result<Mat>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if !(step > 0.0) {
        return Err(Error::InvalidArgument("finite-difference step must be positive".into()));
    }
    finite_diff_jacobian_with(f, x, |_| step)
}

/// Central differences with a per-coordinate step `rel·(1 + |xⱼ|)`.
pub fn finite_diff_jacobian_scaled<F>(f: F, x: &[f64], rel: f64) -> Result<Mat>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if !(rel > 0.0) {
        return Err(Error::InvalidArgument("finite-difference step must be positive".into()));
    }
    finite_diff_jacobian_with(f, x, |xj| rel * (1.0 + xj.abs()))
}

fn finite_diff_jacobian_with<F, H>(mut f: F, x: &[f64], step: H) -> Result<Mat>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
    H: Fn(f64) -> f64,
{
    let mut probe = x.to_vec();
    let mut jac: Option<Mat> = None;
    for j in 0..x.len() {
        let h = step(x[j]);
        probe[j] = x[j] + h;
        let plus = f(&probe)?;
        probe[j] = x[j] - h;
        let minus = f(&probe)?;
        probe[j] = x[j];
        if !all_finite(&plus) || !all_finite(&minus) {
            return Err(Error::NonFinite {
                context: "finite-difference stencil",
            });
        }
        check_len("finite_diff_jacobian", plus.len(), minus.len())?;
        let jac = jac.get_or_insert_with(|| Mat::zeros(plus.len(), x.len()));
        check_len("finite_diff_jacobian", jac.rows(), plus.len())?;
        for i in 0..plus.len() {
            jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
    match jac {
        Some(j) => Ok(j),
        None => {
            let m = f(x)?.len();
            Ok(Mat::zeros(m, 0))
        }
    }
}
