//! Normalized-cut segmentation as an implicit layer.
//!
//! The output `(λ₂, v₂)` is the second-smallest generalized eigenpair of
//! `L·v = λ·D·v` for a weighted graph, defined implicitly by
//! `[(L − λ₂D)v₂; v₂ᵀv₂ − 1] = 0`. The layer input is the list of edge
//! weights, so the residual costs `O(E)` to trace.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::{Tape, Var};
use crate::error::{check_len, Error, Result};
use crate::implicit::{ForwardSolver, ImplicitLayer, ResidualSystem};
use crate::linalg::{EigPair, SYMMETRY_TOL};
use crate::mat::Mat;
use crate::solvers::second_gen_eigpair;

/// A symmetric nonnegative affinity `W` with degrees `D = diag(W·1)` and
/// Laplacian `L = D − W`.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphAffinity {
    w: Mat,
}

impl GraphAffinity {
    pub fn new(w: Mat) -> Result<Self> {
        if !w.is_square() {
            return Err(Error::ShapeMismatch {
                op: "affinity",
                expected: w.rows(),
                found: w.cols(),
            });
        }
        if !w.is_finite() {
            return Err(Error::NonFinite { context: "affinity" });
        }
        let dev = w.asymmetry();
        if dev > SYMMETRY_TOL * w.norm_inf().max(1.0) {
            return Err(Error::Asymmetric { deviation: dev });
        }
        if let Some((i, &v)) = w.as_slice().iter().enumerate().find(|(_, v)| **v < 0.0) {
            return Err(Error::NonPositiveEntry { index: i, value: v });
        }
        Ok(GraphAffinity { w })
    }

    /// Builds `W` from undirected edges `(i, j)`, `i ≠ j`.
    pub fn from_edges(n: usize, edges: &[(usize, usize)], weights: &[f64]) -> Result<Self> {
        check_len("affinity weights", edges.len(), weights.len())?;
        let mut w = Mat::zeros(n, n);
        for (&(i, j), &v) in edges.iter().zip(weights) {
            if i >= n || j >= n || i == j {
                return Err(Error::InvalidArgument(alloc::format!("bad edge ({i}, {j})")));
            }
            w[(i, j)] += v;
            w[(j, i)] += v;
        }
        Self::new(w)
    }

    pub fn n(&self) -> usize {
        self.w.rows()
    }

    pub fn w(&self) -> &Mat {
        &self.w
    }

    pub fn degrees(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.w.row(i).iter().sum()).collect()
    }

    pub fn laplacian(&self) -> Mat {
        let mut l = self.w.scale(-1.0);
        for (i, d) in self.degrees().into_iter().enumerate() {
            l[(i, i)] += d;
        }
        l
    }

    /// Nonzero upper-triangle entries as `(edges, weights)`.
    pub fn edges(&self) -> (Vec<(usize, usize)>, Vec<f64>) {
        let n = self.n();
        let mut edges = Vec::new();
        let mut weights = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if self.w[(i, j)] != 0.0 {
                    edges.push((i, j));
                    weights.push(self.w[(i, j)]);
                }
            }
        }
        (edges, weights)
    }

    /// Second generalized eigenpair of `(L, D)`.
    pub fn fiedler(&self) -> Result<EigPair> {
        second_gen_eigpair(&self.laplacian(), &self.degrees())
    }
}

/// The 4-connected edges of a `rows × cols` pixel grid, row-major pixels.
pub fn grid_edges(rows: usize, cols: usize) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            if c + 1 < cols {
                edges.push((i, i + 1));
            }
            if r + 1 < rows {
                edges.push((i, i + cols));
            }
        }
    }
    edges
}

/// `[(L − λD)v; vᵀv − 1]` with input the edge weights and output `(λ, v)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NcutResidual {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
}

impl ResidualSystem for NcutResidual {
    fn input_dim(&self) -> usize {
        self.edges.len()
    }

    fn output_dim(&self) -> usize {
        self.n + 1
    }

    fn residual(&self, t: &mut Tape, w: Var, out: Var) -> Result<Var> {
        let n = self.n;
        let src: Vec<usize> = self.edges.iter().map(|e| e.0).collect();
        let dst: Vec<usize> = self.edges.iter().map(|e| e.1).collect();
        let lambda = t.slice(out, 0, 1)?;
        let v = t.slice(out, 1, n)?;
        let vi = t.gather(v, &src)?;
        let vj = t.gather(v, &dst)?;
        let diff = t.sub(vi, vj)?;
        let flow = t.mul(w, diff)?;
        let out_i = t.scatter_add(flow, &src, n)?;
        let out_j = t.scatter_add(flow, &dst, n)?;
        let lv = t.sub(out_i, out_j)?;
        let di = t.scatter_add(w, &src, n)?;
        let dj = t.scatter_add(w, &dst, n)?;
        let deg = t.add(di, dj)?;
        let dv = t.mul(deg, v)?;
        let ldv = t.scale(lambda, dv)?;
        let stat = t.sub(lv, ldv)?;
        let vv = t.dot(v, v)?;
        let one = t.scalar(1.0);
        let norm = t.sub(vv, one)?;
        t.concat(&[stat, norm])
    }
}

/// Evaluates the NCut residual of `g` at `(λ, v)`.
pub fn ncut_residual(g: &GraphAffinity, lambda: f64, v: &[f64]) -> Result<Vec<f64>> {
    let (edges, weights) = g.edges();
    let mut out = vec![lambda];
    out.extend_from_slice(v);
    NcutResidual { n: g.n(), edges }.eval(&weights, &out)
}

/// Labels from the sign of `v₂`: `true` where `v₂ > 0`.
pub fn ncut_segment(g: &GraphAffinity) -> Result<Vec<bool>> {
    Ok(g.fiedler()?.vector.iter().map(|&v| v > 0.0).collect())
}

/// Builds the graph from the edge weights and extracts `(λ₂, v₂)`.
#[derive(Clone, Debug)]
pub struct NcutSolver {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
}

impl ForwardSolver for NcutSolver {
    fn solve(&self, _: &dyn ResidualSystem, w: &[f64]) -> Result<Vec<f64>> {
        let pair = GraphAffinity::from_edges(self.n, &self.edges, w)?.fiedler()?;
        let mut out = vec![pair.value];
        out.extend(pair.vector);
        Ok(out)
    }
}

/// NCut layer over a fixed edge set, exposing `v₂` only.
pub fn ncut_layer(n: usize, edges: Vec<(usize, usize)>, forward_tol: f64) -> ImplicitLayer {
    ImplicitLayer::new(
        Box::new(NcutResidual {
            n,
            edges: edges.clone(),
        }),
        Box::new(NcutSolver { n, edges }),
        forward_tol,
    )
    .with_exposed(1..n + 1)
}

/// Traced edge affinities `w_e = exp(−s·‖f_i − f_j‖²)` from per-node
/// features `f` (`n × dim`, row-major) and a scalar precision `s`.
pub fn edge_affinities(t: &mut Tape, f: Var, dim: usize, edges: &[(usize, usize)], s: Var) -> Result<Var> {
    let mut src = Vec::with_capacity(edges.len() * dim);
    let mut dst = Vec::with_capacity(edges.len() * dim);
    for &(i, j) in edges {
        for k in 0..dim {
            src.push(i * dim + k);
            dst.push(j * dim + k);
        }
    }
    let fi = t.gather(f, &src)?;
    let fj = t.gather(f, &dst)?;
    let d = t.sub(fi, fj)?;
    let d2 = t.square(d);
    let per_edge: Vec<usize> = (0..edges.len()).flat_map(|e| core::iter::repeat_n(e, dim)).collect();
    let dist = t.scatter_add(d2, &per_edge, edges.len())?;
    let scaled = t.scale(s, dist)?;
    let neg = t.neg(scaled);
    Ok(t.exp(neg))
}
