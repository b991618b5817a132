//! Graph matching layers: spectral matching (SM) and its affinely
//! constrained variant (SMAC).
//!
//! An assignment between `n` source and `m` target nodes is a vector `y`
//! of length `nm`, entry `i·m + a` scoring source `i` against target `a`.
//! Both layers take the affinity matrix `M` packed as its upper triangle
//! (see [`sym_pack`]), so every perturbation of the input stays symmetric.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::{Tape, Var};
use crate::error::{check_len, Error, Result};
use crate::implicit::{ForwardSolver, ImplicitLayer, ResidualSystem};
use crate::linalg::SYMMETRY_TOL;
use crate::mat::{dot, Mat};
use crate::solvers::{leading_eigvec, smac_solve, IpConfig, SmacSolution};

/// Length of the packed upper triangle of an `n×n` symmetric matrix.
pub fn sym_packed_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Upper triangle (diagonal included), row by row.
pub fn sym_pack(m: &Mat) -> Vec<f64> {
    let n = m.rows();
    let mut v = Vec::with_capacity(sym_packed_len(n));
    for i in 0..n {
        v.extend_from_slice(&m.row(i)[i..]);
    }
    v
}

/// For each row-major entry of the full matrix, its index in the packing.
pub fn sym_unpack_indices(n: usize) -> Vec<usize> {
    // Row i of the packing starts after rows 0..i, of lengths n, n−1, …
    let row_start = |i: usize| i * n - i * i.saturating_sub(1) / 2;
    let mut idx = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let (a, b) = if i <= j { (i, j) } else { (j, i) };
            idx.push(row_start(a) + (b - a));
        }
    }
    idx
}

pub fn sym_unpack(n: usize, packed: &[f64]) -> Result<Mat> {
    check_len("sym_unpack", sym_packed_len(n), packed.len())?;
    let data = sym_unpack_indices(n).into_iter().map(|k| packed[k]).collect();
    Mat::from_vec(n, n, data)
}

/// Constraint matrix of one-to-one assignments between `n` and `n` nodes:
/// every row and every column of the assignment sums to one. One column
/// constraint is implied by the others and is dropped, leaving `2n − 1`
/// independent rows.
pub fn assignment_constraints(n: usize, m: usize) -> Result<Mat> {
    if n != m || n == 0 {
        return Err(Error::InvalidArgument(
            "one-to-one assignment constraints need n = m > 0".into(),
        ));
    }
    let rows = 2 * n - 1;
    let mut c = Mat::zeros(rows, n * m);
    for i in 0..n {
        for a in 0..m {
            c[(i, i * m + a)] = 1.0;
            if a + 1 < m {
                c[(n + a, i * m + a)] = 1.0;
            }
        }
    }
    Ok(c)
}

/// Affinity and constraints of a matching problem.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchingInstance {
    /// `nm × nm` pairwise affinity.
    pub m: Mat,
    /// One-to-one constraint matrix.
    pub c: Mat,
    pub n: usize,
    pub k: usize,
}

impl MatchingInstance {
    /// Validates that `M` is symmetric, nonnegative and sized for `n×k`.
    pub fn new(m: Mat, n: usize, k: usize) -> Result<Self> {
        check_len("matching affinity rows", n * k, m.rows())?;
        check_len("matching affinity cols", n * k, m.cols())?;
        if !m.is_finite() {
            return Err(Error::NonFinite {
                context: "matching affinity",
            });
        }
        let dev = m.asymmetry();
        if dev > SYMMETRY_TOL * m.norm_inf().max(1.0) {
            return Err(Error::Asymmetric { deviation: dev });
        }
        if let Some((i, &v)) = m.as_slice().iter().enumerate().find(|(_, v)| **v < 0.0) {
            return Err(Error::NonPositiveEntry { index: i, value: v });
        }
        let c = assignment_constraints(n, k)?;
        Ok(MatchingInstance { m, c, n, k })
    }

    pub fn dim(&self) -> usize {
        self.n * self.k
    }
}

fn unpack_affinity(t: &mut Tape, x: Var, dim: usize) -> Result<Var> {
    t.gather(x, &sym_unpack_indices(dim))
}

/// `[My + λy; yᵀy − 1]` over the packed affinity, with output `(y, λ)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SmResidual {
    pub dim: usize,
}

impl ResidualSystem for SmResidual {
    fn input_dim(&self) -> usize {
        sym_packed_len(self.dim)
    }

    fn output_dim(&self) -> usize {
        self.dim + 1
    }

    fn residual(&self, t: &mut Tape, x: Var, out: Var) -> Result<Var> {
        let n = self.dim;
        let m = unpack_affinity(t, x, n)?;
        let y = t.slice(out, 0, n)?;
        let lambda = t.slice(out, n, 1)?;
        let my = t.matvec(m, y, n, n)?;
        let ly = t.scale(lambda, y)?;
        let stat = t.add(my, ly)?;
        let yy = t.dot(y, y)?;
        let one = t.scalar(1.0);
        let norm = t.sub(yy, one)?;
        t.concat(&[stat, norm])
    }
}

/// Evaluates the SM residual at `(y, λ)`.
pub fn sm_residual(inst: &MatchingInstance, y: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let mut out = y.to_vec();
    out.push(lambda);
    SmResidual { dim: inst.dim() }.eval(&sym_pack(&inst.m), &out)
}

/// Leading eigenvector of the unpacked affinity with `λ = −λ_max`.
#[derive(Clone, Copy, Debug)]
pub struct SmSolver {
    pub dim: usize,
}

impl ForwardSolver for SmSolver {
    fn solve(&self, _: &dyn ResidualSystem, x: &[f64]) -> Result<Vec<f64>> {
        let m = sym_unpack(self.dim, x)?;
        let top = leading_eigvec(&m)?;
        let mut out = top.vector;
        out.push(-top.value);
        Ok(out)
    }
}

/// SM layer exposing the assignment vector only.
pub fn sm_layer(dim: usize, forward_tol: f64) -> ImplicitLayer {
    ImplicitLayer::new(Box::new(SmResidual { dim }), Box::new(SmSolver { dim }), forward_tol).with_exposed(0..dim)
}

/// Affinely constrained spectral matching conditions
/// `[2(My·yᵀy − yᵀMy·y)/(yᵀy)² + Cᵀλ − ν; Cy − 1; ν ⊙ y]`
/// over the packed affinity, with output `(y, λ, ν)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SmacResidual {
    pub dim: usize,
    pub c: Mat,
}

impl SmacResidual {
    pub fn new(c: Mat) -> Self {
        SmacResidual { dim: c.cols(), c }
    }

    pub fn constraints(&self) -> usize {
        self.c.rows()
    }
}

impl ResidualSystem for SmacResidual {
    fn input_dim(&self) -> usize {
        sym_packed_len(self.dim)
    }

    fn output_dim(&self) -> usize {
        2 * self.dim + self.constraints()
    }

    fn residual(&self, t: &mut Tape, x: Var, out: Var) -> Result<Var> {
        let (n, p) = (self.dim, self.constraints());
        let m = unpack_affinity(t, x, n)?;
        let y = t.slice(out, 0, n)?;
        let lambda = t.slice(out, n, p)?;
        let nu = t.slice(out, n + p, n)?;
        let my = t.matvec(m, y, n, n)?;
        let yy = t.dot(y, y)?;
        let ymy = t.dot(y, my)?;
        let a = t.scale(yy, my)?;
        let b = t.scale(ymy, y)?;
        let diff = t.sub(a, b)?;
        let yy2 = t.mul(yy, yy)?;
        let two = t.scalar(2.0);
        let coef = t.div(two, yy2)?;
        let grad = t.scale(coef, diff)?;
        let c = t.constant(self.c.as_slice());
        let ct = t.transpose(c, p, n)?;
        let ctl = t.matvec(ct, lambda, n, p)?;
        let s = t.add(grad, ctl)?;
        let stat = t.sub(s, nu)?;
        let cy = t.matvec(c, y, p, n)?;
        let ones = t.constant(&vec![1.0; p]);
        let feas = t.sub(cy, ones)?;
        let comp = t.mul(nu, y)?;
        t.concat(&[stat, feas, comp])
    }
}

/// Evaluates the SMAC residual at a candidate solution.
pub fn smac_residual(inst: &MatchingInstance, sol: &SmacSolution) -> Result<Vec<f64>> {
    if dot(&sol.y, &sol.y) == 0.0 {
        return Err(Error::ZeroNorm);
    }
    SmacResidual::new(inst.c.clone()).eval(&sym_pack(&inst.m), &smac_pack(sol))
}

/// Concatenation `(y, λ, ν)`.
pub fn smac_pack(sol: &SmacSolution) -> Vec<f64> {
    let mut v = sol.y.clone();
    v.extend_from_slice(&sol.lambda);
    v.extend_from_slice(&sol.nu);
    v
}

/// Runs [`smac_solve`] on the unpacked affinity.
#[derive(Clone, Debug)]
pub struct SmacSolver {
    pub c: Mat,
    pub config: IpConfig,
}

impl ForwardSolver for SmacSolver {
    fn solve(&self, _: &dyn ResidualSystem, x: &[f64]) -> Result<Vec<f64>> {
        let m = sym_unpack(self.c.cols(), x)?;
        Ok(smac_pack(&smac_solve(&m, &self.c, &self.config)?))
    }
}

/// SMAC layer for an `n×n` assignment, exposing `y` only.
pub fn smac_layer(n: usize, config: IpConfig, forward_tol: f64) -> Result<ImplicitLayer> {
    let c = assignment_constraints(n, n)?;
    let dim = n * n;
    Ok(ImplicitLayer::new(
        Box::new(SmacResidual::new(c.clone())),
        Box::new(SmacSolver { c, config }),
        forward_tol,
    )
    .with_exposed(0..dim))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packing_roundtrip() {
        let m = Mat::from_rows(&[&[1.0, 2.0, 3.0], &[2.0, 4.0, 5.0], &[3.0, 5.0, 6.0]]);
        let p = sym_pack(&m);
        assert_eq!(p, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(sym_unpack(3, &p).unwrap(), m);
    }

    #[test]
    fn constraint_rows() {
        let c = assignment_constraints(2, 2).unwrap();
        assert_eq!(
            c,
            Mat::from_rows(&[&[1.0, 1.0, 0.0, 0.0], &[0.0, 0.0, 1.0, 1.0], &[1.0, 0.0, 1.0, 0.0]])
        );
        assert!(assignment_constraints(2, 3).is_err());
    }

    #[test]
    fn sm_residual_examples() {
        let inst = MatchingInstance::new(Mat::from_diag(&[2.0, 1.0]), 1, 2);
        // One source and two targets cannot be one-to-one.
        assert!(inst.is_err());
        let inst = MatchingInstance {
            m: Mat::from_diag(&[2.0, 1.0]),
            c: Mat::zeros(0, 2),
            n: 1,
            k: 2,
        };
        let r = sm_residual(&inst, &[1.0, 0.0], -2.0).unwrap();
        assert!(r.iter().all(|v| v.abs() < 1e-15));
        let r = sm_residual(&inst, &[2.0, 0.0], -2.0).unwrap();
        assert!((r[2] - 3.0).abs() < 1e-15);
        let iso = MatchingInstance {
            m: Mat::identity(2),
            ..inst
        };
        let s = core::f64::consts::FRAC_1_SQRT_2;
        let r = sm_residual(&iso, &[s, s], -1.0).unwrap();
        assert!(r.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn smac_residual_examples() {
        let inst = MatchingInstance::new(Mat::from_rows(&[&[1.0]]), 1, 1).unwrap();
        // n = m = 1: y = 1, the quotient gradient vanishes, so λ = ν = 0.
        let sol = SmacSolution {
            y: vec![1.0],
            lambda: vec![0.0],
            nu: vec![0.0],
        };
        assert!(smac_residual(&inst, &sol).unwrap().iter().all(|v| v.abs() < 1e-15));
        let doubled = SmacSolution {
            y: vec![2.0],
            ..sol.clone()
        };
        assert!((smac_residual(&inst, &doubled).unwrap()[1] - 1.0).abs() < 1e-15);
        let neg = SmacSolution {
            y: vec![0.5],
            lambda: vec![0.0],
            nu: vec![-0.2],
        };
        assert!((smac_residual(&inst, &neg).unwrap()[2] + 0.1).abs() < 1e-15);
        let zero = SmacSolution { y: vec![0.0], ..sol };
        assert_eq!(smac_residual(&inst, &zero), Err(Error::ZeroNorm));
    }

    #[test]
    fn traced_smac_residual_matches_plain() {
        let m = Mat::from_rows(&[
            &[1.0, 0.2, 0.1, 0.7],
            &[0.2, 0.3, 0.05, 0.1],
            &[0.1, 0.05, 0.2, 0.0],
            &[0.7, 0.1, 0.0, 0.9],
        ]);
        let inst = MatchingInstance::new(m, 2, 2).unwrap();
        let sol = SmacSolution {
            y: vec![0.6, 0.4, 0.4, 0.6],
            lambda: vec![0.1, -0.2, 0.3],
            nu: vec![0.0, 0.01, -0.02, 0.0],
        };
        let traced = smac_residual(&inst, &sol).unwrap();
        let plain = crate::solvers::smac_kkt_residual(&inst.m, &inst.c, &sol).unwrap();
        for (a, b) in traced.iter().zip(&plain) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
