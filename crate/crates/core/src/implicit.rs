//! Backward passes for implicitly defined layers.
//!
//! Given a residual system `F: ℝⁿ × ℝᵐ → ℝᵐ` and a point with `F(x, y) ≈ 0`,
//! the output map `y(x)` has Jacobian `−J_{F,y}⁻¹ J_{F,x}`. The partial
//! Jacobians come from tracing `F` on a tape as if it were an explicit layer
//! of the concatenated argument `(x, y)`.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::autodiff::{record, Recording, Tape, Var};
use crate::error::{check_len, Error, Result};
use crate::linalg::{factor_checked, LuFactors, SINGULAR_TOL};
use crate::mat::{norm_inf, Mat};

/// The function `F(x, y)` defining an implicit layer.
///
/// `x` packs the previous layer's output together with any trainable
/// parameters; `y` is the layer output. `residual` must be written with tape
/// primitives and return a node of length [`output_dim`](Self::output_dim).
pub trait ResidualSystem {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn residual(&self, tape: &mut Tape, x: Var, y: Var) -> Result<Var>;

    /// Untraced-looking evaluation (records and discards a tape).
    fn eval(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        Ok(trace(self, x, y)?.output_value().to_vec())
    }
}

/// Residual system backed by a closure.
pub struct FnResidual<F> {
    n: usize,
    m: usize,
    f: F,
}

impl<F> FnResidual<F>
where
    F: Fn(&mut Tape, Var, Var) -> Result<Var>,
{
    pub fn new(input_dim: usize, output_dim: usize, f: F) -> Self {
        FnResidual {
            n: input_dim,
            m: output_dim,
            f,
        }
    }
}

impl<F> ResidualSystem for FnResidual<F>
where
    F: Fn(&mut Tape, Var, Var) -> Result<Var>,
{
    fn input_dim(&self) -> usize {
        self.n
    }

    fn output_dim(&self) -> usize {
        self.m
    }

    fn residual(&self, tape: &mut Tape, x: Var, y: Var) -> Result<Var> {
        (self.f)(tape, x, y)
    }
}

/// Records `F` with inputs ordered `(x, y)`.
pub fn trace<F: ResidualSystem + ?Sized>(f: &F, x: &[f64], y: &[f64]) -> Result<Recording> {
    check_len("residual input", f.input_dim(), x.len())?;
    check_len("residual output", f.output_dim(), y.len())?;
    let rec = record(&[x, y], |t, v| f.residual(t, v[0], v[1]))?;
    check_len("residual value", f.output_dim(), rec.output_value().len())?;
    Ok(rec)
}

/// A layer state `(x, y)` together with `‖F(x, y)‖∞`.
#[derive(Clone, Debug, PartialEq)]
pub struct SolvedPoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub residual_norm: f64,
}

impl SolvedPoint {
    /// Evaluates the residual at `(x, y)` and stores its norm.
    pub fn new<F: ResidualSystem + ?Sized>(f: &F, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let r = f.eval(&x, &y)?;
        Ok(SolvedPoint {
            residual_norm: norm_inf(&r),
            x,
            y,
        })
    }
}

/// The partial Jacobians `(J_{F,y}, J_{F,x})` at `p`.
pub fn residual_jacobians<F: ResidualSystem + ?Sized>(f: &F, p: &SolvedPoint) -> Result<(Mat, Mat)> {
    let mut rec = trace(f, &p.x, &p.y)?;
    let full = rec.jacobian()?;
    let (n, m) = (f.input_dim(), f.output_dim());
    let mut jy = Mat::zeros(m, m);
    let mut jx = Mat::zeros(m, n);
    for i in 0..m {
        let row = full.row(i);
        jx.row_mut(i).copy_from_slice(&row[..n]);
        jy.row_mut(i).copy_from_slice(&row[n..]);
    }
    Ok((jy, jx))
}

/// Dense `∂y/∂x = −J_{F,y}⁻¹ J_{F,x}` (m×n). Intended for checks; the
/// backward pass uses [`implicit_vjp`].
pub fn ift_jacobian<F: ResidualSystem + ?Sized>(f: &F, p: &SolvedPoint) -> Result<Mat> {
    let (jy, jx) = residual_jacobians(f, p)?;
    let lu = factor_checked(&jy, SINGULAR_TOL)?;
    Ok(lu.solve(&jx)?.scale(-1.0))
}

/// Adjoint-mode backward pass: returns `(∂L/∂x)ᵀ = −wᵀ J_{F,x}` where `w`
/// solves `J_{F,y}ᵀ w = gbar`.
///
/// Only `J_{F,y}` is formed densely; the product with `J_{F,x}` is one
/// reverse sweep seeded with `w`.
pub fn implicit_vjp<F: ResidualSystem + ?Sized>(f: &F, p: &SolvedPoint, gbar: &[f64]) -> Result<Vec<f64>> {
    implicit_vjp_with_tol(f, p, gbar, SINGULAR_TOL)
}

/// [`implicit_vjp`] with a caller-chosen conditioning threshold.
pub fn implicit_vjp_with_tol<F: ResidualSystem + ?Sized>(
    f: &F,
    p: &SolvedPoint,
    gbar: &[f64],
    rcond_tol: f64,
) -> Result<Vec<f64>> {
    check_len("implicit_vjp gbar", f.output_dim(), gbar.len())?;
    let mut rec = trace(f, &p.x, &p.y)?;
    if gbar.iter().all(|&g| g == 0.0) {
        return Ok(vec![0.0; f.input_dim()]);
    }
    let (_, w) = adjoint(&mut rec, gbar, rcond_tol)?;
    let mut ct = rec.vjp(&w)?;
    let mut gx = core::mem::take(&mut ct[0]);
    gx.iter_mut().for_each(|v| *v = -*v);
    Ok(gx)
}

/// Factors `J_{F,y}` from a recording with inputs `(x, y)` and solves the
/// adjoint system `J_{F,y}ᵀ w = gbar`.
pub(crate) fn adjoint(rec: &mut Recording, gbar: &[f64], rcond_tol: f64) -> Result<(LuFactors, Vec<f64>)> {
    let jy = rec.jacobian_wrt_input(1)?;
    let lu = factor_checked(&jy, rcond_tol)?;
    let w = lu.solve_transpose_vec(gbar);
    Ok((lu, w))
}

/// Tolerances for [`check_wellposed`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WellPosedTol {
    pub residual: f64,
    pub rcond: f64,
}

impl Default for WellPosedTol {
    fn default() -> Self {
        WellPosedTol {
            residual: 1e-8,
            rcond: SINGULAR_TOL,
        }
    }
}

/// Outcome of checking the implicit-function-theorem hypotheses at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct WellPosedness {
    pub residual_norm: f64,
    /// Estimated 1-norm reciprocal condition number of `J_{F,y}`.
    pub rcond: f64,
    pub residual_ok: bool,
    pub invertible_ok: bool,
}

impl WellPosedness {
    pub fn passed(&self) -> bool {
        self.residual_ok && self.invertible_ok
    }
}

/// Reports the residual norm and conditioning of `J_{F,y}` at `p`. Never
/// fails: evaluation errors are reported as a failed check.
pub fn check_wellposed<F: ResidualSystem + ?Sized>(f: &F, p: &SolvedPoint, tol: WellPosedTol) -> WellPosedness {
    let evaluated = trace(f, &p.x, &p.y).and_then(|mut rec| {
        let r = norm_inf(rec.output_value());
        let jy = rec.jacobian_wrt_input(1)?;
        Ok((r, LuFactors::new(&jy)?.rcond()))
    });
    match evaluated {
        Ok((residual_norm, rcond)) => WellPosedness {
            residual_norm,
            rcond,
            residual_ok: residual_norm <= tol.residual,
            invertible_ok: rcond >= tol.rcond,
        },
        Err(_) => WellPosedness {
            residual_norm: f64::INFINITY,
            rcond: 0.0,
            residual_ok: false,
            invertible_ok: false,
        },
    }
}

/// Forward-pass strategy for an implicit layer.
pub trait ForwardSolver {
    /// Returns `y` with `F(x, y) ≈ 0`. The residual is supplied for solvers
    /// (such as Newton's method) that need it.
    fn solve(&self, residual: &dyn ResidualSystem, x: &[f64]) -> Result<Vec<f64>>;
}

impl<S> ForwardSolver for S
where
    S: Fn(&[f64]) -> Result<Vec<f64>>,
{
    fn solve(&self, _: &dyn ResidualSystem, x: &[f64]) -> Result<Vec<f64>> {
        self(x)
    }
}

/// A residual system paired with its forward solver.
pub struct ImplicitLayer {
    residual: Box<dyn ResidualSystem>,
    solver: Box<dyn ForwardSolver>,
    forward_tol: f64,
    rcond_tol: f64,
    exposed: Range<usize>,
}

impl ImplicitLayer {
    pub fn new(residual: Box<dyn ResidualSystem>, solver: Box<dyn ForwardSolver>, forward_tol: f64) -> Self {
        let m = residual.output_dim();
        ImplicitLayer {
            residual,
            solver,
            forward_tol,
            rcond_tol: SINGULAR_TOL,
            exposed: 0..m,
        }
    }

    /// Restricts the part of `y` handed to downstream layers (for example
    /// the primal block of a KKT point). Gradients for the hidden part are
    /// zero.
    pub fn with_exposed(mut self, range: Range<usize>) -> Self {
        assert!(range.end <= self.residual.output_dim());
        self.exposed = range;
        self
    }

    /// Conditioning threshold applied to `J_{F,y}` in the backward pass.
    pub fn with_rcond_tol(mut self, tol: f64) -> Self {
        self.rcond_tol = tol;
        self
    }

    pub fn residual(&self) -> &dyn ResidualSystem {
        self.residual.as_ref()
    }

    pub fn forward_tol(&self) -> f64 {
        self.forward_tol
    }

    pub fn exposed(&self) -> Range<usize> {
        self.exposed.clone()
    }

    /// Solves the layer at `x` and verifies the residual tolerance.
    pub fn forward(&self, x: &[f64]) -> Result<SolvedPoint> {
        check_len("implicit layer input", self.residual.input_dim(), x.len())?;
        let y = self.solver.solve(self.residual.as_ref(), x)?;
        let p = SolvedPoint::new(self.residual.as_ref(), x.to_vec(), y)?;
        if !(p.residual_norm <= self.forward_tol) {
            return Err(Error::ResidualTooLarge {
                norm: p.residual_norm,
                tol: self.forward_tol,
            });
        }
        Ok(p)
    }

    /// The exposed slice of a solved output.
    pub fn output<'a>(&self, p: &'a SolvedPoint) -> &'a [f64] {
        &p.y[self.exposed.clone()]
    }

    /// Backward pass given the gradient with respect to the exposed output.
    pub fn backward(&self, p: &SolvedPoint, gout: &[f64]) -> Result<Vec<f64>> {
        check_len("implicit layer gradient", self.exposed.len(), gout.len())?;
        let mut gbar = vec![0.0; self.residual.output_dim()];
        gbar[self.exposed.clone()].copy_from_slice(gout);
        implicit_vjp_with_tol(self.residual.as_ref(), p, &gbar, self.rcond_tol)
    }
}

/// Wraps an explicit map `y = f(x)` as the residual `f(x) − y`.
pub struct ExplicitAsImplicit<F> {
    n: usize,
    m: usize,
    f: F,
}

impl<F> ExplicitAsImplicit<F>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    pub fn new(input_dim: usize, output_dim: usize, f: F) -> Self {
        ExplicitAsImplicit {
            n: input_dim,
            m: output_dim,
            f,
        }
    }

    /// Evaluates the wrapped map directly.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(record(&[x], |t, v| (self.f)(t, v[0]))?.output_value().to_vec())
    }
}

impl<F> ResidualSystem for ExplicitAsImplicit<F>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    fn input_dim(&self) -> usize {
        self.n
    }

    fn output_dim(&self) -> usize {
        self.m
    }

    fn residual(&self, tape: &mut Tape, x: Var, y: Var) -> Result<Var> {
        let fx = (self.f)(tape, x)?;
        tape.sub(fx, y)
    }
}
