//! Quadratic programs as implicit layers.
//!
//! The layer solves
//! `min ½yᵀQy + qᵀy  s.t.  Ay = b, Gy ≤ h`
//! and is defined by the KKT residual
//! `[Qy + q + Aᵀλ + Gᵀν; Ay − b; ν ⊙ (Gy − h)]`.
//! Its input packs `(Q, q, A, b, G, h)` row-major in that order; its output
//! is the KKT point `(y, λ, ν)`, of which only `y` is exposed downstream.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::{Tape, Var};
use crate::error::{check_len, Error, Result};
use crate::implicit::{adjoint, trace, ForwardSolver, ImplicitLayer, ResidualSystem, SolvedPoint};
use crate::linalg::{sym_eig, SINGULAR_TOL, SYMMETRY_TOL};
use crate::mat::{dot, norm_inf, Mat};
use crate::solvers::{ip_qp_solve, IpConfig};

/// Smallest eigenvalue of `Q` accepted as positive semidefinite.
pub const PSD_TOL: f64 = 1e-10;

/// `min ½yᵀQy + qᵀy  s.t.  Ay = b, Gy ≤ h`.
#[derive(Clone, Debug, PartialEq)]
pub struct QpProblem {
    /// `Q`, n×n.
    pub quad: Mat,
    /// `q`, length n.
    pub lin: Vec<f64>,
    /// `A`, p×n.
    pub a: Mat,
    pub b: Vec<f64>,
    /// `G`, r×n.
    pub g: Mat,
    pub h: Vec<f64>,
}

impl QpProblem {
    /// Validates shapes, finiteness, symmetry and semidefiniteness of `Q`.
    pub fn new(quad: Mat, lin: Vec<f64>, a: Mat, b: Vec<f64>, g: Mat, h: Vec<f64>) -> Result<Self> {
        let n = lin.len();
        check_len("qp Q rows", n, quad.rows())?;
        check_len("qp Q cols", n, quad.cols())?;
        check_len("qp A cols", n, a.cols())?;
        check_len("qp b", a.rows(), b.len())?;
        check_len("qp G cols", n, g.cols())?;
        check_len("qp h", g.rows(), h.len())?;
        let finite = [quad.as_slice(), &lin, a.as_slice(), &b, g.as_slice(), &h]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()));
        if !finite {
            return Err(Error::NonFinite { context: "qp data" });
        }
        let dev = quad.asymmetry();
        if dev > SYMMETRY_TOL * quad.norm_inf().max(1.0) {
            return Err(Error::Asymmetric { deviation: dev });
        }
        if n > 0 {
            let min_eig = sym_eig(&quad)?[0].value;
            if min_eig < -PSD_TOL {
                return Err(Error::InvalidArgument(alloc::format!(
                    "Q is not positive semidefinite (min eigenvalue {min_eig:e})"
                )));
            }
        }
        Ok(QpProblem { quad, lin, a, b, g, h })
    }

    /// Problem without equality or inequality constraints.
    pub fn unconstrained(quad: Mat, lin: Vec<f64>) -> Result<Self> {
        let n = lin.len();
        Self::new(quad, lin, Mat::zeros(0, n), Vec::new(), Mat::zeros(0, n), Vec::new())
    }

    pub fn n(&self) -> usize {
        self.lin.len()
    }

    pub fn p(&self) -> usize {
        self.b.len()
    }

    pub fn r(&self) -> usize {
        self.h.len()
    }

    pub fn objective(&self, y: &[f64]) -> f64 {
        let qy = self.quad.matvec(y).expect("checked shape");
        0.5 * dot(y, &qy) + dot(&self.lin, y)
    }

    /// Length of [`pack`](Self::pack) for the given dimensions.
    pub fn packed_len(n: usize, p: usize, r: usize) -> usize {
        n * n + n + p * n + p + r * n + r
    }

    /// Row-major concatenation of `(Q, q, A, b, G, h)`.
    pub fn pack(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(Self::packed_len(self.n(), self.p(), self.r()));
        for part in [
            self.quad.as_slice(),
            &self.lin,
            self.a.as_slice(),
            &self.b,
            self.g.as_slice(),
            &self.h,
        ] {
            v.extend_from_slice(part);
        }
        v
    }

    /// Inverse of [`pack`](Self::pack), with full validation.
    pub fn unpack(n: usize, p: usize, r: usize, x: &[f64]) -> Result<Self> {
        check_len("qp unpack", Self::packed_len(n, p, r), x.len())?;
        let mut rest = x;
        let mut take = |k: usize| {
            let (head, tail) = rest.split_at(k);
            rest = tail;
            head.to_vec()
        };
        let quad = Mat::from_vec(n, n, take(n * n))?;
        let lin = take(n);
        let a = Mat::from_vec(p, n, take(p * n))?;
        let b = take(p);
        let g = Mat::from_vec(r, n, take(r * n))?;
        let h = take(r);
        Self::new(quad, lin, a, b, g, h)
    }

    /// Plain (untraced) KKT residual at `z`.
    pub fn kkt_residual(&self, z: &KktPoint) -> Result<Vec<f64>> {
        check_len("kkt y", self.n(), z.y.len())?;
        check_len("kkt lambda", self.p(), z.lambda.len())?;
        check_len("kkt nu", self.r(), z.nu.len())?;
        let mut stat = self.quad.matvec(&z.y)?;
        let at = self.a.matvec_t(&z.lambda)?;
        let gt = self.g.matvec_t(&z.nu)?;
        for i in 0..self.n() {
            stat[i] += self.lin[i] + at[i] + gt[i];
        }
        let ay = self.a.matvec(&z.y)?;
        let gy = self.g.matvec(&z.y)?;
        stat.extend(ay.iter().zip(&self.b).map(|(l, r)| l - r));
        stat.extend(gy.iter().zip(&self.h).zip(&z.nu).map(|((gi, hi), ni)| ni * (gi - hi)));
        Ok(stat)
    }
}

/// A primal-dual point `(y, λ, ν)` of a [`QpProblem`].
#[derive(Clone, Debug, PartialEq)]
pub struct KktPoint {
    pub y: Vec<f64>,
    pub lambda: Vec<f64>,
    pub nu: Vec<f64>,
}

impl KktPoint {
    /// Concatenation `(y, λ, ν)`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.y.clone();
        v.extend_from_slice(&self.lambda);
        v.extend_from_slice(&self.nu);
        v
    }

    pub fn from_slice(n: usize, p: usize, r: usize, v: &[f64]) -> Result<Self> {
        check_len("kkt point", n + p + r, v.len())?;
        Ok(KktPoint {
            y: v[..n].to_vec(),
            lambda: v[n..n + p].to_vec(),
            nu: v[n + p..].to_vec(),
        })
    }
}

/// KKT residual of a QP with the given dimensions, as a [`ResidualSystem`]
/// over the packed problem data.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QpResidual {
    pub n: usize,
    pub p: usize,
    pub r: usize,
}

impl QpResidual {
    pub fn for_problem(prob: &QpProblem) -> Self {
        QpResidual {
            n: prob.n(),
            p: prob.p(),
            r: prob.r(),
        }
    }
}

impl ResidualSystem for QpResidual {
    fn input_dim(&self) -> usize {
        QpProblem::packed_len(self.n, self.p, self.r)
    }

    fn output_dim(&self) -> usize {
        self.n + self.p + self.r
    }

    fn residual(&self, t: &mut Tape, x: Var, z: Var) -> Result<Var> {
        let QpResidual { n, p, r } = *self;
        let mut off = 0;
        let mut next = |t: &mut Tape, len: usize| {
            let v = t.slice(x, off, len);
            off += len;
            v
        };
        let quad = next(t, n * n)?;
        let lin = next(t, n)?;
        let a = next(t, p * n)?;
        let b = next(t, p)?;
        let g = next(t, r * n)?;
        let h = next(t, r)?;
        let y = t.slice(z, 0, n)?;
        let lambda = t.slice(z, n, p)?;
        let nu = t.slice(z, n + p, r)?;

        let qy = t.matvec(quad, y, n, n)?;
        let mut stat = t.add(qy, lin)?;
        let mut parts = Vec::with_capacity(3);
        if p > 0 {
            let at = t.transpose(a, p, n)?;
            let atl = t.matvec(at, lambda, n, p)?;
            stat = t.add(stat, atl)?;
        }
        if r > 0 {
            let gt = t.transpose(g, r, n)?;
            let gtn = t.matvec(gt, nu, n, r)?;
            stat = t.add(stat, gtn)?;
        }
        parts.push(stat);
        if p > 0 {
            let ay = t.matvec(a, y, p, n)?;
            parts.push(t.sub(ay, b)?);
        }
        if r > 0 {
            let gy = t.matvec(g, y, r, n)?;
            let slack = t.sub(gy, h)?;
            parts.push(t.mul(nu, slack)?);
        }
        t.concat(&parts)
    }
}

/// The traced KKT residual of `prob` at `z`.
pub fn qp_residual(prob: &QpProblem, z: &KktPoint) -> Result<Vec<f64>> {
    QpResidual::for_problem(prob).eval(&prob.pack(), &z.to_vec())
}

/// Loss gradients with respect to each QP parameter block.
#[derive(Clone, Debug, PartialEq)]
pub struct QpGrads {
    pub quad: Mat,
    pub lin: Vec<f64>,
    pub a: Mat,
    pub b: Vec<f64>,
    pub g: Mat,
    pub h: Vec<f64>,
}

impl QpGrads {
    /// Same layout as [`QpProblem::pack`].
    pub fn pack(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for part in [
            self.quad.as_slice(),
            &self.lin,
            self.a.as_slice(),
            &self.b,
            self.g.as_slice(),
            &self.h,
        ] {
            v.extend_from_slice(part);
        }
        v
    }
}

/// Parameter gradients of a QP layer given `gbar = ∂L/∂y` (primal only).
///
/// With the adjoint `w = (w₁, w₂, w₃)` solving `J_{F,z}ᵀ w = (gbar, 0, 0)`:
/// `∂L/∂Q = −w₁yᵀ`, `∂L/∂q = −w₁`, `∂L/∂A = −(λw₁ᵀ + w₂yᵀ)`, `∂L/∂b = w₂`,
/// `∂L/∂G = −(νw₁ᵀ + (ν⊙w₃)yᵀ)`, `∂L/∂h = ν⊙w₃`.
pub fn qp_layer_backward_param_grads(prob: &QpProblem, z: &KktPoint, gbar: &[f64]) -> Result<QpGrads> {
    let (n, p, r) = (prob.n(), prob.p(), prob.r());
    check_len("qp gbar", n, gbar.len())?;
    let sys = QpResidual { n, p, r };
    let mut rec = trace(&sys, &prob.pack(), &z.to_vec())?;
    let mut seed = vec![0.0; n + p + r];
    seed[..n].copy_from_slice(gbar);
    let (_, w) = adjoint(&mut rec, &seed, SINGULAR_TOL)?;
    let (w1, rest) = w.split_at(n);
    let (w2, w3) = rest.split_at(p);

    let mut quad = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            quad[(i, j)] = -w1[i] * z.y[j];
        }
    }
    let mut a = Mat::zeros(p, n);
    for k in 0..p {
        for j in 0..n {
            a[(k, j)] = -(z.lambda[k] * w1[j] + w2[k] * z.y[j]);
        }
    }
    let mut g = Mat::zeros(r, n);
    let mut h = vec![0.0; r];
    for i in 0..r {
        let nw = z.nu[i] * w3[i];
        for j in 0..n {
            g[(i, j)] = -(z.nu[i] * w1[j] + nw * z.y[j]);
        }
        h[i] = nw;
    }
    Ok(QpGrads {
        quad,
        lin: w1.iter().map(|v| -v).collect(),
        a,
        b: w2.to_vec(),
        g,
        h,
    })
}

/// Forward solver that unpacks the QP from the layer input and runs the
/// interior-point method.
#[derive(Clone, Debug)]
pub struct QpSolver {
    pub dims: QpResidual,
    pub config: IpConfig,
}

impl ForwardSolver for QpSolver {
    fn solve(&self, _: &dyn ResidualSystem, x: &[f64]) -> Result<Vec<f64>> {
        let QpResidual { n, p, r } = self.dims;
        let prob = QpProblem::unpack(n, p, r, x)?;
        Ok(ip_qp_solve(&prob, &self.config)?.to_vec())
    }
}

/// A QP layer exposing only the primal solution. The forward tolerance
/// is checked against the KKT residual.
pub fn qp_layer(n: usize, p: usize, r: usize, config: IpConfig, forward_tol: f64) -> ImplicitLayer {
    let dims = QpResidual { n, p, r };
    ImplicitLayer::new(Box::new(dims), Box::new(QpSolver { dims, config }), forward_tol).with_exposed(0..n)
}

/// Solves `prob` and wraps the result as a [`SolvedPoint`] of its residual.
pub fn solve_qp_point(prob: &QpProblem, config: &IpConfig) -> Result<(KktPoint, SolvedPoint)> {
    let z = ip_qp_solve(prob, config)?;
    let res = prob.kkt_residual(&z)?;
    let p = SolvedPoint {
        x: prob.pack(),
        y: z.to_vec(),
        residual_norm: norm_inf(&res),
    };
    Ok((z, p))
}
