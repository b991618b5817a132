use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::layers::qp::{KktPoint, QpProblem};
use crate::linalg::LuFactors;
use crate::mat::{dot, norm_inf, Mat};

/// Settings for [`ip_qp_solve`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IpConfig {
    pub max_iter: usize,
    /// Bound on the residual norms and on the average complementarity.
    pub tol: f64,
    /// Centering factor `σ` applied to the duality measure each step.
    pub mu_reduction: f64,
    /// Fraction of the distance to the boundary taken by a step.
    pub frac_to_boundary: f64,
}

impl Default for IpConfig {
    fn default() -> Self {
        IpConfig {
            max_iter: 200,
            tol: 1e-10,
            mu_reduction: 0.1,
            frac_to_boundary: 0.995,
        }
    }
}

impl IpConfig {
    pub fn validate(&self) -> Result<()> {
        let open = |v: f64| v > 0.0 && v < 1.0;
        if self.max_iter == 0 || !(self.tol > 0.0) || !open(self.mu_reduction) || !open(self.frac_to_boundary) {
            return Err(Error::InvalidArgument(
                "interior-point config needs max_iter >= 1, tol > 0, mu_reduction and frac_to_boundary in (0, 1)"
                    .into(),
            ));
        }
        Ok(())
    }
}

/// Dual variables beyond this size signal an empty feasible set.
const DUAL_BLOWUP: f64 = 1e13;

/// Primal-dual path-following interior-point method for [`QpProblem`].
///
/// Uses slacks `s = h − Gy > 0`, a fixed centering factor and the reduced
/// saddle-point system `[[Q + GᵀS⁻¹NG, Aᵀ], [A, 0]]`. On convergence the
/// point is polished by solving the equality-constrained KKT system on the
/// detected active set, which is kept only if it stays feasible, dual
/// feasible and reduces the residual.
pub fn ip_qp_solve(prob: &QpProblem, cfg: &IpConfig) -> Result<KktPoint> {
    cfg.validate()?;
    let (n, p, r) = (prob.n(), prob.p(), prob.r());
    if r == 0 {
        let (y, lambda, _) = solve_active(prob, &[])?;
        return Ok(KktPoint {
            y,
            lambda,
            nu: Vec::new(),
        });
    }

    let mut y = vec![0.0; n];
    let mut lambda = vec![0.0; p];
    let mut s: Vec<f64> = prob.h.iter().map(|&h| h.max(1.0)).collect();
    let mut nu = vec![1.0; r];
    let mut converged = false;
    let mut last_primal = f64::INFINITY;
    let mut last_res = f64::INFINITY;

    for _ in 0..cfg.max_iter {
        // Residuals.
        let mut rd = prob.quad.matvec(&y)?;
        let at = prob.a.matvec_t(&lambda)?;
        let gt = prob.g.matvec_t(&nu)?;
        for i in 0..n {
            rd[i] += prob.lin[i] + at[i] + gt[i];
        }
        let rp: Vec<f64> = prob.a.matvec(&y)?.iter().zip(&prob.b).map(|(l, r)| l - r).collect();
        let gy = prob.g.matvec(&y)?;
        let ri: Vec<f64> = (0..r).map(|i| gy[i] + s[i] - prob.h[i]).collect();
        let mu = dot(&s, &nu) / r as f64;
        last_primal = norm_inf(&rp).max(norm_inf(&ri));
        last_res = norm_inf(&rd).max(last_primal).max(mu);
        if last_res <= cfg.tol {
            converged = true;
            break;
        }
        if norm_inf(&nu) > DUAL_BLOWUP {
            return Err(Error::Infeasible);
        }

        // Newton direction for the perturbed KKT conditions.
        let target = cfg.mu_reduction * mu;
        let rc: Vec<f64> = (0..r).map(|i| target - s[i] * nu[i]).collect();
        let mut k = Mat::zeros(n + p, n + p);
        for i in 0..n {
            for j in 0..n {
                k[(i, j)] = prob.quad[(i, j)];
            }
        }
        for c in 0..r {
            let wgt = nu[c] / s[c];
            let gc = prob.g.row(c);
            for i in 0..n {
                if gc[i] == 0.0 {
                    continue;
                }
                for j in 0..n {
                    k[(i, j)] += wgt * gc[i] * gc[j];
                }
            }
        }
        for e in 0..p {
            for j in 0..n {
                k[(n + e, j)] = prob.a[(e, j)];
                k[(j, n + e)] = prob.a[(e, j)];
            }
        }
        let corr: Vec<f64> = (0..r).map(|c| (rc[c] + nu[c] * ri[c]) / s[c]).collect();
        let gcorr = prob.g.matvec_t(&corr)?;
        let mut rhs: Vec<f64> = (0..n).map(|i| -rd[i] - gcorr[i]).collect();
        rhs.extend(rp.iter().map(|v| -v));
        let lu = LuFactors::new(&k)?;
        if lu.rcond() == 0.0 {
            return Err(Error::SingularMatrix { rcond: 0.0 });
        }
        let d = lu.solve_vec(&rhs);
        let (dy, dl) = d.split_at(n);
        let gdy = prob.g.matvec(dy)?;
        let ds: Vec<f64> = (0..r).map(|c| -ri[c] - gdy[c]).collect();
        let dn: Vec<f64> = (0..r)
            .map(|c| (rc[c] + nu[c] * ri[c] + nu[c] * gdy[c]) / s[c])
            .collect();

        let mut alpha: f64 = 1.0;
        for c in 0..r {
            if ds[c] < 0.0 {
                alpha = alpha.min(-cfg.frac_to_boundary * s[c] / ds[c]);
            }
            if dn[c] < 0.0 {
                alpha = alpha.min(-cfg.frac_to_boundary * nu[c] / dn[c]);
            }
        }
        for i in 0..n {
            y[i] += alpha * dy[i];
        }
        for e in 0..p {
            lambda[e] += alpha * dl[e];
        }
        for c in 0..r {
            s[c] += alpha * ds[c];
            nu[c] += alpha * dn[c];
        }
        if !(crate::mat::all_finite(&y) && crate::mat::all_finite(&nu)) {
            return Err(Error::NonFinite {
                context: "interior-point iterate",
            });
        }
    }

    if !converged {
        if last_primal > libm::sqrt(cfg.tol) {
            return Err(Error::Infeasible);
        }
        return Err(Error::NoConvergence {
            iterations: cfg.max_iter,
            residual: last_res,
        });
    }

    let z = KktPoint { y, lambda, nu };
    Ok(polish(prob, z.clone(), &s, cfg.tol).unwrap_or(z))
}

fn polish(prob: &QpProblem, z: KktPoint, s: &[f64], tol: f64) -> Option<KktPoint> {
    let active: Vec<usize> = (0..prob.r()).filter(|&c| z.nu[c] > s[c]).collect();
    let (y, lambda, nu_a) = solve_active(prob, &active).ok()?;
    if nu_a.iter().any(|&v| v < 0.0) {
        return None;
    }
    let gy = prob.g.matvec(&y).ok()?;
    if gy.iter().zip(&prob.h).any(|(g, h)| g > &(h + tol)) {
        return None;
    }
    let mut nu = vec![0.0; prob.r()];
    for (k, &c) in active.iter().enumerate() {
        nu[c] = nu_a[k];
    }
    let polished = KktPoint { y, lambda, nu };
    let before = norm_inf(&prob.kkt_residual(&z).ok()?);
    let after = norm_inf(&prob.kkt_residual(&polished).ok()?);
    (after <= before).then_some(polished)
}

/// Solves the KKT system with the inequalities in `active` held as
/// equalities and all others dropped. Returns `(y, λ, ν_active)`.
pub(crate) fn solve_active(prob: &QpProblem, active: &[usize]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let (n, p, k) = (prob.n(), prob.p(), active.len());
    let dim = n + p + k;
    let mut m = Mat::zeros(dim, dim);
    let mut rhs = vec![0.0; dim];
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = prob.quad[(i, j)];
        }
        rhs[i] = -prob.lin[i];
    }
    let rows = (0..p)
        .map(|e| (prob.a.row(e), prob.b[e]))
        .chain(active.iter().map(|&c| (prob.g.row(c), prob.h[c])));
    for (e, (row, val)) in rows.enumerate() {
        for j in 0..n {
            m[(n + e, j)] = row[j];
            m[(j, n + e)] = row[j];
        }
        rhs[n + e] = val;
    }
    let lu = crate::linalg::factor_checked(&m, 1e-14)?;
    let sol = lu.solve_vec(&rhs);
    Ok((sol[..n].to_vec(), sol[n..n + p].to_vec(), sol[n + p..].to_vec()))
}
