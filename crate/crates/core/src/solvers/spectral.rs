use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_len, Error, Result};
use crate::linalg::{gen_eig, inverse_sqrt_degrees, lift, reduce, sym_eig, EigPair};
use crate::mat::{dot, norm2, norm_inf, Mat};
use crate::solvers::IpConfig;

/// Relative eigenvalue gap below which an eigenvector is not a function of
/// its matrix.
pub const GAP_TOL: f64 = 1e-8;

/// Largest eigenpair of a symmetric matrix, oriented so the mean of the
/// vector's entries is nonnegative.
pub fn leading_eigvec(m: &Mat) -> Result<EigPair> {
    let pairs = sym_eig(m)?;
    let k = pairs.len();
    if k == 0 {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }
    if k > 1 {
        let gap = pairs[k - 1].value - pairs[k - 2].value;
        if gap <= GAP_TOL * pairs[k - 1].value.abs().max(f64::MIN_POSITIVE) {
            return Err(Error::DegenerateSpectrum { gap });
        }
    }
    let mut top = pairs.into_iter().last().expect("nonempty");
    if top.vector.iter().sum::<f64>() < 0.0 {
        top.vector.iter_mut().for_each(|v| *v = -*v);
    }
    Ok(top)
}

/// Second-smallest pair of `L·v = λ·D·v`, `D = diag(degrees)`.
///
/// When `L` annihilates the constant vector (a graph Laplacian), that
/// trivial solution is deflated first, so the returned vector is
/// `D`-orthogonal to the constants even if the graph is disconnected and
/// `λ₂ = 0`. Fails with [`Error::DegenerateSpectrum`] if `λ₂` is not
/// separated from its neighbours.
pub fn second_gen_eigpair(l: &Mat, degrees: &[f64]) -> Result<EigPair> {
    let n = l.rows();
    check_len("second_gen_eigpair degrees", n, degrees.len())?;
    if n < 2 {
        return Err(Error::InvalidArgument("need at least two nodes".into()));
    }
    let ones = vec![1.0; n];
    let l_ones = l.matvec(&ones)?;
    let laplacian = norm_inf(&l_ones) <= 1e-12 * l.norm_inf().max(1.0);
    let neighbours = |vals: &[f64], k: usize| -> Result<()> {
        let mut gap = f64::INFINITY;
        if k > 0 {
            gap = gap.min(vals[k] - vals[k - 1]);
        }
        if k + 1 < vals.len() {
            gap = gap.min(vals[k + 1] - vals[k]);
        }
        let scale = vals.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        if gap <= GAP_TOL * scale {
            return Err(Error::DegenerateSpectrum { gap });
        }
        Ok(())
    };

    if !laplacian {
        let pairs = gen_eig(l, degrees)?;
        let vals: Vec<f64> = pairs.iter().map(|p| p.value).collect();
        neighbours(&vals, 1)?;
        return Ok(pairs.into_iter().nth(1).expect("n >= 2"));
    }

    // Reduced problem S = D^{-1/2} L D^{-1/2} has the trivial eigenvector
    // u₁ ∝ D^{1/2}·1 with eigenvalue 0; shift it past the top of the spectrum.
    let inv_sqrt = inverse_sqrt_degrees(degrees)?;
    let mut s = reduce(l, &inv_sqrt);
    let mut u1: Vec<f64> = inv_sqrt.iter().map(|v| 1.0 / v).collect();
    let nrm = norm2(&u1);
    u1.iter_mut().for_each(|v| *v /= nrm);
    let shift = 2.0 * s.norm_inf() + 1.0;
    for i in 0..n {
        for j in 0..n {
            s[(i, j)] += shift * u1[i] * u1[j];
        }
    }
    let pairs = sym_eig(&s)?;
    // The trivial pair is removed exactly, so only λ₃ can collide with λ₂.
    let vals: Vec<f64> = pairs[..n - 1].iter().map(|p| p.value).collect();
    neighbours(&vals, 0)?;
    let mut second = lift(pairs.into_iter().next().expect("n >= 2"), &inv_sqrt);
    // Remove the rounding-level trivial component so λ₂ = 0 cuts split cleanly.
    let dv: f64 = degrees.iter().zip(&second.vector).map(|(d, v)| d * v).sum();
    let dsum: f64 = degrees.iter().sum();
    second.vector.iter_mut().for_each(|v| *v -= dv / dsum);
    let nrm = norm2(&second.vector);
    second.vector.iter_mut().for_each(|v| *v /= nrm);
    crate::mat::canonical_sign(&mut second.vector);
    Ok(second)
}

/// Output of [`smac_solve`]: the relaxed assignment and its multipliers.
#[derive(Clone, Debug, PartialEq)]
pub struct SmacSolution {
    pub y: Vec<f64>,
    /// Multipliers of `Cy = 1`.
    pub lambda: Vec<f64>,
    /// Multipliers of `y ≥ 0`. Under the residual's sign convention
    /// (stationarity `∇R + Cᵀλ − ν = 0` for a maximization) they are `≤ 0`.
    pub nu: Vec<f64>,
}

/// Gradient of the Rayleigh quotient `R(y) = yᵀMy / yᵀy`.
pub fn rayleigh_grad(m: &Mat, y: &[f64]) -> Result<Vec<f64>> {
    let my = m.matvec(y)?;
    let yy = dot(y, y);
    if yy == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let ymy = dot(y, &my);
    Ok(my
        .iter()
        .zip(y)
        .map(|(a, b)| 2.0 * (a * yy - ymy * b) / (yy * yy))
        .collect())
}

/// Plain residual of the affinely constrained spectral matching conditions.
pub fn smac_kkt_residual(m: &Mat, c: &Mat, sol: &SmacSolution) -> Result<Vec<f64>> {
    let mut r = rayleigh_grad(m, &sol.y)?;
    let ctl = c.matvec_t(&sol.lambda)?;
    for i in 0..r.len() {
        r[i] += ctl[i] - sol.nu[i];
    }
    r.extend(c.matvec(&sol.y)?.iter().map(|v| v - 1.0));
    r.extend(sol.nu.iter().zip(&sol.y).map(|(a, b)| a * b));
    Ok(r)
}

/// Maximizes `yᵀMy / yᵀy` subject to `Cy = 1`, `y ≥ 0`.
///
/// Primal active-set loop. For a fixed set of free coordinates the
/// equality constraints are made homogeneous (each row minus a reference
/// row), the quotient is maximized over their null space by a projected
/// eigen-decomposition, and the result is scaled onto `Cy = 1`. The most
/// negative coordinate is then fixed at zero, or, once the point is
/// nonnegative, a fixed coordinate whose multiplier shows ascent is freed.
pub fn smac_solve(m: &Mat, c: &Mat, cfg: &IpConfig) -> Result<SmacSolution> {
    cfg.validate()?;
    let n = m.rows();
    check_len("smac M", n, m.cols())?;
    check_len("smac C", n, c.cols())?;
    if n == 0 || c.rows() == 0 {
        return Err(Error::InvalidArgument("smac needs variables and constraints".into()));
    }
    let mut free = vec![true; n];
    let mut last = f64::INFINITY;
    for _ in 0..cfg.max_iter.max(4 * n) {
        let mut y = maximize_on_face(m, c, &free)?;
        let (worst, &most_neg) = y.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("n > 0");
        if most_neg < -cfg.tol {
            free[worst] = false;
            continue;
        }
        y.iter_mut().for_each(|v| *v = v.max(0.0));
        let (lambda, nu) = multipliers(m, c, &y, &free)?;
        let release = (0..n)
            .filter(|&i| !free[i] && nu[i] > cfg.tol)
            .max_by(|&a, &b| nu[a].total_cmp(&nu[b]));
        if let Some(i) = release {
            free[i] = true;
            continue;
        }
        let sol = SmacSolution { y, lambda, nu };
        last = norm_inf(&smac_kkt_residual(m, c, &sol)?);
        if last <= cfg.tol {
            return Ok(sol);
        }
        break;
    }
    Err(Error::NoConvergence {
        iterations: cfg.max_iter,
        residual: last,
    })
}

fn maximize_on_face(m: &Mat, c: &Mat, free: &[bool]) -> Result<Vec<f64>> {
    let idx: Vec<usize> = (0..free.len()).filter(|&i| free[i]).collect();
    let k = idx.len();
    let p = c.rows();
    let cf = Mat::from_vec(p, k, (0..p).flat_map(|r| idx.iter().map(move |&j| c[(r, j)])).collect())?;
    let reference = (0..p)
        .find(|&r| cf.row(r).iter().any(|&v| v != 0.0))
        .ok_or(Error::Infeasible)?;
    if (0..p).any(|r| cf.row(r).iter().all(|&v| v == 0.0)) {
        return Err(Error::Infeasible);
    }

    // Orthonormal basis of {u : (C_r − C_ref)·u = 0 for all r}.
    let mut gram = Mat::zeros(k, k);
    for r in 0..p {
        if r == reference {
            continue;
        }
        let d: Vec<f64> = (0..k).map(|j| cf[(r, j)] - cf[(reference, j)]).collect();
        for a in 0..k {
            for b in 0..k {
                gram[(a, b)] += d[a] * d[b];
            }
        }
    }
    let pairs = sym_eig(&gram)?;
    let thresh = 1e-10 * gram.norm_inf().max(1.0);
    let basis: Vec<&EigPair> = pairs.iter().filter(|p| p.value <= thresh).collect();
    if basis.is_empty() {
        return Err(Error::Infeasible);
    }
    let d = basis.len();
    let mut b = Mat::zeros(k, d);
    for (col, pr) in basis.iter().enumerate() {
        b.set_col(col, &pr.vector);
    }
    let mut mf = Mat::zeros(k, k);
    for (a, &ia) in idx.iter().enumerate() {
        for (bb, &ib) in idx.iter().enumerate() {
            mf[(a, bb)] = m[(ia, ib)];
        }
    }
    let mut proj = b.transpose().matmul(&mf)?.matmul(&b)?;
    let sym = proj.transpose();
    for i in 0..d {
        for j in 0..d {
            proj[(i, j)] = 0.5 * (proj[(i, j)] + sym[(i, j)]);
        }
    }
    let eig = sym_eig(&proj)?;
    let cref = cf.row(reference);
    for cand in eig.iter().rev() {
        let u = b.matvec(&cand.vector)?;
        let scale = dot(cref, &u);
        if scale.abs() > 1e-10 * norm2(&u) {
            let mut y = vec![0.0; free.len()];
            for (a, &i) in idx.iter().enumerate() {
                y[i] = u[a] / scale;
            }
            return Ok(y);
        }
    }
    Err(Error::Infeasible)
}

/// Least-squares `λ` from stationarity on the free coordinates, then `ν`
/// from stationarity everywhere (zero on free coordinates).
fn multipliers(m: &Mat, c: &Mat, y: &[f64], free: &[bool]) -> Result<(Vec<f64>, Vec<f64>)> {
    let grad = rayleigh_grad(m, y)?;
    let p = c.rows();
    let idx: Vec<usize> = (0..free.len()).filter(|&i| free[i]).collect();
    let mut normal = Mat::zeros(p, p);
    let mut rhs = vec![0.0; p];
    for a in 0..p {
        for &j in &idx {
            rhs[a] -= c[(a, j)] * grad[j];
            for bb in 0..p {
                normal[(a, bb)] += c[(a, j)] * c[(bb, j)];
            }
        }
    }
    // Minimum-norm solution through the eigen-decomposition.
    let pairs = sym_eig(&normal)?;
    let top = pairs.last().map_or(0.0, |p| p.value.abs());
    let mut lambda = vec![0.0; p];
    for pr in &pairs {
        if pr.value > 1e-12 * top.max(1.0) {
            let coef = dot(&pr.vector, &rhs) / pr.value;
            crate::mat::axpy(coef, &pr.vector, &mut lambda);
        }
    }
    let ctl = c.matvec_t(&lambda)?;
    let nu = (0..y.len())
        .map(|i| if free[i] { 0.0 } else { grad[i] + ctl[i] })
        .collect();
    Ok((lambda, nu))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::matching::assignment_constraints;

    const SQRT2: f64 = core::f64::consts::SQRT_2;

    #[test]
    fn leading_pairs() {
        let p = leading_eigvec(&Mat::from_diag(&[2.0, 1.0])).unwrap();
        assert!((p.value - 2.0).abs() < 1e-14);
        assert!((p.vector[0] - 1.0).abs() < 1e-14 && p.vector[1].abs() < 1e-14);
        let p = leading_eigvec(&Mat::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]])).unwrap();
        assert!((p.value - 1.0).abs() < 1e-14);
        assert!((p.vector[0] - 1.0 / SQRT2).abs() < 1e-14 && (p.vector[1] - 1.0 / SQRT2).abs() < 1e-14);
        assert!(matches!(
            leading_eigvec(&Mat::identity(3)),
            Err(Error::DegenerateSpectrum { .. })
        ));
    }

    #[test]
    fn second_pair_two_nodes() {
        let l = Mat::from_rows(&[&[1.0, -1.0], &[-1.0, 1.0]]);
        let p = second_gen_eigpair(&l, &[1.0, 1.0]).unwrap();
        assert!((p.value - 2.0).abs() < 1e-12);
        assert!((p.vector[0] - 1.0 / SQRT2).abs() < 1e-12);
        assert!((p.vector[1] + 1.0 / SQRT2).abs() < 1e-12);
    }

    #[test]
    fn second_pair_disconnected_cliques() {
        let w = Mat::from_rows(&[
            &[0.0, 1.0, 0.0, 0.0],
            &[1.0, 0.0, 0.0, 0.0],
            &[0.0, 0.0, 0.0, 1.0],
            &[0.0, 0.0, 1.0, 0.0],
        ]);
        let d = [1.0; 4];
        let l = Mat::from_diag(&d).sub(&w).unwrap();
        let p = second_gen_eigpair(&l, &d).unwrap();
        assert!(p.value.abs() < 1e-12);
        assert!(p.vector[0] * p.vector[1] > 0.0);
        assert!(p.vector[0] * p.vector[2] < 0.0);
        assert!(p.vector[2] * p.vector[3] > 0.0);
    }

    #[test]
    fn second_pair_path_matches_full_solve() {
        let l = Mat::from_rows(&[&[1.0, -1.0, 0.0], &[-1.0, 2.0, -1.0], &[0.0, -1.0, 1.0]]);
        let d = [1.0, 2.0, 1.0];
        let full = gen_eig(&l, &d).unwrap();
        let p = second_gen_eigpair(&l, &d).unwrap();
        assert!((p.value - full[1].value).abs() < 1e-12);
        for (a, b) in p.vector.iter().zip(&full[1].vector) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn smac_single_pair() {
        let c = assignment_constraints(1, 1).unwrap();
        let sol = smac_solve(&Mat::from_rows(&[&[1.0]]), &c, &IpConfig::default()).unwrap();
        assert!((sol.y[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn smac_prefers_identity_assignment() {
        // y = vec of a 2×2 assignment; identity uses entries 0 and 3.
        let m = Mat::from_rows(&[
            &[1.0, 0.0, 0.0, 0.8],
            &[0.0, 0.1, 0.05, 0.0],
            &[0.0, 0.05, 0.1, 0.0],
            &[0.8, 0.0, 0.0, 1.0],
        ]);
        let c = assignment_constraints(2, 2).unwrap();
        let cfg = IpConfig::default();
        let sol = smac_solve(&m, &c, &cfg).unwrap();
        assert!(sol.y[0] >= 0.5 && sol.y[3] >= 0.5);
        assert!(norm_inf(&smac_kkt_residual(&m, &c, &sol).unwrap()) <= cfg.tol);
    }
}
