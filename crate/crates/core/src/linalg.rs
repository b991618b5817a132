//! Dense LU factorization and symmetric eigensolvers.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::mat::{canonical_sign, dot, norm2, Mat};

/// Reciprocal condition numbers below this abort the solve.
pub const SINGULAR_TOL: f64 = 1e-10;

/// Degrees at or below this are treated as isolated vertices.
pub const DEGREE_FLOOR: f64 = 1e-12;

/// Relative asymmetry accepted by the symmetric eigensolvers.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Packed LU factors of `P·A = L·U` with partial pivoting.
#[derive(Clone, Debug)]
pub struct LuFactors {
    lu: Mat,
    perm: Vec<usize>,
    rcond: f64,
}

impl LuFactors {
    /// Factors a square matrix. Never fails on singular input; a zero pivot
    /// yields `rcond == 0`.
    pub fn new(a: &Mat) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::ShapeMismatch {
                op: "lu",
                expected: a.rows(),
                found: a.cols(),
            });
        }
        if !a.is_finite() {
            return Err(Error::NonFinite { context: "lu input" });
        }
        let n = a.rows();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut singular = false;
        for k in 0..n {
            let mut p = k;
            let mut best = lu[(k, k)].abs();
            for i in k + 1..n {
                let v = lu[(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 {
                singular = true;
                continue;
            }
            if p != k {
                perm.swap(p, k);
                for j in 0..n {
                    let t = lu[(p, j)];
                    lu[(p, j)] = lu[(k, j)];
                    lu[(k, j)] = t;
                }
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] / pivot;
                lu[(i, k)] = f;
                if f != 0.0 {
                    for j in k + 1..n {
                        lu[(i, j)] -= f * lu[(k, j)];
                    }
                }
            }
        }
        let mut out = LuFactors { lu, perm, rcond: 0.0 };
        if !singular && n > 0 {
            let anorm = a.norm_one();
            let inv_norm = out.inverse_norm_one_estimate();
            out.rcond = if anorm == 0.0 || !inv_norm.is_finite() {
                0.0
            } else {
                1.0 / (anorm * inv_norm)
            };
        } else if n == 0 {
            out.rcond = 1.0;
        }
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.lu.rows()
    }

    /// Estimated reciprocal condition number in the 1-norm.
    pub fn rcond(&self) -> f64 {
        self.rcond
    }

    /// Solves `A·x = b`.
    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s = dot(&self.lu.row(i)[..i], &x[..i]);
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s = dot(&self.lu.row(i)[i + 1..], &x[i + 1..]);
            x[i] = (x[i] - s) / self.lu[(i, i)];
        }
        x
    }

    /// Solves `Aᵀ·x = b`.
    pub fn solve_transpose_vec(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        // Aᵀ = Uᵀ Lᵀ P, so solve Uᵀ z = b, Lᵀ w = z, x = Pᵀ w.
        let mut z = b.to_vec();
        for i in 0..n {
            let mut s = z[i];
            for k in 0..i {
                s -= self.lu[(k, i)] * z[k];
            }
            z[i] = s / self.lu[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in i + 1..n {
                s -= self.lu[(k, i)] * z[k];
            }
            z[i] = s;
        }
        let mut x = vec![0.0; n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = z[i];
        }
        x
    }

    pub fn solve(&self, b: &Mat) -> Result<Mat> {
        if b.rows() != self.dim() {
            return Err(Error::ShapeMismatch {
                op: "lu solve",
                expected: self.dim(),
                found: b.rows(),
            });
        }
        let mut x = Mat::zeros(b.rows(), b.cols());
        for j in 0..b.cols() {
            x.set_col(j, &self.solve_vec(&b.col(j)));
        }
        Ok(x)
    }

    /// Hager–Higham estimate of `‖A⁻¹‖₁`.
    fn inverse_norm_one_estimate(&self) -> f64 {
        let n = self.dim();
        let mut x = vec![1.0 / n as f64; n];
        let mut est = 0.0;
        let mut last_j = usize::MAX;
        for _ in 0..5 {
            let y = self.solve_vec(&x);
            est = y.iter().map(|v| v.abs()).sum::<f64>();
            let xi: Vec<f64> = y.iter().map(|&v| if v >= 0.0 { 1.0 } else { -1.0 }).collect();
            let z = self.solve_transpose_vec(&xi);
            let (j, zmax) = z.iter().enumerate().fold((0, f64::NEG_INFINITY), |(bj, bv), (j, v)| {
                if v.abs() > bv {
                    (j, v.abs())
                } else {
                    (bj, bv)
                }
            });
            if zmax <= dot(&z, &x) || j == last_j {
                break;
            }
            last_j = j;
            x.iter_mut().for_each(|v| *v = 0.0);
            x[j] = 1.0;
        }
        // Alternative probe guarding against the estimator's known blind spots.
        if n > 1 {
            let alt: Vec<f64> = (0..n)
                .map(|i| {
                    let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                    s * (1.0 + i as f64 / (n - 1) as f64)
                })
                .collect();
            let y = self.solve_vec(&alt);
            let alt_est = 2.0 * y.iter().map(|v| v.abs()).sum::<f64>() / (3.0 * n as f64);
            est = est.max(alt_est);
        }
        est
    }
}

/// Solves `A·X = B`, failing with [`Error::SingularMatrix`] when the
/// estimated reciprocal condition number is below [`SINGULAR_TOL`].
pub fn lu_solve(a: &Mat, b: &Mat) -> Result<Mat> {
    let lu = factor_checked(a, SINGULAR_TOL)?;
    lu.solve(b)
}

/// Factors `a`, rejecting it if `rcond < tol`.
pub fn factor_checked(a: &Mat, tol: f64) -> Result<LuFactors> {
    let lu = LuFactors::new(a)?;
    if lu.rcond() < tol {
        return Err(Error::SingularMatrix { rcond: lu.rcond() });
    }
    Ok(lu)
}

/// An eigenvalue with its unit-norm eigenvector.
#[derive(Clone, Debug, PartialEq)]
pub struct EigPair {
    pub value: f64,
    pub vector: Vec<f64>,
}

fn check_symmetric(s: &Mat) -> Result<()> {
    if !s.is_square() {
        return Err(Error::ShapeMismatch {
            op: "sym_eig",
            expected: s.rows(),
            found: s.cols(),
        });
    }
    if !s.is_finite() {
        return Err(Error::NonFinite {
            context: "eigensolver input",
        });
    }
    let dev = s.asymmetry();
    if dev > SYMMETRY_TOL * s.norm_inf() {
        return Err(Error::Asymmetric { deviation: dev });
    }
    Ok(())
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues ascending.
///
/// Householder tridiagonalization followed by implicit QL. Each eigenvector
/// is unit length with its first largest-magnitude component positive.
pub fn sym_eig(s: &Mat) -> Result<Vec<EigPair>> {
    check_symmetric(s)?;
    let n = s.rows();
    if n == 0 {
        return Ok(Vec::new());
    }
    // Work on the exact symmetric part.
    let mut v = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            v[(i, j)] = 0.5 * (s[(i, j)] + s[(j, i)]);
        }
    }
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(&mut v, &mut d, &mut e);
    tridiagonal_ql(&mut v, &mut d, &mut e)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
    Ok(order
        .into_iter()
        .map(|k| {
            let mut vec = v.col(k);
            let nrm = norm2(&vec);
            vec.iter_mut().for_each(|x| *x /= nrm);
            canonical_sign(&mut vec);
            EigPair {
                value: d[k],
                vector: vec,
            }
        })
        .collect())
}

/// Householder reduction to tridiagonal form (EISPACK `tred2`). On exit `v`
/// holds the accumulated orthogonal transform, `d` the diagonal and `e` the
/// subdiagonal in `e[1..]`.
fn tridiagonalize(v: &mut Mat, d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    for j in 0..n {
        d[j] = v[(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[(i - 1, j)];
                v[(i, j)] = 0.0;
                v[(j, i)] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = libm::sqrt(h);
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for j in 0..i {
                e[j] = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[(j, i)] = f;
                g = e[j] + v[(j, j)] * f;
                for k in j + 1..i {
                    g += v[(k, j)] * d[k];
                    e[k] += v[(k, j)] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[(i - 1, j)];
                v[(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
        v[(n - 1, i)] = v[(i, i)];
        v[(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[(k, i + 1)] * v[(k, j)];
                }
                for k in 0..=i {
                    v[(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[(n - 1, j)];
        v[(n - 1, j)] = 0.0;
    }
    v[(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

/// Implicit QL iterations on the tridiagonal matrix (EISPACK `tql2`).
fn tridiagonal_ql(v: &mut Mat, d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m == n {
            m = n - 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > 60 {
                    return Err(Error::NoConvergence {
                        iterations: iter,
                        residual: e[l].abs(),
                    });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = libm::hypot(p, 1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for i in l + 2..n {
                    d[i] -= h;
                }
                f += h;
                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = libm::hypot(p, e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        h = v[(k, i + 1)];
                        v[(k, i + 1)] = s * v[(k, i)] + c * h;
                        v[(k, i)] = c * v[(k, i)] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// Generalized symmetric-definite eigenproblem `L·v = λ·D·v` for diagonal
/// `D = diag(degrees)`, via the symmetric reduction `D^{-1/2} L D^{-1/2}`.
///
/// Eigenvalues ascend. Vectors are mutually `D`-orthogonal and returned with
/// unit Euclidean norm under the [`canonical_sign`] convention.
pub fn gen_eig(l: &Mat, degrees: &[f64]) -> Result<Vec<EigPair>> {
    check_symmetric(l)?;
    if degrees.len() != l.rows() {
        return Err(Error::ShapeMismatch {
            op: "gen_eig",
            expected: l.rows(),
            found: degrees.len(),
        });
    }
    let inv_sqrt = inverse_sqrt_degrees(degrees)?;
    let reduced = reduce(l, &inv_sqrt);
    Ok(sym_eig(&reduced)?.into_iter().map(|p| lift(p, &inv_sqrt)).collect())
}

pub(crate) fn inverse_sqrt_degrees(degrees: &[f64]) -> Result<Vec<f64>> {
    degrees
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            if d > DEGREE_FLOOR {
                Ok(1.0 / libm::sqrt(d))
            } else {
                Err(Error::NonPositiveDegree { index: i, value: d })
            }
        })
        .collect()
}

pub(crate) fn reduce(l: &Mat, inv_sqrt: &[f64]) -> Mat {
    let n = l.rows();
    let mut s = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            s[(i, j)] = inv_sqrt[i] * l[(i, j)] * inv_sqrt[j];
        }
    }
    s
}

/// Maps a reduced-problem eigenvector `u` back to `v = D^{-1/2} u`.
pub(crate) fn lift(p: EigPair, inv_sqrt: &[f64]) -> EigPair {
    let mut v: Vec<f64> = p.vector.iter().zip(inv_sqrt).map(|(u, s)| u * s).collect();
    let nrm = norm2(&v);
    v.iter_mut().for_each(|x| *x /= nrm);
    canonical_sign(&mut v);
    EigPair {
        value: p.value,
        vector: v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const SQRT2: f64 = core::f64::consts::SQRT_2;

    fn random_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
        Mat::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn random_sym(rng: &mut ChaCha8Rng, n: usize) -> Mat {
        let a = random_mat(rng, n, n);
        let mut s = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                s[(i, j)] = a[(i, j)] + a[(j, i)];
            }
        }
        s
    }

    #[test]
    fn identity_solve_returns_rhs() {
        let b = Mat::from_rows(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]);
        assert_eq!(lu_solve(&Mat::identity(3), &b).unwrap(), b);
    }

    #[test]
    fn example_one_adjoint_matrix_solve() {
        let a = Mat::from_rows(&[&[2.0, 2.0 * SQRT2], &[1.0, 0.0]]);
        let x = lu_solve(&a, &Mat::column(&[2.0, 1.0])).unwrap();
        assert!((x[(0, 0)] - 1.0).abs() < 1e-14);
        assert!(x[(1, 0)].abs() < 1e-14);
    }

    #[test]
    fn zero_matrix_is_singular() {
        let r = lu_solve(&Mat::zeros(3, 3), &Mat::column(&[1.0, 1.0, 1.0]));
        assert!(matches!(r, Err(Error::SingularMatrix { rcond }) if rcond == 0.0));
    }

    #[test]
    fn nearly_singular_is_rejected() {
        let a = Mat::from_rows(&[&[1.0, 1.0], &[1.0, 1.0 + 1e-13]]);
        assert!(matches!(
            lu_solve(&a, &Mat::column(&[1.0, 1.0])),
            Err(Error::SingularMatrix { .. })
        ));
    }

    #[test]
    fn rcond_exact_on_two_by_two() {
        // ‖A‖₁ = 3, ‖A⁻¹‖₁ = 1 + 1/√2 for the Example 1 output Jacobian.
        let a = Mat::from_rows(&[&[2.0, 2.0 * SQRT2], &[1.0, 0.0]]);
        let lu = LuFactors::new(&a).unwrap();
        let expect = 1.0 / (3.0 * (1.0 + 1.0 / SQRT2));
        assert!((lu.rcond() - expect).abs() < 1e-12, "{}", lu.rcond());
    }

    #[test]
    fn transpose_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_mat(&mut rng, 5, 5);
        let b: Vec<f64> = (0..5).map(|i| i as f64 - 2.0).collect();
        let lu = LuFactors::new(&a).unwrap();
        let x = lu.solve_transpose_vec(&b);
        let back = a.matvec_t(&x).unwrap();
        for (u, v) in back.iter().zip(&b) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn lu_roundtrip_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        while checked < 50 {
            let n = rng.gen_range(1..9);
            let a = random_mat(&mut rng, n, n);
            let lu = LuFactors::new(&a).unwrap();
            if lu.rcond() <= 1e-6 {
                continue;
            }
            let b = random_mat(&mut rng, n, 3);
            let x = lu.solve(&b).unwrap();
            let r = a.matmul(&x).unwrap().sub(&b).unwrap();
            assert!(r.max_abs() <= 1e-8 * (1.0 + b.norm_inf()));
            checked += 1;
        }
    }

    #[test]
    fn diagonal_eigen() {
        let pairs = sym_eig(&Mat::from_diag(&[3.0, 1.0, 2.0])).unwrap();
        let values: Vec<f64> = pairs.iter().map(|p| p.value).collect();
        assert_eq!(values, vec![1.0, 2.0, 3.0]);
        assert_eq!(pairs[0].vector, vec![0.0, 1.0, 0.0]);
        assert_eq!(pairs[1].vector, vec![0.0, 0.0, 1.0]);
        assert_eq!(pairs[2].vector, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn two_node_laplacian() {
        let pairs = sym_eig(&Mat::from_rows(&[&[1.0, -1.0], &[-1.0, 1.0]])).unwrap();
        let h = 1.0 / SQRT2;
        assert!(pairs[0].value.abs() < 1e-14);
        assert!((pairs[1].value - 2.0).abs() < 1e-14);
        assert!((pairs[0].vector[0] - h).abs() < 1e-14 && (pairs[0].vector[1] - h).abs() < 1e-14);
        assert!((pairs[1].vector[0] - h).abs() < 1e-14 && (pairs[1].vector[1] + h).abs() < 1e-14);
    }

    #[test]
    fn random_symmetric_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let s = random_sym(&mut rng, 6);
            let pairs = sym_eig(&s).unwrap();
            let mut recon = Mat::zeros(6, 6);
            for p in &pairs {
                for i in 0..6 {
                    for j in 0..6 {
                        recon[(i, j)] += p.value * p.vector[i] * p.vector[j];
                    }
                }
            }
            assert!(recon.sub(&s).unwrap().max_abs() < 1e-8 * s.norm_inf());
            for w in pairs.windows(2) {
                assert!(w[0].value <= w[1].value);
            }
            for a in 0..6 {
                for b in 0..6 {
                    let d = dot(&pairs[a].vector, &pairs[b].vector);
                    let expect = if a == b { 1.0 } else { 0.0 };
                    assert!((d - expect).abs() < 1e-8);
                }
                let sv = s.matvec(&pairs[a].vector).unwrap();
                for i in 0..6 {
                    assert!((sv[i] - pairs[a].value * pairs[a].vector[i]).abs() < 1e-8 * s.norm_inf());
                }
            }
        }
    }

    #[test]
    fn asymmetric_input_rejected() {
        let s = Mat::from_rows(&[&[1.0, 2.0], &[0.0, 1.0]]);
        assert!(matches!(sym_eig(&s), Err(Error::Asymmetric { .. })));
    }

    #[test]
    fn gen_eig_identity_degrees_matches_sym_eig() {
        let l = Mat::from_rows(&[&[1.0, -1.0], &[-1.0, 1.0]]);
        let g = gen_eig(&l, &[1.0, 1.0]).unwrap();
        let s = sym_eig(&l).unwrap();
        for (a, b) in g.iter().zip(&s) {
            assert!((a.value - b.value).abs() < 1e-14);
            for (x, y) in a.vector.iter().zip(&b.vector) {
                assert!((x - y).abs() < 1e-14);
            }
        }
    }

    fn laplacian(w: &Mat) -> (Mat, Vec<f64>) {
        let n = w.rows();
        let d: Vec<f64> = (0..n).map(|i| w.row(i).iter().sum()).collect();
        let mut l = w.scale(-1.0);
        for i in 0..n {
            l[(i, i)] += d[i];
        }
        (l, d)
    }

    #[test]
    fn gen_eig_disconnected_blocks() {
        let mut w = Mat::zeros(4, 4);
        for (i, j, v) in [(0, 1, 2.0), (2, 3, 0.5)] {
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
        let (l, d) = laplacian(&w);
        let pairs = gen_eig(&l, &d).unwrap();
        assert!(pairs[1].value.abs() < 1e-12);
        let v = &pairs[1].vector;
        assert!(v[0] * v[1] >= 0.0 && v[2] * v[3] >= 0.0);
        assert!((v[0] - v[1]).abs() < 1e-10 && (v[2] - v[3]).abs() < 1e-10);
    }

    #[test]
    fn gen_eig_random_graph_matches_reduced_problem() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 8;
        let mut w = Mat::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                let v = rng.gen_range(0.05..1.0);
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
        let (l, d) = laplacian(&w);
        let pairs = gen_eig(&l, &d).unwrap();
        // Oracle: the reduced symmetric matrix solved directly.
        let inv: Vec<f64> = d.iter().map(|x| 1.0 / x.sqrt()).collect();
        let mut s = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                s[(i, j)] = inv[i] * l[(i, j)] * inv[j];
            }
        }
        let reduced = sym_eig(&s).unwrap();
        for (p, r) in pairs.iter().zip(&reduced) {
            assert!((p.value - r.value).abs() < 1e-8);
            let lv = l.matvec(&p.vector).unwrap();
            for i in 0..n {
                assert!((lv[i] - p.value * d[i] * p.vector[i]).abs() < 1e-8);
            }
        }
        for a in 0..n {
            for b in 0..a {
                let dd: f64 = (0..n).map(|i| pairs[a].vector[i] * d[i] * pairs[b].vector[i]).sum();
                assert!(dd.abs() < 1e-8);
            }
        }
    }

    #[test]
    fn gen_eig_rejects_isolated_vertex() {
        let l = Mat::zeros(2, 2);
        assert!(matches!(
            gen_eig(&l, &[1.0, 0.0]),
            Err(Error::NonPositiveDegree { index: 1, .. })
        ));
    }
}
