//! Random instance generators and brute-force oracles shared by the
//! integration suites.
#![allow(dead_code, clippy::needless_range_loop)]

use implicit_core::autodiff::finite_diff_jacobian_scaled;
use implicit_core::implicit::ImplicitLayer;
use implicit_core::layers::matching::{assignment_constraints, sym_pack};
use implicit_core::layers::qp::{KktPoint, QpProblem};
use implicit_core::linalg::{lu_solve, sym_eig};
use implicit_core::Mat;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub mod suite;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

pub fn uniform_mat(rng: &mut ChaCha8Rng, r: usize, c: usize, lo: f64, hi: f64) -> Mat {
    Mat::from_vec(r, c, uniform_vec(rng, r * c, lo, hi)).unwrap()
}

/// `LLᵀ + shift·I` with `L` uniform in [−1, 1].
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> Mat {
    let l = uniform_mat(rng, n, n, -1.0, 1.0);
    let mut q = l.matmul(&l.transpose()).unwrap();
    for i in 0..n {
        q[(i, i)] += shift;
    }
    q
}

/// A QP with a known solution: inequalities are either active with
/// multiplier at least `margin` or inactive with slack at least `margin`.
///
/// The rows of `A` and of the active `G` rows have smallest singular value
/// at least 0.1, so the KKT matrix stays well conditioned.
pub fn random_qp(rng: &mut ChaCha8Rng, n: usize, p: usize, r: usize, margin: f64) -> (QpProblem, KktPoint) {
    loop {
        let (prob, z) = draw_qp(rng, n, p, r, margin);
        let active: Vec<&[f64]> = (0..p)
            .map(|e| prob.a.row(e))
            .chain((0..r).filter(|&c| z.nu[c] > 0.0).map(|c| prob.g.row(c)))
            .collect();
        let k = active.len();
        let mut gram = Mat::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                gram[(i, j)] = active[i].iter().zip(active[j]).map(|(a, b)| a * b).sum();
            }
        }
        if k == 0 || sym_eig(&gram).unwrap()[0].value >= 0.01 {
            return (prob, z);
        }
    }
}

fn draw_qp(rng: &mut ChaCha8Rng, n: usize, p: usize, r: usize, margin: f64) -> (QpProblem, KktPoint) {
    let quad = random_spd(rng, n, 0.5);
    let a = uniform_mat(rng, p, n, -1.0, 1.0);
    let g = uniform_mat(rng, r, n, -1.0, 1.0);
    let y = uniform_vec(rng, n, -1.0, 1.0);
    let lambda = uniform_vec(rng, p, -1.0, 1.0);
    let mut order: Vec<usize> = (0..r).collect();
    order.shuffle(rng);
    let max_active = (n - p).min(r);
    let n_active = rng.gen_range(0..=max_active);
    let mut nu = vec![0.0; r];
    let gy = g.matvec(&y).unwrap();
    let mut h = vec![0.0; r];
    for (k, &c) in order.iter().enumerate() {
        if k < n_active {
            nu[c] = margin + rng.gen_range(0.0..1.0);
            h[c] = gy[c];
        } else {
            h[c] = gy[c] + margin + rng.gen_range(0.0..1.0);
        }
    }
    let qy = quad.matvec(&y).unwrap();
    let at = a.matvec_t(&lambda).unwrap();
    let gt = g.matvec_t(&nu).unwrap();
    let lin: Vec<f64> = (0..n).map(|i| -(qy[i] + at[i] + gt[i])).collect();
    let b = a.matvec(&y).unwrap();
    let prob = QpProblem::new(quad, lin, a, b, g, h).unwrap();
    (prob, KktPoint { y, lambda, nu })
}

/// Minimum objective over all active sets whose equality-constrained KKT
/// point is primal and dual feasible.
pub fn brute_force_qp(prob: &QpProblem) -> Option<(f64, Vec<f64>)> {
    let (n, p, r) = (prob.n(), prob.p(), prob.r());
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << r) {
        let active: Vec<usize> = (0..r).filter(|&c| mask >> c & 1 == 1).collect();
        let k = active.len();
        if p + k > n {
            continue;
        }
        let dim = n + p + k;
        let mut m = Mat::zeros(dim, dim);
        let mut rhs = Mat::zeros(dim, 1);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = prob.quad[(i, j)];
            }
            rhs[(i, 0)] = -prob.lin[i];
        }
        let rows: Vec<(Vec<f64>, f64)> = (0..p)
            .map(|e| (prob.a.row(e).to_vec(), prob.b[e]))
            .chain(active.iter().map(|&c| (prob.g.row(c).to_vec(), prob.h[c])))
            .collect();
        for (e, (row, val)) in rows.iter().enumerate() {
            for j in 0..n {
                m[(n + e, j)] = row[j];
                m[(j, n + e)] = row[j];
            }
            rhs[(n + e, 0)] = *val;
        }
        let Ok(sol) = lu_solve(&m, &rhs) else { continue };
        let z = sol.col(0);
        let y = z[..n].to_vec();
        if z[n + p..].iter().any(|&v| v < -1e-9) {
            continue;
        }
        let gy = prob.g.matvec(&y).unwrap();
        if gy.iter().zip(&prob.h).any(|(g, h)| *g > h + 1e-9) {
            continue;
        }
        let obj = prob.objective(&y);
        if best.as_ref().is_none_or(|b| obj < b.0) {
            best = Some((obj, y));
        }
    }
    best
}

/// Maps a perturbation of the free coordinates `(upper-triangle of Q, q, A,
/// b, G, h)` to the packed QP layout, keeping `Q` symmetric.
pub struct SymmetricQpCoords {
    pub n: usize,
    pub p: usize,
    pub r: usize,
}

impl SymmetricQpCoords {
    pub fn free_len(&self) -> usize {
        let n = self.n;
        n * (n + 1) / 2 + QpProblem::packed_len(n, self.p, self.r) - n * n
    }

    pub fn to_free(&self, packed: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut v = Vec::new();
        for i in 0..n {
            for j in i..n {
                v.push(packed[i * n + j]);
            }
        }
        v.extend_from_slice(&packed[n * n..]);
        v
    }

    pub fn to_packed(&self, free: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut q = vec![0.0; n * n];
        let mut k = 0;
        for i in 0..n {
            for j in i..n {
                q[i * n + j] = free[k];
                q[j * n + i] = free[k];
                k += 1;
            }
        }
        q.extend_from_slice(&free[k..]);
        q
    }

    /// Columns of a Jacobian over the packed layout, combined into the
    /// free coordinates.
    pub fn reduce_columns(&self, j: &Mat) -> Mat {
        let n = self.n;
        let mut out = Mat::zeros(j.rows(), self.free_len());
        for row in 0..j.rows() {
            let src = j.row(row);
            let mut k = 0;
            for a in 0..n {
                for b in a..n {
                    out[(row, k)] = if a == b {
                        src[a * n + b]
                    } else {
                        src[a * n + b] + src[b * n + a]
                    };
                    k += 1;
                }
            }
            for (off, v) in src[n * n..].iter().enumerate() {
                out[(row, k + off)] = *v;
            }
        }
        out
    }
}

/// Central-difference Jacobian of the exposed output of `layer`.
pub fn fd_through_layer(layer: &ImplicitLayer, x: &[f64]) -> Mat {
    finite_diff_jacobian_scaled(|x| Ok(layer.output(&layer.forward(x)?).to_vec()), x, 1e-5).unwrap()
}

/// Largest entry difference relative to the largest entry magnitude.
pub fn mat_rel_err(a: &Mat, b: &Mat) -> f64 {
    assert_eq!((a.rows(), a.cols()), (b.rows(), b.cols()));
    let diff = a.sub(b).unwrap().max_abs();
    let scale = a.max_abs().max(b.max_abs());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Rows of `j` restricted to `range`.
pub fn rows(j: &Mat, range: std::ops::Range<usize>) -> Mat {
    let mut out = Mat::zeros(range.len(), j.cols());
    for (k, r) in range.enumerate() {
        out.row_mut(k).copy_from_slice(j.row(r));
    }
    out
}

/// Complete graph on `n` nodes with weights uniform in [0.1, 1].
pub fn random_complete_graph(rng: &mut ChaCha8Rng, n: usize) -> (Vec<(usize, usize)>, Vec<f64>) {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            edges.push((i, j));
        }
    }
    let w = uniform_vec(rng, edges.len(), 0.1, 1.0);
    (edges, w)
}

/// Symmetric matrix with entries uniform in [0, 1].
pub fn random_affinity(rng: &mut ChaCha8Rng, dim: usize) -> Mat {
    let mut m = Mat::zeros(dim, dim);
    for i in 0..dim {
        for j in i..dim {
            let v = rng.gen_range(0.0..1.0);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Keypoint-style matching affinity for `n` points and a jittered copy.
pub fn keypoint_affinity(rng: &mut ChaCha8Rng, n: usize, jitter: f64) -> Mat {
    let p: Vec<[f64; 2]> = (0..n).map(|_| [rng.gen::<f64>(), rng.gen::<f64>()]).collect();
    let q: Vec<[f64; 2]> = p
        .iter()
        .map(|a| {
            [
                a[0] + jitter * rng.gen_range(-1.0..1.0),
                a[1] + jitter * rng.gen_range(-1.0..1.0),
            ]
        })
        .collect();
    let d = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    let dim = n * n;
    let mut m = Mat::zeros(dim, dim);
    for i in 0..n {
        for a in 0..n {
            for j in 0..n {
                for b in 0..n {
                    let v = if i == j && a == b {
                        0.5 + 0.5 * rng.gen::<f64>()
                    } else if i == j || a == b {
                        0.0
                    } else {
                        (-(d(p[i], p[j]) - d(q[a], q[b])).powi(2) / 0.02).exp()
                    };
                    m[(i * n + a, j * n + b)] = v;
                }
            }
        }
    }
    // Symmetrize the random diagonal draws.
    let t = m.transpose();
    let data = m
        .as_slice()
        .iter()
        .zip(t.as_slice())
        .map(|(x, y)| 0.5 * (x + y))
        .collect();
    Mat::from_vec(dim, dim, data).unwrap()
}

pub fn packed_affinity(m: &Mat) -> Vec<f64> {
    sym_pack(m)
}

pub fn constraints(n: usize) -> Mat {
    assignment_constraints(n, n).unwrap()
}
