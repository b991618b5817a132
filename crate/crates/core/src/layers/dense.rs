//! Explicit building blocks.

use alloc::vec::Vec;

use crate::autodiff::{Tape, Var};
use crate::error::{check_len, Result};
use crate::mat::Mat;

/// Affine map `W·x + b`.
pub fn dense(w: &Mat, bias: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    check_len("dense bias", w.rows(), bias.len())?;
    let mut y = w.matvec(x)?;
    y.iter_mut().zip(bias).for_each(|(y, b)| *y += b);
    Ok(y)
}

/// Probabilities `exp(x − max x) / Σ exp(x − max x)`.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut e: Vec<f64> = x.iter().map(|v| libm::exp(v - max)).collect();
    let s: f64 = e.iter().sum();
    e.iter_mut().for_each(|v| *v /= s);
    e
}

/// `log softmax(x)`, computed shift-invariantly.
pub fn log_softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + libm::log(x.iter().map(|v| libm::exp(v - max)).sum::<f64>());
    x.iter().map(|v| v - lse).collect()
}

/// Traced `W·x + b` with `W` stored row-major as `rows × cols`.
pub fn traced_dense(t: &mut Tape, w: Var, b: Var, x: Var, rows: usize, cols: usize) -> Result<Var> {
    let wx = t.matvec(w, x, rows, cols)?;
    t.add(wx, b)
}

/// Traced alternating row/column normalization of a positive `n × n`
/// matrix, for a fixed number of sweeps.
pub fn traced_sinkhorn(t: &mut Tape, s: Var, n: usize, sweeps: usize) -> Result<Var> {
    let row_of: Vec<usize> = (0..n * n).map(|k| k / n).collect();
    let col_of: Vec<usize> = (0..n * n).map(|k| k % n).collect();
    let mut s = s;
    for _ in 0..sweeps {
        for owner in [&row_of, &col_of] {
            let sums = t.scatter_add(s, owner, n)?;
            let spread = t.gather(sums, owner)?;
            s = t.div(s, spread)?;
        }
    }
    Ok(s)
}

/// Traced power iteration `v ← Mv/‖Mv‖` from the all-ones vector, for a
/// fixed number of steps.
pub fn traced_power_iteration(t: &mut Tape, m: Var, n: usize, steps: usize) -> Result<Var> {
    let start = alloc::vec![1.0 / libm::sqrt(n as f64); n];
    let mut v = t.constant(&start);
    for _ in 0..steps {
        let mv = t.matvec(m, v, n, n)?;
        let sq = t.dot(mv, mv)?;
        let nrm = t.sqrt(sq);
        let one = t.scalar(1.0);
        let inv = t.div(one, nrm)?;
        v = t.scale(inv, mv)?;
    }
    Ok(v)
}
