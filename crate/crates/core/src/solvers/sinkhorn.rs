use crate::error::{Error, Result};
use crate::mat::Mat;

/// Alternating row and column normalization of a strictly positive square
/// matrix. Stops once every row sum is within `tol` of one after a column
/// pass (column sums are then exact).
pub fn sinkhorn(m: &Mat, iters: usize, tol: f64) -> Result<Mat> {
    if !m.is_square() {
        return Err(Error::ShapeMismatch {
            op: "sinkhorn",
            expected: m.rows(),
            found: m.cols(),
        });
    }
    if let Some((i, &v)) = m
        .as_slice()
        .iter()
        .enumerate()
        .find(|(_, v)| !(**v > 0.0 && v.is_finite()))
    {
        return Err(Error::NonPositiveEntry { index: i, value: v });
    }
    let n = m.rows();
    let mut s = m.clone();
    let mut dev = f64::INFINITY;
    for _ in 0..iters {
        for i in 0..n {
            let sum: f64 = s.row(i).iter().sum();
            s.row_mut(i).iter_mut().for_each(|v| *v /= sum);
        }
        for j in 0..n {
            let sum: f64 = (0..n).map(|i| s[(i, j)]).sum();
            for i in 0..n {
                s[(i, j)] /= sum;
            }
        }
        dev = (0..n)
            .map(|i| (s.row(i).iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max);
        if dev <= tol {
            return Ok(s);
        }
    }
    Err(Error::NoConvergence {
        iterations: iters,
        residual: dev,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sums(s: &Mat) -> (f64, f64) {
        let n = s.rows();
        let row = (0..n)
            .map(|i| (s.row(i).iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max);
        let col = (0..n)
            .map(|j| ((0..n).map(|i| s[(i, j)]).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max);
        (row, col)
    }

    #[test]
    fn near_permutation_fixed_point() {
        let mut m = Mat::identity(3);
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    m[(i, j)] = 1e-6;
                }
            }
        }
        let s = sinkhorn(&m, 100, 1e-12).unwrap();
        assert!(s.sub(&Mat::identity(3)).unwrap().max_abs() < 1e-5);
    }

    #[test]
    fn uniform_matrix() {
        let s = sinkhorn(&Mat::from_vec(3, 3, alloc::vec![1.0; 9]).unwrap(), 10, 1e-14).unwrap();
        assert!(s.as_slice().iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn positive_matrix_converges_and_rejects_zero() {
        let m = Mat::from_rows(&[
            &[0.3, 2.0, 0.1, 1.0],
            &[1.5, 0.2, 0.7, 0.9],
            &[0.05, 0.4, 3.0, 0.2],
            &[1.0, 1.0, 0.6, 0.1],
        ]);
        let s = sinkhorn(&m, 200, 1e-6).unwrap();
        let (r, c) = sums(&s);
        assert!(r <= 1e-6 && c <= 1e-12);
        let mut z = m.clone();
        z[(1, 2)] = 0.0;
        assert!(matches!(
            sinkhorn(&z, 200, 1e-6),
            Err(Error::NonPositiveEntry { index: 6, .. })
        ));
    }
}
