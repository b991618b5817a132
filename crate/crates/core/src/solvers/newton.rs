use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::implicit::{trace, ForwardSolver, ResidualSystem, SolvedPoint};
use crate::linalg::{factor_checked, SINGULAR_TOL};
use crate::mat::norm_inf;

/// Settings for [`newton_solve`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonConfig {
    pub max_iter: usize,
    /// Target for `‖F(x, y)‖∞`.
    pub tol: f64,
    /// Initial step length, halved while the residual fails to decrease.
    pub damping: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            max_iter: 50,
            tol: 1e-12,
            damping: 1.0,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 || !(self.tol > 0.0) || !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidArgument(
                "newton config needs max_iter >= 1, tol > 0, damping in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

const MAX_HALVINGS: usize = 40;

/// Damped Newton iteration on `y` for fixed `x`:
/// `y ← y − α·J_{F,y}⁻¹·F(x, y)`, starting from `α = damping` and halving
/// until the residual norm drops.
pub fn newton_solve<F: ResidualSystem + ?Sized>(
    f: &F,
    x: &[f64],
    y0: &[f64],
    cfg: &NewtonConfig,
) -> Result<SolvedPoint> {
    cfg.validate()?;
    let mut y = y0.to_vec();
    let mut rec = trace(f, x, &y)?;
    let mut r = rec.output_value().to_vec();
    let mut rnorm = norm_inf(&r);
    for _ in 0..cfg.max_iter {
        if rnorm <= cfg.tol {
            break;
        }
        let jy = rec.jacobian_wrt_input(1)?;
        let step = factor_checked(&jy, SINGULAR_TOL)?.solve_vec(&r);
        let mut alpha = cfg.damping;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let trial: Vec<f64> = y.iter().zip(&step).map(|(yi, d)| yi - alpha * d).collect();
            // A trial point outside the residual's domain counts as an increase.
            if let Ok(trec) = trace(f, x, &trial) {
                let tnorm = norm_inf(trec.output_value());
                if tnorm < rnorm {
                    y = trial;
                    rec = trec;
                    r = rec.output_value().to_vec();
                    rnorm = tnorm;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if rnorm <= cfg.tol {
        Ok(SolvedPoint {
            x: x.to_vec(),
            y,
            residual_norm: rnorm,
        })
    } else {
        Err(Error::NoConvergence {
            iterations: cfg.max_iter,
            residual: rnorm,
        })
    }
}

/// [`ForwardSolver`] running Newton's method from a fixed starting point.
#[derive(Clone, Debug)]
pub struct NewtonSolver {
    pub config: NewtonConfig,
    pub y0: Vec<f64>,
}

impl ForwardSolver for NewtonSolver {
    fn solve(&self, residual: &dyn ResidualSystem, x: &[f64]) -> Result<Vec<f64>> {
        Ok(newton_solve(residual, x, &self.y0, &self.config)?.y)
    }
}
