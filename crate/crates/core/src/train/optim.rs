use alloc::vec;
use alloc::vec::Vec;

use super::network::ParamBlock;
use crate::error::{check_len, Error, Result};
use crate::mat::all_finite;

/// Updates parameter blocks in place from their gradients.
pub trait Optimizer {
    fn step(&mut self, params: &mut [ParamBlock], grads: &[Vec<f64>]) -> Result<()>;
}

fn check_grads(params: &[ParamBlock], grads: &[Vec<f64>]) -> Result<()> {
    check_len("optimizer blocks", params.len(), grads.len())?;
    for (p, g) in params.iter().zip(grads) {
        check_len("optimizer block", p.values.len(), g.len())?;
        if !all_finite(g) {
            return Err(Error::NonFinite {
                context: "optimizer gradient",
            });
        }
    }
    Ok(())
}

/// `θ ← θ − lr·g`.
pub fn sgd_step(params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
    check_len("sgd", params.len(), grads.len())?;
    if !all_finite(grads) {
        return Err(Error::NonFinite {
            context: "optimizer gradient",
        });
    }
    params.iter_mut().zip(grads).for_each(|(p, g)| *p -= lr * g);
    Ok(())
}

#[derive(Clone, Debug)]
pub struct Sgd {
    pub lr: f64,
}

impl Optimizer for Sgd {
    fn step(&mut self, params: &mut [ParamBlock], grads: &[Vec<f64>]) -> Result<()> {
        check_grads(params, grads)?;
        for (p, g) in params.iter_mut().zip(grads) {
            sgd_step(&mut p.values, g, self.lr)?;
        }
        Ok(())
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }
}

impl Optimizer for Adam {
    fn step(&mut self, params: &mut [ParamBlock], grads: &[Vec<f64>]) -> Result<()> {
        check_grads(params, grads)?;
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.values.len()]).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let c1 = 1.0 - libm::pow(self.beta1, self.t as f64);
        let c2 = 1.0 - libm::pow(self.beta2, self.t as f64);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            for i in 0..g.len() {
                let m = &mut self.m[k][i];
                let v = &mut self.v[k][i];
                *m = self.beta1 * *m + (1.0 - self.beta1) * g[i];
                *v = self.beta2 * *v + (1.0 - self.beta2) * g[i] * g[i];
                p.values[i] -= self.lr * (*m / c1) / (libm::sqrt(*v / c2) + self.eps);
            }
        }
        Ok(())
    }
}
