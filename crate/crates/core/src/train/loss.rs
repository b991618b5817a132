use alloc::vec::Vec;

use crate::error::{check_len, Error, Result};
use crate::layers::dense::softmax;
use crate::mat::dot;

/// Supervision for one sample.
#[derive(Clone, Debug, PartialEq)]
pub enum Target {
    Class(usize),
    Vector(Vec<f64>),
}

impl Target {
    fn class(&self) -> Result<usize> {
        match self {
            Target::Class(c) => Ok(*c),
            Target::Vector(_) => Err(Error::InvalidArgument("expected a class label".into())),
        }
    }

    fn vector(&self) -> Result<&[f64]> {
        match self {
            Target::Vector(v) => Ok(v),
            Target::Class(_) => Err(Error::InvalidArgument("expected a vector target".into())),
        }
    }
}

/// A scalar loss with its gradient with respect to the network output.
pub trait Loss {
    fn eval(&self, output: &[f64], target: &Target) -> Result<(f64, Vec<f64>)>;
}

/// A per-sample score averaged over a split.
pub trait Metric {
    fn name(&self) -> &'static str;
    fn score(&self, output: &[f64], target: &Target) -> Result<f64>;
}

/// `−log softmax(logits)[label]` with gradient `softmax − onehot`.
///
/// The log-sum-exp is taken relative to the labelled logit, so when that
/// logit dominates the loss keeps its tiny positive value through `log1p`
/// instead of rounding to zero. It is never negative.
pub fn nll_softmax_loss(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::InvalidArgument(alloc::format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let ref_logit = logits[label];
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let loss = if max <= ref_logit {
        let rest: f64 = logits
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != label)
            .map(|(_, v)| libm::exp(v - ref_logit))
            .sum();
        libm::log1p(rest)
    } else {
        let s: f64 = logits.iter().map(|v| libm::exp(v - max)).sum();
        max + libm::log(s) - ref_logit
    };
    let mut grad = softmax(logits);
    grad[label] -= 1.0;
    Ok((loss.max(0.0), grad))
}

pub struct NllSoftmax;

impl Loss for NllSoftmax {
    fn eval(&self, output: &[f64], target: &Target) -> Result<(f64, Vec<f64>)> {
        nll_softmax_loss(output, target.class()?)
    }
}

/// `½‖output − target‖²`.
pub struct SquaredError;

impl Loss for SquaredError {
    fn eval(&self, output: &[f64], target: &Target) -> Result<(f64, Vec<f64>)> {
        let t = target.vector()?;
        check_len("squared error", output.len(), t.len())?;
        let d: Vec<f64> = output.iter().zip(t).map(|(o, t)| o - t).collect();
        Ok((0.5 * dot(&d, &d), d))
    }
}

/// `1 − cos²(output, target)`: zero when the output is parallel to the
/// target with either sign.
pub struct CosineSquared;

impl Loss for CosineSquared {
    fn eval(&self, output: &[f64], target: &Target) -> Result<(f64, Vec<f64>)> {
        let t = target.vector()?;
        check_len("cosine loss", output.len(), t.len())?;
        let tt = dot(t, t);
        let oo = dot(output, output);
        if tt == 0.0 || oo == 0.0 {
            return Err(Error::ZeroNorm);
        }
        let c = dot(output, t);
        let loss = 1.0 - c * c / (oo * tt);
        let grad = output
            .iter()
            .zip(t)
            .map(|(o, t)| -2.0 * c * t / (oo * tt) + 2.0 * c * c * o / (oo * oo * tt))
            .collect();
        Ok((loss, grad))
    }
}

/// Fraction of samples whose largest output is the labelled class.
pub struct Accuracy;

impl Metric for Accuracy {
    fn name(&self) -> &'static str {
        "accuracy"
    }

    fn score(&self, output: &[f64], target: &Target) -> Result<f64> {
        let label = target.class()?;
        Ok(if argmax(output) == Some(label) { 1.0 } else { 0.0 })
    }
}

/// Index of the first maximal entry.
pub fn argmax(v: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &x) in v.iter().enumerate() {
        if best.is_none_or(|(_, b)| x > b) {
            best = Some((i, x));
        }
    }
    best.map(|b| b.0)
}
