//! Training loop, losses, optimizers and the gradient-check harness.
//!
//! Samples are processed one at a time; a mini-batch accumulates their
//! gradients before a single optimizer step. A sample whose forward or
//! backward pass fails (for instance because an implicit layer left its
//! well-posed region) is skipped with a warning and counted.

mod layer;
mod loss;
mod network;
mod optim;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

pub use layer::{ExplicitLayer, ImplicitAdapter, Layer, LayerState};
pub use loss::{argmax, nll_softmax_loss, Accuracy, CosineSquared, Loss, Metric, NllSoftmax, SquaredError, Target};
pub use network::{ForwardPass, Network, ParamBlock};
pub use optim::{sgd_step, Adam, Optimizer, Sgd};

use crate::error::{Error, Result};
use crate::mat::{all_finite, norm_inf};

/// One input with its supervision.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub input: Vec<f64>,
    pub target: Target,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub iter: usize,
    pub epoch: usize,
    pub split: Split,
    pub loss: f64,
    pub metric_name: String,
    pub metric_value: f64,
}

/// Learning-curve records with a strictly increasing iteration index.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunLog {
    records: Vec<RunRecord>,
    next_iter: usize,
}

impl RunLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn records(&self) -> &[RunRecord] {
        &self.records
    }

    /// Appends a record at the next iteration index.
    pub fn push(&mut self, epoch: usize, split: Split, loss: f64, metric_name: &str, metric_value: f64) -> Result<()> {
        if !(loss.is_finite() && metric_value.is_finite()) {
            return Err(Error::NonFinite { context: "run log" });
        }
        self.records.push(RunRecord {
            iter: self.next_iter,
            epoch,
            split,
            loss,
            metric_name: metric_name.into(),
            metric_value,
        });
        self.next_iter += 1;
        Ok(())
    }
}

/// Averages over one pass through a split.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochSummary {
    /// Mean loss over samples that completed.
    pub loss: f64,
    /// Mean metric; failed samples score zero during evaluation.
    pub metric: f64,
    pub samples: usize,
    pub skipped: usize,
}

/// Loss, metric and batching shared by training and evaluation.
pub struct Trainer<'a> {
    pub loss: &'a dyn Loss,
    pub metric: &'a dyn Metric,
    pub batch_size: usize,
}

impl Trainer<'_> {
    fn sample_grads(&self, net: &Network, s: &Sample) -> Result<(f64, f64, Vec<Vec<f64>>)> {
        let mut pass = net.forward(&s.input)?;
        let (l, g) = self.loss.eval(&pass.output, &s.target)?;
        let m = self.metric.score(&pass.output, &s.target)?;
        let grads = net.backward(&mut pass, &g)?;
        Ok((l, m, grads))
    }

    /// One pass over `data` in the given order, stepping the optimizer
    /// after every batch and logging one training record per batch.
    pub fn train_epoch(
        &self,
        net: &mut Network,
        opt: &mut dyn Optimizer,
        data: &[Sample],
        order: &[usize],
        epoch: usize,
        log: &mut RunLog,
    ) -> Result<EpochSummary> {
        if data.is_empty() || self.batch_size == 0 {
            return Err(Error::InvalidArgument("empty data or zero batch size".into()));
        }
        let mut total = EpochSummary {
            loss: 0.0,
            metric: 0.0,
            samples: 0,
            skipped: 0,
        };
        for batch in order.chunks(self.batch_size) {
            let mut acc: Vec<Vec<f64>> = net.params().iter().map(|p| vec![0.0; p.values.len()]).collect();
            let (mut bl, mut bm, mut used) = (0.0, 0.0, 0usize);
            for &k in batch {
                match self.sample_grads(net, &data[k]) {
                    Ok((l, m, grads)) => {
                        for (a, g) in acc.iter_mut().zip(&grads) {
                            a.iter_mut().zip(g).for_each(|(a, g)| *a += g);
                        }
                        bl += l;
                        bm += m;
                        used += 1;
                    }
                    Err(e) => {
                        log::warn!("skipping sample {k} in epoch {epoch}: {e}");
                        total.skipped += 1;
                    }
                }
            }
            if used == 0 {
                continue;
            }
            let scale = 1.0 / used as f64;
            acc.iter_mut().for_each(|a| a.iter_mut().for_each(|v| *v *= scale));
            opt.step(net.params_mut(), &acc)?;
            log.push(epoch, Split::Train, bl * scale, self.metric.name(), bm * scale)?;
            total.loss += bl;
            total.metric += bm;
            total.samples += used;
        }
        if total.samples > 0 {
            total.loss /= total.samples as f64;
            total.metric /= total.samples as f64;
        }
        Ok(total)
    }

    /// Mean loss and metric without updating parameters.
    pub fn evaluate(&self, net: &Network, data: &[Sample]) -> Result<EpochSummary> {
        let mut out = EpochSummary {
            loss: 0.0,
            metric: 0.0,
            samples: data.len(),
            skipped: 0,
        };
        let mut done = 0usize;
        for (k, s) in data.iter().enumerate() {
            let scored = net
                .predict(&s.input)
                .and_then(|o| Ok((self.loss.eval(&o, &s.target)?.0, self.metric.score(&o, &s.target)?)));
            match scored {
                Ok((l, m)) => {
                    out.loss += l;
                    out.metric += m;
                    done += 1;
                }
                Err(e) => {
                    log::warn!("evaluation failed on sample {k}: {e}");
                    out.skipped += 1;
                }
            }
        }
        if done > 0 {
            out.loss /= done as f64;
        }
        if !data.is_empty() {
            out.metric /= data.len() as f64;
        }
        Ok(out)
    }
}

/// Settings for [`grad_check_network`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckConfig {
    /// Central-difference step is `rel_step·(1 + |θᵢ|)`.
    pub rel_step: f64,
    pub tol: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            rel_step: 1e-5,
            tol: 1e-4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckStatus {
    Passed,
    Failed,
    /// The point (or a stencil point) is outside the well-posed region.
    Skipped,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockReport {
    pub name: String,
    pub len: usize,
    /// `‖g_backprop − g_fd‖∞ / max(‖g_backprop‖∞, ‖g_fd‖∞)`, zero when both vanish.
    pub rel_err: f64,
    pub status: CheckStatus,
}

/// Relative ∞-norm discrepancy used by the gradient checks.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm_inf(a).max(norm_inf(b));
    if scale == 0.0 {
        0.0
    } else {
        norm_inf(&diff) / scale
    }
}

fn is_ill_posed(e: &Error) -> bool {
    matches!(
        e,
        Error::SingularMatrix { .. }
            | Error::DegenerateSpectrum { .. }
            | Error::ResidualTooLarge { .. }
            | Error::NoConvergence { .. }
            | Error::Infeasible
            | Error::DegenerateEdge
            | Error::NoContour
    )
}

/// Compares backpropagated parameter gradients of the sample loss against
/// central finite differences, block by block.
pub fn grad_check_network(
    net: &mut Network,
    sample: &Sample,
    loss: &dyn Loss,
    cfg: GradCheckConfig,
) -> Result<Vec<BlockReport>> {
    let skipped_all = |net: &Network| {
        net.params()
            .iter()
            .map(|p| BlockReport {
                name: p.name.clone(),
                len: p.values.len(),
                rel_err: f64::NAN,
                status: CheckStatus::Skipped,
            })
            .collect()
    };
    let analytic = (|| {
        let mut pass = net.forward(&sample.input)?;
        let ill = net
            .layers()
            .iter()
            .zip(pass.states())
            .any(|(l, s)| l.diagnose(s).is_some_and(|d| !d.passed()));
        if ill {
            return Err(Error::SingularMatrix { rcond: 0.0 });
        }
        let (_, g) = loss.eval(&pass.output, &sample.target)?;
        net.backward(&mut pass, &g)
    })();
    let analytic = match analytic {
        Ok(g) => g,
        Err(e) if is_ill_posed(&e) => return Ok(skipped_all(net)),
        Err(e) => return Err(e),
    };

    let mut reports = Vec::new();
    for b in 0..net.params().len() {
        let len = net.params()[b].values.len();
        let mut fd = vec![0.0; len];
        let mut stencil_ok = true;
        for i in 0..len {
            let theta = net.params()[b].values[i];
            let h = cfg.rel_step * (1.0 + theta.abs());
            let eval = |v: f64, net: &mut Network| -> Result<f64> {
                net.params_mut()[b].values[i] = v;
                let out = net.predict(&sample.input)?;
                Ok(loss.eval(&out, &sample.target)?.0)
            };
            let plus = eval(theta + h, net);
            let minus = eval(theta - h, net);
            net.params_mut()[b].values[i] = theta;
            match (plus, minus) {
                (Ok(p), Ok(m)) => fd[i] = (p - m) / (2.0 * h),
                (Err(e), _) | (_, Err(e)) if is_ill_posed(&e) => {
                    stencil_ok = false;
                    break;
                }
                (Err(e), _) | (_, Err(e)) => return Err(e),
            }
        }
        let name = net.params()[b].name.clone();
        let report = if !stencil_ok || !all_finite(&fd) {
            BlockReport {
                name,
                len,
                rel_err: f64::NAN,
                status: CheckStatus::Skipped,
            }
        } else {
            let rel_err = relative_error(&analytic[b], &fd);
            BlockReport {
                name,
                len,
                rel_err,
                status: if rel_err <= cfg.tol {
                    CheckStatus::Passed
                } else {
                    CheckStatus::Failed
                },
            }
        };
        reports.push(report);
    }
    Ok(reports)
}
