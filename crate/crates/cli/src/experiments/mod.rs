//! The five runnable experiments and the training loop they share.

pub mod digits;
pub mod gradcheck;
pub mod levelset;
pub mod matching;
pub mod segmentation;

use std::path::Path;

use anyhow::{Context, Result};
use implicit_core::train::{EpochSummary, Loss, Metric, Network, Optimizer, RunLog, Sample, Split, Trainer};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::config::{ExperimentConfig, ExperimentId};
use crate::io;

/// An extra CSV written beside the standard artifacts.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub file: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

/// Everything a run produces.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Outcome {
    pub log: RunLog,
    pub metrics: Vec<(String, f64)>,
    pub tables: Vec<Table>,
    /// Set when the run completed but its own checks failed.
    pub failure: Option<String>,
}

impl Outcome {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }

    pub fn table(&self, file: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.file == file)
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.validate()?;
    match cfg.experiment {
        ExperimentId::Gradcheck => gradcheck::run(cfg),
        ExperimentId::QpDigits => digits::run(cfg),
        ExperimentId::NcutSeg => segmentation::run(cfg),
        ExperimentId::Graphmatch => matching::run(cfg),
        ExperimentId::Levelset => levelset::run(cfg),
    }
}

/// Writes `runlog.csv`, `metrics.csv`, `config.txt` and any extra tables
/// into `dir`.
pub fn write_outputs(cfg: &ExperimentConfig, outcome: &Outcome, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    io::write_runlog(&dir.join("runlog.csv"), &outcome.log)?;
    io::write_metrics(&dir.join("metrics.csv"), &outcome.metrics)?;
    std::fs::write(dir.join("config.txt"), cfg.to_text())?;
    for t in &outcome.tables {
        let header: Vec<&str> = t.header.iter().map(String::as_str).collect();
        io::write_table(&dir.join(&t.file), &header, &t.rows)?;
    }
    Ok(())
}

/// Per-epoch training and test averages.
#[derive(Clone, Debug, PartialEq)]
pub struct History {
    pub epochs: Vec<(EpochSummary, EpochSummary)>,
}

impl History {
    pub fn table(&self, metric: &str) -> Table {
        Table {
            file: "epochs.csv".into(),
            header: [
                "epoch",
                "train_loss",
                "train_metric",
                "test_loss",
                "test_metric",
                "skipped",
            ]
            .map(|h| h.replace("metric", metric))
            .to_vec(),
            rows: self
                .epochs
                .iter()
                .enumerate()
                .map(|(e, (tr, te))| {
                    vec![
                        e.to_string(),
                        tr.loss.to_string(),
                        tr.metric.to_string(),
                        te.loss.to_string(),
                        te.metric.to_string(),
                        (tr.skipped + te.skipped).to_string(),
                    ]
                })
                .collect(),
        }
    }

    pub fn skipped(&self) -> usize {
        self.epochs.iter().map(|(tr, _)| tr.skipped).sum()
    }
}

/// Shuffled mini-batch training with a test evaluation after every epoch.
#[allow(clippy::too_many_arguments)]
pub fn fit(
    net: &mut Network,
    opt: &mut dyn Optimizer,
    loss: &dyn Loss,
    metric: &dyn Metric,
    train: &[Sample],
    test: &[Sample],
    cfg: &ExperimentConfig,
    rng: &mut ChaCha8Rng,
    log: &mut RunLog,
) -> Result<History> {
    let trainer = Trainer {
        loss,
        metric,
        batch_size: cfg.batch_size,
    };
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(rng);
        let tr = trainer.train_epoch(net, opt, train, &order, epoch, log)?;
        let te = trainer.evaluate(net, test)?;
        log.push(epoch, Split::Test, te.loss, metric.name(), te.metric)?;
        log::info!(
            "epoch {epoch}: train loss {:.4} {} {:.3}, test loss {:.4} {} {:.3}, skipped {}",
            tr.loss,
            metric.name(),
            tr.metric,
            te.loss,
            metric.name(),
            te.metric,
            tr.skipped
        );
        epochs.push((tr, te));
    }
    Ok(History { epochs })
}

/// Weights `N(0, 1/fan_in)`.
pub fn init_weights(rng: &mut ChaCha8Rng, len: usize, fan_in: usize) -> Vec<f64> {
    use rand_distr::{Distribution, Normal};
    let d = Normal::new(0.0, 1.0 / (fan_in as f64).sqrt()).expect("positive std");
    (0..len).map(|_| d.sample(rng)).collect()
}
