//! Finite-difference check of every parameter block of every showcase
//! network, on small instances.

use anyhow::Result;
use implicit_core::train::{
    grad_check_network, CheckStatus, CosineSquared, GradCheckConfig, Loss, Network, NllSoftmax, RunLog, Sample, Split,
    Target,
};

use super::{digits, levelset, matching, segmentation, Outcome, Table};
use crate::config::ExperimentConfig;
use crate::data;

/// Level-set grid side; the smallest that holds the target circle with a
/// margin.
pub const LEVELSET_SIZE: usize = 11;

pub const HEADER: [&str; 6] = ["network", "sample", "block", "len", "rel_err", "status"];

fn status_str(s: CheckStatus) -> &'static str {
    match s {
        CheckStatus::Passed => "pass",
        CheckStatus::Failed => "FAIL",
        CheckStatus::Skipped => "skipped",
    }
}

struct Tally {
    rows: Vec<Vec<String>>,
    max_rel_err: f64,
    failed: usize,
    skipped: usize,
    passed: usize,
}

impl Tally {
    fn check(
        &mut self,
        log: &mut RunLog,
        name: &str,
        net: &mut Network,
        samples: &[Sample],
        loss: &dyn Loss,
    ) -> Result<()> {
        for (k, s) in samples.iter().enumerate() {
            let reports = grad_check_network(net, s, loss, GradCheckConfig::default())?;
            let mut worst: f64 = 0.0;
            for r in reports.iter().filter(|r| r.len > 0) {
                match r.status {
                    CheckStatus::Passed => self.passed += 1,
                    CheckStatus::Failed => self.failed += 1,
                    CheckStatus::Skipped => self.skipped += 1,
                }
                if r.rel_err.is_finite() {
                    worst = worst.max(r.rel_err);
                }
                self.rows.push(vec![
                    name.to_string(),
                    k.to_string(),
                    r.name.clone(),
                    r.len.to_string(),
                    format!("{:.3e}", r.rel_err),
                    status_str(r.status).into(),
                ]);
            }
            self.max_rel_err = self.max_rel_err.max(worst);
            let sample_loss = net
                .predict(&s.input)
                .and_then(|o| loss.eval(&o, &s.target))
                .map_or(f64::NAN, |(l, _)| l);
            if sample_loss.is_finite() {
                log.push(0, Split::Test, sample_loss, "max_rel_err", worst)?;
            }
            log::info!("{name} sample {k}: worst block error {worst:.3e}");
        }
        Ok(())
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut log = RunLog::new();
    let mut tally = Tally {
        rows: Vec::new(),
        max_rel_err: 0.0,
        failed: 0,
        skipped: 0,
        passed: 0,
    };
    let count = cfg.count;

    let (digits_data, _) = data::gen_digits(cfg.seed, count.max(10) * 2, cfg.noise);
    let mut rng = data::rng(cfg.seed.wrapping_add(1));
    let mut net = digits::network(cfg, &mut rng)?;
    tally.check(&mut log, "qp-digits", &mut net, &digits_data[..count], &NllSoftmax)?;

    let images = data::gen_seg_images(cfg.seed, count, cfg.size, cfg.noise);
    let precision = 1.0 / segmentation::mean_edge_sq_diff(&images);
    let samples: Vec<Sample> = images.iter().map(segmentation::to_sample).collect();
    let mut net = segmentation::network(cfg.size, cfg.forward_tol, precision)?;
    tally.check(&mut log, "ncut-seg", &mut net, &samples, &CosineSquared)?;

    let pairs = data::gen_matching(cfg.seed, count, cfg.keypoints, cfg.jitter);
    let samples: Vec<Sample> = pairs.iter().map(matching::to_sample).collect();
    for backend in matching::Backend::ALL {
        let mut net = matching::network(backend, cfg.keypoints, cfg)?;
        let name = format!("graphmatch-{}", backend.as_str());
        tally.check(&mut log, &name, &mut net, &samples, &matching::PermutationNll)?;
    }

    let mut net = levelset::network(LEVELSET_SIZE, cfg.forward_tol)?;
    let sample = Sample {
        input: vec![],
        target: Target::Vector(vec![]),
    };
    tally.check(&mut log, "levelset", &mut net, &[sample], &levelset::Objective)?;

    let failure = match (tally.failed, tally.passed) {
        (0, 0) => Some("no block could be checked".to_string()),
        (0, _) => None,
        (f, _) => Some(format!("{f} parameter blocks disagree with finite differences")),
    };
    Ok(Outcome {
        log,
        metrics: vec![
            ("max_rel_err".into(), tally.max_rel_err),
            ("passed_blocks".into(), tally.passed as f64),
            ("failed_blocks".into(), tally.failed as f64),
            ("skipped_blocks".into(), tally.skipped as f64),
        ],
        tables: vec![Table {
            file: "gradcheck.csv".into(),
            header: HEADER.map(String::from).to_vec(),
            rows: tally.rows,
        }],
        failure,
    })
}
