//! NCut segmentation with learned affinities against a fixed intensity
//! kernel.

use anyhow::Result;
use implicit_core::autodiff::{Tape, Var};
use implicit_core::layers::ncut::{edge_affinities, grid_edges, ncut_layer, ncut_segment, GraphAffinity};
use implicit_core::train::{
    Adam, CosineSquared, ExplicitLayer, ImplicitAdapter, Metric, Network, RunLog, Sample, Target,
};

use super::{fit, Outcome};
use crate::config::ExperimentConfig;
use crate::data::{self, SegImage};

pub const CHANNELS: usize = 2;
/// Learned features per pixel.
pub const FEATURES: usize = 2;
const TAPS: usize = 9;

/// Sign-invariant intersection over union of the positive entries of the
/// output against the positive entries of the target.
pub struct Iou;

pub fn iou(pred: &[bool], mask: &[bool]) -> f64 {
    let score = |flip: bool| {
        let (mut inter, mut union) = (0usize, 0usize);
        for (&p, &m) in pred.iter().zip(mask) {
            let p = p != flip;
            inter += (p && m) as usize;
            union += (p || m) as usize;
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    };
    score(false).max(score(true))
}

impl Metric for Iou {
    fn name(&self) -> &'static str {
        "iou"
    }

    fn score(&self, output: &[f64], target: &Target) -> implicit_core::Result<f64> {
        let Target::Vector(t) = target else {
            return Err(implicit_core::Error::InvalidArgument("expected a mask target".into()));
        };
        let pred: Vec<bool> = output.iter().map(|&v| v > 0.0).collect();
        let mask: Vec<bool> = t.iter().map(|&v| v > 0.0).collect();
        Ok(iou(&pred, &mask))
    }
}

/// Input indices of the replicate-padded 3×3 patch of every pixel, over
/// both channels: row `i` holds `CHANNELS·9` entries.
fn patch_indices(size: usize) -> Vec<usize> {
    let n = size * size;
    let clamp = |v: isize| v.clamp(0, size as isize - 1) as usize;
    let mut idx = Vec::with_capacity(n * CHANNELS * TAPS);
    for r in 0..size {
        for c in 0..size {
            for ch in 0..CHANNELS {
                for dr in -1..=1 {
                    for dc in -1..=1 {
                        let (rr, cc) = (clamp(r as isize + dr), clamp(c as isize + dc));
                        idx.push(ch * n + rr * size + cc);
                    }
                }
            }
        }
    }
    idx
}

/// Per-pixel linear 3×3 features followed by grid affinities
/// `exp(−e^{log_s}·‖fᵢ − fⱼ‖²)`. Parameters are the `(CHANNELS·9) ×
/// FEATURES` filter bank, row-major, then `log_s`.
pub fn affinity_layer(size: usize) -> ExplicitLayer {
    let n = size * size;
    let edges = grid_edges(size, size);
    let idx = patch_indices(size);
    let width = CHANNELS * TAPS;
    let e = edges.len();
    ExplicitLayer::new(
        "affinity",
        CHANNELS * n,
        e,
        width * FEATURES + 1,
        move |t: &mut Tape, x: Var, p: Var| {
            let patches = t.gather(x, &idx)?;
            let w = t.slice(p, 0, width * FEATURES)?;
            let log_s = t.slice(p, width * FEATURES, 1)?;
            let f = t.matmul(patches, w, n, width, FEATURES)?;
            let s = t.exp(log_s);
            edge_affinities(t, f, FEATURES, &edges, s)
        },
    )
}

/// Initial parameters reproducing the fixed kernel: feature `k` reads the
/// centre pixel of channel `k`, with the kernel's precision.
pub fn initial_params(precision: f64) -> Vec<f64> {
    let width = CHANNELS * TAPS;
    let mut p = vec![0.0; width * FEATURES + 1];
    for k in 0..FEATURES.min(CHANNELS) {
        p[(k * TAPS + 4) * FEATURES + k] = 1.0;
    }
    p[width * FEATURES] = precision.ln();
    p
}

pub fn network(size: usize, forward_tol: f64, precision: f64) -> Result<Network> {
    let edges = grid_edges(size, size);
    let e = edges.len();
    let ncut = ImplicitAdapter::new("ncut", e, ncut_layer(size * size, edges, forward_tol))?;
    Ok(Network::new(CHANNELS * size * size)
        .with(affinity_layer(size), initial_params(precision))?
        .with(ncut, vec![])?)
}

/// Mean squared pixel difference across grid edges over a set of images.
pub fn mean_edge_sq_diff(images: &[SegImage]) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for img in images {
        let n = img.size * img.size;
        for (i, j) in grid_edges(img.size, img.size) {
            total += (0..CHANNELS)
                .map(|c| (img.pixels[c * n + i] - img.pixels[c * n + j]).powi(2))
                .sum::<f64>();
            count += 1;
        }
    }
    total / count as f64
}

/// The handcrafted kernel `exp(−‖xᵢ − xⱼ‖²·precision)` on raw pixels.
pub fn baseline_labels(img: &SegImage, precision: f64) -> implicit_core::Result<Vec<bool>> {
    let n = img.size * img.size;
    let edges = grid_edges(img.size, img.size);
    let w: Vec<f64> = edges
        .iter()
        .map(|&(i, j)| {
            let d: f64 = (0..CHANNELS)
                .map(|c| (img.pixels[c * n + i] - img.pixels[c * n + j]).powi(2))
                .sum();
            (-precision * d).exp()
        })
        .collect();
    ncut_segment(&GraphAffinity::from_edges(n, &edges, &w)?)
}

pub fn to_sample(img: &SegImage) -> Sample {
    Sample {
        input: img.pixels.clone(),
        target: Target::Vector(img.signed_mask()),
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let images = data::gen_seg_images(cfg.seed, cfg.count, cfg.size, cfg.noise);
    let (train_img, test_img) = data::split_9_1(images);
    let precision = 1.0 / mean_edge_sq_diff(&train_img);
    let train: Vec<Sample> = train_img.iter().map(to_sample).collect();
    let test: Vec<Sample> = test_img.iter().map(to_sample).collect();

    let mut baseline = 0.0;
    for img in &test_img {
        match baseline_labels(img, precision) {
            Ok(labels) => baseline += iou(&labels, &img.mask),
            Err(e) => log::warn!("baseline failed on a test image: {e}"),
        }
    }
    baseline /= test_img.len() as f64;

    let mut rng = data::rng(cfg.seed.wrapping_add(1));
    let mut net = network(cfg.size, cfg.forward_tol, precision)?;
    let mut opt = Adam::new(cfg.lr);
    let mut log = RunLog::new();
    let history = fit(
        &mut net,
        &mut opt,
        &CosineSquared,
        &Iou,
        &train,
        &test,
        cfg,
        &mut rng,
        &mut log,
    )?;
    let (tr, te) = history.epochs.last().copied().expect("at least one epoch");
    let metrics = vec![
        ("train_loss".into(), tr.loss),
        ("train_iou".into(), tr.metric),
        ("test_loss".into(), te.loss),
        ("test_iou".into(), te.metric),
        ("baseline_test_iou".into(), baseline),
        ("skipped_samples".into(), history.skipped() as f64),
    ];
    Ok(Outcome {
        log,
        metrics,
        tables: vec![history.table("iou")],
        failure: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iou_ignores_label_flip() {
        let mask = [true, true, false, false];
        assert_eq!(iou(&[true, true, false, false], &mask), 1.0);
        assert_eq!(iou(&[false, false, true, true], &mask), 1.0);
        assert!((iou(&[true, false, false, false], &mask) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn initial_features_match_baseline() {
        let img = &data::gen_seg_images(2, 1, 6, 0.2)[0];
        let net = network(6, 1e-8, 3.0).unwrap();
        let (w, _) = net.layers()[0].forward(&img.pixels, &net.params()[0].values).unwrap();
        let n = 36;
        for (k, &(i, j)) in grid_edges(6, 6).iter().enumerate() {
            let d: f64 = (0..2)
                .map(|c| (img.pixels[c * n + i] - img.pixels[c * n + j]).powi(2))
                .sum();
            assert!((w[k] - (-3.0 * d).exp()).abs() < 1e-14);
        }
    }
}
