//! Seeded synthetic datasets standing in for the digit, segmentation and
//! keypoint-matching benchmarks.

use implicit_core::layers::matching::sym_pack;
use implicit_core::train::{Sample, Target};
use implicit_core::Mat;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Splits off the last tenth (rounded down, at least one sample when
/// there are two or more) as the test set.
pub fn split_9_1<T>(mut items: Vec<T>) -> (Vec<T>, Vec<T>) {
    let n_test = if items.len() >= 2 { (items.len() / 10).max(1) } else { 0 };
    let test = items.split_off(items.len() - n_test);
    (items, test)
}

fn gaussian(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    Normal::new(0.0, sigma).map_or(0.0, |d| d.sample(rng))
}

pub const DIGIT_SIDE: usize = 8;

/// Seven-segment strokes: top, upper left, upper right, middle, lower
/// left, lower right, bottom.
const SEGMENTS: [[bool; 7]; 10] = [
    [true, true, true, false, true, true, true],
    [false, false, true, false, false, true, false],
    [true, false, true, true, true, false, true],
    [true, false, true, true, false, true, true],
    [false, true, true, true, false, true, false],
    [true, true, false, true, false, true, true],
    [true, true, false, true, true, true, true],
    [true, false, true, false, false, true, false],
    [true, true, true, true, true, true, true],
    [true, true, true, true, false, true, true],
];

/// Pixels `(row, col)` of each segment on the unshifted 8×8 canvas.
fn segment_pixels(seg: usize) -> Vec<(usize, usize)> {
    match seg {
        0 => (2..6).map(|c| (1, c)).collect(),
        1 => (1..4).map(|r| (r, 2)).collect(),
        2 => (1..4).map(|r| (r, 5)).collect(),
        3 => (2..6).map(|c| (3, c)).collect(),
        4 => (3..7).map(|r| (r, 2)).collect(),
        5 => (3..7).map(|r| (r, 5)).collect(),
        _ => (2..6).map(|c| (6, c)).collect(),
    }
}

/// Noise-free template for `digit` with every stroke at full intensity.
pub fn digit_template(digit: usize) -> Vec<f64> {
    strokes(digit, &[1.0; 7])
}

fn strokes(digit: usize, ink: &[f64; 7]) -> Vec<f64> {
    let mut img = vec![0.0; DIGIT_SIDE * DIGIT_SIDE];
    for (seg, &on) in SEGMENTS[digit].iter().enumerate() {
        if on {
            for (r, c) in segment_pixels(seg) {
                img[r * DIGIT_SIDE + c] = ink[seg];
            }
        }
    }
    img
}

/// Stroke digits on an 8×8 canvas with a random intensity per stroke and
/// additive Gaussian noise. Labels cycle through the ten classes before
/// shuffling, so classes are balanced to within one.
pub fn gen_digits(seed: u64, count: usize, noise: f64) -> (Vec<Sample>, Vec<Sample>) {
    let mut rng = rng(seed);
    let mut labels: Vec<usize> = (0..count).map(|k| k % 10).collect();
    labels.shuffle(&mut rng);
    let samples = labels
        .into_iter()
        .map(|label| {
            let ink: [f64; 7] = core::array::from_fn(|_| rng.gen_range(0.6..1.0));
            let input = strokes(label, &ink)
                .into_iter()
                .map(|v| v + gaussian(&mut rng, noise))
                .collect();
            Sample {
                input,
                target: Target::Class(label),
            }
        })
        .collect();
    split_9_1(samples)
}

/// A two-channel image whose top region ("sky") is marked in `mask`.
#[derive(Clone, Debug, PartialEq)]
pub struct SegImage {
    pub size: usize,
    /// Channel-major: `size²` values of channel 0, then of channel 1.
    pub pixels: Vec<f64>,
    pub mask: Vec<bool>,
}

impl SegImage {
    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.size * self.size;
        &self.pixels[c * n..(c + 1) * n]
    }

    /// `+1` on the masked region, `−1` elsewhere.
    pub fn signed_mask(&self) -> Vec<f64> {
        self.mask.iter().map(|&m| if m { 1.0 } else { -1.0 }).collect()
    }
}

/// Sky/ground images. The boundary is a random sinusoid keeping each region
/// between 25% and 75% of the image. Channel 0 separates the regions by a
/// contrast of 0.6 on top of a gentle ramp (under 0.1) plus noise; channel 1
/// is a region-independent random ramp with twice the noise.
pub fn gen_seg_images(seed: u64, count: usize, size: usize, noise: f64) -> Vec<SegImage> {
    let mut rng = rng(seed);
    let s = size as f64;
    (0..count)
        .map(|_| {
            let base = rng.gen_range(0.35..0.65) * s;
            let amp = rng.gen_range(0.0..0.1) * s;
            let freq = rng.gen_range(0.5..2.0) * std::f64::consts::TAU / s;
            let phase = rng.gen_range(0.0..std::f64::consts::TAU);
            let (sky, ground) = if rng.gen::<bool>() { (0.8, 0.2) } else { (0.2, 0.8) };
            let ramp = [rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05)];
            let distract = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let n = size * size;
            let mut pixels = vec![0.0; 2 * n];
            let mut mask = vec![false; n];
            for r in 0..size {
                for c in 0..size {
                    let k = r * size + c;
                    let (y, x) = (r as f64 / s, c as f64 / s);
                    let boundary = base + amp * (freq * c as f64 + phase).sin();
                    mask[k] = (r as f64 + 0.5) < boundary;
                    let level = if mask[k] { sky } else { ground };
                    pixels[k] = level + ramp[0] * x + ramp[1] * y + gaussian(&mut rng, noise);
                    pixels[n + k] = distract[0] * x + distract[1] * y + gaussian(&mut rng, 2.0 * noise);
                }
            }
            SegImage { size, pixels, mask }
        })
        .collect()
}

/// Informative descriptor dimensions; the rest carry no signal.
pub const DESC_INFORMATIVE: usize = 2;
pub const DESC_DIM: usize = 4;

/// A keypoint pair: target point `perm[i]` corresponds to source point `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchInstance {
    pub src: Vec<[f64; 2]>,
    pub dst: Vec<[f64; 2]>,
    pub src_desc: Vec<[f64; DESC_DIM]>,
    pub dst_desc: Vec<[f64; DESC_DIM]>,
    pub perm: Vec<usize>,
}

impl MatchInstance {
    pub fn n(&self) -> usize {
        self.src.len()
    }

    /// Network input layout: source points, target points (both `n × 2`),
    /// then source and target descriptors (both `n × DESC_DIM`).
    pub fn to_input(&self) -> Vec<f64> {
        let mut v = Vec::new();
        v.extend(self.src.iter().flatten());
        v.extend(self.dst.iter().flatten());
        v.extend(self.src_desc.iter().flatten());
        v.extend(self.dst_desc.iter().flatten());
        v
    }

    /// Training target layout: the permutation, then the target points.
    pub fn to_target(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.perm.iter().map(|&a| a as f64).collect();
        v.extend(self.dst.iter().flatten());
        v
    }
}

/// Source points uniform in [0.1, 0.9]²; the target is a copy rotated about
/// the centre by up to π/8, jittered by `N(0, jitter²)` and permuted.
/// Informative descriptor dimensions carry the same jitter; the others are
/// redrawn independently for the target.
/// Descriptor noise relative to the keypoint jitter.
pub const DESC_NOISE_PER_JITTER: f64 = 12.0;

pub fn gen_matching(seed: u64, count: usize, n: usize, jitter: f64) -> Vec<MatchInstance> {
    let mut rng = rng(seed);
    (0..count)
        .map(|_| {
            let src: Vec<[f64; 2]> = (0..n)
                .map(|_| [rng.gen_range(0.1..0.9), rng.gen_range(0.1..0.9)])
                .collect();
            let src_desc: Vec<[f64; DESC_DIM]> = (0..n)
                .map(|_| core::array::from_fn(|_| gaussian(&mut rng, 1.0)))
                .collect();
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let theta = rng.gen_range(-std::f64::consts::PI / 8.0..std::f64::consts::PI / 8.0);
            let (sin, cos) = theta.sin_cos();
            let mut dst = vec![[0.0; 2]; n];
            let mut dst_desc = vec![[0.0; DESC_DIM]; n];
            for i in 0..n {
                let (x, y) = (src[i][0] - 0.5, src[i][1] - 0.5);
                dst[perm[i]] = [
                    0.5 + cos * x - sin * y + gaussian(&mut rng, jitter),
                    0.5 + sin * x + cos * y + gaussian(&mut rng, jitter),
                ];
                dst_desc[perm[i]] = core::array::from_fn(|k| {
                    if k < DESC_INFORMATIVE {
                        src_desc[i][k] + gaussian(&mut rng, DESC_NOISE_PER_JITTER * jitter)
                    } else {
                        gaussian(&mut rng, 1.0)
                    }
                });
            }
            MatchInstance {
                src,
                dst,
                src_desc,
                dst_desc,
                perm,
            }
        })
        .collect()
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Geometric affinity over candidate matches `(i, a)` at index `i·n + a`:
/// unit diagonal, `exp(−(‖pᵢ − pⱼ‖ − ‖q_a − q_b‖)²/σ²)` between matches with
/// `i ≠ j` and `a ≠ b`, zero otherwise.
pub fn geometric_affinity(inst: &MatchInstance, sigma: f64) -> Mat {
    let n = inst.n();
    let dim = n * n;
    let mut m = Mat::zeros(dim, dim);
    for i in 0..n {
        for a in 0..n {
            for j in 0..n {
                for b in 0..n {
                    let v = if i == j && a == b {
                        1.0
                    } else if i != j && a != b {
                        let d = dist(inst.src[i], inst.src[j]) - dist(inst.dst[a], inst.dst[b]);
                        (-d * d / (sigma * sigma)).exp()
                    } else {
                        0.0
                    };
                    m[(i * n + a, j * n + b)] = v;
                }
            }
        }
    }
    m
}

pub fn packed_geometric_affinity(inst: &MatchInstance, sigma: f64) -> Vec<f64> {
    sym_pack(&geometric_affinity(inst, sigma))
}
