//! Keypoint matching with three assignment backends: five unrolled power
//! iterations, the SM implicit layer and the SMAC implicit layer.

use anyhow::Result;
use implicit_core::autodiff::{Tape, Var};
use implicit_core::layers::dense::{traced_power_iteration, traced_sinkhorn};
use implicit_core::layers::matching::{sm_layer, smac_layer, sym_packed_len, sym_unpack_indices};
use implicit_core::solvers::IpConfig;
use implicit_core::train::{Adam, ExplicitLayer, ImplicitAdapter, Loss, Metric, Network, RunLog, Sample, Target};
use implicit_core::{Error, Result as CoreResult};

use super::{fit, Outcome, Table};
use crate::config::ExperimentConfig;
use crate::data::{self, MatchInstance, DESC_DIM};

/// PCK threshold as a fraction of the image diagonal.
pub const PCK_ALPHA: f64 = 0.1;
pub const PI_STEPS: usize = 5;
pub const SINKHORN_SWEEPS: usize = 20;
/// Initial geometric tolerance σ of the edge term.
pub const EDGE_SIGMA: f64 = 0.1;
pub const INITIAL_BETA: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Backend {
    PowerIteration,
    Sm,
    Smac,
}

impl Backend {
    pub const ALL: [Backend; 3] = [Backend::PowerIteration, Backend::Sm, Backend::Smac];

    pub fn as_str(self) -> &'static str {
        match self {
            Backend::PowerIteration => "pi5",
            Backend::Sm => "sm",
            Backend::Smac => "smac",
        }
    }

    fn metric_name(self) -> &'static str {
        match self {
            Backend::PowerIteration => "pck-pi5",
            Backend::Sm => "pck-sm",
            Backend::Smac => "pck-smac",
        }
    }
}

fn pair_index(n: usize) -> impl Fn(usize, usize) -> usize {
    move |i, j| {
        let (i, j) = (i.min(j), i.max(j));
        i * n - i * (i + 1) / 2 + (j - i - 1)
    }
}

/// Traced Euclidean distances between all point pairs `i < j` of an
/// `n × 2` block.
fn pair_distances(t: &mut Tape, pts: Var, n: usize) -> CoreResult<Var> {
    let (mut a, mut b, mut owner) = (Vec::new(), Vec::new(), Vec::new());
    let mut k = 0;
    for i in 0..n {
        for j in i + 1..n {
            for c in 0..2 {
                a.push(i * 2 + c);
                b.push(j * 2 + c);
                owner.push(k);
            }
            k += 1;
        }
    }
    let pa = t.gather(pts, &a)?;
    let pb = t.gather(pts, &b)?;
    let d = t.sub(pa, pb)?;
    let d2 = t.square(d);
    let sq = t.scatter_add(d2, &owner, k)?;
    Ok(t.sqrt(sq))
}

/// Builds the packed affinity over candidate matches `(i, a)` (index
/// `i·n + a`). Diagonal: `exp(−Σ_k e^{log_w_k}(dᵢₖ − d'ₐₖ)²)`. Between
/// matches with `i ≠ j`, `a ≠ b`: `exp(log_κ − e^{log_γ}(‖pᵢ − pⱼ‖ − ‖q_a − q_b‖)²)`.
/// Parameters are `(log_w, log_γ, log_κ)`.
pub fn affinity_layer(n: usize) -> ExplicitLayer {
    let dim = n * n;
    let packed = sym_packed_len(dim);
    let input = 4 * n + 2 * n * DESC_DIM;
    let pair = pair_index(n);

    let (mut sd, mut dd, mut wk, mut node_owner) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for i in 0..n {
        for a in 0..n {
            for k in 0..DESC_DIM {
                sd.push(i * DESC_DIM + k);
                dd.push(a * DESC_DIM + k);
                wk.push(k);
                node_owner.push(i * n + a);
            }
        }
    }
    let (mut src_pair, mut dst_pair, mut layout) = (Vec::new(), Vec::new(), Vec::with_capacity(packed));
    for u in 0..dim {
        for v in u..dim {
            let (i, a, j, b) = (u / n, u % n, v / n, v % n);
            if u == v {
                layout.push(1 + u);
            } else if i != j && a != b {
                layout.push(1 + dim + src_pair.len());
                src_pair.push(pair(i, j));
                dst_pair.push(pair(a, b));
            } else {
                layout.push(0);
            }
        }
    }
    let zeros = vec![0; src_pair.len()];

    ExplicitLayer::new(
        "affinity",
        input,
        packed,
        DESC_DIM + 2,
        move |t: &mut Tape, x: Var, p: Var| {
            let src = t.slice(x, 0, 2 * n)?;
            let dst = t.slice(x, 2 * n, 2 * n)?;
            let src_desc = t.slice(x, 4 * n, n * DESC_DIM)?;
            let dst_desc = t.slice(x, 4 * n + n * DESC_DIM, n * DESC_DIM)?;
            let log_w = t.slice(p, 0, DESC_DIM)?;
            let log_gamma = t.slice(p, DESC_DIM, 1)?;
            let log_kappa = t.slice(p, DESC_DIM + 1, 1)?;

            let a = t.gather(src_desc, &sd)?;
            let b = t.gather(dst_desc, &dd)?;
            let diff = t.sub(a, b)?;
            let diff2 = t.square(diff);
            let w = t.exp(log_w);
            let w = t.gather(w, &wk)?;
            let weighted = t.mul(diff2, w)?;
            let dist = t.scatter_add(weighted, &node_owner, dim)?;
            let neg = t.neg(dist);
            let node = t.exp(neg);

            let ds = pair_distances(t, src, n)?;
            let dq = pair_distances(t, dst, n)?;
            let ds = t.gather(ds, &src_pair)?;
            let dq = t.gather(dq, &dst_pair)?;
            let gap = t.sub(ds, dq)?;
            let gap2 = t.square(gap);
            let gamma = t.exp(log_gamma);
            let scaled = t.scale(gamma, gap2)?;
            let kappa = t.gather(log_kappa, &zeros)?;
            let expo = t.sub(kappa, scaled)?;
            let edge = t.exp(expo);

            let zero = t.constant(&[0.0]);
            let all = t.concat(&[zero, node, edge])?;
            t.gather(all, &layout)
        },
    )
}

pub fn initial_affinity_params() -> Vec<f64> {
    let mut p = vec![0.0; DESC_DIM];
    p.push((1.0 / (EDGE_SIGMA * EDGE_SIGMA)).ln());
    p.push(0.0);
    p
}

fn power_iteration_layer(n: usize) -> ExplicitLayer {
    let dim = n * n;
    let unpack = sym_unpack_indices(dim);
    ExplicitLayer::new("pi5", sym_packed_len(dim), dim, 0, move |t: &mut Tape, x: Var, _| {
        let m = t.gather(x, &unpack)?;
        traced_power_iteration(t, m, dim, PI_STEPS)
    })
}

/// `sinkhorn(exp(e^{log_β}·y))` over the `n × n` assignment.
fn rounding_layer(n: usize) -> ExplicitLayer {
    let dim = n * n;
    let zeros = vec![0; dim];
    ExplicitLayer::new("rounding", dim, dim, 1, move |t: &mut Tape, y: Var, p: Var| {
        let beta = t.exp(p);
        let beta = t.gather(beta, &zeros)?;
        let z = t.mul(beta, y)?;
        let s = t.exp(z);
        traced_sinkhorn(t, s, n, SINKHORN_SWEEPS)
    })
}

pub fn network(backend: Backend, n: usize, cfg: &ExperimentConfig) -> Result<Network> {
    let dim = n * n;
    let packed = sym_packed_len(dim);
    let net = Network::new(4 * n + 2 * n * DESC_DIM).with(affinity_layer(n), initial_affinity_params())?;
    let net = match backend {
        Backend::PowerIteration => net.with(power_iteration_layer(n), vec![])?,
        Backend::Sm => net.with(
            ImplicitAdapter::new("sm", packed, sm_layer(dim, cfg.forward_tol))?,
            vec![],
        )?,
        Backend::Smac => {
            let ip = IpConfig {
                tol: cfg.ip_tol,
                ..IpConfig::default()
            };
            net.with(
                ImplicitAdapter::new("smac", packed, smac_layer(n, ip, cfg.forward_tol)?)?,
                vec![],
            )?
        }
    };
    Ok(net.with(rounding_layer(n), vec![INITIAL_BETA.ln()])?)
}

fn unpack_target(target: &Target, n: usize) -> CoreResult<(Vec<usize>, &[f64])> {
    let Target::Vector(v) = target else {
        return Err(Error::InvalidArgument("expected a matching target".into()));
    };
    if v.len() != 3 * n {
        return Err(Error::ShapeMismatch {
            op: "matching target",
            expected: 3 * n,
            found: v.len(),
        });
    }
    Ok((v[..n].iter().map(|&a| a as usize).collect(), &v[n..]))
}

fn side(output: &[f64]) -> usize {
    (output.len() as f64).sqrt().round() as usize
}

/// `−(1/n)·Σᵢ log S[i, π(i)]` on a soft assignment `S`.
pub struct PermutationNll;

impl Loss for PermutationNll {
    fn eval(&self, output: &[f64], target: &Target) -> CoreResult<(f64, Vec<f64>)> {
        let n = side(output);
        let (perm, _) = unpack_target(target, n)?;
        let mut grad = vec![0.0; output.len()];
        let mut loss = 0.0;
        for (i, &a) in perm.iter().enumerate() {
            let s = output[i * n + a];
            if s.is_nan() || s <= 0.0 {
                return Err(Error::NonPositiveEntry {
                    index: i * n + a,
                    value: s,
                });
            }
            loss -= s.ln() / n as f64;
            grad[i * n + a] = -1.0 / (n as f64 * s);
        }
        Ok((loss, grad))
    }
}

/// Fraction of source points whose row-wise best match lands within
/// `α·√2` of the true target point.
pub struct Pck {
    pub name: &'static str,
}

pub fn pck(assignment: &[f64], perm: &[usize], dst: &[f64]) -> f64 {
    let n = perm.len();
    let threshold = PCK_ALPHA * 2f64.sqrt();
    let mut hits = 0;
    for (i, &truth) in perm.iter().enumerate() {
        let row = &assignment[i * n..(i + 1) * n];
        let best = implicit_core::train::argmax(row).unwrap_or(0);
        let d = ((dst[2 * best] - dst[2 * truth]).powi(2) + (dst[2 * best + 1] - dst[2 * truth + 1]).powi(2)).sqrt();
        hits += (d <= threshold) as usize;
    }
    hits as f64 / n as f64
}

impl Metric for Pck {
    fn name(&self) -> &'static str {
        self.name
    }

    fn score(&self, output: &[f64], target: &Target) -> CoreResult<f64> {
        let (perm, dst) = unpack_target(target, side(output))?;
        Ok(pck(output, &perm, dst))
    }
}

pub fn to_sample(inst: &MatchInstance) -> Sample {
    Sample {
        input: inst.to_input(),
        target: Target::Vector(inst.to_target()),
    }
}

/// Largest deviation from one of any row or column sum of the raw
/// assignment produced by the network's second layer.
pub fn raw_bistochastic_deviation(net: &Network, input: &[f64]) -> CoreResult<f64> {
    let (m, _) = net.layers()[0].forward(input, &net.params()[0].values)?;
    let (y, _) = net.layers()[1].forward(&m, &net.params()[1].values)?;
    let n = side(&y);
    let mut dev: f64 = 0.0;
    for i in 0..n {
        let row: f64 = (0..n).map(|a| y[i * n + a]).sum();
        let col: f64 = (0..n).map(|a| y[a * n + i]).sum();
        dev = dev.max((row - 1.0).abs()).max((col - 1.0).abs());
    }
    Ok(dev)
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let n = cfg.keypoints;
    let instances = data::gen_matching(cfg.seed, cfg.count, n, cfg.jitter);
    let (train_inst, test_inst) = data::split_9_1(instances);
    let train: Vec<Sample> = train_inst.iter().map(to_sample).collect();
    let test: Vec<Sample> = test_inst.iter().map(to_sample).collect();

    let mut log = RunLog::new();
    let mut metrics = Vec::new();
    let mut tables = Vec::new();
    for backend in Backend::ALL {
        log::info!("training the {} backend", backend.as_str());
        let mut rng = data::rng(cfg.seed.wrapping_add(1));
        let mut net = network(backend, n, cfg)?;
        let mut opt = Adam::new(cfg.lr);
        let metric = Pck {
            name: backend.metric_name(),
        };
        let history = fit(
            &mut net,
            &mut opt,
            &PermutationNll,
            &metric,
            &train,
            &test,
            cfg,
            &mut rng,
            &mut log,
        )?;
        let (tr, te) = history.epochs.last().copied().expect("at least one epoch");
        let b = backend.as_str();
        metrics.push((format!("{b}_train_loss"), tr.loss));
        metrics.push((format!("{b}_test_loss"), te.loss));
        metrics.push((format!("{b}_test_pck"), te.metric));
        metrics.push((format!("{b}_skipped_samples"), history.skipped() as f64));
        if backend == Backend::Smac {
            let mut dev: f64 = 0.0;
            for s in &test {
                match raw_bistochastic_deviation(&net, &s.input) {
                    Ok(d) => dev = dev.max(d),
                    Err(e) => log::warn!("SMAC forward failed on a test instance: {e}"),
                }
            }
            metrics.push(("smac_bistochastic_deviation".into(), dev));
        }
        let Table { header, rows, .. } = history.table("pck");
        tables.push(Table {
            file: format!("epochs-{b}.csv"),
            header,
            rows,
        });
    }
    Ok(Outcome {
        log,
        metrics,
        tables,
        failure: None,
    })
}
