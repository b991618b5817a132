//! Dense → dense → QP layer → softmax on synthetic 8×8 digits.

use anyhow::Result;
use implicit_core::autodiff::{Tape, Var};
use implicit_core::layers::dense::traced_dense;
use implicit_core::layers::qp::{qp_layer, QpProblem};
use implicit_core::solvers::IpConfig;
use implicit_core::train::{Accuracy, Adam, ExplicitLayer, ImplicitAdapter, Network, NllSoftmax, RunLog};

use super::{fit, init_weights, Outcome};
use crate::config::ExperimentConfig;
use crate::data::{self, DIGIT_SIDE};

pub const CLASSES: usize = 10;
/// Added to `LLᵀ` so the QP stays strictly convex.
pub const Q_RIDGE: f64 = 0.1;

pub fn dense_layer(name: &str, input: usize, output: usize, relu: bool) -> ExplicitLayer {
    ExplicitLayer::new(name, input, output, output * input + output, move |t, x, p| {
        let w = t.slice(p, 0, output * input)?;
        let b = t.slice(p, output * input, output)?;
        let z = traced_dense(t, w, b, x, output, input)?;
        Ok(if relu { t.relu(z) } else { z })
    })
}

/// Maps class scores `s` to a packed QP with `Q = LLᵀ + Q_RIDGE·I`,
/// `q = −s`, no equalities, learned `G` and `h = exp(h_raw)`. Parameters are
/// `(L, G, h_raw)`.
fn qp_params_layer(r: usize) -> ExplicitLayer {
    let n = CLASSES;
    let out = QpProblem::packed_len(n, 0, r);
    ExplicitLayer::new(
        "qp-params",
        n,
        out,
        n * n + r * n + r,
        move |t: &mut Tape, s: Var, p: Var| {
            let l = t.slice(p, 0, n * n)?;
            let g = t.slice(p, n * n, r * n)?;
            let h_raw = t.slice(p, n * n + r * n, r)?;
            let lt = t.transpose(l, n, n)?;
            let llt = t.matmul(l, lt, n, n, n)?;
            let mut ridge = vec![0.0; n * n];
            (0..n).for_each(|i| ridge[i * n + i] = Q_RIDGE);
            let ridge = t.constant(&ridge);
            let quad = t.add(llt, ridge)?;
            let lin = t.neg(s);
            let h = t.exp(h_raw);
            t.concat(&[quad, lin, g, h])
        },
    )
}

/// The digits network with freshly initialized parameters.
pub fn network(cfg: &ExperimentConfig, rng: &mut rand_chacha::ChaCha8Rng) -> Result<Network> {
    let input = DIGIT_SIDE * DIGIT_SIDE;
    let (hidden, r) = (cfg.hidden, cfg.constraints);
    let mut p1 = init_weights(rng, hidden * input, input);
    p1.extend(vec![0.0; hidden]);
    let mut p2 = init_weights(rng, CLASSES * hidden, hidden);
    p2.extend(vec![0.0; CLASSES]);
    let mut p3 = vec![0.0; CLASSES * CLASSES];
    (0..CLASSES).for_each(|i| p3[i * CLASSES + i] = 1.0);
    p3.extend(init_weights(rng, r * CLASSES, CLASSES * 10));
    p3.extend(vec![0.0; r]);
    let ip = IpConfig {
        tol: cfg.ip_tol,
        ..IpConfig::default()
    };
    let qp = qp_layer(CLASSES, 0, r, ip, cfg.forward_tol);
    let qp_in = QpProblem::packed_len(CLASSES, 0, r);
    let net = Network::new(input)
        .with(dense_layer("dense1", input, hidden, true), p1)?
        .with(dense_layer("dense2", hidden, CLASSES, false), p2)?
        .with(qp_params_layer(r), p3)?
        .with(ImplicitAdapter::new("qp", qp_in, qp)?, vec![])?;
    Ok(net)
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let (train, test) = data::gen_digits(cfg.seed, cfg.count, cfg.noise);
    let mut rng = data::rng(cfg.seed.wrapping_add(1));
    let mut net = network(cfg, &mut rng)?;
    let mut opt = Adam::new(cfg.lr);
    let mut log = RunLog::new();
    let history = fit(
        &mut net,
        &mut opt,
        &NllSoftmax,
        &Accuracy,
        &train,
        &test,
        cfg,
        &mut rng,
        &mut log,
    )?;
    let (tr, te) = history.epochs.last().copied().expect("at least one epoch");
    let metrics = vec![
        ("train_loss".into(), tr.loss),
        ("train_accuracy".into(), tr.metric),
        ("test_loss".into(), te.loss),
        ("test_accuracy".into(), te.metric),
        ("skipped_samples".into(), history.skipped() as f64),
        (
            "skipped_fraction".into(),
            history.skipped() as f64 / (train.len() * cfg.epochs) as f64,
        ),
    ];
    Ok(Outcome {
        log,
        metrics,
        tables: vec![history.table("accuracy")],
        failure: None,
    })
}
