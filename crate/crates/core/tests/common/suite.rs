//! Finite-difference suites over random well-posed instances of each
//! implicit system. Each returns one relative error per instance.

use implicit_core::autodiff::{finite_diff_jacobian_scaled, Tape, Var};
use implicit_core::implicit::{
    check_wellposed, ift_jacobian, ExplicitAsImplicit, FnResidual, ImplicitLayer, SolvedPoint, WellPosedTol,
};
use implicit_core::layers::levelset::{levelset_forward, levelset_layer, LevelSetGrid2D};
use implicit_core::layers::matching::{sm_layer, smac_layer};
use implicit_core::layers::ncut::ncut_layer;
use implicit_core::layers::qp::{qp_layer, qp_layer_backward_param_grads, solve_qp_point, QpProblem};
use implicit_core::solvers::{IpConfig, NewtonConfig, NewtonSolver};
use rand::Rng;

use super::*;

/// Gives up when fewer than one in this many draws is usable.
const MAX_ATTEMPTS_PER_INSTANCE: usize = 10;

fn tight_ip() -> IpConfig {
    IpConfig {
        tol: 1e-12,
        ..IpConfig::default()
    }
}

/// Relative error between the exposed rows of the implicit Jacobian and
/// the finite-difference Jacobian through the solver.
pub fn ift_vs_fd(layer: &ImplicitLayer, x: &[f64]) -> f64 {
    let p = layer.forward(x).unwrap();
    let j = rows(&ift_jacobian(layer.residual(), &p).unwrap(), layer.exposed());
    mat_rel_err(&j, &fd_through_layer(layer, x))
}

/// `x² + ‖y‖² − 4 = 0`, `x·y₁ − 1 = 0`.
pub fn example_system() -> FnResidual<impl Fn(&mut Tape, Var, Var) -> implicit_core::Result<Var>> {
    FnResidual::new(1, 2, |t: &mut Tape, x: Var, y: Var| {
        let four = t.scalar(4.0);
        let one = t.scalar(1.0);
        let y1 = t.slice(y, 0, 1)?;
        let xx = t.dot(x, x)?;
        let yy = t.dot(y, y)?;
        let s = t.add(xx, yy)?;
        let f1 = t.sub(s, four)?;
        let xy = t.mul(x, y1)?;
        let f2 = t.sub(xy, one)?;
        t.concat(&[f1, f2])
    })
}

/// The example system solved by Newton from the branch with `y₂ > 0`.
pub fn example_layer() -> ImplicitLayer {
    ImplicitLayer::new(
        Box::new(example_system()),
        Box::new(NewtonSolver {
            config: NewtonConfig::default(),
            y0: vec![1.0, 1.4],
        }),
        1e-10,
    )
}

pub fn example_errors(count: usize, seed: u64) -> Vec<f64> {
    let layer = example_layer();
    let mut rng = rng(seed);
    (0..count)
        .map(|_| ift_vs_fd(&layer, &[rng.gen_range(0.7..1.5)]))
        .collect()
}

/// `tanh(W·u + b)` with `(u, W, b)` as the input.
pub fn tanh_dense(nin: usize, nout: usize) -> impl Fn(&mut Tape, Var) -> implicit_core::Result<Var> + Clone {
    move |t: &mut Tape, x: Var| {
        let input = t.slice(x, 0, nin)?;
        let w = t.slice(x, nin, nout * nin)?;
        let b = t.slice(x, nin + nout * nin, nout)?;
        let z = t.matvec(w, input, nout, nin)?;
        let z = t.add(z, b)?;
        Ok(t.tanh(z))
    }
}

pub fn explicit_wrapped_errors(count: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng(seed);
    (0..count)
        .map(|k| {
            let (nin, nout) = (1 + k % 3, 1 + (k / 3) % 3);
            let dim = nin + nout * nin + nout;
            let layer = ExplicitAsImplicit::new(dim, nout, tanh_dense(nin, nout));
            let x = uniform_vec(&mut rng, dim, -1.0, 1.0);
            let y = layer.apply(&x).unwrap();
            let p = SolvedPoint::new(&layer, x.clone(), y).unwrap();
            let j = ift_jacobian(&layer, &p).unwrap();
            let fd = finite_diff_jacobian_scaled(|v| layer.apply(v), &x, 1e-5).unwrap();
            mat_rel_err(&j, &fd)
        })
        .collect()
}

/// All six QP blocks, with `Q` perturbed symmetrically.
pub fn qp_errors(count: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng(seed);
    (0..count)
        .map(|k| {
            let n = 1 + k % 4;
            let p = rng.gen_range(0..n);
            let r = rng.gen_range(0..=3);
            let (prob, _) = random_qp(&mut rng, n, p, r, 0.1);
            let layer = qp_layer(n, p, r, tight_ip(), 1e-9);
            let coords = SymmetricQpCoords { n, p, r };
            let x = prob.pack();
            let pt = layer.forward(&x).unwrap();
            let j = coords.reduce_columns(&rows(&ift_jacobian(layer.residual(), &pt).unwrap(), 0..n));
            let fd = finite_diff_jacobian_scaled(
                |f| Ok(layer.output(&layer.forward(&coords.to_packed(f))?).to_vec()),
                &coords.to_free(&x),
                1e-5,
            )
            .unwrap();
            mat_rel_err(&j, &fd)
        })
        .collect()
}

pub fn ncut_errors(count: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng(seed);
    let mut errs = Vec::with_capacity(count);
    for _ in 0..count * MAX_ATTEMPTS_PER_INSTANCE {
        if errs.len() == count {
            break;
        }
        let n = rng.gen_range(3..8);
        let (edges, w) = random_complete_graph(&mut rng, n);
        let layer = ncut_layer(n, edges, 1e-9);
        let Ok(p) = layer.forward(&w) else { continue };
        if check_wellposed(layer.residual(), &p, WellPosedTol::default()).passed() {
            errs.push(ift_vs_fd(&layer, &w));
        }
    }
    errs
}

pub fn sm_errors(count: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng(seed);
    (0..count)
        .map(|k| {
            let dim = [4, 9][k % 2];
            let m = random_affinity(&mut rng, dim);
            ift_vs_fd(&sm_layer(dim, 1e-9), &packed_affinity(&m))
        })
        .collect()
}

/// Instances whose active set is stable within the stencil: every entry of
/// the assignment and of the bound multipliers is at least `1e-3` away
/// from zero.
pub fn smac_errors(count: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng(seed);
    let mut errs = Vec::with_capacity(count);
    for attempt in 0..count * MAX_ATTEMPTS_PER_INSTANCE {
        if errs.len() == count {
            break;
        }
        let n = 2 + attempt % 2;
        let m = keypoint_affinity(&mut rng, n, 0.1);
        let layer = smac_layer(n, tight_ip(), 1e-10).unwrap();
        let x = packed_affinity(&m);
        let Ok(p) = layer.forward(&x) else { continue };
        if !check_wellposed(layer.residual(), &p, WellPosedTol::default()).passed() {
            continue;
        }
        let dim = n * n;
        let eq_rows = 2 * n - 1;
        let margin = (0..dim)
            .map(|i| p.y[i].abs().max(p.y[dim + eq_rows + i].abs()))
            .fold(f64::INFINITY, f64::min);
        if margin >= 1e-3 {
            errs.push(ift_vs_fd(&layer, &x));
        }
    }
    errs
}

/// Random 5×5 fields with every sample at least `0.05` from zero.
pub fn levelset_errors(count: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng(seed);
    let mut errs = Vec::with_capacity(count);
    for _ in 0..count * MAX_ATTEMPTS_PER_INSTANCE {
        if errs.len() == count {
            break;
        }
        let values: Vec<f64> = (0..25)
            .map(|_| {
                let v: f64 = rng.gen_range(-1.0..1.0);
                v.signum() * (0.05 + v.abs())
            })
            .collect();
        let g = LevelSetGrid2D::new(5, 5, values.clone(), 0.5).unwrap();
        let Ok(contour) = levelset_forward(&g) else { continue };
        errs.push(ift_vs_fd(&levelset_layer(&g, &contour, 1e-12), &values));
    }
    errs
}

/// Perturbs one packed block of a QP, keeping `Q` symmetric.
fn perturb(prob: &QpProblem, block: usize, idx: usize, h: f64) -> QpProblem {
    let n = prob.n();
    let mut q = prob.clone();
    match block {
        0 => {
            let (i, j) = (idx / n, idx % n);
            q.quad[(i, j)] += h;
            if i != j {
                q.quad[(j, i)] += h;
            }
        }
        1 => q.lin[idx] += h,
        2 => q.a[(idx / n, idx % n)] += h,
        3 => q.b[idx] += h,
        4 => q.g[(idx / n, idx % n)] += h,
        _ => q.h[idx] += h,
    }
    q
}

/// Relative error of each packed block `(Q, q, A, b, G, h)` of the
/// structured parameter gradient of `gbar·z*` against central differences.
pub fn qp_block_errors(prob: &QpProblem, gbar: &[f64], cfg: &IpConfig) -> [f64; 6] {
    let (n, p, r) = (prob.n(), prob.p(), prob.r());
    let (kkt, _) = solve_qp_point(prob, cfg).unwrap();
    let grads = qp_layer_backward_param_grads(prob, &kkt, gbar).unwrap();
    let mut out = [0.0; 6];
    let loss = |q: &QpProblem| {
        let (z, _) = solve_qp_point(q, cfg).unwrap();
        z.y.iter().zip(gbar).map(|(a, b)| a * b).sum::<f64>()
    };
    let sizes = [n * n, n, p * n, p, r * n, r];
    let blocks = [
        grads.quad.as_slice().to_vec(),
        grads.lin.clone(),
        grads.a.as_slice().to_vec(),
        grads.b.clone(),
        grads.g.as_slice().to_vec(),
        grads.h.clone(),
    ];
    let global = blocks.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    for (block, (&len, analytic)) in sizes.iter().zip(&blocks).enumerate() {
        let mut fd = vec![0.0; len];
        for idx in 0..len {
            if block == 0 && idx / n > idx % n {
                continue;
            }
            let h = 1e-5;
            fd[idx] = (loss(&perturb(prob, block, idx, h)) - loss(&perturb(prob, block, idx, -h))) / (2.0 * h);
        }
        let expect: Vec<f64> = if block == 0 {
            // Symmetric perturbation sees ∂Q_ij + ∂Q_ji off the diagonal.
            (0..len)
                .map(|idx| {
                    let (i, j) = (idx / n, idx % n);
                    match i.cmp(&j) {
                        std::cmp::Ordering::Less => analytic[idx] + analytic[j * n + i],
                        std::cmp::Ordering::Equal => analytic[idx],
                        std::cmp::Ordering::Greater => 0.0,
                    }
                })
                .collect()
        } else {
            analytic.clone()
        };
        // Blocks pinned by active constraints have zero gradient and only
        // solver noise in the stencil, so their scale is floored.
        let scale = expect.iter().chain(&fd).fold(1e-3 * global, |m, v| m.max(v.abs()));
        let err = expect.iter().zip(&fd).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        out[block] = err / scale;
    }
    out
}
