//! Every implicit layer's backward pass against finite differences taken
//! through its forward solver.

mod common;

use common::suite::*;
use common::*;
use implicit_core::autodiff::Tape;
use implicit_core::implicit::{ift_jacobian, implicit_vjp, ExplicitAsImplicit, SolvedPoint};
use implicit_core::layers::matching::sm_layer;
use implicit_core::layers::qp::qp_layer;
use implicit_core::solvers::IpConfig;
use rand::Rng;

const TOL: f64 = 1e-4;

fn assert_suite(errs: Vec<f64>, count: usize) {
    assert_eq!(errs.len(), count, "too few well-posed instances");
    for (k, e) in errs.iter().enumerate() {
        assert!(*e <= TOL, "instance {k}: rel err {e}");
    }
}

#[test]
fn example_system_matches_branches() {
    assert_suite(example_errors(100, 11), 100);
    let layer = example_layer();
    let mut rng = rng(11);
    for _ in 0..100 {
        let x = rng.gen_range(0.7..1.5);
        // Analytic branch y₁ = 1/x, y₂ = √(4 − x² − x⁻²).
        let p = layer.forward(&[x]).unwrap();
        let j = ift_jacobian(layer.residual(), &p).unwrap();
        let y2 = (4.0 - x * x - 1.0 / (x * x)).sqrt();
        assert!((j[(0, 0)] + 1.0 / (x * x)).abs() < 1e-10);
        assert!((j[(1, 0)] - (-x + 1.0 / (x * x * x)) / y2).abs() < 1e-9);
    }
}

#[test]
fn explicit_wrapped_layers() {
    assert_suite(explicit_wrapped_errors(100, 20), 100);
}

#[test]
fn qp_layer_all_blocks() {
    assert_suite(qp_errors(100, 12), 100);
}

#[test]
fn ncut_layer_random_graphs() {
    assert_suite(ncut_errors(100, 13), 100);
}

#[test]
fn sm_layer_random_affinities() {
    assert_suite(sm_errors(100, 14), 100);
}

#[test]
fn smac_layer_random_matchings() {
    assert_suite(smac_errors(100, 15), 100);
}

#[test]
fn levelset_layer_random_fields() {
    assert_suite(levelset_errors(100, 16), 100);
}

#[test]
fn explicit_wrapped_equals_native_backward() {
    let mut rng = rng(17);
    for _ in 0..200 {
        let (nin, nout) = (3, 3);
        let f = tanh_dense(nin, nout);
        let layer = ExplicitAsImplicit::new(nin + nout * nin + nout, nout, f.clone());
        let x = uniform_vec(&mut rng, nin + nout * nin + nout, -1.0, 1.0);
        let gbar = uniform_vec(&mut rng, nout, -1.0, 1.0);
        let y = layer.apply(&x).unwrap();
        let p = SolvedPoint::new(&layer, x.clone(), y).unwrap();
        let implicit = implicit_vjp(&layer, &p, &gbar).unwrap();
        let native = implicit_core::autodiff::record(&[&x], |t: &mut Tape, v| f(t, v[0]))
            .unwrap()
            .vjp(&gbar)
            .unwrap()
            .remove(0);
        for (a, b) in implicit.iter().zip(&native) {
            assert!((a - b).abs() <= 1e-10);
        }
    }
}

#[test]
fn adjoint_path_equals_dense_path() {
    let mut rng = rng(18);
    let cfg = IpConfig {
        tol: 1e-12,
        ..IpConfig::default()
    };
    for _ in 0..50 {
        let (prob, _) = random_qp(&mut rng, 3, 1, 2, 0.1);
        let layer = qp_layer(3, 1, 2, cfg, 1e-9);
        let p = layer.forward(&prob.pack()).unwrap();
        let j = ift_jacobian(layer.residual(), &p).unwrap();
        let gbar = uniform_vec(&mut rng, 6, -1.0, 1.0);
        let v = implicit_vjp(layer.residual(), &p, &gbar).unwrap();
        let dense = j.matvec_t(&gbar).unwrap();
        for (a, b) in v.iter().zip(&dense) {
            assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()));
        }
    }
}

#[test]
fn linearization_error_is_second_order() {
    let mut rng = rng(19);
    let layer = sm_layer(4, 1e-9);
    for _ in 0..20 {
        let m = random_affinity(&mut rng, 4);
        let x = packed_affinity(&m);
        let p = layer.forward(&x).unwrap();
        let j = ift_jacobian(layer.residual(), &p).unwrap();
        let dir = uniform_vec(&mut rng, x.len(), -1.0, 1.0);
        let err = |s: f64| {
            let xs: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + s * d).collect();
            let ys = layer.forward(&xs).unwrap().y;
            let lin = j.matvec(&dir).unwrap();
            ys.iter()
                .zip(&p.y)
                .zip(&lin)
                .map(|((a, b), l)| (a - b - s * l).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(1e-3), err(5e-4));
        assert!(e1 / e2 >= 3.5, "ratio {}", e1 / e2);
    }
}
