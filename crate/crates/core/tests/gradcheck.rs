//! Central finite differences (h = 1e-4) against the analytic backward pass
//! of every layer kind and of a small composed feature trunk.

mod common;

use common::{gradient_case, TOL};
use nested_brdf::nn::{LayerSpec, LrnParams, Mode, Sequential, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn check(case: &str) {
    let e = gradient_case(case);
    assert!(e < TOL, "{case}: relative error {e:.3e}");
}

#[test]
fn conv2d() {
    check("conv2d");
}

#[test]
fn conv2d_strided() {
    check("conv2d_strided");
}

#[test]
fn relu() {
    check("relu");
}

#[test]
fn batchnorm_spatial() {
    check("batchnorm_spatial");
}

#[test]
fn batchnorm_dense() {
    check("batchnorm_dense");
}

#[test]
fn lrn() {
    check("lrn");
}

#[test]
fn maxpool() {
    check("maxpool");
}

#[test]
fn dense() {
    check("dense");
}

#[test]
fn dropout() {
    check("dropout");
}

#[test]
fn softmax() {
    check("softmax");
}

#[test]
fn composed_feature_trunk() {
    check("composed_trunk");
}

#[test]
fn fused_softmax_cross_entropy() {
    check("softmax_cross_entropy");
}

#[test]
fn zero_upstream_gives_zero_param_grads() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut net = Sequential::<f64>::build(
        &[2, 6, 6],
        &[
            ("conv", LayerSpec::Conv2d { filters: 3, kernel: 3, stride: 1 }),
            ("bn", LayerSpec::batch_norm()),
            ("fc", LayerSpec::Dense { units: 4 }),
        ],
        &mut rng,
    )
    .unwrap();
    let x = Tensor::from_fn(&[2, 2, 6, 6], |_| rng.random_range(-1.0..1.0));
    net.zero_grad();
    net.forward(&x, Mode::Train).unwrap();
    net.backward(&Tensor::zeros(&[2, 4])).unwrap();
    for (name, p) in net.named_params() {
        if let Some(g) = &p.grad {
            assert!(g.data().iter().all(|v| *v == 0.0), "{name}");
        }
    }
}

#[test]
fn eval_forward_is_pure() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut net = Sequential::<f32>::build(
        &[6, 12, 12],
        &[
            ("conv", LayerSpec::Conv2d { filters: 4, kernel: 5, stride: 1 }),
            ("bn", LayerSpec::batch_norm()),
            ("lrn", LayerSpec::Lrn(LrnParams::default())),
            ("drop", LayerSpec::Dropout { keep: 0.75 }),
            ("fc", LayerSpec::Dense { units: 7 }),
        ],
        &mut rng,
    )
    .unwrap();
    let x = Tensor::from_fn(&[3, 6, 12, 12], |_| rng.random_range(0.0f32..1.0));
    net.forward(&x, Mode::Train).unwrap();
    let a = net.forward(&x, Mode::Eval).unwrap();
    let b = net.forward(&x, Mode::Eval).unwrap();
    assert_eq!(a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
}
