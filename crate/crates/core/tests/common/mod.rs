//! Helpers shared by the integration test targets.
#![allow(dead_code)]

pub mod brdf_oracle;
pub mod render_oracle;

use nested_brdf::nn::{softmax_cross_entropy, LayerSpec, LrnParams, Mode, Sequential, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ------------------------------------------------------- gradient checks

pub const H: f64 = 1e-4;
pub const TOL: f64 = 1e-3;
const MAX_PROBES: usize = 120;

/// Probe value bounded away from zero so ReLU kinks are not straddled.
fn away_from_zero(rng: &mut ChaCha8Rng) -> f64 {
    let m: f64 = rng.random_range(0.1..1.0);
    if rng.random_bool(0.5) {
        m
    } else {
        -m
    }
}

fn objective(net: &mut Sequential<f64>, x: &Tensor<f64>, g: &Tensor<f64>) -> f64 {
    net.reseed(11);
    let y = net.forward(x, Mode::Train).unwrap();
    y.data().iter().zip(g.data()).map(|(a, b)| a * b).sum()
}

pub fn rel_err(a: &[f64], n: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(n).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt() + n.iter().map(|v| v * v).sum::<f64>().sqrt();
    if scale < 1e-12 {
        0.0
    } else {
        diff / scale
    }
}

fn probes(len: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if len <= MAX_PROBES {
        (0..len).collect()
    } else {
        (0..MAX_PROBES).map(|_| rng.random_range(0..len)).collect()
    }
}

/// Worst relative error over the input gradient and every parameter
/// gradient of the network built from `specs`.
pub fn gradcheck(input: &[usize], batch: usize, specs: &[(&str, LayerSpec)], seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Sequential::<f64>::build(input, specs, &mut rng).unwrap();
    // move batch-norm affine parameters away from the identity
    for (name, p) in net.named_params_mut() {
        if name.ends_with(".gamma") || name.ends_with(".beta") {
            p.value.data_mut().iter_mut().for_each(|v| *v += rng.random_range(-0.5..0.5));
        }
    }
    let mut shape = vec![batch];
    shape.extend_from_slice(input);
    let mut x = Tensor::from_fn(&shape, |_| away_from_zero(&mut rng));
    let mut oshape = vec![batch];
    oshape.extend(net.output_shape());
    let g = Tensor::from_fn(&oshape, |_| rng.random_range(-1.0..1.0));

    net.zero_grad();
    objective(&mut net, &x, &g);
    let dx = net.backward(&g).unwrap();

    let idx = probes(x.len(), &mut rng);
    let analytic: Vec<f64> = idx.iter().map(|&i| dx.data()[i]).collect();
    let numeric: Vec<f64> = idx
        .iter()
        .map(|&i| {
            let orig = x.data()[i];
            x.data_mut()[i] = orig + H;
            let plus = objective(&mut net, &x, &g);
            x.data_mut()[i] = orig - H;
            let minus = objective(&mut net, &x, &g);
            x.data_mut()[i] = orig;
            (plus - minus) / (2.0 * H)
        })
        .collect();
    let mut worst = rel_err(&analytic, &numeric);

    let grads: Vec<(String, Option<Vec<f64>>)> =
        net.named_params().into_iter().map(|(n, p)| (n, p.grad.as_ref().map(|g| g.data().to_vec()))).collect();
    for (k, (_, grad)) in grads.iter().enumerate() {
        let Some(grad) = grad else { continue };
        let idx = probes(grad.len(), &mut rng);
        let analytic: Vec<f64> = idx.iter().map(|&i| grad[i]).collect();
        let numeric: Vec<f64> = idx
            .iter()
            .map(|&i| {
                let bump = |net: &mut Sequential<f64>, delta: f64| net.named_params_mut()[k].1.value.data_mut()[i] += delta;
                bump(&mut net, H);
                let plus = objective(&mut net, &x, &g);
                bump(&mut net, -2.0 * H);
                let minus = objective(&mut net, &x, &g);
                bump(&mut net, H);
                (plus - minus) / (2.0 * H)
            })
            .collect();
        let e = rel_err(&analytic, &numeric);
        worst = worst.max(e);
    }
    worst
}


/// Every layer kind plus the composed trunk, by name.
pub fn gradient_case(name: &str) -> f64 {
    let lrn = LayerSpec::Lrn(LrnParams { alpha: 0.1, ..Default::default() });
    match name {
        "conv2d" => gradcheck(&[3, 9, 9], 2, &[("conv", LayerSpec::Conv2d { filters: 4, kernel: 5, stride: 1 })], 1),
        "conv2d_strided" => gradcheck(&[2, 9, 9], 2, &[("conv", LayerSpec::Conv2d { filters: 3, kernel: 3, stride: 2 })], 2),
        "relu" => gradcheck(&[3, 4, 4], 2, &[("relu", LayerSpec::Relu)], 3),
        "batchnorm_spatial" => gradcheck(&[3, 4, 4], 3, &[("bn", LayerSpec::batch_norm())], 4),
        "batchnorm_dense" => gradcheck(&[6], 5, &[("bn", LayerSpec::batch_norm())], 5),
        // a large alpha makes the cross-channel coupling visible
        "lrn" => {
            let p = LrnParams { alpha: 0.5, ..Default::default() };
            gradcheck(&[7, 3, 3], 2, &[("lrn", LayerSpec::Lrn(p))], 6).max(gradcheck(
                &[7, 3, 3],
                2,
                &[("lrn", LayerSpec::Lrn(LrnParams { beta: 0.6, ..p }))],
                7,
            ))
        }
        "maxpool" => gradcheck(&[2, 6, 7], 2, &[("pool", LayerSpec::MaxPool { kernel: 2, stride: 2 })], 8),
        "dense" => gradcheck(&[2, 3, 3], 3, &[("fc", LayerSpec::Dense { units: 5 })], 9),
        "dropout" => gradcheck(&[20], 3, &[("drop", LayerSpec::Dropout { keep: 0.75 })], 10),
        "softmax" => gradcheck(&[8], 3, &[("sm", LayerSpec::Softmax)], 11),
        "composed_trunk" => gradcheck(
            &[6, 16, 16],
            3,
            &[
                ("conv1", LayerSpec::Conv2d { filters: 4, kernel: 5, stride: 1 }),
                ("relu1", LayerSpec::Relu),
                ("bn1", LayerSpec::batch_norm()),
                ("lrn1", lrn.clone()),
                ("pool1", LayerSpec::MaxPool { kernel: 2, stride: 2 }),
                ("drop1", LayerSpec::Dropout { keep: 0.75 }),
                ("conv2", LayerSpec::Conv2d { filters: 6, kernel: 3, stride: 1 }),
                ("relu2", LayerSpec::Relu),
                ("bn2", LayerSpec::batch_norm()),
                ("lrn2", lrn),
                ("pool2", LayerSpec::MaxPool { kernel: 2, stride: 2 }),
                ("fc1", LayerSpec::Dense { units: 12 }),
                ("relu3", LayerSpec::Relu),
                ("drop3", LayerSpec::Dropout { keep: 0.75 }),
                ("fc2", LayerSpec::Dense { units: 5 }),
                ("sm", LayerSpec::Softmax),
            ],
            12,
        ),
        "softmax_cross_entropy" => fused_softmax_cross_entropy(),
        other => panic!("no gradient case {other}"),
    }
}

pub const GRADIENT_CASES: [&str; 12] = [
    "conv2d",
    "conv2d_strided",
    "relu",
    "batchnorm_spatial",
    "batchnorm_dense",
    "lrn",
    "maxpool",
    "dense",
    "dropout",
    "softmax",
    "composed_trunk",
    "softmax_cross_entropy",
];

fn fused_softmax_cross_entropy() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut logits = Tensor::<f64>::from_fn(&[3, 10], |_| rng.random_range(-2.0..2.0));
    let labels: Vec<Vec<f64>> = (0..3)
        .map(|_| {
            let raw: Vec<f64> = (0..10).map(|_| rng.random_range(0.0..1.0)).collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / s).collect()
        })
        .collect();
    let refs: Vec<&[f64]> = labels.iter().map(|l| l.as_slice()).collect();
    let analytic = softmax_cross_entropy(&logits, &refs).unwrap().grad.into_data();
    let numeric: Vec<f64> = (0..30)
        .map(|i| {
            let orig = logits.data()[i];
            logits.data_mut()[i] = orig + H;
            let plus = softmax_cross_entropy(&logits, &refs).unwrap().loss;
            logits.data_mut()[i] = orig - H;
            let minus = softmax_cross_entropy(&logits, &refs).unwrap().loss;
            logits.data_mut()[i] = orig;
            (plus - minus) / (2.0 * H)
        })
        .collect();
    rel_err(&analytic, &numeric)
}
