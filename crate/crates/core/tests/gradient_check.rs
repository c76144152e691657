//! Analytic gradients vs a central finite-difference oracle.

use dbvar_core::nn::{
    backward, cross_entropy_from_logits, forward, Activation, Gradients, MlpParams, MlpSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const FD_STEP: f64 = 1e-5;
const REL_TOL: f64 = 1e-5;

fn batch_loss(spec: &MlpSpec, params: &MlpParams, xs: &[Vec<f64>], ys: &[usize]) -> f64 {
    let mut loss = 0.0;
    for (x, &y) in xs.iter().zip(ys.iter()) {
        let pass = forward(spec, params, x).unwrap();
        loss += cross_entropy_from_logits(&pass.logits, y).unwrap();
    }
    loss / xs.len() as f64
}

/// Central finite differences over every parameter coordinate.
fn fd_gradients(spec: &MlpSpec, params: &MlpParams, xs: &[Vec<f64>], ys: &[usize]) -> Vec<f64> {
    let flat = params.flatten();
    let mut grad = Vec::with_capacity(flat.len());
    for dim in 0..flat.len() {
        let mut eval = |v: f64| {
            let mut p = params.clone();
            let mut idx = 0;
            p.for_each_mut(|t| {
                if idx == dim {
                    *t = v;
                }
                idx += 1;
            });
            batch_loss(spec, &p, xs, ys)
        };
        let fp = eval(flat[dim] + FD_STEP);
        let fm = eval(flat[dim] - FD_STEP);
        grad.push((fp - fm) / (2.0 * FD_STEP));
    }
    grad
}

fn rel_error(analytic: &Gradients, fd: &[f64]) -> f64 {
    let a = analytic.flatten();
    let mut diff_sq = 0.0;
    let mut ref_sq = 0.0;
    for (x, y) in a.iter().zip(fd.iter()) {
        diff_sq += (x - y) * (x - y);
        ref_sq += y * y;
    }
    diff_sq.sqrt() / ref_sq.sqrt().max(1e-12)
}

/// Test-side forward pass exposing hidden pre-activations; used to keep relu
/// cases away from the kink where central differences are invalid.
fn min_abs_preactivation(params: &MlpParams, x: &[f64]) -> f64 {
    let mut input = x.to_vec();
    let mut min_abs = f64::INFINITY;
    let n_layers = params.layers.len();
    for (l, layer) in params.layers.iter().enumerate() {
        let in_dim = input.len();
        let out_dim = layer.bias.len();
        let mut pre = vec![0.0; out_dim];
        for o in 0..out_dim {
            let mut acc = layer.bias[o];
            for (w, v) in layer.weights[o * in_dim..(o + 1) * in_dim]
                .iter()
                .zip(input.iter())
            {
                acc += w * v;
            }
            pre[o] = acc;
        }
        if l + 1 < n_layers {
            for &p in &pre {
                min_abs = min_abs.min(p.abs());
            }
            input = pre
                .iter()
                .map(|&p| if p > 0.0 { p } else { 0.0 })
                .collect();
        }
    }
    min_abs
}

fn random_case(
    rng: &mut ChaCha8Rng,
    activation: Activation,
) -> (MlpSpec, MlpParams, Vec<Vec<f64>>, Vec<usize>) {
    let input_dim = rng.random_range(1..=4);
    let k = rng.random_range(2..=4);
    let mut widths = vec![input_dim];
    for _ in 0..rng.random_range(1..=2) {
        widths.push(rng.random_range(2..=8));
    }
    widths.push(k);
    let spec = MlpSpec::new(widths, activation).unwrap();

    loop {
        let params = MlpParams::glorot_init(&spec, rng);
        let batch = rng.random_range(1..=5);
        let xs: Vec<Vec<f64>> = (0..batch)
            .map(|_| {
                (0..input_dim)
                    .map(|_| {
                        let v: f64 = StandardNormal.sample(rng);
                        1.5 * v
                    })
                    .collect()
            })
            .collect();
        let ys: Vec<usize> = (0..batch).map(|_| rng.random_range(0..k)).collect();
        // relu is non-differentiable at 0; resample until every hidden
        // pre-activation is safely away from the finite-difference window
        if activation == Activation::Relu {
            let safe = xs
                .iter()
                .all(|x| min_abs_preactivation(&params, x) > 1e-3);
            if !safe {
                continue;
            }
        }
        return (spec, params, xs, ys);
    }
}

#[test]
fn gradients_match_finite_differences_50_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xF00D);
    for case in 0..50 {
        let activation = if case % 2 == 0 {
            Activation::Tanh
        } else {
            Activation::Relu
        };
        let (spec, params, xs, ys) = random_case(&mut rng, activation);
        let (_, analytic) = backward(&spec, &params, &xs, &ys).unwrap();
        let fd = fd_gradients(&spec, &params, &xs, &ys);
        let err = rel_error(&analytic, &fd);
        assert!(
            err < REL_TOL,
            "case {case} ({activation:?}): relative error {err:.3e}"
        );
    }
}

#[test]
fn reference_case_2_8_3() {
    let spec = MlpSpec::new(vec![2, 8, 3], Activation::Tanh).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let params = MlpParams::glorot_init(&spec, &mut rng);
    let xs = vec![
        vec![0.4, -1.2],
        vec![-0.3, 0.9],
        vec![1.7, 0.2],
        vec![-0.8, -0.5],
    ];
    let ys = vec![0, 2, 1, 2];
    let (_, analytic) = backward(&spec, &params, &xs, &ys).unwrap();
    let fd = fd_gradients(&spec, &params, &xs, &ys);
    assert!(rel_error(&analytic, &fd) < REL_TOL);
}
