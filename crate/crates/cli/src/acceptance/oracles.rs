//! Independent oracles used by the acceptance criteria: finite differences,
//! exhaustive pair enumeration, and a second evaluation path for the bound
//! formulas. None of these share code with the implementations they check.

use dbvar_core::nn::{
    cross_entropy_from_logits, forward, tie_set, Gradients, MlpParams, MlpSpec,
};
use dbvar_core::variability::PredictionProfile;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn batch_loss(spec: &MlpSpec, params: &MlpParams, xs: &[Vec<f64>], ys: &[usize]) -> f64 {
    let mut loss = 0.0;
    for (x, &y) in xs.iter().zip(ys.iter()) {
        let pass = forward(spec, params, x).unwrap();
        loss += cross_entropy_from_logits(&pass.logits, y).unwrap();
    }
    loss / xs.len() as f64
}

/// Central finite differences of the mean batch loss over every parameter.
pub fn fd_gradients(
    spec: &MlpSpec,
    params: &MlpParams,
    xs: &[Vec<f64>],
    ys: &[usize],
    step: f64,
) -> Vec<f64> {
    let flat = params.flatten();
    let mut grad = Vec::with_capacity(flat.len());
    for dim in 0..flat.len() {
        let eval = |v: f64| {
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
        grad.push((eval(flat[dim] + step) - eval(flat[dim] - step)) / (2.0 * step));
    }
    grad
}

pub fn gradient_rel_error(analytic: &Gradients, fd: &[f64]) -> f64 {
    let a = analytic.flatten();
    let mut diff_sq = 0.0;
    let mut ref_sq = 0.0;
    for (x, y) in a.iter().zip(fd.iter()) {
        diff_sq += (x - y) * (x - y);
        ref_sq += y * y;
    }
    diff_sq.sqrt() / ref_sq.sqrt().max(1e-12)
}

/// Smallest |pre-activation| over all hidden units, recomputed from scratch;
/// relu gradient checks must stay away from the kink.
pub fn min_abs_preactivation(params: &MlpParams, x: &[f64]) -> f64 {
    let mut input = x.to_vec();
    let mut min_abs = f64::INFINITY;
    let n_layers = params.layers.len();
    for (l, layer) in params.layers.iter().enumerate() {
        let in_dim = input.len();
        let out_dim = layer.bias.len();
        let mut pre = vec![0.0; out_dim];
        for (o, p) in pre.iter_mut().enumerate() {
            let mut acc = layer.bias[o];
            for (w, v) in layer.weights[o * in_dim..(o + 1) * in_dim]
                .iter()
                .zip(input.iter())
            {
                acc += w * v;
            }
            *p = acc;
        }
        if l + 1 < n_layers {
            for &p in &pre {
                min_abs = min_abs.min(p.abs());
            }
            input = pre.iter().map(|&p| p.max(0.0)).collect();
        }
    }
    min_abs
}

/// Random profile whose cells are singleton tie sets, plus occasional
/// genuine ties when `tie_prob > 0`.
pub fn random_profile(
    rng: &mut ChaCha8Rng,
    members: usize,
    points: usize,
    k: usize,
    tie_prob: f64,
) -> PredictionProfile {
    let cells = (0..members)
        .map(|_| {
            (0..points)
                .map(|_| {
                    let mut logits = vec![0.0; k];
                    if tie_prob > 0.0 && rng.random_bool(tie_prob) {
                        let a = rng.random_range(0..k);
                        let mut b = rng.random_range(0..k);
                        if a == b {
                            b = (b + 1) % k;
                        }
                        logits[a] = 1.0;
                        logits[b] = 1.0;
                    } else {
                        logits[rng.random_range(0..k)] = 1.0;
                    }
                    tie_set(&logits, 0.0)
                })
                .collect()
        })
        .collect();
    PredictionProfile::from_cells(k, 0.0, cells).unwrap()
}

/// Plug-in AV by exhaustive ordered-pair enumeration (diagonal included).
pub fn brute_plugin(profile: &PredictionProfile) -> f64 {
    let r = profile.n_members();
    let per_point: Vec<f64> = (0..profile.n_points())
        .map(|p| {
            let mut cnt = 0usize;
            for i in 0..r {
                for j in 0..r {
                    if profile.cells[i][p] != profile.cells[j][p] {
                        cnt += 1;
                    }
                }
            }
            cnt as f64 / (r * r) as f64
        })
        .collect();
    per_point.iter().sum::<f64>() / per_point.len() as f64
}

/// U-statistic AV by exhaustive unordered-pair enumeration.
pub fn brute_ustat(profile: &PredictionProfile) -> f64 {
    let r = profile.n_members();
    let pairs = r * (r - 1) / 2;
    let per_point: Vec<f64> = (0..profile.n_points())
        .map(|p| {
            let mut cnt = 0usize;
            for i in 0..r {
                for j in i + 1..r {
                    if profile.cells[i][p] != profile.cells[j][p] {
                        cnt += 1;
                    }
                }
            }
            cnt as f64 / pairs as f64
        })
        .collect();
    per_point.iter().sum::<f64>() / per_point.len() as f64
}

/// Cross disagreement by exhaustive enumeration.
pub fn brute_cross(a: &PredictionProfile, b: &PredictionProfile) -> f64 {
    let (ra, rb) = (a.n_members(), b.n_members());
    let per_point: Vec<f64> = (0..a.n_points())
        .map(|p| {
            let mut cnt = 0usize;
            for i in 0..ra {
                for j in 0..rb {
                    if a.cells[i][p] != b.cells[j][p] {
                        cnt += 1;
                    }
                }
            }
            cnt as f64 / (ra * rb) as f64
        })
        .collect();
    per_point.iter().sum::<f64>() / per_point.len() as f64
}

/// Second evaluation path for Ω, Δ and the Theorem-3 bound, factored
/// differently from the library implementation.
pub mod second_path {
    pub fn omega(eps: f64, eta: f64, m: u64, delta: f64) -> f64 {
        let log_ratio = (-(delta.ln())).ln() - (2.0 * (1.0 - eta) * m as f64).ln();
        eps + (0.5 * log_ratio).exp()
    }

    pub fn delta_term(eta: f64, m: u64, delta: f64) -> f64 {
        eta * (1.0 - eta.ln()) + (2.0f64.ln() - delta.ln()) / m as f64
    }

    pub fn upper(eps: f64, eta: f64, m: u64, delta: f64) -> f64 {
        // Ω + 2√(ΩΔ) + 8Δ + ε = (√Ω + √Δ)² + 7Δ + ε
        let om = omega(eps, eta, m, delta);
        let dt = delta_term(eta, m, delta);
        let s = om.sqrt() + dt.sqrt();
        s * s + 7.0 * dt + eps
    }
}
