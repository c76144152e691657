//! Projected gradient descent in the l∞ ball.

use rand::Rng;

use super::{cross_entropy_from_logits, forward, input_gradient, MlpParams, MlpSpec};
use crate::error::Result;

/// PGD attack: seeks `x'` with `‖x' − x‖_∞ ≤ gamma` maximizing the
/// cross-entropy at `(x', y)`.
///
/// Starts from a uniform random point inside the ball, takes `steps`
/// sign-gradient ascent steps of size `step_size`, and projects back onto the
/// ball after every step. Returns the best (highest-loss) iterate seen,
/// including the start point, so the loss at the result is never below the
/// loss at the start point. `gamma = 0` returns `x` unchanged.
pub fn pgd_attack<R: Rng>(
    spec: &MlpSpec,
    params: &MlpParams,
    x: &[f64],
    y: usize,
    gamma: f64,
    steps: usize,
    step_size: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    debug_assert!(gamma >= 0.0);
    if gamma == 0.0 {
        return Ok(x.to_vec());
    }

    let mut current: Vec<f64> = x.iter().map(|&v| v + rng.random_range(-gamma..gamma)).collect();
    let loss_at = |pt: &[f64]| -> Result<f64> {
        let pass = forward(spec, params, pt)?;
        cross_entropy_from_logits(&pass.logits, y)
    };

    let mut best = current.clone();
    let mut best_loss = loss_at(&current)?;

    for _ in 0..steps {
        let grad = input_gradient(spec, params, &current, y)?;
        for ((c, &g), &orig) in current.iter_mut().zip(grad.iter()).zip(x.iter()) {
            let stepped = *c + step_size * sign(g);
            *c = stepped.clamp(orig - gamma, orig + gamma);
        }
        let loss = loss_at(&current)?;
        if loss > best_loss {
            best_loss = loss;
            best = current.clone();
        }
    }
    Ok(best)
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn linear_model() -> (MlpSpec, MlpParams) {
        let spec = MlpSpec::new(vec![2, 2], Activation::Relu).unwrap();
        let mut params = MlpParams::zeros(&spec);
        // logits = (w0·x, w1·x) with rows (1, −2) and (−1, 2)
        params.layers[0].weights = vec![1.0, -2.0, -1.0, 2.0];
        (spec, params)
    }

    #[test]
    fn zero_radius_short_circuits() {
        let (spec, params) = linear_model();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = vec![0.3, -0.4];
        let adv = pgd_attack(&spec, &params, &x, 0, 0.0, 5, 0.1, &mut rng).unwrap();
        assert_eq!(adv, x);
    }

    #[test]
    fn stays_inside_ball() {
        let (spec, params) = linear_model();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = vec![0.3, -0.4];
        let gamma = 0.25;
        let adv = pgd_attack(&spec, &params, &x, 0, gamma, 20, 0.3, &mut rng).unwrap();
        for (a, b) in adv.iter().zip(x.iter()) {
            assert!((a - b).abs() <= gamma + 1e-12);
        }
    }

    #[test]
    fn one_step_linear_matches_hand_rule() {
        // For a linear model the input gradient of the loss has a fixed
        // direction, so one step from the (replayed) random start is exactly
        // clip(start + step·sign(grad), ball).
        let (spec, params) = linear_model();
        let x = vec![0.3, -0.4];
        let y = 0;
        let gamma = 0.2;
        let step = 0.5;

        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let adv = pgd_attack(&spec, &params, &x, y, gamma, 1, step, &mut rng).unwrap();

        let mut replay = ChaCha8Rng::seed_from_u64(31);
        let start: Vec<f64> = x
            .iter()
            .map(|&v| v + replay.random_range(-gamma..gamma))
            .collect();
        let grad = input_gradient(&spec, &params, &start, y).unwrap();
        let expected: Vec<f64> = start
            .iter()
            .zip(grad.iter())
            .zip(x.iter())
            .map(|((&s, &g), &orig)| (s + step * sign(g)).clamp(orig - gamma, orig + gamma))
            .collect();

        // The step direction increases the loss of a linear model, so the
        // final iterate is also the best one.
        assert_eq!(adv, expected);
    }

    #[test]
    fn loss_not_below_start_point() {
        let spec = MlpSpec::new(vec![2, 8, 3], Activation::Tanh).unwrap();
        let mut init_rng = ChaCha8Rng::seed_from_u64(5);
        let params = MlpParams::glorot_init(&spec, &mut init_rng);
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = vec![0.1 * seed as f64 - 1.0, 0.5];
            let gamma = 0.3;

            let mut replay = ChaCha8Rng::seed_from_u64(seed);
            let start: Vec<f64> = x
                .iter()
                .map(|&v| v + replay.random_range(-gamma..gamma))
                .collect();
            let start_loss = {
                let p = forward(&spec, &params, &start).unwrap();
                cross_entropy_from_logits(&p.logits, 1).unwrap()
            };

            let adv = pgd_attack(&spec, &params, &x, 1, gamma, 7, 0.05, &mut rng).unwrap();
            let adv_loss = {
                let p = forward(&spec, &params, &adv).unwrap();
                cross_entropy_from_logits(&p.logits, 1).unwrap()
            };
            assert!(adv_loss >= start_loss - 1e-12);
        }
    }
}
