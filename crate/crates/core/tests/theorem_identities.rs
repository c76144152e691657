//! Randomized sweeps of the deterministic inequality chains: on tie-free
//! profiles the lower-bound relations are identities of the plug-in
//! estimator, so a single violation is an implementation bug.

use dbvar_core::bounds::{
    delta_term, omega, upper_bound_data, verify_lemma_riskdiff, verify_theorem1,
    verify_theorem2, BoundInputs,
};
use dbvar_core::nn::tie_set;
use dbvar_core::variability::PredictionProfile;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_tie_free_profile(
    rng: &mut ChaCha8Rng,
    members: usize,
    points: usize,
    k: usize,
) -> PredictionProfile {
    let cells = (0..members)
        .map(|_| {
            (0..points)
                .map(|_| {
                    let c = rng.random_range(0..k);
                    let mut logits = vec![0.0; k];
                    logits[c] = 1.0;
                    tie_set(&logits, 0.0)
                })
                .collect()
        })
        .collect();
    PredictionProfile::from_cells(k, 0.0, cells).unwrap()
}

#[test]
fn theorem1_zero_violations_on_100_profiles() {
    let mut rng = ChaCha8Rng::seed_from_u64(31415);
    for case in 0..100 {
        let k = rng.random_range(2..=4);
        let members = rng.random_range(1..=5);
        let points = rng.random_range(1..=10);
        let profile = random_tie_free_profile(&mut rng, members, points, k);
        let labels: Vec<usize> = (0..points).map(|_| rng.random_range(0..k)).collect();
        let v = verify_theorem1(&profile, &labels).unwrap();
        assert!(!v.conditional);
        assert!(v.holds, "case {case}: AV={} > 2R−R²={}", v.lhs, v.rhs);
    }
}

#[test]
fn theorem2_zero_violations_on_100_binary_profiles() {
    let mut rng = ChaCha8Rng::seed_from_u64(27182);
    for case in 0..100 {
        let members = rng.random_range(1..=5);
        let points = rng.random_range(1..=10);
        let profile = random_tie_free_profile(&mut rng, members, points, 2);
        let labels: Vec<usize> = (0..points).map(|_| rng.random_range(0..2)).collect();
        let v = verify_theorem2(&profile, &labels).unwrap();
        assert!(v.holds, "case {case}: av={}, risk={}", v.av, v.risk);
    }
}

#[test]
fn riskdiff_zero_violations_on_100_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(16180);
    for case in 0..100 {
        let k = rng.random_range(2..=4);
        let points = rng.random_range(1..=10);
        let members_a = rng.random_range(1..=4);
        let members_b = rng.random_range(1..=4);
        let a = random_tie_free_profile(&mut rng, members_a, points, k);
        let b = random_tie_free_profile(&mut rng, members_b, points, k);
        let labels: Vec<usize> = (0..points).map(|_| rng.random_range(0..k)).collect();
        let v = verify_lemma_riskdiff(&a, &b, &labels).unwrap();
        assert!(v.holds, "case {case}: |ΔR|={} > ε̂={}", v.lhs, v.rhs);
    }
}

/// Second evaluation path for the bound formulas, with different expression
/// factoring, kept independent of the implementation in `bounds`.
mod second_path {
    pub fn omega(eps: f64, eta: f64, m: u64, delta: f64) -> f64 {
        // √(a/b) as exp((ln a − ln b)/2)
        let log_ratio = (-(delta.ln())).ln() - (2.0 * (1.0 - eta) * m as f64).ln();
        eps + (0.5 * log_ratio).exp()
    }

    pub fn delta_term(eta: f64, m: u64, delta: f64) -> f64 {
        // η ln(e/η) = η(1 − ln η); ln(2/δ) = ln 2 − ln δ
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

#[test]
fn bound_formulas_match_second_path_on_grid() {
    let epsilons = [0.0, 0.05, 0.1, 0.3, 0.7, 1.0];
    let etas = [0.01, 0.1, 0.25, 0.4, 0.5];
    let ms = [1u64, 10, 100, 1000, 100_000, 10_000_000];
    let deltas = [0.001, 0.05, 0.5, 0.99];
    let mut count = 0;
    for &epsilon in &epsilons {
        for &eta in &etas {
            for &m in &ms {
                for &delta in &deltas {
                    let inputs = BoundInputs {
                        epsilon,
                        eta,
                        m,
                        delta,
                    };
                    let report = upper_bound_data(&inputs).unwrap();
                    let om2 = second_path::omega(epsilon, eta, m, delta);
                    let dt2 = second_path::delta_term(eta, m, delta);
                    let up2 = second_path::upper(epsilon, eta, m, delta);

                    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-300);
                    assert!(rel(report.omega, om2) < 1e-12, "omega at {inputs:?}");
                    assert!(rel(report.delta_term, dt2) < 1e-12, "delta at {inputs:?}");
                    assert!(rel(report.upper_bound, up2) < 1e-12, "bound at {inputs:?}");

                    assert_eq!(report.omega, omega(&inputs).unwrap());
                    assert_eq!(report.delta_term, delta_term(eta, m, delta).unwrap().0);
                    count += 1;
                }
            }
        }
    }
    assert!(count >= 500, "grid too small: {count}");
}

#[test]
fn upper_bound_monotone_in_m() {
    let mut prev = f64::INFINITY;
    for m in [100u64, 1000, 10_000, 100_000] {
        let b = upper_bound_data(&BoundInputs {
            epsilon: 0.05,
            eta: 0.2,
            m,
            delta: 0.05,
        })
        .unwrap()
        .upper_bound;
        assert!(b < prev);
        prev = b;
    }
}
