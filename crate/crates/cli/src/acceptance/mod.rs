//! The verification suite behind `dbvar verify`: one check per acceptance
//! criterion, each with pinned seeds, tolerances, and a runtime budget.
//!
//! Identities (gradients, estimator equivalence, inequality chains, bound
//! arithmetic) are checked exactly or to fixed numeric tolerance; the
//! trend criteria rerun the reference toy experiments and test the trend
//! statistically at the stated thresholds.

pub mod oracles;

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use dbvar_core::bounds::{
    upper_bound_data, verify_lemma_riskdiff, verify_theorem1, verify_theorem2, BoundInputs,
};
use dbvar_core::data::{add_label_noise, sample, NoiseSpec};
use dbvar_core::nn::{backward, Activation, MlpParams, MlpSpec};
use dbvar_core::selection::{
    lml_laplace, log_joint, run_selection, spearman, ModelCandidate,
};
use dbvar_core::train::{train_repeats, train_with_checkpoints, Strategy, TrainConfig};
use dbvar_core::variability::{
    estimate_av, estimate_disagreement, eta_epsilon_curve, gibbs_risk, prediction_profile,
    tie_mass, EvalSample, Mode,
};
use dbvar_core::GeneratingDistribution;

use crate::config::{AvExperiment, DataBlock, EvalBlock, ExperimentConfig, ModelBlock};
use crate::experiments;
use crate::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    pub within_budget: bool,
    pub seconds: f64,
    pub budget_secs: f64,
    pub details: String,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "criterion {:02} {} [{:.1}s/{:.0}s] {}: {}",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.seconds,
            self.budget_secs,
            self.name,
            self.details
        )
    }
}

fn run_criterion(
    id: u32,
    name: &'static str,
    budget_secs: f64,
    body: impl FnOnce() -> (bool, String),
) -> CriterionResult {
    let start = Instant::now();
    let (ok, details) = body();
    let seconds = start.elapsed().as_secs_f64();
    let within_budget = seconds <= budget_secs;
    CriterionResult {
        id,
        name,
        passed: ok && within_budget,
        within_budget,
        seconds,
        budget_secs,
        details,
    }
}

// ---------------------------------------------------------------------------
// Reference toy setups shared by the trend criteria
// ---------------------------------------------------------------------------

fn moons(gap: f64, jitter: f64) -> GeneratingDistribution {
    GeneratingDistribution::TwoMoons {
        inter_class_distance: gap,
        jitter_sigma: jitter,
    }
}

fn mixture3() -> GeneratingDistribution {
    GeneratingDistribution::GaussianMixture {
        means: vec![vec![0.0, 1.1], vec![-1.0, -0.6], vec![1.0, -0.6]],
        shared_sigma: 0.55,
        class_priors: vec![1.0 / 3.0; 3],
    }
}

fn base_config(epochs: usize, seed_base: u64) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 32,
        lr_init: 0.1,
        lr_decay_factor: 0.2,
        lr_decay_every: 50,
        momentum: 0.9,
        weight_decay: 5e-4,
        strategy: Strategy::Standard,
        augment_sigma: 0.08,
        tau: 0.0,
        seed_base,
    }
}

fn spec(widths: &[usize]) -> MlpSpec {
    MlpSpec::new(widths.to_vec(), Activation::Relu).unwrap()
}

// ---------------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------------

pub fn criterion_01_gradient_correctness() -> CriterionResult {
    run_criterion(1, "gradient-correctness", 10.0, || {
        const TOL: f64 = 1e-5;
        let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0001);
        let mut worst = 0.0f64;
        for case in 0..50 {
            let activation = if case % 2 == 0 {
                Activation::Tanh
            } else {
                Activation::Relu
            };
            let input_dim = rng.random_range(1..=4);
            let k = rng.random_range(2..=4);
            let mut widths = vec![input_dim];
            for _ in 0..rng.random_range(1..=2) {
                widths.push(rng.random_range(2..=8));
            }
            widths.push(k);
            let model = MlpSpec::new(widths, activation).unwrap();

            let (params, xs, ys) = loop {
                let params = MlpParams::glorot_init(&model, &mut rng);
                let batch = rng.random_range(1..=5);
                let xs: Vec<Vec<f64>> = (0..batch)
                    .map(|_| {
                        (0..input_dim)
                            .map(|_| {
                                let v: f64 = StandardNormal.sample(&mut rng);
                                1.5 * v
                            })
                            .collect()
                    })
                    .collect();
                let ys: Vec<usize> = (0..batch).map(|_| rng.random_range(0..k)).collect();
                let kink_safe = activation == Activation::Tanh
                    || xs
                        .iter()
                        .all(|x| oracles::min_abs_preactivation(&params, x) > 1e-3);
                if kink_safe {
                    break (params, xs, ys);
                }
            };

            let (_, analytic) = backward(&model, &params, &xs, &ys).unwrap();
            let fd = oracles::fd_gradients(&model, &params, &xs, &ys, 1e-5);
            let err = oracles::gradient_rel_error(&analytic, &fd);
            worst = worst.max(err);
            if err >= TOL {
                return (false, format!("case {case}: relative error {err:.3e}"));
            }
        }
        (true, format!("50 cases, worst relative error {worst:.3e}"))
    })
}

pub fn criterion_02_estimator_oracle() -> CriterionResult {
    run_criterion(2, "estimator-oracle-equivalence", 5.0, || {
        let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0002);
        for case in 0..200 {
            let members = rng.random_range(1..=4);
            let points = rng.random_range(1..=8);
            let k = rng.random_range(2..=4);
            let profile = oracles::random_profile(&mut rng, members, points, k, 0.15);

            let plugin = estimate_av(&profile, Mode::Plugin).unwrap().value;
            if plugin != oracles::brute_plugin(&profile) {
                return (false, format!("case {case}: plugin mismatch"));
            }
            if members >= 2 {
                let ustat = estimate_av(&profile, Mode::Ustat).unwrap().value;
                if ustat != oracles::brute_ustat(&profile) {
                    return (false, format!("case {case}: ustat mismatch"));
                }
            }
            let other_members = rng.random_range(1..=4);
            let other = oracles::random_profile(&mut rng, other_members, points, k, 0.15);
            let cross = estimate_disagreement(&profile, &other).unwrap().value;
            if cross != oracles::brute_cross(&profile, &other) {
                return (false, format!("case {case}: cross mismatch"));
            }
        }
        (true, "200 instances, exact equality in all modes".into())
    })
}

/// A small trained binary ensemble plus its labelled evaluation sample.
fn trained_reference(
    seed: u64,
) -> (
    dbvar_core::Ensemble,
    dbvar_core::variability::PredictionProfile,
    Vec<usize>,
) {
    let dist = moons(0.2, 0.15);
    let data = sample(&dist, 128, seed).unwrap();
    let model = spec(&[2, 8, 2]);
    let ens = train_repeats(&data, &model, &base_config(12, seed + 1000), 4).unwrap();
    let eval = EvalSample::from_distribution(&dist, 400, seed + 2000).unwrap();
    let labels = eval.labels.clone().unwrap();
    let profile = prediction_profile(&ens, &eval, 0.0).unwrap();
    (ens, profile, labels)
}

pub fn criterion_03_theorem1_identity() -> CriterionResult {
    run_criterion(3, "theorem1-identity", 30.0, || {
        let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0003);
        for case in 0..100 {
            let k = rng.random_range(2..=4);
            let members = rng.random_range(1..=5);
            let points = rng.random_range(1..=10);
            let profile = oracles::random_profile(&mut rng, members, points, k, 0.0);
            let labels: Vec<usize> = (0..points).map(|_| rng.random_range(0..k)).collect();
            let v = verify_theorem1(&profile, &labels).unwrap();
            if !v.holds || v.conditional {
                return (false, format!("random case {case}: {v:?}"));
            }
        }
        // and on a real trained ensemble from the harness path
        let (_, profile, labels) = trained_reference(41);
        if tie_mass(&profile) > 0.0 {
            return (false, "trained profile unexpectedly has tie mass".into());
        }
        let v = verify_theorem1(&profile, &labels).unwrap();
        if !v.holds {
            return (false, format!("trained ensemble: {v:?}"));
        }
        (
            true,
            format!(
                "100 random profiles + trained ensemble, zero violations (trained slack {:.4})",
                v.slack
            ),
        )
    })
}

pub fn criterion_04_theorem2_identity() -> CriterionResult {
    run_criterion(4, "theorem2-identity-binary", 30.0, || {
        let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0004);
        for case in 0..100 {
            let members = rng.random_range(1..=5);
            let points = rng.random_range(1..=10);
            let profile = oracles::random_profile(&mut rng, members, points, 2, 0.0);
            let labels: Vec<usize> = (0..points).map(|_| rng.random_range(0..2)).collect();
            let v = verify_theorem2(&profile, &labels).unwrap();
            if !v.holds {
                return (false, format!("random case {case}: av={} risk={}", v.av, v.risk));
            }
        }
        // constructed equality case: constant-0 vs constant-1 members,
        // labels half each → AV = 0.5, R = 0.5, both inequalities tight
        let equality = {
            let mk = |c: usize| {
                let mut logits = vec![0.0; 2];
                logits[c] = 1.0;
                dbvar_core::nn::tie_set(&logits, 0.0)
            };
            dbvar_core::variability::PredictionProfile::from_cells(
                2,
                0.0,
                vec![vec![mk(0), mk(0)], vec![mk(1), mk(1)]],
            )
            .unwrap()
        };
        let v = verify_theorem2(&equality, &[0, 1]).unwrap();
        let tight = v.holds
            && (v.av - 0.5).abs() < 1e-12
            && (v.risk - 0.5).abs() < 1e-12
            && (v.av_upper.slack).abs() < 1e-12;
        if !tight {
            return (false, format!("equality case not tight: {v:?}"));
        }
        let (_, profile, labels) = trained_reference(43);
        let v = verify_theorem2(&profile, &labels).unwrap();
        if !v.holds {
            return (false, format!("trained ensemble: av={} risk={}", v.av, v.risk));
        }
        (
            true,
            "100 random binary profiles + equality case + trained ensemble, zero violations"
                .into(),
        )
    })
}

pub fn criterion_05_riskdiff_identity() -> CriterionResult {
    run_criterion(5, "lemma-riskdiff-identity", 30.0, || {
        let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0005);
        for case in 0..100 {
            let k = rng.random_range(2..=4);
            let points = rng.random_range(1..=10);
            let members_a = rng.random_range(1..=4);
            let members_b = rng.random_range(1..=4);
            // ties allowed: the identity does not need tie-freeness
            let a = oracles::random_profile(&mut rng, members_a, points, k, 0.1);
            let b = oracles::random_profile(&mut rng, members_b, points, k, 0.1);
            let labels: Vec<usize> = (0..points).map(|_| rng.random_range(0..k)).collect();
            let v = verify_lemma_riskdiff(&a, &b, &labels).unwrap();
            if !v.holds {
                return (false, format!("case {case}: |ΔR|={} > ε̂={}", v.lhs, v.rhs));
            }
        }
        (true, "100 random ensemble pairs, zero violations".into())
    })
}

pub fn criterion_06_bound_arithmetic() -> CriterionResult {
    run_criterion(6, "bound-arithmetic-second-path", 1.0, || {
        let epsilons = [0.0, 0.02, 0.05, 0.1, 0.3, 0.7, 1.0];
        let etas = [0.01, 0.05, 0.1, 0.25, 0.4, 0.5];
        let ms: [u64; 6] = [1, 10, 100, 1000, 100_000, 10_000_000];
        let deltas = [0.001, 0.01, 0.05, 0.5, 0.99];
        let mut grid_points = 0usize;
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-300);
        for &epsilon in &epsilons {
            for &eta in &etas {
                for &m in &ms {
                    for &delta in &deltas {
                        let report = upper_bound_data(&BoundInputs {
                            epsilon,
                            eta,
                            m,
                            delta,
                        })
                        .unwrap();
                        let om2 = oracles::second_path::omega(epsilon, eta, m, delta);
                        let dt2 = oracles::second_path::delta_term(eta, m, delta);
                        let up2 = oracles::second_path::upper(epsilon, eta, m, delta);
                        if rel(report.omega, om2) >= 1e-12
                            || rel(report.delta_term, dt2) >= 1e-12
                            || rel(report.upper_bound, up2) >= 1e-12
                        {
                            return (
                                false,
                                format!("mismatch at ε={epsilon} η={eta} m={m} δ={delta}"),
                            );
                        }
                        grid_points += 1;
                    }
                }
            }
        }
        // pinned reference value
        let pinned = upper_bound_data(&BoundInputs {
            epsilon: 0.1,
            eta: 0.1,
            m: 1000,
            delta: 0.05,
        })
        .unwrap();
        if (pinned.upper_bound - 3.3460).abs() > 1e-3 {
            return (false, format!("pinned case: {}", pinned.upper_bound));
        }
        (
            true,
            format!(
                "{grid_points}-point grid matches to 1e-12; pinned case {:.4}",
                pinned.upper_bound
            ),
        )
    })
}

fn selection_pool(config: &TrainConfig) -> Vec<ModelCandidate> {
    let mut pool = Vec::new();
    for &width in &[2usize, 4, 8, 16, 32, 64] {
        for depth in [1usize, 2] {
            let mut widths = vec![2];
            widths.extend(std::iter::repeat(width).take(depth));
            widths.push(2);
            pool.push(ModelCandidate {
                id: format!("w{width:02}d{depth}"),
                spec: MlpSpec::new(widths, Activation::Relu).unwrap(),
                config: config.clone(),
            });
        }
    }
    pool
}

pub fn criterion_07_correlation_reproduction() -> CriterionResult {
    run_criterion(7, "av-accuracy-negative-correlation", 600.0, || {
        let mut details = String::new();
        for (name, dist, pool_k) in [
            ("two-moons", moons(0.0, 0.22), 2usize),
            ("gaussian-mixture-3", mixture3(), 3usize),
        ] {
            let data = sample(&dist, 160, 71).unwrap();
            let config = base_config(40, 9000);
            let mut pool = selection_pool(&config);
            // adapt output width to the dataset's class count
            for candidate in &mut pool {
                let widths = &mut candidate.spec.layer_widths;
                *widths.last_mut().unwrap() = pool_k;
                candidate.spec = MlpSpec::new(widths.clone(), Activation::Relu).unwrap();
            }
            let eval = EvalSample::from_distribution(&dist, 2500, 81)
                .unwrap()
                .unlabeled();
            let test = EvalSample::from_distribution(&dist, 2500, 82).unwrap();
            let report = match run_selection(&pool, &data, 5, &eval, &test) {
                Ok(r) => r,
                Err(e) => return (false, format!("{name}: selection failed: {e}")),
            };
            let scc = report.scc_av_acc;
            write!(
                details,
                "{name}: scc={:.3} p={:.4} (n={}); ",
                scc.scc, scc.p_value, scc.n
            )
            .unwrap();
            if !(scc.scc <= -0.6 && scc.p_value < 0.05) {
                return (
                    false,
                    format!("{details}— needs scc ≤ −0.6 with p < 0.05"),
                );
            }
        }
        (true, details)
    })
}

pub fn criterion_08_training_time_trend() -> CriterionResult {
    run_criterion(8, "training-time-trend", 300.0, || {
        let dist = moons(0.2, 0.18);
        let data = sample(&dist, 256, 15).unwrap();
        let model = spec(&[2, 16, 2]);
        let config = base_config(64, 400);
        let checkpoints = [1usize, 2, 4, 8, 16, 32, 48, 64];
        let eval = EvalSample::from_distribution(&dist, 2000, 25).unwrap();
        let labels = eval.labels.clone().unwrap();

        let series = train_with_checkpoints(&data, &model, &config, 6, &checkpoints).unwrap();
        let mut avs = Vec::new();
        let mut errs = Vec::new();
        for (_, ens) in &series {
            let profile = prediction_profile(ens, &eval, 0.0).unwrap();
            avs.push(estimate_av(&profile, Mode::Plugin).unwrap().value);
            errs.push(gibbs_risk(&profile, &labels).unwrap().0);
        }
        let first_av = avs[0];
        let final_av = *avs.last().unwrap();
        if final_av >= first_av {
            return (
                false,
                format!("AV did not decrease: first {first_av:.4}, final {final_av:.4}"),
            );
        }
        let trend = spearman(&avs, &errs).unwrap();
        if trend.scc < 0.5 {
            return (
                false,
                format!("Spearman(AV, test error) = {:.3} < 0.5", trend.scc),
            );
        }
        (
            true,
            format!(
                "AV {first_av:.4} → {final_av:.4} over {} checkpoints; Spearman(AV, err) = {:.3}",
                checkpoints.len(),
                trend.scc
            ),
        )
    })
}

pub fn criterion_09_sample_size_trend() -> CriterionResult {
    run_criterion(9, "sample-size-trend", 600.0, || {
        let dist = moons(0.15, 0.2);
        let parent = sample(&dist, 2048, 5).unwrap();
        let model = spec(&[2, 16, 2]);
        let eval = EvalSample::from_distribution(&dist, 2000, 35).unwrap();
        let sizes = [64usize, 128, 256, 512, 1024, 2048];

        let mut avs = Vec::new();
        for &m in &sizes {
            let indices: Vec<usize> = (0..m).collect();
            let nested = dbvar_core::data::subset(&parent, &indices).unwrap();
            let ens = train_repeats(&nested, &model, &base_config(30, 600), 5).unwrap();
            let profile = prediction_profile(&ens, &eval, 0.0).unwrap();
            avs.push(estimate_av(&profile, Mode::Plugin).unwrap().value);
        }
        let ms: Vec<f64> = sizes.iter().map(|&m| m as f64).collect();
        let trend = spearman(&ms, &avs).unwrap();
        let avs_str: Vec<String> = avs.iter().map(|a| format!("{a:.4}")).collect();
        if trend.scc > -0.7 {
            return (
                false,
                format!("Spearman(m, AV) = {:.3} > −0.7; av = {avs_str:?}", trend.scc),
            );
        }
        (
            true,
            format!("Spearman(m, AV) = {:.3} over {sizes:?}; av = {avs_str:?}", trend.scc),
        )
    })
}

pub fn criterion_10_eta_epsilon_structure() -> CriterionResult {
    run_criterion(10, "eta-epsilon-curve-structure", 600.0, || {
        let dist = moons(0.2, 0.2);
        let parent = sample(&dist, 2048, 230).unwrap();
        let model = spec(&[2, 16, 2]);
        let eval = EvalSample::from_distribution(&dist, 1500, 231).unwrap();
        let etas: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();

        let mut aucs = Vec::new();
        let mut details = String::new();
        for (idx, &m) in [256usize, 2048].iter().enumerate() {
            let indices: Vec<usize> = (0..m).collect();
            let data = dbvar_core::data::subset(&parent, &indices).unwrap();
            let config = base_config(25, 700 + idx as u64 * 131_071);
            let curve = eta_epsilon_curve(&data, &model, &config, &etas, 4, &eval).unwrap();
            if !curve.failures.is_empty() {
                return (false, format!("m={m}: curve failures {:?}", curve.failures));
            }

            // endpoint vs cross-ensemble AV
            let ens_a = train_repeats(&data, &model, &config, 4).unwrap();
            let mut config_b = config.clone();
            config_b.seed_base += 555_555;
            let ens_b = train_repeats(&data, &model, &config_b, 4).unwrap();
            let pa = prediction_profile(&ens_a, &eval, 0.0).unwrap();
            let pb = prediction_profile(&ens_b, &eval, 0.0).unwrap();
            let cross = estimate_disagreement(&pa, &pb).unwrap();
            let end = curve.points.last().unwrap();
            let tol = 3.0 * (end.std_err.powi(2) + cross.std_err.powi(2)).sqrt();
            if (end.epsilon - cross.value).abs() > tol {
                return (
                    false,
                    format!(
                        "m={m}: ε(1)={:.4} vs cross AV {:.4} beyond {tol:.4}",
                        end.epsilon, cross.value
                    ),
                );
            }

            // non-increasing within 3·std_err slack per step
            for w in curve.points.windows(2) {
                let slack = 3.0 * (w[0].std_err.powi(2) + w[1].std_err.powi(2)).sqrt();
                if w[1].epsilon > w[0].epsilon + slack {
                    return (
                        false,
                        format!(
                            "m={m}: ε rose from {:.4} (η={}) to {:.4} (η={})",
                            w[0].epsilon, w[0].eta, w[1].epsilon, w[1].eta
                        ),
                    );
                }
            }
            write!(details, "m={m}: auc={:.4}, ε(1)={:.4}; ", curve.auc, end.epsilon).unwrap();
            aucs.push(curve.auc);
        }
        if aucs[1] >= aucs[0] {
            return (
                false,
                format!("AUC(m=2048)={:.4} not below AUC(m=256)={:.4}", aucs[1], aucs[0]),
            );
        }
        (true, details)
    })
}

pub fn criterion_11_label_noise_effect() -> CriterionResult {
    run_criterion(11, "label-noise-raises-av", 300.0, || {
        let dist = moons(0.25, 0.15);
        let clean = sample(&dist, 256, 90).unwrap();
        let noisy = add_label_noise(
            &clean,
            &NoiseSpec {
                ratio: 0.2,
                seed: 91,
            },
        )
        .unwrap();
        let model = spec(&[2, 16, 2]);
        // constant learning rate, as in the label-noise setting
        let mut config = base_config(60, 800);
        config.lr_init = 0.01;
        config.lr_decay_factor = 1.0;
        let eval = EvalSample::from_distribution(&dist, 2000, 92).unwrap();

        let av_of = |data: &dbvar_core::Dataset| {
            let ens = train_repeats(data, &model, &config, 6).unwrap();
            let profile = prediction_profile(&ens, &eval, 0.0).unwrap();
            estimate_av(&profile, Mode::Plugin).unwrap()
        };
        let clean_av = av_of(&clean);
        let noisy_av = av_of(&noisy);
        let pooled = (clean_av.std_err.powi(2) + noisy_av.std_err.powi(2)).sqrt();
        let gap = noisy_av.value - clean_av.value;
        if gap <= 3.0 * pooled {
            return (
                false,
                format!(
                    "AV(noisy)={:.4} vs AV(clean)={:.4}: gap {gap:.4} ≤ 3·pooled se {:.4}",
                    noisy_av.value,
                    clean_av.value,
                    3.0 * pooled
                ),
            );
        }
        (
            true,
            format!(
                "AV(noisy)={:.4} > AV(clean)={:.4} by {gap:.4} (3·pooled se {:.4})",
                noisy_av.value,
                clean_av.value,
                3.0 * pooled
            ),
        )
    })
}

pub fn criterion_12_lml_sanity() -> CriterionResult {
    run_criterion(12, "lml-oracle-and-occam", 10.0, || {
        // numeric second-derivative oracle on a tiny linear (logistic) model
        let model = spec(&[1, 2]);
        let mut params = MlpParams::zeros(&model);
        params.layers[0].weights = vec![0.4, -0.3];
        params.layers[0].bias = vec![0.1, -0.2];
        let dist = GeneratingDistribution::GaussianMixture {
            means: vec![vec![-1.0], vec![1.0]],
            shared_sigma: 1.0,
            class_priors: vec![0.5, 0.5],
        };
        let mut data = sample(&dist, 1, 3).unwrap();
        data.xs[0] = vec![0.7];
        data.ys[0] = 1;
        let lambda = 2.0;
        let res = lml_laplace(&model, &params, &data, lambda).unwrap();

        let flat = params.flatten();
        let step = 1e-4;
        let mut correction = 0.0;
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
                -log_joint(&model, &p, &data, lambda).unwrap()
            };
            let h = (eval(flat[dim] + step) - 2.0 * eval(flat[dim]) + eval(flat[dim] - step))
                / (step * step);
            correction -= 0.5 * (h / (2.0 * std::f64::consts::PI)).ln();
        }
        let numeric = res.log_joint + correction;
        if (res.value - numeric).abs() >= 1e-6 {
            return (
                false,
                format!("GGN LML {} vs numeric-Hessian {}", res.value, numeric),
            );
        }

        // Occam direction: a dead unit (nonzero inputs, zero output weight)
        // keeps the fit and lowers the LML
        let dist2 = GeneratingDistribution::GaussianMixture {
            means: vec![vec![-1.0, 0.0], vec![1.0, 0.0]],
            shared_sigma: 0.8,
            class_priors: vec![0.5, 0.5],
        };
        let d2 = sample(&dist2, 24, 9).unwrap();
        let spec_a = MlpSpec::new(vec![2, 3, 2], Activation::Tanh).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let params_a = MlpParams::glorot_init(&spec_a, &mut rng);
        let spec_b = MlpSpec::new(vec![2, 4, 2], Activation::Tanh).unwrap();
        let mut params_b = MlpParams::zeros(&spec_b);
        params_b.layers[0].weights[..6].copy_from_slice(&params_a.layers[0].weights);
        params_b.layers[0].weights[6] = 0.5;
        params_b.layers[0].weights[7] = -0.5;
        params_b.layers[0].bias[..3].copy_from_slice(&params_a.layers[0].bias);
        for out in 0..2 {
            for h in 0..3 {
                params_b.layers[1].weights[out * 4 + h] = params_a.layers[1].weights[out * 3 + h];
            }
            params_b.layers[1].weights[out * 4 + 3] = 0.0;
        }
        params_b.layers[1].bias.copy_from_slice(&params_a.layers[1].bias);
        let lml_a = lml_laplace(&spec_a, &params_a, &d2, lambda).unwrap();
        let lml_b = lml_laplace(&spec_b, &params_b, &d2, lambda).unwrap();
        if lml_b.value >= lml_a.value {
            return (
                false,
                format!("Occam direction violated: {} >= {}", lml_b.value, lml_a.value),
            );
        }
        (
            true,
            format!(
                "oracle gap {:.2e}; Occam penalty {:.4}",
                (res.value - numeric).abs(),
                lml_a.value - lml_b.value
            ),
        )
    })
}

fn smoke_av_config() -> ExperimentConfig {
    ExperimentConfig::Av(AvExperiment {
        experiment: "av".into(),
        data: DataBlock {
            distribution: moons(0.25, 0.15),
            train_points: 64,
            train_seed: 7,
        },
        model: ModelBlock {
            layer_widths: vec![2, 8, 2],
            activation: Activation::Relu,
        },
        train: base_config(3, 50),
        n_repeats: 2,
        eval: EvalBlock {
            eval_points: 200,
            eval_seed: 8,
            test_points: 200,
            test_seed: 9,
        },
        diagnostic_tau: 1e-6,
    })
}

pub fn criterion_13_determinism(work_dir: &Path) -> CriterionResult {
    run_criterion(13, "command-rerun-determinism", 60.0, || {
        let config = smoke_av_config();
        let dir_a = work_dir.join("determinism_run_a");
        let dir_b = work_dir.join("determinism_run_b");
        let run = |dir: &Path| experiments::run(&config, dir, true);
        let manifest_a = match run(&dir_a) {
            Ok(m) => m,
            Err(e) => return (false, format!("run a failed: {e}")),
        };
        let manifest_b = match run(&dir_b) {
            Ok(m) => m,
            Err(e) => return (false, format!("run b failed: {e}")),
        };
        if manifest_a.artifacts != manifest_b.artifacts {
            return (false, "artifact digests differ between reruns".into());
        }
        for artifact in &manifest_a.artifacts {
            let a = std::fs::read(dir_a.join(&artifact.file)).unwrap_or_default();
            let b = std::fs::read(dir_b.join(&artifact.file)).unwrap_or_default();
            if a != b || a.is_empty() {
                return (false, format!("{} differs between reruns", artifact.file));
            }
        }
        (
            true,
            format!(
                "{} artifacts byte-identical across reruns",
                manifest_a.artifacts.len()
            ),
        )
    })
}

/// Runs the whole suite. `work_dir` holds scratch output for the
/// determinism criterion.
pub fn run_all(work_dir: &Path) -> Result<Vec<CriterionResult>, CliError> {
    std::fs::create_dir_all(work_dir)?;
    Ok(vec![
        criterion_01_gradient_correctness(),
        criterion_02_estimator_oracle(),
        criterion_03_theorem1_identity(),
        criterion_04_theorem2_identity(),
        criterion_05_riskdiff_identity(),
        criterion_06_bound_arithmetic(),
        criterion_07_correlation_reproduction(),
        criterion_08_training_time_trend(),
        criterion_09_sample_size_trend(),
        criterion_10_eta_epsilon_structure(),
        criterion_11_label_noise_effect(),
        criterion_12_lml_sanity(),
        criterion_13_determinism(work_dir),
    ])
}

#[derive(Debug, Serialize)]
pub struct VerifyReport {
    pub tool_version: String,
    pub config_fingerprint: String,
    pub all_passed: bool,
    pub criteria: Vec<CriterionResult>,
}

/// Runs the suite, writes `verify_report.json` into `out`, prints one line
/// per criterion, and says whether everything passed.
pub fn run_and_report(out: &Path, config_fingerprint: String) -> Result<bool, CliError> {
    let results = run_all(out)?;
    for r in &results {
        println!("{}", r.line());
    }
    let all_passed = results.iter().all(|r| r.passed);
    let report = VerifyReport {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_fingerprint,
        all_passed,
        criteria: results,
    };
    std::fs::write(
        out.join("verify_report.json"),
        serde_json::to_string_pretty(&report)
            .map_err(|e| CliError::Run(anyhow::anyhow!("{e}")))?,
    )?;
    println!(
        "verify: {}",
        if all_passed { "all criteria passed" } else { "FAILURES present" }
    );
    Ok(all_passed)
}
