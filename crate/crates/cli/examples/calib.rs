//! Scratch calibration runs (not shipped).
use dbvar_core::data::{sample, subset};
use dbvar_core::nn::{Activation, MlpSpec};
use dbvar_core::selection::{run_selection, spearman, ModelCandidate};
use dbvar_core::train::{train_repeats, Strategy, TrainConfig};
use dbvar_core::variability::{estimate_av, eta_epsilon_curve, prediction_profile, EvalSample, Mode};
use dbvar_core::GeneratingDistribution;

fn moons(gap: f64, jitter: f64) -> GeneratingDistribution {
    GeneratingDistribution::TwoMoons { inter_class_distance: gap, jitter_sigma: jitter }
}

fn mixture3(sigma: f64) -> GeneratingDistribution {
    GeneratingDistribution::GaussianMixture {
        means: vec![vec![0.0, 1.1], vec![-1.0, -0.6], vec![1.0, -0.6]],
        shared_sigma: sigma,
        class_priors: vec![1.0 / 3.0; 3],
    }
}

fn cfg(epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs, batch_size: 32, lr_init: 0.1, lr_decay_factor: 0.2, lr_decay_every: 50,
        momentum: 0.9, weight_decay: 5e-4, strategy: Strategy::Standard,
        augment_sigma: 0.08, tau: 0.0, seed_base: seed,
    }
}

fn pool(k: usize, config: &TrainConfig) -> Vec<ModelCandidate> {
    let mut out = Vec::new();
    for &w in &[2usize, 4, 8, 16, 32, 64] {
        for d in [1usize, 2] {
            let mut widths = vec![2];
            widths.extend(std::iter::repeat(w).take(d));
            widths.push(k);
            out.push(ModelCandidate {
                id: format!("w{w:02}d{d}"),
                spec: MlpSpec::new(widths, Activation::Relu).unwrap(),
                config: config.clone(),
            });
        }
    }
    out
}

fn pool_d2(k: usize, config: &TrainConfig) -> Vec<ModelCandidate> {
    let mut out = Vec::new();
    for &(w, d) in &[
        (2usize, 2usize), (3, 2), (4, 2), (5, 2), (6, 2), (8, 2), (16, 2), (64, 2),
        (2, 3), (3, 3), (4, 3), (6, 3),
    ] {
        let mut widths = vec![2];
        widths.extend(std::iter::repeat(w).take(d));
        widths.push(k);
        out.push(ModelCandidate {
            id: format!("w{w:02}d{d}"),
            spec: MlpSpec::new(widths, Activation::Relu).unwrap(),
            config: config.clone(),
        });
    }
    out
}

fn c7v(dist: &GeneratingDistribution, k: usize, m: usize, epochs: usize, repeats: usize, seed: u64, label: &str) {
    let data = sample(dist, m, 71 + seed).unwrap();
    let config = cfg(epochs, 9000 + 37 * seed);
    let eval = EvalSample::from_distribution(dist, 4000, 81).unwrap().unlabeled();
    let test = EvalSample::from_distribution(dist, 4000, 82).unwrap();
    let report = run_selection(&pool_d2(k, &config), &data, repeats, &eval, &test).unwrap();
    print!("--- C7v d2 {label} (m={m}, e={epochs}, r={repeats}, s={seed}):");
    println!(" scc={:.3} p={:.4} | lml_scc={:.3}",
        report.scc_av_acc.scc, report.scc_av_acc.p_value, report.scc_lml_acc.scc);
    if std::env::var("C7_DETAIL").is_ok() {
        for row in &report.rows {
            println!("  {}: av={:.4} acc={:.4}", row.id, row.av, row.mean_test_acc);
        }
    }
}

fn c7(dist: &GeneratingDistribution, k: usize, m: usize, epochs: usize, repeats: usize, label: &str) {
    let data = sample(dist, m, 71).unwrap();
    let config = cfg(epochs, 9000);
    let eval = EvalSample::from_distribution(dist, 2500, 81).unwrap().unlabeled();
    let test = EvalSample::from_distribution(dist, 2500, 82).unwrap();
    let report = run_selection(&pool(k, &config), &data, repeats, &eval, &test).unwrap();
    println!("--- C7 {label} (m={m}, epochs={epochs}, r={repeats})");
    for row in &report.rows {
        println!("  {}: av={:.4} acc={:.4} lml={:.1}", row.id, row.av, row.mean_test_acc, row.mean_lml);
    }
    println!("  scc_av_acc={:.3} p={:.4} | scc_lml_acc={:.3}",
        report.scc_av_acc.scc, report.scc_av_acc.p_value, report.scc_lml_acc.scc);
}

fn c9(dist: &GeneratingDistribution, k: usize, hidden: usize, epochs: usize, repeats: usize, eval_n: usize, aug: f64, seed: u64, label: &str) {
    let parent = sample(dist, 2048, 5 + seed).unwrap();
    let model = MlpSpec::new(vec![2, hidden, k], Activation::Relu).unwrap();
    let eval = EvalSample::from_distribution(dist, eval_n, 35).unwrap();
    let sizes = [32usize, 64, 128, 256, 512, 1024, 2048];
    let mut avs = Vec::new();
    for &m in &sizes {
        let idx: Vec<usize> = (0..m).collect();
        let nested = subset(&parent, &idx).unwrap();
        let mut config = cfg(epochs, 600 + 31 * seed);
        config.augment_sigma = aug;
        let ens = train_repeats(&nested, &model, &config, repeats).unwrap();
        let profile = prediction_profile(&ens, &eval, 0.0).unwrap();
        let est = estimate_av(&profile, Mode::Plugin).unwrap();
        avs.push(est.value);
        print!(" {:.3}", est.value);
    }
    let ms: Vec<f64> = sizes.iter().map(|&m| m as f64).collect();
    println!("  --- C9 {label} s={seed}: scc={:.3}", spearman(&ms, &avs).unwrap().scc);
}

fn c10(dist: &GeneratingDistribution, k: usize, hidden: usize, epochs: usize, repeats: usize, seed: u64, label: &str) {
    let parent = sample(dist, 2048, 230 + seed).unwrap();
    let model = MlpSpec::new(vec![2, hidden, k], Activation::Relu).unwrap();
    let eval = EvalSample::from_distribution(dist, 2500, 231).unwrap();
    let etas: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
    println!("--- C10 {label} (e={epochs}, r={repeats}, s={seed})");
    let mut aucs = Vec::new();
    for (i, &m) in [256usize, 2048].iter().enumerate() {
        let idx: Vec<usize> = (0..m).collect();
        let data = subset(&parent, &idx).unwrap();
        let config = cfg(epochs, 700 + 17 * seed + i as u64 * 131071);
        let curve = eta_epsilon_curve(&data, &model, &config, &etas, repeats, &eval).unwrap();
        print!("  m={m} auc={:.4}:", curve.auc);
        let mut violations = 0;
        for w in curve.points.windows(2) {
            let slack = 3.0 * (w[0].std_err.powi(2) + w[1].std_err.powi(2)).sqrt();
            if w[1].epsilon > w[0].epsilon + slack { violations += 1; }
        }
        for p in &curve.points {
            print!(" {:.3}", p.epsilon);
        }
        println!("  [monotone violations: {violations}]");
        aucs.push(curve.auc);
    }
    println!("  auc256={:.4} auc2048={:.4} ok={}", aucs[0], aucs[1], aucs[1] < aucs[0]);
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let which = args.get(1).map(String::as_str).unwrap_or("all");
    if which == "c7" || which == "all" {
        for &(g, j, m, e) in &[(0.05f64, 0.22f64, 160usize, 30usize), (0.15, 0.2, 160, 30), (0.1, 0.2, 192, 35)] {
            for seed in [0u64, 1, 2, 3, 4] {
                c7v(&moons(g, j), 2, m, e, 5, seed, &format!("moons g{g} j{j}"));
            }
        }
    }
    if which == "c9" || which == "all" {
        let c3a = GeneratingDistribution::Circles { radii: vec![0.5, 1.0, 1.5], jitter_sigma: 0.15 };
        for seed in [0u64, 1, 2, 3, 4, 5, 6] {
            c9(&c3a, 3, 12, 80, 16, 4000, 0.0, seed, "c3 j.15 h12 e80 aug0 r16");
        }
    }
    if which == "c10" || which == "all" {
        let circles3 = GeneratingDistribution::Circles { radii: vec![0.5, 1.0, 1.5], jitter_sigma: 0.1 };
        for seed in [0u64, 1, 2, 3, 4, 5, 6] {
            c10(&circles3, 3, 12, 35, 12, seed, "circles3 h12 e35 r12");
        }
    }
}
