//! Model selection: Laplace-approximated log marginal likelihood, Spearman
//! rank correlation, and the variability-vs-LML comparison harness.
//!
//! The marginal likelihood of a model class is approximated around the
//! trained optimum θ*:
//!
//! ```text
//! log p(S|ℳ) ≈ log p(S, θ*|ℳ) − ½ log | (1/2π) ℍ |
//! ```
//!
//! with the Hessian `ℍ = −∇² log p(S, θ|ℳ)` replaced by its diagonal
//! Gauss-Newton estimate plus the prior precision. For the softmax
//! likelihood the Gauss-Newton diagonal is exact:
//!
//! ```text
//! GGN_dd = Σᵢ Σ_c p_ic · (Jᵢᵀ(e_c − pᵢ))_d²
//! ```
//!
//! because `diag(p) − ppᵀ = E_{c~p}[(e_c − p)(e_c − p)ᵀ]`, so each class
//! contributes one weighted backward pass. For models linear in their
//! parameters this equals the exact Hessian diagonal of the likelihood.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{
    backward, cross_entropy_from_logits, logit_delta_gradient, softmax, MlpParams, MlpSpec,
};
use crate::train::{train_repeats, TrainConfig};
use crate::variability::{
    estimate_av, gibbs_risk, prediction_profile, EvalSample, Mode,
};

/// One entry of a model-selection pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCandidate {
    pub id: String,
    pub spec: MlpSpec,
    pub config: TrainConfig,
}

/// `log p(S, θ|ℳ)`: softmax log-likelihood plus an isotropic Gaussian
/// log-prior with precision `prior_precision`.
pub fn log_joint(
    spec: &MlpSpec,
    params: &MlpParams,
    dataset: &Dataset,
    prior_precision: f64,
) -> Result<f64> {
    if !(prior_precision > 0.0) {
        return Err(Error::Domain("prior precision must be > 0".into()));
    }
    let mut log_lik = 0.0;
    for (x, y) in dataset.examples() {
        let pass = crate::nn::forward(spec, params, x)?;
        log_lik -= cross_entropy_from_logits(&pass.logits, y)?;
    }
    let half_log_norm = 0.5 * (prior_precision / (2.0 * std::f64::consts::PI)).ln();
    let mut log_prior = 0.0;
    let flat = params.flatten();
    for theta in &flat {
        log_prior += -prior_precision * theta * theta / 2.0 + half_log_norm;
    }
    Ok(log_lik + log_prior)
}

/// Laplace LML with diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmlResult {
    pub value: f64,
    pub log_joint: f64,
    /// `−½ Σ_d ln(h_d / 2π)`.
    pub correction: f64,
    /// Negative curvature entries floored to the prior precision.
    pub floored_curvatures: usize,
    /// Max-norm of ∇(−log joint) at θ*; near 0 at a true optimum.
    pub grad_inf_norm: f64,
}

/// Laplace approximation of `log p(S|ℳ)` at (near-)optimal parameters.
pub fn lml_laplace(
    spec: &MlpSpec,
    params: &MlpParams,
    dataset: &Dataset,
    prior_precision: f64,
) -> Result<LmlResult> {
    let lj = log_joint(spec, params, dataset, prior_precision)?;

    // diagonal Gauss-Newton curvature of the negative log-likelihood
    let n_params = params.n_params();
    let mut ggn = vec![0.0f64; n_params];
    let k = spec.n_classes();
    for (x, _) in dataset.examples() {
        let probs = {
            let pass = crate::nn::forward(spec, params, x)?;
            softmax(&pass.logits)
        };
        for c in 0..k {
            let mut delta: Vec<f64> = probs.iter().map(|&p| -p).collect();
            delta[c] += 1.0;
            let (_, grads) = logit_delta_gradient(spec, params, x, &delta);
            for (acc, g) in ggn.iter_mut().zip(grads.flatten()) {
                *acc += probs[c] * g * g;
            }
        }
    }

    let mut floored = 0usize;
    let mut correction = 0.0;
    for &g in &ggn {
        let data_curv = if g.is_finite() && g >= 0.0 {
            g
        } else {
            floored += 1;
            0.0
        };
        let h = data_curv + prior_precision;
        correction -= 0.5 * (h / (2.0 * std::f64::consts::PI)).ln();
    }

    // optimality diagnostic: ∇(−log joint) = Σᵢ ∇CEᵢ + λθ
    let grad_inf_norm = if dataset.is_empty() {
        params
            .flatten()
            .iter()
            .fold(0.0f64, |m, &t| m.max((prior_precision * t).abs()))
    } else {
        let (_, mean_grads) = backward(spec, params, &dataset.xs, &dataset.ys)?;
        let m = dataset.len() as f64;
        mean_grads
            .flatten()
            .iter()
            .zip(params.flatten().iter())
            .fold(0.0f64, |acc, (&g, &t)| {
                acc.max((g * m + prior_precision * t).abs())
            })
    };

    Ok(LmlResult {
        value: lj + correction,
        log_joint: lj,
        correction,
        floored_curvatures: floored,
        grad_inf_norm,
    })
}

/// Spearman rank correlation with a two-sided p-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub scc: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Average (fractional) ranks, 1-based; ties share their mean position.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let mean_rank = (i + j + 2) as f64 / 2.0; // positions are 1-based
        for &idx in &order[i..=j] {
            ranks[idx] = mean_rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b.iter()) {
        num += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some(num / (va * vb).sqrt())
}

fn rank_correlation(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::contract("input lengths differ"));
    }
    if xs.len() < 3 {
        return Err(Error::contract("spearman needs n >= 3"));
    }
    if xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
        return Err(Error::contract("non-finite input"));
    }
    let r = pearson(&average_ranks(xs), &average_ranks(ys)).ok_or_else(|| {
        Error::Undefined("correlation undefined for a constant input vector".into())
    })?;
    Ok(r.clamp(-1.0, 1.0))
}

/// Spearman's rank-order correlation with the two-sided t-approximation
/// p-value (`t = r√((n−2)/(1−r²))`, df = n−2); `p = 0` at `|r| = 1`.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<CorrelationResult> {
    let n = xs.len();
    let r = rank_correlation(xs, ys)?;
    let p_value = if r.abs() >= 1.0 {
        0.0
    } else {
        let df = (n - 2) as f64;
        let t = r * (df / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("valid dof");
        2.0 * (1.0 - dist.cdf(t.abs()))
    };
    Ok(CorrelationResult {
        scc: r,
        p_value,
        n,
    })
}

/// Exact two-sided permutation p-value for small samples (n ≤ 10):
/// the fraction of permutations of `ys` whose |rank correlation| reaches
/// the observed one.
pub fn spearman_exact_p(xs: &[f64], ys: &[f64]) -> Result<f64> {
    let n = xs.len();
    if n > 10 {
        return Err(Error::contract("exact permutation p only for n <= 10"));
    }
    let observed = rank_correlation(xs, ys)?.abs();
    let mut perm: Vec<f64> = ys.to_vec();
    let mut hits = 0usize;
    let mut total = 0usize;
    // Heap's algorithm, iterative
    let mut c = vec![0usize; n];
    let mut count_perm = |p: &[f64]| {
        total += 1;
        if let Ok(r) = rank_correlation(xs, p) {
            if r.abs() >= observed - 1e-12 {
                hits += 1;
            }
        }
    };
    count_perm(&perm);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            count_perm(&perm);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(hits as f64 / total as f64)
}

/// Per-candidate measurements plus pool-level correlations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRow {
    pub id: String,
    pub av: f64,
    pub av_std_err: f64,
    pub mean_lml: f64,
    pub mean_test_acc: f64,
    pub mean_train_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    /// One row per surviving candidate, sorted by id.
    pub rows: Vec<CandidateRow>,
    pub scc_av_acc: CorrelationResult,
    pub scc_lml_acc: CorrelationResult,
    /// Candidates excluded because training aborted, with diagnostics.
    pub excluded: Vec<(String, String)>,
}

/// Prior precision matching the optimizer: mean-loss weight decay `wd`
/// corresponds to a MAP objective `Σ CE + (wd·m/2)‖θ‖²`.
pub fn prior_precision_for(config: &TrainConfig, m: usize) -> f64 {
    (config.weight_decay * m as f64).max(1e-6)
}

/// Trains every candidate `n_repeats` times and scores it by plug-in AV,
/// mean Laplace LML, and mean train/test accuracy; then correlates AV and
/// LML with test accuracy across the pool.
pub fn run_selection(
    pool: &[ModelCandidate],
    dataset: &Dataset,
    n_repeats: usize,
    eval_sample: &EvalSample,
    test_sample: &EvalSample,
) -> Result<SelectionReport> {
    if pool.len() < 3 {
        return Err(Error::contract("selection pool needs >= 3 candidates"));
    }
    {
        let mut ids: Vec<&str> = pool.iter().map(|c| c.id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != pool.len() {
            return Err(Error::contract("candidate ids must be unique"));
        }
    }
    let test_labels = test_sample
        .labels
        .as_ref()
        .ok_or_else(|| Error::contract("test sample must be labelled"))?;
    let train_eval = EvalSample::from_dataset(dataset);
    let train_labels = train_eval.labels.clone().expect("dataset labels");

    let mut rows = Vec::new();
    let mut excluded = Vec::new();
    for candidate in pool {
        let trained = match train_repeats(dataset, &candidate.spec, &candidate.config, n_repeats)
        {
            Ok(e) => e,
            Err(err) => {
                excluded.push((candidate.id.clone(), err.to_string()));
                continue;
            }
        };
        let tau = candidate.config.tau;
        let av = estimate_av(&prediction_profile(&trained, eval_sample, tau)?, Mode::Plugin)?;
        let (test_risk, _) =
            gibbs_risk(&prediction_profile(&trained, test_sample, tau)?, test_labels)?;
        let (train_risk, _) =
            gibbs_risk(&prediction_profile(&trained, &train_eval, tau)?, &train_labels)?;

        let precision = prior_precision_for(&candidate.config, dataset.len());
        let mut lml_sum = 0.0;
        for member in &trained.members {
            lml_sum += lml_laplace(&candidate.spec, &member.params, dataset, precision)?.value;
        }

        rows.push(CandidateRow {
            id: candidate.id.clone(),
            av: av.value,
            av_std_err: av.std_err,
            mean_lml: lml_sum / trained.n_members() as f64,
            mean_test_acc: 1.0 - test_risk,
            mean_train_acc: 1.0 - train_risk,
        });
    }
    rows.sort_by(|a, b| a.id.cmp(&b.id));

    let avs: Vec<f64> = rows.iter().map(|r| r.av).collect();
    let lmls: Vec<f64> = rows.iter().map(|r| r.mean_lml).collect();
    let accs: Vec<f64> = rows.iter().map(|r| r.mean_test_acc).collect();
    let scc_av_acc = spearman(&avs, &accs)?;
    let scc_lml_acc = spearman(&lmls, &accs)?;
    Ok(SelectionReport {
        rows,
        scc_av_acc,
        scc_lml_acc,
        excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{sample, GeneratingDistribution};
    use crate::nn::Activation;

    fn one_example_dataset() -> Dataset {
        let dist = GeneratingDistribution::GaussianMixture {
            means: vec![vec![-1.0], vec![1.0]],
            shared_sigma: 1.0,
            class_priors: vec![0.5, 0.5],
        };
        let mut d = sample(&dist, 1, 3).unwrap();
        d.xs[0] = vec![0.7];
        d.ys[0] = 1;
        d
    }

    #[test]
    fn log_joint_zero_params_hand_value() {
        // probs = 1/2 each, prior term exactly 0 at λ = 2π
        let spec = MlpSpec::new(vec![1, 2], Activation::Relu).unwrap();
        let params = MlpParams::zeros(&spec);
        let d = one_example_dataset();
        let lj = log_joint(&spec, &params, &d, 2.0 * std::f64::consts::PI).unwrap();
        assert!((lj + 2.0_f64.ln()).abs() < 1e-12, "lj = {lj}");
    }

    #[test]
    fn log_joint_empty_dataset_is_pure_prior() {
        let spec = MlpSpec::new(vec![1, 2], Activation::Relu).unwrap();
        let params = MlpParams::zeros(&spec);
        let mut d = one_example_dataset();
        d.xs.clear();
        d.ys.clear();
        let lambda = 3.0;
        let lj = log_joint(&spec, &params, &d, lambda).unwrap();
        let expected =
            params.n_params() as f64 * 0.5 * (lambda / (2.0 * std::f64::consts::PI)).ln();
        assert!((lj - expected).abs() < 1e-12);
    }

    #[test]
    fn log_joint_likelihood_is_additive() {
        let spec = MlpSpec::new(vec![1, 2], Activation::Relu).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        use rand::SeedableRng;
        let params = MlpParams::glorot_init(&spec, &mut rng);
        let d = one_example_dataset();
        let mut doubled = d.clone();
        doubled.xs.push(d.xs[0].clone());
        doubled.ys.push(d.ys[0]);
        let lambda = 1.5;
        let lj1 = log_joint(&spec, &params, &d, lambda).unwrap();
        let lj2 = log_joint(&spec, &params, &doubled, lambda).unwrap();
        let prior = {
            let mut empty = d.clone();
            empty.xs.clear();
            empty.ys.clear();
            log_joint(&spec, &params, &empty, lambda).unwrap()
        };
        assert!(((lj2 - prior) - 2.0 * (lj1 - prior)).abs() < 1e-10);
    }

    #[test]
    fn lml_equals_log_joint_for_empty_data_at_lambda_2pi() {
        let spec = MlpSpec::new(vec![1, 2], Activation::Relu).unwrap();
        let params = MlpParams::zeros(&spec);
        let mut d = one_example_dataset();
        d.xs.clear();
        d.ys.clear();
        let lambda = 2.0 * std::f64::consts::PI;
        let res = lml_laplace(&spec, &params, &d, lambda).unwrap();
        assert!((res.correction).abs() < 1e-12);
        assert!((res.value - res.log_joint).abs() < 1e-12);
        assert_eq!(res.floored_curvatures, 0);
    }

    #[test]
    fn ggn_matches_numeric_hessian_for_linear_model() {
        // one example, [1,2] logistic model: logits linear in θ, so the
        // Gauss-Newton diagonal equals the exact Hessian diagonal.
        let spec = MlpSpec::new(vec![1, 2], Activation::Relu).unwrap();
        let mut params = MlpParams::zeros(&spec);
        params.layers[0].weights = vec![0.4, -0.3];
        params.layers[0].bias = vec![0.1, -0.2];
        let d = one_example_dataset();
        let lambda = 2.0;

        let res = lml_laplace(&spec, &params, &d, lambda).unwrap();

        // numeric diagonal Hessian of −log_joint via central second差
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
                -log_joint(&spec, &p, &d, lambda).unwrap()
            };
            let f0 = eval(flat[dim]);
            let fp = eval(flat[dim] + step);
            let fm = eval(flat[dim] - step);
            let h = (fp - 2.0 * f0 + fm) / (step * step);
            correction -= 0.5 * (h / (2.0 * std::f64::consts::PI)).ln();
        }
        let numeric_lml = res.log_joint + correction;
        assert!(
            (res.value - numeric_lml).abs() < 1e-6,
            "ggn {} vs numeric {}",
            res.value,
            numeric_lml
        );
    }

    #[test]
    fn occam_direction_dead_unit_lowers_lml() {
        // widen the hidden layer by one unit with nonzero incoming weights
        // but zero outgoing weight: identical fit, lower LML.
        let dist = GeneratingDistribution::GaussianMixture {
            means: vec![vec![-1.0, 0.0], vec![1.0, 0.0]],
            shared_sigma: 0.8,
            class_priors: vec![0.5, 0.5],
        };
        let d = sample(&dist, 24, 9).unwrap();
        let lambda = 2.0;

        let spec_a = MlpSpec::new(vec![2, 3, 2], Activation::Tanh).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        use rand::SeedableRng;
        let params_a = MlpParams::glorot_init(&spec_a, &mut rng);

        let spec_b = MlpSpec::new(vec![2, 4, 2], Activation::Tanh).unwrap();
        let mut params_b = MlpParams::zeros(&spec_b);
        // copy hidden layer rows, add a dead unit with nonzero inputs
        params_b.layers[0].weights[..6].copy_from_slice(&params_a.layers[0].weights);
        params_b.layers[0].weights[6] = 0.5;
        params_b.layers[0].weights[7] = -0.5;
        params_b.layers[0].bias[..3].copy_from_slice(&params_a.layers[0].bias);
        // output layer: map old columns, zero column for the dead unit
        for out in 0..2 {
            for h in 0..3 {
                params_b.layers[1].weights[out * 4 + h] =
                    params_a.layers[1].weights[out * 3 + h];
            }
            params_b.layers[1].weights[out * 4 + 3] = 0.0;
        }
        params_b.layers[1].bias.copy_from_slice(&params_a.layers[1].bias);

        let lml_a = lml_laplace(&spec_a, &params_a, &d, lambda).unwrap();
        let lml_b = lml_laplace(&spec_b, &params_b, &d, lambda).unwrap();
        // identical likelihood part
        let prior_terms = |spec: &MlpSpec, p: &MlpParams| {
            let mut empty = d.clone();
            empty.xs.clear();
            empty.ys.clear();
            log_joint(spec, p, &empty, lambda).unwrap()
        };
        let lik_a = lml_a.log_joint - prior_terms(&spec_a, &params_a);
        let lik_b = lml_b.log_joint - prior_terms(&spec_b, &params_b);
        assert!((lik_a - lik_b).abs() < 1e-10, "fit changed");
        assert!(lml_b.value < lml_a.value, "{} !< {}", lml_b.value, lml_a.value);
    }

    #[test]
    fn spearman_basic_cases() {
        let r = spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap();
        assert_eq!(r.scc, 1.0);
        assert_eq!(r.p_value, 0.0);

        let r = spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap();
        assert_eq!(r.scc, -1.0);

        let r = spearman(&[1.0, 2.0, 3.0, 4.0], &[2.0, 1.0, 4.0, 3.0]).unwrap();
        assert!((r.scc - 0.6).abs() < 1e-12);
        assert!(r.p_value > 0.0 && r.p_value < 1.0);
    }

    #[test]
    fn spearman_contract_errors() {
        assert!(spearman(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(matches!(
            spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::Undefined(_))
        ));
    }

    #[test]
    fn spearman_handles_ties_with_average_ranks() {
        let ranks = average_ranks(&[3.0, 1.0, 1.0, 2.0]);
        assert_eq!(ranks, vec![4.0, 1.5, 1.5, 3.0]);
    }

    #[test]
    fn exact_permutation_p_agrees_in_direction() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let ys = [1.2, 2.1, 2.9, 4.4, 5.0, 6.3];
        let exact = spearman_exact_p(&xs, &ys).unwrap();
        // perfect monotone: only the 2 extreme orderings of 720 reach |r|=1
        assert!((exact - 2.0 / 720.0).abs() < 1e-12, "p = {exact}");
        let approx = spearman(&xs, &ys).unwrap();
        assert!(approx.p_value < 0.05);
    }
}
