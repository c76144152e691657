//! The named experiments behind each CLI command.
//!
//! Every command is a pure function of its config (plus tool version): all
//! randomness is seeded there, so reruns produce byte-identical artifacts.
//! Only the manifest's wall-clock timings vary between runs.

use std::fmt::Write as _;

use serde_json::json;

use dbvar_core::bounds::{upper_bound_data, verify_theorem1, verify_theorem2, BoundInputs};
use dbvar_core::data::{add_label_noise, sample, save_dataset, subset, NoiseSpec};
use dbvar_core::nn::MlpSpec;
use dbvar_core::selection::{run_selection, spearman, ModelCandidate};
use dbvar_core::train::{save_ensemble, train_repeats, train_with_checkpoints, TrainConfig};
use dbvar_core::variability::{
    boundary_entropy, estimate_av, eta_epsilon_curve, gibbs_risk, prediction_profile, tie_mass,
    EntropyKind, EvalSample, Mode, PredictionProfile,
};
use dbvar_core::{Dataset, Ensemble, GeneratingDistribution};

use crate::config::*;
use crate::manifest::{prepare_out_dir, RunContext, RunManifest};
use crate::CliError;

fn run_err(e: impl std::fmt::Display) -> CliError {
    CliError::Run(anyhow::anyhow!("{e}"))
}

fn make_dataset(data: &DataBlock) -> Result<Dataset, CliError> {
    sample(&data.distribution, data.train_points, data.train_seed).map_err(run_err)
}

fn eval_sample(
    dist: &GeneratingDistribution,
    n_points: usize,
    seed: u64,
) -> Result<EvalSample, CliError> {
    EvalSample::from_distribution(dist, n_points, seed).map_err(run_err)
}

/// `0.1` → `0p1`, usable inside file names.
fn num_tag(v: f64) -> String {
    format!("{v}").replace('.', "p").replace('-', "m")
}

struct EvaluatedEnsemble {
    av: dbvar_core::VariabilityEstimate,
    test_error: f64,
    test_error_se: f64,
    profile: PredictionProfile,
}

fn evaluate_ensemble(
    ensemble: &Ensemble,
    eval: &EvalSample,
    tau: f64,
) -> Result<EvaluatedEnsemble, CliError> {
    let profile = prediction_profile(ensemble, eval, tau).map_err(run_err)?;
    let av = estimate_av(&profile, Mode::Plugin).map_err(run_err)?;
    let labels = eval
        .labels
        .as_ref()
        .ok_or_else(|| run_err("evaluation sample must be labelled"))?;
    let (test_error, test_error_se) = gibbs_risk(&profile, labels).map_err(run_err)?;
    Ok(EvaluatedEnsemble {
        av,
        test_error,
        test_error_se,
        profile,
    })
}

/// Dispatches a parsed config to its command. `verify` is handled by the
/// acceptance module, not here.
pub fn run(config: &ExperimentConfig, out: &std::path::Path, overwrite: bool) -> Result<RunManifest, CliError> {
    prepare_out_dir(out, overwrite)?;
    let mut ctx = RunContext::new(out, config.experiment_name(), config.fingerprint());
    match config {
        ExperimentConfig::Train(c) => cmd_train(c, &mut ctx)?,
        ExperimentConfig::Av(c) => cmd_av(c, &mut ctx)?,
        ExperimentConfig::Curve(c) => cmd_curve(c, &mut ctx)?,
        ExperimentConfig::Bounds(c) => cmd_bounds(c, &mut ctx)?,
        ExperimentConfig::Select(c) => cmd_select(c, &mut ctx)?,
        ExperimentConfig::TrainingTime(c) => cmd_training_time(c, &mut ctx)?,
        ExperimentConfig::SampleSize(c) => cmd_sample_size(c, &mut ctx)?,
        ExperimentConfig::LabelNoise(c) => cmd_label_noise(c, &mut ctx)?,
        ExperimentConfig::EtaEps(c) => cmd_eta_eps(c, &mut ctx)?,
        ExperimentConfig::Verify(_) => {
            return Err(CliError::Config(
                "verify configs are executed by the verify command".into(),
            ))
        }
    }
    ctx.finish()
}

fn cmd_train(c: &TrainExperiment, ctx: &mut RunContext) -> Result<(), CliError> {
    let dataset = make_dataset(&c.data)?;
    let spec = c.model.to_spec()?;
    save_dataset(&ctx.out_dir().join("dataset.csv"), &dataset).map_err(run_err)?;
    ctx.record_file("dataset.csv")?;
    ctx.record_file("dataset.json")?;

    let ensemble = ctx.time("train_repeats", || {
        train_repeats(&dataset, &spec, &c.train, c.n_repeats)
    });
    let ensemble = ensemble.map_err(run_err)?;
    save_ensemble(&ctx.out_dir().join("ensemble"), &ensemble).map_err(run_err)?;
    ctx.record_dir("ensemble")?;

    let summary = json!({
        "n_members": ensemble.n_members(),
        "partial": ensemble.is_partial(),
        "aborted": ensemble.aborted,
        "dataset_fingerprint": ensemble.dataset_fingerprint,
        "members": ensemble.members.iter().map(|m| json!({
            "seed": m.seed,
            "final_train_loss": m.final_train_loss,
            "final_train_error": m.final_train_error,
        })).collect::<Vec<_>>(),
    });
    ctx.write_artifact("train_summary.json", &pretty(&summary)?)
}

fn cmd_av(c: &AvExperiment, ctx: &mut RunContext) -> Result<(), CliError> {
    let dataset = make_dataset(&c.data)?;
    let spec = c.model.to_spec()?;
    let eval = eval_sample(&c.data.distribution, c.eval.eval_points, c.eval.eval_seed)?;
    let labels = eval.labels.clone().expect("fresh draws are labelled");

    let ensemble = ctx
        .time("train_repeats", || {
            train_repeats(&dataset, &spec, &c.train, c.n_repeats)
        })
        .map_err(run_err)?;

    let profile = prediction_profile(&ensemble, &eval, c.train.tau).map_err(run_err)?;
    let av_plugin = estimate_av(&profile, Mode::Plugin).map_err(run_err)?;
    let av_ustat = if ensemble.n_members() >= 2 {
        Some(estimate_av(&profile, Mode::Ustat).map_err(run_err)?)
    } else {
        None
    };
    let (risk, risk_se) = gibbs_risk(&profile, &labels).map_err(run_err)?;
    let mass_tau = tie_mass(&profile);
    let diagnostic_profile =
        prediction_profile(&ensemble, &eval, c.diagnostic_tau).map_err(run_err)?;
    let mass_diagnostic = tie_mass(&diagnostic_profile);
    let (_, collision) = boundary_entropy(&profile, EntropyKind::Collision);
    let (_, shannon) = boundary_entropy(&profile, EntropyKind::Shannon);

    let theorem1 = verify_theorem1(&profile, &labels).map_err(run_err)?;
    let theorem2 = if profile.k == 2 {
        Some(verify_theorem2(&profile, &labels).map_err(run_err)?)
    } else {
        None
    };

    let summary = json!({
        "tau": c.train.tau,
        "av_plugin": av_plugin,
        "av_ustat": av_ustat,
        "gibbs_risk": {"value": risk, "std_err": risk_se},
        "tie_mass": mass_tau,
        "tie_mass_diagnostic": {"tau": c.diagnostic_tau, "value": mass_diagnostic},
        "entropy_mean": {"collision": collision, "shannon": shannon},
        "theorem1": theorem1,
        "theorem2": theorem2,
        "n_members": ensemble.n_members(),
        "partial": ensemble.is_partial(),
    });
    ctx.write_artifact("av_summary.json", &pretty(&summary)?)
}

fn cmd_curve(c: &CurveExperiment, ctx: &mut RunContext) -> Result<(), CliError> {
    let dataset = make_dataset(&c.data)?;
    let spec = c.model.to_spec()?;
    let eval = eval_sample(&c.data.distribution, c.eval.eval_points, c.eval.eval_seed)?;
    let curve = ctx
        .time("eta_epsilon_curve", || {
            eta_epsilon_curve(&dataset, &spec, &c.train, &c.etas, c.n_repeats, &eval)
        })
        .map_err(run_err)?;

    let mut csv = String::from("eta,epsilon,std_err\n");
    for p in &curve.points {
        writeln!(csv, "{},{},{}", p.eta, p.epsilon, p.std_err).unwrap();
    }
    ctx.write_artifact("curve.csv", &csv)?;

    let summary = json!({
        "auc": curve.auc,
        "anchor_epsilon": (dataset.k - 1) as f64 / dataset.k as f64,
        "failures": curve.failures,
        "n_repeats": c.n_repeats,
    });
    ctx.write_artifact("curve_summary.json", &pretty(&summary)?)
}

fn cmd_bounds(c: &BoundsExperiment, ctx: &mut RunContext) -> Result<(), CliError> {
    let mut report = upper_bound_data(&c.inputs).map_err(run_err)?;
    if let Some(av) = c.av {
        let k = c.k.ok_or_else(|| {
            CliError::Config("the av field requires k (class count) for the lower bounds".into())
        })?;
        report = report.with_av(av, k).map_err(run_err)?;
    }
    ctx.write_artifact("bounds.json", &pretty(&serde_json::to_value(&report).map_err(run_err)?)?)?;

    if let Some(grid) = &c.grid {
        let mut csv =
            String::from("epsilon,eta,m,delta,omega,delta_term,upper_bound,asymptotic_surrogate\n");
        for &epsilon in &grid.epsilons {
            for &eta in &grid.etas {
                for &m in &grid.ms {
                    for &delta in &grid.deltas {
                        let inputs = BoundInputs {
                            epsilon,
                            eta,
                            m,
                            delta,
                        };
                        let r = upper_bound_data(&inputs).map_err(run_err)?;
                        writeln!(
                            csv,
                            "{},{},{},{},{},{},{},{}",
                            epsilon,
                            eta,
                            m,
                            delta,
                            r.omega,
                            r.delta_term,
                            r.upper_bound,
                            r.asymptotic_surrogate
                        )
                        .unwrap();
                    }
                }
            }
        }
        ctx.write_artifact("bounds_sweep.csv", &csv)?;
    }
    Ok(())
}

fn cmd_select(c: &SelectExperiment, ctx: &mut RunContext) -> Result<(), CliError> {
    let dataset = make_dataset(&c.data)?;
    let default_activation = c.activation.unwrap_or(dbvar_core::Activation::Relu);
    let pool: Vec<ModelCandidate> = c
        .pool
        .iter()
        .map(|entry| {
            let activation = entry.activation.unwrap_or(default_activation);
            MlpSpec::new(entry.layer_widths.clone(), activation)
                .map(|spec| ModelCandidate {
                    id: entry.id.clone(),
                    spec,
                    config: c.train.clone(),
                })
                .map_err(|e| CliError::Config(format!("candidate {}: {e}", entry.id)))
        })
        .collect::<Result<_, _>>()?;

    let eval = eval_sample(&c.data.distribution, c.eval.eval_points, c.eval.eval_seed)?.unlabeled();
    let test = eval_sample(&c.data.distribution, c.eval.test_points, c.eval.test_seed)?;

    let report = ctx
        .time("run_selection", || {
            run_selection(&pool, &dataset, c.n_repeats, &eval, &test)
        })
        .map_err(run_err)?;

    let mut csv = String::from("candidate,av,lml,test_acc,train_acc\n");
    for row in &report.rows {
        writeln!(
            csv,
            "{},{},{},{},{}",
            row.id, row.av, row.mean_lml, row.mean_test_acc, row.mean_train_acc
        )
        .unwrap();
    }
    ctx.write_artifact("selection.csv", &csv)?;

    let summary = json!({
        "scc_av_acc": report.scc_av_acc,
        "scc_lml_acc": report.scc_lml_acc,
        "excluded": report.excluded,
        "n_candidates": report.rows.len(),
        "n_repeats": c.n_repeats,
        // the ε estimate from a proxy subset is an upper estimate of the
        // Def.-3 infimum; reports state this for downstream readers
        "notes": "plugin AV over ordered member pairs; LML via diagonal Gauss-Newton Laplace",
    });
    ctx.write_artifact("selection_summary.json", &pretty(&summary)?)
}

type EpochSeries = Vec<(usize, EvaluatedEnsemble)>;

fn checkpointed_series(
    dataset: &Dataset,
    spec: &MlpSpec,
    config: &TrainConfig,
    n_repeats: usize,
    checkpoint_epochs: &[usize],
    eval: &EvalSample,
) -> Result<EpochSeries, CliError> {
    let snapshots = train_with_checkpoints(dataset, spec, config, n_repeats, checkpoint_epochs)
        .map_err(run_err)?;
    snapshots
        .into_iter()
        .map(|(epoch, ens)| Ok((epoch, evaluate_ensemble(&ens, eval, config.tau)?)))
        .collect()
}

fn series_csv(series: &EpochSeries) -> String {
    let mut csv = String::from("epoch,av,av_std_err,test_error,test_error_std_err\n");
    for (epoch, e) in series {
        writeln!(
            csv,
            "{},{},{},{},{}",
            epoch, e.av.value, e.av.std_err, e.test_error, e.test_error_se
        )
        .unwrap();
    }
    csv
}

fn cmd_training_time(c: &TrainingTimeExperiment, ctx: &mut RunContext) -> Result<(), CliError> {
    let dataset = make_dataset(&c.data)?;
    let spec = c.model.to_spec()?;
    let eval = eval_sample(&c.data.distribution, c.eval.eval_points, c.eval.eval_seed)?;
    let rates = if c.learning_rates.is_empty() {
        vec![c.train.lr_init]
    } else {
        c.learning_rates.clone()
    };

    let mut per_lr = Vec::new();
    for &lr in &rates {
        let mut config = c.train.clone();
        config.lr_init = lr;
        let series = ctx.time(&format!("lr_{}", num_tag(lr)), || {
            checkpointed_series(&dataset, &spec, &config, c.n_repeats, &c.checkpoint_epochs, &eval)
        })?;
        ctx.write_artifact(&format!("training_time_lr{}.csv", num_tag(lr)), &series_csv(&series))?;

        let final_eval = &series.last().expect("checkpoints nonempty").1;
        let labels = eval.labels.as_ref().unwrap();
        let theorem1 = verify_theorem1(&final_eval.profile, labels).map_err(run_err)?;
        per_lr.push(json!({
            "lr": lr,
            "first_epoch_av": series.first().unwrap().1.av.value,
            "final_epoch_av": final_eval.av.value,
            "final_epoch_test_error": final_eval.test_error,
            "theorem1_final": theorem1,
        }));
    }
    let summary = json!({"per_lr": per_lr, "checkpoint_epochs": c.checkpoint_epochs});
    ctx.write_artifact("training_time_summary.json", &pretty(&summary)?)
}

fn cmd_sample_size(c: &SampleSizeExperiment, ctx: &mut RunContext) -> Result<(), CliError> {
    let parent = make_dataset(&c.data)?;
    let spec = c.model.to_spec()?;
    let eval = eval_sample(&c.data.distribution, c.eval.eval_points, c.eval.eval_seed)?;

    let mut csv = String::from("m,av,av_std_err,test_error,test_error_std_err\n");
    let mut avs = Vec::new();
    for &m in &c.sizes {
        // nested prefixes of one parent sample, for variance control
        let indices: Vec<usize> = (0..m).collect();
        let nested = subset(&parent, &indices).map_err(run_err)?;
        let ens = ctx
            .time(&format!("m_{m}"), || {
                train_repeats(&nested, &spec, &c.train, c.n_repeats)
            })
            .map_err(run_err)?;
        let e = evaluate_ensemble(&ens, &eval, c.train.tau)?;
        writeln!(
            csv,
            "{},{},{},{},{}",
            m, e.av.value, e.av.std_err, e.test_error, e.test_error_se
        )
        .unwrap();
        avs.push(e.av.value);
    }
    ctx.write_artifact("sample_size.csv", &csv)?;

    let ms: Vec<f64> = c.sizes.iter().map(|&m| m as f64).collect();
    let trend = spearman(&ms, &avs).map_err(run_err)?;
    let summary = json!({"sizes": c.sizes, "av": avs, "scc_m_av": trend});
    ctx.write_artifact("sample_size_summary.json", &pretty(&summary)?)
}

fn cmd_label_noise(c: &LabelNoiseExperiment, ctx: &mut RunContext) -> Result<(), CliError> {
    let clean = make_dataset(&c.data)?;
    let spec = c.model.to_spec()?;
    let noise = NoiseSpec {
        ratio: c.noise_ratio,
        seed: c.noise_seed,
    };
    // the corrupted labels are fixed before any training repeat starts,
    // so every repeat sees identical noise
    let noisy = add_label_noise(&clean, &noise).map_err(run_err)?;
    let mut flipped: Vec<usize> = clean
        .ys
        .iter()
        .zip(noisy.ys.iter())
        .enumerate()
        .filter(|(_, (a, b))| a != b)
        .map(|(i, _)| i)
        .collect();
    flipped.sort_unstable();

    let eval = eval_sample(&c.data.distribution, c.eval.eval_points, c.eval.eval_seed)?;
    let series = ctx.time("checkpointed_series", || {
        checkpointed_series(&noisy, &spec, &c.train, c.n_repeats, &c.checkpoint_epochs, &eval)
    })?;
    ctx.write_artifact("label_noise.csv", &series_csv(&series))?;

    let summary = json!({
        "noise_ratio": c.noise_ratio,
        "noise_seed": c.noise_seed,
        "n_flipped": flipped.len(),
        "final_epoch_av": series.last().unwrap().1.av.value,
        "checkpoint_epochs": c.checkpoint_epochs,
    });
    ctx.write_artifact("label_noise_summary.json", &pretty(&summary)?)?;
    ctx.set_extra(json!({ "noise_indices": flipped }));
    Ok(())
}

fn cmd_eta_eps(c: &EtaEpsExperiment, ctx: &mut RunContext) -> Result<(), CliError> {
    let parent = make_dataset(&c.data)?;
    let spec = c.model.to_spec()?;
    let eval = eval_sample(&c.data.distribution, c.eval.eval_points, c.eval.eval_seed)?;

    let mut auc_csv = String::from("m,auc\n");
    let mut summaries = Vec::new();
    for (idx, &m) in c.m_values.iter().enumerate() {
        let indices: Vec<usize> = (0..m).collect();
        let nested = subset(&parent, &indices).map_err(run_err)?;
        let mut config = c.train.clone();
        config.seed_base = c.train.seed_base + 1_000_000 * (idx as u64 + 1);
        let curve = ctx
            .time(&format!("curve_m_{m}"), || {
                eta_epsilon_curve(&nested, &spec, &config, &c.etas, c.n_repeats, &eval)
            })
            .map_err(run_err)?;

        let mut csv = String::from("eta,epsilon,std_err\n");
        for p in &curve.points {
            writeln!(csv, "{},{},{}", p.eta, p.epsilon, p.std_err).unwrap();
        }
        ctx.write_artifact(&format!("eta_eps_m{m}.csv"), &csv)?;
        writeln!(auc_csv, "{},{}", m, curve.auc).unwrap();
        summaries.push(json!({"m": m, "auc": curve.auc, "failures": curve.failures}));
    }
    ctx.write_artifact("eta_eps_auc.csv", &auc_csv)?;
    let summary = json!({
        "per_m": summaries,
        "anchor_epsilon": (parent.k - 1) as f64 / parent.k as f64,
    });
    ctx.write_artifact("eta_eps_summary.json", &pretty(&summary)?)
}

fn pretty(value: &serde_json::Value) -> Result<String, CliError> {
    serde_json::to_string_pretty(value).map_err(|e| CliError::Run(anyhow::anyhow!("{e}")))
}
