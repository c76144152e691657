//! Decision-boundary variability estimators.
//!
//! Everything here is computed from a *prediction profile*: the matrix of
//! tie sets `T(f_θ, x)` over ensemble members θ and evaluation points x.
//!
//! ## Algorithm DB variability
//!
//! For a posterior ℚ over parameters,
//!
//! ```text
//! AV = E_x E_{θ,θ'~ℚ} [ 𝕀( T(f_θ, x) ≠ T(f_θ', x) ) ]
//! ```
//!
//! Two estimators over a finite ensemble of r members:
//!
//! - `plugin`: average over all r² ordered pairs including (i, i). This is
//!   the exact value of the definition for the empirical atomic posterior,
//!   which makes the lower-bound checks deterministic identities.
//! - `ustat`: average over the r(r−1)/2 unordered distinct pairs; unbiased
//!   for an underlying continuous posterior.
//!
//! ## Data DB variability
//!
//! The cross disagreement between models trained on S and on an η-subset:
//!
//! ```text
//! ε(η) = E_x E_{θ~𝒜(S), θ'~𝒜(S_η)} [ 𝕀( T ≠ T' ) ]
//! ```
//!
//! The infimum over η-subsets is intractable, so the subset is chosen by a
//! margin-based proxy ranking; the resulting ε is an upper estimate, which
//! is conservative for the upper generalization bound (monotone in ε).
//!
//! Tie sets are compared by set equality throughout, and reported standard
//! errors are point-level standard errors of the pair-averaged disagreement.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{sample, subset, Dataset, GeneratingDistribution};
use crate::error::{Error, Result};
use crate::fingerprint::Fingerprinter;
use crate::nn::{forward, tie_set, MlpSpec, TieSet};
use crate::train::{train_one_inner, train_repeats, Ensemble, TrainConfig};

/// Points (optionally labelled) over which expectations are taken.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSample {
    pub points: Vec<Vec<f64>>,
    pub labels: Option<Vec<usize>>,
    pub seed: Option<u64>,
    /// Description of the distribution the points were drawn from.
    pub source: String,
}

impl EvalSample {
    /// Fresh labelled draw from a generating distribution.
    pub fn from_distribution(
        dist: &GeneratingDistribution,
        n_points: usize,
        seed: u64,
    ) -> Result<EvalSample> {
        let data = sample(dist, n_points, seed)?;
        Ok(EvalSample {
            points: data.xs,
            labels: Some(data.ys),
            seed: Some(seed),
            source: dist.describe(),
        })
    }

    pub fn from_dataset(dataset: &Dataset) -> EvalSample {
        EvalSample {
            points: dataset.xs.clone(),
            labels: Some(dataset.ys.clone()),
            seed: dataset.provenance.seed,
            source: dataset.provenance.source.clone(),
        }
    }

    /// Drops labels (algorithm DB variability does not need them).
    pub fn unlabeled(mut self) -> EvalSample {
        self.labels = None;
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn fingerprint(&self) -> String {
        let mut fp = Fingerprinter::new("eval-sample");
        fp.push_u64(self.len() as u64);
        for p in &self.points {
            fp.push_f64s(p);
        }
        fp.finish()
    }
}

/// Tie sets of every ensemble member at every evaluation point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionProfile {
    pub k: usize,
    pub tau: f64,
    /// `cells[member][point]`.
    pub cells: Vec<Vec<TieSet>>,
    /// Fingerprint of the evaluation points the profile was built on.
    pub eval_fingerprint: String,
}

impl PredictionProfile {
    pub fn n_members(&self) -> usize {
        self.cells.len()
    }

    pub fn n_points(&self) -> usize {
        self.cells.first().map_or(0, Vec::len)
    }

    /// Test/diagnostic constructor from raw tie sets.
    pub fn from_cells(k: usize, tau: f64, cells: Vec<Vec<TieSet>>) -> Result<Self> {
        let n_points = cells.first().map_or(0, Vec::len);
        if cells.iter().any(|row| row.len() != n_points) {
            return Err(Error::contract("ragged profile"));
        }
        let mut fp = Fingerprinter::new("synthetic-profile");
        fp.push_u64(n_points as u64);
        Ok(PredictionProfile {
            k,
            tau,
            cells,
            eval_fingerprint: fp.finish(),
        })
    }
}

/// Evaluates `tie_set(forward(member, point), tau)` for every pair.
pub fn prediction_profile(
    ensemble: &Ensemble,
    eval_sample: &EvalSample,
    tau: f64,
) -> Result<PredictionProfile> {
    if eval_sample.is_empty() {
        return Err(Error::contract("evaluation sample is empty"));
    }
    if eval_sample.points[0].len() != ensemble.spec.input_dim() {
        return Err(Error::contract(
            "evaluation points do not match the model input dim",
        ));
    }
    let spec = &ensemble.spec;
    let cells: Result<Vec<Vec<TieSet>>> = ensemble
        .members
        .par_iter()
        .map(|member| {
            eval_sample
                .points
                .iter()
                .map(|x| Ok(tie_set(&forward(spec, &member.params, x)?.logits, tau)))
                .collect()
        })
        .collect();
    Ok(PredictionProfile {
        k: spec.n_classes(),
        tau,
        cells: cells?,
        eval_fingerprint: eval_sample.fingerprint(),
    })
}

/// Estimator flavour; see the module docs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Plugin,
    Ustat,
    /// All pairs across two different ensembles.
    Cross,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariabilityEstimate {
    pub value: f64,
    pub std_err: f64,
    pub n_points: usize,
    pub n_model_pairs: usize,
    pub mode: Mode,
}

/// Run-length counts of equal tie sets within one profile column.
fn column_counts<'a>(cells: &'a [Vec<TieSet>], point: usize) -> Vec<(&'a TieSet, usize)> {
    let mut column: Vec<&TieSet> = cells.iter().map(|row| &row[point]).collect();
    column.sort_unstable();
    let mut counts: Vec<(&TieSet, usize)> = Vec::new();
    for t in column {
        match counts.last_mut() {
            Some((prev, c)) if *prev == t => *c += 1,
            _ => counts.push((t, 1)),
        }
    }
    counts
}

fn mean_and_se(per_point: &[f64]) -> (f64, f64) {
    let n = per_point.len();
    let mean = per_point.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = per_point.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Algorithm DB variability of one ensemble against itself.
pub fn estimate_av(profile: &PredictionProfile, mode: Mode) -> Result<VariabilityEstimate> {
    let r = profile.n_members();
    let n_points = profile.n_points();
    if r == 0 || n_points == 0 {
        return Err(Error::contract("empty profile"));
    }
    let (min_members, pairs) = match mode {
        Mode::Plugin => (1, r * r),
        Mode::Ustat => (2, r * (r - 1) / 2),
        Mode::Cross => {
            return Err(Error::contract(
                "cross mode is produced by estimate_disagreement",
            ))
        }
    };
    if r < min_members {
        return Err(Error::contract("ustat mode needs at least 2 members"));
    }
    // Per point: number of agreeing ordered pairs is Σ c_s² over the counts
    // of identical tie sets, so disagreeing ordered pairs are r² − Σ c_s².
    let per_point: Vec<f64> = (0..n_points)
        .map(|p| {
            let same_sq: usize = column_counts(&profile.cells, p)
                .iter()
                .map(|(_, c)| c * c)
                .sum();
            match mode {
                Mode::Plugin => (r * r - same_sq) as f64 / (r * r) as f64,
                Mode::Ustat => ((r * r - same_sq) / 2) as f64 / pairs as f64,
                Mode::Cross => unreachable!(),
            }
        })
        .collect();
    let (value, std_err) = mean_and_se(&per_point);
    Ok(VariabilityEstimate {
        value,
        std_err,
        n_points,
        n_model_pairs: pairs,
        mode,
    })
}

/// Cross disagreement between two ensembles sharing the evaluation points.
///
/// This is the data DB variability estimator when `a` is trained on S and
/// `b` on an η-subset.
pub fn estimate_disagreement(
    a: &PredictionProfile,
    b: &PredictionProfile,
) -> Result<VariabilityEstimate> {
    if a.eval_fingerprint != b.eval_fingerprint {
        return Err(Error::contract("profiles built on different eval samples"));
    }
    if a.tau != b.tau || a.k != b.k {
        return Err(Error::contract("profiles built with different tau or k"));
    }
    let (ra, rb) = (a.n_members(), b.n_members());
    let n_points = a.n_points();
    if ra == 0 || rb == 0 || n_points == 0 {
        return Err(Error::contract("empty profile"));
    }
    let pairs = ra * rb;
    let per_point: Vec<f64> = (0..n_points)
        .map(|p| {
            let ca = column_counts(&a.cells, p);
            let cb = column_counts(&b.cells, p);
            // both count lists are sorted by tie set; merge to count agreements
            let mut agree = 0usize;
            let (mut i, mut j) = (0, 0);
            while i < ca.len() && j < cb.len() {
                match ca[i].0.cmp(cb[j].0) {
                    std::cmp::Ordering::Equal => {
                        agree += ca[i].1 * cb[j].1;
                        i += 1;
                        j += 1;
                    }
                    std::cmp::Ordering::Less => i += 1,
                    std::cmp::Ordering::Greater => j += 1,
                }
            }
            (pairs - agree) as f64 / pairs as f64
        })
        .collect();
    let (value, std_err) = mean_and_se(&per_point);
    Ok(VariabilityEstimate {
        value,
        std_err,
        n_points,
        n_model_pairs: pairs,
        mode: Mode::Cross,
    })
}

/// Gibbs 0-1 risk: mean over members and points of `𝕀(y ∉ T(f_θ, x))`.
///
/// A label inside a non-singleton tie set counts as correct under the
/// literal indicator; [`tie_mass`] reports how often that happens.
pub fn gibbs_risk(profile: &PredictionProfile, labels: &[usize]) -> Result<(f64, f64)> {
    if labels.len() != profile.n_points() {
        return Err(Error::contract("labels do not align with the profile"));
    }
    let r = profile.n_members();
    if r == 0 || profile.n_points() == 0 {
        return Err(Error::contract("empty profile"));
    }
    let per_point: Vec<f64> = labels
        .iter()
        .enumerate()
        .map(|(p, &y)| {
            let wrong = profile
                .cells
                .iter()
                .filter(|row| !row[p].contains(y))
                .count();
            wrong as f64 / r as f64
        })
        .collect();
    Ok(mean_and_se(&per_point))
}

/// Fraction of (member, point) cells whose tie set is non-singleton.
///
/// The checkable surrogate for the measure-zero-boundary assumption: the
/// deterministic lower-bound identities require this to be 0.
pub fn tie_mass(profile: &PredictionProfile) -> f64 {
    let cells = profile.n_members() * profile.n_points();
    if cells == 0 {
        return 0.0;
    }
    let tied: usize = profile
        .cells
        .iter()
        .map(|row| row.iter().filter(|t| t.is_tie()).count())
        .sum();
    tied as f64 / cells as f64
}

/// Epochs over which the proxy margin is averaged.
const MARGIN_WINDOW: usize = 10;

/// Margin-based importance ranking of training examples.
///
/// Trains one proxy model and scores each example by the margin of the true
/// class (true-class logit minus best other logit), averaged over the last
/// `min(10, epochs)` epochs. Ascending order: hardest (smallest-margin)
/// examples first.
pub fn rank_examples_proxy(
    dataset: &Dataset,
    proxy_spec: &MlpSpec,
    proxy_config: &TrainConfig,
) -> Result<Vec<usize>> {
    if dataset.is_empty() {
        return Err(Error::contract("dataset is empty"));
    }
    let window = MARGIN_WINDOW.min(proxy_config.epochs);
    let snap_epochs: Vec<usize> =
        (proxy_config.epochs - window + 1..=proxy_config.epochs).collect();
    let (_, _, snapshots) = train_one_inner(
        dataset,
        proxy_spec,
        proxy_config,
        proxy_config.seed_base,
        &snap_epochs,
    )?;

    let mut margins = vec![0.0f64; dataset.len()];
    for (_, params) in &snapshots {
        for (i, (x, y)) in dataset.examples().enumerate() {
            let logits = forward(proxy_spec, params, x)?.logits;
            let best_other = logits
                .iter()
                .enumerate()
                .filter(|&(c, _)| c != y)
                .map(|(_, &z)| z)
                .fold(f64::NEG_INFINITY, f64::max);
            margins[i] += (logits[y] - best_other) / window as f64;
        }
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.sort_by(|&a, &b| {
        margins[a]
            .partial_cmp(&margins[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    Ok(order)
}

/// The first `⌈eta·m⌉` examples of `ranking`, as a dataset.
pub fn eta_subset(dataset: &Dataset, ranking: &[usize], eta: f64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::contract("eta must be in [0,1]"));
    }
    if ranking.len() != dataset.len() {
        return Err(Error::contract("ranking must cover the whole dataset"));
    }
    let take = (eta * dataset.len() as f64).ceil() as usize;
    subset(dataset, &ranking[..take.min(ranking.len())])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaEpsilonPoint {
    pub eta: f64,
    pub epsilon: f64,
    pub std_err: f64,
}

/// The η-ε curve: reconstruction error against subset fraction, with the
/// area under the curve anchored at the analytic point `(0, (k−1)/k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaEpsilonCurve {
    pub points: Vec<EtaEpsilonPoint>,
    pub auc: f64,
    /// Etas whose subset training aborted, with the diagnostic.
    pub failures: Vec<(f64, String)>,
}

/// Trapezoid rule over the anchored curve.
fn curve_auc(k: usize, points: &[EtaEpsilonPoint]) -> f64 {
    let anchor = (k - 1) as f64 / k as f64;
    let mut prev = (0.0, anchor);
    let mut auc = 0.0;
    for p in points {
        auc += (p.eta - prev.0) * (p.epsilon + prev.1) / 2.0;
        prev = (p.eta, p.epsilon);
    }
    auc
}

/// Single hidden layer proxy used by [`eta_epsilon_curve`] for ranking.
pub fn default_proxy_spec(input_dim: usize, k: usize) -> MlpSpec {
    MlpSpec::new(vec![input_dim, 8, k], crate::nn::Activation::Relu)
        .expect("proxy spec is valid")
}

/// Estimates the η-ε curve of data DB variability.
///
/// Trains a reference ensemble on the full set and, for each η, an ensemble
/// (with its own seed stream) on the proxy-ranked η-subset. ε(η) is the
/// cross disagreement against the reference.
pub fn eta_epsilon_curve(
    dataset: &Dataset,
    spec: &MlpSpec,
    config: &TrainConfig,
    etas: &[f64],
    n_repeats: usize,
    eval_sample: &EvalSample,
) -> Result<EtaEpsilonCurve> {
    if etas.is_empty() {
        return Err(Error::contract("need at least one eta"));
    }
    if etas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::contract("etas must be strictly increasing"));
    }
    if etas[0] <= 0.0 || *etas.last().unwrap() > 1.0 {
        return Err(Error::contract("etas must lie in (0, 1]"));
    }

    let reference = train_repeats(dataset, spec, config, n_repeats)?;
    let profile_ref = prediction_profile(&reference, eval_sample, config.tau)?;

    let proxy_spec = default_proxy_spec(dataset.input_dim(), dataset.k);
    let mut proxy_config = config.clone();
    proxy_config.epochs = config.epochs.min(30);
    proxy_config.seed_base = config.seed_base.wrapping_add(77_777);
    let ranking = rank_examples_proxy(dataset, &proxy_spec, &proxy_config)?;

    let mut points = Vec::with_capacity(etas.len());
    let mut failures = Vec::new();
    for (j, &eta) in etas.iter().enumerate() {
        let s_eta = eta_subset(dataset, &ranking, eta)?;
        let mut cfg = config.clone();
        cfg.seed_base = config.seed_base.wrapping_add(10_000 * (j as u64 + 1));
        match train_repeats(&s_eta, spec, &cfg, n_repeats)
            .and_then(|ens| prediction_profile(&ens, eval_sample, config.tau))
            .and_then(|profile| estimate_disagreement(&profile_ref, &profile))
        {
            Ok(est) => points.push(EtaEpsilonPoint {
                eta,
                epsilon: est.value,
                std_err: est.std_err,
            }),
            Err(e) => failures.push((eta, e.to_string())),
        }
    }
    let auc = curve_auc(dataset.k, &points);
    Ok(EtaEpsilonCurve {
        points,
        auc,
        failures,
    })
}

/// Entropy flavour for [`boundary_entropy`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntropyKind {
    /// −log Σ qᵢ²
    Collision,
    /// −Σ qᵢ log qᵢ
    Shannon,
}

/// Per-point prediction entropy of the ensemble (natural log).
///
/// `qᵢ` is the fraction of members predicting class i; a member whose tie
/// set has |T| classes contributes 1/|T| to each of them. Returns the
/// per-point entropies and their mean.
pub fn boundary_entropy(profile: &PredictionProfile, kind: EntropyKind) -> (Vec<f64>, f64) {
    let r = profile.n_members();
    let n_points = profile.n_points();
    let mut per_point = Vec::with_capacity(n_points);
    for p in 0..n_points {
        let mut q = vec![0.0f64; profile.k];
        for row in &profile.cells {
            let t = &row[p];
            let w = 1.0 / (t.len() as f64 * r as f64);
            for &c in t.classes() {
                q[c as usize] += w;
            }
        }
        let h = match kind {
            EntropyKind::Collision => -q.iter().map(|&v| v * v).sum::<f64>().ln(),
            EntropyKind::Shannon => -q
                .iter()
                .filter(|&&v| v > 0.0)
                .map(|&v| v * v.ln())
                .sum::<f64>(),
        };
        per_point.push(h);
    }
    let mean = if per_point.is_empty() {
        0.0
    } else {
        per_point.iter().sum::<f64>() / n_points as f64
    };
    (per_point, mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::TieSet;

    fn single(c: u32) -> TieSet {
        TieSet::from_classes(vec![c])
    }

    fn profile(k: usize, rows: Vec<Vec<u32>>) -> PredictionProfile {
        let cells = rows
            .into_iter()
            .map(|row| row.into_iter().map(single).collect())
            .collect();
        PredictionProfile::from_cells(k, 0.0, cells).unwrap()
    }

    #[test]
    fn identical_members_have_zero_av() {
        let p = profile(3, vec![vec![0, 1, 2], vec![0, 1, 2], vec![0, 1, 2]]);
        assert_eq!(estimate_av(&p, Mode::Plugin).unwrap().value, 0.0);
        assert_eq!(estimate_av(&p, Mode::Ustat).unwrap().value, 0.0);
    }

    #[test]
    fn two_member_modes_differ_as_expected() {
        // 2 members disagreeing on 2 of 5 points: plugin 0.4·(2/4)=0.2, ustat 0.4
        let p = profile(2, vec![vec![0, 0, 0, 1, 1], vec![1, 1, 0, 1, 1]]);
        let plugin = estimate_av(&p, Mode::Plugin).unwrap();
        let ustat = estimate_av(&p, Mode::Ustat).unwrap();
        assert!((plugin.value - 0.2).abs() < 1e-15);
        assert!((ustat.value - 0.4).abs() < 1e-15);
        assert_eq!(plugin.n_model_pairs, 4);
        assert_eq!(ustat.n_model_pairs, 1);
    }

    #[test]
    fn ustat_needs_two_members() {
        let p = profile(2, vec![vec![0, 1]]);
        assert!(estimate_av(&p, Mode::Ustat).is_err());
        assert_eq!(estimate_av(&p, Mode::Plugin).unwrap().value, 0.0);
    }

    #[test]
    fn tie_sets_compared_as_sets() {
        let tie = TieSet::from_classes(vec![1, 0]);
        let cells = vec![
            vec![TieSet::from_classes(vec![0, 1])],
            vec![tie],
            vec![single(0)],
        ];
        let p = PredictionProfile::from_cells(2, 0.0, cells).unwrap();
        // pairs: (tie,tie) agree; (tie,single0) ×2 disagree, ordered → 4 of 9
        let av = estimate_av(&p, Mode::Plugin).unwrap().value;
        assert!((av - 4.0 / 9.0).abs() < 1e-15);
        assert!((tie_mass(&p) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn disagreement_of_constant_ensembles() {
        let a = profile(2, vec![vec![0, 0, 0], vec![0, 0, 0]]);
        let b = profile(2, vec![vec![1, 1, 1], vec![1, 1, 1]]);
        assert_eq!(estimate_disagreement(&a, &b).unwrap().value, 1.0);
    }

    #[test]
    fn self_disagreement_equals_plugin_av() {
        let p = profile(3, vec![vec![0, 1, 2, 0], vec![1, 1, 2, 0], vec![0, 2, 2, 0]]);
        let plugin = estimate_av(&p, Mode::Plugin).unwrap();
        let cross = estimate_disagreement(&p, &p).unwrap();
        assert_eq!(plugin.value, cross.value);
    }

    #[test]
    fn disagreement_requires_matching_eval() {
        let a = profile(2, vec![vec![0, 1]]);
        let mut b = profile(2, vec![vec![0, 1]]);
        b.eval_fingerprint = "other".into();
        assert!(estimate_disagreement(&a, &b).is_err());
    }

    #[test]
    fn gibbs_risk_enumerated() {
        // member 2 wrong on one of two points → 1 of 4 cells wrong
        let p = profile(2, vec![vec![0, 1], vec![0, 0]]);
        let (risk, _) = gibbs_risk(&p, &[0, 1]).unwrap();
        assert!((risk - 0.25).abs() < 1e-15);
        let (perfect, _) = gibbs_risk(&profile(2, vec![vec![0, 1]]), &[0, 1]).unwrap();
        assert_eq!(perfect, 0.0);
    }

    #[test]
    fn full_tie_counts_correct_but_shows_in_tie_mass() {
        let full = TieSet::from_classes(vec![0, 1, 2]);
        let cells = vec![vec![full.clone(), full.clone()]];
        let p = PredictionProfile::from_cells(3, 0.0, cells).unwrap();
        let (risk, _) = gibbs_risk(&p, &[2, 0]).unwrap();
        assert_eq!(risk, 0.0);
        assert_eq!(tie_mass(&p), 1.0);
    }

    #[test]
    fn entropy_examples() {
        // all members predict class 2 → 0 entropy
        let p = profile(4, vec![vec![2], vec![2], vec![2]]);
        let (_, coll) = boundary_entropy(&p, EntropyKind::Collision);
        let (_, shan) = boundary_entropy(&p, EntropyKind::Shannon);
        assert!(coll.abs() < 1e-12 && shan.abs() < 1e-12);

        // uniform over 4 classes
        let p = profile(4, vec![vec![0], vec![1], vec![2], vec![3]]);
        let (_, coll) = boundary_entropy(&p, EntropyKind::Collision);
        let (_, shan) = boundary_entropy(&p, EntropyKind::Shannon);
        assert!((coll - 4.0_f64.ln()).abs() < 1e-12);
        assert!((shan - 4.0_f64.ln()).abs() < 1e-12);

        // q = (1/2, 1/2, 0, 0)
        let p = profile(4, vec![vec![0], vec![1]]);
        let (_, coll) = boundary_entropy(&p, EntropyKind::Collision);
        let (_, shan) = boundary_entropy(&p, EntropyKind::Shannon);
        assert!((coll - 2.0_f64.ln()).abs() < 1e-12);
        assert!((shan - 2.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn auc_of_constant_binary_curve() {
        let pts: Vec<EtaEpsilonPoint> = (1..=10)
            .map(|i| EtaEpsilonPoint {
                eta: i as f64 / 10.0,
                epsilon: 0.5,
                std_err: 0.0,
            })
            .collect();
        assert!((curve_auc(2, &pts) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn auc_hand_value() {
        // anchor (0, 0.5), then (0.5, 0.3), (1.0, 0.1):
        // 0.5·(0.5+0.3)/2 + 0.5·(0.3+0.1)/2 = 0.2 + 0.1 = 0.3
        let pts = vec![
            EtaEpsilonPoint {
                eta: 0.5,
                epsilon: 0.3,
                std_err: 0.0,
            },
            EtaEpsilonPoint {
                eta: 1.0,
                epsilon: 0.1,
                std_err: 0.0,
            },
        ];
        assert!((curve_auc(2, &pts) - 0.3).abs() < 1e-12);
    }
}
