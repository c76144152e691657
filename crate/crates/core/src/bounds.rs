//! Generalization bounds driven by decision-boundary variability, plus
//! empirical verifiers that check them against measured ensembles.
//!
//! Lower bounds (from algorithm DB variability `AV`):
//!
//! ```text
//! R ≥ 1 − √(1 − AV)                    (multiclass)
//! R ≥ (1 − √(1 − 2·AV)) / 2            (binary, valid for R ≤ 1/2)
//! ```
//!
//! Both follow from the proof-chain inequalities `AV ≤ 2R − R²` and (binary)
//! `AV ≤ 2R(1 − R)`, which hold *deterministically* for the plug-in
//! estimator on any tie-free prediction profile — the verifiers exploit
//! this and treat violations as bugs, not noise.
//!
//! Upper bound (from (ε, η)-data DB variability, η ≤ 0.5):
//!
//! ```text
//! R ≤ Ω + √(4ΩΔ) + 8Δ + ε
//! Ω = ε + √( ln(1/δ) / (2(1−η)m) )
//! Δ = η·ln(e/η) + ln(2/δ)/m
//! ```
//!
//! with the asymptotic surrogate `1/√m + ε + η·ln(1/η)` reported alongside.
//! All logarithms are natural (Δ contains e inside the log). Vacuous values
//! (> 1) are reported as-is, never clipped.

use serde::{Deserialize, Serialize};

use crate::data::{subset, Dataset};
use crate::error::{Error, Result};
use crate::variability::{
    estimate_av, estimate_disagreement, gibbs_risk, tie_mass, EvalSample, Mode,
    PredictionProfile,
};

/// Identities computed in f64 are allowed this much rounding noise.
const IDENTITY_TOL: f64 = 1e-12;

/// Inputs of the data-DB-variability upper bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub epsilon: f64,
    pub eta: f64,
    pub m: u64,
    pub delta: f64,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Domain("epsilon must be in [0,1]".into()));
        }
        if !(self.eta > 0.0 && self.eta <= 0.5) {
            return Err(Error::Domain("eta must be in (0, 0.5]".into()));
        }
        if self.m == 0 {
            return Err(Error::Domain("m must be >= 1".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Domain("delta must be in (0,1)".into()));
        }
        Ok(())
    }
}

/// `R ≥ 1 − √(1 − av)`.
pub fn lower_bound_multiclass(av: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&av) {
        return Err(Error::contract("av must be in [0,1]"));
    }
    Ok(1.0 - (1.0 - av).sqrt())
}

/// `R ≥ (1 − √(1 − 2·av)) / 2`; the radicand requires `av ≤ 0.5`.
pub fn lower_bound_binary(av: f64) -> Result<f64> {
    if !(0.0..=0.5).contains(&av) {
        return Err(Error::Domain("binary lower bound needs av in [0, 0.5]".into()));
    }
    Ok((1.0 - (1.0 - 2.0 * av).sqrt()) / 2.0)
}

fn omega_value(epsilon: f64, eta: f64, m: u64, delta: f64) -> f64 {
    epsilon + ((1.0 / delta).ln() / (2.0 * (1.0 - eta) * m as f64)).sqrt()
}

/// `Ω = ε + √( ln(1/δ) / (2(1−η)m) )`.
pub fn omega(inputs: &BoundInputs) -> Result<f64> {
    inputs.validate()?;
    Ok(omega_value(
        inputs.epsilon,
        inputs.eta,
        inputs.m,
        inputs.delta,
    ))
}

/// `Δ = η·ln(e/η) + ln(2/δ)/m`.
///
/// `eta = 0` returns the limit value `ln(2/δ)/m` with the flag set
/// (η·ln(e/η) → 0).
pub fn delta_term(eta: f64, m: u64, delta: f64) -> Result<(f64, bool)> {
    if m == 0 {
        return Err(Error::Domain("m must be >= 1".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain("delta must be in (0,1)".into()));
    }
    if !(0.0..=0.5).contains(&eta) {
        return Err(Error::Domain("eta must be in [0, 0.5]".into()));
    }
    let tail = (2.0 / delta).ln() / m as f64;
    if eta == 0.0 {
        return Ok((tail, true));
    }
    Ok((eta * (std::f64::consts::E / eta).ln() + tail, false))
}

/// Everything the upper bound produces, ready for JSON reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub inputs: BoundInputs,
    pub omega: f64,
    pub delta_term: f64,
    /// `Ω + √(4ΩΔ) + 8Δ + ε`; may exceed 1 and is reported unclipped.
    pub upper_bound: f64,
    /// `1/√m + ε + η·ln(1/η)`, the large-m trend surrogate.
    pub asymptotic_surrogate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower_bound_multiclass: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower_bound_binary: Option<f64>,
    /// Confidence bookkeeping: the statement-level δ this report uses.
    pub delta_report: f64,
}

/// Evaluates the Theorem-3 upper bound.
pub fn upper_bound_data(inputs: &BoundInputs) -> Result<BoundReport> {
    inputs.validate()?;
    let om = omega_value(inputs.epsilon, inputs.eta, inputs.m, inputs.delta);
    let (dt, _) = delta_term(inputs.eta, inputs.m, inputs.delta)?;
    let upper = om + (4.0 * om * dt).sqrt() + 8.0 * dt + inputs.epsilon;
    let asymptotic = 1.0 / (inputs.m as f64).sqrt()
        + inputs.epsilon
        + inputs.eta * (1.0 / inputs.eta).ln();
    Ok(BoundReport {
        inputs: *inputs,
        omega: om,
        delta_term: dt,
        upper_bound: upper,
        asymptotic_surrogate: asymptotic,
        lower_bound_multiclass: None,
        lower_bound_binary: None,
        delta_report: inputs.delta,
    })
}

impl BoundReport {
    /// Attaches the AV-based lower bounds (binary one only when defined).
    pub fn with_av(mut self, av: f64, k: usize) -> Result<Self> {
        self.lower_bound_multiclass = Some(lower_bound_multiclass(av)?);
        self.lower_bound_binary = if k == 2 && av <= 0.5 {
            Some(lower_bound_binary(av)?)
        } else {
            None
        };
        Ok(self)
    }
}

/// Outcome of an inequality check on measured quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub holds: bool,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs − lhs`; negative iff the inequality failed.
    pub slack: f64,
    /// True when the tie-free precondition did not hold, so the check is
    /// only conditionally meaningful.
    pub conditional: bool,
}

fn verdict(lhs: f64, rhs: f64, conditional: bool) -> Verdict {
    Verdict {
        holds: lhs <= rhs + IDENTITY_TOL,
        lhs,
        rhs,
        slack: rhs - lhs,
        conditional,
    }
}

/// Checks the multiclass proof-chain identity `AV ≤ 2R − R²` on a shared
/// profile. Exact (up to f64 rounding) whenever the profile is tie-free.
pub fn verify_theorem1(profile: &PredictionProfile, labels: &[usize]) -> Result<Verdict> {
    let av = estimate_av(profile, Mode::Plugin)?.value;
    let (risk, _) = gibbs_risk(profile, labels)?;
    let conditional = tie_mass(profile) > 0.0;
    Ok(verdict(av, 2.0 * risk - risk * risk, conditional))
}

/// Binary-case verdicts: the variability side and (when `R ≤ 1/2`) the
/// risk side of the same inequality chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Verdict {
    pub holds: bool,
    pub conditional: bool,
    pub av: f64,
    pub risk: f64,
    /// `AV ≤ 2R(1 − R)`.
    pub av_upper: Verdict,
    /// `R ≥ (1 − √(1 − 2AV))/2`, checked when `R ≤ 1/2`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub risk_lower: Option<Verdict>,
}

/// Checks the binary identities; the profile must have k = 2.
pub fn verify_theorem2(profile: &PredictionProfile, labels: &[usize]) -> Result<Theorem2Verdict> {
    if profile.k != 2 {
        return Err(Error::contract("theorem 2 requires a binary profile"));
    }
    let av = estimate_av(profile, Mode::Plugin)?.value;
    let (risk, _) = gibbs_risk(profile, labels)?;
    let conditional = tie_mass(profile) > 0.0;
    let av_upper = verdict(av, 2.0 * risk * (1.0 - risk), conditional);
    let risk_lower = if risk <= 0.5 {
        // pointwise AV ≤ 2q(1−q) caps the plug-in AV at 1/2; clamp rounding
        let lb = lower_bound_binary(av.min(0.5))?;
        Some(verdict(lb, risk, conditional))
    } else {
        None
    };
    Ok(Theorem2Verdict {
        holds: av_upper.holds && risk_lower.map_or(true, |v| v.holds),
        conditional,
        av,
        risk,
        av_upper,
        risk_lower,
    })
}

/// Checks `|R(ensemble_S) − R(ensemble_{S_η})| ≤ ε̂` on matched profiles —
/// a pointwise-indicator identity, tie sets or not.
pub fn verify_lemma_riskdiff(
    profile_s: &PredictionProfile,
    profile_eta: &PredictionProfile,
    labels: &[usize],
) -> Result<Verdict> {
    let (risk_s, _) = gibbs_risk(profile_s, labels)?;
    let (risk_eta, _) = gibbs_risk(profile_eta, labels)?;
    let epsilon_hat = estimate_disagreement(profile_s, profile_eta)?.value;
    Ok(verdict((risk_s - risk_eta).abs(), epsilon_hat, false))
}

/// Checks the complement-set bound: the Gibbs risk of the η-subset ensemble
/// on `S ∖ S_η` against `Ω(ε̂, η, m, δ)`.
///
/// Statistical, not an identity: the underlying assumption can fail, and a
/// false verdict here is a measurement, not a bug. `epsilon_hat` should be
/// the cross disagreement measured on a fresh sample from the generating
/// distribution, and `subset_indices` must identify `S_η` inside `full`.
pub fn verify_lemma_complement(
    full: &Dataset,
    subset_indices: &[usize],
    ensemble_eta: &crate::train::Ensemble,
    delta: f64,
    epsilon_hat: f64,
) -> Result<Verdict> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain("delta must be in (0,1)".into()));
    }
    let m = full.len();
    let mut in_subset = vec![false; m];
    for &i in subset_indices {
        if i >= m {
            return Err(Error::contract("subset index out of range"));
        }
        in_subset[i] = true;
    }
    let complement: Vec<usize> = (0..m).filter(|&i| !in_subset[i]).collect();
    if complement.is_empty() {
        return Err(Error::contract("complement set is empty"));
    }
    let complement_set = subset(full, &complement)?;
    let eval = EvalSample::from_dataset(&complement_set);
    let profile = crate::variability::prediction_profile(
        ensemble_eta,
        &eval,
        ensemble_eta.config.tau,
    )?;
    let labels = eval.labels.as_ref().expect("dataset-backed sample is labelled");
    let (risk, _) = gibbs_risk(&profile, labels)?;
    let eta = subset_indices.len() as f64 / m as f64;
    let rhs = omega_value(epsilon_hat, eta, m as u64, delta);
    Ok(Verdict {
        holds: risk <= rhs,
        lhs: risk,
        rhs,
        slack: rhs - risk,
        conditional: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::TieSet;
    use crate::variability::PredictionProfile;

    fn profile(k: usize, rows: Vec<Vec<u32>>) -> PredictionProfile {
        let cells = rows
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|c| TieSet::from_classes(vec![c]))
                    .collect()
            })
            .collect();
        PredictionProfile::from_cells(k, 0.0, cells).unwrap()
    }

    #[test]
    fn lower_bound_values() {
        assert_eq!(lower_bound_multiclass(0.0).unwrap(), 0.0);
        assert_eq!(lower_bound_multiclass(1.0).unwrap(), 1.0);
        assert!((lower_bound_multiclass(0.19).unwrap() - 0.1).abs() < 1e-12);
        assert!(lower_bound_multiclass(1.1).is_err());

        assert_eq!(lower_bound_binary(0.0).unwrap(), 0.0);
        assert!((lower_bound_binary(0.5).unwrap() - 0.5).abs() < 1e-12);
        assert!((lower_bound_binary(0.18).unwrap() - 0.1).abs() < 1e-12);
        assert!(lower_bound_binary(0.51).is_err());
    }

    #[test]
    fn binary_bound_dominates_multiclass() {
        for i in 1..=50 {
            let av = i as f64 / 100.0;
            assert!(lower_bound_binary(av).unwrap() >= lower_bound_multiclass(av).unwrap());
        }
    }

    #[test]
    fn omega_hand_values() {
        let v = omega(&BoundInputs {
            epsilon: 0.0,
            eta: 0.5,
            m: 800,
            delta: (-1.0_f64).exp(),
        })
        .unwrap();
        assert!((v - (1.0 / 800.0_f64).sqrt()).abs() < 1e-12);

        let v = omega(&BoundInputs {
            epsilon: 0.1,
            eta: 0.1,
            m: 1000,
            delta: 0.05,
        })
        .unwrap();
        assert!((v - 0.140_795_7).abs() < 1e-6, "omega = {v}");

        // δ → 1 sends the deviation term to 0
        let v = omega(&BoundInputs {
            epsilon: 0.2,
            eta: 0.5,
            m: 100,
            delta: 1.0 - 1e-12,
        })
        .unwrap();
        assert!((v - 0.2).abs() < 1e-6);
    }

    #[test]
    fn delta_term_hand_values() {
        let (v, flagged) = delta_term(0.5, 1000, 0.05).unwrap();
        assert!(!flagged);
        assert!((v - 0.850_262_5).abs() < 1e-6, "delta = {v}");

        let (v, flagged) = delta_term(0.1, 1000, 0.05).unwrap();
        assert!(!flagged);
        assert!((v - 0.333_947_4).abs() < 1e-6, "delta = {v}");

        let (v, flagged) = delta_term(0.0, 1000, 0.05).unwrap();
        assert!(flagged);
        assert!((v - (40.0_f64).ln() / 1000.0).abs() < 1e-15);
    }

    #[test]
    fn upper_bound_pinned_case() {
        let report = upper_bound_data(&BoundInputs {
            epsilon: 0.1,
            eta: 0.1,
            m: 1000,
            delta: 0.05,
        })
        .unwrap();
        // vacuous (> 1) at this scale, reported unclipped
        assert!((report.upper_bound - 3.3460).abs() < 1e-3, "{}", report.upper_bound);
        assert!(report.upper_bound > 1.0);
        assert!(report.upper_bound >= report.inputs.epsilon);
    }

    #[test]
    fn upper_bound_monotone_in_epsilon() {
        let base = BoundInputs {
            epsilon: 0.1,
            eta: 0.2,
            m: 5000,
            delta: 0.05,
        };
        let b0 = upper_bound_data(&base).unwrap().upper_bound;
        let b1 = upper_bound_data(&BoundInputs {
            epsilon: 0.15,
            ..base
        })
        .unwrap()
        .upper_bound;
        assert!(b1 >= b0 + 0.05);
    }

    #[test]
    fn upper_bound_vanishes_in_the_limit() {
        let report = upper_bound_data(&BoundInputs {
            epsilon: 0.0,
            eta: 1e-9,
            m: 10_u64.pow(12),
            delta: 1.0 - 1e-9,
        })
        .unwrap();
        assert!(report.upper_bound < 1e-3, "{}", report.upper_bound);
    }

    #[test]
    fn theorem1_consistent_all_wrong_ensemble() {
        // identical members, wrong everywhere: AV = 0, R = 1 → slack 1
        let p = profile(2, vec![vec![0, 0], vec![0, 0]]);
        let v = verify_theorem1(&p, &[1, 1]).unwrap();
        assert!(v.holds && !v.conditional);
        assert_eq!(v.lhs, 0.0);
        assert!((v.slack - 1.0).abs() < 1e-12);
    }

    #[test]
    fn theorem1_constant_disagreeing_pair() {
        // A constant 0, B constant 1, labels half each:
        // AV = 0.5, R = 0.5, 2R − R² = 0.75
        let p = profile(2, vec![vec![0, 0], vec![1, 1]]);
        let v = verify_theorem1(&p, &[0, 1]).unwrap();
        assert!(v.holds);
        assert!((v.lhs - 0.5).abs() < 1e-12);
        assert!((v.rhs - 0.75).abs() < 1e-12);
    }

    #[test]
    fn theorem2_equality_case() {
        let p = profile(2, vec![vec![0, 0], vec![1, 1]]);
        let v = verify_theorem2(&p, &[0, 1]).unwrap();
        assert!(v.holds);
        assert!((v.av - 0.5).abs() < 1e-12);
        assert!((v.av_upper.rhs - 0.5).abs() < 1e-12);
        let rl = v.risk_lower.unwrap();
        assert!((rl.lhs - 0.5).abs() < 1e-9 && (rl.rhs - 0.5).abs() < 1e-12);
    }

    #[test]
    fn theorem2_rejects_multiclass() {
        let p = profile(3, vec![vec![0]]);
        assert!(verify_theorem2(&p, &[0]).is_err());
    }

    #[test]
    fn riskdiff_identity_edges() {
        let a = profile(2, vec![vec![0, 0], vec![0, 1]]);
        let same = verify_lemma_riskdiff(&a, &a, &[0, 1]).unwrap();
        assert!(same.holds && same.lhs == 0.0);

        let c0 = profile(2, vec![vec![0, 0]]);
        let c1 = profile(2, vec![vec![1, 1]]);
        let v = verify_lemma_riskdiff(&c0, &c1, &[0, 0]).unwrap();
        assert!(v.holds);
        assert!((v.lhs - 1.0).abs() < 1e-12 && (v.rhs - 1.0).abs() < 1e-12);
    }
}
