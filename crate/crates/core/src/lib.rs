//! Decision-boundary variability laboratory.
//!
//! Trains ensembles of small classifiers on exactly-samplable synthetic
//! distributions, estimates how much their decision boundaries vary across
//! training repeats (and across training subsets), and evaluates the
//! generalization bounds those variability notions support.
//!
//! Crate layout:
//!
//! - [`nn`] — deterministic MLP: forward, backprop, SGD, PGD, tie sets
//! - [`data`] — synthetic generating distributions and dataset plumbing
//! - [`train`] — seeded repeat training and checkpointing
//! - [`variability`] — variability estimators, η-ε curves, entropies
//! - [`bounds`] — the bound formulas and their empirical verifiers
//! - [`selection`] — Laplace marginal likelihood and rank correlations

pub mod bounds;
pub mod data;
pub mod error;
pub mod fingerprint;
pub mod nn;
pub mod selection;
pub mod train;
pub mod variability;

pub use error::{Error, Result};

// The types that cross module boundaries most often.
pub use data::{Dataset, GeneratingDistribution, NoiseSpec};
pub use nn::{Activation, MlpParams, MlpSpec, TieSet};
pub use train::{Ensemble, EpochLog, Strategy, TrainConfig};
pub use variability::{EvalSample, Mode, PredictionProfile, VariabilityEstimate};
