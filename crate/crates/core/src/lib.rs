//! Sample-based evaluation of generative models from feature embeddings.
//!
//! The centerpiece is the feature likelihood divergence (FLD): a mixture of
//! isotropic Gaussians is centered on the generated samples, each
//! component's variance is fit to the training set, and the held-out test
//! set is scored under the resulting density. Generated samples that copy
//! training points collapse their component's variance, so memorization
//! shows up as a poor test likelihood alongside fidelity and coverage
//! problems.
//!
//! Modules:
//! - [`tensor`]: feature matrices, distance matrices, log-space reductions.
//! - [`mog`]: the mixture estimator and its bandwidth fit.
//! - [`metrics`]: FLD, calibration, generalization gap, per-sample rankings.
//! - [`baselines`]: FID, precision/recall, C_T and AuthPct.
//! - [`synth`]: two-moons experiments and feature-level perturbations.
//! - [`io`] and [`report`]: file formats and JSON reports.
//! - [`pipeline`]: the runs behind each command-line subcommand.

pub mod baselines;
pub mod error;
pub mod io;
pub mod metrics;
pub mod mog;
pub mod pipeline;
pub mod report;
pub mod seed;
pub mod synth;
pub mod tensor;

pub use baselines::{auth_pct, baseline_report, ct_score, fid, precision_recall, BaselineReport};
pub use error::{FldError, Result};
pub use metrics::{
    calibrate, fidelity_ranking, fld, memorization_ranking, CalibrationConstant, FldResult,
    SampleRanking,
};
pub use mog::{fit, log_likelihood, FitConfig, InitRule, MoGModel};
pub use tensor::{pairwise_sq_dist, FeatureMatrix, Role};
