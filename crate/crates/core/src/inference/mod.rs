//! Bayesian fitting of the Gamma–Poisson renewal model.

pub mod diagnostics;
pub mod ml;
pub mod model;
pub mod nuts;
pub mod posterior;
pub mod summary;

pub use diagnostics::{Diagnostics, ParamDiagnostic};
pub use ml::{ml_constant_r, MlEstimate};
pub use model::{grad_log_joint, log_joint, LatentState, RenewalTarget, Variant};
pub use nuts::MetricKind;
pub use posterior::{data_digest, diagnose, sample_posterior, PosteriorDraws, SamplerConfig};
pub use summary::{mean_r_interval, r_law_summary, RLawSummary};
