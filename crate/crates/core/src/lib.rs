//! Confidence-based membership inference with per-example likelihood-ratio tests.
//!
//! The crate is organized as a pipeline of pure stages:
//!
//! - [`dataset`]: seeded Gaussian-mixture data and the `DSET` file format.
//! - [`model`]: a small softmax MLP trained with deterministic mini-batch SGD.
//! - [`shadows`]: balanced IN/OUT membership masks, shadow ensembles, prediction matrices.
//! - [`scoring`]: the five per-(model, example) confidence transforms.
//! - [`attack`]: per-example Gaussian fits and the online/offline/fixed-variance/global attacks.
//! - [`evaluation`]: ROC, AUC, TPR at fixed FPR, CSV and SVG reports.
//! - [`pipeline`]: the end-to-end grid with content-hashed artifact reuse.
//!
//! Every source of randomness is an explicit ChaCha stream derived from a
//! user-supplied seed (see [`rng`]), so all outputs are bit-reproducible.

pub mod attack;
mod codec;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod normal;
pub mod pipeline;
pub mod rng;
pub mod scoring;
pub mod shadows;

pub use attack::{run_attack, AttackResult, AttackVariant, GaussianParams};
pub use dataset::{generate_synthetic, Dataset, SynthSpec};
pub use error::{Error, Result};
pub use evaluation::{auc, roc_curve, tpr_at_fpr, MetricsReport, RocCurve};
pub use model::{Activation, Architecture, Classifier, TrainConfig};
pub use scoring::{score_matrix, ScoreMatrix, ScoreVariant};
pub use shadows::{build_mask, predict_matrix, train_ensemble, EnsembleConfig, MembershipMask, PredictionMatrix};

/// Additive clamp inside every logarithm of a probability.
pub const LOG_EPS: f64 = 1e-45;
