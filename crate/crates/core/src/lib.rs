//! Teacher-selection metrics and a desk-scale knowledge-distillation lab.
//!
//! The crate scores candidate teachers by accuracy (TAC), dispersion of
//! secondary soft probabilities (SSP) and the ratio of their two largest
//! raw logits (R12), distills small students from each teacher, and
//! measures how well each score predicts student accuracy with Spearman
//! rank correlation.
//!
//! | module | contents |
//! |---|---|
//! | [`numerics`] | softmax, top-k, compensated means, seeded RNG |
//! | [`metrics`] | TAC / SSP / R12 per sample and aggregated |
//! | [`stats`] | Spearman rho, strength buckets, teacher ranking |
//! | [`synthgen`] | synthetic fine-grained datasets |
//! | [`kd`] | MLPs, distillation loss, training, gradient checks |
//! | [`logit_io`] | the `LGTS` logit container and manifests |
//! | [`harness`] | experiment configs, pipeline, reports, CLI commands |

pub mod error;
pub mod harness;
pub mod kd;
pub mod logit_io;
pub mod metrics;
pub mod numerics;
pub mod stats;
pub mod synthgen;

pub use error::{Error, ErrorClass, Result};
pub use metrics::{MetricKind, MetricSummary};
pub use numerics::{LogitMatrix, Matrix};
