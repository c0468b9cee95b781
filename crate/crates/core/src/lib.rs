//! Fairness metrics, bias-mitigation processors and multistage pipelines for
//! binary credit-scoring classifiers.

pub mod data;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod inprocess;
pub mod logic;
pub mod metrics;
pub mod model;
pub mod multistage;
pub mod postprocess;
pub mod preprocess;

pub use dataset::{split, Dataset, LabelAudit};
pub use error::{Error, Result};
pub use logic::{apply_lp, LogicalProcessor, Scenario};
pub use metrics::{ConfusionCounts, GroupConfusion};
pub use model::{ScoreModel, Scorer, Threshold};
