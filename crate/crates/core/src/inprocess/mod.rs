//! Training-stage processors built on a shared logistic gradient-descent engine.

pub mod adversarial;
pub mod engine;
pub mod metafair;
pub mod pireg;

pub use adversarial::{train_adversarial, AdversaryInputs, AdversaryParams};
pub use engine::{train_logistic, LogisticParams, LogisticScorer};
pub use metafair::{
    search_group_thresholds, train_metafair, FairnessMetric, GroupGrid, MetaFairParams,
    ThresholdSearch,
};
pub use pireg::{prejudice_index, train_pi_regularized};
