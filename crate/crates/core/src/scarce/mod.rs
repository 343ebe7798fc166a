//! Scarce-label probes: small classifiers trained on frozen embeddings.

mod evaluate;
mod knn;
mod logistic;
mod protocol;
mod subset;

pub use evaluate::{evaluate, Scores};
pub use knn::{knn_classify, KnnMetric};
pub use logistic::{train_logistic, LinearModel, LogisticConfig, LogisticProblem};
pub use protocol::{
    read_outcomes, run_scarce_protocol, write_outcomes, ClassificationOutcome, ClassifierKind,
    ProbeConfig, ProtocolOutput, OUTCOME_HEADER,
};
pub use subset::{proportional_allocation, stratified_subset};
