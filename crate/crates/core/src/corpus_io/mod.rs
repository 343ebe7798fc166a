//! On-disk formats (ECL1 clouds, loss logs, labels, run manifests) and loaders.

mod cloud;
mod labels;
mod loss_log;
mod manifest;

pub use cloud::{
    decode_cloud, encode_cloud, read_cloud, write_cloud, EmbeddingCloud, LayerStack, ECL1_MAGIC,
    ECL1_VERSION, FINAL_LAYER, STACK_LAYERS,
};
pub use labels::{read_labels, write_labels, LabelTable};
pub use loss_log::{read_loss_log, write_loss_log, LossCurve, LossPoint, LOSS_LOG_HEADER};
pub use manifest::{load_probe_set, load_run, DomainRun, ProbeSet, RunManifest};
pub(crate) use cloud::ensure_same_ids;
