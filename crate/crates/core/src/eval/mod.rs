//! Benchmark manifests, metrics, run records and the item runner.

pub mod manifest;
pub mod metrics;
pub mod record;
pub mod runner;

pub use manifest::{
    load_manifest, parse_manifest, write_manifest, Gold, LoadedMedia, ManifestError, ManifestItem,
    Media, Task,
};
pub use metrics::{
    interval_iou, mcq_accuracy, mean_iou, normalize_answer, pearson, recall_at, MetricError,
};
pub use record::{
    config_hash, read_run, summarize, write_run, Metric, Prediction, RunRecord, Selection,
    SplitSummary, Summary,
};
pub use runner::{run_item, run_items, ItemOutcome, PipelineConfigs};
