//! Task heads, fine-tuning, the drug-pair MLP, cross-validation splits and
//! evaluation metrics.

mod ddi;
mod finetune;
mod metrics;
mod mlp;
mod split;

pub use ddi::{ddi_train_eval, drug_features, synth_ddi, DdiConfig, DdiReport, FingerprintSource, FoldReport, RankedPair};
pub use finetune::{
    finetune, CellResult, FinetuneConfig, FinetuneExample, FinetuneReport, FinetunedModel, SeedReport, TaskHead,
};
pub use metrics::{
    average_precision, compute_metrics, precision_recall, rmse, roc_auc, summarize, MetricReport, MetricSummary,
    TaskKind, DECISION_THRESHOLD,
};
pub use mlp::{Dataset, FitTrace, MlpClassifier, MlpConfig};
pub use split::{random_split, stratified_split, CvSplit, TrainValTest};
