//! Training loop, evaluation metrics and checkpoint files.

pub mod checkpoint;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod report;
pub mod train;

pub use checkpoint::{
    load_model, model_from_records, model_records, read_records, save_model, write_records, Record,
    MAGIC,
};
pub use metrics::{
    auc, balanced_accuracy, confusion, mcc, precision_recall_f1, Confusion, Metrics,
};
pub use model::{ModelConfig, PbrModel};
pub use optim::{Adam, AdamConfig};
pub use report::{corpus_fingerprint, MetricsReport};
pub use train::{
    evaluate, score_documents, split_documents, train, train_with, EpochLog, Split, TrainConfig,
    TrainOutcome, Trainer,
};
