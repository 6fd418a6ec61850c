//! Optimisation loop, evaluation and checkpointing.

mod checkpoint;
mod eval;
mod sgd;
mod train;

pub use checkpoint::{
    load_checkpoint, read_manifest, save_checkpoint, Checkpoint, CheckpointInfo, Manifest,
    TensorEntry, FORMAT_VERSION, MANIFEST_FILE, NGRAMS_FILE, TENSORS_FILE, VOCAB_FILE,
};
pub use eval::{
    evaluate, evaluate_by_frequency, position_nlls, BucketOn, FrequencyReport, Perplexity,
    PositionNll,
};
pub use sgd::{clip_gradients, global_grad_norm, sgd_step};
pub use train::{train, EpochRecord, TrainConfig, TrainOutcome};
