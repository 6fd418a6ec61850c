//! Word-level recurrent language models whose input (and optionally output)
//! embeddings are augmented with vectors composed from character n-gram
//! embeddings.
//!
//! The crate is split along the pipeline:
//!
//! * [`corpus`] builds vocabularies, character n-gram indexes and truncated-BPTT
//!   batch streams.
//! * [`numerics`] is a small dense tensor library with reverse-mode gradients
//!   and a finite-difference gradient checker.
//! * [`composer`] turns a word's n-gram embeddings into a single vector with
//!   multi-dimensional self-attention, scalar self-attention or a plain sum.
//! * [`lm`] is the LSTM language model with its input modes and tying variants.
//! * [`trainer`] holds SGD, evaluation, frequency-bucketed perplexity and
//!   checkpointing.

pub mod composer;
pub mod corpus;
pub mod error;
pub mod lm;
pub mod numerics;
pub mod trainer;

pub use composer::{AttentionRecord, AttentionWeights, EncoderKind};
pub use corpus::{
    build_ngram_index, build_vocabulary, extract_ngrams, make_batches, Batch, BatchStream,
    NgramIndex, Vocabulary,
};
pub use error::{Error, Result};
pub use lm::{InputMode, LanguageModel, LstmState, ModelConfig, Tying};
pub use numerics::{Graph, ParamId, ParamStore, Scalar, Tensor, Var};

pub use trainer::{
    evaluate, evaluate_by_frequency, load_checkpoint, save_checkpoint, train, BucketOn, Checkpoint,
    TrainConfig,
};
