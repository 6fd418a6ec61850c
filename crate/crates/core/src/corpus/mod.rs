//! Vocabularies, character n-gram indexes and truncated-BPTT batching.

mod batch;
mod ngram;
mod vocab;

pub use batch::{make_batches, Batch, BatchStream};
pub use ngram::{
    build_ngram_index, extract_ngrams, GramSegments, NgramIndex, BOUNDARY_BEGIN, BOUNDARY_END,
};
pub use vocab::{
    build_vocabulary, is_placeholder, read_tokens, tokenize, Vocabulary, DEFAULT_SPECIALS, EOS, UNK,
};
