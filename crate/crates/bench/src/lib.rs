//! Shared fixtures for the benchmarks.

use ngramlm_core::corpus::{build_vocabulary, DEFAULT_SPECIALS};
use ngramlm_core::lm::DropoutConfig;
use ngramlm_core::{
    build_ngram_index, make_batches, Batch, EncoderKind, InputMode, LanguageModel, ModelConfig,
    Tying, Vocabulary,
};

/// `n` distinct lowercase words of 2 to 9 characters.
pub fn synthetic_words(n: usize) -> Vec<String> {
    (0..n)
        .map(|i| {
            let len = 2 + (i * 7919) % 8;
            let mut x = i as u64;
            (0..len)
                .map(|k| {
                    let c = (x % 26) as u8;
                    x = x / 26 + (k as u64 + 1) * 31;
                    (b'a' + c) as char
                })
                .collect::<String>()
                + &i.to_string()
        })
        .collect()
}

pub fn vocabulary(n: usize) -> Vocabulary {
    build_vocabulary(synthetic_words(n), DEFAULT_SPECIALS).expect("synthetic words are valid")
}

/// Two-layer tied model with `dim`-wide embeddings and LSTMs; `EncoderKind::None`
/// gives the word-only baseline.
pub fn model(vocab: &Vocabulary, dim: usize, encoder: EncoderKind) -> LanguageModel<f32> {
    let (n, input_mode, tying) = match encoder {
        EncoderKind::None => (0, InputMode::WordOnly, Tying::TieE),
        _ => (3, InputMode::WordPlusChar, Tying::TieEPlusC),
    };
    let config = ModelConfig {
        vocab_size: vocab.len(),
        embed_dim: dim,
        hidden_dim: dim,
        layers: 2,
        ngram_order: n,
        encoder,
        input_mode,
        tying,
        dropout: DropoutConfig::none(),
    };
    let ngrams = (n > 0).then(|| build_ngram_index(vocab, n).expect("order 3 is valid"));
    LanguageModel::seeded(config, ngrams, 0).expect("valid config")
}

/// The first `B × T` batch of a token stream cycling through the vocabulary.
pub fn batch(vocab_size: usize, batch_size: usize, bptt: usize) -> Batch {
    let ids: Vec<usize> = (0..batch_size * (bptt + 1) * 2)
        .map(|i| (i * 37) % vocab_size)
        .collect();
    make_batches(&ids, batch_size, bptt)
        .expect("stream is long enough")
        .next()
        .expect("one batch")
}
