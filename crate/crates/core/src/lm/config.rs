use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::composer::EncoderKind;
use crate::error::{Error, Result};

/// How the LSTM input `e_t` is formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    /// `E x_t + c_t`
    WordPlusChar,
    /// `c_t` alone (no word embedding on the input side)
    CharOnly,
    /// `E x_t`
    WordOnly,
    /// `(E + E2) x_t`, the two-embedding control
    TwoWordEmbeds,
}

/// Which matrix the output projection uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tying {
    /// The input word matrix.
    TieE,
    /// The input word matrix plus the composed vectors of every word.
    TieEPlusC,
    /// A separate `V × D_h` matrix.
    Untied,
}

macro_rules! string_enum {
    ($ty:ident, $what:literal, $($variant:ident => $s:literal),+) => {
        impl $ty {
            pub fn as_str(self) -> &'static str {
                match self {
                    $($ty::$variant => $s,)+
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($s => Ok($ty::$variant),)+
                    _ => Err(Error::Config(format!(
                        concat!("unknown ", $what, " {:?} (expected one of: {})"),
                        s,
                        [$($s),+].join(", ")
                    ))),
                }
            }
        }
    };
}

string_enum!(InputMode, "input mode",
    WordPlusChar => "word_plus_char",
    CharOnly => "char_only",
    WordOnly => "word_only",
    TwoWordEmbeds => "two_word_embeds");

string_enum!(Tying, "tying mode",
    TieE => "tie_e",
    TieEPlusC => "tie_e_plus_c",
    Untied => "untied");

impl InputMode {
    pub fn uses_word_embedding(self) -> bool {
        !matches!(self, InputMode::CharOnly)
    }

    pub fn uses_composition(self) -> bool {
        matches!(self, InputMode::WordPlusChar | InputMode::CharOnly)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DropoutConfig {
    /// On `e_t`.
    pub input: f64,
    /// Between LSTM layers.
    pub hidden: f64,
    /// On the last LSTM layer's output.
    pub output: f64,
}

impl DropoutConfig {
    pub fn none() -> Self {
        DropoutConfig::uniform(0.0)
    }

    pub fn uniform(p: f64) -> Self {
        DropoutConfig {
            input: p,
            hidden: p,
            output: p,
        }
    }
}

impl Default for DropoutConfig {
    fn default() -> Self {
        DropoutConfig::uniform(0.2)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    /// Character n-gram order; 0 for models without composition.
    pub ngram_order: usize,
    pub encoder: EncoderKind,
    pub input_mode: InputMode,
    pub tying: Tying,
    pub dropout: DropoutConfig,
}

impl ModelConfig {
    /// Word-only tied baseline with the desk-scale defaults.
    pub fn baseline(vocab_size: usize) -> Self {
        ModelConfig {
            vocab_size,
            embed_dim: 200,
            hidden_dim: 200,
            layers: 2,
            ngram_order: 0,
            encoder: EncoderKind::None,
            input_mode: InputMode::WordOnly,
            tying: Tying::TieE,
            dropout: DropoutConfig::default(),
        }
    }

    /// Word plus composed n-gram vectors, tied to `E + C`.
    pub fn with_ngrams(vocab_size: usize, n: usize, encoder: EncoderKind) -> Self {
        ModelConfig {
            ngram_order: n,
            encoder,
            input_mode: InputMode::WordPlusChar,
            tying: Tying::TieEPlusC,
            ..ModelConfig::baseline(vocab_size)
        }
    }

    pub fn has_composition(&self) -> bool {
        self.encoder != EncoderKind::None
    }

    /// Whether the `E` matrix exists.
    pub fn has_word_embedding(&self) -> bool {
        self.input_mode.uses_word_embedding() || self.tying == Tying::TieE
    }

    /// Rejects inconsistent settings, naming the conflicting keys.
    pub fn validate(&self) -> Result<()> {
        let conflict = |msg: String| Err(Error::Config(msg));
        for (key, v) in [
            ("vocab_size", self.vocab_size),
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("layers", self.layers),
        ] {
            if v == 0 {
                return conflict(format!("{key} must be positive"));
            }
        }
        if self.ngram_order == 1 {
            return conflict("ngram must be 0 (no composition) or at least 2".into());
        }
        if self.ngram_order >= 2 && self.encoder == EncoderKind::None {
            return conflict(format!(
                "encoder required when ngram > 0 (ngram={}, encoder=none)",
                self.ngram_order
            ));
        }
        if self.ngram_order == 0 && self.encoder != EncoderKind::None {
            return conflict(format!(
                "encoder={} requires ngram ≥ 2 (ngram=0)",
                self.encoder
            ));
        }
        if self.input_mode.uses_composition() && self.encoder == EncoderKind::None {
            return conflict(format!(
                "input_mode={} conflicts with encoder=none",
                self.input_mode
            ));
        }
        if self.tying == Tying::TieEPlusC && self.encoder == EncoderKind::None {
            return conflict("tying=tie_e_plus_c conflicts with encoder=none".into());
        }
        if self.tying != Tying::Untied && self.hidden_dim != self.embed_dim {
            return conflict(format!(
                "tying={} requires hidden_dim = embed_dim (hidden_dim={}, embed_dim={})",
                self.tying, self.hidden_dim, self.embed_dim
            ));
        }
        for (key, p) in [
            ("dropout.input", self.dropout.input),
            ("dropout.hidden", self.dropout.hidden),
            ("dropout.output", self.dropout.output),
        ] {
            if !(0.0..1.0).contains(&p) {
                return conflict(format!("{key}={p} outside [0, 1)"));
            }
        }
        Ok(())
    }
}
