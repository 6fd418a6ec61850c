//! Run configuration: a JSON file with command-line overrides.

use std::fs;
use std::path::{Path, PathBuf};

use ngramlm_core::lm::DropoutConfig;
use ngramlm_core::{EncoderKind, InputMode, ModelConfig, TrainConfig, Tying};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F32,
    F64,
}

/// Model hyperparameters; the vocabulary size comes from the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    /// Character n-gram order; 0 disables the composed vectors.
    pub ngram: usize,
    pub encoder: EncoderKind,
    pub input_mode: InputMode,
    pub tying: Tying,
    pub dropout: DropoutConfig,
}

impl Default for ModelSection {
    fn default() -> Self {
        let base = ModelConfig::with_ngrams(1, 3, EncoderKind::Ms);
        ModelSection {
            embed_dim: base.embed_dim,
            hidden_dim: base.hidden_dim,
            layers: base.layers,
            ngram: base.ngram_order,
            encoder: base.encoder,
            input_mode: base.input_mode,
            tying: base.tying,
            dropout: base.dropout,
        }
    }
}

impl ModelSection {
    pub fn to_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            layers: self.layers,
            ngram_order: self.ngram,
            encoder: self.encoder,
            input_mode: self.input_mode,
            tying: self.tying,
            dropout: self.dropout,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub train_file: PathBuf,
    pub valid_file: PathBuf,
    #[serde(default)]
    pub test_file: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Train on at most this many leading tokens of `train_file`; the
    /// vocabulary is still built from the whole file.
    #[serde(default)]
    pub max_train_tokens: Option<usize>,
    #[serde(default = "default_precision")]
    pub precision: Precision,
    #[serde(default)]
    pub model: ModelSection,
    /// `train.seed` seeds every random choice of the run.
    #[serde(default)]
    pub train: TrainConfig,
}

fn default_precision() -> Precision {
    Precision::F32
}

/// Flag overrides applied on top of the config file.
#[derive(Clone, Debug, Default, clap::Args)]
pub struct Overrides {
    /// Training text (one sentence per line).
    #[arg(long)]
    pub train_file: Option<PathBuf>,
    /// Validation text.
    #[arg(long)]
    pub valid_file: Option<PathBuf>,
    /// Test text, evaluated with the best parameters at the end.
    #[arg(long)]
    pub test_file: Option<PathBuf>,
    /// Directory for checkpoints, metrics and reports.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Use only the first N training tokens.
    #[arg(long, value_name = "N")]
    pub max_train_tokens: Option<usize>,
    #[arg(long, value_enum)]
    pub precision: Option<Precision>,
    /// Character n-gram order (0 = none).
    #[arg(long)]
    pub ngram: Option<usize>,
    /// ms, ss, sum or none.
    #[arg(long)]
    pub encoder: Option<EncoderKind>,
    /// word_plus_char, char_only, word_only or two_word_embeds.
    #[arg(long)]
    pub input_mode: Option<InputMode>,
    /// tie_e, tie_e_plus_c or untied.
    #[arg(long)]
    pub tying: Option<Tying>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    /// Same dropout probability on input, hidden and output.
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub clip_norm: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub bptt: Option<usize>,
    #[arg(long)]
    pub decay: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Start parameter averaging after this many stalled evaluations (0 = off).
    #[arg(long)]
    pub avg_patience: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub eval_batch_size: Option<usize>,
}

macro_rules! apply {
    ($src:expr, $dst:expr, $($field:ident),*) => {
        $(if let Some(v) = $src.$field.clone() { $dst.$field = v; })*
    };
}

impl RunConfig {
    /// Reads `path` (if any) and applies `overrides`. Without a file, the
    /// required paths must all come from flags.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self, CliError> {
        let mut value = match path {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
                serde_json::from_str::<serde_json::Value>(&text)
                    .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?
            }
            None => serde_json::json!({}),
        };
        let obj = value
            .as_object_mut()
            .ok_or_else(|| CliError::config("config must be a JSON object"))?;
        for (key, v) in [
            ("train_file", &overrides.train_file),
            ("valid_file", &overrides.valid_file),
            ("output_dir", &overrides.output_dir),
        ] {
            if let Some(v) = v {
                obj.insert(key.into(), serde_json::json!(v));
            }
        }
        let mut cfg: RunConfig =
            serde_json::from_value(value).map_err(|e| CliError::config(e.to_string()))?;
        apply!(
            overrides, cfg.model, embed_dim, hidden_dim, layers, ngram, encoder, input_mode, tying
        );
        if let Some(p) = overrides.dropout {
            cfg.model.dropout = DropoutConfig::uniform(p);
        }
        apply!(
            overrides,
            cfg.train,
            lr,
            clip_norm,
            epochs,
            batch_size,
            bptt,
            decay,
            patience,
            avg_patience,
            seed,
            eval_every,
            eval_batch_size
        );
        if let Some(p) = overrides.precision {
            cfg.precision = p;
        }
        if overrides.test_file.is_some() {
            cfg.test_file = overrides.test_file.clone();
        }
        if overrides.max_train_tokens.is_some() {
            cfg.max_train_tokens = overrides.max_train_tokens;
        }
        Ok(cfg)
    }

    /// Checks hyperparameters and input paths without touching the data.
    pub fn validate(&self) -> Result<(), CliError> {
        self.model.to_config(1).validate()?;
        self.train.validate()?;
        let mut inputs = vec![
            ("train_file", &self.train_file),
            ("valid_file", &self.valid_file),
        ];
        if let Some(test) = &self.test_file {
            inputs.push(("test_file", test));
        }
        for (key, path) in inputs {
            if !path.is_file() {
                return Err(CliError::data(format!(
                    "{key} {} does not exist",
                    path.display()
                )));
            }
        }
        if self.max_train_tokens == Some(0) {
            return Err(CliError::config("max_train_tokens must be at least 1"));
        }
        Ok(())
    }
}

pub const CONFIG_HELP: &str = "\
CONFIG FILE (JSON, unknown keys are rejected; flags override it):
  train_file, valid_file     required paths
  test_file                  optional path
  output_dir                 required; created if missing
  max_train_tokens           optional token cap on the training stream
  precision                  \"f32\" (default) or \"f64\"
  model.embed_dim            default 200
  model.hidden_dim           default 200 (must equal embed_dim when tied)
  model.layers               default 2
  model.ngram                default 3; 0 disables n-gram vectors
  model.encoder              \"ms\" (default), \"ss\", \"sum\" or \"none\"
  model.input_mode           \"word_plus_char\" (default), \"char_only\", \"word_only\", \"two_word_embeds\"
  model.tying                \"tie_e_plus_c\" (default), \"tie_e\", \"untied\"
  model.dropout              {\"input\", \"hidden\", \"output\"}, default 0.2 each
  train.lr                   default 5.0
  train.clip_norm            default 0.25
  train.epochs               default 10
  train.batch_size, train.bptt          default 20, 35
  train.decay, train.patience           lr *= decay after `patience` stalled evaluations (0.25, 1)
  train.avg_patience         start parameter averaging after this many stalls; 0 = off
  train.seed                 seeds initialisation and dropout
  train.eval_every           validation interval in epochs (default 1)
  train.eval_batch_size      default 10

EXAMPLE:
  {\"train_file\": \"ptb.train.txt\", \"valid_file\": \"ptb.valid.txt\",
   \"output_dir\": \"runs/char3-ms\", \"model\": {\"ngram\": 3, \"encoder\": \"ms\"},
   \"train\": {\"epochs\": 5}}";
