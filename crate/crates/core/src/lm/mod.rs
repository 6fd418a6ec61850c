//! LSTM language model over combined word and composed n-gram embeddings.

mod config;
mod model;

pub use config::{DropoutConfig, InputMode, ModelConfig, Tying};
pub use model::{ForwardOutput, LanguageModel, LstmState};
