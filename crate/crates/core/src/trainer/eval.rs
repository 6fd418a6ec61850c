use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{make_batches, Vocabulary};
use crate::error::{Error, Result};
use crate::lm::LanguageModel;
use crate::numerics::{token_nll, Scalar};

/// Accumulated negative log-likelihood over predicted positions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Perplexity {
    pub nll_sum: f64,
    pub positions: usize,
}

impl Perplexity {
    pub fn add(&mut self, nll: f64) {
        self.nll_sum += nll;
        self.positions += 1;
    }

    pub fn mean_nll(&self) -> f64 {
        self.nll_sum / self.positions as f64
    }

    pub fn ppl(&self) -> f64 {
        self.mean_nll().exp()
    }
}

/// Loss at one predicted position.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PositionNll {
    pub input: usize,
    pub target: usize,
    pub nll: f64,
}

/// Per-position NLL over a token stream, without dropout, carrying state
/// across batches. The first token of each batch row is input only.
///
/// `bptt` is shortened when the stream is too short for it.
pub fn position_nlls<T: Scalar>(
    model: &LanguageModel<T>,
    token_ids: &[usize],
    batch_size: usize,
    bptt: usize,
) -> Result<Vec<PositionNll>> {
    let row_len = token_ids.len() / batch_size.max(1);
    if row_len < 2 {
        return Err(Error::CorpusTooSmall {
            len: token_ids.len(),
            required: 2 * batch_size,
            batch: batch_size,
            bptt: 1,
        });
    }
    let stream = make_batches(token_ids, batch_size, bptt.min(row_len - 1))?;
    let mut state = model.zero_state(batch_size);
    let mut out = Vec::with_capacity(stream.num_predictions());
    // Parameters are frozen, so every word's composition is computed once.
    let composed = match model.config().has_composition() {
        true => Some(model.composed_vectors()?),
        false => None,
    };
    for batch in stream {
        let (logits, next) = model.logits_frozen(&batch, &state, composed.as_ref())?;
        let inputs = batch.inputs_time_major();
        let targets = batch.targets_time_major();
        let nll = token_nll(&logits, &targets)?;
        out.extend(
            inputs
                .iter()
                .zip(&targets)
                .zip(nll)
                .map(|((&input, &target), nll)| PositionNll { input, target, nll }),
        );
        state = next;
    }
    Ok(out)
}

/// Perplexity of a frozen model on a token stream.
pub fn evaluate<T: Scalar>(
    model: &LanguageModel<T>,
    token_ids: &[usize],
    batch_size: usize,
    bptt: usize,
) -> Result<Perplexity> {
    let mut acc = Perplexity::default();
    for p in position_nlls(model, token_ids, batch_size, bptt)? {
        acc.add(p.nll);
    }
    Ok(acc)
}

/// Which word of a prediction decides its frequency bucket.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BucketOn {
    /// The conditioning word `w_t`.
    #[default]
    Input,
    /// The predicted word `w_{t+1}`.
    Target,
}

impl fmt::Display for BucketOn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BucketOn::Input => "input",
            BucketOn::Target => "target",
        })
    }
}

impl FromStr for BucketOn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "input" => Ok(BucketOn::Input),
            "target" => Ok(BucketOn::Target),
            _ => Err(Error::Config(format!(
                "unknown bucket_on {s:?} (expected input or target)"
            ))),
        }
    }
}

/// Perplexity split by training frequency. Empty buckets are `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyReport {
    pub threshold: u64,
    pub bucket_on: BucketOn,
    pub overall: Perplexity,
    /// Positions whose selected word has training frequency `< threshold`.
    pub infrequent: Option<Perplexity>,
    pub frequent: Option<Perplexity>,
}

/// Splits positions into those whose selected word occurred fewer than
/// `threshold` times in training and the rest.
pub fn evaluate_by_frequency<T: Scalar>(
    model: &LanguageModel<T>,
    token_ids: &[usize],
    vocab: &Vocabulary,
    threshold: u64,
    bucket_on: BucketOn,
    batch_size: usize,
    bptt: usize,
) -> Result<FrequencyReport> {
    let positions = position_nlls(model, token_ids, batch_size, bptt)?;
    Ok(bucket_positions(&positions, vocab, threshold, bucket_on))
}

pub(crate) fn bucket_positions(
    positions: &[PositionNll],
    vocab: &Vocabulary,
    threshold: u64,
    bucket_on: BucketOn,
) -> FrequencyReport {
    let mut overall = Perplexity::default();
    let mut rare = Perplexity::default();
    let mut common = Perplexity::default();
    for p in positions {
        let word = match bucket_on {
            BucketOn::Input => p.input,
            BucketOn::Target => p.target,
        };
        overall.add(p.nll);
        if vocab.freq(word) < threshold {
            rare.add(p.nll);
        } else {
            common.add(p.nll);
        }
    }
    let nonempty = |b: Perplexity| (b.positions > 0).then_some(b);
    FrequencyReport {
        threshold,
        bucket_on,
        overall,
        infrequent: nonempty(rare),
        frequent: nonempty(common),
    }
}
