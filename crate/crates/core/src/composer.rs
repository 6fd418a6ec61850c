//! Word vectors composed from character n-gram embeddings.
//!
//! For a word with gram embeddings `s_1..s_I` (rows of the n-gram table):
//!
//! * **MS** (multi-dimensional self-attention): `A = W_c·[s_1..s_I]` is
//!   `D × I`; each row of `A` is soft-maxed over the grams, giving one weight
//!   per gram per dimension, and `c = Σ_i g_i ⊙ s_i`. No activation and no
//!   second projection.
//! * **SS** (scalar self-attention): `α = softmax_i(w·s_i)`, `c = Σ_i α_i s_i`.
//! * **Sum**: `c = Σ_i s_i`.
//!
//! All three are evaluated for many words at once over a flat gram list split
//! into segments, one per word; words without grams compose to zero.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{GramSegments, NgramIndex};
use crate::error::{Error, Result};
use crate::numerics::{Graph, Scalar, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    Ms,
    Ss,
    Sum,
    None,
}

impl EncoderKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EncoderKind::Ms => "ms",
            EncoderKind::Ss => "ss",
            EncoderKind::Sum => "sum",
            EncoderKind::None => "none",
        }
    }

    /// Shape of the attention parameter for embedding size `dim`.
    pub fn attention_shape(self, dim: usize) -> Option<[usize; 2]> {
        match self {
            EncoderKind::Ms => Some([dim, dim]),
            EncoderKind::Ss => Some([1, dim]),
            EncoderKind::Sum | EncoderKind::None => None,
        }
    }
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ms" => Ok(EncoderKind::Ms),
            "ss" => Ok(EncoderKind::Ss),
            "sum" => Ok(EncoderKind::Sum),
            "none" => Ok(EncoderKind::None),
            _ => Err(Error::Config(format!(
                "unknown encoder {s:?} (expected ms, ss, sum or none)"
            ))),
        }
    }
}

/// Output of [`compose_segments`].
#[derive(Clone, Copy, Debug)]
pub struct Composition {
    /// `segments × D`.
    pub vectors: Var,
    /// Attention weights per gram row: `N × D` for MS, `N × 1` for SS.
    pub weights: Option<Var>,
}

/// Composes every segment of `segments` on the graph.
///
/// `table` is the `G × D` n-gram table; `attention` is `W_c` (`D × D`) for
/// MS, the `1 × D` scoring vector for SS and ignored for Sum.
pub fn compose_segments<T: Scalar>(
    g: &mut Graph<T>,
    encoder: EncoderKind,
    table: Var,
    attention: Option<Var>,
    segments: &GramSegments,
) -> Result<Composition> {
    let dim = g.value(table).cols();
    let grams = g.embedding_lookup(table, segments.ids())?;
    let offsets = segments.offsets();
    let need = |attention: Option<Var>, g: &Graph<T>| -> Result<Var> {
        let a = attention.ok_or_else(|| {
            Error::Config(format!("encoder {encoder} needs an attention parameter"))
        })?;
        let expected = encoder.attention_shape(dim).expect("attention encoder");
        if g.value(a).shape() != expected {
            return Err(Error::shape(
                "compose attention",
                g.value(a).shape(),
                &expected,
            ));
        }
        Ok(a)
    };
    // Scores depend only on the gram, so when grams repeat across words it is
    // cheaper to score the table once and gather.
    let table_rows = g.value(table).rows();
    let score = |g: &mut Graph<T>, a: Var| -> Result<Var> {
        if segments.ids().len() > table_rows {
            let per_gram = g.matmul_nt(table, a)?;
            g.embedding_lookup(per_gram, segments.ids())
        } else {
            g.matmul_nt(grams, a)
        }
    };
    match encoder {
        EncoderKind::Ms => {
            let w_c = need(attention, g)?;
            // Row k of scores is (W_c s_k)ᵀ.
            let scores = score(g, w_c)?;
            let weights = g.segment_softmax(scores, offsets)?;
            let weighted = g.mul(weights, grams)?;
            let vectors = g.segment_sum(weighted, offsets)?;
            Ok(Composition {
                vectors,
                weights: Some(weights),
            })
        }
        EncoderKind::Ss => {
            let w = need(attention, g)?;
            let scores = score(g, w)?;
            let weights = g.segment_softmax(scores, offsets)?;
            let weighted = g.scale_rows(grams, weights)?;
            let vectors = g.segment_sum(weighted, offsets)?;
            Ok(Composition {
                vectors,
                weights: Some(weights),
            })
        }
        EncoderKind::Sum => Ok(Composition {
            vectors: g.segment_sum(grams, offsets)?,
            weights: None,
        }),
        EncoderKind::None => Err(Error::Config(
            "composition requested with encoder none".into(),
        )),
    }
}

/// Attention weights of a single word.
#[derive(Clone, Debug, PartialEq)]
pub enum AttentionWeights<T> {
    /// `D × I`; row `j` is a distribution over the grams for dimension `j`.
    PerDimension(Tensor<T>),
    /// One weight per gram.
    Scalar(Vec<T>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionRecord<T> {
    pub word: Option<usize>,
    pub gram_ids: Vec<usize>,
    pub weights: AttentionWeights<T>,
}

impl<T: Scalar> AttentionRecord<T> {
    /// Weight of each gram averaged over dimensions; sums to one.
    pub fn gram_mean_weights(&self) -> Vec<f64> {
        match &self.weights {
            AttentionWeights::PerDimension(w) => {
                let dims = w.rows().max(1) as f64;
                (0..w.cols())
                    .map(|i| (0..w.rows()).map(|j| w.get(j, i).as_f64()).sum::<f64>() / dims)
                    .collect()
            }
            AttentionWeights::Scalar(w) => w.iter().map(|v| v.as_f64()).collect(),
        }
    }

    /// The `k` dimensions in which gram column `gram` gets the most weight,
    /// as `(dimension, weight)` pairs in decreasing order.
    pub fn top_dimensions(&self, gram: usize, k: usize) -> Vec<(usize, f64)> {
        match &self.weights {
            AttentionWeights::PerDimension(w) => {
                let mut dims: Vec<(usize, f64)> = (0..w.rows())
                    .map(|j| (j, w.get(j, gram).as_f64()))
                    .collect();
                dims.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                dims.truncate(k);
                dims
            }
            AttentionWeights::Scalar(_) => Vec::new(),
        }
    }
}

fn single<T: Scalar>(
    encoder: EncoderKind,
    gram_ids: &[usize],
    table: &Tensor<T>,
    attention: Option<&Tensor<T>>,
) -> Result<(Tensor<T>, Option<Tensor<T>>)> {
    if gram_ids.is_empty() {
        return Err(Error::Gramless);
    }
    let mut g = Graph::new();
    let t = g.constant(table.clone());
    let a = attention.map(|a| g.constant(a.clone()));
    let segments = GramSegments::from_lists([gram_ids]);
    let out = compose_segments(&mut g, encoder, t, a, &segments)?;
    let weights = out.weights.map(|w| g.value(w).clone());
    Ok((g.value(out.vectors).clone(), weights))
}

/// MS composition of one word: returns `c` (`1 × D`) and its `D × I` weights.
pub fn compose_ms<T: Scalar>(
    gram_ids: &[usize],
    table: &Tensor<T>,
    w_c: &Tensor<T>,
) -> Result<(Tensor<T>, AttentionRecord<T>)> {
    let (c, weights) = single(EncoderKind::Ms, gram_ids, table, Some(w_c))?;
    let weights = weights.expect("ms weights").transpose()?;
    Ok((
        c,
        AttentionRecord {
            word: None,
            gram_ids: gram_ids.to_vec(),
            weights: AttentionWeights::PerDimension(weights),
        },
    ))
}

/// SS composition of one word.
pub fn compose_ss<T: Scalar>(
    gram_ids: &[usize],
    table: &Tensor<T>,
    w: &Tensor<T>,
) -> Result<(Tensor<T>, AttentionRecord<T>)> {
    let (c, weights) = single(EncoderKind::Ss, gram_ids, table, Some(w))?;
    Ok((
        c,
        AttentionRecord {
            word: None,
            gram_ids: gram_ids.to_vec(),
            weights: AttentionWeights::Scalar(weights.expect("ss weights").into_data()),
        },
    ))
}

/// Unweighted sum of one word's gram embeddings.
pub fn compose_sum<T: Scalar>(gram_ids: &[usize], table: &Tensor<T>) -> Result<Tensor<T>> {
    Ok(single(EncoderKind::Sum, gram_ids, table, None)?.0)
}

/// Composed vectors of every vocabulary word as a `V × D` matrix (row `v` is
/// word `v`); words without grams, i.e. specials, get zero rows.
pub fn compose_all_vocab<T: Scalar>(
    encoder: EncoderKind,
    index: &NgramIndex,
    table: &Tensor<T>,
    attention: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    let mut g = Graph::new();
    let t = g.constant(table.clone());
    let a = attention.map(|a| g.constant(a.clone()));
    let out = compose_segments(&mut g, encoder, t, a, index.all_words())?;
    Ok(g.value(out.vectors).clone())
}
