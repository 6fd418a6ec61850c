use std::collections::HashMap;

use rand::{Rng, RngCore, SeedableRng};

use crate::composer::{compose_segments, AttentionRecord, AttentionWeights, EncoderKind};
use crate::corpus::{Batch, GramSegments, NgramIndex};
use crate::error::{Error, Result};
use crate::lm::{InputMode, ModelConfig, Tying};
use crate::numerics::{lstm_step, Graph, ParamId, ParamStore, Scalar, Tensor, Var};

const INIT_RANGE: f64 = 0.1;
const FORGET_BIAS: f64 = 1.0;

/// Carried `(h, c)` per layer, each `B × H`. Plain tensors: carrying them to
/// the next batch cuts the gradient path.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmState<T> {
    pub layers: Vec<(Tensor<T>, Tensor<T>)>,
}

impl<T: Scalar> LstmState<T> {
    pub fn zeros(layers: usize, batch: usize, hidden: usize) -> Self {
        LstmState {
            layers: (0..layers)
                .map(|_| {
                    (
                        Tensor::zeros(&[batch, hidden]),
                        Tensor::zeros(&[batch, hidden]),
                    )
                })
                .collect(),
        }
    }

    pub fn batch_size(&self) -> usize {
        self.layers.first().map_or(0, |(h, _)| h.rows())
    }
}

#[derive(Clone, Debug)]
pub struct ForwardOutput<T> {
    /// `(T·B) × V`, time-major: row `t * B + b` is position `t` of row `b`.
    pub logits: Var,
    pub state: LstmState<T>,
}

#[derive(Clone, Debug)]
struct LayerIds {
    w_x: ParamId,
    w_h: ParamId,
    bias: ParamId,
}

#[derive(Clone, Debug)]
struct ParamIds {
    word: Option<ParamId>,
    word2: Option<ParamId>,
    ngram: Option<ParamId>,
    attention: Option<ParamId>,
    layers: Vec<LayerIds>,
    out_weight: Option<ParamId>,
    out_bias: ParamId,
}

/// Word-level LSTM language model.
///
/// Embedding matrices are stored one row per word (`V × D`); the n-gram
/// table is `G × D`. Gates are packed `[input, forget, candidate, output]`.
#[derive(Clone, Debug)]
pub struct LanguageModel<T> {
    config: ModelConfig,
    params: ParamStore<T>,
    ids: ParamIds,
    ngrams: Option<NgramIndex>,
}

/// Parameter names and shapes for a configuration, in registration order.
fn layout(config: &ModelConfig, ngram_types: usize) -> Vec<(String, Vec<usize>)> {
    let (v, d, h) = (config.vocab_size, config.embed_dim, config.hidden_dim);
    let mut out = Vec::new();
    if config.has_word_embedding() {
        out.push(("embed.word".to_owned(), vec![v, d]));
    }
    if config.input_mode == InputMode::TwoWordEmbeds {
        out.push(("embed.word2".to_owned(), vec![v, d]));
    }
    if config.has_composition() {
        out.push(("embed.ngram".to_owned(), vec![ngram_types, d]));
        if let Some(shape) = config.encoder.attention_shape(d) {
            out.push(("compose.attention".to_owned(), shape.to_vec()));
        }
    }
    for l in 0..config.layers {
        let input = if l == 0 { d } else { h };
        out.push((format!("lstm.{l}.w_x"), vec![input, 4 * h]));
        out.push((format!("lstm.{l}.w_h"), vec![h, 4 * h]));
        out.push((format!("lstm.{l}.bias"), vec![1, 4 * h]));
    }
    if config.tying == Tying::Untied {
        out.push(("out.weight".to_owned(), vec![v, h]));
    }
    out.push(("out.bias".to_owned(), vec![1, v]));
    out
}

impl<T: Scalar> LanguageModel<T> {
    /// Freshly initialised model: uniform(±0.1) weights, zero biases except
    /// forget gates at 1.0.
    pub fn new<R: Rng + ?Sized>(
        config: ModelConfig,
        ngrams: Option<NgramIndex>,
        rng: &mut R,
    ) -> Result<Self> {
        Self::check_config(&config, ngrams.as_ref())?;
        let g = ngrams.as_ref().map_or(0, |n| n.len());
        let hidden = config.hidden_dim;
        let mut params = ParamStore::new();
        for (name, shape) in layout(&config, g) {
            let value = if name.ends_with("bias") {
                let mut b = Tensor::zeros(&shape);
                if name.starts_with("lstm.") {
                    for j in hidden..2 * hidden {
                        b.set(0, j, T::of_f64(FORGET_BIAS));
                    }
                }
                b
            } else {
                Tensor::uniform(&shape, -INIT_RANGE, INIT_RANGE, rng)
            };
            params.add(name, value)?;
        }
        Self::from_params(config, ngrams, params)
    }

    /// [`new`](Self::new) with a ChaCha8 generator seeded from `seed`.
    pub fn seeded(config: ModelConfig, ngrams: Option<NgramIndex>, seed: u64) -> Result<Self> {
        Self::new(
            config,
            ngrams,
            &mut rand_chacha::ChaCha8Rng::seed_from_u64(seed),
        )
    }

    /// Wraps existing parameters, checking names and shapes against the
    /// configuration.
    pub fn from_params(
        config: ModelConfig,
        ngrams: Option<NgramIndex>,
        params: ParamStore<T>,
    ) -> Result<Self> {
        Self::check_config(&config, ngrams.as_ref())?;
        let g = ngrams.as_ref().map_or(0, |n| n.len());
        let expected = layout(&config, g);
        if expected.len() != params.len() {
            return Err(Error::Config(format!(
                "expected {} parameter tensors, found {}",
                expected.len(),
                params.len()
            )));
        }
        for ((name, shape), p) in expected.iter().zip(params.iter()) {
            if *name != p.name {
                return Err(Error::Config(format!(
                    "expected parameter {name:?}, found {:?}",
                    p.name
                )));
            }
            if p.value.shape() != &shape[..] {
                return Err(Error::Config(format!(
                    "parameter {name:?} has shape {:?}, expected {shape:?}",
                    p.value.shape()
                )));
            }
        }
        let id = |name: &str| params.id(name);
        let ids = ParamIds {
            word: id("embed.word"),
            word2: id("embed.word2"),
            ngram: id("embed.ngram"),
            attention: id("compose.attention"),
            layers: (0..config.layers)
                .map(|l| LayerIds {
                    w_x: id(&format!("lstm.{l}.w_x")).expect("layout"),
                    w_h: id(&format!("lstm.{l}.w_h")).expect("layout"),
                    bias: id(&format!("lstm.{l}.bias")).expect("layout"),
                })
                .collect(),
            out_weight: id("out.weight"),
            out_bias: id("out.bias").expect("layout"),
        };
        Ok(LanguageModel {
            config,
            params,
            ids,
            ngrams,
        })
    }

    fn check_config(config: &ModelConfig, ngrams: Option<&NgramIndex>) -> Result<()> {
        config.validate()?;
        match (config.has_composition(), ngrams) {
            (false, None) => Ok(()),
            (false, Some(_)) => Err(Error::Config(
                "n-gram index given for a model without an encoder".into(),
            )),
            (true, None) => Err(Error::Config(format!(
                "encoder={} needs an n-gram index",
                config.encoder
            ))),
            (true, Some(index)) => {
                if index.order() != config.ngram_order {
                    return Err(Error::Config(format!(
                        "n-gram index has order {}, config has ngram={}",
                        index.order(),
                        config.ngram_order
                    )));
                }
                if index.word_count() != config.vocab_size {
                    return Err(Error::Config(format!(
                        "n-gram index covers {} words, config has vocab_size={}",
                        index.word_count(),
                        config.vocab_size
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn ngram_index(&self) -> Option<&NgramIndex> {
        self.ngrams.as_ref()
    }

    pub fn zero_state(&self, batch: usize) -> LstmState<T> {
        LstmState::zeros(self.config.layers, batch, self.config.hidden_dim)
    }

    /// Composed vectors for the given gram segments using `store`'s values.
    fn compose(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        segments: &GramSegments,
    ) -> Result<Var> {
        let table = g.param(store, self.ids.ngram.expect("composition model"));
        let attention = self.ids.attention.map(|a| g.param(store, a));
        Ok(compose_segments(g, self.config.encoder, table, attention, segments)?.vectors)
    }

    /// Forward pass with this model's parameters.
    pub fn forward(
        &self,
        g: &mut Graph<T>,
        batch: &Batch,
        state: &LstmState<T>,
        dropout_rng: Option<&mut dyn RngCore>,
    ) -> Result<ForwardOutput<T>> {
        self.forward_with(&self.params, g, batch, state, dropout_rng)
    }

    /// Forward pass reading parameter values from `store`, which must have
    /// this model's layout. Dropout is applied only when an RNG is given.
    pub fn forward_with(
        &self,
        store: &ParamStore<T>,
        g: &mut Graph<T>,
        batch: &Batch,
        state: &LstmState<T>,
        dropout_rng: Option<&mut dyn RngCore>,
    ) -> Result<ForwardOutput<T>> {
        self.forward_impl(store, g, batch, state, dropout_rng, None)
    }

    fn forward_impl(
        &self,
        store: &ParamStore<T>,
        g: &mut Graph<T>,
        batch: &Batch,
        state: &LstmState<T>,
        mut dropout_rng: Option<&mut dyn RngCore>,
        frozen: Option<&Tensor<T>>,
    ) -> Result<ForwardOutput<T>> {
        let cfg = &self.config;
        let (b, steps) = (batch.batch_size, batch.seq_len);
        if state.layers.len() != cfg.layers || state.batch_size() != b {
            return Err(Error::shape(
                "forward state",
                &[state.layers.len(), state.batch_size()],
                &[cfg.layers, b],
            ));
        }
        let ids = batch.inputs_time_major();
        if let Some(&bad) = ids.iter().find(|&&w| w >= cfg.vocab_size) {
            return Err(Error::Index {
                op: "forward input",
                index: bad,
                bound: cfg.vocab_size,
            });
        }

        let word = self.ids.word.map(|p| g.param(store, p));
        let word2 = self.ids.word2.map(|p| g.param(store, p));
        let all_composed = match frozen {
            Some(c) => Some(g.constant(c.clone())),
            None if cfg.tying == Tying::TieEPlusC => {
                let index = self.ngrams.as_ref().expect("checked at construction");
                Some(self.compose(g, store, index.all_words())?)
            }
            None => None,
        };

        // Input embeddings for all T·B positions.
        let mut parts = Vec::new();
        if cfg.input_mode.uses_word_embedding() {
            parts.push(g.embedding_lookup(word.expect("word matrix"), &ids)?);
        }
        if let Some(w2) = word2 {
            parts.push(g.embedding_lookup(w2, &ids)?);
        }
        if cfg.input_mode.uses_composition() {
            let rows = match all_composed {
                Some(c) => g.embedding_lookup(c, &ids)?,
                None => {
                    let index = self.ngrams.as_ref().expect("checked at construction");
                    let mut local = HashMap::new();
                    let mut unique = Vec::new();
                    let positions: Vec<usize> = ids
                        .iter()
                        .map(|&w| {
                            *local.entry(w).or_insert_with(|| {
                                unique.push(w);
                                unique.len() - 1
                            })
                        })
                        .collect();
                    let composed = self.compose(g, store, &index.segments_for(&unique))?;
                    g.embedding_lookup(composed, &positions)?
                }
            };
            parts.push(rows);
        }
        let mut x = parts[0];
        for &p in &parts[1..] {
            x = g.add(x, p)?;
        }
        if let Some(rng) = dropout_rng.as_deref_mut() {
            x = g.dropout(x, cfg.dropout.input, rng)?;
        }

        let mut final_state = Vec::with_capacity(cfg.layers);
        for (l, layer) in self.ids.layers.iter().enumerate() {
            let w_x = g.param(store, layer.w_x);
            let w_h = g.param(store, layer.w_h);
            let bias = g.param(store, layer.bias);
            let proj = g.matmul(x, w_x)?;
            let proj = g.add_row(proj, bias)?;
            let (h0, c0) = &state.layers[l];
            let mut h = g.constant(h0.clone());
            let mut c = g.constant(c0.clone());
            let mut outputs = Vec::with_capacity(steps);
            for t in 0..steps {
                let pre = g.slice_rows(proj, t * b, b)?;
                (h, c) = lstm_step(g, pre, h, c, w_h)?;
                outputs.push(h);
            }
            final_state.push((g.value(h).clone(), g.value(c).clone()));
            x = g.concat_rows(&outputs)?;
            if let Some(rng) = dropout_rng.as_deref_mut() {
                let p = if l + 1 < cfg.layers {
                    cfg.dropout.hidden
                } else {
                    cfg.dropout.output
                };
                x = g.dropout(x, p, rng)?;
            }
        }

        let out_matrix = match cfg.tying {
            Tying::Untied => g.param(store, self.ids.out_weight.expect("untied weight")),
            Tying::TieE | Tying::TieEPlusC => {
                let mut m = None;
                let word_side = cfg.input_mode.uses_word_embedding() || cfg.tying == Tying::TieE;
                if word_side {
                    m = word;
                    if let (Some(a), Some(b2)) = (m, word2) {
                        m = Some(g.add(a, b2)?);
                    }
                }
                if let (Tying::TieEPlusC, Some(c)) = (cfg.tying, all_composed) {
                    m = Some(match m {
                        Some(a) => g.add(a, c)?,
                        None => c,
                    });
                }
                m.expect("tied output matrix")
            }
        };
        let logits = g.matmul_nt(x, out_matrix)?;
        let out_bias = g.param(store, self.ids.out_bias);
        let logits = g.add_row(logits, out_bias)?;
        Ok(ForwardOutput {
            logits,
            state: LstmState {
                layers: final_state,
            },
        })
    }

    /// Mean token cross-entropy of a batch's targets.
    pub fn sequence_loss(&self, g: &mut Graph<T>, logits: Var, batch: &Batch) -> Result<Var> {
        g.cross_entropy(logits, &batch.targets_time_major())
    }

    /// Logits without dropout, as a plain tensor.
    pub fn logits(&self, batch: &Batch, state: &LstmState<T>) -> Result<(Tensor<T>, LstmState<T>)> {
        self.logits_frozen(batch, state, None)
    }

    /// Like [`logits`](Self::logits), reusing composed vectors from
    /// [`composed_vectors`](Self::composed_vectors) instead of recomposing
    /// them for every batch. `composed` must come from the current parameters.
    pub fn logits_frozen(
        &self,
        batch: &Batch,
        state: &LstmState<T>,
        composed: Option<&Tensor<T>>,
    ) -> Result<(Tensor<T>, LstmState<T>)> {
        if let Some(c) = composed {
            let want = [self.config.vocab_size, self.config.embed_dim];
            if c.shape() != want {
                return Err(Error::shape("logits_frozen", c.shape(), &want));
            }
        }
        let mut g = Graph::new();
        let out = self.forward_impl(&self.params, &mut g, batch, state, None, composed)?;
        Ok((g.value(out.logits).clone(), out.state))
    }

    /// Composed vectors `C` of every word (`V × D`).
    pub fn composed_vectors(&self) -> Result<Tensor<T>> {
        let index = self
            .ngrams
            .as_ref()
            .ok_or_else(|| Error::Config("model has no n-gram encoder (encoder=none)".into()))?;
        let mut g = Graph::new();
        let c = self.compose(&mut g, &self.params, index.all_words())?;
        Ok(g.value(c).clone())
    }

    /// The word embedding matrix `E` (`V × D`).
    pub fn word_embeddings(&self) -> Result<&Tensor<T>> {
        self.ids
            .word
            .map(|id| self.params.value(id))
            .ok_or_else(|| Error::Config("model has no word embedding matrix E".into()))
    }

    /// Recomputes `E + C` from the current parameters, i.e. the output
    /// matrix of an `E + C` tied model (one row per word).
    pub fn refresh_tied_output(&self) -> Result<Tensor<T>> {
        if self.config.tying != Tying::TieEPlusC {
            return Err(Error::Config(format!(
                "refresh_tied_output needs tying=tie_e_plus_c, model has tying={}",
                self.config.tying
            )));
        }
        let mut g = Graph::new();
        let index = self.ngrams.as_ref().expect("checked at construction");
        let c = self.compose(&mut g, &self.params, index.all_words())?;
        if !self.config.input_mode.uses_word_embedding() {
            return Ok(g.value(c).clone());
        }
        let mut m = g.param(&self.params, self.ids.word.expect("word matrix"));
        if let Some(w2) = self.ids.word2 {
            let e2 = g.param(&self.params, w2);
            m = g.add(m, e2)?;
        }
        let m = g.add(m, c)?;
        Ok(g.value(m).clone())
    }

    /// The LSTM input `e_t` for one word (`1 × D`), without dropout.
    pub fn embed_input(&self, word: usize) -> Result<Tensor<T>> {
        let batch = Batch {
            inputs: vec![word],
            targets: vec![0],
            batch_size: 1,
            seq_len: 1,
        };
        if word >= self.config.vocab_size {
            return Err(Error::Index {
                op: "embed_input",
                index: word,
                bound: self.config.vocab_size,
            });
        }
        let mut g = Graph::new();
        let mut parts = Vec::new();
        if self.config.input_mode.uses_word_embedding() {
            let e = g.param(&self.params, self.ids.word.expect("word matrix"));
            parts.push(g.embedding_lookup(e, &batch.inputs)?);
        }
        if let Some(w2) = self.ids.word2 {
            let e2 = g.param(&self.params, w2);
            parts.push(g.embedding_lookup(e2, &batch.inputs)?);
        }
        if self.config.input_mode.uses_composition() {
            let index = self.ngrams.as_ref().expect("checked at construction");
            parts.push(self.compose(&mut g, &self.params, &index.segments_for(&[word]))?);
        }
        let mut x = parts[0];
        for &p in &parts[1..] {
            x = g.add(x, p)?;
        }
        Ok(g.value(x).clone())
    }

    /// Attention weights of a word under the model's encoder.
    pub fn word_attention(&self, word: usize, vocab_surface: &str) -> Result<AttentionRecord<T>> {
        let index = self
            .ngrams
            .as_ref()
            .ok_or_else(|| Error::Config("model has no n-gram encoder (encoder=none)".into()))?;
        let grams = index.grams_of(word);
        if grams.is_empty() {
            return Err(Error::SpecialToken(vocab_surface.to_owned()));
        }
        let mut g = Graph::new();
        let table = g.param(&self.params, self.ids.ngram.expect("composition model"));
        let attention = self.ids.attention.map(|a| g.param(&self.params, a));
        let out = compose_segments(
            &mut g,
            self.config.encoder,
            table,
            attention,
            &index.segments_for(&[word]),
        )?;
        let weights = match (self.config.encoder, out.weights) {
            (EncoderKind::Ms, Some(w)) => AttentionWeights::PerDimension(g.value(w).transpose()?),
            (EncoderKind::Ss, Some(w)) => AttentionWeights::Scalar(g.value(w).data().to_vec()),
            // Sum weighs every gram by one.
            _ => AttentionWeights::Scalar(vec![T::one(); grams.len()]),
        };
        Ok(AttentionRecord {
            word: Some(word),
            gram_ids: grams.to_vec(),
            weights,
        })
    }
}
