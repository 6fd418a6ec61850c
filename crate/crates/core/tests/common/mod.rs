//! Fixtures shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

use ngramlm_core::corpus::{build_ngram_index, tokenize, DEFAULT_SPECIALS, EOS};
use ngramlm_core::lm::DropoutConfig;
use ngramlm_core::numerics::{
    grad_check, grad_check_params, lstm_cell, Axis, GradCheckReport, LstmWeights,
};
use ngramlm_core::{
    build_vocabulary, Batch, EncoderKind, Graph, InputMode, LanguageModel, ModelConfig, ParamStore,
    Result, Tensor, Tying, Var, Vocabulary,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const EPS: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;

pub const TOY_TEXT: &str = "the cat sat on the mat\n\
the dog ran to a cat\n\
<unk> sat on a log\n\
a dog and the cat ran\n";

pub const INPUT_MODES: [InputMode; 4] = [
    InputMode::WordPlusChar,
    InputMode::CharOnly,
    InputMode::WordOnly,
    InputMode::TwoWordEmbeds,
];
pub const TYINGS: [Tying; 3] = [Tying::TieE, Tying::TieEPlusC, Tying::Untied];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
    Tensor::uniform(shape, -1.0, 1.0, &mut rng(seed))
}

pub fn toy_corpus() -> (Vocabulary, Vec<usize>) {
    let tokens = tokenize(TOY_TEXT, Some(EOS));
    let vocab = build_vocabulary(&tokens, DEFAULT_SPECIALS).unwrap();
    let ids = vocab.encode(&tokens).unwrap();
    (vocab, ids)
}

pub fn toy_config(
    v: usize,
    dim: usize,
    encoder: EncoderKind,
    input_mode: InputMode,
    tying: Tying,
) -> ModelConfig {
    ModelConfig {
        vocab_size: v,
        embed_dim: dim,
        hidden_dim: dim,
        layers: 2,
        ngram_order: if encoder == EncoderKind::None { 0 } else { 3 },
        encoder,
        input_mode,
        tying,
        dropout: DropoutConfig::none(),
    }
}

/// Toy model whose parameters are all redrawn from uniform(±`scale`).
pub fn toy_model(
    config: ModelConfig,
    vocab: &Vocabulary,
    scale: f64,
    seed: u64,
) -> LanguageModel<f64> {
    let index = config
        .has_composition()
        .then(|| build_ngram_index(vocab, config.ngram_order).unwrap());
    let mut r = rng(seed);
    let mut model = LanguageModel::new(config, index, &mut r).unwrap();
    for p in model.params_mut().iter_mut() {
        let shape = p.value.shape().to_vec();
        p.value = Tensor::uniform(&shape, -scale, scale, &mut r);
    }
    model
}

pub fn batch_from(ids: &[usize], b: usize, t: usize) -> Batch {
    let row = ids.len() / b;
    assert!(row > t);
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for r in 0..b {
        inputs.extend_from_slice(&ids[r * row..r * row + t]);
        targets.extend_from_slice(&ids[r * row + 1..r * row + t + 1]);
    }
    Batch {
        inputs,
        targets,
        batch_size: b,
        seq_len: t,
    }
}

/// Finite-difference check of the full one-batch loss with respect to every
/// parameter.
pub fn lm_grad_check(model: &LanguageModel<f64>, batch: &Batch) -> Result<GradCheckReport> {
    let state = model.zero_state(batch.batch_size);
    grad_check_params(
        |g, store| {
            let out = model.forward_with(store, g, batch, &state, None)?;
            model.sequence_loss(g, out.logits, batch)
        },
        model.params(),
        EPS,
    )
}

/// Worst relative error of the LM loss gradient over every input mode ×
/// tying combination (MS encoder), plus SS and Sum in the default mode.
pub fn lm_grad_check_all_modes(seed: u64) -> Vec<(String, f64)> {
    let (vocab, ids) = toy_corpus();
    let batch = batch_from(&ids, 2, 4);
    let mut out = Vec::new();
    let mut run = |label: String, cfg: ModelConfig| {
        let model = toy_model(cfg, &vocab, 0.5, seed);
        let report = lm_grad_check(&model, &batch).unwrap();
        out.push((label, report.max_rel_error));
    };
    for mode in INPUT_MODES {
        for tying in TYINGS {
            run(
                format!("{mode}/{tying}"),
                toy_config(vocab.len(), 3, EncoderKind::Ms, mode, tying),
            );
        }
    }
    for enc in [EncoderKind::Ss, EncoderKind::Sum] {
        run(
            format!("{enc}/word_plus_char/tie_e_plus_c"),
            toy_config(
                vocab.len(),
                3,
                enc,
                InputMode::WordPlusChar,
                Tying::TieEPlusC,
            ),
        );
    }
    out
}

/// Projects `out` onto fixed random weights so that every output entry
/// contributes to the scalar loss with a different sign and size.
fn probe(g: &mut Graph<f64>, out: Var, seed: u64) -> Result<Var> {
    let shape = g.value(out).shape().to_vec();
    let w = g.constant(random(&shape, seed ^ 0x5eed));
    let p = g.mul(out, w)?;
    Ok(g.sum_all(p))
}

fn check1(
    x: &Tensor<f64>,
    seed: u64,
    op: impl Fn(&mut Graph<f64>, Var) -> Result<Var>,
) -> Result<f64> {
    grad_check(
        |g, v| {
            let out = op(g, v)?;
            probe(g, out, seed)
        },
        x,
        EPS,
    )
}

fn check2(
    a: &Tensor<f64>,
    b: &Tensor<f64>,
    seed: u64,
    op: impl Fn(&mut Graph<f64>, Var, Var) -> Result<Var>,
) -> Result<f64> {
    let left = check1(a, seed, |g, v| {
        let c = g.constant(b.clone());
        op(g, v, c)
    })?;
    let right = check1(b, seed, |g, v| {
        let c = g.constant(a.clone());
        op(g, c, v)
    })?;
    Ok(left.max(right))
}

/// Gradient-check error of every differentiable graph operation on random
/// shapes drawn from `seed`.
pub fn op_grad_errors(seed: u64) -> Result<Vec<(&'static str, f64)>> {
    let mut r = rng(seed);
    let mut dim = || r.gen_range(1..=4usize);
    let (m, k, n) = (dim(), dim(), dim());
    let mut s = seed * 100;
    let mut t = |shape: &[usize]| {
        s += 1;
        random(shape, s)
    };
    let mut out = Vec::new();

    for (ta, tb) in [(false, false), (true, false), (false, true), (true, true)] {
        let a = if ta { t(&[k, m]) } else { t(&[m, k]) };
        let b = if tb { t(&[n, k]) } else { t(&[k, n]) };
        let e = check2(&a, &b, seed, |g, x, y| g.matmul_t(x, ta, y, tb))?;
        out.push(("matmul_t", e));
    }
    let (a, b) = (t(&[m, k]), t(&[k, n]));
    out.push(("matmul", check2(&a, &b, seed, |g, x, y| g.matmul(x, y))?));
    let (a, b) = (t(&[m, k]), t(&[n, k]));
    out.push((
        "matmul_nt",
        check2(&a, &b, seed, |g, x, y| g.matmul_nt(x, y))?,
    ));
    out.push((
        "transpose",
        check1(&t(&[m, n]), seed, |g, x| g.transpose(x))?,
    ));
    let (a, b) = (t(&[m, n]), t(&[m, n]));
    out.push(("add", check2(&a, &b, seed, |g, x, y| g.add(x, y))?));
    out.push(("mul", check2(&a, &b, seed, |g, x, y| g.mul(x, y))?));
    let bias = t(&[1, n]);
    out.push((
        "add_row",
        check2(&a, &bias, seed, |g, x, y| g.add_row(x, y))?,
    ));
    out.push(("scale", check1(&a, seed, |g, x| Ok(g.scale(x, -1.7)))?));
    let col = t(&[m, 1]);
    out.push((
        "scale_rows",
        check2(&a, &col, seed, |g, x, y| g.scale_rows(x, y))?,
    ));
    out.push(("tanh", check1(&a, seed, |g, x| Ok(g.tanh(x)))?));
    out.push(("sigmoid", check1(&a, seed, |g, x| Ok(g.sigmoid(x)))?));
    let (p, q) = (t(&[k, n]), t(&[1, n]));
    out.push((
        "concat_rows",
        check1(&a, seed, |g, x| {
            let (p, q) = (g.constant(p.clone()), g.constant(q.clone()));
            g.concat_rows(&[p, x, q, x])
        })?,
    ));
    let tall = t(&[m + 2, n + 2]);
    out.push((
        "slice_rows",
        check1(&tall, seed, |g, x| g.slice_rows(x, 1, m))?,
    ));
    out.push((
        "slice_cols",
        check1(&tall, seed, |g, x| g.slice_cols(x, 2, n))?,
    ));
    let table = t(&[k + 1, n]);
    let ids: Vec<usize> = (0..m + 3)
        .map(|i| (i * 7 + seed as usize) % (k + 1))
        .collect();
    out.push((
        "embedding_lookup",
        check1(&table, seed, |g, x| g.embedding_lookup(x, &ids))?,
    ));
    out.push((
        "sum_over_axis(0)",
        check1(&a, seed, |g, x| g.sum_over_axis(x, Axis(0)))?,
    ));
    out.push((
        "sum_over_axis(1)",
        check1(&a, seed, |g, x| g.sum_over_axis(x, Axis(1)))?,
    ));
    out.push(("sum_all", check1(&a, seed, |g, x| Ok(g.sum_all(x)))?));
    let wide = t(&[m, n + 1]).map(|v| 3.0 * v);
    out.push((
        "softmax(0)",
        check1(&wide, seed, |g, x| g.softmax(x, Axis(0)))?,
    ));
    out.push((
        "softmax(1)",
        check1(&wide, seed, |g, x| g.softmax(x, Axis(1)))?,
    ));
    let rows = m + k + 1;
    let offsets = vec![0, m, m, rows];
    let seg = t(&[rows, n]).map(|v| 2.0 * v);
    out.push((
        "segment_softmax",
        check1(&seg, seed, |g, x| g.segment_softmax(x, &offsets))?,
    ));
    out.push((
        "segment_sum",
        check1(&seg, seed, |g, x| g.segment_sum(x, &offsets))?,
    ));
    let targets: Vec<usize> = (0..m).map(|i| (i + seed as usize) % (n + 1)).collect();
    out.push((
        "cross_entropy",
        grad_check(|g, x| g.cross_entropy(x, &targets), &wide, EPS)?,
    ));
    out.push((
        "dropout",
        check1(&a, seed, |g, x| g.dropout(x, 0.3, &mut rng(seed)))?,
    ));

    let h = n;
    let mut store = ParamStore::new();
    for (name, shape) in [
        ("x", [m, k]),
        ("h", [m, h]),
        ("c", [m, h]),
        ("w_x", [k, 4 * h]),
        ("w_h", [h, 4 * h]),
        ("bias", [1, 4 * h]),
    ] {
        store.add(name, t(&shape)).unwrap();
    }
    let report = grad_check_params(
        |g, st| {
            let v = |g: &mut Graph<f64>, name| g.param(st, st.id(name).unwrap());
            let (x, hp, cp) = (v(g, "x"), v(g, "h"), v(g, "c"));
            let w = LstmWeights {
                w_x: v(g, "w_x"),
                w_h: v(g, "w_h"),
                bias: v(g, "bias"),
            };
            let (h1, c1) = lstm_cell(g, x, hp, cp, &w)?;
            let both = g.concat_rows(&[h1, c1])?;
            probe(g, both, seed)
        },
        &store,
        EPS,
    )?;
    out.push(("lstm_cell", report.max_rel_error));
    Ok(out)
}

/// Words drawn from a small alphabet, lengths 1..=`max_len`.
pub fn random_word<R: Rng>(r: &mut R, max_len: usize) -> String {
    const ALPHABET: &[char] = &['a', 'b', 'c', 'x', 'é', '-', '\'', 'z', '1', 'ß'];
    let len = r.gen_range(1..=max_len);
    (0..len)
        .map(|_| ALPHABET[r.gen_range(0..ALPHABET.len())])
        .collect()
}

/// All length-`n` windows of `^word$`, or the padded word itself when it is
/// not longer than `n`.
pub fn brute_force_ngrams(word: &str, n: usize) -> Vec<String> {
    let padded: Vec<char> = format!("^{word}$").chars().collect();
    if padded.len() <= n {
        return vec![padded.iter().collect()];
    }
    let mut out = Vec::new();
    let mut start = 0;
    while start + n <= padded.len() {
        out.push(padded[start..start + n].iter().collect());
        start += 1;
    }
    out
}

/// Period-`v` cyclic token stream.
pub fn cyclic(v: usize, len: usize) -> Vec<usize> {
    (0..len).map(|i| i % v).collect()
}

/// Small word-only model on the cyclic vocabulary.
pub fn cyclic_model(v: usize, dim: usize, seed: u64) -> LanguageModel<f64> {
    let mut cfg = ModelConfig::baseline(v);
    cfg.embed_dim = dim;
    cfg.hidden_dim = dim;
    cfg.layers = 1;
    cfg.dropout = DropoutConfig::none();
    LanguageModel::new(cfg, None, &mut rng(seed)).unwrap()
}

/// A small graph touching most ops; returns every intermediate output
/// flattened to f64 (for precision comparisons).
pub fn probe_free_graph<T: ngramlm_core::Scalar>(
    inputs: &[Tensor<T>],
    targets: &[usize],
) -> Vec<f64> {
    let mut g = Graph::<T>::new();
    let x = g.input(inputs[0].clone());
    let w = g.input(inputs[1].clone());
    let b = g.input(inputs[2].clone());
    let h = g.matmul(x, w).unwrap();
    let h = g.add_row(h, b).unwrap();
    let t = g.tanh(h);
    let s = g.sigmoid(h);
    let p = g.mul(t, s).unwrap();
    let sm = g.softmax(p, Axis(1)).unwrap();
    let offsets = [0, p_rows(&g, p) / 2, p_rows(&g, p)];
    let ss = g.segment_softmax(p, &offsets).unwrap();
    let seg = g.segment_sum(ss, &offsets).unwrap();
    let ce = g.cross_entropy(p, targets).unwrap();
    let mut out = Vec::new();
    for v in [p, sm, ss, seg, ce] {
        out.extend(g.value(v).data().iter().map(|x| x.as_f64()));
    }
    out
}

fn p_rows<T: ngramlm_core::Scalar>(g: &Graph<T>, v: Var) -> usize {
    g.value(v).rows()
}

/// Batch of `b` rows, each a `t`-long window starting at `start` within its
/// row of `ids`.
pub fn window(ids: &[usize], b: usize, start: usize, t: usize) -> Batch {
    let row = ids.len() / b;
    assert!(start + t < row);
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for r in 0..b {
        let base = r * row + start;
        inputs.extend_from_slice(&ids[base..base + t]);
        targets.extend_from_slice(&ids[base + 1..base + t + 1]);
    }
    Batch {
        inputs,
        targets,
        batch_size: b,
        seq_len: t,
    }
}

/// `word_plus_char` model with zeroed n-gram parameters, and a `word_only`
/// model sharing its remaining parameters. `tie_e_plus_c` pairs with `tie_e`.
pub fn zero_c_pair(
    vocab: &Vocabulary,
    tying: Tying,
    seed: u64,
) -> (LanguageModel<f64>, LanguageModel<f64>) {
    let cfg = toy_config(
        vocab.len(),
        4,
        EncoderKind::Ms,
        InputMode::WordPlusChar,
        tying,
    );
    let mut with_c = toy_model(cfg, vocab, 0.3, seed);
    let mut rest = ParamStore::new();
    for p in with_c.params_mut().iter_mut() {
        if p.name == "embed.ngram" || p.name == "compose.attention" {
            p.value.fill(0.0);
        } else {
            rest.add(p.name.clone(), p.value.clone()).unwrap();
        }
    }
    let mut plain_cfg = ModelConfig::baseline(vocab.len());
    plain_cfg.embed_dim = 4;
    plain_cfg.hidden_dim = 4;
    plain_cfg.layers = 2;
    plain_cfg.dropout = DropoutConfig::none();
    plain_cfg.tying = if tying == Tying::Untied {
        Tying::Untied
    } else {
        Tying::TieE
    };
    let plain = LanguageModel::from_params(plain_cfg, None, rest).unwrap();
    (with_c, plain)
}
