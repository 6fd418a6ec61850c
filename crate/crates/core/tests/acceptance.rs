//! Acceptance runner: one PASS / FAIL / SKIP line per criterion.
//!
//! Criteria that need the Penn Treebank read it from `$NGRAMLM_PTB_DIR`
//! (`ptb.train.txt`, `ptb.valid.txt`). The desk-scale training comparisons
//! additionally need `NGRAMLM_DESK=1`; `NGRAMLM_DESK_EPOCHS` overrides the
//! epoch count (default 3).

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use common::*;
use ngramlm_core::composer::{compose_ms, compose_ss, AttentionWeights};
use ngramlm_core::corpus::{build_ngram_index, read_tokens, DEFAULT_SPECIALS, EOS};
use ngramlm_core::trainer::{
    save_checkpoint, CheckpointInfo, MANIFEST_FILE, NGRAMS_FILE, TENSORS_FILE, VOCAB_FILE,
};
use ngramlm_core::{
    build_vocabulary, evaluate, evaluate_by_frequency, extract_ngrams, load_checkpoint, train,
    BucketOn, EncoderKind, InputMode, LanguageModel, ModelConfig, Tensor, TrainConfig, Tying,
    Vocabulary,
};
use rand::Rng;

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

use Verdict::{Fail, Pass, Skip};

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Pass(detail)
    } else {
        Fail(detail)
    }
}

struct Runner {
    failures: usize,
}

impl Runner {
    fn run(&mut self, id: u32, name: &str, budget: Duration, f: impl FnOnce() -> Verdict) {
        let started = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f));
        let elapsed = started.elapsed();
        let mut v = result.unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Fail(format!("panicked: {msg}"))
        });
        if let Pass(detail) = &v {
            if elapsed > budget {
                v = Fail(format!("{detail}; over time budget"));
            }
        }
        let (tag, detail) = match v {
            Pass(d) => ("PASS", d),
            Fail(d) => {
                self.failures += 1;
                ("FAIL", d)
            }
            Skip(d) => ("SKIP", d),
        };
        println!(
            "[{tag}] {id:>2}. {name}: {detail} ({:.1}s of {}s)",
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
}

fn ptb_dir() -> Option<PathBuf> {
    let dir = PathBuf::from(std::env::var_os("NGRAMLM_PTB_DIR")?);
    dir.join("ptb.train.txt").is_file().then_some(dir)
}

fn desk_enabled() -> bool {
    std::env::var("NGRAMLM_DESK").is_ok_and(|v| v == "1")
}

fn c1_gradients() -> Verdict {
    let mut worst = (String::new(), 0.0f64);
    for seed in 0..20 {
        for (op, err) in op_grad_errors(seed).unwrap() {
            if err > worst.1 {
                worst = (format!("{op} (seed {seed})"), err);
            }
        }
    }
    let ops = worst.clone();
    for (label, err) in lm_grad_check_all_modes(0) {
        if err > worst.1 {
            worst = (format!("LM {label}"), err);
        }
    }
    verdict(
        worst.1 < GRAD_TOL,
        format!(
            "worst op {} {:.1e}; worst overall {} {:.1e} (< {GRAD_TOL:.0e})",
            ops.0, ops.1, worst.0, worst.1
        ),
    )
}

fn c2_simplex() -> Verdict {
    let mut r = rng(2024);
    let mut worst_sum = 0.0f64;
    let mut outside = 0usize;
    let mut singles = 0usize;
    for draw in 0..1000 {
        let word = random_word(&mut r, 12);
        let grams = extract_ngrams(&word, 3).unwrap();
        let d = r.gen_range(1..=8);
        let scale = [0.1, 1.0, 3.0][draw % 3];
        let ids: Vec<usize> = (0..grams.len()).collect();
        let table = random(&[grams.len(), d], draw as u64).map(|v| v * scale);
        let w_c = random(&[d, d], draw as u64 + 5000).map(|v| v * scale);
        let w = random(&[1, d], draw as u64 + 9000).map(|v| v * scale);
        let (_, ms) = compose_ms(&ids, &table, &w_c).unwrap();
        let (_, ss) = compose_ss(&ids, &table, &w).unwrap();
        let AttentionWeights::PerDimension(m) = ms.weights else {
            unreachable!()
        };
        let AttentionWeights::Scalar(a) = ss.weights else {
            unreachable!()
        };
        let mut lanes: Vec<Vec<f64>> = (0..d).map(|j| m.row(j).to_vec()).collect();
        lanes.push(a);
        for lane in lanes {
            worst_sum = worst_sum.max((lane.iter().sum::<f64>() - 1.0).abs());
            if grams.len() == 1 {
                // A single gram takes the whole weight.
                singles += 1;
                outside += usize::from(lane[0] != 1.0);
            } else {
                outside += lane.iter().filter(|&&p| !(p > 0.0 && p < 1.0)).count();
            }
        }
    }
    verdict(
        worst_sum <= 1e-5 && outside == 0,
        format!(
            "1000 draws, max |Σ−1| {worst_sum:.1e}, {outside} weights outside (0,1), {singles} single-gram lanes at exactly 1"
        ),
    )
}

fn c3_reductions() -> Verdict {
    let (vocab, ids) = toy_corpus();
    let mut bitwise = true;
    for (seed, tying) in (0..3).zip(TYINGS) {
        let (with_c, plain) = zero_c_pair(&vocab, tying, seed);
        let batch = batch_from(&ids, 2, 6);
        let (a, _) = with_c.logits(&batch, &with_c.zero_state(2)).unwrap();
        let (b, _) = plain.logits(&batch, &plain.zero_state(2)).unwrap();
        bitwise &= a.data() == b.data();
    }

    let mut r = rng(3);
    let mut mean_err = 0.0f64;
    let mut single_exact = true;
    for draw in 0..500u64 {
        let word = random_word(&mut r, 10);
        let n = r.gen_range(2..=5);
        let ids: Vec<usize> = (0..extract_ngrams(&word, n).unwrap().len()).collect();
        let d = r.gen_range(1..=6);
        let table = random(&[ids.len(), d], draw);
        let (c, _) = compose_ms(&ids, &table, &Tensor::zeros(&[d, d])).unwrap();
        for j in 0..d {
            let mean = (0..ids.len()).map(|i| table.get(i, j)).sum::<f64>() / ids.len() as f64;
            mean_err = mean_err.max((c.get(0, j) - mean).abs());
        }
        let w_c = random(&[d, d], draw + 1);
        let (one, _) = compose_ms(&[0], &table, &w_c).unwrap();
        single_exact &= one.row(0) == table.row(0);
    }
    verdict(
        bitwise && mean_err <= 1e-6 && single_exact,
        format!(
            "(a) zero n-grams ≡ word_only bitwise: {bitwise}; (b) W_c=0 mean error {mean_err:.1e}; (c) single gram exact: {single_exact}"
        ),
    )
}

fn c4_ngrams() -> Verdict {
    let mut r = rng(4);
    let mut mismatches = 0;
    for _ in 0..10_000 {
        let word = random_word(&mut r, 30);
        for n in 2..=5 {
            if extract_ngrams(&word, n).unwrap() != brute_force_ngrams(&word, n) {
                mismatches += 1;
            }
        }
    }
    let example = extract_ngrams("the", 3).unwrap();
    verdict(
        mismatches == 0 && example == ["^th", "the", "he$"],
        format!("10,000 words × n∈2..5: {mismatches} mismatches; \"the\" → {example:?}"),
    )
}

fn ptb_vocab(dir: &std::path::Path) -> (Vec<String>, Vocabulary) {
    let tokens = read_tokens(dir.join("ptb.train.txt"), Some(EOS)).unwrap();
    let vocab = build_vocabulary(&tokens, DEFAULT_SPECIALS).unwrap();
    (tokens, vocab)
}

fn c5_dataset() -> Verdict {
    let Some(dir) = ptb_dir() else {
        return Skip("NGRAMLM_PTB_DIR not set or has no ptb.train.txt".into());
    };
    let (tokens, vocab) = ptb_vocab(&dir);
    let index = build_ngram_index(&vocab, 3).unwrap();
    let grams = index.len() as f64;
    let delta = (grams - 5258.0) / 5258.0;
    verdict(
        vocab.len() == 10_000 && tokens.len() == 929_590 && delta.abs() <= 0.01,
        format!(
            "V={} (want 10000), train tokens={} (want 929590), char-3-gram types={} ({:+.2}% vs 5258; special tokens excluded)",
            vocab.len(),
            tokens.len(),
            index.len(),
            100.0 * delta
        ),
    )
}

fn c6_learning() -> Verdict {
    let train_ids = cyclic(5, 200);
    let valid_ids: Vec<usize> = (3..103).map(|i| i % 5).collect();
    let tc = TrainConfig {
        lr: 1.0,
        clip_norm: 0.25,
        epochs: 50,
        batch_size: 2,
        bptt: 10,
        eval_batch_size: 2,
        ..TrainConfig::default()
    };
    let mut model = cyclic_model(5, 32, 0);
    let out = train(&mut model, &train_ids, &valid_ids, &tc, &mut |_| Ok(())).unwrap();
    let best = out.best_valid_ppl.unwrap_or(f64::INFINITY);
    let first = out
        .history
        .iter()
        .find(|r| r.valid_ppl.is_some_and(|p| p < 1.2))
        .map(|r| r.epoch);

    let mut uniform = cyclic_model(5, 32, 1);
    for p in uniform.params_mut().iter_mut() {
        p.value.fill(0.0);
    }
    let u = evaluate(&uniform, &valid_ids, 2, 10).unwrap().ppl();
    let rel = (u - 5.0).abs() / 5.0;
    verdict(
        best < 1.2 && rel <= 1e-3,
        format!(
            "best valid ppl {best:.4} (first < 1.2 at epoch {first:?}); uniform ppl {u:.6} vs V=5"
        ),
    )
}

fn desk_config(vocab: usize, encoder: EncoderKind) -> ModelConfig {
    match encoder {
        EncoderKind::None => ModelConfig::baseline(vocab),
        enc => ModelConfig::with_ngrams(vocab, 3, enc),
    }
}

static DESK_CACHE: Mutex<BTreeMap<EncoderKind, f64>> = Mutex::new(BTreeMap::new());

/// Mean best validation perplexity over three seeds for each encoder.
fn desk_means(encoders: &[EncoderKind]) -> Result<Vec<f64>, String> {
    let dir = ptb_dir().ok_or("NGRAMLM_PTB_DIR not set or has no ptb.train.txt")?;
    if !desk_enabled() {
        return Err("set NGRAMLM_DESK=1 to run the desk-scale training comparison".into());
    }
    let epochs = std::env::var("NGRAMLM_DESK_EPOCHS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(3);
    let (tokens, vocab) = ptb_vocab(&dir);
    let train_ids = vocab.encode(&tokens[..100_000]).unwrap();
    let valid_tokens = read_tokens(dir.join("ptb.valid.txt"), Some(EOS)).unwrap();
    let valid_ids = vocab.encode(&valid_tokens).unwrap();
    let index = build_ngram_index(&vocab, 3).unwrap();
    let mut means = Vec::new();
    for &enc in encoders {
        // Runs shared between criteria are trained once.
        if let Some(&m) = DESK_CACHE.lock().unwrap().get(&enc) {
            means.push(m);
            continue;
        }
        let mut total = 0.0;
        for seed in 1..=3 {
            let cfg = desk_config(vocab.len(), enc);
            let ngrams = cfg.has_composition().then(|| index.clone());
            let mut model = LanguageModel::<f32>::new(cfg, ngrams, &mut rng(seed)).unwrap();
            let tc = TrainConfig {
                epochs,
                seed,
                ..TrainConfig::default()
            };
            let out = train(&mut model, &train_ids, &valid_ids, &tc, &mut |_| Ok(())).unwrap();
            if let Some(why) = out.aborted {
                return Err(format!("{enc} seed {seed} aborted: {why}"));
            }
            total += out.best_valid_ppl.unwrap();
        }
        DESK_CACHE.lock().unwrap().insert(enc, total / 3.0);
        means.push(total / 3.0);
    }
    Ok(means)
}

fn directional(encoders: [EncoderKind; 2], labels: [&str; 2]) -> Verdict {
    match desk_means(&encoders) {
        Err(why) => Skip(why),
        Ok(m) => verdict(
            m[0] <= m[1] + 1.0,
            format!(
                "mean valid ppl over 3 seeds: {} {:.2}, {} {:.2} (fails only if {} is worse by > 1)",
                labels[0], m[0], labels[1], m[1], labels[0]
            ),
        ),
    }
}

fn c9_buckets() -> Verdict {
    let (vocab, ids) = toy_corpus();
    let cfg = toy_config(
        vocab.len(),
        4,
        EncoderKind::Ms,
        InputMode::WordPlusChar,
        Tying::TieEPlusC,
    );
    let model = toy_model(cfg, &vocab, 0.5, 9);
    let mut worst = 0.0f64;
    let mut degenerate = true;
    for bucket_on in [BucketOn::Input, BucketOn::Target] {
        for threshold in [0, 1, 2, 3, 4, 6, u64::MAX] {
            let rep =
                evaluate_by_frequency(&model, &ids, &vocab, threshold, bucket_on, 2, 4).unwrap();
            let parts: Vec<_> = [rep.infrequent, rep.frequent]
                .into_iter()
                .flatten()
                .collect();
            let count: usize = parts.iter().map(|p| p.positions).sum();
            let nll: f64 = parts
                .iter()
                .map(|p| p.mean_nll() * p.positions as f64)
                .sum::<f64>()
                / count as f64;
            worst = worst.max((nll - rep.overall.mean_nll()).abs());
            degenerate &= count == rep.overall.positions;
            if threshold == 0 {
                degenerate &= rep.infrequent.is_none() && rep.frequent == Some(rep.overall);
            }
            if threshold == u64::MAX {
                degenerate &= rep.frequent.is_none() && rep.infrequent == Some(rep.overall);
            }
        }
    }
    verdict(
        worst <= 1e-6 && degenerate,
        format!("max |weighted bucket NLL − overall| {worst:.1e}; degenerate thresholds ok: {degenerate}"),
    )
}

fn c10_checkpoints() -> Verdict {
    let (vocab, ids) = toy_corpus();
    let cfg = toy_config(
        vocab.len(),
        4,
        EncoderKind::Ms,
        InputMode::WordPlusChar,
        Tying::TieEPlusC,
    );
    let m64 = toy_model(cfg, &vocab, 0.5, 10);
    let dir = tempfile::tempdir().unwrap();
    save_checkpoint(dir.path(), &m64, &vocab, &CheckpointInfo::default()).unwrap();
    let back = load_checkpoint::<f64>(dir.path()).unwrap().model;
    let same64 = evaluate(&m64, &ids, 2, 4).unwrap().nll_sum.to_bits()
        == evaluate(&back, &ids, 2, 4).unwrap().nll_sum.to_bits();

    let m32 = load_checkpoint::<f32>(dir.path()).unwrap().model;
    let dir32 = tempfile::tempdir().unwrap();
    save_checkpoint(dir32.path(), &m32, &vocab, &CheckpointInfo::default()).unwrap();
    let back32 = load_checkpoint::<f32>(dir32.path()).unwrap().model;
    let same32 = evaluate(&m32, &ids, 2, 4).unwrap().nll_sum.to_bits()
        == evaluate(&back32, &ids, 2, 4).unwrap().nll_sum.to_bits();

    let mut r = rng(10);
    let mut accepted = Vec::new();
    let files = [TENSORS_FILE, MANIFEST_FILE, VOCAB_FILE, NGRAMS_FILE];
    for _ in 0..100 {
        let name = files[r.gen_range(0..files.len())];
        let path = dir.path().join(name);
        let original = std::fs::read(&path).unwrap();
        let cut = r.gen_range(0..original.len());
        std::fs::write(&path, &original[..cut]).unwrap();
        if load_checkpoint::<f64>(dir.path()).is_ok() {
            accepted.push(format!("{name}@{cut}"));
        }
        std::fs::write(&path, &original).unwrap();
    }
    verdict(
        same64 && same32 && accepted.is_empty(),
        format!(
            "bitwise ppl f64: {same64}, f32: {same32}; truncations accepted: {}/100 {accepted:?}",
            accepted.len()
        ),
    )
}

fn main() {
    let mut runner = Runner { failures: 0 };
    let mins = |m: u64| Duration::from_secs(60 * m);
    runner.run(1, "gradient correctness", mins(2), c1_gradients);
    runner.run(2, "attention simplex", Duration::from_secs(30), c2_simplex);
    runner.run(
        3,
        "reduction identities",
        Duration::from_secs(10),
        c3_reductions,
    );
    runner.run(4, "n-gram extraction oracle", mins(1), c4_ngrams);
    runner.run(5, "dataset statistics", mins(1), c5_dataset);
    runner.run(6, "learning smoke test", mins(5), c6_learning);
    runner.run(7, "char3-MS-vec vs word-only (desk)", mins(60), || {
        directional(
            [EncoderKind::Ms, EncoderKind::None],
            ["char3-MS-vec", "word-only"],
        )
    });
    runner.run(8, "char3-MS-vec vs char3-Sum-vec (desk)", mins(60), || {
        directional(
            [EncoderKind::Ms, EncoderKind::Sum],
            ["char3-MS-vec", "char3-Sum-vec"],
        )
    });
    runner.run(9, "frequency-bucket consistency", mins(1), c9_buckets);
    runner.run(10, "checkpoint round-trip", mins(1), c10_checkpoints);
    if runner.failures > 0 {
        println!("{} criteria failed", runner.failures);
        std::process::exit(1);
    }
}
