use std::collections::BTreeMap;

use log::info;
use ngramlm_core::corpus::{build_ngram_index, read_tokens, DEFAULT_SPECIALS, EOS};
use ngramlm_core::trainer::{save_checkpoint, CheckpointInfo};
use ngramlm_core::{build_vocabulary, evaluate, train, LanguageModel, Scalar};
use serde::Serialize;

use crate::config::{Precision, RunConfig};
use crate::error::CliError;
use crate::output::{write_json, JsonLines, RunFiles};

#[derive(Serialize)]
struct Summary {
    vocab_size: usize,
    ngram_types: Option<usize>,
    train_tokens: usize,
    valid_tokens: usize,
    parameters: usize,
    epochs_run: usize,
    best_epoch: Option<usize>,
    best_valid_ppl: Option<f64>,
    test_ppl: Option<f64>,
    aborted: Option<String>,
    checkpoint: String,
    metrics: String,
}

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate()?;
    match cfg.precision {
        Precision::F32 => run_typed::<f32>(cfg),
        Precision::F64 => run_typed::<f64>(cfg),
    }
}

fn run_typed<T: Scalar>(cfg: &RunConfig) -> Result<(), CliError> {
    let tokens = read_tokens(&cfg.train_file, Some(EOS))?;
    let vocab = build_vocabulary(&tokens, DEFAULT_SPECIALS)?;
    let mut train_ids = vocab.encode(&tokens)?;
    if let Some(cap) = cfg.max_train_tokens {
        train_ids.truncate(cap);
    }
    let valid_ids = vocab.encode(&read_tokens(&cfg.valid_file, Some(EOS))?)?;
    let test_ids = match &cfg.test_file {
        Some(path) => Some(vocab.encode(&read_tokens(path, Some(EOS))?)?),
        None => None,
    };

    let model_cfg = cfg.model.to_config(vocab.len());
    let ngrams = match model_cfg.has_composition() {
        true => Some(build_ngram_index(&vocab, model_cfg.ngram_order)?),
        false => None,
    };
    let ngram_types = ngrams.as_ref().map(|n| n.len());
    let mut model = LanguageModel::<T>::seeded(model_cfg, ngrams, cfg.train.seed)?;
    info!(
        "vocabulary {} words, {} training tokens, {} parameters{}",
        vocab.len(),
        train_ids.len(),
        model.params().numel(),
        ngram_types.map_or(String::new(), |g| format!(", {g} n-gram types"))
    );

    let files = RunFiles::next_free(&cfg.output_dir)?;
    let mut resolved = serde_json::to_value(cfg)?;
    resolved["vocab_size"] = vocab.len().into();
    write_json(&files.config, &resolved)?;
    let mut metrics = JsonLines::create(&files.metrics)?;
    let mut on_epoch = |r: &ngramlm_core::trainer::EpochRecord| {
        info!(
            "epoch {:>3}  train loss {:.4}  valid ppl {}  lr {:.4}  {:.1}s",
            r.epoch,
            r.train_loss,
            r.valid_ppl.map_or("-".into(), |p| format!("{p:.2}")),
            r.lr,
            r.seconds
        );
        metrics
            .write(r)
            .map_err(|e| ngramlm_core::Error::Io(std::io::Error::other(e.message)))
    };
    let outcome = train(
        &mut model,
        &train_ids,
        &valid_ids,
        &cfg.train,
        &mut on_epoch,
    )?;

    let test_ppl = match (&test_ids, &outcome.aborted) {
        (Some(ids), None) => {
            Some(evaluate(&model, ids, cfg.train.eval_batch_size, cfg.train.bptt)?.ppl())
        }
        _ => None,
    };
    let mut scores = BTreeMap::new();
    if let Some(p) = outcome.best_valid_ppl {
        scores.insert("valid_ppl".to_owned(), p);
    }
    if let Some(p) = test_ppl {
        scores.insert("test_ppl".to_owned(), p);
    }
    let info = CheckpointInfo {
        epoch: outcome.best_epoch,
        metrics: scores,
        train: Some(cfg.train.clone()),
    };
    save_checkpoint(&files.checkpoint, &model, &vocab, &info)?;

    let summary = Summary {
        vocab_size: vocab.len(),
        ngram_types,
        train_tokens: train_ids.len(),
        valid_tokens: valid_ids.len(),
        parameters: model.params().numel(),
        epochs_run: outcome.history.len(),
        best_epoch: outcome.best_epoch,
        best_valid_ppl: outcome.best_valid_ppl,
        test_ppl,
        aborted: outcome.aborted.clone(),
        checkpoint: files.checkpoint.display().to_string(),
        metrics: files.metrics.display().to_string(),
    };
    write_json(&files.summary, &summary)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    match outcome.aborted {
        Some(why) => Err(CliError::numeric(format!(
            "training aborted ({why}); best parameters saved to {}",
            files.checkpoint.display()
        ))),
        None => Ok(()),
    }
}
