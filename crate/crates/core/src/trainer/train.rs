use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::make_batches;
use crate::error::{Error, Result};
use crate::lm::LanguageModel;
use crate::numerics::{Graph, ParamStore, Scalar};
use crate::trainer::{evaluate, sgd_step};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub clip_norm: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub bptt: usize,
    /// Multiplier applied to the learning rate on a validation plateau.
    pub decay: f64,
    /// Non-improving evaluations before decaying.
    pub patience: usize,
    /// Non-improving evaluations before parameter averaging starts; 0 disables.
    pub avg_patience: usize,
    pub seed: u64,
    /// Evaluate on validation data every this many epochs (and after the last).
    pub eval_every: usize,
    pub eval_batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 5.0,
            clip_norm: 0.25,
            epochs: 10,
            batch_size: 20,
            bptt: 35,
            decay: 0.25,
            patience: 1,
            avg_patience: 0,
            seed: 1,
            eval_every: 1,
            eval_batch_size: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        // lr = 0 is accepted: it freezes the parameters.
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!(
                "lr={} must be a finite non-negative number",
                self.lr
            ));
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return bad(format!("clip_norm={} must be positive", self.clip_norm));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return bad(format!("decay={} outside (0, 1]", self.decay));
        }
        for (key, v) in [
            ("patience", self.patience),
            ("batch_size", self.batch_size),
            ("bptt", self.bptt),
            ("eval_every", self.eval_every),
            ("eval_batch_size", self.eval_batch_size),
        ] {
            if v == 0 {
                return bad(format!("{key} must be at least 1"));
            }
        }
        Ok(())
    }
}

/// One line of the metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// `None` on epochs without a validation pass.
    pub valid_ppl: Option<f64>,
    pub lr: f64,
    pub seconds: f64,
    /// Whether `valid_ppl` was measured on averaged parameters.
    pub averaged: bool,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub history: Vec<EpochRecord>,
    /// Parameters with the best validation perplexity (the initial ones if no
    /// evaluation happened).
    pub best_params: ParamStore<T>,
    pub best_valid_ppl: Option<f64>,
    pub best_epoch: Option<usize>,
    /// Loss of every optimizer step, in order.
    pub step_losses: Vec<f64>,
    /// Set when training stopped on a non-finite loss or gradient.
    pub aborted: Option<String>,
}

struct Averager<T> {
    sum: ParamStore<T>,
    count: usize,
}

impl<T: Scalar> Averager<T> {
    fn start(params: &ParamStore<T>) -> Self {
        Averager {
            sum: params.clone(),
            count: 1,
        }
    }

    /// Running mean: avg += (p − avg) / n.
    fn update(&mut self, params: &ParamStore<T>) {
        self.count += 1;
        let inv = T::of_f64(1.0 / self.count as f64);
        for (a, p) in self.sum.iter_mut().zip(params.iter()) {
            for (av, &pv) in a.value.data_mut().iter_mut().zip(p.value.data()) {
                *av += (pv - *av) * inv;
            }
        }
    }
}

/// Trains with clipped SGD on truncated-BPTT batches, decaying the learning
/// rate after `patience` non-improving validation passes and optionally
/// averaging parameters once progress stalls for `avg_patience` passes.
///
/// On return `model` holds the best parameters. `on_epoch` sees every record
/// as soon as it is produced.
pub fn train<T: Scalar>(
    model: &mut LanguageModel<T>,
    train_ids: &[usize],
    valid_ids: &[usize],
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord) -> Result<()>,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    let mut stream = make_batches(train_ids, cfg.batch_size, cfg.bptt)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut outcome = TrainOutcome {
        history: Vec::new(),
        best_params: model.params().clone(),
        best_valid_ppl: None,
        best_epoch: None,
        step_losses: Vec::new(),
        aborted: None,
    };
    let mut lr = cfg.lr;
    let mut stale = 0;
    let mut stale_for_avg = 0;
    let mut averager: Option<Averager<T>> = None;

    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        stream.reset();
        let mut state = model.zero_state(cfg.batch_size);
        let mut loss_sum = 0.0;
        let mut positions = 0usize;
        for batch in &mut stream {
            let mut g = Graph::new();
            let step = (|| -> Result<_> {
                let out = model.forward(
                    &mut g,
                    &batch,
                    &state,
                    Some(&mut rng as &mut dyn rand::RngCore),
                )?;
                let loss = model.sequence_loss(&mut g, out.logits, &batch)?;
                let value = g.scalar(loss).as_f64();
                if !value.is_finite() {
                    return Err(Error::NonFinite("training loss".into()));
                }
                let params = model.params_mut();
                params.zero_grad();
                g.backward(loss)?.accumulate_into(&g, params)?;
                sgd_step(params, lr, cfg.clip_norm)?;
                Ok((value, out.state))
            })();
            let (value, next) = match step {
                Ok(v) => v,
                Err(Error::NonFinite(what)) => {
                    outcome.aborted = Some(format!("epoch {epoch}: non-finite {what}"));
                    model.params_mut().copy_values_from(&outcome.best_params)?;
                    return Ok(outcome);
                }
                Err(e) => return Err(e),
            };
            state = next;
            let n = batch.batch_size * batch.seq_len;
            loss_sum += value * n as f64;
            positions += n;
            outcome.step_losses.push(value);
            if let Some(avg) = averager.as_mut() {
                avg.update(model.params());
            }
        }

        let evaluate_now = epoch % cfg.eval_every == 0 || epoch == cfg.epochs;
        let mut valid_ppl = None;
        if evaluate_now {
            let (ppl, candidate) = match &averager {
                Some(avg) => {
                    let mut averaged = model.clone();
                    averaged.params_mut().copy_values_from(&avg.sum)?;
                    let ppl = evaluate(&averaged, valid_ids, cfg.eval_batch_size, cfg.bptt)?.ppl();
                    (ppl, avg.sum.clone())
                }
                None => (
                    evaluate(model, valid_ids, cfg.eval_batch_size, cfg.bptt)?.ppl(),
                    model.params().clone(),
                ),
            };
            valid_ppl = Some(ppl);
            let improved = outcome.best_valid_ppl.is_none_or(|best| ppl < best);
            if improved {
                outcome.best_valid_ppl = Some(ppl);
                outcome.best_epoch = Some(epoch);
                outcome.best_params = candidate;
                stale = 0;
                stale_for_avg = 0;
            } else {
                stale += 1;
                stale_for_avg += 1;
            }
            if cfg.avg_patience > 0 && averager.is_none() && stale_for_avg >= cfg.avg_patience {
                averager = Some(Averager::start(model.params()));
            }
            if stale >= cfg.patience {
                lr *= cfg.decay;
                stale = 0;
            }
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / positions.max(1) as f64,
            valid_ppl,
            lr,
            seconds: started.elapsed().as_secs_f64(),
            averaged: evaluate_now && averager.is_some(),
        };
        on_epoch(&record)?;
        outcome.history.push(record);
    }
    model.params_mut().copy_values_from(&outcome.best_params)?;
    Ok(outcome)
}
