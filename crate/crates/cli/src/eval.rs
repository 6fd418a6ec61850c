use std::path::PathBuf;

use ngramlm_core::corpus::{read_tokens, EOS};
use ngramlm_core::trainer::Perplexity;
use ngramlm_core::{evaluate, evaluate_by_frequency, BucketOn, Checkpoint, Scalar};
use serde::Serialize;

use crate::checkpoint::with_checkpoint;
use crate::error::CliError;
use crate::output::write_json;

#[derive(Debug, clap::Args)]
pub struct EvalArgs {
    /// Checkpoint directory written by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Text to score; unknown words map to <unk>.
    #[arg(long)]
    pub text: PathBuf,
    /// Also report perplexity split by training frequency < K.
    #[arg(long, value_name = "K")]
    pub freq_threshold: Option<u64>,
    /// Which word's frequency selects the bucket: the input or the predicted word.
    #[arg(long, default_value_t = BucketOn::Input)]
    pub bucket_on: BucketOn,
    #[arg(long, default_value_t = 10)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 35)]
    pub bptt: usize,
    /// JSON report path (default: eval-<text stem>.json in the checkpoint directory).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct Row {
    bucket: String,
    positions: usize,
    mean_nll: Option<f64>,
    perplexity: Option<f64>,
}

impl Row {
    /// An empty bucket keeps its row with no perplexity.
    fn new(bucket: impl Into<String>, p: Option<&Perplexity>) -> Self {
        Row {
            bucket: bucket.into(),
            positions: p.map_or(0, |p| p.positions),
            mean_nll: p.map(Perplexity::mean_nll),
            perplexity: p.map(Perplexity::ppl),
        }
    }
}

#[derive(Debug, Serialize)]
struct Report {
    checkpoint: String,
    text: String,
    batch_size: usize,
    bptt: usize,
    freq_threshold: Option<u64>,
    bucket_on: Option<BucketOn>,
    rows: Vec<Row>,
}

pub fn run(args: &EvalArgs) -> Result<(), CliError> {
    if args.batch_size == 0 || args.bptt == 0 {
        return Err(CliError::config("batch_size and bptt must be at least 1"));
    }
    if !args.text.is_file() {
        return Err(CliError::data(format!(
            "text {} does not exist",
            args.text.display()
        )));
    }
    with_checkpoint!(&args.checkpoint, run_typed(args))
}

fn run_typed<T: Scalar>(ck: Checkpoint<T>, args: &EvalArgs) -> Result<(), CliError> {
    let ids = ck.vocab.encode(&read_tokens(&args.text, Some(EOS))?)?;
    let mut rows = Vec::new();
    match args.freq_threshold {
        None => rows.push(Row::new(
            "all",
            Some(&evaluate(&ck.model, &ids, args.batch_size, args.bptt)?),
        )),
        Some(k) => {
            let rep = evaluate_by_frequency(
                &ck.model,
                &ids,
                &ck.vocab,
                k,
                args.bucket_on,
                args.batch_size,
                args.bptt,
            )?;
            rows.push(Row::new("all", Some(&rep.overall)));
            rows.push(Row::new(format!("freq < {k}"), rep.infrequent.as_ref()));
            rows.push(Row::new(format!("freq >= {k}"), rep.frequent.as_ref()));
        }
    }

    println!("{:<16} {:>10} {:>12}", "bucket", "positions", "perplexity");
    for r in &rows {
        let ppl = r
            .perplexity
            .map_or_else(|| "-".to_string(), |p| format!("{p:.3}"));
        println!("{:<16} {:>10} {:>12}", r.bucket, r.positions, ppl);
    }
    let report = Report {
        checkpoint: args.checkpoint.display().to_string(),
        text: args.text.display().to_string(),
        batch_size: args.batch_size,
        bptt: args.bptt,
        freq_threshold: args.freq_threshold,
        bucket_on: args.freq_threshold.map(|_| args.bucket_on),
        rows,
    };
    let path = args.report.clone().unwrap_or_else(|| {
        let stem = args
            .text
            .file_stem()
            .map_or("text".into(), |s| s.to_string_lossy().into_owned());
        args.checkpoint.join(format!("eval-{stem}.json"))
    });
    write_json(&path, &report)?;
    log::info!("report written to {}", path.display());
    Ok(())
}
