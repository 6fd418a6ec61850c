use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use ngramlm_core::build_vocabulary;
use ngramlm_core::corpus::{build_ngram_index, read_tokens, DEFAULT_SPECIALS, EOS};
use serde::Serialize;

use crate::error::CliError;
use crate::output::write_json;

#[derive(Debug, clap::Args)]
pub struct BuildVocabArgs {
    /// Training text (one sentence per line).
    #[arg(long)]
    pub train: PathBuf,
    /// Output directory for vocab.tsv, ngrams.tsv and stats.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Character n-gram order; 0 skips the n-gram table.
    #[arg(long, default_value_t = 3)]
    pub ngram: usize,
}

#[derive(Debug, Serialize)]
struct Stats {
    tokens: usize,
    vocab_size: usize,
    special_tokens: Vec<String>,
    ngram_order: usize,
    ngram_types: Option<usize>,
}

pub fn run(args: &BuildVocabArgs) -> Result<(), CliError> {
    if args.ngram == 1 {
        return Err(CliError::config("ngram must be 0 or at least 2"));
    }
    if !args.train.is_file() {
        return Err(CliError::data(format!(
            "train {} does not exist",
            args.train.display()
        )));
    }
    let tokens = read_tokens(&args.train, Some(EOS))?;
    let vocab = build_vocabulary(&tokens, DEFAULT_SPECIALS)?;
    fs::create_dir_all(&args.out)?;
    let mut w = BufWriter::new(File::create(args.out.join("vocab.tsv"))?);
    vocab.write_tsv(&mut w)?;
    w.flush()?;
    let ngram_types = if args.ngram >= 2 {
        let index = build_ngram_index(&vocab, args.ngram)?;
        let mut w = BufWriter::new(File::create(args.out.join("ngrams.tsv"))?);
        index.write_tsv(&mut w)?;
        w.flush()?;
        Some(index.len())
    } else {
        None
    };
    let stats = Stats {
        tokens: tokens.len(),
        vocab_size: vocab.len(),
        special_tokens: vocab.specials().map(|w| vocab.word(w).to_owned()).collect(),
        ngram_order: args.ngram,
        ngram_types,
    };
    write_json(&args.out.join("stats.json"), &stats)?;
    println!("{}", serde_json::to_string_pretty(&stats)?);
    Ok(())
}
