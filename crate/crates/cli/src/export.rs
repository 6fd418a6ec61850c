use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::ValueEnum;
use ngramlm_core::{Checkpoint, Scalar, Tensor};

use crate::checkpoint::with_checkpoint;
use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Which {
    /// Word embeddings.
    #[value(name = "E")]
    E,
    /// Vectors composed from character n-grams.
    #[value(name = "C")]
    C,
    /// Their sum.
    #[value(name = "E_plus_C")]
    EPlusC,
}

#[derive(Debug, clap::Args)]
pub struct ExportArgs {
    /// Checkpoint directory written by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_enum, ignore_case = true)]
    pub which: Which,
    /// Output text file: one `surface v1 v2 ...` line per word.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &ExportArgs) -> Result<(), CliError> {
    with_checkpoint!(&args.checkpoint, run_typed(args))
}

fn run_typed<T: Scalar>(ck: Checkpoint<T>, args: &ExportArgs) -> Result<(), CliError> {
    let model = &ck.model;
    let composed = || -> Result<Tensor<T>, CliError> {
        if !model.config().has_composition() {
            return Err(CliError::config(format!(
                "--which {} needs composed vectors but the model has encoder=none",
                args.which
                    .to_possible_value()
                    .map_or_else(String::new, |v| v.get_name().to_owned())
            )));
        }
        Ok(model.composed_vectors()?)
    };
    let matrix = match args.which {
        Which::E => model.word_embeddings()?.clone(),
        Which::C => composed()?,
        Which::EPlusC => model.word_embeddings()?.add(&composed()?)?,
    };
    let file = File::create(&args.out)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", args.out.display())))?;
    let mut out = BufWriter::new(file);
    for (w, surface) in ck.vocab.words().iter().enumerate() {
        write!(out, "{surface}")?;
        for v in matrix.row(w) {
            write!(out, " {v}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    log::info!(
        "wrote {} vectors of dimension {} to {}",
        matrix.rows(),
        matrix.cols(),
        args.out.display()
    );
    Ok(())
}
