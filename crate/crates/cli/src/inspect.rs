use std::path::PathBuf;

use ngramlm_core::{Checkpoint, Error, Scalar, Tensor, Vocabulary};
use serde::Serialize;

use crate::checkpoint::with_checkpoint;
use crate::error::CliError;
use crate::output::write_json;

#[derive(Debug, clap::Args)]
pub struct InspectArgs {
    /// Checkpoint directory written by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Word to inspect.
    pub word: String,
    /// Dimensions listed per n-gram (multi-dimensional attention only).
    #[arg(long, default_value_t = 5)]
    pub top_dims: usize,
    /// Nearest neighbours listed per embedding space.
    #[arg(long, default_value_t = 10)]
    pub neighbors: usize,
    /// Also write the tables as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct GramRow {
    gram: String,
    mean_weight: f64,
    top_dims: Vec<(usize, f64)>,
}

#[derive(Debug, Serialize)]
struct Neighbours {
    space: &'static str,
    words: Vec<(String, f64)>,
}

#[derive(Debug, Serialize)]
struct Inspection {
    word: String,
    encoder: String,
    grams: Vec<GramRow>,
    neighbours: Vec<Neighbours>,
}

pub fn run(args: &InspectArgs) -> Result<(), CliError> {
    with_checkpoint!(&args.checkpoint, run_typed(args))
}

/// Closest vocabulary surfaces by edit distance.
fn suggestions(vocab: &Vocabulary, word: &str, k: usize) -> Vec<String> {
    let mut scored: Vec<(usize, &String)> = vocab
        .words()
        .iter()
        .map(|w| (strsim::levenshtein(word, w), w))
        .collect();
    scored.sort();
    scored.into_iter().take(k).map(|(_, w)| w.clone()).collect()
}

fn cosine_neighbours<T: Scalar>(
    m: &Tensor<T>,
    word: usize,
    k: usize,
    vocab: &Vocabulary,
) -> Vec<(String, f64)> {
    let norm = |r: usize| {
        m.row(r)
            .iter()
            .map(|v| v.as_f64().powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let q = m.row(word);
    let qn = norm(word);
    let mut scored: Vec<(usize, f64)> = (0..m.rows())
        .filter(|&r| r != word)
        .map(|r| {
            let dot: f64 = q
                .iter()
                .zip(m.row(r))
                .map(|(a, b)| a.as_f64() * b.as_f64())
                .sum();
            let denom = qn * norm(r);
            (r, if denom > 0.0 { dot / denom } else { 0.0 })
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
        .into_iter()
        .map(|(r, s)| (vocab.word(r).to_owned(), s))
        .collect()
}

fn run_typed<T: Scalar>(ck: Checkpoint<T>, args: &InspectArgs) -> Result<(), CliError> {
    let Checkpoint { model, vocab, .. } = ck;
    let word = vocab.id(&args.word).ok_or_else(|| {
        CliError::data(format!(
            "{:?} is not in the vocabulary; closest matches: {}",
            args.word,
            suggestions(&vocab, &args.word, 5).join(", ")
        ))
    })?;
    let index = model
        .ngram_index()
        .ok_or_else(|| CliError::config("model has no n-gram encoder (encoder=none)"))?;
    let record = match model.word_attention(word, &args.word) {
        Err(Error::SpecialToken(_)) => {
            return Err(CliError::data(format!(
                "special tokens have no character composition ({:?})",
                args.word
            )))
        }
        other => other?,
    };

    let means = record.gram_mean_weights();
    let grams: Vec<GramRow> = record
        .gram_ids
        .iter()
        .enumerate()
        .map(|(i, &g)| GramRow {
            gram: index.gram(g).to_owned(),
            mean_weight: means[i],
            top_dims: record.top_dimensions(i, args.top_dims),
        })
        .collect();

    let mut neighbours = Vec::new();
    let c = model.composed_vectors()?;
    match model.word_embeddings() {
        Ok(e) => {
            let e_plus_c = e.add(&c)?;
            neighbours.push(Neighbours {
                space: "E",
                words: cosine_neighbours(e, word, args.neighbors, &vocab),
            });
            neighbours.push(Neighbours {
                space: "E+C",
                words: cosine_neighbours(&e_plus_c, word, args.neighbors, &vocab),
            });
        }
        Err(_) => neighbours.push(Neighbours {
            space: "C",
            words: cosine_neighbours(&c, word, args.neighbors, &vocab),
        }),
    }

    let encoder = model.config().encoder.to_string();
    println!("word     {}", args.word);
    println!("encoder  {encoder}");
    println!(
        "grams    {}",
        grams
            .iter()
            .map(|g| g.gram.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    );
    println!();
    println!("{:<12} {:>11}  top dimensions", "gram", "mean weight");
    for g in &grams {
        let dims: Vec<String> = g
            .top_dims
            .iter()
            .map(|(d, w)| format!("d{d}:{w:.3}"))
            .collect();
        println!("{:<12} {:>11.5}  {}", g.gram, g.mean_weight, dims.join(" "));
    }
    println!(
        "{:<12} {:>11.5}",
        "total",
        grams.iter().map(|g| g.mean_weight).sum::<f64>()
    );
    for n in &neighbours {
        println!();
        println!("nearest under {} (cosine)", n.space);
        for (w, s) in &n.words {
            println!("  {w:<20} {s:>8.4}");
        }
    }

    if let Some(path) = &args.json {
        let out = Inspection {
            word: args.word.clone(),
            encoder,
            grams,
            neighbours,
        };
        write_json(path, &out)?;
    }
    Ok(())
}
