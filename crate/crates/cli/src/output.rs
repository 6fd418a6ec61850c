//! Output file naming: reruns never overwrite earlier artifacts.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliError;

/// Paths of one training run inside an output directory. The first run uses
/// bare names; later runs add `-2`, `-3`, ...
#[derive(Clone, Debug)]
pub struct RunFiles {
    pub config: PathBuf,
    pub metrics: PathBuf,
    pub checkpoint: PathBuf,
    pub summary: PathBuf,
}

impl RunFiles {
    pub fn next_free(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::data(format!("cannot create {}: {e}", dir.display())))?;
        for k in 1.. {
            let suffix = if k == 1 {
                String::new()
            } else {
                format!("-{k}")
            };
            let files = RunFiles {
                config: dir.join(format!("run{suffix}.json")),
                metrics: dir.join(format!("metrics{suffix}.jsonl")),
                checkpoint: dir.join(format!("checkpoint{suffix}")),
                summary: dir.join(format!("summary{suffix}.json")),
            };
            if [
                &files.config,
                &files.metrics,
                &files.checkpoint,
                &files.summary,
            ]
            .iter()
            .all(|p| !p.exists())
            {
                return Ok(files);
            }
        }
        unreachable!()
    }
}

/// Append-only JSON-lines writer; refuses to reuse an existing file.
pub struct JsonLines {
    out: BufWriter<File>,
}

impl JsonLines {
    pub fn create(path: &Path) -> Result<Self, CliError> {
        let file = OpenOptions::new()
            .append(true)
            .create_new(true)
            .open(path)
            .map_err(|e| CliError::data(format!("cannot create {}: {e}", path.display())))?;
        Ok(JsonLines {
            out: BufWriter::new(file),
        })
    }

    pub fn write<T: Serialize>(&mut self, record: &T) -> Result<(), CliError> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}
