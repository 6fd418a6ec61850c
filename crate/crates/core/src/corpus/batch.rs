use crate::error::{Error, Result};

/// One truncated-BPTT slice: `inputs` and `targets` are row-major
/// `batch_size × seq_len`, with `targets[b][t]` the token after `inputs[b][t]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    pub inputs: Vec<usize>,
    pub targets: Vec<usize>,
    pub batch_size: usize,
    pub seq_len: usize,
}

impl Batch {
    pub fn input(&self, row: usize, t: usize) -> usize {
        self.inputs[row * self.seq_len + t]
    }

    pub fn target(&self, row: usize, t: usize) -> usize {
        self.targets[row * self.seq_len + t]
    }

    /// Inputs reordered time-major: position `t * batch_size + b`.
    pub fn inputs_time_major(&self) -> Vec<usize> {
        time_major(&self.inputs, self.batch_size, self.seq_len)
    }

    pub fn targets_time_major(&self) -> Vec<usize> {
        time_major(&self.targets, self.batch_size, self.seq_len)
    }
}

fn time_major(ids: &[usize], batch: usize, len: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(ids.len());
    for t in 0..len {
        for b in 0..batch {
            out.push(ids[b * len + t]);
        }
    }
    out
}

/// Splits a token stream into `batch_size` contiguous rows and walks them in
/// windows of `bptt` steps.
///
/// The `len % batch_size` trailing tokens are dropped. The last window of a
/// row may be shorter than `bptt` so that every token after the first of each
/// row is predicted exactly once.
#[derive(Clone, Debug)]
pub struct BatchStream {
    ids: Vec<usize>,
    batch_size: usize,
    bptt: usize,
    row_len: usize,
    cursor: usize,
}

pub fn make_batches(token_ids: &[usize], batch_size: usize, bptt: usize) -> Result<BatchStream> {
    if batch_size == 0 || bptt == 0 {
        return Err(Error::Config(format!(
            "batch size and bptt must be positive (got {batch_size}, {bptt})"
        )));
    }
    let required = batch_size * (bptt + 1);
    if token_ids.len() < required {
        return Err(Error::CorpusTooSmall {
            len: token_ids.len(),
            required,
            batch: batch_size,
            bptt,
        });
    }
    let row_len = token_ids.len() / batch_size;
    Ok(BatchStream {
        ids: token_ids[..row_len * batch_size].to_vec(),
        batch_size,
        bptt,
        row_len,
        cursor: 0,
    })
}

impl BatchStream {
    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn bptt(&self) -> usize {
        self.bptt
    }

    /// Tokens per row.
    pub fn row_len(&self) -> usize {
        self.row_len
    }

    pub fn row(&self, b: usize) -> &[usize] {
        &self.ids[b * self.row_len..(b + 1) * self.row_len]
    }

    /// Total batches in one pass.
    pub fn num_batches(&self) -> usize {
        (self.row_len - 1).div_ceil(self.bptt)
    }

    /// Number of predicted positions in one pass.
    pub fn num_predictions(&self) -> usize {
        (self.row_len - 1) * self.batch_size
    }

    pub fn reset(&mut self) {
        self.cursor = 0;
    }
}

impl Iterator for BatchStream {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.cursor + 1 >= self.row_len {
            return None;
        }
        let seq_len = self.bptt.min(self.row_len - 1 - self.cursor);
        let mut inputs = Vec::with_capacity(self.batch_size * seq_len);
        let mut targets = Vec::with_capacity(self.batch_size * seq_len);
        for b in 0..self.batch_size {
            let row = &self.ids[b * self.row_len..(b + 1) * self.row_len];
            inputs.extend_from_slice(&row[self.cursor..self.cursor + seq_len]);
            targets.extend_from_slice(&row[self.cursor + 1..self.cursor + 1 + seq_len]);
        }
        self.cursor += seq_len;
        Some(Batch {
            inputs,
            targets,
            batch_size: self.batch_size,
            seq_len,
        })
    }
}
