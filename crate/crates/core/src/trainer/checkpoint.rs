//! Directory checkpoints: a JSON manifest, a little-endian tensor blob and the
//! vocabulary / n-gram tables as TSV.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{NgramIndex, Vocabulary};
use crate::error::{Error, Result};
use crate::lm::{LanguageModel, ModelConfig};
use crate::numerics::{ParamStore, Scalar, Tensor};
use crate::trainer::TrainConfig;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TENSORS_FILE: &str = "tensors.bin";
pub const VOCAB_FILE: &str = "vocab.tsv";
pub const NGRAMS_FILE: &str = "ngrams.tsv";

/// Location of one tensor inside the blob. `offset` and `length` are in bytes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub dtype: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub length: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub dtype: String,
    pub model: ModelConfig,
    pub train: Option<TrainConfig>,
    pub epoch: Option<usize>,
    pub metrics: BTreeMap<String, f64>,
    pub specials: Vec<String>,
    /// Byte length of every payload file, keyed by file name.
    pub files: BTreeMap<String, u64>,
    pub tensors: Vec<TensorEntry>,
}

/// Training progress stored alongside the weights.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CheckpointInfo {
    pub epoch: Option<usize>,
    pub metrics: BTreeMap<String, f64>,
    pub train: Option<TrainConfig>,
}

#[derive(Clone, Debug)]
pub struct Checkpoint<T> {
    pub model: LanguageModel<T>,
    pub vocab: Vocabulary,
    pub info: CheckpointInfo,
}

pub fn save_checkpoint<T: Scalar>(
    dir: impl AsRef<Path>,
    model: &LanguageModel<T>,
    vocab: &Vocabulary,
    info: &CheckpointInfo,
) -> Result<()> {
    let dir = dir.as_ref();
    if vocab.len() != model.config().vocab_size {
        return Err(Error::Config(format!(
            "vocabulary has {} words but model.vocab_size={}",
            vocab.len(),
            model.config().vocab_size
        )));
    }
    fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;

    let mut blob = Vec::with_capacity(model.params().numel() * T::BYTES);
    let mut tensors = Vec::new();
    for p in model.params().iter() {
        let offset = blob.len();
        for &v in p.value.data() {
            v.write_le(&mut blob);
        }
        tensors.push(TensorEntry {
            name: p.name.clone(),
            dtype: T::DTYPE.to_owned(),
            shape: p.value.shape().to_vec(),
            offset,
            length: blob.len() - offset,
        });
    }
    let mut payload = vec![(TENSORS_FILE, blob)];
    let mut vocab_tsv = Vec::new();
    vocab.write_tsv(&mut vocab_tsv)?;
    payload.push((VOCAB_FILE, vocab_tsv));
    if let Some(index) = model.ngram_index() {
        let mut ngrams_tsv = Vec::new();
        index.write_tsv(&mut ngrams_tsv)?;
        payload.push((NGRAMS_FILE, ngrams_tsv));
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        dtype: T::DTYPE.to_owned(),
        model: model.config().clone(),
        train: info.train.clone(),
        epoch: info.epoch,
        metrics: info.metrics.clone(),
        specials: vocab.registered_specials().to_vec(),
        files: payload
            .iter()
            .map(|(name, bytes)| (name.to_string(), bytes.len() as u64))
            .collect(),
        tensors,
    };
    for (name, bytes) in &payload {
        write_file(&dir.join(name), |w| Ok(w.write_all(bytes)?))?;
    }
    // Manifest last, so a complete manifest implies complete payload files.
    // No trailing newline: any truncation leaves invalid JSON.
    write_file(&dir.join(MANIFEST_FILE), |w| {
        Ok(serde_json::to_writer_pretty(w, &manifest)?)
    })
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::file(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w)?;
    w.flush().map_err(|e| Error::file(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).map_err(|e| Error::file(path, e))?,
    ))
}

fn read_payload(dir: &Path, name: &str, manifest: &Manifest) -> Result<Vec<u8>> {
    let path = dir.join(name);
    let bytes = fs::read(&path).map_err(|e| Error::file(&path, e))?;
    match manifest.files.get(name) {
        Some(&len) if len == bytes.len() as u64 => Ok(bytes),
        Some(&len) => Err(Error::Corrupt(format!(
            "{name} is {} bytes, manifest says {len}",
            bytes.len()
        ))),
        None => Err(Error::Corrupt(format!("manifest does not list {name}"))),
    }
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<Manifest> {
    let path = dir.as_ref().join(MANIFEST_FILE);
    // Peek at the version before strict parsing so newer formats get a
    // version error rather than a field error.
    let raw: serde_json::Value = serde_json::from_reader(open(&path)?)?;
    let found = raw
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Corrupt("manifest has no format_version".into()))?;
    if found != u64::from(FORMAT_VERSION) {
        return Err(Error::Version {
            found: u32::try_from(found).unwrap_or(u32::MAX),
            expected: FORMAT_VERSION,
        });
    }
    Ok(serde_json::from_value(raw)?)
}

/// Loads a checkpoint, converting stored values to `T` if needed.
pub fn load_checkpoint<T: Scalar>(dir: impl AsRef<Path>) -> Result<Checkpoint<T>> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir)?;
    let specials: Vec<&str> = manifest.specials.iter().map(String::as_str).collect();
    let vocab = Vocabulary::read_tsv(&read_payload(dir, VOCAB_FILE, &manifest)?[..], &specials)?;
    if vocab.len() != manifest.model.vocab_size {
        return Err(Error::Corrupt(format!(
            "{VOCAB_FILE} has {} words, model.vocab_size={}",
            vocab.len(),
            manifest.model.vocab_size
        )));
    }
    let ngrams = if manifest.model.has_composition() {
        let bytes = read_payload(dir, NGRAMS_FILE, &manifest)?;
        Some(NgramIndex::read_tsv(
            &bytes[..],
            &vocab,
            manifest.model.ngram_order,
        )?)
    } else {
        None
    };

    let blob = read_payload(dir, TENSORS_FILE, &manifest)?;
    let mut params = ParamStore::new();
    let mut expected_len = 0;
    for entry in &manifest.tensors {
        params.add(entry.name.clone(), decode_tensor(entry, &blob)?)?;
        expected_len = expected_len.max(entry.offset + entry.length);
    }
    if blob.len() != expected_len {
        return Err(Error::Corrupt(format!(
            "{TENSORS_FILE} is {} bytes, manifest describes {expected_len}",
            blob.len()
        )));
    }
    let model = LanguageModel::from_params(manifest.model, ngrams, params)?;
    Ok(Checkpoint {
        model,
        vocab,
        info: CheckpointInfo {
            epoch: manifest.epoch,
            metrics: manifest.metrics,
            train: manifest.train,
        },
    })
}

fn decode_tensor<T: Scalar>(entry: &TensorEntry, blob: &[u8]) -> Result<Tensor<T>> {
    let width = match entry.dtype.as_str() {
        "f32" => 4,
        "f64" => 8,
        other => {
            return Err(Error::Corrupt(format!(
                "tensor {} has unsupported dtype {other:?}",
                entry.name
            )))
        }
    };
    let numel: usize = entry.shape.iter().product();
    if entry.length != numel * width {
        return Err(Error::Corrupt(format!(
            "tensor {} has shape {:?} but length {} bytes",
            entry.name, entry.shape, entry.length
        )));
    }
    let bytes = entry
        .offset
        .checked_add(entry.length)
        .and_then(|end| blob.get(entry.offset..end))
        .ok_or_else(|| {
            Error::Corrupt(format!(
                "tensor {} extends past the end of {TENSORS_FILE} ({} bytes)",
                entry.name,
                blob.len()
            ))
        })?;
    let data = bytes
        .chunks_exact(width)
        .map(|c| match width {
            4 => T::of_f64(f64::from(f32::read_le(c))),
            _ => T::of_f64(f64::read_le(c)),
        })
        .collect();
    Tensor::from_vec(&entry.shape, data)
}
