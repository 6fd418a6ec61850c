use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// End-of-sentence token appended to every line.
pub const EOS: &str = "<eos>";
/// Unknown-word token.
pub const UNK: &str = "<unk>";
pub const DEFAULT_SPECIALS: &[&str] = &[UNK, EOS];

/// Returns true for placeholder surfaces such as `<unk>` or `<eos>`.
pub fn is_placeholder(surface: &str) -> bool {
    surface.len() > 2 && surface.starts_with('<') && surface.ends_with('>')
}

/// Splits text on whitespace, one line at a time, optionally appending `eos`
/// after every line (blank lines included).
pub fn tokenize(text: &str, eos: Option<&str>) -> Vec<String> {
    let mut tokens = Vec::new();
    for line in text.lines() {
        tokens.extend(line.split_whitespace().map(str::to_owned));
        if let Some(eos) = eos {
            tokens.push(eos.to_owned());
        }
    }
    tokens
}

/// Reads and tokenizes a UTF-8 corpus file.
pub fn read_tokens(path: impl AsRef<Path>, eos: Option<&str>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    Ok(tokenize(&text, eos))
}

/// Word ↔ id map with training frequencies.
///
/// Ids are assigned in order of first occurrence. Specials are the surfaces
/// registered at construction plus anything shaped like `<...>`; they are
/// atomic and never decomposed into character n-grams.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
    freq: Vec<u64>,
    specials: BTreeSet<usize>,
    registered: Vec<String>,
}

/// Builds a vocabulary from a training token stream.
pub fn build_vocabulary<I, S>(tokens: I, specials: &[&str]) -> Result<Vocabulary>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut vocab = Vocabulary::empty(specials);
    for token in tokens {
        let token = token.as_ref();
        match vocab.index.get(token) {
            Some(&id) => vocab.freq[id] += 1,
            None => {
                vocab.push(token.to_owned(), 1);
            }
        }
    }
    if vocab.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(vocab)
}

impl Vocabulary {
    fn empty(specials: &[&str]) -> Self {
        Vocabulary {
            words: Vec::new(),
            index: HashMap::new(),
            freq: Vec::new(),
            specials: BTreeSet::new(),
            registered: specials.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn push(&mut self, surface: String, freq: u64) -> usize {
        let id = self.words.len();
        if self.registered.contains(&surface) || is_placeholder(&surface) {
            self.specials.insert(id);
        }
        self.index.insert(surface.clone(), id);
        self.words.push(surface);
        self.freq.push(freq);
        id
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, surface: &str) -> Option<usize> {
        self.index.get(surface).copied()
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn freq(&self, id: usize) -> u64 {
        self.freq[id]
    }

    /// Total number of training tokens the counts were taken over.
    pub fn token_count(&self) -> u64 {
        self.freq.iter().sum()
    }

    pub fn is_special(&self, id: usize) -> bool {
        self.specials.contains(&id)
    }

    /// Surfaces registered as special when the vocabulary was built.
    pub fn registered_specials(&self) -> &[String] {
        &self.registered
    }

    pub fn specials(&self) -> impl Iterator<Item = usize> + '_ {
        self.specials.iter().copied()
    }

    pub fn unk_id(&self) -> Option<usize> {
        self.id(UNK)
    }

    /// Maps surfaces to ids, sending unseen words to the unknown-word token.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Vec<usize>> {
        let unk = self.unk_id();
        tokens
            .iter()
            .map(|t| {
                let t = t.as_ref();
                self.id(t)
                    .or(unk)
                    .ok_or_else(|| Error::UnknownWord(t.to_owned()))
            })
            .collect()
    }

    /// Writes `surface<TAB>id<TAB>freq` lines in id order.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        for (id, (word, freq)) in self.words.iter().zip(&self.freq).enumerate() {
            writeln!(out, "{word}\t{id}\t{freq}")?;
        }
        Ok(())
    }

    /// Reads the format produced by [`Vocabulary::write_tsv`]. Ids must be dense
    /// and in order.
    pub fn read_tsv<R: BufRead>(input: R, specials: &[&str]) -> Result<Self> {
        let mut vocab = Vocabulary::empty(specials);
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let bad = |message: String| Error::Parse {
                what: "vocabulary",
                line: lineno + 1,
                message,
            };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(bad(format!("expected 3 fields, found {}", fields.len())));
            }
            let id: usize = fields[1].parse().map_err(|e| bad(format!("id: {e}")))?;
            let freq: u64 = fields[2].parse().map_err(|e| bad(format!("freq: {e}")))?;
            if id != vocab.len() {
                return Err(bad(format!(
                    "id {id} out of order, expected {}",
                    vocab.len()
                )));
            }
            if vocab.index.contains_key(fields[0]) {
                return Err(bad(format!("duplicate surface {:?}", fields[0])));
            }
            vocab.push(fields[0].to_owned(), freq);
        }
        if vocab.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        Ok(vocab)
    }
}
