use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};

pub const BOUNDARY_BEGIN: char = '^';
pub const BOUNDARY_END: char = '$';

/// Sliding-window character n-grams of `^word$`.
///
/// When the padded word is shorter than `n` the whole padded string is the only
/// gram, so every word has at least one.
pub fn extract_ngrams(word: &str, n: usize) -> Result<Vec<String>> {
    if n < 2 {
        return Err(Error::NgramOrder(n));
    }
    if word.is_empty() {
        return Err(Error::EmptyWord);
    }
    let padded: Vec<char> = std::iter::once(BOUNDARY_BEGIN)
        .chain(word.chars())
        .chain(std::iter::once(BOUNDARY_END))
        .collect();
    if padded.len() <= n {
        return Ok(vec![padded.into_iter().collect()]);
    }
    Ok(padded.windows(n).map(|w| w.iter().collect()).collect())
}

/// Ragged list of gram id lists, stored flat. Segment `s` covers
/// `ids[offsets[s]..offsets[s + 1]]`; a segment may be empty.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GramSegments {
    ids: Vec<usize>,
    offsets: Vec<usize>,
}

impl GramSegments {
    pub fn new() -> Self {
        GramSegments {
            ids: Vec::new(),
            offsets: vec![0],
        }
    }

    pub fn from_lists<'a, I>(lists: I) -> Self
    where
        I: IntoIterator<Item = &'a [usize]>,
    {
        let mut segments = GramSegments::new();
        for list in lists {
            segments.push(list);
        }
        segments
    }

    pub fn push(&mut self, grams: &[usize]) {
        self.ids.extend_from_slice(grams);
        self.offsets.push(self.ids.len());
    }

    /// Number of segments (words).
    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn segment(&self, s: usize) -> &[usize] {
        &self.ids[self.offsets[s]..self.offsets[s + 1]]
    }
}

/// Character n-gram vocabulary over the non-special words of a [`Vocabulary`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NgramIndex {
    n: usize,
    grams: Vec<String>,
    id_of: HashMap<String, usize>,
    /// Occurrences of each gram summed over vocabulary types.
    counts: Vec<u64>,
    by_word: GramSegments,
}

/// Indexes the n-grams of every non-special vocabulary word. Gram ids follow
/// first occurrence in vocabulary order; specials get empty gram lists.
pub fn build_ngram_index(vocab: &Vocabulary, n: usize) -> Result<NgramIndex> {
    let mut index = NgramIndex {
        n,
        grams: Vec::new(),
        id_of: HashMap::new(),
        counts: Vec::new(),
        by_word: GramSegments::new(),
    };
    if n < 2 {
        return Err(Error::NgramOrder(n));
    }
    let mut scratch = Vec::new();
    for (id, word) in vocab.words().iter().enumerate() {
        scratch.clear();
        if !vocab.is_special(id) {
            for gram in extract_ngrams(word, n)? {
                let gid = index.intern(gram);
                index.counts[gid] += 1;
                scratch.push(gid);
            }
        }
        index.by_word.push(&scratch);
    }
    Ok(index)
}

impl NgramIndex {
    fn intern(&mut self, gram: String) -> usize {
        if let Some(&id) = self.id_of.get(&gram) {
            return id;
        }
        let id = self.grams.len();
        self.id_of.insert(gram.clone(), id);
        self.grams.push(gram);
        self.counts.push(0);
        id
    }

    /// The n-gram order.
    pub fn order(&self) -> usize {
        self.n
    }

    /// Number of distinct grams (`G`).
    pub fn len(&self) -> usize {
        self.grams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grams.is_empty()
    }

    pub fn gram(&self, id: usize) -> &str {
        &self.grams[id]
    }

    pub fn id(&self, gram: &str) -> Option<usize> {
        self.id_of.get(gram).copied()
    }

    pub fn count(&self, id: usize) -> u64 {
        self.counts[id]
    }

    /// Number of vocabulary words covered.
    pub fn word_count(&self) -> usize {
        self.by_word.len()
    }

    pub fn grams_of(&self, word: usize) -> &[usize] {
        self.by_word.segment(word)
    }

    /// Gram lists of every vocabulary word, in id order.
    pub fn all_words(&self) -> &GramSegments {
        &self.by_word
    }

    /// Gram lists of the given words, in the given order.
    pub fn segments_for(&self, words: &[usize]) -> GramSegments {
        GramSegments::from_lists(words.iter().map(|&w| self.grams_of(w)))
    }

    /// Grams of an arbitrary surface form; grams absent from the index are
    /// skipped, so the result may be empty.
    pub fn grams_for_surface(&self, word: &str) -> Result<Vec<usize>> {
        Ok(extract_ngrams(word, self.n)?
            .iter()
            .filter_map(|g| self.id(g))
            .collect())
    }

    /// Writes `gram<TAB>id<TAB>count` lines in id order.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        for (id, (gram, count)) in self.grams.iter().zip(&self.counts).enumerate() {
            writeln!(out, "{gram}\t{id}\t{count}")?;
        }
        Ok(())
    }

    /// Reads a gram table and re-derives per-word lists from `vocab`. Every
    /// gram of every non-special word must be present in the table.
    pub fn read_tsv<R: BufRead>(input: R, vocab: &Vocabulary, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::NgramOrder(n));
        }
        let mut index = NgramIndex {
            n,
            grams: Vec::new(),
            id_of: HashMap::new(),
            counts: Vec::new(),
            by_word: GramSegments::new(),
        };
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let bad = |message: String| Error::Parse {
                what: "n-gram table",
                line: lineno + 1,
                message,
            };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(bad(format!("expected 3 fields, found {}", fields.len())));
            }
            let id: usize = fields[1].parse().map_err(|e| bad(format!("id: {e}")))?;
            let count: u64 = fields[2].parse().map_err(|e| bad(format!("count: {e}")))?;
            if id != index.grams.len() || index.id_of.contains_key(fields[0]) {
                return Err(bad(format!("unexpected id {id} for {:?}", fields[0])));
            }
            index.intern(fields[0].to_owned());
            index.counts[id] = count;
        }
        let mut scratch = Vec::new();
        for (wid, word) in vocab.words().iter().enumerate() {
            scratch.clear();
            if !vocab.is_special(wid) {
                for gram in extract_ngrams(word, n)? {
                    let gid = index.id(&gram).ok_or_else(|| Error::Parse {
                        what: "n-gram table",
                        line: 0,
                        message: format!("gram {gram:?} of word {word:?} missing"),
                    })?;
                    scratch.push(gid);
                }
            }
            index.by_word.push(&scratch);
        }
        Ok(index)
    }
}
