//! Word + positional + segmentation embeddings of a surrounding sentence.

use std::collections::BTreeMap;
use std::io::BufRead;

use rand::Rng;

use crate::corpus::{ContractDocument, SurroundingSentence};
use crate::error::{Error, Result};
use crate::numerics::{ParamId, ParamStore, Tape, Tensor, Var};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
const PAD_TOKEN: &str = "<pad>";
const UNK_TOKEN: &str = "<unk>";

/// Dense token ids; `PAD = 0`, `UNK = 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    ids: BTreeMap<String, usize>,
    tokens: Vec<String>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::from_tokens(std::iter::empty::<String>())
    }
}

impl Vocabulary {
    /// Builds a vocabulary from tokens in first-seen order after the specials.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Self {
            ids: BTreeMap::new(),
            tokens: Vec::new(),
        };
        vocab.push(PAD_TOKEN.into());
        vocab.push(UNK_TOKEN.into());
        for t in tokens {
            vocab.push(t.into());
        }
        vocab
    }

    /// Every sentence token of the corpus, sorted.
    pub fn from_documents(docs: &[ContractDocument]) -> Self {
        let mut all: Vec<&str> = docs
            .iter()
            .flat_map(|d| d.sentences.iter().flatten())
            .map(String::as_str)
            .collect();
        all.sort_unstable();
        all.dedup();
        Self::from_tokens(all)
    }

    fn push(&mut self, token: String) {
        if !self.ids.contains_key(&token) {
            self.ids.insert(token.clone(), self.tokens.len());
            self.tokens.push(token);
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.ids.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// `PE[2j] = sin(pos / 10000^(2j/d))`, `PE[2j+1] = cos(pos / 10000^(2j/d))`.
pub fn sinusoidal_pe(pos: usize, d: usize) -> Result<Vec<f64>> {
    if d % 2 != 0 {
        return Err(Error::Config(format!(
            "embedding width must be even, got {d}"
        )));
    }
    let mut pe = vec![0.0; d];
    for j in 0..d / 2 {
        let angle = pos as f64 / 10000f64.powf(2.0 * j as f64 / d as f64);
        pe[2 * j] = angle.sin();
        pe[2 * j + 1] = angle.cos();
    }
    Ok(pe)
}

/// Stacks `PE[positions[r]]` as rows.
pub fn pe_rows(positions: &[usize], d: usize) -> Result<Tensor> {
    let mut data = Vec::with_capacity(positions.len() * d);
    for &p in positions {
        data.extend(sinusoidal_pe(p, d)?);
    }
    Tensor::matrix(positions.len(), d, data)
}

/// Segment of a 1-indexed word position: 0 up to the gap, 1 after it.
pub fn segment_ids(n: usize, gap_index: usize) -> Vec<usize> {
    (1..=n).map(|p| usize::from(p > gap_index)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EmbeddingTables {
    pub word_table: ParamId,
    pub seg_table: ParamId,
    pub d: usize,
}

impl EmbeddingTables {
    /// Word and segment tables drawn from `Normal(0, 0.02)`.
    pub fn init<R: Rng>(
        store: &mut ParamStore,
        vocab_len: usize,
        d: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if d == 0 || d % 2 != 0 {
            return Err(Error::Config(format!(
                "embedding width must be even and positive, got {d}"
            )));
        }
        let word_table = store.insert_normal("embed.word", vec![vocab_len, d], 0.02, rng)?;
        let seg_table = store.insert_normal("embed.segment", vec![2, d], 0.02, rng)?;
        Ok(Self {
            word_table,
            seg_table,
            d,
        })
    }

    pub fn from_store(store: &ParamStore) -> Result<Self> {
        let word_table = store
            .id("embed.word")
            .ok_or_else(|| Error::Checkpoint("missing embed.word".into()))?;
        let seg_table = store
            .id("embed.segment")
            .ok_or_else(|| Error::Checkpoint("missing embed.segment".into()))?;
        let d = store.value(word_table).cols();
        Ok(Self {
            word_table,
            seg_table,
            d,
        })
    }

    /// Overwrites rows of known tokens from a `token v1 … vd` text file.
    /// Returns how many vocabulary rows were replaced.
    pub fn load_pretrained<R: BufRead>(
        &self,
        store: &mut ParamStore,
        vocab: &Vocabulary,
        reader: R,
    ) -> Result<usize> {
        let d = self.d;
        let mut replaced = 0;
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let mut parts = line.split_whitespace();
            let Some(token) = parts.next() else { continue };
            let values = parts
                .map(str::parse::<f64>)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Embedding(format!("line {}: {e}", lineno + 1)))?;
            if values.len() != d {
                return Err(Error::Embedding(format!(
                    "line {}: expected {d} values, found {}",
                    lineno + 1,
                    values.len()
                )));
            }
            let id = vocab.id(token);
            if id == UNK && token != UNK_TOKEN {
                continue;
            }
            store.value_mut(self.word_table).data_mut()[id * d..(id + 1) * d]
                .copy_from_slice(&values);
            replaced += 1;
        }
        Ok(replaced)
    }
}

/// `S[p] = word[w_p] + PE(p) + seg[p > gap]`, one row per word (`[n, d]`).
/// Positions are 1-indexed; the sentence must be non-empty.
pub fn embed_sentence(
    tape: &mut Tape,
    store: &ParamStore,
    tables: &EmbeddingTables,
    vocab: &Vocabulary,
    sentence: &SurroundingSentence,
) -> Result<Var> {
    let n = sentence.len();
    if n == 0 {
        return Err(Error::Evaluation("cannot embed an empty sentence".into()));
    }
    let ids: Vec<usize> = sentence.tokens.iter().map(|t| vocab.id(t)).collect();
    let words = tape.param(store, tables.word_table);
    let words = tape.gather_rows(words, &ids)?;
    let segs = tape.param(store, tables.seg_table);
    let segs = tape.gather_rows(segs, &segment_ids(n, sentence.gap_index))?;
    let positions: Vec<usize> = (1..=n).collect();
    let pe = tape.constant(pe_rows(&positions, tables.d)?);
    let s = tape.add(words, segs)?;
    tape.add(s, pe)
}
