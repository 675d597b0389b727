use std::collections::HashSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Longest surrounding sentence fed to the encoder.
pub const MAX_SENTENCE_TOKENS: usize = 128;

/// A blank sits between word `gap_index` and `gap_index + 1` of its sentence
/// (words counted with every blank removed), so `gap_index ∈ [0, n]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Blank {
    #[serde(rename = "id")]
    pub blank_id: String,
    #[serde(rename = "sentence")]
    pub sentence_idx: usize,
    pub gap_index: usize,
    pub fill: Option<Vec<String>>,
    pub slot: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractDocument {
    pub doc_id: String,
    pub sentences: Vec<Vec<String>>,
    pub blanks: Vec<Blank>,
}

/// The words around one blank with every other blank deleted.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurroundingSentence {
    pub tokens: Vec<String>,
    pub gap_index: usize,
}

impl SurroundingSentence {
    pub fn new(tokens: Vec<String>, gap_index: usize) -> Result<Self> {
        if gap_index > tokens.len() {
            return Err(Error::InvalidDocument(format!(
                "gap index {gap_index} exceeds sentence length {}",
                tokens.len()
            )));
        }
        Ok(Self { tokens, gap_index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

impl ContractDocument {
    /// Checks sentence references, gap bounds and id uniqueness.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for b in &self.blanks {
            if !seen.insert(b.blank_id.as_str()) {
                return Err(Error::InvalidDocument(format!(
                    "{}: duplicate blank id `{}`",
                    self.doc_id, b.blank_id
                )));
            }
            let Some(sentence) = self.sentences.get(b.sentence_idx) else {
                return Err(Error::InvalidDocument(format!(
                    "{}: blank `{}` references sentence {} of {}",
                    self.doc_id,
                    b.blank_id,
                    b.sentence_idx,
                    self.sentences.len()
                )));
            };
            if b.gap_index > sentence.len() {
                return Err(Error::InvalidDocument(format!(
                    "{}: blank `{}` gap index {} exceeds sentence length {}",
                    self.doc_id,
                    b.blank_id,
                    b.gap_index,
                    sentence.len()
                )));
            }
        }
        Ok(())
    }

    pub fn blank_index(&self, blank_id: &str) -> Result<usize> {
        self.blanks
            .iter()
            .position(|b| b.blank_id == blank_id)
            .ok_or_else(|| Error::UnknownBlank(blank_id.to_string()))
    }

    pub fn surrounding_sentence(&self, blank_id: &str) -> Result<SurroundingSentence> {
        let idx = self.blank_index(blank_id)?;
        self.surrounding_sentence_at(idx)
    }

    /// Surrounding sentence of the `idx`-th blank, windowed to
    /// [`MAX_SENTENCE_TOKENS`] around the gap.
    pub fn surrounding_sentence_at(&self, idx: usize) -> Result<SurroundingSentence> {
        let blank = self
            .blanks
            .get(idx)
            .ok_or_else(|| Error::UnknownBlank(format!("#{idx}")))?;
        let sentence = self.sentences.get(blank.sentence_idx).ok_or_else(|| {
            Error::InvalidDocument(format!(
                "blank `{}` references a missing sentence",
                blank.blank_id
            ))
        })?;
        // Sentences hold words only, so deleting the other blanks is implicit.
        let (tokens, gap) = window(sentence, blank.gap_index, MAX_SENTENCE_TOKENS);
        SurroundingSentence::new(tokens.to_vec(), gap)
    }
}

/// Keeps at most `max_len` tokens, centered on the gap where the sentence
/// allows it. Returns the window and the re-indexed gap.
pub fn window(tokens: &[String], gap: usize, max_len: usize) -> (&[String], usize) {
    let n = tokens.len();
    if n <= max_len {
        return (tokens, gap);
    }
    let half = max_len / 2;
    let start = gap.saturating_sub(half).min(n - max_len);
    (&tokens[start..start + max_len], gap - start)
}

/// Reads a JSON-lines corpus (one document per line, blank lines skipped).
pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<ContractDocument>> {
    let mut docs = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: ContractDocument = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno + 1,
            column: e.column(),
            message: e.to_string(),
        })?;
        doc.validate()?;
        docs.push(doc);
    }
    Ok(docs)
}

pub fn write_jsonl<W: Write>(mut writer: W, docs: &[ContractDocument]) -> Result<()> {
    for doc in docs {
        serde_json::to_writer(&mut writer, doc)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}
