//! Plain-text contracts with inline blank markers.
//!
//! A blank is written `[[id|fill tokens]]`, or `[[id|]]` when unfilled.
//! Sentences end at `.`, `!`, `?`, `;`, `。` or a newline; words are split on
//! whitespace. A marker is always a word boundary.

use std::collections::HashSet;

use super::{Blank, ContractDocument};
use crate::error::{Error, Result};

const SENTENCE_END: [char; 5] = ['.', '!', '?', ';', '。'];

#[derive(Default)]
struct Builder {
    sentences: Vec<Vec<String>>,
    blanks: Vec<Blank>,
    words: Vec<String>,
    word: String,
    pending: Vec<Blank>,
}

impl Builder {
    fn flush_word(&mut self) {
        if !self.word.is_empty() {
            self.words.push(std::mem::take(&mut self.word));
        }
    }

    fn end_sentence(&mut self) {
        self.flush_word();
        if self.words.is_empty() && self.pending.is_empty() {
            return;
        }
        let idx = self.sentences.len();
        self.sentences.push(std::mem::take(&mut self.words));
        for mut b in self.pending.drain(..) {
            b.sentence_idx = idx;
            self.blanks.push(b);
        }
    }
}

fn parse_err(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

pub fn parse_document(doc_id: &str, text: &str) -> Result<ContractDocument> {
    let mut b = Builder::default();
    let mut ids = HashSet::new();
    for (lineno, line) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let next = chars.get(i + 1).copied();
            if c == '[' && next == Some('[') {
                let column = i + 1;
                let close = (i + 2..chars.len().saturating_sub(1))
                    .find(|&j| chars[j] == ']' && chars[j + 1] == ']');
                let Some(close) = close else {
                    return Err(parse_err(line_no, column, "unterminated blank marker"));
                };
                let body: String = chars[i + 2..close].iter().collect();
                if body.contains("[[") {
                    return Err(parse_err(line_no, column, "nested blank marker"));
                }
                let Some((id, fill)) = body.split_once('|') else {
                    return Err(parse_err(
                        line_no,
                        column,
                        "blank marker lacks `|` separator",
                    ));
                };
                let id = id.trim();
                if id.is_empty() {
                    return Err(parse_err(line_no, column, "blank marker has an empty id"));
                }
                if !ids.insert(id.to_string()) {
                    return Err(parse_err(
                        line_no,
                        column,
                        format!("duplicate blank id `{id}`"),
                    ));
                }
                let fill: Vec<String> = fill.split_whitespace().map(String::from).collect();
                b.flush_word();
                b.pending.push(Blank {
                    blank_id: id.to_string(),
                    sentence_idx: 0,
                    gap_index: b.words.len(),
                    fill: (!fill.is_empty()).then_some(fill),
                    slot: None,
                });
                i = close + 2;
                continue;
            }
            if c == ']' && next == Some(']') {
                return Err(parse_err(line_no, i + 1, "`]]` without a matching `[[`"));
            }
            if SENTENCE_END.contains(&c) {
                b.end_sentence();
            } else if c.is_whitespace() {
                b.flush_word();
            } else {
                b.word.push(c);
            }
            i += 1;
        }
        b.end_sentence();
    }
    let doc = ContractDocument {
        doc_id: doc_id.to_string(),
        sentences: b.sentences,
        blanks: b.blanks,
    };
    doc.validate()?;
    Ok(doc)
}
