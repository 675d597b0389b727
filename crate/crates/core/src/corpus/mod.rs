//! Contract documents, surrounding sentences, labeled blank pairs and the
//! synthetic corpus generator.

mod document;
mod pairs;
mod parse;
mod synth;

pub use document::{
    read_jsonl, window, write_jsonl, Blank, ContractDocument, SurroundingSentence,
    MAX_SENTENCE_TOKENS,
};
pub use pairs::{
    all_pairs, fills_equal, generate_pairs, label_blanks, normalize_fill, BlankPair, LabelSource,
};
pub use parse::parse_document;
pub use synth::{synth_generate, SynthConfig, SynthReport};
