use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blankcoder::{AttentionTrace, BlankCoder, Dropout, EncoderConfig};
use crate::corpus::{ContractDocument, SurroundingSentence};
use crate::embedding::Vocabulary;
use crate::error::Result;
use crate::numerics::{ParamStore, Tape, Var};
use crate::pbr_head::{HeadConfig, PairHead};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub head: HeadConfig,
}

/// Vocabulary, parameter handles and values of one trained or fresh model.
#[derive(Clone, Debug)]
pub struct PbrModel {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub encoder: BlankCoder,
    pub head: PairHead,
    pub store: ParamStore,
}

impl PbrModel {
    pub fn init(config: ModelConfig, vocab: Vocabulary, rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut store = ParamStore::new();
        let encoder = BlankCoder::init(config.encoder.clone(), &vocab, &mut store, rng)?;
        let head = PairHead::init(config.head.clone(), config.encoder.d, &mut store, rng)?;
        Ok(Self {
            config,
            vocab,
            encoder,
            head,
            store,
        })
    }

    pub fn from_parts(config: ModelConfig, vocab: Vocabulary, store: ParamStore) -> Result<Self> {
        let encoder = BlankCoder::from_store(config.encoder.clone(), &store)?;
        let head = PairHead::from_store(config.head.clone(), config.encoder.d, &store)?;
        if store.value(encoder.tables.word_table).rows() != vocab.len() {
            return Err(crate::Error::Checkpoint(format!(
                "word table has {} rows for a vocabulary of {}",
                store.value(encoder.tables.word_table).rows(),
                vocab.len()
            )));
        }
        Ok(Self {
            config,
            vocab,
            encoder,
            head,
            store,
        })
    }

    /// One blank vector per blank of `doc`, in blank order.
    pub fn encode_blanks(
        &self,
        tape: &mut Tape,
        doc: &ContractDocument,
        dropout: &mut Dropout,
    ) -> Result<Vec<Var>> {
        (0..doc.blanks.len())
            .map(|k| {
                let s = doc.surrounding_sentence_at(k)?;
                Ok(self
                    .encoder
                    .encode(tape, &self.store, &self.vocab, &s, dropout)?
                    .b)
            })
            .collect()
    }

    /// Order-invariant scores for the given blank index pairs, dropout off.
    pub fn score_pairs(
        &self,
        doc: &ContractDocument,
        pairs: &[(usize, usize)],
    ) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let blanks = self.encode_blanks(&mut tape, doc, &mut Dropout::eval())?;
        pairs
            .iter()
            .map(|&(a, b)| {
                let s =
                    self.head
                        .predict_symmetric(&mut tape, &self.store, blanks[a], blanks[b])?;
                Ok(tape.scalar(s))
            })
            .collect()
    }

    pub fn trace(&self, doc: &ContractDocument, blank_id: &str) -> Result<AttentionTrace> {
        self.trace_sentence(&doc.surrounding_sentence(blank_id)?)
    }

    pub fn trace_sentence(&self, sentence: &SurroundingSentence) -> Result<AttentionTrace> {
        let mut tape = Tape::new();
        Ok(self
            .encoder
            .encode(
                &mut tape,
                &self.store,
                &self.vocab,
                sentence,
                &mut Dropout::eval(),
            )?
            .trace)
    }
}
