use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::metrics::Metrics;
use crate::corpus::{write_jsonl, ContractDocument};
use crate::error::Result;

/// Hex SHA-256 of the corpus in its canonical JSONL form.
pub fn corpus_fingerprint(docs: &[ContractDocument]) -> Result<String> {
    let mut buf = Vec::new();
    write_jsonl(&mut buf, docs)?;
    Ok(Sha256::digest(&buf)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(flatten)]
    pub metrics: Metrics,
    pub threshold: f64,
    pub corpus_fingerprint: String,
    pub config: serde_json::Value,
}

impl MetricsReport {
    pub fn new(
        metrics: Metrics,
        threshold: f64,
        docs: &[ContractDocument],
        config: serde_json::Value,
    ) -> Result<Self> {
        Ok(Self {
            metrics,
            threshold,
            corpus_fingerprint: corpus_fingerprint(docs)?,
            config,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
