//! Inconsistency reports for filled contracts.
//!
//! Every blank pair is scored. A pair is flagged when a confident "same
//! content" score meets different fills, or a confident "different content"
//! score meets equal fills. Scores between the two thresholds are never
//! flagged.

use serde::{Deserialize, Serialize};

use crate::corpus::{all_pairs, fills_equal, ContractDocument};
use crate::error::{Error, Result};
use crate::train_eval::PbrModel;

/// Anything that can produce order-invariant consistency scores for blank
/// pairs of a document.
pub trait PairScorer {
    fn score_pairs(&self, doc: &ContractDocument, pairs: &[(usize, usize)]) -> Result<Vec<f64>>;
}

impl PairScorer for PbrModel {
    fn score_pairs(&self, doc: &ContractDocument, pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
        PbrModel::score_pairs(self, doc, pairs)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckThresholds {
    pub tau_hi: f64,
    pub tau_lo: f64,
}

impl Default for CheckThresholds {
    fn default() -> Self {
        Self {
            tau_hi: 0.9,
            tau_lo: 0.1,
        }
    }
}

impl CheckThresholds {
    pub fn validate(&self) -> Result<()> {
        let ok = self.tau_lo.is_finite()
            && self.tau_hi.is_finite()
            && 0.0 <= self.tau_lo
            && self.tau_lo <= self.tau_hi
            && self.tau_hi <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "thresholds need 0 <= tau_lo <= tau_hi <= 1, got tau_lo={} tau_hi={}",
                self.tau_lo, self.tau_hi
            )))
        }
    }

    pub fn flag(&self, score: f64, fills_equal: bool) -> Flag {
        if score >= self.tau_hi && !fills_equal {
            Flag::InconsistentDifferentFill
        } else if score <= self.tau_lo && fills_equal {
            Flag::InconsistentSameFill
        } else {
            Flag::Ok
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Flag {
    /// The blanks look like the same item but were filled differently.
    InconsistentDifferentFill,
    /// The blanks look like different items but were filled identically.
    InconsistentSameFill,
    Ok,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub blank_a: String,
    pub blank_b: String,
    pub score: f64,
    pub fills_equal: bool,
    pub flag: Flag,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InconsistencyReport {
    pub doc_id: String,
    pub findings: Vec<Finding>,
    pub thresholds: CheckThresholds,
}

impl InconsistencyReport {
    pub fn flagged(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| f.flag != Flag::Ok)
    }
}

/// Scores every blank pair of a fully filled document and flags the
/// inconsistent ones.
pub fn check_document<S: PairScorer + ?Sized>(
    scorer: &S,
    doc: &ContractDocument,
    thresholds: CheckThresholds,
) -> Result<InconsistencyReport> {
    thresholds.validate()?;
    doc.validate()?;
    let unfilled: Vec<String> = doc
        .blanks
        .iter()
        .filter(|b| b.fill.is_none())
        .map(|b| b.blank_id.clone())
        .collect();
    if !unfilled.is_empty() {
        return Err(Error::UnfilledBlanks(unfilled));
    }
    let pairs: Vec<(usize, usize)> = all_pairs(doc.blanks.len()).collect();
    let scores = scorer.score_pairs(doc, &pairs)?;
    if scores.len() != pairs.len() {
        return Err(Error::Evaluation(format!(
            "scorer returned {} scores for {} pairs",
            scores.len(),
            pairs.len()
        )));
    }
    let findings = pairs
        .iter()
        .zip(scores)
        .map(|(&(a, b), score)| {
            let (ba, bb) = (&doc.blanks[a], &doc.blanks[b]);
            let equal = fills_equal(
                ba.fill.as_deref().unwrap_or(&[]),
                bb.fill.as_deref().unwrap_or(&[]),
            );
            Finding {
                blank_a: ba.blank_id.clone(),
                blank_b: bb.blank_id.clone(),
                score,
                fills_equal: equal,
                flag: thresholds.flag(score, equal),
            }
        })
        .collect();
    Ok(InconsistencyReport {
        doc_id: doc.doc_id.clone(),
        findings,
        thresholds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_document;

    struct Fixed(Vec<f64>);

    impl PairScorer for Fixed {
        fn score_pairs(&self, _: &ContractDocument, pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
            Ok(self.0[..pairs.len()].to_vec())
        }
    }

    fn two_blanks(a: &str, b: &str) -> ContractDocument {
        parse_document(
            "d",
            &format!("The price is [[p1|{a}]] yuan. Pay [[p2|{b}]] yuan now."),
        )
        .unwrap()
    }

    #[test]
    fn same_item_different_fill() {
        let r = check_document(
            &Fixed(vec![0.95]),
            &two_blanks("500", "600"),
            CheckThresholds::default(),
        )
        .unwrap();
        assert_eq!(r.findings[0].flag, Flag::InconsistentDifferentFill);
        assert!(!r.findings[0].fills_equal);
    }

    #[test]
    fn different_items_same_fill() {
        let r = check_document(
            &Fixed(vec![0.02]),
            &two_blanks("500", "500"),
            CheckThresholds::default(),
        )
        .unwrap();
        assert_eq!(r.findings[0].flag, Flag::InconsistentSameFill);
    }

    #[test]
    fn abstention_band_is_never_flagged() {
        for s in [0.11, 0.5, 0.89] {
            for fills in [("500", "500"), ("500", "600")] {
                let r = check_document(
                    &Fixed(vec![s]),
                    &two_blanks(fills.0, fills.1),
                    CheckThresholds::default(),
                )
                .unwrap();
                assert_eq!(r.findings[0].flag, Flag::Ok);
            }
        }
    }

    #[test]
    fn fills_compare_after_normalization() {
        let r = check_document(
            &Fixed(vec![0.95]),
            &two_blanks("Five  Hundred", "five hundred"),
            CheckThresholds::default(),
        )
        .unwrap();
        assert!(r.findings[0].fills_equal);
        assert_eq!(r.findings[0].flag, Flag::Ok);
    }

    #[test]
    fn unfilled_blanks_are_listed() {
        let doc = parse_document("d", "A [[x|]] b [[y|1]] c [[z|]].").unwrap();
        match check_document(&Fixed(vec![0.5; 3]), &doc, CheckThresholds::default()) {
            Err(Error::UnfilledBlanks(ids)) => assert_eq!(ids, vec!["x", "z"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn covers_every_pair_once() {
        let doc = parse_document("d", "[[a|1]] [[b|2]] x. [[c|3]] y [[d|4]] [[e|5]].").unwrap();
        let r = check_document(&Fixed(vec![0.5; 10]), &doc, CheckThresholds::default()).unwrap();
        assert_eq!(r.findings.len(), 10);
        let mut seen: Vec<_> = r
            .findings
            .iter()
            .map(|f| (f.blank_a.clone(), f.blank_b.clone()))
            .collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 10);
    }

    #[test]
    fn flags_serialize_in_upper_snake_case() {
        let json = serde_json::to_string(&Flag::InconsistentSameFill).unwrap();
        assert_eq!(json, "\"INCONSISTENT_SAME_FILL\"");
    }

    #[test]
    fn inverted_thresholds_are_rejected() {
        let t = CheckThresholds {
            tau_hi: 0.2,
            tau_lo: 0.8,
        };
        assert!(matches!(t.validate(), Err(Error::Config(_))));
    }
}
