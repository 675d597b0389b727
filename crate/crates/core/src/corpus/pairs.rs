use serde::{Deserialize, Serialize};

use super::{Blank, ContractDocument};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelSource {
    Slot,
    FillComparison,
}

/// Two blanks of one document (indices into `ContractDocument::blanks`)
/// and whether they should hold the same content.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlankPair {
    pub a: usize,
    pub b: usize,
    pub label: u8,
    pub label_source: LabelSource,
}

/// Case-folded, whitespace-collapsed tokens of a fill.
pub fn normalize_fill(fill: &[String]) -> Vec<String> {
    fill.iter()
        .flat_map(|t| t.split_whitespace())
        .map(str::to_lowercase)
        .collect()
}

pub fn fills_equal(a: &[String], b: &[String]) -> bool {
    normalize_fill(a) == normalize_fill(b)
}

/// Consistency label of two blanks: slot identity when both carry a slot,
/// otherwise equality of normalized fills.
pub fn label_blanks(a: &Blank, b: &Blank) -> Result<(u8, LabelSource)> {
    for blank in [a, b] {
        if blank.fill.is_none() && blank.slot.is_none() {
            return Err(Error::Unlabelable(blank.blank_id.clone()));
        }
    }
    if let (Some(sa), Some(sb)) = (&a.slot, &b.slot) {
        return Ok(((sa == sb) as u8, LabelSource::Slot));
    }
    match (&a.fill, &b.fill) {
        (Some(fa), Some(fb)) => Ok((fills_equal(fa, fb) as u8, LabelSource::FillComparison)),
        // One side has only a slot, the other only a fill.
        (None, _) => Err(Error::Unlabelable(a.blank_id.clone())),
        (_, None) => Err(Error::Unlabelable(b.blank_id.clone())),
    }
}

/// All unordered blank pairs of a document, labeled.
pub fn generate_pairs(doc: &ContractDocument) -> Result<Vec<BlankPair>> {
    let n = doc.blanks.len();
    let mut pairs = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for a in 0..n {
        for b in a + 1..n {
            let (label, label_source) = label_blanks(&doc.blanks[a], &doc.blanks[b])?;
            pairs.push(BlankPair {
                a,
                b,
                label,
                label_source,
            });
        }
    }
    Ok(pairs)
}

/// Unordered pairs with no labels, for inference on unlabeled documents.
pub fn all_pairs(num_blanks: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..num_blanks).flat_map(move |a| (a + 1..num_blanks).map(move |b| (a, b)))
}
