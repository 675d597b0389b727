use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

/// Tallies `(score, label)` pairs; a score equal to `tau` counts as positive.
pub fn confusion(scores: &[(f64, u8)], tau: f64) -> Confusion {
    let mut c = Confusion::default();
    for &(s, r) in scores {
        match (s >= tau, r == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    c
}

pub fn balanced_accuracy(c: &Confusion) -> Result<f64> {
    let pos = c.tp + c.fn_;
    let neg = c.tn + c.fp;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(
            "balanced accuracy needs both classes present".into(),
        ));
    }
    Ok((c.tp as f64 / pos as f64 + c.tn as f64 / neg as f64) / 2.0)
}

/// Matthews correlation; 0 when any marginal is empty.
pub fn mcc(c: &Confusion) -> f64 {
    let (tp, tn, fp, fn_) = (c.tp as u128, c.tn as u128, c.fp as u128, c.fn_ as u128);
    let product = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    if product == 0 {
        return 0.0;
    }
    let num = (tp * tn) as f64 - (fp * fn_) as f64;
    // An exact root when the marginal product is a perfect square, which
    // covers both perfect and fully inverted predictions.
    let approx = (product as f64).sqrt();
    let root = approx.round() as u128;
    let denom = if root * root == product {
        root as f64
    } else {
        approx
    };
    (num / denom).clamp(-1.0, 1.0)
}

/// Precision, recall and F1, each 0 when its denominator is 0.
pub fn precision_recall_f1(c: &Confusion) -> (f64, f64, f64) {
    let ratio = |num: u64, den: u64| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

/// Mann–Whitney AUC with tied scores counted as one half.
pub fn auc(scores: &[(f64, u8)]) -> Result<f64> {
    let pos = scores.iter().filter(|(_, r)| *r == 1).count();
    let neg = scores.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(
            "AUC needs both classes present".into(),
        ));
    }
    if scores.iter().any(|(s, _)| s.is_nan()) {
        return Err(Error::UndefinedMetric("AUC of NaN scores".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].0.total_cmp(&scores[b].0));
    // Sum of midranks (1-based) of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]].0 == scores[order[i]].0 {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        let positives = order[i..=j].iter().filter(|&&k| scores[k].1 == 1).count();
        rank_sum += midrank * positives as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub auc: f64,
    pub balanced_accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub mcc: f64,
}

impl Metrics {
    pub fn from_scores(scores: &[(f64, u8)], tau: f64) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::UndefinedMetric("no scored pairs".into()));
        }
        let c = confusion(scores, tau);
        let (precision, recall, f1) = precision_recall_f1(&c);
        Ok(Self {
            tp: c.tp,
            tn: c.tn,
            fp: c.fp,
            fn_: c.fn_,
            auc: auc(scores)?,
            balanced_accuracy: balanced_accuracy(&c)?,
            precision,
            recall,
            f1,
            mcc: mcc(&c),
        })
    }

    pub fn confusion(&self) -> Confusion {
        Confusion {
            tp: self.tp,
            tn: self.tn,
            fp: self.fp,
            fn_: self.fn_,
        }
    }
}
