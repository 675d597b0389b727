//! Siamese pair classifier and the focal-loss objective.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ParamId, ParamStore, Tape, Tensor, Var};

const CLAMP: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeadConfig {
    /// Include the `|b_i − b_j|` block in the classifier input.
    pub comparative: bool,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self { comparative: true }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FocalConfig {
    pub fl_alpha: f64,
    pub gamma: f64,
}

impl Default for FocalConfig {
    fn default() -> Self {
        Self {
            fl_alpha: 0.25,
            gamma: 2.0,
        }
    }
}

impl FocalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fl_alpha > 0.0 && self.fl_alpha < 1.0) {
            return Err(Error::Config(format!(
                "fl_alpha must lie in (0, 1), got {}",
                self.fl_alpha
            )));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!(
                "gamma must be finite and nonnegative, got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(CLAMP, 1.0 - CLAMP)
}

/// Focal loss of one prediction against label `r`.
pub fn focal_loss(r_hat: f64, r: u8, cfg: FocalConfig) -> f64 {
    focal_value_and_slope(r_hat, r, cfg).0
}

/// Loss and its derivative with respect to `r_hat` (zero where clamping is active).
fn focal_value_and_slope(r_hat: f64, r: u8, cfg: FocalConfig) -> (f64, f64) {
    let p = clamp_prob(r_hat);
    let inside = p == r_hat;
    let g = cfg.gamma;
    let (value, slope) = if r == 1 {
        let q = 1.0 - p;
        let a = cfg.fl_alpha;
        let value = -a * q.powf(g) * p.ln();
        let dq = if g == 0.0 { 0.0 } else { g * q.powf(g - 1.0) };
        (value, a * (dq * p.ln() - q.powf(g) / p))
    } else {
        let q = 1.0 - p;
        let a = 1.0 - cfg.fl_alpha;
        let value = -a * p.powf(g) * q.ln();
        let dp = if g == 0.0 { 0.0 } else { g * p.powf(g - 1.0) };
        (value, -a * (dp * q.ln() - p.powf(g) / q))
    };
    (value, if inside { slope } else { 0.0 })
}

/// Elementwise focal loss of a `[1, m]` prediction row against `labels`.
pub fn focal_loss_var(tape: &mut Tape, r_hat: Var, labels: &[u8], cfg: FocalConfig) -> Result<Var> {
    let n = tape.value(r_hat).len();
    if n != labels.len() {
        return Err(Error::Dimension {
            op: "focal_loss",
            left: vec![n],
            right: vec![labels.len()],
        });
    }
    let labels = labels.to_vec();
    tape.map(r_hat, move |i, p| focal_value_and_slope(p, labels[i], cfg))
}

/// `[b_i : b_j : |b_i − b_j|]` as a `[1, 3d]` row.
pub fn pair_features(tape: &mut Tape, b_i: Var, b_j: Var) -> Result<Var> {
    let diff = tape.sub(b_i, b_j)?;
    let abs = tape.abs(diff)?;
    tape.concat_cols(&[b_i, b_j, abs])
}

/// Classifier weights: one ReLU hidden layer of width `d`, then a sigmoid unit.
#[derive(Clone, Debug)]
pub struct PairHead {
    pub cfg: HeadConfig,
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

impl PairHead {
    fn input_width(cfg: &HeadConfig, d: usize) -> usize {
        if cfg.comparative {
            3 * d
        } else {
            2 * d
        }
    }

    pub fn init(
        cfg: HeadConfig,
        d: usize,
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let input = Self::input_width(&cfg, d);
        Ok(Self {
            w1: store.insert_glorot("head.w1", input, d, rng)?,
            b1: store.insert_full("head.b1", vec![1, d], 0.0)?,
            w2: store.insert_glorot("head.w2", d, 1, rng)?,
            b2: store.insert_full("head.b2", vec![1, 1], 0.0)?,
            cfg,
        })
    }

    pub fn from_store(cfg: HeadConfig, d: usize, store: &ParamStore) -> Result<Self> {
        let get = |name: &str| {
            store
                .id(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{name}`")))
        };
        let head = Self {
            w1: get("head.w1")?,
            b1: get("head.b1")?,
            w2: get("head.w2")?,
            b2: get("head.b2")?,
            cfg,
        };
        let expected = [Self::input_width(&head.cfg, d), d];
        if store.value(head.w1).shape() != expected {
            return Err(Error::Checkpoint(format!(
                "head.w1 has shape {:?}, expected {:?}",
                store.value(head.w1).shape(),
                expected
            )));
        }
        Ok(head)
    }

    pub fn features(&self, tape: &mut Tape, b_i: Var, b_j: Var) -> Result<Var> {
        if self.cfg.comparative {
            pair_features(tape, b_i, b_j)
        } else {
            tape.concat_cols(&[b_i, b_j])
        }
    }

    /// Raw order-dependent score `r̂ ∈ (0, 1)` as a `[1, 1]` variable.
    pub fn predict(&self, tape: &mut Tape, store: &ParamStore, b_i: Var, b_j: Var) -> Result<Var> {
        let (ci, cj) = (tape.value(b_i).cols(), tape.value(b_j).cols());
        if ci != cj {
            return Err(Error::Dimension {
                op: "pair_features",
                left: tape.value(b_i).shape().to_vec(),
                right: tape.value(b_j).shape().to_vec(),
            });
        }
        let x = self.features(tape, b_i, b_j)?;
        let w1 = tape.param(store, self.w1);
        let b1 = tape.param(store, self.b1);
        let w2 = tape.param(store, self.w2);
        let b2 = tape.param(store, self.b2);
        let h = tape.matmul(x, w1)?;
        let h = tape.add_row(h, b1)?;
        let h = tape.relu(h)?;
        let o = tape.matmul(h, w2)?;
        let o = tape.add_row(o, b2)?;
        tape.sigmoid(o)
    }

    /// Mean of both orderings.
    pub fn predict_symmetric(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        b_i: Var,
        b_j: Var,
    ) -> Result<Var> {
        let a = self.predict(tape, store, b_i, b_j)?;
        let b = self.predict(tape, store, b_j, b_i)?;
        let s = tape.add(a, b)?;
        tape.scale(s, 0.5)
    }

    /// Symmetric scores on plain vectors, without keeping a graph around.
    pub fn score(&self, store: &ParamStore, b_i: &[f64], b_j: &[f64]) -> Result<f64> {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::row(b_i.to_vec()));
        let y = tape.constant(Tensor::row(b_j.to_vec()));
        let s = self.predict_symmetric(&mut tape, store, x, y)?;
        Ok(tape.scalar(s))
    }
}
