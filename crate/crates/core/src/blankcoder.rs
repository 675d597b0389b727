//! Blank encoder: contextual encoding of the surrounding sentence, masked
//! local pooling into an initial blank vector, relative position encodings,
//! and `N` rounds of gated global refinement.
//!
//! Sentence matrices are `[n, d]` (one row per word). Word positions in the
//! zone and distance helpers are 1-indexed like the gap convention: a blank
//! with gap index `i` sits between words `i` and `i + 1`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{SurroundingSentence, MAX_SENTENCE_TOKENS};
use crate::embedding::{embed_sentence, pe_rows, sinusoidal_pe, EmbeddingTables, Vocabulary};
use crate::error::{Error, Result};
use crate::numerics::{ParamId, ParamStore, Tape, Tensor, Var};

const LN_EPS: f64 = 1e-5;
/// Init scale of the GRU weights applied to the memory. At init every `β`
/// is near 0.5, so `m` is roughly half the sum of all word rows; Glorot-sized
/// weights would saturate the gates on typical sentence lengths.
const MEMORY_INPUT_STD: f64 = 0.02;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    /// Model width.
    pub d: usize,
    pub heads: usize,
    /// Context-attention layers.
    pub layers: usize,
    pub d_ff: usize,
    /// Half-width of the visible zone.
    pub k: usize,
    /// Global update blocks.
    pub blocks: usize,
    /// Pooling hidden width.
    pub d_w: usize,
    pub dropout_rate: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            d: 64,
            heads: 4,
            layers: 2,
            d_ff: 128,
            k: 3,
            blocks: 2,
            d_w: 64,
            dropout_rate: 0.1,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.d == 0 || self.d % 2 != 0 {
            return fail(format!("d must be even and positive, got {}", self.d));
        }
        if self.heads == 0 || self.d % self.heads != 0 {
            return fail(format!(
                "d = {} is not divisible by heads = {}",
                self.d, self.heads
            ));
        }
        if self.layers == 0 {
            return fail("at least one context-attention layer is required".into());
        }
        if self.k == 0 {
            return fail("visible-zone half-width k must be at least 1".into());
        }
        if self.d_ff == 0 || self.d_w == 0 {
            return fail("d_ff and d_w must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return fail(format!(
                "dropout_rate must lie in [0, 1), got {}",
                self.dropout_rate
            ));
        }
        Ok(())
    }

    pub fn d_k(&self) -> usize {
        self.d / self.heads
    }

    /// Variant whose visible zone always covers the whole sentence.
    pub fn without_local_pooling(mut self) -> Self {
        self.k = MAX_SENTENCE_TOKENS;
        self
    }
}

/// Contiguous 1-indexed word positions `start..=end` allowed to pool.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisibleZone {
    pub start: usize,
    pub end: usize,
}

impl VisibleZone {
    pub fn contains(&self, pos: usize) -> bool {
        (self.start..=self.end).contains(&pos)
    }

    pub fn len(&self) -> usize {
        (self.end + 1).saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn positions(&self) -> impl Iterator<Item = usize> {
        self.start..=self.end
    }
}

/// `{max(1, i − k + 1), …, min(n, i + k)}`.
pub fn visible_zone(i: usize, k: usize, n: usize) -> VisibleZone {
    VisibleZone {
        start: (i + 1).saturating_sub(k).max(1),
        end: n.min(i + k),
    }
}

/// Distance of each word to the gap; the nearest word on either side is 1.
pub fn rpe_distances(i: usize, n: usize) -> Vec<usize> {
    (1..=n)
        .map(|j| if j <= i { i - j + 1 } else { j - i })
        .collect()
}

/// Attention maps recorded by [`BlankCoder::encode`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionTrace {
    pub alpha: Vec<f64>,
    pub beta_blocks: Vec<Vec<f64>>,
    pub tokens: Vec<String>,
    pub gap_index: usize,
}

/// Dropout source; `None` means evaluation mode.
pub struct Dropout<'a> {
    rate: f64,
    rng: Option<&'a mut ChaCha8Rng>,
}

impl<'a> Dropout<'a> {
    pub fn eval() -> Self {
        Self {
            rate: 0.0,
            rng: None,
        }
    }

    pub fn train(rate: f64, rng: &'a mut ChaCha8Rng) -> Self {
        Self {
            rate,
            rng: Some(rng),
        }
    }

    fn apply(&mut self, tape: &mut Tape, x: Var) -> Result<Var> {
        let Some(rng) = self.rng.as_deref_mut() else {
            return Ok(x);
        };
        if self.rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - self.rate);
        let (r, c) = tape.value(x).dims2();
        let mask: Vec<f64> = (0..r * c)
            .map(|_| {
                if rng.gen::<f64>() < self.rate {
                    0.0
                } else {
                    keep
                }
            })
            .collect();
        let mask = tape.constant(Tensor::matrix(r, c, mask)?);
        tape.mul(x, mask)
    }
}

#[derive(Clone, Debug)]
pub struct ContextLayer {
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wo: ParamId,
    pub ln1_gain: ParamId,
    pub ln1_bias: ParamId,
    pub ff_w1: ParamId,
    pub ff_b1: ParamId,
    pub ff_w2: ParamId,
    pub ff_b2: ParamId,
    pub ln2_gain: ParamId,
    pub ln2_bias: ParamId,
}

#[derive(Clone, Debug)]
pub struct GruParams {
    pub w_z: ParamId,
    pub u_z: ParamId,
    pub b_z: ParamId,
    pub w_r: ParamId,
    pub u_r: ParamId,
    pub b_r: ParamId,
    pub w_h: ParamId,
    pub u_h: ParamId,
    pub b_h: ParamId,
}

#[derive(Clone, Debug)]
pub struct UpdateBlock {
    /// Query projection of the blank, all heads side by side (`d × d`).
    pub w_uq: ParamId,
    /// Key projection of the words, all heads side by side (`d × d`).
    pub w_uk: ParamId,
    pub gru: GruParams,
}

/// Parameter handles of the encoder.
#[derive(Clone, Debug)]
pub struct BlankCoder {
    pub cfg: EncoderConfig,
    pub tables: EmbeddingTables,
    pub layers: Vec<ContextLayer>,
    pub pool_w: ParamId,
    pub pool_q: ParamId,
    pub empty_context: ParamId,
    pub blocks: Vec<UpdateBlock>,
}

/// Outputs of one blank encoding, with the intermediate stages kept.
pub struct BlankEncoding {
    pub b: Var,
    /// Initial embedding before the blank's RPE is added.
    pub b0: Var,
    pub trace: AttentionTrace,
}

fn lookup(store: &ParamStore, name: &str) -> Result<ParamId> {
    store
        .id(name)
        .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{name}`")))
}

impl BlankCoder {
    pub fn init(
        cfg: EncoderConfig,
        vocab: &Vocabulary,
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.d;
        let tables = EmbeddingTables::init(store, vocab.len(), d, rng)?;
        let mut layers = Vec::with_capacity(cfg.layers);
        for l in 0..cfg.layers {
            let p = |s: &str| format!("encoder.layer{l}.{s}");
            layers.push(ContextLayer {
                wq: store.insert_glorot(p("wq"), d, d, rng)?,
                wk: store.insert_glorot(p("wk"), d, d, rng)?,
                wv: store.insert_glorot(p("wv"), d, d, rng)?,
                wo: store.insert_glorot(p("wo"), d, d, rng)?,
                ln1_gain: store.insert_full(p("ln1.gain"), vec![1, d], 1.0)?,
                ln1_bias: store.insert_full(p("ln1.bias"), vec![1, d], 0.0)?,
                ff_w1: store.insert_glorot(p("ff.w1"), d, cfg.d_ff, rng)?,
                ff_b1: store.insert_full(p("ff.b1"), vec![1, cfg.d_ff], 0.0)?,
                ff_w2: store.insert_glorot(p("ff.w2"), cfg.d_ff, d, rng)?,
                ff_b2: store.insert_full(p("ff.b2"), vec![1, d], 0.0)?,
                ln2_gain: store.insert_full(p("ln2.gain"), vec![1, d], 1.0)?,
                ln2_bias: store.insert_full(p("ln2.bias"), vec![1, d], 0.0)?,
            });
        }
        let pool_w = store.insert_glorot("pool.w", d, cfg.d_w, rng)?;
        let pool_q = store.insert_glorot("pool.q", cfg.d_w, 1, rng)?;
        let empty_context = store.insert_normal("pool.empty_context", vec![1, d], 0.02, rng)?;
        let mut blocks = Vec::with_capacity(cfg.blocks);
        for t in 0..cfg.blocks {
            let p = |s: &str| format!("update.block{t}.{s}");
            blocks.push(UpdateBlock {
                w_uq: store.insert_glorot(p("w_uq"), d, d, rng)?,
                w_uk: store.insert_glorot(p("w_uk"), d, d, rng)?,
                gru: GruParams {
                    w_z: store.insert_normal(p("gru.w_z"), vec![d, d], MEMORY_INPUT_STD, rng)?,
                    u_z: store.insert_glorot(p("gru.u_z"), d, d, rng)?,
                    b_z: store.insert_full(p("gru.b_z"), vec![1, d], 0.0)?,
                    w_r: store.insert_normal(p("gru.w_r"), vec![d, d], MEMORY_INPUT_STD, rng)?,
                    u_r: store.insert_glorot(p("gru.u_r"), d, d, rng)?,
                    b_r: store.insert_full(p("gru.b_r"), vec![1, d], 0.0)?,
                    w_h: store.insert_normal(p("gru.w_h"), vec![d, d], MEMORY_INPUT_STD, rng)?,
                    u_h: store.insert_glorot(p("gru.u_h"), d, d, rng)?,
                    b_h: store.insert_full(p("gru.b_h"), vec![1, d], 0.0)?,
                },
            });
        }
        Ok(Self {
            cfg,
            tables,
            layers,
            pool_w,
            pool_q,
            empty_context,
            blocks,
        })
    }

    /// Re-binds handles to a store loaded from a checkpoint.
    pub fn from_store(cfg: EncoderConfig, store: &ParamStore) -> Result<Self> {
        cfg.validate()?;
        let tables = EmbeddingTables::from_store(store)?;
        if tables.d != cfg.d {
            return Err(Error::Checkpoint(format!(
                "embedding width {} does not match configured d = {}",
                tables.d, cfg.d
            )));
        }
        let layers = (0..cfg.layers)
            .map(|l| {
                let p = |s: &str| lookup(store, &format!("encoder.layer{l}.{s}"));
                Ok(ContextLayer {
                    wq: p("wq")?,
                    wk: p("wk")?,
                    wv: p("wv")?,
                    wo: p("wo")?,
                    ln1_gain: p("ln1.gain")?,
                    ln1_bias: p("ln1.bias")?,
                    ff_w1: p("ff.w1")?,
                    ff_b1: p("ff.b1")?,
                    ff_w2: p("ff.w2")?,
                    ff_b2: p("ff.b2")?,
                    ln2_gain: p("ln2.gain")?,
                    ln2_bias: p("ln2.bias")?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let blocks = (0..cfg.blocks)
            .map(|t| {
                let p = |s: &str| lookup(store, &format!("update.block{t}.{s}"));
                Ok(UpdateBlock {
                    w_uq: p("w_uq")?,
                    w_uk: p("w_uk")?,
                    gru: GruParams {
                        w_z: p("gru.w_z")?,
                        u_z: p("gru.u_z")?,
                        b_z: p("gru.b_z")?,
                        w_r: p("gru.w_r")?,
                        u_r: p("gru.u_r")?,
                        b_r: p("gru.b_r")?,
                        w_h: p("gru.w_h")?,
                        u_h: p("gru.u_h")?,
                        b_h: p("gru.b_h")?,
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            tables,
            layers,
            pool_w: lookup(store, "pool.w")?,
            pool_q: lookup(store, "pool.q")?,
            empty_context: lookup(store, "pool.empty_context")?,
            blocks,
            cfg,
        })
    }

    /// `L` post-norm Transformer layers over `s` (`[n, d]`).
    pub fn context_encode(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        s: Var,
        dropout: &mut Dropout,
    ) -> Result<Var> {
        let mut x = s;
        for layer in &self.layers {
            x = self.context_layer(tape, store, layer, x, dropout)?;
        }
        Ok(x)
    }

    fn context_layer(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        layer: &ContextLayer,
        x: Var,
        dropout: &mut Dropout,
    ) -> Result<Var> {
        let d_k = self.cfg.d_k();
        let scale = 1.0 / (d_k as f64).sqrt();
        let wq = tape.param(store, layer.wq);
        let wk = tape.param(store, layer.wk);
        let wv = tape.param(store, layer.wv);
        let q = tape.matmul(x, wq)?;
        let k = tape.matmul(x, wk)?;
        let v = tape.matmul(x, wv)?;
        let mut heads = Vec::with_capacity(self.cfg.heads);
        for h in 0..self.cfg.heads {
            let qh = tape.slice_cols(q, h * d_k, d_k)?;
            let kh = tape.slice_cols(k, h * d_k, d_k)?;
            let vh = tape.slice_cols(v, h * d_k, d_k)?;
            let kt = tape.transpose(kh)?;
            let scores = tape.matmul(qh, kt)?;
            let scores = tape.scale(scores, scale)?;
            let weights = tape.softmax(scores)?;
            heads.push(tape.matmul(weights, vh)?);
        }
        let merged = tape.concat_cols(&heads)?;
        let wo = tape.param(store, layer.wo);
        let attn = tape.matmul(merged, wo)?;
        let attn = dropout.apply(tape, attn)?;
        let res = tape.add(x, attn)?;
        let (g1, b1) = (
            tape.param(store, layer.ln1_gain),
            tape.param(store, layer.ln1_bias),
        );
        let x1 = tape.layer_norm(res, g1, b1, LN_EPS)?;

        let w1 = tape.param(store, layer.ff_w1);
        let fb1 = tape.param(store, layer.ff_b1);
        let w2 = tape.param(store, layer.ff_w2);
        let fb2 = tape.param(store, layer.ff_b2);
        let hidden = tape.matmul(x1, w1)?;
        let hidden = tape.add_row(hidden, fb1)?;
        let hidden = tape.relu(hidden)?;
        let ff = tape.matmul(hidden, w2)?;
        let ff = tape.add_row(ff, fb2)?;
        let ff = dropout.apply(tape, ff)?;
        let res = tape.add(x1, ff)?;
        let (g2, b2) = (
            tape.param(store, layer.ln2_gain),
            tape.param(store, layer.ln2_bias),
        );
        tape.layer_norm(res, g2, b2, LN_EPS)
    }

    /// `α = softmax(tanh(H W) q_w + u)` with `u = −∞` outside the zone; `[1, n]`.
    pub fn pooling_weights(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        h: Var,
        zone: VisibleZone,
    ) -> Result<Var> {
        let n = tape.value(h).rows();
        let mask: Vec<f64> = (1..=n)
            .map(|j| {
                if zone.contains(j) {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        if mask.iter().all(|m| *m == f64::NEG_INFINITY) {
            return Err(Error::DegenerateMask);
        }
        let w = tape.param(store, self.pool_w);
        let q = tape.param(store, self.pool_q);
        let hidden = tape.matmul(h, w)?;
        let hidden = tape.tanh(hidden)?;
        let logits = tape.matmul(hidden, q)?;
        let logits = tape.transpose(logits)?;
        let mask = tape.constant(Tensor::row(mask));
        let logits = tape.add(logits, mask)?;
        tape.softmax(logits)
    }

    /// `b⁰ = Hα`, or the learned empty-context vector when there are no words.
    pub fn local_pool(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        h: Option<Var>,
        alpha: Option<Var>,
    ) -> Result<Var> {
        match (h, alpha) {
            (Some(h), Some(alpha)) => tape.matmul(alpha, h),
            _ => Ok(tape.param(store, self.empty_context)),
        }
    }

    /// Adds `PE_x` to word rows (x = distance to the gap) and `PE_0` to the blank.
    pub fn add_rpe(
        &self,
        tape: &mut Tape,
        h: Option<Var>,
        b0: Var,
        gap_index: usize,
    ) -> Result<(Option<Var>, Var)> {
        let d = self.cfg.d;
        let pe0 = tape.constant(Tensor::row(sinusoidal_pe(0, d)?));
        let b0 = tape.add(b0, pe0)?;
        let h = match h {
            Some(h) => {
                let n = tape.value(h).rows();
                let rpe = tape.constant(pe_rows(&rpe_distances(gap_index, n), d)?);
                Some(tape.add(h, rpe)?)
            }
            None => None,
        };
        Ok((h, b0))
    }

    /// Per-head `σ(K_h q_h / √d_k)`, averaged over heads; `[1, n]`.
    pub fn blank_context_scores(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        block: &UpdateBlock,
        b: Var,
        h: Var,
    ) -> Result<Var> {
        let d_k = self.cfg.d_k();
        let scale = 1.0 / (d_k as f64).sqrt();
        let w_uq = tape.param(store, block.w_uq);
        let w_uk = tape.param(store, block.w_uk);
        let q = tape.matmul(b, w_uq)?;
        let k = tape.matmul(h, w_uk)?;
        let mut sum: Option<Var> = None;
        for head in 0..self.cfg.heads {
            let qh = tape.slice_cols(q, head * d_k, d_k)?;
            let kh = tape.slice_cols(k, head * d_k, d_k)?;
            let kt = tape.transpose(kh)?;
            let logits = tape.matmul(qh, kt)?;
            let logits = tape.scale(logits, scale)?;
            let beta = tape.sigmoid(logits)?;
            sum = Some(match sum {
                Some(s) => tape.add(s, beta)?,
                None => beta,
            });
        }
        let sum = sum.expect("heads >= 1");
        tape.scale(sum, 1.0 / self.cfg.heads as f64)
    }

    /// `m = Hβ`.
    pub fn memory(&self, tape: &mut Tape, beta: Var, h: Var) -> Result<Var> {
        tape.matmul(beta, h)
    }

    /// GRU step with `m` as input and `b` as hidden state:
    /// `b' = (1 − z) ⊙ b + z ⊙ h̃`, computed as `b + z ⊙ (h̃ − b)`.
    pub fn gated_update(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        gru: &GruParams,
        m: Var,
        b: Var,
    ) -> Result<Var> {
        let gate =
            |tape: &mut Tape, w: ParamId, u: ParamId, bias: ParamId, hidden: Var| -> Result<Var> {
                let w = tape.param(store, w);
                let u = tape.param(store, u);
                let bias = tape.param(store, bias);
                let x = tape.matmul(m, w)?;
                let hh = tape.matmul(hidden, u)?;
                let s = tape.add(x, hh)?;
                tape.add(s, bias)
            };
        let z = gate(tape, gru.w_z, gru.u_z, gru.b_z, b)?;
        let z = tape.sigmoid(z)?;
        let r = gate(tape, gru.w_r, gru.u_r, gru.b_r, b)?;
        let r = tape.sigmoid(r)?;
        let rb = tape.mul(r, b)?;
        let cand = gate(tape, gru.w_h, gru.u_h, gru.b_h, rb)?;
        let cand = tape.tanh(cand)?;
        let diff = tape.sub(cand, b)?;
        let step = tape.mul(z, diff)?;
        tape.add(b, step)
    }

    /// Full pipeline for one surrounding sentence.
    pub fn encode(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        vocab: &Vocabulary,
        sentence: &SurroundingSentence,
        dropout: &mut Dropout,
    ) -> Result<BlankEncoding> {
        let n = sentence.len();
        let gap = sentence.gap_index;
        let (h, alpha) = if n == 0 {
            (None, None)
        } else {
            let s = embed_sentence(tape, store, &self.tables, vocab, sentence)?;
            let h = self.context_encode(tape, store, s, dropout)?;
            let zone = visible_zone(gap, self.cfg.k, n);
            let alpha = self.pooling_weights(tape, store, h, zone)?;
            (Some(h), Some(alpha))
        };
        let b0 = self.local_pool(tape, store, h, alpha)?;
        let (h_rpe, mut b) = self.add_rpe(tape, h, b0, gap)?;
        let mut beta_blocks = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let m = match h_rpe {
                Some(h) => {
                    let beta = self.blank_context_scores(tape, store, block, b, h)?;
                    beta_blocks.push(tape.value(beta).data().to_vec());
                    self.memory(tape, beta, h)?
                }
                None => {
                    beta_blocks.push(Vec::new());
                    tape.constant(Tensor::zeros(vec![1, self.cfg.d]))
                }
            };
            b = self.gated_update(tape, store, &block.gru, m, b)?;
        }
        let trace = AttentionTrace {
            alpha: alpha
                .map(|a| tape.value(a).data().to_vec())
                .unwrap_or_default(),
            beta_blocks,
            tokens: sentence.tokens.clone(),
            gap_index: gap,
        };
        Ok(BlankEncoding { b, b0, trace })
    }
}
