#![allow(dead_code)]

use pbr_core::blankcoder::{Dropout, EncoderConfig};
use pbr_core::corpus::{synth_generate, ContractDocument, SurroundingSentence, SynthConfig};
use pbr_core::embedding::Vocabulary;
use pbr_core::numerics::{ParamStore, Tape, Var};
use pbr_core::pbr_head::{focal_loss_var, FocalConfig, HeadConfig};
use pbr_core::train_eval::{ModelConfig, PbrModel};
use pbr_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const WORDS: [&str; 12] = [
    "seller", "buyer", "price", "pays", "total", "the", "of", "deposit", "shall", "yuan", "house",
    "within",
];

pub fn toy_encoder(k: usize, blocks: usize) -> EncoderConfig {
    EncoderConfig {
        d: 8,
        heads: 2,
        layers: 1,
        d_ff: 16,
        k,
        blocks,
        d_w: 8,
        dropout_rate: 0.0,
    }
}

pub fn toy_model(encoder: EncoderConfig, seed: u64) -> PbrModel {
    let cfg = ModelConfig {
        encoder,
        head: HeadConfig { comparative: true },
    };
    PbrModel::init(
        cfg,
        Vocabulary::from_tokens(WORDS),
        &mut ChaCha8Rng::seed_from_u64(seed),
    )
    .unwrap()
}

/// `n` words drawn from the toy vocabulary plus the odd unknown word.
pub fn random_sentence(rng: &mut ChaCha8Rng, n: usize) -> SurroundingSentence {
    let tokens = (0..n)
        .map(|_| {
            if rng.gen_bool(0.1) {
                "unseen".to_string()
            } else {
                WORDS[rng.gen_range(0..WORDS.len())].to_string()
            }
        })
        .collect();
    SurroundingSentence::new(tokens, rng.gen_range(0..=n)).unwrap()
}

/// Focal loss of one predicted pair: encode both blanks, classify, score
/// against `label`.
pub fn pair_loss(
    model: &PbrModel,
    tape: &mut Tape,
    store: &ParamStore,
    a: &SurroundingSentence,
    b: &SurroundingSentence,
    label: u8,
) -> Result<Var> {
    let mut dropout = Dropout::eval();
    let ea = model
        .encoder
        .encode(tape, store, &model.vocab, a, &mut dropout)?;
    let eb = model
        .encoder
        .encode(tape, store, &model.vocab, b, &mut dropout)?;
    let p = model.head.predict(tape, store, ea.b, eb.b)?;
    let l = focal_loss_var(tape, p, &[label], FocalConfig::default())?;
    tape.sum_all(l)
}

/// A few small synthetic documents for fast training tests.
pub fn small_corpus(num_documents: usize, seed: u64) -> Vec<ContractDocument> {
    let cfg = SynthConfig {
        num_documents,
        rng_seed: seed,
        ..SynthConfig::default()
    };
    synth_generate(&cfg).unwrap().0
}

/// Brute-force reference: count by definition, rank by all-pairs comparison.
pub struct Oracle {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
    pub auc: f64,
    pub balanced_accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub mcc: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

pub fn oracle(scores: &[(f64, u8)], tau: f64) -> Oracle {
    let (mut tp, mut tn, mut fp, mut fn_) = (0u64, 0u64, 0u64, 0u64);
    for &(s, y) in scores {
        match (s >= tau, y == 1) {
            (true, true) => tp += 1,
            (false, false) => tn += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
        }
    }
    let mut wins = 0.0;
    let mut total = 0.0;
    for &(sp, yp) in scores {
        for &(sn, yn) in scores {
            if yp == 1 && yn == 0 {
                total += 1.0;
                wins += if sp > sn {
                    1.0
                } else if sp == sn {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    let [tpf, tnf, fpf, fnf] = [tp, tn, fp, fn_].map(|v| v as f64);
    let precision = ratio(tpf, tpf + fpf);
    let recall = ratio(tpf, tpf + fnf);
    let den = ((tpf + fpf) * (tpf + fnf) * (tnf + fpf) * (tnf + fnf)).sqrt();
    Oracle {
        tp,
        tn,
        fp,
        fn_,
        auc: wins / total,
        balanced_accuracy: 0.5 * (recall + ratio(tnf, tnf + fpf)),
        precision,
        recall,
        f1: ratio(2.0 * precision * recall, precision + recall),
        mcc: ratio(tpf * tnf - fpf * fnf, den),
    }
}

/// Scores on a coarse grid (plenty of ties) or continuous, with both classes present.
pub fn random_set(rng: &mut ChaCha8Rng) -> Vec<(f64, u8)> {
    let n = rng.gen_range(2..=80);
    let coarse = rng.gen_bool(0.5);
    let p_pos = rng.gen_range(0.05..0.95);
    let mut set: Vec<(f64, u8)> = (0..n)
        .map(|_| {
            let s = if coarse {
                rng.gen_range(0..=10) as f64 / 10.0
            } else {
                rng.gen_range(0.0..1.0)
            };
            (s, rng.gen_bool(p_pos) as u8)
        })
        .collect();
    set[0].1 = 1;
    set[1].1 = 0;
    set
}
