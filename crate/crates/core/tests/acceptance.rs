//! One PASS/FAIL line per acceptance criterion.
//!
//! Criteria 5 to 7 train about twenty full-size models and take roughly
//! forty minutes on one core. Set `PBR_ACCEPTANCE=1,2,3` to run a subset.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use pbr_core::blankcoder::{rpe_distances, visible_zone, Dropout};
use pbr_core::check::{check_document, CheckThresholds, Flag, PairScorer};
use pbr_core::corpus::{parse_document, synth_generate, ContractDocument, SynthConfig};
use pbr_core::embedding::embed_sentence;
use pbr_core::numerics::{grad_check, grad_check_params, ParamStore, Tape, Tensor, Var};
use pbr_core::pbr_head::{focal_loss, FocalConfig};
use pbr_core::train_eval::{
    evaluate, load_model, model_records, read_records, save_model, train_with, Metrics,
    MetricsReport, ModelConfig, PbrModel, TrainConfig, MAGIC,
};
use pbr_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: [u64; 3] = [7, 11, 12];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------- criterion 1

fn weighted_sum(tape: &mut Tape, y: Var, seed: u64) -> Result<Var> {
    let shape = tape.value(y).shape().to_vec();
    let n = shape.iter().product();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = tape.constant(Tensor::new(
        shape,
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )?);
    let p = tape.mul(y, c)?;
    tape.sum_all(p)
}

fn max_error(store: &ParamStore, f: impl Fn(&mut Tape, &ParamStore) -> Result<Var>) -> f64 {
    grad_check_params(store, f, 1e-6)
        .unwrap()
        .iter()
        .map(|c| c.max_rel_error)
        .fold(0.0, f64::max)
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

fn criterion_1() -> Verdict {
    let model = common::toy_model(common::toy_encoder(2, 1), 5);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let a = common::random_sentence(&mut rng, 6);
    let b = common::random_sentence(&mut rng, 6);
    let end_to_end = [0u8, 1]
        .iter()
        .map(|&label| {
            max_error(&model.store, |t, s| {
                common::pair_loss(&model, t, s, &a, &b, label)
            })
        })
        .fold(0.0, f64::max);

    let h = random_matrix(&mut rng, 6, 8);
    let bv = random_matrix(&mut rng, 1, 8);
    let bw = random_matrix(&mut rng, 1, 8);
    let m = random_matrix(&mut rng, 1, 8);
    let enc = &model.encoder;
    let mut components: Vec<(&str, f64)> = Vec::new();
    components.push((
        "embedding",
        max_error(&model.store, |t, s| {
            let e = embed_sentence(t, s, &enc.tables, &model.vocab, &a)?;
            weighted_sum(t, e, 1)
        }),
    ));
    components.push((
        "context encoder",
        max_error(&model.store, |t, s| {
            let x = t.constant(h.clone());
            let y = enc.context_encode(t, s, x, &mut Dropout::eval())?;
            weighted_sum(t, y, 2)
        }),
    ));
    components.push((
        "local pooling",
        max_error(&model.store, |t, s| {
            let x = t.constant(h.clone());
            let alpha = enc.pooling_weights(t, s, x, visible_zone(3, 2, 6))?;
            let b0 = enc.local_pool(t, s, Some(x), Some(alpha))?;
            weighted_sum(t, b0, 3)
        }),
    ));
    components.push((
        "blank-context attention",
        max_error(&model.store, |t, s| {
            let x = t.constant(h.clone());
            let b = t.constant(bv.clone());
            let beta = enc.blank_context_scores(t, s, &enc.blocks[0], b, x)?;
            let mem = enc.memory(t, beta, x)?;
            weighted_sum(t, mem, 4)
        }),
    ));
    components.push((
        "gated update",
        max_error(&model.store, |t, s| {
            let mv = t.constant(m.clone());
            let b = t.constant(bv.clone());
            let y = enc.gated_update(t, s, &enc.blocks[0].gru, mv, b)?;
            weighted_sum(t, y, 5)
        }),
    ));
    components.push((
        "classifier",
        max_error(&model.store, |t, s| {
            let x = t.constant(bv.clone());
            let y = t.constant(bw.clone());
            let p = model.head.predict(t, s, x, y)?;
            weighted_sum(t, p, 6)
        }),
    ));
    components.push((
        "focal loss",
        grad_check(
            |t, v| {
                let l =
                    pbr_core::pbr_head::focal_loss_var(t, v, &[1, 0, 1], FocalConfig::default())?;
                t.sum_all(l)
            },
            &Tensor::row(vec![0.3, 0.6, 0.9]),
            1e-6,
        )
        .unwrap(),
    ));
    let worst = components.iter().map(|c| c.1).fold(0.0, f64::max);
    let detail = format!(
        "end-to-end max rel err {end_to_end:.2e} (<= 1e-4); components {}",
        components
            .iter()
            .map(|(n, e)| format!("{n} {e:.1e}"))
            .collect::<Vec<_>>()
            .join(", ")
    );
    verdict(end_to_end <= 1e-4 && worst <= 1e-5, detail)
}

// ---------------------------------------------------------------- criterion 2

fn criterion_2() -> Verdict {
    let mut failures = Vec::new();
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.gen_range(1..=4);
        let model = common::toy_model(common::toy_encoder(k, 2), seed);
        let n = rng.gen_range(1..=16);
        let s = common::random_sentence(&mut rng, n);
        let trace = model.trace_sentence(&s).unwrap();

        let total: f64 = trace.alpha.iter().sum();
        let zone = visible_zone(s.gap_index, k, n);
        let outside_zero = trace
            .alpha
            .iter()
            .enumerate()
            .all(|(j, a)| zone.contains(j + 1) || *a == 0.0);
        if (total - 1.0).abs() > 1e-12 || !outside_zero {
            failures.push(format!("seed {seed}: alpha"));
        }
        if !trace
            .beta_blocks
            .iter()
            .flatten()
            .all(|b| *b > 0.0 && *b < 1.0)
        {
            failures.push(format!("seed {seed}: beta"));
        }

        let mut tape = Tape::new();
        let zeros = tape.constant(Tensor::zeros(vec![n, 8]));
        let b0 = tape.constant(Tensor::zeros(vec![1, 8]));
        let (h, _) = model
            .encoder
            .add_rpe(&mut tape, Some(zeros), b0, s.gap_index)
            .unwrap();
        let h = tape.value(h.unwrap());
        let dist = rpe_distances(s.gap_index, n);
        let rpe_ok =
            (0..n).all(|i| (0..n).all(|j| dist[i] != dist[j] || h.row_slice(i) == h.row_slice(j)));
        if !rpe_ok {
            failures.push(format!("seed {seed}: rpe"));
        }

        let encode = || {
            let mut tape = Tape::new();
            let e = model
                .encoder
                .encode(
                    &mut tape,
                    &model.store,
                    &model.vocab,
                    &s,
                    &mut Dropout::eval(),
                )
                .unwrap();
            tape.value(e.b)
                .data()
                .iter()
                .map(|x| x.to_bits())
                .collect::<Vec<_>>()
        };
        if encode() != encode() {
            failures.push(format!("seed {seed}: determinism"));
        }

        let other_len = rng.gen_range(1..=16);
        let other = common::random_sentence(&mut rng, other_len);
        let mut tape = Tape::new();
        let mut dropout = Dropout::eval();
        let x = model
            .encoder
            .encode(&mut tape, &model.store, &model.vocab, &s, &mut dropout)
            .unwrap()
            .b;
        let y = model
            .encoder
            .encode(&mut tape, &model.store, &model.vocab, &other, &mut dropout)
            .unwrap()
            .b;
        let xy = model
            .head
            .predict_symmetric(&mut tape, &model.store, x, y)
            .unwrap();
        let yx = model
            .head
            .predict_symmetric(&mut tape, &model.store, y, x)
            .unwrap();
        if tape.scalar(xy).to_bits() != tape.scalar(yx).to_bits() {
            failures.push(format!("seed {seed}: symmetry"));
        }
    }
    verdict(
        failures.is_empty(),
        if failures.is_empty() {
            "alpha, beta, RPE, determinism and symmetry hold on 100 seeds".to_string()
        } else {
            failures.join("; ")
        },
    )
}

// ---------------------------------------------------------------- criterion 3

fn criterion_3() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut mismatches = 0;
    for case in 0..1000 {
        let set = common::random_set(&mut rng);
        let tau = [0.0, 0.5, 1.0, rng.gen_range(0.0..1.0)][case % 4];
        let m = Metrics::from_scores(&set, tau).unwrap();
        let o = common::oracle(&set, tau);
        let counts = (m.tp, m.tn, m.fp, m.fn_) == (o.tp, o.tn, o.fp, o.fn_);
        let scalars = [
            (m.auc, o.auc),
            (m.balanced_accuracy, o.balanced_accuracy),
            (m.precision, o.precision),
            (m.recall, o.recall),
            (m.f1, o.f1),
            (m.mcc, o.mcc),
        ]
        .iter()
        .all(|(a, b)| (a - b).abs() <= 1e-12);
        if !(counts && scalars) {
            mismatches += 1;
        }
    }
    use pbr_core::train_eval::{mcc, precision_recall_f1, Confusion};
    let empty_pred = Confusion {
        tp: 0,
        tn: 4,
        fp: 0,
        fn_: 2,
    };
    let conventions =
        mcc(&empty_pred) == 0.0 && precision_recall_f1(&empty_pred) == (0.0, 0.0, 0.0);
    verdict(
        mismatches == 0 && conventions,
        format!("{mismatches} of 1000 sets disagree with the oracle; zero-denominator conventions hold: {conventions}"),
    )
}

// ---------------------------------------------------------------- criterion 4

fn criterion_4() -> Verdict {
    let mut worst = 0.0f64;
    let mut points = 0;
    for (i, fl_alpha) in [0.1, 0.25, 0.5, 0.75, 0.9].into_iter().enumerate() {
        let cfg = FocalConfig {
            fl_alpha,
            gamma: 0.0,
        };
        for j in 0..100 {
            let r_hat = (j as f64 + 0.5 + 0.1 * i as f64) / 100.6;
            worst = worst.max((focal_loss(r_hat, 1, cfg) + fl_alpha * r_hat.ln()).abs());
            worst = worst
                .max((focal_loss(r_hat, 0, cfg) + (1.0 - fl_alpha) * (1.0 - r_hat).ln()).abs());
            points += 2;
        }
    }
    let worked = focal_loss(
        0.5,
        1,
        FocalConfig {
            fl_alpha: 0.25,
            gamma: 2.0,
        },
    );
    verdict(
        points == 1000 && worst <= 1e-12 && (worked - 0.04332).abs() <= 1e-5,
        format!("gamma=0 max deviation {worst:.1e} over {points} points; worked value {worked:.6}"),
    )
}

// ------------------------------------------------------------- criteria 5 to 7

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
struct Variant {
    seed: u64,
    blocks: usize,
    k: usize,
    comparative: bool,
}

impl Variant {
    fn full(seed: u64) -> Self {
        Self {
            seed,
            blocks: 2,
            k: 3,
            comparative: true,
        }
    }
}

struct Run {
    model: PbrModel,
    dev: Vec<ContractDocument>,
    metrics: Metrics,
    epochs: usize,
    secs: f64,
}

/// Trains each variant once on the default synthetic corpus.
struct Runs {
    docs: Vec<ContractDocument>,
    done: BTreeMap<Variant, Run>,
}

impl Runs {
    fn new() -> Self {
        let (docs, _) = synth_generate(&SynthConfig::default()).unwrap();
        Self {
            docs,
            done: BTreeMap::new(),
        }
    }

    fn get(&mut self, v: Variant) -> &Run {
        if !self.done.contains_key(&v) {
            let mut model = ModelConfig::default();
            model.encoder.dropout_rate = 0.0;
            model.encoder.blocks = v.blocks;
            model.encoder.k = v.k;
            model.head.comparative = v.comparative;
            let cfg = TrainConfig {
                rng_seed: v.seed,
                early_stop_patience: 20,
                ..TrainConfig::default()
            };
            let t = Instant::now();
            let out = train_with(&self.docs, &model, &cfg, |_| {}).unwrap();
            let secs = t.elapsed().as_secs_f64();
            eprintln!(
                "  trained {v:?}: dev F1 {:.4}, BA {:.4}, best epoch {}, {:.0} s",
                out.dev_metrics.f1, out.dev_metrics.balanced_accuracy, out.best_epoch, secs
            );
            let dev = out
                .split
                .dev
                .iter()
                .map(|&i| self.docs[i].clone())
                .collect();
            self.done.insert(
                v,
                Run {
                    model: out.model,
                    dev,
                    metrics: out.dev_metrics,
                    epochs: out.log.len(),
                    secs,
                },
            );
        }
        &self.done[&v]
    }

    fn mean_f1(&mut self, f: impl Fn(u64) -> Variant) -> f64 {
        SEEDS
            .iter()
            .map(|&s| self.get(f(s)).metrics.f1)
            .sum::<f64>()
            / SEEDS.len() as f64
    }
}

fn criterion_5(runs: &mut Runs) -> Verdict {
    let r = runs.get(Variant::full(7));
    let m = &r.metrics;
    verdict(
        m.f1 >= 0.85 && m.balanced_accuracy >= 0.90 && r.epochs <= 20 && r.secs <= 900.0,
        format!(
            "dev F1 {:.4} (>= 0.85), BA {:.4} (>= 0.90), AUC {:.4}, MCC {:.4}, {} epochs, {:.0} s (<= 900)",
            m.f1, m.balanced_accuracy, m.auc, m.mcc, r.epochs, r.secs
        ),
    )
}

fn criterion_6(runs: &mut Runs) -> Verdict {
    let full = runs.mean_f1(Variant::full);
    let no_local = runs.mean_f1(|s| Variant {
        k: pbr_core::corpus::MAX_SENTENCE_TOKENS,
        ..Variant::full(s)
    });
    let no_update = runs.mean_f1(|s| Variant {
        blocks: 0,
        ..Variant::full(s)
    });
    let no_cmp = runs.mean_f1(|s| Variant {
        comparative: false,
        ..Variant::full(s)
    });
    verdict(
        full > no_local && full > no_update && full > no_cmp,
        format!(
            "mean dev F1 over seeds {SEEDS:?}: full {full:.4}, no local pooling {no_local:.4}, N=0 {no_update:.4}, no |bi-bj| {no_cmp:.4}"
        ),
    )
}

fn criterion_7(runs: &mut Runs) -> Verdict {
    let by_n: Vec<f64> = (0..=3)
        .map(|n| {
            runs.mean_f1(|s| Variant {
                blocks: n,
                ..Variant::full(s)
            })
        })
        .collect();
    let best = (0..by_n.len()).fold(0, |b, i| if by_n[i] > by_n[b] { i } else { b });
    let rising = by_n[..=best].windows(2).all(|w| w[1] >= w[0]);
    let k_curve: Vec<String> = [1, 2, 3, 4, 5]
        .iter()
        .map(|&k| {
            let f1 = runs
                .get(Variant {
                    k,
                    ..Variant::full(7)
                })
                .metrics
                .f1;
            format!("k={k} {f1:.4}")
        })
        .collect();
    verdict(
        rising,
        format!(
            "k=3 mean dev F1 by N: {}; best N={best}; k-sweep (N=2, seed 7): {}",
            by_n.iter()
                .enumerate()
                .map(|(n, f)| format!("N={n} {f:.4}"))
                .collect::<Vec<_>>()
                .join(", "),
            k_curve.join(", ")
        ),
    )
}

// ---------------------------------------------------------------- criterion 8

/// Walks the file with an independent reader of the documented layout.
fn layout_record_count(bytes: &[u8]) -> Option<usize> {
    let u32_at = |at: usize| -> Option<u32> {
        Some(u32::from_le_bytes(bytes.get(at..at + 4)?.try_into().ok()?))
    };
    if bytes.get(..8)? != MAGIC {
        return None;
    }
    let mut at = 8;
    let mut count = 0;
    while at < bytes.len() {
        let name_len = u32_at(at)? as usize;
        at += 4;
        std::str::from_utf8(bytes.get(at..at + name_len)?).ok()?;
        at += name_len;
        let rank = u32_at(at)? as usize;
        at += 4;
        let mut elems = 1usize;
        for _ in 0..rank {
            elems *= u32_at(at)? as usize;
            at += 4;
        }
        at += 8 * elems;
        count += 1;
    }
    (at == bytes.len()).then_some(count)
}

fn criterion_8(runs: &mut Runs) -> Verdict {
    let r = runs.get(Variant::full(7));
    let report = |m: &PbrModel| {
        let metrics = evaluate(m, &r.dev, 0.5).unwrap();
        MetricsReport::new(
            metrics,
            0.5,
            &r.dev,
            serde_json::to_value(&m.config).unwrap(),
        )
        .unwrap()
        .to_json()
        .unwrap()
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    save_model(std::fs::File::create(&path).unwrap(), &r.model).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    let loaded = load_model(bytes.as_slice()).unwrap();
    let same_json = report(&r.model) == report(&loaded);
    let expected = model_records(&r.model);
    let records_match = read_records(bytes.as_slice()).unwrap() == expected;
    let layout = layout_record_count(&bytes) == Some(expected.len());
    verdict(
        same_json && records_match && layout,
        format!(
            "{} bytes, {} records; metrics JSON identical: {same_json}; layout walk: {layout}",
            bytes.len(),
            expected.len()
        ),
    )
}

// ---------------------------------------------------------------- criterion 9

/// Scores from a table of known referents: same referent 0.97, different 0.03,
/// and one deliberately uncertain pair.
struct Stub;

impl PairScorer for Stub {
    fn score_pairs(&self, doc: &ContractDocument, pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
        let referent = |id: &str| match id {
            "price1" | "price2" => "price",
            "deposit" => "deposit",
            _ => "days",
        };
        Ok(pairs
            .iter()
            .map(|&(a, b)| {
                let (a, b) = (
                    doc.blanks[a].blank_id.as_str(),
                    doc.blanks[b].blank_id.as_str(),
                );
                if (a, b) == ("deposit", "days") {
                    0.5
                } else if referent(a) == referent(b) {
                    0.97
                } else {
                    0.03
                }
            })
            .collect())
    }
}

fn criterion_9() -> Verdict {
    let text = "The seller sells the house for [[price1|500]] yuan.\n\
                The buyer pays the price of [[price2|600]] yuan at signing.\n\
                A deposit of [[deposit|500]] yuan is due.\n\
                Delivery happens within [[days|500]] days.\n";
    let doc = parse_document("sale", text).unwrap();
    let report = check_document(&Stub, &doc, CheckThresholds::default()).unwrap();
    use Flag::*;
    let expected = [
        ("price1", "price2", InconsistentDifferentFill),
        ("price1", "deposit", InconsistentSameFill),
        ("price1", "days", InconsistentSameFill),
        ("price2", "deposit", Ok),
        ("price2", "days", Ok),
        ("deposit", "days", Ok),
    ];
    let got: Vec<(&str, &str, Flag)> = report
        .findings
        .iter()
        .map(|f| (f.blank_a.as_str(), f.blank_b.as_str(), f.flag))
        .collect();
    verdict(
        got == expected,
        format!(
            "{} pairs, {} flagged, flags as expected: {}",
            got.len(),
            report.flagged().count(),
            got == expected
        ),
    )
}

// ----------------------------------------------------------------------- main

fn main() {
    let selected: Option<Vec<usize>> = std::env::var("PBR_ACCEPTANCE")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let wanted = |n: usize| selected.as_ref().map_or(true, |s| s.contains(&n));
    let mut runs: Option<Runs> = None;
    let mut failed = 0;
    let titles = [
        "gradient correctness",
        "invariant suite",
        "metric oracle equivalence",
        "focal-loss reduction",
        "synthetic learnability",
        "ablation direction",
        "sensitivity shape",
        "checkpoint round trip",
        "check-path correctness",
    ];
    for (i, title) in titles.iter().enumerate() {
        let n = i + 1;
        if !wanted(n) {
            continue;
        }
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| match n {
            1 => criterion_1(),
            2 => criterion_2(),
            3 => criterion_3(),
            4 => criterion_4(),
            9 => criterion_9(),
            _ => {
                let runs = runs.get_or_insert_with(Runs::new);
                match n {
                    5 => criterion_5(runs),
                    6 => criterion_6(runs),
                    7 => criterion_7(runs),
                    _ => criterion_8(runs),
                }
            }
        }));
        let v = outcome.unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        if !v.pass {
            failed += 1;
        }
        println!(
            "criterion {n} {} {title}: {} [{:.1} s]",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            t.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
