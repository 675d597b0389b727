use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::Metrics;
use super::model::{ModelConfig, PbrModel};
use super::optim::{Adam, AdamConfig};
use crate::blankcoder::Dropout;
use crate::corpus::{generate_pairs, BlankPair, ContractDocument};
use crate::embedding::Vocabulary;
use crate::error::{Error, Result};
use crate::numerics::{Tape, Var};
use crate::pbr_head::{focal_loss_var, FocalConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Documents per optimizer step; every blank pair of a document is used.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub rng_seed: u64,
    /// Epochs without a dev balanced-accuracy improvement before stopping.
    pub early_stop_patience: usize,
    pub dev_fraction: f64,
    pub shuffle: bool,
    pub focal: FocalConfig,
    /// Decision threshold for the dev metrics.
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            epochs: 20,
            batch_size: 1,
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            adam_eps: adam.eps,
            rng_seed: 7,
            early_stop_patience: 5,
            dev_fraction: 0.2,
            shuffle: true,
            focal: FocalConfig::default(),
            threshold: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.into()));
        if self.epochs == 0 || self.batch_size == 0 || self.early_stop_patience == 0 {
            return fail("epochs, batch_size and early_stop_patience must be positive");
        }
        if !(self.dev_fraction > 0.0 && self.dev_fraction < 1.0) {
            return fail("dev_fraction must lie in (0, 1)");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be finite and nonnegative");
        }
        if !((0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.adam_eps > 0.0)
        {
            return fail("adam betas must lie in [0, 1) and eps must be positive");
        }
        self.focal.validate()
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_balanced_accuracy: f64,
    pub dev_f1: f64,
}

/// Document indices on each side of the train/dev split.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub dev: Vec<usize>,
}

/// Shuffles document indices and carves off `round(n · dev_fraction)` of them,
/// keeping at least one document on each side.
pub fn split_documents(n: usize, dev_fraction: f64, rng: &mut ChaCha8Rng) -> Result<Split> {
    if n < 2 {
        return Err(Error::Training(format!(
            "need at least 2 documents to split, got {n}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let dev_n = ((n as f64 * dev_fraction).round() as usize).clamp(1, n - 1);
    let mut dev = idx.split_off(n - dev_n);
    let mut train = idx;
    train.sort_unstable();
    dev.sort_unstable();
    Ok(Split { train, dev })
}

fn class_counts(pairs: &[Vec<BlankPair>], docs: &[usize]) -> (usize, usize) {
    docs.iter()
        .flat_map(|&d| &pairs[d])
        .fold((0, 0), |(p, n), bp| {
            if bp.label == 1 {
                (p + 1, n)
            } else {
                (p, n + 1)
            }
        })
}

/// Raw predictions for both orderings of every labeled pair of `doc`.
fn document_predictions(
    tape: &mut Tape,
    model: &PbrModel,
    doc: &ContractDocument,
    pairs: &[BlankPair],
    dropout: &mut Dropout,
) -> Result<(Vec<Var>, Vec<u8>)> {
    if pairs.is_empty() {
        return Ok((Vec::new(), Vec::new()));
    }
    let blanks = model.encode_blanks(tape, doc, dropout)?;
    let mut preds = Vec::with_capacity(2 * pairs.len());
    let mut labels = Vec::with_capacity(2 * pairs.len());
    for p in pairs {
        for (x, y) in [(p.a, p.b), (p.b, p.a)] {
            preds.push(
                model
                    .head
                    .predict(tape, &model.store, blanks[x], blanks[y])?,
            );
            labels.push(p.label);
        }
    }
    Ok((preds, labels))
}

/// Model plus optimizer state; one `step` per batch of documents.
pub struct Trainer {
    pub model: PbrModel,
    pub adam: Adam,
    pub focal: FocalConfig,
    rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(model: PbrModel, cfg: &TrainConfig, rng: ChaCha8Rng) -> Self {
        Self {
            adam: Adam::new(cfg.adam(), &model.store),
            focal: cfg.focal,
            model,
            rng,
        }
    }

    fn batch_objective(
        model: &PbrModel,
        focal: FocalConfig,
        tape: &mut Tape,
        batch: &[(&ContractDocument, &[BlankPair])],
        dropout: &mut Dropout,
    ) -> Result<Option<Var>> {
        let mut preds = Vec::new();
        let mut labels = Vec::new();
        for (doc, pairs) in batch {
            let (p, l) = document_predictions(tape, model, doc, pairs, dropout)?;
            preds.extend(p);
            labels.extend(l);
        }
        if preds.is_empty() {
            return Ok(None);
        }
        let row = tape.concat_cols(&preds)?;
        let losses = focal_loss_var(tape, row, &labels, focal)?;
        Ok(Some(tape.mean_all(losses)?))
    }

    /// Mean focal loss of the batch with dropout disabled.
    pub fn batch_loss(&self, batch: &[(&ContractDocument, &[BlankPair])]) -> Result<f64> {
        let mut tape = Tape::new();
        let loss = Self::batch_objective(
            &self.model,
            self.focal,
            &mut tape,
            batch,
            &mut Dropout::eval(),
        )?;
        Ok(loss.map(|l| tape.scalar(l)).unwrap_or(0.0))
    }

    /// One optimizer update; returns the (dropout-perturbed) batch loss.
    pub fn step(&mut self, batch: &[(&ContractDocument, &[BlankPair])]) -> Result<f64> {
        let rate = self.model.config.encoder.dropout_rate;
        let mut tape = Tape::new();
        let mut dropout = Dropout::train(rate, &mut self.rng);
        let Some(loss) =
            Self::batch_objective(&self.model, self.focal, &mut tape, batch, &mut dropout)?
        else {
            return Ok(0.0);
        };
        let value = tape.scalar(loss);
        if !value.is_finite() {
            return Err(Error::NonFinite("training loss"));
        }
        self.model.store.zero_grad();
        tape.backward(loss)?.accumulate_into(&mut self.model.store);
        self.adam.step(&mut self.model.store);
        Ok(value)
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best dev balanced accuracy.
    pub model: PbrModel,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub dev_metrics: Metrics,
    pub split: Split,
}

pub fn train(
    docs: &[ContractDocument],
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with(docs, model_cfg, cfg, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with(
    docs: &[ContractDocument],
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    model_cfg.encoder.validate()?;
    let pairs = docs
        .iter()
        .map(generate_pairs)
        .collect::<Result<Vec<_>>>()?;
    let all: Vec<usize> = (0..docs.len()).collect();
    let (pos, neg) = class_counts(&pairs, &all);
    if pos == 0 || neg == 0 {
        return Err(Error::Training(format!(
            "corpus must contain both pair classes, found {pos} positive and {neg} negative"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let split = split_documents(docs.len(), cfg.dev_fraction, &mut rng)?;
    let (dev_pos, dev_neg) = class_counts(&pairs, &split.dev);
    if dev_pos == 0 || dev_neg == 0 {
        return Err(Error::Training(format!(
            "dev split has {dev_pos} positive and {dev_neg} negative pairs; both classes are needed"
        )));
    }
    let train_docs: Vec<ContractDocument> = split.train.iter().map(|&i| docs[i].clone()).collect();
    let dev_docs: Vec<ContractDocument> = split.dev.iter().map(|&i| docs[i].clone()).collect();
    let vocab = Vocabulary::from_documents(&train_docs);
    let model = PbrModel::init(model_cfg.clone(), vocab, &mut rng)?;
    let dropout_rng = ChaCha8Rng::seed_from_u64(rng.gen());
    let mut trainer = Trainer::new(model, cfg, dropout_rng);

    let mut order = split.train.clone();
    let mut log = Vec::new();
    let mut best: Option<(PbrModel, usize, Metrics)> = None;
    let mut since_best = 0;
    for epoch in 1..=cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let mut total = 0.0;
        let mut steps = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(&ContractDocument, &[BlankPair])> = chunk
                .iter()
                .map(|&i| (&docs[i], pairs[i].as_slice()))
                .collect();
            total += trainer.step(&batch)?;
            steps += 1;
        }
        let dev = evaluate(&trainer.model, &dev_docs, cfg.threshold)?;
        let entry = EpochLog {
            epoch,
            train_loss: total / steps.max(1) as f64,
            dev_balanced_accuracy: dev.balanced_accuracy,
            dev_f1: dev.f1,
        };
        on_epoch(&entry);
        log.push(entry);
        let improved = best.as_ref().map_or(true, |(_, _, m)| {
            dev.balanced_accuracy > m.balanced_accuracy
        });
        if improved {
            best = Some((trainer.model.clone(), epoch, dev));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.early_stop_patience {
                break;
            }
        }
    }
    let (model, best_epoch, dev_metrics) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        model,
        log,
        best_epoch,
        dev_metrics,
        split,
    })
}

/// Symmetric scores and labels of every labeled pair in `docs`.
pub fn score_documents(model: &PbrModel, docs: &[ContractDocument]) -> Result<Vec<(f64, u8)>> {
    let mut out = Vec::new();
    for doc in docs {
        let pairs = generate_pairs(doc)?;
        let idx: Vec<(usize, usize)> = pairs.iter().map(|p| (p.a, p.b)).collect();
        let scores = model.score_pairs(doc, &idx)?;
        out.extend(scores.into_iter().zip(pairs.iter().map(|p| p.label)));
    }
    Ok(out)
}

pub fn evaluate(model: &PbrModel, docs: &[ContractDocument], tau: f64) -> Result<Metrics> {
    Metrics::from_scores(&score_documents(model, docs)?, tau)
}
