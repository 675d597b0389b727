//! Synthetic contract corpora with known blank identities.
//!
//! The generated vocabulary is split into *qualifier* words, *cue* words
//! grouped into categories, and filler words. A slot is a (category,
//! qualifier) pair. Around every blank of a slot the generator places one or
//! two cue words of its category inside the three words nearest the gap and
//! the slot's qualifier six or seven words to the left. Most of the time a
//! different qualifier sits between the blank and the true one, so the
//! nearest qualifier is usually the wrong one. Templates pick slots
//! so that some share a category and differ only by qualifier, and some
//! sentences hold two blanks, so the cues of one blank act as distractors for
//! the other. Same-slot blanks of a document share a fill; distinct slots
//! draw fills from disjoint pools.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Blank, ContractDocument};
use crate::error::{Error, Result};

const QUALIFIERS: usize = 4;
const CUES_PER_CATEGORY: usize = 3;
const MAX_USES_PER_SLOT: usize = 4;
const MAX_BLANKS_PER_DOC: usize = 48;
const FILLERS_PER_TEMPLATE: usize = 40;
const JOIN_PROBABILITY: f64 = 0.4;
const DISTRACTOR_PROBABILITY: f64 = 0.8;
const QUALIFIER_DISTANCE: std::ops::RangeInclusive<usize> = 6..=7;
const SHARED_CATEGORY_PROBABILITY: f64 = 0.8;
const RATIO_TOLERANCE: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub num_documents: usize,
    pub num_templates: usize,
    pub vocab_size: usize,
    /// Cue-word groups; each slot is one category paired with one qualifier.
    pub num_categories: usize,
    pub slots_per_template: usize,
    /// `x` in a target positive:negative pair ratio of `1:x`.
    pub target_pos_neg_ratio: f64,
    pub rng_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_documents: 200,
            num_templates: 20,
            vocab_size: 500,
            num_categories: 12,
            slots_per_template: 6,
            target_pos_neg_ratio: 10.0,
            rng_seed: 7,
        }
    }
}

/// Pair census the generator computes from its own templates.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SynthReport {
    pub documents: usize,
    pub blanks: usize,
    pub pairs: usize,
    pub positives: usize,
    pub negatives: usize,
}

impl SynthReport {
    /// `x` in the achieved `1:x` ratio.
    pub fn ratio(&self) -> f64 {
        self.negatives as f64 / self.positives.max(1) as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct SlotType {
    category: usize,
    qualifier: usize,
}

#[derive(Clone, Copy, Debug)]
enum Elem {
    Filler,
    Cue(usize),
    Qualifier(usize),
    Blank(usize),
}

struct Template {
    slots: Vec<SlotType>,
    sentences: Vec<Vec<Elem>>,
    fillers: Vec<usize>,
}

struct Lexicon {
    qualifiers: Vec<String>,
    cues: Vec<Vec<String>>,
    fillers: Vec<String>,
}

/// Pronounceable, distinct pseudo-word for an index.
fn pseudo_word(mut index: usize) -> String {
    const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
    const VOWELS: &[u8] = b"aeiou";
    let base = CONSONANTS.len() * VOWELS.len();
    let mut out = String::new();
    for _ in 0..2 {
        let syl = index % base;
        index /= base;
        out.push(CONSONANTS[syl / VOWELS.len()] as char);
        out.push(VOWELS[syl % VOWELS.len()] as char);
    }
    while index > 0 {
        let syl = (index - 1) % base;
        index = (index - 1) / base;
        out.push(CONSONANTS[syl / VOWELS.len()] as char);
        out.push(VOWELS[syl % VOWELS.len()] as char);
    }
    out
}

impl Lexicon {
    fn build(vocab_size: usize, categories: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let reserved = QUALIFIERS + categories * CUES_PER_CATEGORY;
        if vocab_size < reserved + 8 {
            return Err(Error::Config(format!(
                "vocab_size {vocab_size} too small; need at least {}",
                reserved + 8
            )));
        }
        let mut words: Vec<String> = (0..vocab_size).map(pseudo_word).collect();
        words.shuffle(rng);
        let mut it = words.into_iter();
        let qualifiers = it.by_ref().take(QUALIFIERS).collect();
        let cues = (0..categories)
            .map(|_| it.by_ref().take(CUES_PER_CATEGORY).collect())
            .collect();
        let fillers = it.collect();
        Ok(Self {
            qualifiers,
            cues,
            fillers,
        })
    }

    fn slot_name(&self, slot: SlotType) -> String {
        format!("c{}q{}", slot.category, slot.qualifier)
    }
}

fn choose2(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Per-slot use counts whose pair ratio is closest to `1:target`.
/// Returns `(counts, positives, negatives)`.
fn solve_use_counts(slots: usize, target: f64) -> Result<(Vec<usize>, usize, usize)> {
    let mut best: Option<(f64, usize, Vec<usize>, usize, usize)> = None;
    let mut counts = vec![0usize; MAX_USES_PER_SLOT];
    fn rec(
        level: usize,
        remaining: usize,
        counts: &mut Vec<usize>,
        target: f64,
        best: &mut Option<(f64, usize, Vec<usize>, usize, usize)>,
    ) {
        if level == counts.len() - 1 {
            counts[level] = remaining;
            let blanks: usize = counts.iter().enumerate().map(|(i, c)| (i + 1) * c).sum();
            let pos: usize = counts
                .iter()
                .enumerate()
                .map(|(i, c)| c * choose2(i + 1))
                .sum();
            let total = choose2(blanks);
            if pos == 0 || total <= pos || blanks > MAX_BLANKS_PER_DOC {
                return;
            }
            let neg = total - pos;
            let err = ((neg as f64 / pos as f64) / target).ln().abs();
            let better = match best {
                None => true,
                Some((e, b, ..)) => err < *e - 1e-12 || ((err - *e).abs() <= 1e-12 && blanks > *b),
            };
            if better {
                *best = Some((err, blanks, counts.clone(), pos, neg));
            }
            return;
        }
        for c in 0..=remaining {
            counts[level] = c;
            rec(level + 1, remaining - c, counts, target, best);
        }
    }
    rec(0, slots, &mut counts, target, &mut best);
    let Some((_, _, counts, pos, neg)) = best else {
        return Err(Error::Config(format!(
            "no arrangement of {slots} slots yields both positive and negative pairs"
        )));
    };
    let achieved = neg as f64 / pos as f64;
    if (achieved / target - 1.0).abs() > RATIO_TOLERANCE {
        return Err(Error::Config(format!(
            "target ratio 1:{target} is infeasible with {slots} slots per template (closest is 1:{achieved:.2})"
        )));
    }
    let uses = counts
        .iter()
        .enumerate()
        .flat_map(|(i, &c)| std::iter::repeat(i + 1).take(c))
        .collect();
    Ok((uses, pos, neg))
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("num_documents", self.num_documents),
            ("num_templates", self.num_templates),
            ("vocab_size", self.vocab_size),
            ("num_categories", self.num_categories),
            ("slots_per_template", self.slots_per_template),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.target_pos_neg_ratio >= 1.0) || !self.target_pos_neg_ratio.is_finite() {
            return Err(Error::Config(format!(
                "target_pos_neg_ratio must be a finite x >= 1 (ratio 1:x), got {}",
                self.target_pos_neg_ratio
            )));
        }
        Ok(())
    }
}

fn pick_slots(cfg: &SynthConfig, categories: usize, rng: &mut ChaCha8Rng) -> Result<Vec<SlotType>> {
    if categories * QUALIFIERS < cfg.slots_per_template {
        return Err(Error::Config(format!(
            "slots_per_template {} exceeds the {} distinct slots of {} categories",
            cfg.slots_per_template,
            categories * QUALIFIERS,
            categories
        )));
    }
    let mut slots: Vec<SlotType> = Vec::with_capacity(cfg.slots_per_template);
    while slots.len() < cfg.slots_per_template {
        let candidate = if !slots.is_empty() && rng.gen_bool(SHARED_CATEGORY_PROBABILITY) {
            let base = slots[rng.gen_range(0..slots.len())];
            SlotType {
                category: base.category,
                qualifier: rng.gen_range(0..QUALIFIERS),
            }
        } else {
            SlotType {
                category: rng.gen_range(0..categories),
                qualifier: rng.gen_range(0..QUALIFIERS),
            }
        };
        if !slots.contains(&candidate) {
            slots.push(candidate);
        }
    }
    Ok(slots)
}

fn other_qualifier(q: usize, rng: &mut ChaCha8Rng) -> usize {
    (q + rng.gen_range(1..QUALIFIERS)) % QUALIFIERS
}

/// Word layout around one blank occurrence.
fn segment(slot_idx: usize, slot: SlotType, rng: &mut ChaCha8Rng) -> Vec<Elem> {
    let fillers = |n: usize| std::iter::repeat(Elem::Filler).take(n);
    let (left_cue, right_cue) = match rng.gen_range(0..3) {
        0 => (true, false),
        1 => (false, true),
        _ => (true, true),
    };
    let near_left = rng.gen_range(0..=1usize);
    let near_right = rng.gen_range(0..=1usize);

    // Words left of the gap, indexed by distance - 1.
    let qualifier_distance = rng.gen_range(QUALIFIER_DISTANCE);
    let mut left = vec![Elem::Filler; qualifier_distance];
    left[qualifier_distance - 1] = Elem::Qualifier(slot.qualifier);
    let cue_distance = near_left + 1;
    if left_cue {
        left[cue_distance - 1] = Elem::Cue(slot.category);
    }
    if rng.gen_bool(DISTRACTOR_PROBABILITY) {
        let nearest = if left_cue { cue_distance + 1 } else { 1 };
        let d = rng.gen_range(nearest.max(3)..qualifier_distance);
        left[d - 1] = Elem::Qualifier(other_qualifier(slot.qualifier, rng));
    }

    let mut out: Vec<Elem> = fillers(rng.gen_range(0..=2)).collect();
    out.extend(left.into_iter().rev());
    out.push(Elem::Blank(slot_idx));
    out.extend(fillers(near_right));
    if right_cue {
        out.push(Elem::Cue(slot.category));
    }
    out.extend(fillers(rng.gen_range(1..=2usize)));
    out
}

fn build_template(
    cfg: &SynthConfig,
    lex: &Lexicon,
    uses: &[usize],
    rng: &mut ChaCha8Rng,
) -> Result<Template> {
    let slots = pick_slots(cfg, lex.cues.len(), rng)?;
    let mut uses = uses.to_vec();
    uses.shuffle(rng);
    let mut occurrences: Vec<usize> = uses
        .iter()
        .enumerate()
        .flat_map(|(slot, &u)| std::iter::repeat(slot).take(u))
        .collect();
    occurrences.shuffle(rng);

    let mut sentences = Vec::new();
    let mut i = 0;
    while i < occurrences.len() {
        let mut sentence = segment(occurrences[i], slots[occurrences[i]], rng);
        if i + 1 < occurrences.len() && rng.gen_bool(JOIN_PROBABILITY) {
            sentence.push(Elem::Filler);
            sentence.extend(segment(occurrences[i + 1], slots[occurrences[i + 1]], rng));
            i += 1;
        }
        sentences.push(sentence);
        i += 1;
    }
    let mut fillers: Vec<usize> = (0..lex.fillers.len()).collect();
    fillers.shuffle(rng);
    fillers.truncate(FILLERS_PER_TEMPLATE.min(lex.fillers.len()));
    Ok(Template {
        slots,
        sentences,
        fillers,
    })
}

fn instantiate(
    doc_id: String,
    template: &Template,
    lex: &Lexicon,
    rng: &mut ChaCha8Rng,
) -> ContractDocument {
    let fills: Vec<String> = template
        .slots
        .iter()
        .map(|s| {
            let pool = s.category * QUALIFIERS + s.qualifier;
            (100_000 + pool * 1_000 + rng.gen_range(1..1_000)).to_string()
        })
        .collect();
    let mut sentences = Vec::with_capacity(template.sentences.len());
    let mut blanks = Vec::new();
    for (sentence_idx, pattern) in template.sentences.iter().enumerate() {
        let mut words = Vec::with_capacity(pattern.len());
        for elem in pattern {
            match *elem {
                Elem::Filler => {
                    let w = template.fillers[rng.gen_range(0..template.fillers.len())];
                    words.push(lex.fillers[w].clone());
                }
                Elem::Cue(c) => {
                    let cues = &lex.cues[c];
                    words.push(cues[rng.gen_range(0..cues.len())].clone());
                }
                Elem::Qualifier(q) => words.push(lex.qualifiers[q].clone()),
                Elem::Blank(slot) => blanks.push(Blank {
                    blank_id: format!("b{}", blanks.len()),
                    sentence_idx,
                    gap_index: words.len(),
                    fill: Some(vec![fills[slot].clone()]),
                    slot: Some(lex.slot_name(template.slots[slot])),
                }),
            }
        }
        sentences.push(words);
    }
    ContractDocument {
        doc_id,
        sentences,
        blanks,
    }
}

/// Generates a corpus deterministically from `cfg.rng_seed`.
pub fn synth_generate(cfg: &SynthConfig) -> Result<(Vec<ContractDocument>, SynthReport)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let lex = Lexicon::build(cfg.vocab_size, cfg.num_categories, &mut rng)?;
    let (uses, pos, neg) = solve_use_counts(cfg.slots_per_template, cfg.target_pos_neg_ratio)?;
    let templates = (0..cfg.num_templates)
        .map(|_| build_template(cfg, &lex, &uses, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let docs: Vec<ContractDocument> = (0..cfg.num_documents)
        .map(|i| {
            instantiate(
                format!("synth-{i:05}"),
                &templates[i % templates.len()],
                &lex,
                &mut rng,
            )
        })
        .collect();
    let blanks_per_doc: usize = uses.iter().sum();
    let report = SynthReport {
        documents: docs.len(),
        blanks: docs.len() * blanks_per_doc,
        pairs: docs.len() * (pos + neg),
        positives: docs.len() * pos,
        negatives: docs.len() * neg,
    };
    Ok((docs, report))
}
