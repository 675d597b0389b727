//! Binary checkpoint: the magic `PBRCKPT1`, then records of
//! `name_len: u32 | name | rank: u32 | dims: u32 × rank | payload: f64 × ∏dims`,
//! all little-endian.
//!
//! Parameters come first in store order. Two `meta/` records carry the model
//! configuration, and one rank-0 `vocab/<token>` record per vocabulary entry
//! holds that token's id.

use std::io::{Read, Write};

use super::model::{ModelConfig, PbrModel};
use crate::blankcoder::EncoderConfig;
use crate::embedding::Vocabulary;
use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Tensor};
use crate::pbr_head::HeadConfig;

pub const MAGIC: &[u8; 8] = b"PBRCKPT1";
const META_ENCODER: &str = "meta/encoder";
const META_HEAD: &str = "meta/head";
const VOCAB_PREFIX: &str = "vocab/";

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub name: String,
    pub tensor: Tensor,
}

fn u32_of(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Checkpoint(format!("{what} {v} does not fit in u32")))
}

pub fn write_records<W: Write>(mut w: W, records: &[Record]) -> Result<()> {
    w.write_all(MAGIC)?;
    for r in records {
        w.write_all(&u32_of(r.name.len(), "name length")?.to_le_bytes())?;
        w.write_all(r.name.as_bytes())?;
        let shape = r.tensor.shape();
        w.write_all(&u32_of(shape.len(), "rank")?.to_le_bytes())?;
        for &d in shape {
            w.write_all(&u32_of(d, "dimension")?.to_le_bytes())?;
        }
        for v in r.tensor.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_exact_or_eof<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<bool> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..])? {
            0 if filled == 0 => return Ok(false),
            0 => return Err(Error::Checkpoint("truncated record".into())),
            n => filled += n,
        }
    }
    Ok(true)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    if !read_exact_or_eof(r, &mut b)? {
        return Err(Error::Checkpoint("truncated record".into()));
    }
    Ok(u32::from_le_bytes(b))
}

pub fn read_records<R: Read>(mut r: R) -> Result<Vec<Record>> {
    let mut magic = [0u8; 8];
    if !read_exact_or_eof(&mut r, &mut magic)? || &magic != MAGIC {
        return Err(Error::Checkpoint("missing PBRCKPT1 header".into()));
    }
    let mut records = Vec::new();
    loop {
        let mut len = [0u8; 4];
        if !read_exact_or_eof(&mut r, &mut len)? {
            break;
        }
        let mut name = vec![0u8; u32::from_le_bytes(len) as usize];
        if !read_exact_or_eof(&mut r, &mut name)? && !name.is_empty() {
            return Err(Error::Checkpoint("truncated record name".into()));
        }
        let name = String::from_utf8(name)
            .map_err(|_| Error::Checkpoint("record name is not UTF-8".into()))?;
        let rank = read_u32(&mut r)? as usize;
        let shape = (0..rank)
            .map(|_| read_u32(&mut r).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let count: usize = shape.iter().product();
        let mut bytes = vec![0u8; count * 8];
        if !read_exact_or_eof(&mut r, &mut bytes)? && count > 0 {
            return Err(Error::Checkpoint(format!("truncated payload of `{name}`")));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        records.push(Record {
            tensor: Tensor::new(shape, data)?,
            name,
        });
    }
    Ok(records)
}

fn encoder_meta(cfg: &EncoderConfig) -> Tensor {
    Tensor::vector(vec![
        cfg.d as f64,
        cfg.heads as f64,
        cfg.layers as f64,
        cfg.d_ff as f64,
        cfg.k as f64,
        cfg.blocks as f64,
        cfg.d_w as f64,
        cfg.dropout_rate,
    ])
}

fn as_count(v: f64) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(Error::Checkpoint(format!("expected a count, found {v}")))
    }
}

fn encoder_from_meta(t: &Tensor) -> Result<EncoderConfig> {
    let v = t.data();
    if v.len() != 8 {
        return Err(Error::Checkpoint(format!(
            "{META_ENCODER} has {} entries, expected 8",
            v.len()
        )));
    }
    Ok(EncoderConfig {
        d: as_count(v[0])?,
        heads: as_count(v[1])?,
        layers: as_count(v[2])?,
        d_ff: as_count(v[3])?,
        k: as_count(v[4])?,
        blocks: as_count(v[5])?,
        d_w: as_count(v[6])?,
        dropout_rate: v[7],
    })
}

pub fn model_records(model: &PbrModel) -> Vec<Record> {
    let mut records: Vec<Record> = model
        .store
        .ids()
        .map(|id| Record {
            name: model.store.name(id).to_string(),
            tensor: model.store.value(id).clone(),
        })
        .collect();
    records.push(Record {
        name: META_ENCODER.into(),
        tensor: encoder_meta(&model.config.encoder),
    });
    records.push(Record {
        name: META_HEAD.into(),
        tensor: Tensor::vector(vec![model.config.head.comparative as u8 as f64]),
    });
    for (id, token) in model.vocab.tokens().iter().enumerate() {
        records.push(Record {
            name: format!("{VOCAB_PREFIX}{token}"),
            tensor: Tensor::scalar(id as f64),
        });
    }
    records
}

pub fn model_from_records(records: Vec<Record>) -> Result<PbrModel> {
    let mut store = ParamStore::new();
    let mut encoder = None;
    let mut head = None;
    let mut vocab: Vec<(usize, String)> = Vec::new();
    for r in records {
        if r.name == META_ENCODER {
            encoder = Some(encoder_from_meta(&r.tensor)?);
        } else if r.name == META_HEAD {
            let comparative = match r.tensor.data() {
                [v] if *v == 0.0 || *v == 1.0 => *v == 1.0,
                other => {
                    return Err(Error::Checkpoint(format!(
                        "bad {META_HEAD} record {other:?}"
                    )))
                }
            };
            head = Some(HeadConfig { comparative });
        } else if let Some(token) = r.name.strip_prefix(VOCAB_PREFIX) {
            let [id] = r.tensor.data() else {
                return Err(Error::Checkpoint(format!(
                    "vocabulary record `{token}` is not a scalar"
                )));
            };
            vocab.push((as_count(*id)?, token.to_string()));
        } else {
            store
                .insert(r.name.clone(), r.tensor)
                .map_err(|_| Error::Checkpoint(format!("duplicate record `{}`", r.name)))?;
        }
    }
    let encoder = encoder.ok_or_else(|| Error::Checkpoint(format!("missing {META_ENCODER}")))?;
    let head = head.ok_or_else(|| Error::Checkpoint(format!("missing {META_HEAD}")))?;
    vocab.sort();
    if vocab.iter().enumerate().any(|(i, (id, _))| *id != i) {
        return Err(Error::Checkpoint("vocabulary ids are not dense".into()));
    }
    let tokens: Vec<String> = vocab.into_iter().map(|(_, t)| t).collect();
    let rebuilt = Vocabulary::from_tokens(tokens.iter().skip(2).cloned());
    if rebuilt.tokens() != tokens.as_slice() {
        return Err(Error::Checkpoint(
            "vocabulary does not start with the special tokens".into(),
        ));
    }
    PbrModel::from_parts(ModelConfig { encoder, head }, rebuilt, store)
}

pub fn save_model<W: Write>(w: W, model: &PbrModel) -> Result<()> {
    write_records(w, &model_records(model))
}

pub fn load_model<R: Read>(r: R) -> Result<PbrModel> {
    model_from_records(read_records(r)?)
}
