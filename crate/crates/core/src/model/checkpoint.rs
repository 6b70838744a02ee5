//! Binary checkpoint format, little-endian throughout:
//!
//! ```text
//! magic    "STYLENET"
//! version  u32
//! header   u32 length + JSON (config, genres, epoch, rng, Adam coefficients
//!          and step counts, loss history)
//! tensors  u32 count, then per tensor: u32 name length, name bytes,
//!          u32 rank, rank × u64 dims, f64 values
//! crc32    u32 over every preceding byte
//! ```
//!
//! Parameters are stored under their [`ParamSet`] names, Adam moments under
//! `adam.m.<name>` and `adam.v.<name>`.

use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Checkpoint, LossRecord, ModelError, StyleNetParams, TrainConfig};
use crate::corpus::GenreLabel;
use crate::nn::{AdamSlot, AdamState, ParamSet, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"STYLENET";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: TrainConfig,
    genres: Vec<GenreLabel>,
    epoch: usize,
    rng: ChaCha8Rng,
    adam_beta1: f64,
    adam_beta2: f64,
    adam_epsilon: f64,
    adam_steps: Vec<u64>,
    history: Vec<LossRecord>,
}

fn corrupt(msg: impl Into<String>) -> ModelError {
    ModelError::Checkpoint(msg.into())
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_tensor(out: &mut Vec<u8>, name: &str, t: &Tensor) {
    put_u32(out, name.len() as u32);
    out.extend_from_slice(name.as_bytes());
    put_u32(out, t.shape().len() as u32);
    for &d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Result<Vec<u8>, ModelError> {
    let header = Header {
        config: ck.config.clone(),
        genres: ck.params.genres(),
        epoch: ck.epoch,
        rng: ck.rng.clone(),
        adam_beta1: ck.adam.beta1,
        adam_beta2: ck.adam.beta2,
        adam_epsilon: ck.adam.epsilon,
        adam_steps: ck.adam.slots.iter().map(|s| s.step).collect(),
        history: ck.history.clone(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| corrupt(e.to_string()))?;
    let names = ck.params.names();
    let tensors = ck.params.tensors();
    if ck.adam.slots.len() != tensors.len() {
        return Err(corrupt("adam state does not match parameters"));
    }

    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    put_u32(&mut out, CHECKPOINT_VERSION);
    put_u32(&mut out, json.len() as u32);
    out.extend_from_slice(&json);
    put_u32(&mut out, 3 * tensors.len() as u32);
    for (name, t) in names.iter().zip(&tensors) {
        put_tensor(&mut out, name, t);
    }
    for (name, slot) in names.iter().zip(&ck.adam.slots) {
        put_tensor(&mut out, &format!("adam.m.{name}"), &slot.m);
    }
    for (name, slot) in names.iter().zip(&ck.adam.slots) {
        put_tensor(&mut out, &format!("adam.v.{name}"), &slot.v);
    }
    let crc = crc32fast::hash(&out);
    put_u32(&mut out, crc);
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| corrupt("truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn tensor(&mut self) -> Result<(String, Tensor), ModelError> {
        let name_len = self.u32()? as usize;
        let name = String::from_utf8(self.take(name_len)?.to_vec()).map_err(|_| corrupt("tensor name"))?;
        let rank = self.u32()? as usize;
        let dims = (0..rank).map(|_| self.u64().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let n = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| corrupt("tensor size"))?;
        let raw = self.take(n.checked_mul(8).ok_or_else(|| corrupt("tensor size"))?)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok((name, Tensor::from_vec(&dims, data).map_err(|e| corrupt(e.to_string()))?))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint, ModelError> {
    if bytes.len() < CHECKPOINT_MAGIC.len() + 8 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(corrupt("not a checkpoint file"));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let mut r = Reader { bytes: body, pos: 8 };
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(ModelError::CheckpointVersion { found: version, expected: CHECKPOINT_VERSION });
    }
    if crc32fast::hash(body) != stored {
        return Err(corrupt("checksum mismatch"));
    }
    let header_len = r.u32()? as usize;
    let header: Header = serde_json::from_slice(r.take(header_len)?).map_err(|e| corrupt(e.to_string()))?;
    header.config.validate()?;

    let mut params = StyleNetParams::zeros(&header.config.dims(), &header.genres);
    let names = params.names();
    let count = r.u32()? as usize;
    if count != 3 * names.len() || header.adam_steps.len() != names.len() {
        return Err(corrupt(format!("expected {} tensors, found {count}", 3 * names.len())));
    }
    let read_into = |r: &mut Reader, expected_name: &str, dest: &mut Tensor| -> Result<(), ModelError> {
        let (name, t) = r.tensor()?;
        if name != expected_name || t.shape() != dest.shape() {
            return Err(corrupt(format!("expected {expected_name} {:?}, found {name} {:?}", dest.shape(), t.shape())));
        }
        *dest = t;
        Ok(())
    };
    for (name, dest) in names.iter().zip(params.tensors_mut()) {
        read_into(&mut r, name, dest)?;
    }
    let mut slots: Vec<AdamSlot> = params.tensors().iter().map(|t| AdamSlot::new(t.shape())).collect();
    for (name, slot) in names.iter().zip(slots.iter_mut()) {
        read_into(&mut r, &format!("adam.m.{name}"), &mut slot.m)?;
    }
    for ((name, slot), step) in names.iter().zip(slots.iter_mut()).zip(&header.adam_steps) {
        read_into(&mut r, &format!("adam.v.{name}"), &mut slot.v)?;
        slot.step = *step;
    }
    if r.pos != body.len() {
        return Err(corrupt("trailing bytes"));
    }
    let adam = AdamState { beta1: header.adam_beta1, beta2: header.adam_beta2, epsilon: header.adam_epsilon, slots };
    Ok(Checkpoint { config: header.config, params, adam, epoch: header.epoch, rng: header.rng, history: header.history })
}

pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<(), ModelError> {
    let bytes = encode_checkpoint(ck)?;
    std::fs::write(path, bytes).map_err(|source| ModelError::Io { path: path.into(), source })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, ModelError> {
    let bytes = std::fs::read(path).map_err(|source| ModelError::Io { path: path.into(), source })?;
    decode_checkpoint(&bytes)
}
