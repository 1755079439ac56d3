//! Layout: magic, header length (u64 LE), JSON header, SHA-256 of the header,
//! then little-endian f32 tensors in header order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{AdamState, TrainState};
use crate::data::VocabSpec;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, SancdModel};
use crate::nn::{nest, zeros_like, ParamView, Parameters};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"IMKCKPT1";
pub const FORMAT_VERSION: u32 = 1;
const DTYPE: &str = "f32";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    dtype: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: ModelConfig,
    vocab: VocabSpec,
    vocab_hash: String,
    train_state: Option<TrainState>,
    adam_step: Option<u64>,
    tensors: Vec<TensorEntry>,
    payload_sha256: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: SancdModel<f32>,
    pub state: Option<TrainState>,
}

fn all_views<'a>(model: &'a SancdModel<f32>, state: Option<&'a TrainState>) -> Vec<ParamView<'a, f32>> {
    let mut views = model.tensors();
    if let Some(adam) = state.and_then(|s| s.adam.as_ref()) {
        views.extend(nest("adam.m.semantic", adam.m.tensors()));
        views.extend(nest("adam.v.semantic", adam.v.tensors()));
    }
    views
}

pub fn encode_checkpoint(model: &SancdModel<f32>, state: Option<&TrainState>) -> Result<Vec<u8>> {
    let views = all_views(model, state);
    let mut payload = Vec::with_capacity(4 * views.iter().map(|v| v.data.len()).sum::<usize>());
    for v in &views {
        for x in v.data {
            payload.extend_from_slice(&x.to_le_bytes());
        }
    }
    let header = Header {
        format_version: FORMAT_VERSION,
        config: model.config.clone(),
        vocab: model.vocab.clone(),
        vocab_hash: model.vocab.hash(),
        train_state: state.cloned(),
        adam_step: state.and_then(|s| s.adam.as_ref()).map(|a| a.step),
        tensors: views
            .iter()
            .map(|v| TensorEntry {
                name: v.name.clone(),
                shape: v.shape.clone(),
                dtype: DTYPE.into(),
            })
            .collect(),
        payload_sha256: hex::encode(Sha256::digest(&payload)),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Integrity(format!("header encoding: {e}")))?;
    let mut out = Vec::with_capacity(8 + 8 + json.len() + 32 + payload.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&Sha256::digest(&json));
    out.extend_from_slice(&payload);
    Ok(out)
}

fn integrity(msg: impl Into<String>) -> Error {
    Error::Integrity(msg.into())
}

fn fill(dst: Vec<&mut [f32]>, entries: &[TensorEntry], expected: &[ParamView<'_, f32>], payload: &mut &[u8]) -> Result<()> {
    for ((d, e), x) in dst.into_iter().zip(entries).zip(expected) {
        if e.name != x.name || e.shape != x.shape || e.dtype != DTYPE {
            return Err(integrity(format!("tensor {} does not match the model layout (expected {})", e.name, x.name)));
        }
        let (bytes, rest) = payload.split_at(4 * d.len());
        for (v, b) in d.iter_mut().zip(bytes.chunks_exact(4)) {
            *v = f32::from_le_bytes(b.try_into().expect("4 bytes"));
        }
        *payload = rest;
    }
    Ok(())
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(integrity("not a checkpoint file (bad magic)"));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let header_end = 16usize
        .checked_add(header_len)
        .filter(|&e| e + 32 <= bytes.len())
        .ok_or_else(|| integrity("truncated header"))?;
    let json = &bytes[16..header_end];
    if Sha256::digest(json).as_slice() != &bytes[header_end..header_end + 32] {
        return Err(integrity("header checksum mismatch"));
    }
    let header: Header = serde_json::from_slice(json).map_err(|e| integrity(format!("header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(integrity(format!(
            "format version {} is not supported (expected {FORMAT_VERSION})",
            header.format_version
        )));
    }
    if header.vocab.hash() != header.vocab_hash {
        return Err(integrity("vocabulary hash mismatch"));
    }
    let payload = &bytes[header_end + 32..];
    if hex::encode(Sha256::digest(payload)) != header.payload_sha256 {
        return Err(integrity("payload checksum mismatch (truncated or corrupt)"));
    }
    let numel: usize = header.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum();
    if numel * 4 != payload.len() {
        return Err(integrity("payload size disagrees with the tensor directory"));
    }

    let mut model = SancdModel::<f32>::zeros(header.config.clone(), header.vocab.clone())?;
    let n_model = model.tensors().len();
    let has_adam = header.adam_step.is_some();
    let expected_count = if has_adam { n_model + 2 * model.semantic.tensors().len() } else { n_model };
    if header.tensors.len() != expected_count {
        return Err(integrity("tensor directory has the wrong number of entries"));
    }
    let mut rest = payload;
    let template = model.clone();
    fill(model.tensors_mut(), &header.tensors[..n_model], &template.tensors(), &mut rest)?;

    let mut state = header.train_state;
    if let Some(step) = header.adam_step {
        let mut adam = AdamState {
            step,
            m: zeros_like(&model.semantic),
            v: zeros_like(&model.semantic),
        };
        let n_sem = model.semantic.tensors().len();
        let m_names = nest("adam.m.semantic", template.semantic.tensors());
        let v_names = nest("adam.v.semantic", template.semantic.tensors());
        fill(adam.m.tensors_mut(), &header.tensors[n_model..n_model + n_sem], &m_names, &mut rest)?;
        fill(adam.v.tensors_mut(), &header.tensors[n_model + n_sem..], &v_names, &mut rest)?;
        match state.as_mut() {
            Some(s) => s.adam = Some(adam),
            None => return Err(integrity("optimizer moments without a training state")),
        }
    }
    Ok(Checkpoint { model, state })
}

pub fn save_checkpoint(path: &Path, model: &SancdModel<f32>, state: Option<&TrainState>) -> Result<()> {
    let bytes = encode_checkpoint(model, state)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

/// Like [`load_checkpoint`] but rejects a checkpoint trained with another vocabulary.
pub fn load_checkpoint_with_vocab(path: &Path, vocab: &VocabSpec) -> Result<Checkpoint> {
    let ckpt = load_checkpoint(path)?;
    if ckpt.model.vocab.hash() != vocab.hash() {
        return Err(Error::Config(format!(
            "checkpoint vocabulary hash {} does not match {}",
            ckpt.model.vocab.hash(),
            vocab.hash()
        )));
    }
    Ok(ckpt)
}
