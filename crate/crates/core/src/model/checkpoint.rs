//! `DPMCKPT1` checkpoints: magic line, one-line JSON header, then a
//! little-endian f32 blob holding the parameters followed by the two Adam
//! moment vectors.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdamState, Architecture, Model, ModelError, PolicyModel};

const MAGIC: &[u8] = b"DPMCKPT1\n";

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Byte offset into the blob.
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    arch: Architecture,
    tensors: Vec<TensorEntry>,
    param_count: usize,
    adam_m_offset: usize,
    adam_v_offset: usize,
    blob_len: usize,
    step: u64,
    seed: u64,
}

pub fn write_checkpoint<W: Write>(model: &PolicyModel, mut out: W) -> Result<(), ModelError> {
    let n = model.params.len();
    let mut tensors = Vec::new();
    for slot in model.plan.slots.iter().flatten() {
        tensors.push(TensorEntry {
            name: format!("layer{}.weight", slot.layer),
            shape: slot.weight_shape.clone(),
            offset: slot.weight_offset * 4,
        });
        tensors.push(TensorEntry {
            name: format!("layer{}.bias", slot.layer),
            shape: vec![slot.bias_len],
            offset: slot.bias_offset * 4,
        });
    }
    let header = Header {
        arch: model.arch.clone(),
        tensors,
        param_count: n,
        adam_m_offset: n * 4,
        adam_v_offset: 2 * n * 4,
        blob_len: 3 * n * 4,
        step: model.adam.step,
        seed: model.seed,
    };
    out.write_all(MAGIC)?;
    serde_json::to_writer(&mut out, &header).map_err(|e| ModelError::BadHeader(e.to_string()))?;
    out.write_all(b"\n")?;
    let mut blob = Vec::with_capacity(header.blob_len);
    for v in model.params.iter().chain(&model.adam.m).chain(&model.adam.v) {
        blob.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&blob)?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<PolicyModel, ModelError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if !bytes.starts_with(MAGIC) {
        return Err(ModelError::BadMagic);
    }
    let rest = &bytes[MAGIC.len()..];
    let newline = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or(ModelError::TruncatedFile)?;
    let header: Header = serde_json::from_slice(&rest[..newline])
        .map_err(|e| ModelError::BadHeader(e.to_string()))?;
    let plan = header.arch.plan()?;
    let n = plan.param_count;
    let mismatch = |msg: String| Err(ModelError::ShapeMismatch(msg));
    if header.param_count != n {
        return mismatch(format!(
            "header declares {} parameters, architecture has {n}",
            header.param_count
        ));
    }
    if header.blob_len != 3 * n * 4 || header.adam_m_offset != n * 4 || header.adam_v_offset != 2 * n * 4 {
        return mismatch("blob layout disagrees with parameter count".into());
    }
    let expected: Vec<(usize, &[usize])> = plan
        .slots
        .iter()
        .flatten()
        .flat_map(|s| {
            [
                (s.weight_offset * 4, s.weight_shape.as_slice()),
                (s.bias_offset * 4, std::slice::from_ref(&s.bias_len)),
            ]
        })
        .collect();
    if expected.len() != header.tensors.len()
        || expected
            .iter()
            .zip(&header.tensors)
            .any(|((off, shape), t)| *off != t.offset || *shape != t.shape.as_slice())
    {
        return mismatch("tensor table disagrees with architecture".into());
    }
    let blob = &rest[newline + 1..];
    if blob.len() < header.blob_len {
        return Err(ModelError::TruncatedFile);
    }
    if blob.len() > header.blob_len {
        return mismatch(format!(
            "blob has {} bytes, header declares {}",
            blob.len(),
            header.blob_len
        ));
    }
    let floats: Vec<f32> = blob
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(Model {
        arch: header.arch,
        plan,
        params: floats[..n].to_vec(),
        adam: AdamState {
            m: floats[n..2 * n].to_vec(),
            v: floats[2 * n..].to_vec(),
            step: header.step,
        },
        seed: header.seed,
    })
}

pub fn save_checkpoint(model: &PolicyModel, path: &Path) -> Result<(), ModelError> {
    let mut out = BufWriter::new(File::create(path)?);
    write_checkpoint(model, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<PolicyModel, ModelError> {
    read_checkpoint(File::open(path)?)
}
