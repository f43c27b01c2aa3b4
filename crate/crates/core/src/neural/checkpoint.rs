//! Binary checkpoint: magic, little-endian u32 version, u64 header length,
//! a JSON header (config, dtype, tensor names and shapes, free-form
//! metadata) and the flat tensor data in header order.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Model, ModelConfig, NeuralError, Params, Real, Tensor};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"RVFXCKPT";

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: [usize; 2],
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    dtype: String,
    config: ModelConfig,
    tensors: Vec<TensorEntry>,
    #[serde(default)]
    meta: Value,
}

fn err(e: impl std::fmt::Display) -> NeuralError {
    NeuralError::Checkpoint(e.to_string())
}

pub fn write_checkpoint<T: Real, W: Write>(mut w: W, model: &Model<T>, meta: &Value) -> Result<(), NeuralError> {
    let double = std::mem::size_of::<T>() == 8;
    let header = Header {
        version: CHECKPOINT_VERSION,
        dtype: if double { "f64" } else { "f32" }.into(),
        config: model.config.clone(),
        tensors: model
            .params
            .tensors()
            .iter()
            .map(|(n, t)| TensorEntry {
                name: n.to_string(),
                shape: [t.rows, t.cols],
            })
            .collect(),
        meta: meta.clone(),
    };
    let json = serde_json::to_vec(&header).map_err(err)?;
    w.write_all(MAGIC).map_err(err)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes()).map_err(err)?;
    w.write_all(&(json.len() as u64).to_le_bytes()).map_err(err)?;
    w.write_all(&json).map_err(err)?;
    let mut buf = Vec::new();
    for (_, t) in model.params.tensors() {
        buf.clear();
        for &x in &t.data {
            if double {
                buf.extend_from_slice(&x.as_f64().to_le_bytes());
            } else {
                buf.extend_from_slice(&(x.as_f64() as f32).to_le_bytes());
            }
        }
        w.write_all(&buf).map_err(err)?;
    }
    Ok(())
}

pub fn read_checkpoint<T: Real, R: Read>(mut r: R) -> Result<(Model<T>, Value), NeuralError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(err)?;
    if &magic != MAGIC {
        return Err(err("not a checkpoint file"));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4).map_err(err)?;
    let version = u32::from_le_bytes(b4);
    if version != CHECKPOINT_VERSION {
        return Err(err(format!("unsupported checkpoint version {version}")));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8).map_err(err)?;
    let len = u64::from_le_bytes(b8) as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json).map_err(err)?;
    let header: Header = serde_json::from_slice(&json).map_err(err)?;
    let width = match header.dtype.as_str() {
        "f32" => 4,
        "f64" => 8,
        other => return Err(err(format!("unknown dtype {other}"))),
    };
    let mut params = Params::<T>::zeros(&header.config);
    {
        let mut tensors = params.tensors_mut();
        if tensors.len() != header.tensors.len() {
            return Err(err("tensor list does not match config"));
        }
        for ((name, t), entry) in tensors.iter_mut().zip(&header.tensors) {
            if *name != entry.name || [t.rows, t.cols] != entry.shape {
                return Err(err(format!("unexpected tensor {} {:?}", entry.name, entry.shape)));
            }
            let mut raw = vec![0u8; t.len() * width];
            r.read_exact(&mut raw).map_err(err)?;
            read_values(&raw, width, t);
        }
    }
    if !params.all_finite() {
        return Err(err("non-finite parameter values"));
    }
    let model = Model::from_parts(header.config, params)?;
    Ok((model, header.meta))
}

fn read_values<T: Real>(raw: &[u8], width: usize, t: &mut Tensor<T>) {
    for (x, chunk) in t.data.iter_mut().zip(raw.chunks_exact(width)) {
        *x = if width == 8 {
            T::of(f64::from_le_bytes(chunk.try_into().unwrap()))
        } else {
            T::of(f32::from_le_bytes(chunk.try_into().unwrap()) as f64)
        };
    }
}

/// Write to a sibling temp file and rename into place.
pub fn save_checkpoint<T: Real>(path: &Path, model: &Model<T>, meta: &Value) -> Result<(), NeuralError> {
    let tmp = path.with_extension("tmp");
    {
        let f = fs::File::create(&tmp).map_err(err)?;
        let mut w = std::io::BufWriter::new(f);
        write_checkpoint(&mut w, model, meta)?;
        w.flush().map_err(err)?;
    }
    fs::rename(&tmp, path).map_err(err)
}

pub fn load_checkpoint<T: Real>(path: &Path) -> Result<(Model<T>, Value), NeuralError> {
    let f = fs::File::open(path).map_err(err)?;
    read_checkpoint(std::io::BufReader::new(f))
}
