//! Binary model checkpoints.
//!
//! Layout (little-endian): magic `ASMD`, then u32 version, class_id, layers,
//! hidden_size and input_dim. The f64 body follows, for each layer the gate
//! matrix (row-major, `4 * hidden` rows of `layer_input + hidden` columns)
//! then the gate biases; then the head weights, head bias, and finally the
//! norm mean and std.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::net::params::{NormStats, SearchModelParams, Weights};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ASMD";
pub const CHECKPOINT_VERSION: u32 = 1;
const HEADER_LEN: usize = 24;

pub fn encode(params: &SearchModelParams) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * (params.weights.len() + 2));
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    for v in [
        CHECKPOINT_VERSION,
        params.class_id,
        params.layers as u32,
        params.hidden_size as u32,
        params.input_dim as u32,
    ] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for v in params.weights.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&params.norm.mean.to_le_bytes());
    buf.extend_from_slice(&params.norm.std.to_le_bytes());
    buf
}

pub fn decode(bytes: &[u8], origin: &Path) -> Result<SearchModelParams> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::format(origin, "missing ASMD header"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    if u32_at(4) != CHECKPOINT_VERSION {
        return Err(Error::format(origin, format!("unsupported version {}", u32_at(4))));
    }
    let class_id = u32_at(8);
    let layers = u32_at(12) as usize;
    let hidden_size = u32_at(16) as usize;
    let input_dim = u32_at(20) as usize;
    if layers == 0 || hidden_size == 0 || layers > 64 || hidden_size > 1 << 16 || input_dim > 1 << 20 {
        return Err(Error::format(origin, "implausible network shape"));
    }
    let mut weights = Weights::zeros(layers, hidden_size, input_dim);
    let body = &bytes[HEADER_LEN..];
    let expected = 8 * (weights.len() + 2);
    if body.len() != expected {
        return Err(Error::format(
            origin,
            format!("expected {expected} body bytes, found {}", body.len()),
        ));
    }
    let mut values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    for w in weights.iter_mut() {
        *w = values.next().unwrap();
    }
    let mean = values.next().unwrap();
    let std = values.next().unwrap();
    let params = SearchModelParams {
        class_id,
        layers,
        hidden_size,
        input_dim,
        weights,
        norm: NormStats::new(mean, std).map_err(|e| Error::format(origin, e.to_string()))?,
    };
    Ok(params)
}

pub fn save(path: &Path, params: &SearchModelParams) -> Result<()> {
    fs::write(path, encode(params)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<SearchModelParams> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}
