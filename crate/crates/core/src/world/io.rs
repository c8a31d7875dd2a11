//! On-disk formats for timelines and ground truth.
//!
//! Timeline binary layout (little-endian):
//!
//! | offset | type | field        |
//! |--------|------|--------------|
//! | 0      | [u8;4] | magic `FTLN` |
//! | 4      | u32  | version (1)  |
//! | 8      | u32  | num_frames   |
//! | 12     | u32  | feature_dim  |
//! | 16     | f64  | fps          |
//! | 24     | f32 × num_frames × feature_dim | row-major features |

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::video::{ActionInstance, FeatureTimeline};

pub const TIMELINE_MAGIC: &[u8; 4] = b"FTLN";
pub const TIMELINE_VERSION: u32 = 1;
const HEADER_LEN: usize = 24;

pub fn encode_timeline(tl: &FeatureTimeline) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + tl.features().len() * 4);
    buf.extend_from_slice(TIMELINE_MAGIC);
    buf.extend_from_slice(&TIMELINE_VERSION.to_le_bytes());
    buf.extend_from_slice(&(tl.num_frames() as u32).to_le_bytes());
    buf.extend_from_slice(&(tl.feature_dim() as u32).to_le_bytes());
    buf.extend_from_slice(&tl.fps().to_le_bytes());
    for v in tl.features() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn decode_timeline(video_id: &str, bytes: &[u8], origin: &Path) -> Result<FeatureTimeline> {
    if bytes.len() < HEADER_LEN || &bytes[0..4] != TIMELINE_MAGIC {
        return Err(Error::format(origin, "missing FTLN header"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != TIMELINE_VERSION {
        return Err(Error::format(origin, format!("unsupported version {version}")));
    }
    let num_frames = u32_at(8) as usize;
    let dim = u32_at(12) as usize;
    let fps = f64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let expected = num_frames
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::format(origin, "header sizes overflow"))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != expected {
        return Err(Error::format(
            origin,
            format!("expected {expected} feature bytes, found {}", body.len()),
        ));
    }
    let features = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    FeatureTimeline::new(video_id.to_string(), fps, dim, features)
        .map_err(|e| Error::format(origin, e.to_string()))
}

pub fn write_timeline(path: &Path, tl: &FeatureTimeline) -> Result<()> {
    fs::write(path, encode_timeline(tl)).map_err(|e| Error::io(path, e))
}

/// Reads a timeline; the video id is the file stem.
pub fn read_timeline(path: &Path) -> Result<FeatureTimeline> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::format(path, "no file stem"))?;
    decode_timeline(id, &bytes, path)
}

/// Ground-truth annotations of one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub video_id: String,
    pub duration: f64,
    pub instances: Vec<ActionInstance>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_bad_headers() {
        let p = Path::new("x.ftln");
        assert!(decode_timeline("x", b"NOPE", p).is_err());
        let tl = FeatureTimeline::new("x".into(), 4.0, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut bytes = encode_timeline(&tl);
        bytes.pop();
        assert!(decode_timeline("x", &bytes, p).is_err());
        let mut bytes = encode_timeline(&tl);
        bytes[4] = 9;
        assert!(decode_timeline("x", &bytes, p).is_err());
    }

    #[test]
    fn header_layout() {
        let tl = FeatureTimeline::new("x".into(), 2.5, 1, vec![0.5]).unwrap();
        let b = encode_timeline(&tl);
        assert_eq!(&b[0..4], b"FTLN");
        assert_eq!(b[4..8], 1u32.to_le_bytes());
        assert_eq!(b[8..12], 1u32.to_le_bytes());
        assert_eq!(b[16..24], 2.5f64.to_le_bytes());
        assert_eq!(b[24..28], 0.5f32.to_le_bytes());
        assert_eq!(b.len(), 28);
    }

    proptest! {
        #[test]
        fn timeline_roundtrip(
            dim in 1usize..5,
            rows in 1usize..20,
            fps in 0.5f64..60.0,
            seed in any::<u64>(),
        ) {
            let vals: Vec<f32> = (0..dim * rows)
                .map(|i| ((seed.wrapping_mul(i as u64 + 1) % 1000) as f32) / 7.0)
                .collect();
            let tl = FeatureTimeline::new("v".into(), fps, dim, vals).unwrap();
            let back = decode_timeline("v", &encode_timeline(&tl), Path::new("v")).unwrap();
            prop_assert!(back == tl);
        }
    }
}
