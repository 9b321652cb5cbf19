//! HKF1 field dumps.
//!
//! Layout: the magic `HKF1`, then little-endian `u32` width, height and
//! channel count, then `f64` values row-major with the channel index varying
//! fastest.

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"HKF1";
const HEADER: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct FieldDump {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub values: Vec<f64>,
}

impl FieldDump {
    pub fn scalar(width: usize, height: usize, values: &[f64]) -> Self {
        FieldDump {
            width,
            height,
            channels: 1,
            values: values.to_vec(),
        }
    }

    pub fn vectors(width: usize, height: usize, vectors: &[[f64; 2]]) -> Self {
        FieldDump {
            width,
            height,
            channels: 2,
            values: vectors.iter().flatten().copied().collect(),
        }
    }

    pub fn to_vectors(&self) -> Result<Vec<[f64; 2]>> {
        if self.channels != 2 {
            return Err(Error::Config(format!("expected 2 channels, found {}", self.channels)));
        }
        Ok(self.values.chunks_exact(2).map(|c| [c[0], c[1]]).collect())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER + 8 * self.values.len());
        out.extend_from_slice(MAGIC);
        for v in [self.width, self.height, self.channels] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER {
            return Err(Error::parse(bytes.len(), "truncated HKF1 header"));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::parse(0, "bad magic, expected HKF1"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
        let (width, height, channels) = (word(0), word(1), word(2));
        let n = width
            .checked_mul(height)
            .and_then(|v| v.checked_mul(channels))
            .ok_or_else(|| Error::parse(4, "field dimensions overflow"))?;
        let body = &bytes[HEADER..];
        if body.len() != 8 * n {
            return Err(Error::parse(
                HEADER,
                format!("expected {} value bytes, found {}", 8 * n, body.len()),
            ));
        }
        let values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(FieldDump {
            width,
            height,
            channels,
            values,
        })
    }
}
