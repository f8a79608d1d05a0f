//! ZSEB binary matrix container.
//!
//! Layout, all integers little-endian:
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `ZSEB`                            |
//! | 4      | 2    | version (`u16`, currently 1)            |
//! | 6      | 2    | flags (`u16`)                           |
//! | 8      | 8    | rows (`u64`)                            |
//! | 16     | 4    | dim (`u32`)                             |
//! | 20     | n    | payload, row-major                      |
//! | 20 + n | 4    | CRC-32 (IEEE) of the payload bytes      |
//!
//! Flag bit 0 marks rows as unit-L2-normalized. Flag bit 1 marks a float64
//! payload; without it the payload is float32. Float64 payloads carry score
//! and probability matrices between pipeline stages. Any other flag bit is
//! rejected.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"ZSEB";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 20;
pub const CRC_LEN: usize = 4;

pub const FLAG_NORMALIZED: u16 = 1 << 0;
pub const FLAG_FLOAT64: u16 = 1 << 1;
const KNOWN_FLAGS: u16 = FLAG_NORMALIZED | FLAG_FLOAT64;

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl Payload {
    pub fn len(&self) -> usize {
        match self {
            Payload::F32(v) => v.len(),
            Payload::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn elem_size(&self) -> usize {
        match self {
            Payload::F32(_) => 4,
            Payload::F64(_) => 8,
        }
    }
}

/// A decoded container before any type-specific validation.
#[derive(Debug, Clone, PartialEq)]
pub struct RawMatrix {
    pub rows: usize,
    pub dim: usize,
    pub normalized: bool,
    pub payload: Payload,
}

pub fn encode(raw: &RawMatrix) -> Result<Vec<u8>> {
    if raw.rows == 0 || raw.dim == 0 {
        return Err(Error::Validation(format!(
            "matrix must have rows >= 1 and dim >= 1, got {}x{}",
            raw.rows, raw.dim
        )));
    }
    if raw.rows.checked_mul(raw.dim) != Some(raw.payload.len()) {
        return Err(Error::Validation(format!(
            "payload length {} != rows {} x dim {}",
            raw.payload.len(),
            raw.rows,
            raw.dim
        )));
    }
    let dim = u32::try_from(raw.dim)
        .map_err(|_| Error::Validation(format!("dim {} exceeds u32", raw.dim)))?;

    let mut flags = 0u16;
    if raw.normalized {
        flags |= FLAG_NORMALIZED;
    }
    if matches!(raw.payload, Payload::F64(_)) {
        flags |= FLAG_FLOAT64;
    }

    let payload_len = raw.payload.len() * raw.payload.elem_size();
    let mut out = Vec::with_capacity(HEADER_LEN + payload_len + CRC_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&flags.to_le_bytes());
    out.extend_from_slice(&(raw.rows as u64).to_le_bytes());
    out.extend_from_slice(&dim.to_le_bytes());
    match &raw.payload {
        Payload::F32(v) => v
            .iter()
            .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        Payload::F64(v) => v
            .iter()
            .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
    }
    let crc = crc32fast::hash(&out[HEADER_LEN..]);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<RawMatrix> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing ZSEB magic".into()));
    }
    if bytes.len() < HEADER_LEN + CRC_LEN {
        return Err(Error::Corruption(format!(
            "file truncated: {} bytes is shorter than the header",
            bytes.len()
        )));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported ZSEB version {version}")));
    }
    let flags = u16::from_le_bytes([bytes[6], bytes[7]]);
    if flags & !KNOWN_FLAGS != 0 {
        return Err(Error::Format(format!("unknown flag bits {flags:#06x}")));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let dim = u32::from_le_bytes(bytes[16..20].try_into().unwrap()) as u64;
    if rows == 0 || dim == 0 {
        return Err(Error::Corruption(format!("empty shape {rows}x{dim}")));
    }
    let elem_size: u64 = if flags & FLAG_FLOAT64 != 0 { 8 } else { 4 };
    let payload_len = rows
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(elem_size))
        .ok_or_else(|| Error::Corruption(format!("shape {rows}x{dim} overflows")))?;
    let expected = (HEADER_LEN + CRC_LEN) as u64 + payload_len;
    if bytes.len() as u64 != expected {
        return Err(Error::Corruption(format!(
            "expected {expected} bytes for a {rows}x{dim} matrix, found {}",
            bytes.len()
        )));
    }

    let payload_end = HEADER_LEN + payload_len as usize;
    let payload_bytes = &bytes[HEADER_LEN..payload_end];
    let stored_crc = u32::from_le_bytes(bytes[payload_end..].try_into().unwrap());
    let actual_crc = crc32fast::hash(payload_bytes);
    if stored_crc != actual_crc {
        return Err(Error::Corruption(format!(
            "CRC mismatch: stored {stored_crc:#010x}, computed {actual_crc:#010x}"
        )));
    }

    let payload = if elem_size == 8 {
        Payload::F64(
            payload_bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        )
    } else {
        Payload::F32(
            payload_bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        )
    };

    Ok(RawMatrix {
        rows: rows as usize,
        dim: dim as usize,
        normalized: flags & FLAG_NORMALIZED != 0,
        payload,
    })
}

pub fn write_raw(raw: &RawMatrix, path: &Path) -> Result<()> {
    let bytes = encode(raw)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_raw(path: &Path) -> Result<RawMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

/// Writes a float64 matrix (scores, probabilities).
pub fn write_f64_matrix(rows: usize, cols: usize, data: &[f64], path: &Path) -> Result<()> {
    if let Some(i) = data.iter().position(|x| !x.is_finite()) {
        return Err(Error::Validation(format!("non-finite value at index {i}")));
    }
    write_raw(
        &RawMatrix {
            rows,
            dim: cols,
            normalized: false,
            payload: Payload::F64(data.to_vec()),
        },
        path,
    )
}

/// Reads a float64 matrix written by [`write_f64_matrix`]; returns `(rows, cols, data)`.
pub fn read_f64_matrix(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let raw = read_raw(path)?;
    match raw.payload {
        Payload::F64(data) => {
            if let Some(i) = data.iter().position(|x| !x.is_finite()) {
                return Err(Error::Validation(format!("non-finite value at index {i}")));
            }
            Ok((raw.rows, raw.dim, data))
        }
        Payload::F32(_) => Err(Error::Format(format!(
            "{} holds a float32 payload, expected float64",
            path.display()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RawMatrix {
        RawMatrix {
            rows: 2,
            dim: 2,
            normalized: false,
            payload: Payload::F32(vec![1.0, 2.0, 3.0, 4.0]),
        }
    }

    #[test]
    fn header_layout() {
        let bytes = encode(&sample()).unwrap();
        assert_eq!(&bytes[..4], b"ZSEB");
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(&bytes[6..8], &[0, 0]);
        assert_eq!(&bytes[8..16], &2u64.to_le_bytes());
        assert_eq!(&bytes[16..20], &2u32.to_le_bytes());
        assert_eq!(&bytes[20..24], &1.0f32.to_le_bytes());
        let crc = crc32fast::hash(&bytes[20..36]);
        assert_eq!(&bytes[36..], &crc.to_le_bytes());
    }

    #[test]
    fn crc_is_ieee() {
        // Standard CRC-32 check value.
        assert_eq!(crc32fast::hash(b"123456789"), 0xCBF4_3926);
    }

    #[test]
    fn float64_roundtrip() {
        let raw = RawMatrix {
            rows: 1,
            dim: 3,
            normalized: false,
            payload: Payload::F64(vec![0.1, -0.2, 1e-300]),
        };
        let bytes = encode(&raw).unwrap();
        assert_eq!(bytes.len(), 20 + 24 + 4);
        assert_eq!(&bytes[6..8], &[2, 0]);
        assert_eq!(decode(&bytes).unwrap(), raw);
    }

    #[test]
    fn rejects_bad_magic_and_version() {
        let mut bytes = encode(&sample()).unwrap();
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes), Err(Error::Format(_))));

        let mut bytes = encode(&sample()).unwrap();
        bytes[4] = 2;
        assert!(matches!(decode(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn rejects_unknown_flags() {
        let mut bytes = encode(&sample()).unwrap();
        bytes[6] |= 0x80;
        assert!(matches!(decode(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn truncation_is_corruption() {
        let bytes = encode(&sample()).unwrap();
        for cut in 4..bytes.len() {
            assert!(
                matches!(decode(&bytes[..cut]), Err(Error::Corruption(_))),
                "cut at {cut}"
            );
        }
    }

    #[test]
    fn shape_mismatch_rejected_on_encode() {
        let mut raw = sample();
        raw.rows = 3;
        assert!(matches!(encode(&raw), Err(Error::Validation(_))));
    }
}
