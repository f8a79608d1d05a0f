use std::path::Path;

use super::zseb::{self, Payload, RawMatrix};
use crate::error::{Error, Result};

/// Maximum deviation of a row's L2 norm from 1.0 for a matrix flagged as normalized.
pub const NORM_TOLERANCE: f64 = 1e-5;

/// Rows whose L2 norm falls below this are treated as zero vectors.
pub const MIN_NORM: f64 = 1e-12;

/// Dense row-major float32 matrix of feature vectors, one row per item.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f32>,
    normalized: bool,
}

impl EmbeddingMatrix {
    /// Builds a matrix and checks every invariant, including the norm of each
    /// row when `normalized` is set.
    pub fn new(rows: usize, dim: usize, data: Vec<f32>, normalized: bool) -> Result<Self> {
        let m = EmbeddingMatrix {
            rows,
            dim,
            data,
            normalized,
        };
        m.validate()?;
        Ok(m)
    }

    /// Builds an unnormalized matrix from equal-length rows.
    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        if let Some((i, r)) = rows
            .iter()
            .enumerate()
            .find(|(_, r)| r.as_ref().len() != dim)
        {
            return Err(Error::DimensionMismatch(format!(
                "row {i} has length {}, expected {dim}",
                r.as_ref().len()
            )));
        }
        let data = rows
            .iter()
            .flat_map(|r| r.as_ref().iter().copied())
            .collect();
        Self::new(rows.len(), dim, data, false)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.dim == 0 {
            return Err(Error::Validation(format!(
                "matrix must have rows >= 1 and dim >= 1, got {}x{}",
                self.rows, self.dim
            )));
        }
        if self.rows.checked_mul(self.dim) != Some(self.data.len()) {
            return Err(Error::Validation(format!(
                "data length {} != rows {} x dim {}",
                self.data.len(),
                self.rows,
                self.dim
            )));
        }
        if let Some(i) = self.data.iter().position(|x| !x.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite value at row {}, column {}",
                i / self.dim,
                i % self.dim
            )));
        }
        if self.normalized {
            for (r, row) in self.iter_rows().enumerate() {
                let norm = l2_norm(row);
                if (norm - 1.0).abs() > NORM_TOLERANCE {
                    return Err(Error::Validation(format!(
                        "row {r} has norm {norm} but the matrix is flagged normalized"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    /// Returns a copy with every row scaled to unit L2 norm.
    pub fn l2_normalize_rows(&self) -> Result<EmbeddingMatrix> {
        let mut data = Vec::with_capacity(self.data.len());
        for (r, row) in self.iter_rows().enumerate() {
            let norm = l2_norm(row);
            if norm < MIN_NORM {
                return Err(Error::DegenerateRow { row: r, norm });
            }
            data.extend(row.iter().map(|&x| (x as f64 / norm) as f32));
        }
        Ok(EmbeddingMatrix {
            rows: self.rows,
            dim: self.dim,
            data,
            normalized: true,
        })
    }

    fn to_raw(&self) -> RawMatrix {
        RawMatrix {
            rows: self.rows,
            dim: self.dim,
            normalized: self.normalized,
            payload: Payload::F32(self.data.clone()),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        zseb::encode(&self.to_raw())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let raw = zseb::decode(bytes)?;
        let data = match raw.payload {
            Payload::F32(v) => v,
            Payload::F64(_) => {
                return Err(Error::Format(
                    "embedding matrices must have a float32 payload".into(),
                ))
            }
        };
        EmbeddingMatrix::new(raw.rows, raw.dim, data, raw.normalized)
    }
}

/// L2 norm accumulated in float64.
pub fn l2_norm(v: &[f32]) -> f64 {
    v.iter()
        .map(|&x| (x as f64) * (x as f64))
        .sum::<f64>()
        .sqrt()
}

/// Writes `m` as a ZSEB file. Nothing is written if `m` is invalid.
pub fn write_matrix(m: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = m.to_bytes()?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    EmbeddingMatrix::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_row_file_is_36_bytes() {
        // magic 4 + version 2 + flags 2 + rows 8 + dim 4 + 3 floats 12 + crc 4
        let m = EmbeddingMatrix::new(1, 3, vec![1.0, 0.0, 0.0], true).unwrap();
        assert_eq!(m.to_bytes().unwrap().len(), 36);
    }

    #[test]
    fn nan_is_rejected_and_nothing_written() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.zseb");
        let m = EmbeddingMatrix {
            rows: 1,
            dim: 2,
            data: vec![f32::NAN, 1.0],
            normalized: false,
        };
        assert!(matches!(write_matrix(&m, &path), Err(Error::Validation(_))));
        assert!(!path.exists());
        assert!(EmbeddingMatrix::new(1, 2, vec![1.0, f32::INFINITY], false).is_err());
    }

    #[test]
    fn normalized_flag_is_checked_on_read() {
        let raw = RawMatrix {
            rows: 1,
            dim: 2,
            normalized: true,
            payload: Payload::F32(vec![3.0, 4.0]),
        };
        let bytes = zseb::encode(&raw).unwrap();
        assert!(matches!(
            EmbeddingMatrix::from_bytes(&bytes),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn normalize_three_four() {
        let m = EmbeddingMatrix::from_rows(&[[3.0f32, 4.0]]).unwrap();
        let n = m.l2_normalize_rows().unwrap();
        assert!(n.is_normalized());
        assert!((n.row(0)[0] - 0.6).abs() < 1e-7);
        assert!((n.row(0)[1] - 0.8).abs() < 1e-7);
    }

    #[test]
    fn normalize_unit_row_unchanged() {
        let m = EmbeddingMatrix::from_rows(&[[0.0f32, 1.0, 0.0]]).unwrap();
        assert_eq!(m.l2_normalize_rows().unwrap().data(), m.data());
    }

    #[test]
    fn normalize_zero_row_reports_index() {
        let m = EmbeddingMatrix::from_rows(&[[1.0f32, 0.0], [0.0, 0.0]]).unwrap();
        match m.l2_normalize_rows() {
            Err(Error::DegenerateRow { row, .. }) => assert_eq!(row, 1),
            other => panic!("expected degenerate row, got {other:?}"),
        }
    }

    #[test]
    fn ragged_rows_rejected() {
        let rows: Vec<Vec<f32>> = vec![vec![1.0, 2.0], vec![1.0]];
        assert!(matches!(
            EmbeddingMatrix::from_rows(&rows),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn float64_file_is_not_an_embedding() {
        let raw = RawMatrix {
            rows: 1,
            dim: 1,
            normalized: false,
            payload: Payload::F64(vec![0.5]),
        };
        let bytes = zseb::encode(&raw).unwrap();
        assert!(matches!(
            EmbeddingMatrix::from_bytes(&bytes),
            Err(Error::Format(_))
        ));
    }
}
