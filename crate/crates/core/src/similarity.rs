//! Alignment scores between test embeddings and class anchors (text prompts
//! or reference images).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::{
    l2_norm, ClassCatalog, DatasetBundle, EmbeddingMatrix, ReferenceManifest, BACKBONE_CLIP,
    BACKBONE_DINO, MIN_NORM,
};

/// Values may exceed [-1, 1] by at most this much before clamping is considered a bug.
pub const SCORE_TOLERANCE: f64 = 1e-6;

/// One of the three alignment scorers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Test image vs. class prompt, contrastive backbone.
    TextImageClip,
    /// Test image vs. reference images, contrastive backbone.
    ImageImageClip,
    /// Test image vs. reference images, self-distilled backbone.
    ImageImageDino,
}

impl Method {
    pub const ALL: [Method; 3] = [
        Method::TextImageClip,
        Method::ImageImageClip,
        Method::ImageImageDino,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::TextImageClip => "text_image_clip",
            Method::ImageImageClip => "image_image_clip",
            Method::ImageImageDino => "image_image_dino",
        }
    }

    /// Short label used in tables: M1, M2, M3.
    pub fn short(self) -> &'static str {
        match self {
            Method::TextImageClip => "M1",
            Method::ImageImageClip => "M2",
            Method::ImageImageDino => "M3",
        }
    }

    /// Backbone whose test embeddings this method reads.
    pub fn test_backbone(self) -> &'static str {
        match self {
            Method::TextImageClip | Method::ImageImageClip => BACKBONE_CLIP,
            Method::ImageImageDino => BACKBONE_DINO,
        }
    }

    /// Backbone whose reference embeddings this method reads, if any.
    pub fn reference_backbone(self) -> Option<&'static str> {
        match self {
            Method::TextImageClip => None,
            Method::ImageImageClip => Some(BACKBONE_CLIP),
            Method::ImageImageDino => Some(BACKBONE_DINO),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "text_image_clip" | "m1" => Ok(Method::TextImageClip),
            "image_image_clip" | "m2" => Ok(Method::ImageImageClip),
            "image_image_dino" | "m3" => Ok(Method::ImageImageDino),
            _ => Err(Error::InvalidParameter(format!("unknown method {s:?}"))),
        }
    }
}

/// T x N raw cosine scores, columns in catalog order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    method: Method,
}

impl ScoreMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>, method: Method) -> Result<Self> {
        if rows == 0 || cols == 0 || rows.checked_mul(cols) != Some(values.len()) {
            return Err(Error::Validation(format!(
                "score matrix shape {rows}x{cols} does not match {} values",
                values.len()
            )));
        }
        if let Some(i) = values
            .iter()
            .position(|v| !v.is_finite() || v.abs() > 1.0 + SCORE_TOLERANCE)
        {
            return Err(Error::Validation(format!(
                "score {} at row {}, column {} is outside [-1, 1]",
                values[i],
                i / cols,
                i % cols
            )));
        }
        Ok(ScoreMatrix {
            rows,
            cols,
            values,
            method,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.cols)
    }
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

/// Cosine similarity, accumulated in float64 and clamped to [-1, 1].
pub fn cosine(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "vectors have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (l2_norm(a), l2_norm(b));
    if na < MIN_NORM || nb < MIN_NORM {
        return Err(Error::InvalidParameter(
            "cosine is undefined for a zero vector".into(),
        ));
    }
    Ok(cosine_with_norms(a, b, na, nb))
}

#[inline]
fn cosine_with_norms(a: &[f32], b: &[f32], na: f64, nb: f64) -> f64 {
    (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
}

/// Pairwise (cascade) summation; the reduction tree depends only on the length.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 8;
    if xs.len() <= BLOCK {
        xs.iter().fold(0.0, |acc, &x| acc + x)
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

fn row_norms(m: &EmbeddingMatrix) -> Result<Vec<f64>> {
    m.iter_rows()
        .enumerate()
        .map(|(r, row)| {
            let n = l2_norm(row);
            if n < MIN_NORM {
                Err(Error::DegenerateRow { row: r, norm: n })
            } else {
                Ok(n)
            }
        })
        .collect()
}

/// Fills a rows x cols buffer one row at a time. Each row is computed
/// independently, so the result does not depend on the thread schedule.
fn fill_rows<F>(rows: usize, cols: usize, f: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    let mut values = vec![0.0; rows * cols];
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        values
            .par_chunks_mut(cols)
            .enumerate()
            .for_each(|(t, out)| f(t, out));
    }
    #[cfg(not(feature = "parallel"))]
    {
        values
            .chunks_mut(cols)
            .enumerate()
            .for_each(|(t, out)| f(t, out));
    }
    values
}

/// Entry (t, n) is the cosine between test row t and text row n.
pub fn score_text_image(test: &EmbeddingMatrix, text: &EmbeddingMatrix) -> Result<ScoreMatrix> {
    if test.dim() != text.dim() {
        return Err(Error::DimensionMismatch(format!(
            "test dim {} vs text dim {}",
            test.dim(),
            text.dim()
        )));
    }
    let test_norms = row_norms(test)?;
    let text_norms = row_norms(text)?;
    let values = fill_rows(test.rows(), text.rows(), |t, out| {
        let a = test.row(t);
        for (n, slot) in out.iter_mut().enumerate() {
            *slot = cosine_with_norms(a, text.row(n), test_norms[t], text_norms[n]);
        }
    });
    ScoreMatrix::new(test.rows(), text.rows(), values, Method::TextImageClip)
}

/// Entry (t, n) is the mean cosine between test row t and each reference of
/// class n, summed in manifest order with pairwise accumulation.
pub fn score_image_image(
    test: &EmbeddingMatrix,
    refs: &EmbeddingMatrix,
    manifest: &ReferenceManifest,
    catalog: &ClassCatalog,
    backbone: &str,
    method: Method,
) -> Result<ScoreMatrix> {
    if test.dim() != refs.dim() {
        return Err(Error::DimensionMismatch(format!(
            "test dim {} vs reference dim {} for backbone {backbone:?}",
            test.dim(),
            refs.dim()
        )));
    }
    manifest.validate(backbone, catalog, refs.rows())?;
    let per_class: Vec<&[usize]> = catalog
        .names()
        .map(|n| manifest.indices(backbone, n).unwrap_or(&[]))
        .collect();
    let test_norms = row_norms(test)?;
    let ref_norms = row_norms(refs)?;
    let max_refs = per_class.iter().map(|r| r.len()).max().unwrap_or(0);

    let values = fill_rows(test.rows(), catalog.len(), |t, out| {
        let a = test.row(t);
        let mut buf = Vec::with_capacity(max_refs);
        for (slot, idx) in out.iter_mut().zip(&per_class) {
            buf.clear();
            buf.extend(
                idx.iter()
                    .map(|&r| cosine_with_norms(a, refs.row(r), test_norms[t], ref_norms[r])),
            );
            *slot = pairwise_sum(&buf) / buf.len() as f64;
        }
    });
    ScoreMatrix::new(test.rows(), catalog.len(), values, method)
}

/// Computes the score matrix of `method` from a bundle.
pub fn score_method(bundle: &DatasetBundle, method: Method) -> Result<ScoreMatrix> {
    let test = bundle.test_matrix(method.test_backbone())?;
    match method.reference_backbone() {
        None => score_text_image(test, &bundle.text),
        Some(backbone) => score_image_image(
            test,
            bundle.reference_matrix(backbone)?,
            &bundle.manifest,
            &bundle.catalog,
            backbone,
            method,
        ),
    }
}
