//! Synthetic dataset bundles with known class structure.
//!
//! Each backbone space gets its own unit-norm class prototypes. A test sample
//! of class `c` is `normalize(P[c] + sigma * z)` with `z` standard normal per
//! coordinate, so `sigma` is the per-coordinate noise of that backbone. The
//! contrastive backbone's test rows use the text-image noise; its text rows are
//! the prototypes themselves. Reference rows are prototypes with independent
//! noise of `reference_noise_ratio * sigma`, where `sigma` is the image-image
//! noise of the matching method. With zero noise every method scores the true
//! class at cosine 1.
//!
//! Draw order from a single ChaCha8 stream seeded with `seed`: contrastive
//! prototypes, self-distilled prototypes, then per test sample (class-major)
//! the contrastive and self-distilled rows, then contrastive references and
//! self-distilled references (class-major).

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::{
    ClassCatalog, ClassEntry, DatasetBundle, EmbeddingMatrix, ReferenceManifest, Split,
    BACKBONE_CLIP, BACKBONE_DINO, MIN_NORM,
};

pub const DEFAULT_REFERENCE_NOISE_RATIO: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub n_classes: usize,
    pub samples_per_class: usize,
    pub dim: usize,
    /// Per-coordinate noise for text-image, contrastive image-image and
    /// self-distilled image-image, in that order.
    pub noise: [f64; 3],
    /// References per class and backbone.
    pub refs_per_class: usize,
    pub seed: u64,
    /// Reference noise as a fraction of the matching method's noise.
    #[serde(default = "default_ratio")]
    pub reference_noise_ratio: f64,
    /// Number of classes tagged closed in the catalog; defaults to 60%.
    #[serde(default)]
    pub closed: Option<usize>,
}

fn default_ratio() -> f64 {
    DEFAULT_REFERENCE_NOISE_RATIO
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            n_classes: 10,
            samples_per_class: 50,
            dim: 64,
            noise: [0.6, 0.9, 0.5],
            refs_per_class: 3,
            seed: 0,
            reference_noise_ratio: DEFAULT_REFERENCE_NOISE_RATIO,
            closed: None,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.n_classes == 0 || self.samples_per_class == 0 || self.refs_per_class == 0 {
            return bad("class, sample and reference counts must be >= 1".into());
        }
        if self.dim < 2 {
            return bad(format!("dim must be >= 2, got {}", self.dim));
        }
        if self.noise.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return bad(format!(
                "noise must be finite and >= 0, got {:?}",
                self.noise
            ));
        }
        if !self.reference_noise_ratio.is_finite() || self.reference_noise_ratio < 0.0 {
            return bad("reference noise ratio must be >= 0".into());
        }
        if let Some(m) = self.closed {
            if m == 0 || m > self.n_classes {
                return bad(format!("closed count must be in 1..={}", self.n_classes));
            }
        }
        Ok(())
    }

    fn closed_count(&self) -> usize {
        self.closed
            .unwrap_or_else(|| ((self.n_classes * 6 + 5) / 10).clamp(1, self.n_classes))
    }
}

struct Sampler {
    rng: ChaCha8Rng,
    dim: usize,
}

impl Sampler {
    fn unit(&mut self) -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..self.dim)
                .map(|_| self.rng.sample::<f64, _>(StandardNormal))
                .collect();
            if norm(&v) > MIN_NORM {
                return normalized(&v);
            }
        }
    }

    fn noisy(&mut self, center: &[f64], sigma: f64, out: &mut Vec<f32>) {
        let v: Vec<f64> = center
            .iter()
            .map(|&c| c + sigma * self.rng.sample::<f64, _>(StandardNormal))
            .collect();
        // A zero vector is vanishingly unlikely; fall back to the prototype.
        let v = if norm(&v) > MIN_NORM {
            normalized(&v)
        } else {
            center.to_vec()
        };
        out.extend(v.iter().map(|&x| x as f32));
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let n = norm(v);
    v.iter().map(|x| x / n).collect()
}

fn to_matrix(rows: usize, dim: usize, data: Vec<f32>) -> Result<EmbeddingMatrix> {
    // Rounding to f32 keeps norms within 1e-6 of 1, well inside the flag tolerance.
    EmbeddingMatrix::new(rows, dim, data, true)
}

pub fn class_name(i: usize, n: usize) -> String {
    let width = n.saturating_sub(1).to_string().len().max(2);
    format!("class_{i:0width$}")
}

pub fn generate_synthetic_bundle(params: &SynthParams) -> Result<DatasetBundle> {
    params.validate()?;
    let SynthParams {
        n_classes: n,
        samples_per_class: spc,
        dim,
        noise: [s_text, s_clip_ii, s_dino],
        refs_per_class: m_refs,
        seed,
        reference_noise_ratio: ratio,
        ..
    } = *params;

    let mut s = Sampler {
        rng: ChaCha8Rng::seed_from_u64(seed),
        dim,
    };
    let clip_protos: Vec<Vec<f64>> = (0..n).map(|_| s.unit()).collect();
    let dino_protos: Vec<Vec<f64>> = (0..n).map(|_| s.unit()).collect();

    let t = n * spc;
    let (mut test_clip, mut test_dino) = (Vec::with_capacity(t * dim), Vec::with_capacity(t * dim));
    let mut labels = Vec::with_capacity(t);
    for c in 0..n {
        for _ in 0..spc {
            s.noisy(&clip_protos[c], s_text, &mut test_clip);
            s.noisy(&dino_protos[c], s_dino, &mut test_dino);
            labels.push(c);
        }
    }

    let r = n * m_refs;
    let (mut refs_clip, mut refs_dino) = (Vec::with_capacity(r * dim), Vec::with_capacity(r * dim));
    for proto in &clip_protos {
        for _ in 0..m_refs {
            s.noisy(proto, ratio * s_clip_ii, &mut refs_clip);
        }
    }
    for proto in &dino_protos {
        for _ in 0..m_refs {
            s.noisy(proto, ratio * s_dino, &mut refs_dino);
        }
    }

    let closed = params.closed_count();
    let catalog = ClassCatalog::new(
        (0..n)
            .map(|i| {
                let split = if i < closed {
                    Split::Closed
                } else {
                    Split::Open
                };
                ClassEntry::new(class_name(i, n), split)
            })
            .collect(),
    )?;

    let per_class: BTreeMap<String, Vec<usize>> = catalog
        .names()
        .enumerate()
        .map(|(c, name)| (name.to_owned(), (c * m_refs..(c + 1) * m_refs).collect()))
        .collect();
    let mut manifest = ReferenceManifest::default();
    manifest
        .backbones
        .insert(BACKBONE_CLIP.into(), per_class.clone());
    manifest.backbones.insert(BACKBONE_DINO.into(), per_class);

    let text_data = clip_protos.iter().flatten().map(|&x| x as f32).collect();
    let provenance: BTreeMap<String, String> = [BACKBONE_CLIP, BACKBONE_DINO]
        .iter()
        .map(|b| (b.to_string(), format!("synthetic(seed={seed})")))
        .collect();

    let bundle = DatasetBundle {
        text: to_matrix(n, dim, text_data)?,
        test: [
            (BACKBONE_CLIP.to_string(), to_matrix(t, dim, test_clip)?),
            (BACKBONE_DINO.to_string(), to_matrix(t, dim, test_dino)?),
        ]
        .into_iter()
        .collect(),
        test_labels: labels,
        references: [
            (BACKBONE_CLIP.to_string(), to_matrix(r, dim, refs_clip)?),
            (BACKBONE_DINO.to_string(), to_matrix(r, dim, refs_dino)?),
        ]
        .into_iter()
        .collect(),
        manifest,
        catalog,
        provenance,
    };
    bundle.validate()?;
    Ok(bundle)
}
