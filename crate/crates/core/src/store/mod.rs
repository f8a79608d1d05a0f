//! On-disk data model: ZSEB embedding matrices and the JSON manifests that
//! tie them into a dataset bundle.

mod manifest;
mod matrix;
pub mod zseb;

pub use manifest::{
    default_prompt, BundleFile, ClassCatalog, ClassEntry, DatasetBundle, ReferenceManifest, Split,
    BACKBONE_CLIP, BACKBONE_DINO,
};
pub(crate) use manifest::{read_text, write_text};
pub use matrix::{l2_norm, read_matrix, write_matrix, EmbeddingMatrix, MIN_NORM, NORM_TOLERANCE};
