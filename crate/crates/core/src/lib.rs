//! Zero-shot classification by confidence-weighted fusion of three alignment
//! scorers over precomputed embeddings.
//!
//! The engine never runs a neural network. It reads embedding matrices
//! produced elsewhere ([`store`]), scores test samples against class prompts
//! and reference images ([`similarity`]), turns the scores into calibrated
//! distributions and fuses them with per-sample confidence weights
//! ([`fusion`]), and measures closed-set accuracy and open-set AUROC
//! ([`eval`]). [`pipeline`] strings the stages together from a JSON config,
//! [`synth`] builds synthetic bundles and [`prompts`] assembles the prompts
//! used to commission reference images.

pub mod error;
pub mod eval;
pub mod fusion;
pub mod pipeline;
pub mod prompts;
pub mod similarity;
pub mod store;
pub mod synth;

pub use error::{Error, Result};
pub use eval::{EvalReport, LabelSpace, SplitSpec};
pub use fusion::{ConfidenceScheme, FusionConfig, FusionScheme, ProbMatrix};
pub use pipeline::{run_pipeline, PipelineConfig, SplitSource};
pub use similarity::{Method, ScoreMatrix};
pub use store::{ClassCatalog, DatasetBundle, EmbeddingMatrix};
pub use synth::{generate_synthetic_bundle, SynthParams};
