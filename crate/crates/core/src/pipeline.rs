//! End-to-end runs driven by a JSON config, and the individual stages with
//! their intermediate files.
//!
//! Intermediate score and probability matrices are float64 ZSEB files with a
//! JSON sidecar of the same stem describing the matrix.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{
    emit_report, evaluate_matrix, split_catalog, ConfigEcho, Decimal6, EvalReport, LabelSpace,
    ReportFormat, SplitEcho, SplitSpec,
};
use crate::fusion::{
    calibrate_and_fuse, fuse_calibrated, FusionConfig, FusionOutcome, ProbMatrix, ProbSource,
};
use crate::similarity::{score_method, Method, ScoreMatrix};
use crate::store::{read_text, write_text, zseb, ClassCatalog, DatasetBundle};

/// Where the closed/open split comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SplitSource {
    /// The closed/open tags in the catalog.
    #[default]
    Catalog,
    /// A seeded random split with `m` closed classes.
    Seeded { m: usize, seed: u64 },
    /// A split file written by the `split` command.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportTarget {
    #[serde(default)]
    pub format: ReportFormat,
    pub path: PathBuf,
}

fn all_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Path of `bundle.json`.
    pub bundle: PathBuf,
    /// Methods to score and fuse; any non-empty subset.
    #[serde(default = "all_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub fusion: FusionConfig,
    #[serde(default)]
    pub split: SplitSource,
    #[serde(default)]
    pub label_space: LabelSpace,
    /// Dataset name echoed into the report.
    #[serde(default)]
    pub dataset: String,
    #[serde(default)]
    pub report: Option<ReportTarget>,
}

impl PipelineConfig {
    pub fn new(bundle: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            bundle: bundle.into(),
            methods: all_methods(),
            fusion: FusionConfig::default(),
            split: SplitSource::default(),
            label_space: LabelSpace::default(),
            dataset: String::new(),
            report: None,
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::json("pipeline config", e))
    }

    /// Loads a config and resolves its relative paths against the config's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::from_json(&read_text(path)?)?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        cfg.bundle = base.join(&cfg.bundle);
        if let SplitSource::File(f) = &mut cfg.split {
            *f = base.join(&*f);
        }
        if let Some(r) = &mut cfg.report {
            r.path = base.join(&r.path);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        validate_methods(&self.methods)?;
        self.fusion.validate()?;
        self.fusion.fixed_weights(&self.methods)?;
        Ok(())
    }
}

fn validate_methods(methods: &[Method]) -> Result<()> {
    if methods.is_empty() {
        return Err(Error::Config("at least one method must be selected".into()));
    }
    let mut seen = HashSet::new();
    if let Some(m) = methods.iter().find(|m| !seen.insert(**m)) {
        return Err(Error::Config(format!("method {m} listed twice")));
    }
    Ok(())
}

pub fn resolve_split(
    source: &SplitSource,
    catalog: &ClassCatalog,
    dataset: &str,
) -> Result<SplitSpec> {
    let spec = match source {
        SplitSource::Catalog => SplitSpec::from_catalog(catalog),
        SplitSource::Seeded { m, seed } => split_catalog(catalog, *m, *seed)?,
        SplitSource::File(path) => SplitSpec::load(path)?,
    };
    spec.validate(catalog)?;
    if dataset.is_empty() {
        Ok(spec)
    } else {
        Ok(spec.with_dataset(dataset))
    }
}

/// Scores every selected method.
pub fn score_stage(bundle: &DatasetBundle, methods: &[Method]) -> Result<Vec<ScoreMatrix>> {
    validate_methods(methods)?;
    methods.iter().map(|&m| score_method(bundle, m)).collect()
}

/// Evaluates each method and the fused output.
pub fn evaluate(
    bundle: &DatasetBundle,
    outcome: &FusionOutcome,
    fusion: &FusionConfig,
    split: &SplitSpec,
    label_space: LabelSpace,
) -> Result<EvalReport> {
    let catalog = &bundle.catalog;
    let closed = split.closed_indices(catalog);
    let space: Vec<usize> = match label_space {
        LabelSpace::Closed => closed.clone(),
        LabelSpace::Full => (0..catalog.len()).collect(),
    };
    let labels = &bundle.test_labels;

    let methods = outcome
        .methods
        .iter()
        .zip(&outcome.probs)
        .map(|(m, p)| evaluate_matrix(m.as_str(), p, labels, &closed, &space))
        .collect::<Result<Vec<_>>>()?;
    let fused = evaluate_matrix("fused", &outcome.fused, labels, &closed, &space)?;

    let mut references_per_class = BTreeMap::new();
    for backbone in outcome
        .methods
        .iter()
        .filter_map(|m| m.reference_backbone())
    {
        let counts = bundle.manifest.counts(backbone, catalog);
        references_per_class.insert(
            backbone.to_owned(),
            catalog.names().map(str::to_owned).zip(counts).collect(),
        );
    }

    let config = ConfigEcho {
        methods: outcome.methods.clone(),
        scheme: fusion.scheme.label(),
        fixed_weights: fusion.fixed_weights(&outcome.methods)?.map(|w| {
            outcome
                .methods
                .iter()
                .zip(w)
                .map(|(&m, x)| (m, Decimal6::new(x)))
                .collect()
        }),
        temperatures: outcome
            .methods
            .iter()
            .map(|&m| (m, Decimal6::new(fusion.temperature(m))))
            .collect(),
        epsilon: Decimal6::new(fusion.epsilon),
        label_space,
        split: SplitEcho {
            dataset: split.dataset.clone(),
            m: split.m,
            seed: split.seed,
            closed: split.closed.clone(),
            open: split.open.clone(),
        },
        references_per_class,
        n_test: labels.len(),
        provenance: bundle.provenance.clone(),
    };
    Ok(EvalReport {
        config,
        methods,
        fused,
    })
}

/// Runs everything in memory for an already loaded bundle. Nothing is written.
pub fn run_on_bundle(bundle: &DatasetBundle, config: &PipelineConfig) -> Result<EvalReport> {
    config.validate()?;
    let split = resolve_split(&config.split, &bundle.catalog, &config.dataset)?;
    let scores = score_stage(bundle, &config.methods)?;
    let outcome = calibrate_and_fuse(&scores, &config.fusion)?;
    evaluate(bundle, &outcome, &config.fusion, &split, config.label_space)
}

/// Loads the bundle, runs every stage and writes the report if a target is
/// configured. The report is written only after every stage succeeded.
pub fn run_pipeline(config: &PipelineConfig) -> Result<EvalReport> {
    config.validate()?;
    let bundle = DatasetBundle::load(&config.bundle)?;
    let report = run_on_bundle(&bundle, config)?;
    if let Some(target) = &config.report {
        emit_report(&report, target.format, &target.path)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Sidecar {
    Scores {
        method: Method,
        rows: usize,
        cols: usize,
        classes: Vec<String>,
    },
    Probs {
        source: String,
        temperature: Option<f64>,
        rows: usize,
        cols: usize,
        classes: Vec<String>,
    },
}

/// Index written next to the probability matrices by the fuse stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionManifest {
    pub methods: Vec<Method>,
    pub fusion: FusionConfig,
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_sidecar(path: &Path, sidecar: &Sidecar) -> Result<()> {
    let s = serde_json::to_string_pretty(sidecar).map_err(|e| Error::json("sidecar", e))?;
    write_text(path, &s)
}

fn read_sidecar(path: &Path) -> Result<Sidecar> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Error::json(path.display().to_string(), e))
}

fn class_names(catalog: &ClassCatalog) -> Vec<String> {
    catalog.names().map(str::to_owned).collect()
}

fn check_classes(found: &[String], catalog: &ClassCatalog, path: &Path) -> Result<()> {
    if found != class_names(catalog).as_slice() {
        return Err(Error::Validation(format!(
            "{} was computed for a different class list",
            path.display()
        )));
    }
    Ok(())
}

pub fn scores_path(dir: &Path, method: Method) -> PathBuf {
    dir.join(format!("scores_{}.zseb", method.as_str()))
}

pub fn probs_path(dir: &Path, source: ProbSource) -> PathBuf {
    dir.join(format!("probs_{}.zseb", source.as_str()))
}

pub fn write_scores(dir: &Path, scores: &[ScoreMatrix], catalog: &ClassCatalog) -> Result<()> {
    ensure_dir(dir)?;
    for s in scores {
        let path = scores_path(dir, s.method());
        zseb::write_f64_matrix(s.rows(), s.cols(), s.values(), &path)?;
        write_sidecar(
            &path.with_extension("json"),
            &Sidecar::Scores {
                method: s.method(),
                rows: s.rows(),
                cols: s.cols(),
                classes: class_names(catalog),
            },
        )?;
    }
    Ok(())
}

pub fn read_scores(
    dir: &Path,
    methods: &[Method],
    catalog: &ClassCatalog,
) -> Result<Vec<ScoreMatrix>> {
    methods
        .iter()
        .map(|&m| {
            let path = scores_path(dir, m);
            let sidecar_path = path.with_extension("json");
            match read_sidecar(&sidecar_path)? {
                Sidecar::Scores {
                    method, classes, ..
                } if method == m => check_classes(&classes, catalog, &sidecar_path)?,
                _ => {
                    return Err(Error::Validation(format!(
                        "{} does not describe {m} scores",
                        sidecar_path.display()
                    )))
                }
            }
            let (rows, cols, data) = zseb::read_f64_matrix(&path)?;
            ScoreMatrix::new(rows, cols, data, m)
        })
        .collect()
}

fn write_prob(dir: &Path, p: &ProbMatrix, catalog: &ClassCatalog) -> Result<()> {
    let path = probs_path(dir, p.source());
    zseb::write_f64_matrix(p.rows(), p.cols(), p.values(), &path)?;
    write_sidecar(
        &path.with_extension("json"),
        &Sidecar::Probs {
            source: p.source().as_str().to_owned(),
            temperature: p.temperature(),
            rows: p.rows(),
            cols: p.cols(),
            classes: class_names(catalog),
        },
    )
}

fn read_prob(dir: &Path, source: ProbSource, catalog: &ClassCatalog) -> Result<ProbMatrix> {
    let path = probs_path(dir, source);
    let sidecar_path = path.with_extension("json");
    let temperature = match read_sidecar(&sidecar_path)? {
        Sidecar::Probs {
            source: s,
            temperature,
            classes,
            ..
        } if s == source.as_str() => {
            check_classes(&classes, catalog, &sidecar_path)?;
            temperature
        }
        _ => {
            return Err(Error::Validation(format!(
                "{} does not describe {source} probabilities",
                sidecar_path.display()
            )))
        }
    };
    let (rows, cols, data) = zseb::read_f64_matrix(&path)?;
    ProbMatrix::new(rows, cols, data, source, temperature)
}

pub fn write_fusion(
    dir: &Path,
    outcome: &FusionOutcome,
    fusion: &FusionConfig,
    catalog: &ClassCatalog,
) -> Result<()> {
    ensure_dir(dir)?;
    for p in outcome.probs.iter().chain(std::iter::once(&outcome.fused)) {
        write_prob(dir, p, catalog)?;
    }
    let manifest = FusionManifest {
        methods: outcome.methods.clone(),
        fusion: fusion.clone(),
    };
    let s =
        serde_json::to_string_pretty(&manifest).map_err(|e| Error::json("fusion manifest", e))?;
    write_text(&dir.join("fusion.json"), &s)
}

/// Reads what [`write_fusion`] wrote. The fused matrix is taken from disk, not
/// recomputed.
pub fn read_fusion(dir: &Path, catalog: &ClassCatalog) -> Result<(FusionOutcome, FusionConfig)> {
    let path = dir.join("fusion.json");
    let manifest: FusionManifest = serde_json::from_str(&read_text(&path)?)
        .map_err(|e| Error::json(path.display().to_string(), e))?;
    let probs = manifest
        .methods
        .iter()
        .map(|&m| read_prob(dir, ProbSource::Method(m), catalog))
        .collect::<Result<Vec<_>>>()?;
    let fused = read_prob(dir, ProbSource::Fused, catalog)?;
    // Recompute confidences so the outcome is complete; they are not persisted.
    let confidences =
        fuse_calibrated(manifest.methods.clone(), probs.clone(), &manifest.fusion)?.confidences;
    Ok((
        FusionOutcome {
            methods: manifest.methods,
            probs,
            confidences,
            fused,
        },
        manifest.fusion,
    ))
}
