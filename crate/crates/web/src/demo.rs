//! The demo operations as plain Rust, so they can be tested natively.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use zsfuse::fusion::{calibrate_and_fuse, entropy, ConfidenceScheme, DEFAULT_EPSILON};
use zsfuse::pipeline::run_on_bundle;
use zsfuse::synth::DEFAULT_REFERENCE_NOISE_RATIO;
use zsfuse::{
    generate_synthetic_bundle, FusionConfig, FusionScheme, Method, PipelineConfig, ScoreMatrix,
    SynthParams,
};

/// Accepts the three confidence schemes by name plus `1:1:1` and `3:3:4`.
pub fn parse_scheme(name: &str) -> Result<FusionScheme, String> {
    match name {
        "max" => Ok(FusionScheme::Max),
        "inv_entropy" => Ok(FusionScheme::InvEntropy),
        "neg_exp_entropy" => Ok(FusionScheme::NegExpEntropy),
        "1:1:1" => Ok(FusionScheme::equal()),
        "3:3:4" => Ok(FusionScheme::three_three_four()),
        other => Err(format!("unknown scheme {other:?}")),
    }
}

fn fusion_config(scheme: &str, temperature: f64) -> Result<FusionConfig, String> {
    let mut cfg = FusionConfig::with_scheme(parse_scheme(scheme)?);
    cfg.temperatures = Method::ALL.iter().map(|&m| (m, temperature)).collect();
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

#[derive(Debug, Serialize)]
pub struct MethodView {
    pub method: &'static str,
    pub probs: Vec<f64>,
    pub entropy: f64,
    /// Absent for fixed weights.
    pub confidence: Option<f64>,
    /// Share of this method in the fused row.
    pub weight: f64,
}

#[derive(Debug, Serialize)]
pub struct FusedSample {
    pub methods: Vec<MethodView>,
    pub fused: Vec<f64>,
    pub predicted: usize,
}

fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold(0, |best, (i, &x)| if x > row[best] { i } else { best })
}

pub fn fuse_sample(
    scores: &[Vec<f64>],
    temperature: f64,
    scheme: &str,
) -> Result<FusedSample, String> {
    if scores.len() != Method::ALL.len() {
        return Err(format!("expected 3 score rows, got {}", scores.len()));
    }
    let cols = scores[0].len();
    if cols < 2 || scores.iter().any(|r| r.len() != cols) {
        return Err("score rows must share a length of at least 2".into());
    }
    let cfg = fusion_config(scheme, temperature)?;
    let matrices = scores
        .iter()
        .zip(Method::ALL)
        .map(|(row, m)| ScoreMatrix::new(1, cols, row.clone(), m))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let outcome = calibrate_and_fuse(&matrices, &cfg).map_err(|e| e.to_string())?;

    let raw: Vec<f64> = match cfg
        .fixed_weights(&outcome.methods)
        .map_err(|e| e.to_string())?
    {
        Some(w) => w,
        None => outcome.confidences.iter().map(|c| c.values[0]).collect(),
    };
    let total: f64 = raw.iter().sum();
    let fixed = outcome.confidences.is_empty();
    let methods = outcome
        .methods
        .iter()
        .zip(&outcome.probs)
        .zip(&raw)
        .map(|((m, p), &w)| {
            Ok(MethodView {
                method: m.as_str(),
                probs: p.row(0).to_vec(),
                entropy: entropy(p.row(0)).map_err(|e| e.to_string())?,
                confidence: (!fixed).then_some(w),
                weight: w / total,
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    let fused = outcome.fused.row(0).to_vec();
    Ok(FusedSample {
        predicted: argmax(&fused),
        methods,
        fused,
    })
}

#[derive(Debug, Serialize)]
pub struct Curves {
    pub p_max: Vec<f64>,
    pub entropy: Vec<f64>,
    /// Keyed by scheme name.
    pub confidence: BTreeMap<&'static str, Vec<f64>>,
}

/// Rows put `p` on one class and spread `1 - p` evenly over the rest.
pub fn confidence_curves(n_classes: usize, points: usize) -> Result<Curves, String> {
    if !(2..=1000).contains(&n_classes) || !(2..=2000).contains(&points) {
        return Err("need 2..=1000 classes and 2..=2000 points".into());
    }
    let lo = 1.0 / n_classes as f64;
    let mut curves = Curves {
        p_max: Vec::with_capacity(points),
        entropy: Vec::with_capacity(points),
        confidence: ConfidenceScheme::ALL
            .iter()
            .map(|s| (s.as_str(), Vec::with_capacity(points)))
            .collect(),
    };
    let mut row = vec![0.0; n_classes];
    for i in 0..points {
        let p = if i + 1 == points {
            1.0
        } else {
            lo + (1.0 - lo) * i as f64 / (points - 1) as f64
        };
        row[0] = p;
        row[1..].fill((1.0 - p) / (n_classes - 1) as f64);
        curves.p_max.push(p);
        curves
            .entropy
            .push(entropy(&row).map_err(|e| e.to_string())?);
        for s in ConfidenceScheme::ALL {
            curves
                .confidence
                .get_mut(s.as_str())
                .unwrap()
                .push(s.weight(&row, DEFAULT_EPSILON));
        }
    }
    Ok(curves)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkParams {
    pub classes: usize,
    pub samples_per_class: usize,
    pub dim: usize,
    pub noise: [f64; 3],
    pub refs: usize,
    #[serde(default = "default_ratio")]
    pub ref_noise_ratio: f64,
    pub scheme: String,
    pub temperature: f64,
    #[serde(default = "one")]
    pub seeds: u64,
    #[serde(default)]
    pub first_seed: u64,
}

fn default_ratio() -> f64 {
    DEFAULT_REFERENCE_NOISE_RATIO
}

fn one() -> u64 {
    1
}

#[derive(Debug, Serialize)]
pub struct BenchmarkRow {
    pub method: String,
    pub top1: f64,
    pub top3: f64,
    pub top5: f64,
    pub auroc: f64,
}

#[derive(Debug, Serialize)]
pub struct BenchmarkResult {
    pub seeds: u64,
    pub closed_classes: usize,
    /// Per method then `fused`, averaged over seeds.
    pub rows: Vec<BenchmarkRow>,
}

pub fn run_benchmark(p: &BenchmarkParams) -> Result<BenchmarkResult, String> {
    if p.classes > 100 || p.samples_per_class > 500 || p.dim > 512 || p.refs > 20 {
        return Err("keep classes <= 100, samples <= 500, dim <= 512, refs <= 20".into());
    }
    if !(1..=50).contains(&p.seeds) {
        return Err("seeds must be in 1..=50".into());
    }
    let mut config = PipelineConfig::new("synthetic");
    config.fusion = fusion_config(&p.scheme, p.temperature)?;

    let mut rows: Vec<BenchmarkRow> = Vec::new();
    let mut closed_classes = 0;
    let scale = 1.0 / p.seeds as f64;
    for seed in p.first_seed..p.first_seed + p.seeds {
        let bundle = generate_synthetic_bundle(&SynthParams {
            n_classes: p.classes,
            samples_per_class: p.samples_per_class,
            dim: p.dim,
            noise: p.noise,
            refs_per_class: p.refs,
            seed,
            reference_noise_ratio: p.ref_noise_ratio,
            closed: None,
        })
        .map_err(|e| e.to_string())?;
        closed_classes = bundle.catalog.closed_count();
        let report = run_on_bundle(&bundle, &config).map_err(|e| e.to_string())?;
        for (i, r) in report.methods.iter().chain([&report.fused]).enumerate() {
            if rows.len() <= i {
                rows.push(BenchmarkRow {
                    method: r.method.clone(),
                    top1: 0.0,
                    top3: 0.0,
                    top5: 0.0,
                    auroc: 0.0,
                });
            }
            let row = &mut rows[i];
            row.top1 += r.top1.get() * scale;
            row.top3 += r.top3.get() * scale;
            row.top5 += r.top5.get() * scale;
            row.auroc += r.auroc.get() * scale;
        }
    }
    Ok(BenchmarkResult {
        seeds: p.seeds,
        closed_classes,
        rows,
    })
}
