//! Softmax calibration, per-sample confidence weights and weighted fusion of
//! the per-method probability matrices.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::similarity::{Method, ScoreMatrix};

/// Row sums of a probability matrix must be within this of 1.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;
/// Looser tolerance accepted by [`entropy`] on caller-supplied rows.
pub const ENTROPY_SUM_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_TEMPERATURE: f64 = 100.0;
pub const DEFAULT_EPSILON: f64 = 1e-6;

/// Which matrix a probability matrix came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProbSource {
    Method(Method),
    Fused,
}

impl ProbSource {
    pub fn as_str(self) -> &'static str {
        match self {
            ProbSource::Method(m) => m.as_str(),
            ProbSource::Fused => "fused",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        if s == "fused" {
            Ok(ProbSource::Fused)
        } else {
            s.parse().map(ProbSource::Method)
        }
    }
}

impl fmt::Display for ProbSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// T x N matrix whose rows are probability distributions over the catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    source: ProbSource,
    temperature: Option<f64>,
}

impl ProbMatrix {
    pub fn new(
        rows: usize,
        cols: usize,
        values: Vec<f64>,
        source: ProbSource,
        temperature: Option<f64>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 || rows.checked_mul(cols) != Some(values.len()) {
            return Err(Error::Validation(format!(
                "probability matrix shape {rows}x{cols} does not match {} values",
                values.len()
            )));
        }
        for (r, row) in values.chunks_exact(cols).enumerate() {
            if let Some(x) = row
                .iter()
                .find(|x| !(0.0..=1.0 + ROW_SUM_TOLERANCE).contains(*x))
            {
                return Err(Error::Validation(format!(
                    "row {r} has probability {x} outside [0, 1]"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::Validation(format!("row {r} sums to {sum}")));
            }
        }
        Ok(ProbMatrix {
            rows,
            cols,
            values,
            source,
            temperature,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn source(&self) -> ProbSource {
        self.source
    }

    pub fn temperature(&self) -> Option<f64> {
        self.temperature
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

/// Softmax of `scores * temperature` written into `out`, with the row maximum
/// subtracted before exponentiation.
pub fn softmax_into(scores: &[f64], temperature: f64, out: &mut [f64]) {
    debug_assert_eq!(scores.len(), out.len());
    let max = scores.iter().fold(f64::NEG_INFINITY, |m, &s| m.max(s));
    let shift = temperature * max;
    let mut total = 0.0;
    for (o, &s) in out.iter_mut().zip(scores) {
        *o = (temperature * s - shift).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

pub fn softmax_rows(s: &ScoreMatrix, temperature: f64) -> Result<ProbMatrix> {
    check_temperature(temperature)?;
    let mut values = vec![0.0; s.values().len()];
    for (row, out) in s.iter_rows().zip(values.chunks_exact_mut(s.cols())) {
        softmax_into(row, temperature, out);
    }
    ProbMatrix::new(
        s.rows(),
        s.cols(),
        values,
        ProbSource::Method(s.method()),
        Some(temperature),
    )
}

fn check_temperature(t: f64) -> Result<()> {
    if t.is_finite() && t > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "temperature must be positive and finite, got {t}"
        )))
    }
}

/// Shannon entropy in nats; `0 * ln 0` counts as 0.
pub fn entropy(p: &[f64]) -> Result<f64> {
    if let Some(x) = p.iter().find(|x| **x < 0.0 || !x.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "probability {x} is negative or non-finite"
        )));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > ENTROPY_SUM_TOLERANCE {
        return Err(Error::InvalidParameter(format!(
            "probabilities sum to {sum}, not 1"
        )));
    }
    Ok(entropy_unchecked(p))
}

fn entropy_unchecked(p: &[f64]) -> f64 {
    let h: f64 = p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum();
    h.max(0.0)
}

/// How a per-sample confidence is derived from a probability row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceScheme {
    /// Largest probability in the row.
    Max,
    /// `1 / (H + epsilon)`.
    InvEntropy,
    /// `exp(-H)`.
    NegExpEntropy,
}

impl ConfidenceScheme {
    pub const ALL: [ConfidenceScheme; 3] = [
        ConfidenceScheme::Max,
        ConfidenceScheme::InvEntropy,
        ConfidenceScheme::NegExpEntropy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ConfidenceScheme::Max => "max",
            ConfidenceScheme::InvEntropy => "inv_entropy",
            ConfidenceScheme::NegExpEntropy => "neg_exp_entropy",
        }
    }

    /// Confidence of a single, already validated, probability row.
    pub fn weight(self, row: &[f64], epsilon: f64) -> f64 {
        match self {
            ConfidenceScheme::Max => row.iter().fold(0.0, |m: f64, &x| m.max(x)),
            ConfidenceScheme::InvEntropy => 1.0 / (entropy_unchecked(row) + epsilon),
            ConfidenceScheme::NegExpEntropy => (-entropy_unchecked(row)).exp(),
        }
    }
}

/// One non-negative weight per test sample for one method.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceVector {
    pub values: Vec<f64>,
    pub scheme: ConfidenceScheme,
}

pub fn confidence(
    p: &ProbMatrix,
    scheme: ConfidenceScheme,
    epsilon: f64,
) -> Result<ConfidenceVector> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let values = p.iter_rows().map(|r| scheme.weight(r, epsilon)).collect();
    Ok(ConfidenceVector { values, scheme })
}

/// Fusion weighting: a confidence scheme, or constant per-method weights.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionScheme {
    Max,
    #[default]
    InvEntropy,
    NegExpEntropy,
    /// Constant weight per method, e.g. 1:1:1 or 3:3:4.
    Fixed(BTreeMap<Method, f64>),
}

impl FusionScheme {
    /// Equal weights for all three methods.
    pub fn equal() -> Self {
        FusionScheme::Fixed(Method::ALL.iter().map(|&m| (m, 1.0)).collect())
    }

    /// 3:3:4, with the larger weight on the self-distilled image-image method.
    pub fn three_three_four() -> Self {
        FusionScheme::Fixed(
            [
                (Method::TextImageClip, 3.0),
                (Method::ImageImageClip, 3.0),
                (Method::ImageImageDino, 4.0),
            ]
            .into_iter()
            .collect(),
        )
    }

    pub fn confidence_scheme(&self) -> Option<ConfidenceScheme> {
        match self {
            FusionScheme::Max => Some(ConfidenceScheme::Max),
            FusionScheme::InvEntropy => Some(ConfidenceScheme::InvEntropy),
            FusionScheme::NegExpEntropy => Some(ConfidenceScheme::NegExpEntropy),
            FusionScheme::Fixed(_) => None,
        }
    }

    pub fn label(&self) -> String {
        match self {
            FusionScheme::Fixed(w) => {
                let parts: Vec<String> = w.values().map(|x| format!("{x}")).collect();
                format!("fixed({})", parts.join(":"))
            }
            other => other.confidence_scheme().unwrap().as_str().to_owned(),
        }
    }
}

fn default_temperatures() -> BTreeMap<Method, f64> {
    Method::ALL
        .iter()
        .map(|&m| (m, DEFAULT_TEMPERATURE))
        .collect()
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionConfig {
    #[serde(default)]
    pub scheme: FusionScheme,
    /// Softmax temperature per method; missing methods use 100.
    #[serde(default = "default_temperatures")]
    pub temperatures: BTreeMap<Method, f64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            scheme: FusionScheme::default(),
            temperatures: default_temperatures(),
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl FusionConfig {
    pub fn with_scheme(scheme: FusionScheme) -> Self {
        FusionConfig {
            scheme,
            ..Self::default()
        }
    }

    pub fn temperature(&self, m: Method) -> f64 {
        self.temperatures
            .get(&m)
            .copied()
            .unwrap_or(DEFAULT_TEMPERATURE)
    }

    pub fn validate(&self) -> Result<()> {
        for (m, &t) in &self.temperatures {
            check_temperature(t).map_err(|_| {
                Error::Config(format!("temperature for {m} must be positive, got {t}"))
            })?;
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::Config(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if let FusionScheme::Fixed(w) = &self.scheme {
            if w.values().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::Config("fixed weights must be non-negative".into()));
            }
            if w.values().sum::<f64>() <= 0.0 {
                return Err(Error::Config(
                    "fixed weights must have a positive sum".into(),
                ));
            }
        }
        Ok(())
    }

    /// Resolved fixed weights for `methods`, in that order.
    pub fn fixed_weights(&self, methods: &[Method]) -> Result<Option<Vec<f64>>> {
        let FusionScheme::Fixed(w) = &self.scheme else {
            return Ok(None);
        };
        methods
            .iter()
            .map(|m| {
                w.get(m)
                    .copied()
                    .ok_or_else(|| Error::Config(format!("fixed weights give no weight for {m}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }
}

/// Weights handed to [`fuse`]: per-sample confidences or one constant per method.
#[derive(Debug, Clone, Copy)]
pub enum FusionWeights<'a> {
    PerSample(&'a [ConfidenceVector]),
    Fixed(&'a [f64]),
}

/// Convex combination of per-method probability rows. Each row's weights are
/// normalized to sum to 1 before mixing.
pub fn fuse(probs: &[&ProbMatrix], weights: FusionWeights<'_>) -> Result<ProbMatrix> {
    let first = probs
        .first()
        .ok_or_else(|| Error::InvalidParameter("nothing to fuse".into()))?;
    let (rows, cols) = (first.rows(), first.cols());
    if let Some(p) = probs.iter().find(|p| p.rows() != rows || p.cols() != cols) {
        return Err(Error::DimensionMismatch(format!(
            "cannot fuse {}x{} with {}x{} ({})",
            rows,
            cols,
            p.rows(),
            p.cols(),
            p.source()
        )));
    }
    let k = probs.len();
    match weights {
        FusionWeights::PerSample(w) => {
            if w.len() != k || w.iter().any(|c| c.values.len() != rows) {
                return Err(Error::DimensionMismatch(format!(
                    "need {k} confidence vectors of length {rows}"
                )));
            }
        }
        FusionWeights::Fixed(w) => {
            if w.len() != k {
                return Err(Error::DimensionMismatch(format!(
                    "need {k} fixed weights, got {}",
                    w.len()
                )));
            }
        }
    }

    let mut values = Vec::with_capacity(rows * cols);
    let mut row_w = vec![0.0; k];
    for t in 0..rows {
        for (j, slot) in row_w.iter_mut().enumerate() {
            *slot = match weights {
                FusionWeights::PerSample(w) => w[j].values[t],
                FusionWeights::Fixed(w) => w[j],
            };
        }
        if row_w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "row {t} has a negative or non-finite weight"
            )));
        }
        let total: f64 = row_w.iter().sum();
        if total <= 0.0 {
            return Err(Error::DegenerateWeights { row: t });
        }
        row_w.iter_mut().for_each(|x| *x /= total);

        for c in 0..cols {
            let mut acc = row_w[0] * probs[0].get(t, c);
            for j in 1..k {
                acc += row_w[j] * probs[j].get(t, c);
            }
            values.push(acc);
        }
    }
    ProbMatrix::new(rows, cols, values, ProbSource::Fused, None)
}

/// Calibrated inputs and fused output of one fusion run.
#[derive(Debug, Clone)]
pub struct FusionOutcome {
    pub methods: Vec<Method>,
    pub probs: Vec<ProbMatrix>,
    /// Per-sample confidences, empty for fixed weighting.
    pub confidences: Vec<ConfidenceVector>,
    pub fused: ProbMatrix,
}

/// Softmax-calibrates each score matrix with its configured temperature,
/// derives weights and fuses.
pub fn calibrate_and_fuse(scores: &[ScoreMatrix], config: &FusionConfig) -> Result<FusionOutcome> {
    config.validate()?;
    let methods: Vec<Method> = scores.iter().map(ScoreMatrix::method).collect();
    let probs = scores
        .iter()
        .map(|s| softmax_rows(s, config.temperature(s.method())))
        .collect::<Result<Vec<_>>>()?;
    fuse_calibrated(methods, probs, config)
}

/// Weights and fuses probability matrices that are already calibrated.
pub fn fuse_calibrated(
    methods: Vec<Method>,
    probs: Vec<ProbMatrix>,
    config: &FusionConfig,
) -> Result<FusionOutcome> {
    config.validate()?;
    let refs: Vec<&ProbMatrix> = probs.iter().collect();
    let (fused, confidences) = match config.fixed_weights(&methods)? {
        Some(w) => (fuse(&refs, FusionWeights::Fixed(&w))?, Vec::new()),
        None => {
            let scheme = config.scheme.confidence_scheme().unwrap();
            let conf = probs
                .iter()
                .map(|p| confidence(p, scheme, config.epsilon))
                .collect::<Result<Vec<_>>>()?;
            (fuse(&refs, FusionWeights::PerSample(&conf))?, conf)
        }
    };
    Ok(FusionOutcome {
        methods,
        probs,
        confidences,
        fused,
    })
}
