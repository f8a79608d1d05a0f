use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::similarity::Method;
use crate::store::{read_text, write_text};

/// A float rounded to six decimal places and always printed with exactly six.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Decimal6(f64);

impl Decimal6 {
    pub fn new(x: f64) -> Self {
        Decimal6((x * 1e6).round() / 1e6)
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl From<f64> for Decimal6 {
    fn from(x: f64) -> Self {
        Decimal6::new(x)
    }
}

impl std::fmt::Display for Decimal6 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.6}", self.0)
    }
}

impl Serialize for Decimal6 {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let raw = serde_json::value::RawValue::from_string(self.to_string())
            .map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Decimal6 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        f64::deserialize(d).map(Decimal6::new)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LabelSpace {
    /// Rank only closed-set classes and score only closed-set samples.
    #[default]
    Closed,
    /// Rank all catalog classes and score every sample.
    Full,
}

/// Metrics for one method, or for the fused output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub method: String,
    pub top1: Decimal6,
    pub top3: Decimal6,
    pub top5: Decimal6,
    pub auroc: Decimal6,
    /// Samples counted by the top-k accuracies.
    pub n_eval: usize,
    /// Closed-set samples (AUROC positives).
    pub n_pos: usize,
    /// Open-set samples (AUROC negatives).
    pub n_neg: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitEcho {
    pub dataset: String,
    pub m: usize,
    pub seed: Option<u64>,
    pub closed: Vec<String>,
    pub open: Vec<String>,
}

/// Everything needed to reproduce a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub methods: Vec<Method>,
    pub scheme: String,
    pub fixed_weights: Option<BTreeMap<Method, Decimal6>>,
    pub temperatures: BTreeMap<Method, Decimal6>,
    pub epsilon: Decimal6,
    pub label_space: LabelSpace,
    pub split: SplitEcho,
    /// Reference count per class, per backbone.
    pub references_per_class: BTreeMap<String, BTreeMap<String, usize>>,
    pub n_test: usize,
    pub provenance: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: ConfigEcho,
    pub methods: Vec<MetricRow>,
    pub fused: MetricRow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            _ => Err(Error::InvalidParameter(format!(
                "unknown report format {s:?}"
            ))),
        }
    }
}

pub const CSV_HEADER: &str = "method,top1,top3,top5,auroc,n_eval,n_pos,n_neg";

impl EvalReport {
    pub fn method(&self, m: Method) -> Option<&MetricRow> {
        self.methods.iter().find(|r| r.method == m.as_str())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::json("report", e))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::json("report", e))
    }

    /// One row per method, then `fused`, under [`CSV_HEADER`].
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in self.methods.iter().chain(std::iter::once(&self.fused)) {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.method, r.top1, r.top3, r.top5, r.auroc, r.n_eval, r.n_pos, r.n_neg
            );
        }
        out
    }

    pub fn render(&self, format: ReportFormat) -> Result<String> {
        match format {
            ReportFormat::Json => self.to_json(),
            ReportFormat::Csv => Ok(self.to_csv()),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&read_text(path.as_ref())?)
    }
}

pub fn emit_report(
    report: &EvalReport,
    format: ReportFormat,
    path: impl AsRef<Path>,
) -> Result<()> {
    write_text(path.as_ref(), &report.render(format)?)
}
