//! Browser demo for zsfuse. Each export takes plain values or a JSON string and
//! returns JSON; the same functions are callable natively from [`demo`].

use wasm_bindgen::prelude::*;

pub mod demo;

fn to_js<T: serde::Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let value = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

/// Fuses one test sample. `scores_json` is `[[...], [...], [...]]`, one cosine
/// row per method over the same classes.
#[wasm_bindgen(js_name = fuseSample)]
pub fn fuse_sample(scores_json: &str, temperature: f64, scheme: &str) -> Result<String, JsError> {
    let scores: Vec<Vec<f64>> =
        serde_json::from_str(scores_json).map_err(|e| JsError::new(&e.to_string()))?;
    to_js(demo::fuse_sample(&scores, temperature, scheme))
}

/// Confidence of each scheme as the top probability of an `n_classes` row
/// sweeps from uniform to one-hot.
#[wasm_bindgen(js_name = confidenceCurves)]
pub fn confidence_curves(n_classes: usize, points: usize) -> Result<String, JsError> {
    to_js(demo::confidence_curves(n_classes, points))
}

/// Runs the synthetic benchmark; `params_json` holds [`demo::BenchmarkParams`].
#[wasm_bindgen(js_name = runBenchmark)]
pub fn run_benchmark(params_json: &str) -> Result<String, JsError> {
    let params: demo::BenchmarkParams =
        serde_json::from_str(params_json).map_err(|e| JsError::new(&e.to_string()))?;
    to_js(demo::run_benchmark(&params))
}
