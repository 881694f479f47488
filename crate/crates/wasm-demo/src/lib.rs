//! Browser bindings for the semigroup analysis pipeline.
//!
//! Each exported function takes plain strings and numbers and returns JSON
//! text, so the page needs no bundler or generated type definitions. The
//! `*_json` functions hold the logic and are usable from native code.

use qsemigroup::dilation::TimeGrid;
use qsemigroup::matrixcore::Tolerances;
use qsemigroup::models::{builtin, LoadedModel, ModelFile, CATALOG};
use qsemigroup::report::{analyze, conjecture_batch, AnalysisOptions, Sections};
use wasm_bindgen::prelude::*;

/// Largest batch the page may request in one call.
pub const MAX_PROBE_SEEDS: u32 = 200;

/// Builtin name (with or without the `builtin:` prefix) or inline model JSON.
pub fn load_model(spec: &str) -> Result<LoadedModel, String> {
    let tol = Tolerances::default();
    let spec = spec.trim();
    if spec.starts_with('{') {
        let file = ModelFile::parse(spec).map_err(|e| e.to_string())?;
        return file.load("inline", &tol).map_err(|e| e.to_string());
    }
    builtin(spec.strip_prefix("builtin:").unwrap_or(spec), &tol).map_err(|e| e.to_string())
}

fn parse_times(text: &str, what: &str) -> Result<Vec<f64>, String> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("{what}: `{s}` is not a finite number"))
        })
        .collect()
}

/// Full report as JSON.
pub fn analyze_json(spec: &str) -> Result<String, String> {
    let model = load_model(spec)?;
    let report = analyze(&model, &AnalysisOptions::default()).map_err(|e| e.to_string())?;
    Ok(report.to_json())
}

/// Dilation section (identities on `grid` and the `δ(T)` table on `tails`) as JSON.
pub fn dilation_json(spec: &str, grid: &str, tails: &str) -> Result<String, String> {
    let model = load_model(spec)?;
    let grid = parse_times(grid, "grid")?;
    let tails = parse_times(tails, "tails")?;
    let options = AnalysisOptions {
        grid: (!grid.is_empty())
            .then(|| TimeGrid::new(grid))
            .transpose()
            .map_err(|e| e.to_string())?,
        tails: (!tails.is_empty()).then_some(tails),
        sections: Sections {
            dilation: true,
            ..Sections::NONE
        },
        ..AnalysisOptions::default()
    };
    let report = analyze(&model, &options).map_err(|e| e.to_string())?;
    let section = report
        .dilation
        .ok_or_else(|| format!("dilation failed: {}", report.findings.join("; ")))?;
    let value = serde_json::json!({
        "model": report.model.name,
        "dilation": section,
        "findings": report.findings,
    });
    Ok(value.to_string())
}

/// Forward/adjoint K-property batch as JSON.
pub fn probe_json(start: u32, count: u32) -> Result<String, String> {
    if count == 0 || count > MAX_PROBE_SEEDS {
        return Err(format!("seed count must be between 1 and {MAX_PROBE_SEEDS}"));
    }
    let batch =
        conjecture_batch(u64::from(start), u64::from(count), &Tolerances::default()).map_err(|e| e.to_string())?;
    serde_json::to_string(&batch).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn catalog() -> String {
    serde_json::to_string(&CATALOG).expect("names serialize")
}

#[wasm_bindgen]
pub fn analyze_model(spec: &str) -> Result<String, JsError> {
    analyze_json(spec).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn dilation_table(spec: &str, grid: &str, tails: &str) -> Result<String, JsError> {
    dilation_json(spec, grid, tails).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn probe_conjecture(start: u32, count: u32) -> Result<String, JsError> {
    probe_json(start, count).map_err(|e| JsError::new(&e))
}
