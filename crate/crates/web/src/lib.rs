//! wasm-bindgen surface for the static demo page in `www/`.
//!
//! Every export takes plain values and returns a JSON string, either the
//! result object or `{"error": "..."}`, so the same functions are testable
//! natively.

use serde::Serialize;
use serde_json::{json, Value};
use symreg::corpus::{builtin_templates, find};
use symreg::datagen::{add_noise, generate_table, DataTable};
use symreg::expr::{parse_text, tokenize, TextParseError, Vocab};
use symreg::fit::{fit_parameters, FitConfig};
use symreg::rng;
use wasm_bindgen::prelude::*;

const SEQ_LEN: usize = 48;

fn respond<T: Serialize>(r: Result<T, String>) -> String {
    let v = match r {
        Ok(v) => serde_json::to_value(v).unwrap_or_else(|e| json!({ "error": e.to_string() })),
        Err(e) => json!({ "error": e }),
    };
    v.to_string()
}

fn table_json(t: &DataTable) -> Value {
    let cols: Vec<Vec<f64>> = (0..t.d()).map(|j| t.column(j).collect()).collect();
    json!({ "d": t.d(), "x": cols, "y": t.y(), "csv": t.to_csv() })
}

/// Built-in templates as `[{id, equation, vars, params}]`.
#[wasm_bindgen]
pub fn templates() -> String {
    let list: Vec<Value> = builtin_templates()
        .iter()
        .map(|t| {
            json!({
                "id": t.id,
                "equation": t.expr.canonical(),
                "vars": t.n_vars,
                "params": t.n_params(),
            })
        })
        .collect();
    respond(Ok(list))
}

pub fn sample_table_value(id: &str, noise: f64, rows: usize, seed: u64) -> Result<Value, String> {
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(format!("noise must be a non-negative number, got {noise}"));
    }
    let templates = builtin_templates();
    let t = find(&templates, id).ok_or_else(|| format!("unknown template `{id}`"))?;
    let mut r = rng::stream(seed, 0);
    let params = t.sample_parameters(&mut r);
    let clean = generate_table(t, &params, rows, &mut r).map_err(|e| e.to_string())?;
    let noisy = add_noise(&clean, noise, &mut r);
    Ok(json!({
        "id": t.id,
        "equation": t.expr.canonical(),
        "params": params,
        "table": table_json(&noisy),
    }))
}

/// Draws parameters and `rows` observations from a template, then adds
/// noise at relative level `noise`.
#[wasm_bindgen]
pub fn sample_table(id: &str, noise: f64, rows: usize, seed: u64) -> String {
    respond(sample_table_value(id, noise, rows, seed))
}

pub fn fit_table_value(equation: &str, csv: &str) -> Result<Value, String> {
    let expr = parse_text(equation).map_err(|e| e.to_string())?;
    let table = DataTable::from_csv(csv).map_err(|e| e.to_string())?;
    let fit = fit_parameters(&expr, &table, &FitConfig::default()).map_err(|e| e.to_string())?;
    if !fit.sse.is_finite() {
        return Err("the equation is non-finite on this table".into());
    }
    let fitted: Vec<Option<f64>> = table
        .rows()
        .map(|(x, _)| expr.evaluate(x, &fit.params).ok().filter(|v| v.is_finite()))
        .collect();
    Ok(json!({
        "equation": expr.canonical(),
        "params": fit.params,
        "sse": fit.sse,
        "rmse": fit.rmse,
        "converged": fit.converged,
        "fitted": fitted,
        "table": table_json(&table),
    }))
}

/// Least-squares fit of an equation's parameters to a CSV table
/// (header `x1,...,xd,y`).
#[wasm_bindgen]
pub fn fit_table(equation: &str, csv: &str) -> String {
    respond(fit_table_value(equation, csv))
}

pub fn explore_value(text: &str) -> Result<Value, String> {
    let vocab = Vocab::default();
    match parse_text(text) {
        Ok(expr) => {
            let seq = tokenize(&expr, &vocab, SEQ_LEN).map_err(|e| e.to_string())?;
            let indices: Vec<usize> = seq
                .as_slice()
                .iter()
                .map(|&t| vocab.index_of(t).expect("tokenize checks the vocabulary"))
                .collect();
            Ok(json!({
                "ok": true,
                "canonical": expr.canonical(),
                "tokens": seq.as_slice().iter().map(|t| t.to_string()).collect::<Vec<_>>(),
                "indices": indices,
                "vocab": vocab.tokens().iter().map(|t| t.to_string()).collect::<Vec<_>>(),
                "seq_len": SEQ_LEN,
                "params": expr.param_count(),
                "vars": expr.var_count(),
                "depth": expr.depth(),
            }))
        }
        Err(TextParseError::Parse(e)) => Ok(json!({
            "ok": false,
            "position": e.position,
            "message": e.to_string(),
        })),
        Err(e) => Ok(json!({ "ok": false, "position": null, "message": e.to_string() })),
    }
}

/// Parses space-separated tokens; on success returns the canonical form and
/// the one-hot layout, otherwise the 1-based failing position.
#[wasm_bindgen]
pub fn explore(text: &str) -> String {
    respond(explore_value(text))
}
