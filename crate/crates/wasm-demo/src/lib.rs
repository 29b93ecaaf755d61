//! WebAssembly bindings for the demo page in `www/`. Every export returns a
//! JSON string that the page plots on a canvas.

pub mod demo;

use serde::Serialize;
use wasm_bindgen::prelude::*;

fn to_json<T: Serialize>(r: demo::DemoResult<T>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

/// Gershgorin bound on the cosine-Gram condition number as coherence grows.
#[wasm_bindgen]
pub fn gershgorin_curve(m: usize, points: usize) -> Result<String, JsError> {
    to_json(demo::gershgorin_curve(m, points))
}

#[wasm_bindgen]
pub fn random_bounds(seed: u32, count: usize, m: usize, dim: usize) -> Result<String, JsError> {
    to_json(demo::random_bounds(seed as u64, count, m, dim))
}

#[wasm_bindgen]
pub fn sqrt_curves(alpha: f64, points: usize) -> Result<String, JsError> {
    to_json(demo::sqrt_curves(alpha, points))
}

#[wasm_bindgen]
pub fn graph_errors(seed: u32, nodes: usize, edge_prob: f64) -> Result<String, JsError> {
    to_json(demo::graph_errors(seed as u64, nodes, edge_prob))
}

#[wasm_bindgen]
pub fn alpha_sweep(seed: u32, topk: usize, dim: usize) -> Result<String, JsError> {
    to_json(demo::alpha_sweep(seed as u64, topk, dim))
}
