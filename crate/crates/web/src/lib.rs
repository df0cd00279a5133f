//! WebAssembly bindings for the static demo page in `www/`. Each export
//! takes plain numbers and strings and returns a JSON document; the logic
//! lives in [`ops`] so it can be tested natively. Seeds are `u32` so they
//! cross the boundary as JS numbers rather than `BigInt`s.

pub mod ops;

use wasm_bindgen::prelude::*;

fn js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

/// See [`ops::quantizer_curve`].
#[wasm_bindgen]
pub fn quantizer_curve(kind: &str, bit: u8, scale: f64, q: u32, points: usize) -> Result<String, JsError> {
    js(ops::quantizer_curve(kind, bit, scale, q, points))
}

/// See [`ops::calibrated_histogram`].
#[wasm_bindgen]
pub fn calibrated_histogram(data: &str, seed: u32, kind: &str, bit: u8) -> Result<String, JsError> {
    js(ops::calibrated_histogram(data, seed.into(), kind, bit))
}

/// See [`ops::search_trace`].
#[wasm_bindgen]
pub fn search_trace(loss: &str, seed: u32, n: usize, p: usize) -> Result<String, JsError> {
    js(ops::search_trace(loss, seed.into(), n, p))
}
