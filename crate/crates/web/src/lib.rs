//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every exported function takes and returns JSON strings. The plain Rust
//! functions in [`api`] carry the logic so they can be tested natively.

use wasm_bindgen::prelude::*;

pub mod api;

fn js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

/// Reference design parameters.
#[wasm_bindgen(js_name = referenceParams)]
pub fn reference_params() -> String {
    api::reference_params()
}

/// Boundary polyline of a design: `[[x, y], …]` in metres.
#[wasm_bindgen]
pub fn outline(params: &str, density: usize) -> Result<String, JsError> {
    js(api::outline(params, density))
}

/// A trained surrogate loaded from its model file.
#[wasm_bindgen]
pub struct Surrogate(api::Surrogate);

#[wasm_bindgen]
impl Surrogate {
    #[wasm_bindgen(constructor)]
    pub fn new(model_json: &str) -> Result<Surrogate, JsError> {
        api::Surrogate::new(model_json).map(Surrogate).map_err(|e| JsError::new(&e))
    }

    /// `{freqs_hz, f52, in_training_box}`
    pub fn predict(&self, params: &str) -> Result<String, JsError> {
        js(self.0.predict(params))
    }

    /// Optimizes the outline of `start` towards `f5/f2 = alpha`.
    #[wasm_bindgen(js_name = optimizeRatio)]
    pub fn optimize_ratio(&self, start: &str, alpha: f64) -> Result<String, JsError> {
        js(self.0.optimize_ratio(start, alpha))
    }
}
