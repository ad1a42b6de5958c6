//! Browser bindings for three interactive views of the toolkit:
//!
//! * [`relaxation_fit`] — simulate a noisy T2*, T1ρ or VFA-T1 signal and fit it;
//! * [`b1_correction`] — AFI flip-angle mapping and its effect on VFA T1;
//! * [`phantom_slice_rgba`] — render one slice of a synthetic phantom.
//!
//! The computations live in [`explore`] so they can be tested natively; the
//! `#[wasm_bindgen]` functions only translate errors and serialize results.

pub mod explore;

use wasm_bindgen::prelude::*;

fn js_err(e: meniscus::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("demo results serialize")
}

/// Simulates and fits one relaxation curve; returns a JSON [`explore::FitView`].
///
/// `kind` is `t2star`, `t1rho` or `vfa`; `t` is the relaxation time in ms.
#[wasm_bindgen]
pub fn relaxation_fit(kind: &str, s0: f64, t: f64, b1: f64, sigma: f64, seed: u32) -> Result<String, JsError> {
    explore::relaxation_fit(kind, s0, t, b1, sigma, u64::from(seed))
        .map(|v| to_json(&v))
        .map_err(js_err)
}

/// AFI-based B1 estimate and VFA T1 with and without correction; returns a
/// JSON [`explore::B1View`].
#[wasm_bindgen]
pub fn b1_correction(true_b1: f64, t1: f64, sigma: f64, seed: u32) -> Result<String, JsError> {
    explore::b1_correction(true_b1, t1, sigma, u64::from(seed))
        .map(|v| to_json(&v))
        .map_err(js_err)
}

/// Side length in pixels of the slices returned by [`phantom_slice_rgba`].
#[wasm_bindgen]
pub fn phantom_size() -> usize {
    explore::PHANTOM_GRID[0]
}

/// Number of slices of the demo phantom.
#[wasm_bindgen]
pub fn phantom_slices() -> usize {
    explore::PHANTOM_GRID[2]
}

/// RGBA pixels of slice `z` of the phantom with seed `seed`. `layer` is
/// `subtraction`, `t1`, `t1rho`, `t2star` or `b1`; `overlay` outlines the
/// meniscus masks.
#[wasm_bindgen]
pub fn phantom_slice_rgba(seed: u32, z: usize, layer: &str, overlay: bool) -> Result<Vec<u8>, JsError> {
    explore::phantom_slice(u64::from(seed), z, layer, overlay)
        .map(|v| v.rgba)
        .map_err(js_err)
}

/// Value range of a rendered layer slice as JSON `{"min": …, "max": …}`.
#[wasm_bindgen]
pub fn phantom_slice_range(seed: u32, z: usize, layer: &str) -> Result<String, JsError> {
    explore::phantom_slice(u64::from(seed), z, layer, false)
        .map(|v| to_json(&serde_json::json!({ "min": v.min, "max": v.max })))
        .map_err(js_err)
}
