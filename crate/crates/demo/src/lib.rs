//! Browser bindings: interactive views of the sharp-well analytics.
//!
//! Every export returns flat `Float64Array`s so the page can plot without a
//! serialization layer. Errors come back as strings.

use pairwell_core::resonance::{find_bound_states, transmission_coefficient};
use pairwell_core::{sauter_well_potential, WellParams, SPEED_OF_LIGHT};
use wasm_bindgen::prelude::*;

fn sharp(v1: f64, v2: f64, d: f64) -> Result<WellParams, String> {
    WellParams::sharp(v1, v2, d).map_err(|e| e.to_string())
}

fn linspace(a: f64, b: f64, n: usize) -> impl Iterator<Item = f64> {
    let step = if n > 1 { (b - a) / (n - 1) as f64 } else { 0.0 };
    (0..n).map(move |i| a + step * i as f64)
}

/// Transmission T(E) on `n` points in `[e_min, e_max]` (c² units), as
/// interleaved `[E0, T0, E1, T1, …]`. Energies outside the overlap window
/// are skipped.
#[wasm_bindgen]
pub fn transmission_curve(
    v1: f64,
    v2: f64,
    d: f64,
    e_min: f64,
    e_max: f64,
    n: usize,
) -> Result<Vec<f64>, String> {
    let p = sharp(v1, v2, d)?;
    let mut out = Vec::with_capacity(2 * n);
    for e in linspace(e_min, e_max, n) {
        if let Ok(t) = transmission_coefficient(e, &p) {
            out.push(e);
            out.push(t);
        }
    }
    Ok(out)
}

/// Bound levels against barrier height for V1 on `n` points in
/// `[v1_min, v1_max]`. Each record is `[V1, k, E_1 … E_k]` with levels
/// ordered from the highest energy down.
#[wasm_bindgen]
pub fn levels_vs_height(
    v2: f64,
    d: f64,
    v1_min: f64,
    v1_max: f64,
    n: usize,
) -> Result<Vec<f64>, String> {
    let mut out = Vec::new();
    for v1 in linspace(v1_min, v1_max, n) {
        let p = sharp(v1, v2, d)?;
        // Past 2c² the levels turn into resonances; record none.
        let levels = find_bound_states(&p).unwrap_or_default();
        out.push(v1);
        out.push(levels.len() as f64);
        out.extend(levels.iter().rev().map(|s| s.energy.re));
    }
    Ok(out)
}

/// The smooth asymmetric well U(z) in c² units on `n` points of
/// `[z_min, z_max]` (a.u.), interleaved `[z0, U0, …]`. `w_c` is the edge
/// width in units of 1/c.
#[wasm_bindgen]
pub fn potential_profile(
    v1: f64,
    v2: f64,
    d: f64,
    w_c: f64,
    z_min: f64,
    z_max: f64,
    n: usize,
) -> Result<Vec<f64>, String> {
    let p = WellParams::new(v1, v2, w_c / SPEED_OF_LIGHT, d, SPEED_OF_LIGHT)
        .map_err(|e| e.to_string())?;
    let mut out = Vec::with_capacity(2 * n);
    for z in linspace(z_min, z_max, n) {
        out.push(z);
        out.push(sauter_well_potential(z, &p).map_err(|e| e.to_string())? / p.c2());
    }
    Ok(out)
}
