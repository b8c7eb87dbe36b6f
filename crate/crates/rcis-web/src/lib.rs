//! Browser demo bindings. The plain functions do the work and are testable natively; the
//! `#[wasm_bindgen]` wrappers only convert errors.

use nalgebra::DVector;
use wasm_bindgen::prelude::*;

use rcis::ellipsoid::{box_halfspaces, BoxSet};
use rcis::synthesis::{synthesize_terminal_pair_with, SynthesisConstraints, SynthesisSettings};
use rcis::vehicle::{build_vertex_model, control_model_derivatives, magic_formula, GammaBounds, PacejkaCoeffs, VehicleParams};

/// Terminal family at a lane centre: returns `[a5, a6, x6₀, x5₀, x6₁, x5₁, …]`, the `(x₅, x₆)`
/// half-extents followed by `points` samples of the projection boundary (relative to the
/// equilibrium).
pub fn terminal_projection_points(lateral_room: f64, d_lat: f64, d_lon: f64, points: usize) -> Result<Vec<f64>, String> {
    if !(lateral_room > 0.0) || !(d_lat >= 0.0) || !(d_lon >= 0.0) || points < 3 {
        return Err("lateral room must be positive, bounds nonnegative, points ≥ 3".into());
    }
    let p = VehicleParams::default();
    let gb = GammaBounds::envelope(p.v_bar, 5.0, 0.05, 0.2);
    let model = build_vertex_model(&p, &gb, 0.1);
    let rows = box_halfspaces(&BoxSet::symmetric(&[5.0, 2.0, 0.05, 0.2, lateral_room, 100.0]));
    let cons = SynthesisConstraints::new(&model, rows, BoxSet::symmetric(&[0.5, 2.0]), BoxSet::symmetric(&[d_lat, d_lon]))
        .map_err(|e| e.to_string())?;
    let st = SynthesisSettings { contraction: 0.995, ..SynthesisSettings::default() };
    let pair = synthesize_terminal_pair_with(&model, &cons, &st).map_err(|e| e.to_string())?;
    let pr = pair.terminal.projection(&[4, 5]).map_err(|e| e.to_string())?;
    let s = pr.shape();
    let mut out = vec![s[(0, 0)].sqrt(), s[(1, 1)].sqrt()];
    let eig = s.clone().symmetric_eigen();
    for k in 0..points {
        let th = std::f64::consts::TAU * k as f64 / points as f64;
        let (a, b) = (eig.eigenvalues[0].max(0.0).sqrt() * th.cos(), eig.eigenvalues[1].max(0.0).sqrt() * th.sin());
        let v = &eig.eigenvectors;
        let x5 = v[(0, 0)] * a + v[(0, 1)] * b;
        let x6 = v[(1, 0)] * a + v[(1, 1)] * b;
        out.push(x6);
        out.push(x5);
    }
    Ok(out)
}

/// Magic-formula force over slip `[−max_slip, max_slip]` at `n` points: `[k₀, F₀, k₁, F₁, …]`.
pub fn magic_curve_points(s: f64, c: f64, d: f64, e: f64, max_slip: f64, n: usize) -> Vec<f64> {
    let coeffs = PacejkaCoeffs { s, c, d, e, sh: 0.0, sv: 0.0 };
    let n = n.max(2);
    let mut out = Vec::with_capacity(2 * n);
    for k in 0..n {
        let slip = -max_slip + 2.0 * max_slip * k as f64 / (n - 1) as f64;
        out.push(slip);
        out.push(magic_formula(slip, &coeffs));
    }
    out
}

/// Forward-Euler rollout of the 6-state control model under a constant input; row-major
/// `(steps + 1) × 6`.
pub fn rollout_states(x0: &[f64], delta: f64, accel: f64, ts: f64, steps: usize) -> Result<Vec<f64>, String> {
    if x0.len() != 6 {
        return Err(format!("expected 6 states, got {}", x0.len()));
    }
    let p = VehicleParams::default();
    let mut x = DVector::from_column_slice(x0);
    let mut out = x0.to_vec();
    for _ in 0..steps {
        let dx = control_model_derivatives(&x, &[delta, accel], &[0.0, 0.0], &p).map_err(|e| e.to_string())?;
        x += dx * ts;
        out.extend(x.iter());
    }
    Ok(out)
}

#[wasm_bindgen]
pub fn terminal_projection(lateral_room: f64, d_lat: f64, d_lon: f64, points: usize) -> Result<Vec<f64>, JsError> {
    terminal_projection_points(lateral_room, d_lat, d_lon, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn magic_curve(s: f64, c: f64, d: f64, e: f64, max_slip: f64, n: usize) -> Vec<f64> {
    magic_curve_points(s, c, d, e, max_slip, n)
}

#[wasm_bindgen]
pub fn rollout(x0: Vec<f64>, delta: f64, accel: f64, ts: f64, steps: usize) -> Result<Vec<f64>, JsError> {
    rollout_states(&x0, delta, accel, ts, steps).map_err(|e| JsError::new(&e))
}
