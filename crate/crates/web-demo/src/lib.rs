//! Browser bindings for the conelab demo page.
//!
//! Each export is a thin wrapper over a plain function so the numerics can
//! be tested natively. The demo uses coarser quadrature than the library
//! defaults to stay interactive.

use conelab::association::{Experiment, ExperimentConfig, OuterQuadrature, ScheduleSpec};
use conelab::kernels::make_polynomial_profile;
use conelab::linalg::Vec2;
use conelab::quadrature::{QuadratureSpec, Scheme};
use wasm_bindgen::prelude::*;

/// Inner quadrature used by the demo.
pub const DEMO_QUADRATURE: QuadratureSpec = QuadratureSpec {
    scheme: Scheme::Auto,
    radial_nodes: 32,
    angular_nodes: 48,
};

fn demo_config(alpha: f64, q: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(alpha);
    cfg.kernel.moment_order = q;
    cfg.quadrature = DEMO_QUADRATURE;
    cfg.outer = OuterQuadrature {
        panel_nodes: 8,
        angular_nodes: 16,
        ..OuterQuadrature::default()
    };
    cfg
}

/// `n` samples of the radial profile `ρ(t, 0)` for `t ∈ [0, 1.2]`.
pub fn profile_samples(q: usize, n: usize) -> conelab::Result<Vec<f64>> {
    let profile = make_polynomial_profile(2, q)?;
    let last = n.saturating_sub(1).max(1) as f64;
    Ok((0..n)
        .map(|i| profile.eval(&Vec2::new(1.2 * i as f64 / last, 0.0)))
        .collect())
}

/// Regularized scalar curvature along the positive x-axis, `n` samples on
/// `(0, r_max]`.
pub fn curvature_samples(
    alpha: f64,
    q: usize,
    eps: f64,
    r_max: f64,
    n: usize,
) -> conelab::Result<Vec<f64>> {
    let mut cfg = demo_config(alpha, q);
    cfg.schedule = ScheduleSpec::Geometric {
        start: eps,
        ratio: 0.5,
        count: 4,
    };
    let exp = Experiment::new(&cfg)?;
    (1..=n)
        .map(|i| exp.scalar(eps, &Vec2::new(r_max * i as f64 / n as f64, 0.0)))
        .collect()
}

/// Flattened `(eps, I(eps))` pairs over `count` geometric steps from `0.08`.
pub fn association_samples(alpha: f64, q: usize, count: usize) -> conelab::Result<Vec<f64>> {
    let mut cfg = demo_config(alpha, q);
    cfg.schedule = ScheduleSpec::Geometric {
        start: 0.08,
        ratio: 0.6,
        count: count.max(4),
    };
    let exp = Experiment::new(&cfg)?;
    let mut out = Vec::with_capacity(2 * count);
    for &eps in exp.schedule().iter().take(count) {
        out.push(eps);
        out.push(exp.association_integral(eps)?);
    }
    Ok(out)
}

fn js(e: conelab::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub fn kernel_profile(q: usize, n: usize) -> Result<Vec<f64>, JsError> {
    profile_samples(q, n).map_err(js)
}

#[wasm_bindgen]
pub fn curvature_profile(
    alpha: f64,
    q: usize,
    eps: f64,
    r_max: f64,
    n: usize,
) -> Result<Vec<f64>, JsError> {
    curvature_samples(alpha, q, eps, r_max, n).map_err(js)
}

#[wasm_bindgen]
pub fn association_curve(alpha: f64, q: usize, count: usize) -> Result<Vec<f64>, JsError> {
    association_samples(alpha, q, count).map_err(js)
}

/// The limit `4π(1−α)` the association integral approaches.
#[wasm_bindgen]
pub fn target(alpha: f64) -> f64 {
    4.0 * std::f64::consts::PI * (1.0 - alpha)
}
