//! Log-log slope fitting and extrapolation in ε.
//!
//! Moderateness and negligibility are asymptotic statements about nets
//! indexed by ε. Numerically we sample a quantity along a decreasing
//! schedule and fit `log |value| = slope · log ε + intercept` by ordinary
//! least squares. Zero samples carry no information about a power law and
//! are dropped (and counted).

use serde::Serialize;

use crate::error::{Error, Result};

/// Fits with a slope standard error above this fail regardless of slope.
pub const MAX_SLOPE_RESIDUAL: f64 = 0.1;

pub const MIN_FIT_POINTS: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope estimate.
    pub residual: f64,
    pub used: usize,
    pub dropped: usize,
}

impl SlopeFit {
    /// All samples were exactly zero: the quantity vanishes at every order.
    pub fn is_vanishing(&self) -> bool {
        self.used == 0
    }
}

/// Least-squares fit of `log|value|` against `log eps`.
pub fn fit_log_log(samples: &[(f64, f64)]) -> SlopeFit {
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|(e, v)| *e > 0.0 && v.is_finite() && *v != 0.0)
        .map(|(e, v)| (e.ln(), v.abs().ln()))
        .collect();
    let dropped = samples.len() - pts.len();
    if pts.is_empty() {
        return SlopeFit {
            slope: f64::INFINITY,
            intercept: f64::NEG_INFINITY,
            residual: 0.0,
            used: 0,
            dropped,
        };
    }
    if pts.len() == 1 {
        return SlopeFit {
            slope: f64::NAN,
            intercept: f64::NAN,
            residual: f64::INFINITY,
            used: 1,
            dropped,
        };
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = if pts.len() > 2 {
        let ssr: f64 = pts
            .iter()
            .map(|p| (p.1 - intercept - slope * p.0).powi(2))
            .sum();
        (ssr / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    SlopeFit {
        slope,
        intercept,
        residual,
        used: pts.len(),
        dropped,
    }
}

/// How a fitted slope is compared with the claimed order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Claim {
    Within,
    AtLeast,
    AtMost,
}

#[derive(Clone, Debug, Serialize)]
pub struct OrderFitReport {
    pub quantity_id: String,
    pub samples: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
    pub claimed_order: f64,
    pub claim: Claim,
    pub tolerance: f64,
    pub pass: bool,
}

impl OrderFitReport {
    /// Fits the samples and judges the slope against `claimed_order`.
    ///
    /// An identically zero quantity satisfies every lower bound and fails
    /// anything else. A slope residual above [`MAX_SLOPE_RESIDUAL`] fails.
    pub fn new(
        quantity_id: impl Into<String>,
        samples: Vec<(f64, f64)>,
        claimed_order: f64,
        claim: Claim,
        tolerance: f64,
    ) -> Self {
        let fit = fit_log_log(&samples);
        let pass = judge(&fit, claimed_order, claim, tolerance);
        Self {
            quantity_id: quantity_id.into(),
            samples,
            slope: fit.slope,
            intercept: fit.intercept,
            residual: fit.residual,
            claimed_order,
            claim,
            tolerance,
            pass,
        }
    }
}

pub fn judge(fit: &SlopeFit, claimed: f64, claim: Claim, tolerance: f64) -> bool {
    if fit.is_vanishing() {
        return claim == Claim::AtLeast;
    }
    if !(fit.residual <= MAX_SLOPE_RESIDUAL) || !fit.slope.is_finite() {
        return false;
    }
    match claim {
        Claim::Within => (fit.slope - claimed).abs() <= tolerance,
        Claim::AtLeast => fit.slope >= claimed - tolerance,
        Claim::AtMost => fit.slope <= claimed + tolerance,
    }
}

pub fn require_fit_points(schedule: &[f64]) -> Result<()> {
    if schedule.len() < MIN_FIT_POINTS {
        return Err(Error::Config(format!(
            "schedule has {} points; at least {MIN_FIT_POINTS} are needed to fit a slope",
            schedule.len()
        )));
    }
    Ok(())
}

pub fn validate_schedule(schedule: &[f64]) -> Result<()> {
    require_fit_points(schedule)?;
    if schedule.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
        return Err(Error::Config(
            "schedule entries must be positive and finite".into(),
        ));
    }
    if schedule.windows(2).any(|p| p[1] >= p[0]) {
        return Err(Error::Config(
            "schedule must be strictly decreasing in eps".into(),
        ));
    }
    Ok(())
}

/// Replaces values at or below `floor` in magnitude by exact zeros, so that
/// quadrature noise is dropped from slope fits instead of flattening them.
pub fn denoise(samples: &[(f64, f64)], floor: impl Fn(f64) -> f64) -> Vec<(f64, f64)> {
    samples
        .iter()
        .map(|&(e, v)| (e, if v.abs() <= floor(e) { 0.0 } else { v }))
        .collect()
}

/// `start · ratio^j` for `j = 0..count`.
pub fn geometric_schedule(start: f64, ratio: f64, count: usize) -> Vec<f64> {
    (0..count).map(|j| start * ratio.powi(j as i32)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Extrapolation {
    pub limit: f64,
    /// Fitted convergence order, when the fit was usable.
    pub order: Option<f64>,
    /// Half-width of the bracket around `limit`.
    pub bracket: f64,
    pub richardson: bool,
}

/// Richardson extrapolation of `values[j] ≈ L + K eps[j]^p` with the order
/// `p` fitted from successive differences. Falls back to the last value and
/// its last increment as bracket when the order fit is unusable.
pub fn richardson(eps: &[f64], values: &[f64]) -> Extrapolation {
    let n = values.len();
    assert_eq!(eps.len(), n);
    let last = values[n - 1];
    if n < 3 {
        let bracket = if n == 2 {
            (values[1] - values[0]).abs()
        } else {
            f64::INFINITY
        };
        return Extrapolation {
            limit: last,
            order: None,
            bracket,
            richardson: false,
        };
    }
    let scale = values.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let diffs: Vec<(f64, f64)> = (0..n - 1)
        .map(|j| (eps[j + 1], values[j] - values[j + 1]))
        .collect();
    let last_step = diffs[n - 2].1.abs();
    if last_step <= 1e-12 * scale {
        return Extrapolation {
            limit: last,
            order: None,
            bracket: last_step,
            richardson: false,
        };
    }
    // fit on the tail, where the asymptotic regime is most likely
    let tail = &diffs[diffs.len().saturating_sub(5)..];
    let fit = fit_log_log(tail);
    let usable = fit.used >= 3
        && fit.slope.is_finite()
        && fit.slope > 0.2
        && fit.residual < 0.25
        && tail.windows(2).all(|w| w[0].1.signum() == w[1].1.signum());
    if !usable {
        return Extrapolation {
            limit: last,
            order: None,
            bracket: last_step,
            richardson: false,
        };
    }
    let p = fit.slope;
    let ratio = (eps[n - 1] / eps[n - 2]).powf(p);
    // values[n-2] - values[n-1] = K eps_{n-1}^p (1/ratio - 1)
    let correction = (values[n - 2] - values[n - 1]) * ratio / (1.0 - ratio);
    Extrapolation {
        limit: last - correction,
        order: Some(p),
        bracket: correction.abs(),
        richardson: true,
    }
}
