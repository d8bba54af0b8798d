//! Quadrature rules for kernel integrals and polar disc integrals.
//!
//! Kernel integrals are always evaluated in the unit-profile coordinate `z`,
//! where the smoothing kernel is the fixed profile supported in the disc
//! `|z| ≤ R`. A field singularity maps to a point `z_s` in these coordinates;
//! when it is near the support the rule is built in polar coordinates around
//! `z_s`, otherwise around the disc center.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vec2;

/// Gauss–Legendre nodes and weights on `[-1, 1]`, by Newton iteration on the
/// three-term Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let step = p / d;
            z -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d.is_finite() {
            dp = d;
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * z * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p, dp)
}

/// A Gauss–Legendre rule stored on `[-1, 1]` and mapped on demand.
#[derive(Clone, Debug)]
pub struct GaussRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(n: usize) -> Self {
        let (nodes, weights) = gauss_legendre(n);
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn on(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(x, w)| (mid + half * x, half * w))
    }

    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        self.on(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Singular-point polar when the singularity is within two support radii,
    /// polar around the kernel center otherwise.
    Auto,
    PolarCenteredAtX,
    PolarCenteredAtOrigin,
    TensorGauss,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureSpec {
    pub scheme: Scheme,
    pub radial_nodes: usize,
    pub angular_nodes: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            scheme: Scheme::Auto,
            radial_nodes: 64,
            angular_nodes: 96,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.radial_nodes < 8 || self.angular_nodes < 8 {
            return Err(Error::Config(format!(
                "quadrature node counts must be >= 8 (radial {}, angular {})",
                self.radial_nodes, self.angular_nodes
            )));
        }
        Ok(())
    }
}

/// Prepared rule for integrating over the unit-profile support disc.
#[derive(Clone, Debug)]
pub struct DiscQuadrature {
    spec: QuadratureSpec,
    radial: GaussRule,
    angular: GaussRule,
}

impl DiscQuadrature {
    pub fn new(spec: QuadratureSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec,
            radial: GaussRule::new(spec.radial_nodes),
            angular: GaussRule::new(spec.angular_nodes),
        })
    }

    pub fn spec(&self) -> &QuadratureSpec {
        &self.spec
    }

    /// Visits every node `(z, weight)` of the rule for the disc `|z| ≤ radius`.
    /// `singular` is the field singularity in the same coordinates, if any.
    pub fn for_each(&self, radius: f64, singular: Option<Vec2>, mut f: impl FnMut(Vec2, f64)) {
        match self.resolve(radius, singular) {
            Resolved::Centered => self.centered(radius, &mut f),
            Resolved::Singular(zs) => {
                if zs.norm() < radius {
                    self.singular_inside(radius, zs, &mut f)
                } else {
                    self.singular_outside(radius, zs, &mut f)
                }
            }
            Resolved::Tensor => self.tensor(radius, &mut f),
        }
    }

    fn resolve(&self, radius: f64, singular: Option<Vec2>) -> Resolved {
        match (self.spec.scheme, singular) {
            (Scheme::TensorGauss, _) => Resolved::Tensor,
            (Scheme::PolarCenteredAtX, _) | (_, None) => Resolved::Centered,
            (Scheme::PolarCenteredAtOrigin, Some(zs)) => {
                if zs.norm() < 1e-14 {
                    Resolved::Centered
                } else {
                    Resolved::Singular(zs)
                }
            }
            (Scheme::Auto, Some(zs)) => {
                let d = zs.norm();
                if d < 1e-14 || d >= 2.0 * radius {
                    Resolved::Centered
                } else {
                    Resolved::Singular(zs)
                }
            }
        }
    }

    fn centered(&self, radius: f64, f: &mut impl FnMut(Vec2, f64)) {
        let n = self.spec.angular_nodes;
        let dtheta = 2.0 * PI / n as f64;
        for j in 0..n {
            let (s, c) = (j as f64 * dtheta).sin_cos();
            for (r, w) in self.radial.on(0.0, radius) {
                f(Vec2::new(r * c, r * s), w * r * dtheta);
            }
        }
    }

    /// Singular point strictly inside the disc: full-turn trapezoid in angle,
    /// rays from the singular point to the disc boundary.
    fn singular_inside(&self, radius: f64, zs: Vec2, f: &mut impl FnMut(Vec2, f64)) {
        let n = self.spec.angular_nodes;
        let dtheta = 2.0 * PI / n as f64;
        let excess = radius * radius - zs.norm_squared();
        for j in 0..n {
            let (s, c) = (j as f64 * dtheta).sin_cos();
            let u = Vec2::new(c, s);
            let b = zs.dot(&u);
            let r_max = -b + (b * b + excess).sqrt();
            for (r, w) in self.radial.on(0.0, r_max) {
                f(zs + u * r, w * r * dtheta);
            }
        }
    }

    /// Singular point outside the disc: rays from the singular point
    /// through the disc, parametrized by the offset `R sin t` of the ray
    /// from the disc center so the chord length stays smooth up to the
    /// tangent rays.
    fn singular_outside(&self, radius: f64, zs: Vec2, f: &mut impl FnMut(Vec2, f64)) {
        let d = zs.norm();
        let toward = (-zs).y.atan2(-zs.x);
        let half_pi = 0.5 * PI;
        for (t, wt) in self.angular.on(-half_pi, half_pi) {
            let (st, ct) = t.sin_cos();
            let offset = radius * st;
            let theta = toward + (offset / d).asin();
            let jac = radius * ct / (d * d - offset * offset).sqrt();
            let (s, c) = theta.sin_cos();
            let u = Vec2::new(c, s);
            let mid = (d * d - offset * offset).sqrt();
            let half = radius * ct;
            let (r_lo, r_hi) = ((mid - half).max(0.0), mid + half);
            for (r, w) in self.radial.on(r_lo, r_hi) {
                f(zs + u * r, w * wt * jac * r);
            }
        }
    }

    fn tensor(&self, radius: f64, f: &mut impl FnMut(Vec2, f64)) {
        for (a, wa) in self.radial.on(-radius, radius) {
            for (b, wb) in self.radial.on(-radius, radius) {
                f(Vec2::new(a, b), wa * wb);
            }
        }
    }
}

enum Resolved {
    Centered,
    Singular(Vec2),
    Tensor,
}

/// Polar rule on a disc `|x| < outer` around the origin with radial Gauss
/// panels between the given breakpoints and an angular trapezoid.
#[derive(Clone, Debug)]
pub struct PolarDiscRule {
    pub nodes: Vec<(Vec2, f64)>,
}

impl PolarDiscRule {
    pub fn new(breakpoints: &[f64], panel_nodes: usize, angular_nodes: usize) -> Self {
        let rule = GaussRule::new(panel_nodes);
        let dtheta = 2.0 * PI / angular_nodes as f64;
        let mut nodes = Vec::with_capacity((breakpoints.len() - 1) * panel_nodes * angular_nodes);
        for pair in breakpoints.windows(2) {
            for (r, w) in rule.on(pair[0], pair[1]) {
                for j in 0..angular_nodes {
                    // half-step offset keeps nodes off the coordinate axes
                    let (s, c) = ((j as f64 + 0.5) * dtheta).sin_cos();
                    nodes.push((Vec2::new(r * c, r * s), w * r * dtheta));
                }
            }
        }
        Self { nodes }
    }

    /// Breakpoints clustered at scale `h` near the origin, then geometric out
    /// to `outer`. Always contains `2h` exactly.
    pub fn clustered_breakpoints(h: f64, outer: f64, growth: f64) -> Vec<f64> {
        let mut pts = vec![0.0];
        for m in [0.5, 1.0, 1.5, 2.0, 3.0, 4.0] {
            let r = m * h;
            if r < outer {
                pts.push(r);
            }
        }
        let mut r = *pts.last().unwrap();
        loop {
            r *= growth;
            if r >= outer * 0.999 {
                break;
            }
            pts.push(r);
        }
        pts.push(outer);
        pts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let rule = GaussRule::new(10);
        // degree 19 is the limit for 10 nodes
        let v = rule.integrate(-1.0, 1.0, |x| x.powi(18));
        assert!((v - 2.0 / 19.0).abs() < 1e-15);
        let w: f64 = rule.on(0.0, 3.0).map(|(_, w)| w).sum();
        assert!((w - 3.0).abs() < 1e-14);
    }

    #[test]
    fn large_rule_is_accurate() {
        let (x, w) = gauss_legendre(256);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.cos()).sum();
        assert!((s - 2.0 * 1f64.sin()).abs() < 1e-14);
    }

    fn disc_area(q: &DiscQuadrature, zs: Option<Vec2>) -> f64 {
        let mut a = 0.0;
        q.for_each(1.0, zs, |_, w| a += w);
        a
    }

    #[test]
    fn every_scheme_measures_the_disc() {
        let q = DiscQuadrature::new(QuadratureSpec::default()).unwrap();
        for zs in [
            None,
            Some(Vec2::new(0.3, -0.2)),
            Some(Vec2::new(1.4, 0.5)),
            Some(Vec2::new(0.999, 0.0)),
        ] {
            assert!((disc_area(&q, zs) - PI).abs() < 1e-12, "{zs:?}");
        }
    }

    #[test]
    fn too_few_nodes_rejected() {
        let spec = QuadratureSpec {
            radial_nodes: 4,
            ..Default::default()
        };
        assert!(DiscQuadrature::new(spec).is_err());
    }

    #[test]
    fn clustered_breakpoints_contain_split_radius() {
        let b = PolarDiscRule::clustered_breakpoints(0.01, 0.5, 1.6);
        assert!(b.contains(&0.02));
        assert_eq!(*b.last().unwrap(), 0.5);
        assert!(b.windows(2).all(|p| p[0] < p[1]));
        let rule = PolarDiscRule::new(&b, 8, 16);
        let area: f64 = rule.nodes.iter().map(|(_, w)| w).sum();
        assert!((area - PI * 0.25).abs() < 1e-12);
    }
}
