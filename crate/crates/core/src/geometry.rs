//! Curvature of a 2-D metric given as a second-order jet.
//!
//! The inverse determinant is replaced by a smoothly clamped version
//! `s̃(det)`, equal to `1/det` wherever `det ≥ h₀` and constant below
//! `h₀/2`, so curvature stays defined for metrics that degenerate. With the
//! default floor and nonnegative kernels the clamp never triggers.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{adjugate, Mat2, MatJet, Vec2};

/// `Γ[i][k][l] = Γ^i_{kl}`.
pub type Christoffel = [[[f64; 2]; 2]; 2];

/// Fully covariant `R[i][k][l][m] = R_{iklm}`.
pub type Riemann = [[[[f64; 2]; 2]; 2]; 2];

/// Default determinant floor for a cone of parameter `α`: `(α²/2)²`.
pub fn default_floor(alpha: f64) -> f64 {
    let kappa = 0.5 * alpha * alpha;
    kappa * kappa
}

fn psi(u: f64) -> f64 {
    if u > 0.0 {
        (-1.0 / u).exp()
    } else {
        0.0
    }
}

/// Smooth step, 0 for `t ≤ ½` and 1 for `t ≥ 1`.
pub fn smoothstep_chi(t: f64) -> f64 {
    let a = psi(t - 0.5);
    let b = psi(1.0 - t);
    if a + b == 0.0 {
        return if t >= 1.0 { 1.0 } else { 0.0 };
    }
    a / (a + b)
}

/// `(s̃, clamp_active)` for a determinant value and floor `h₀`.
pub fn safe_inverse_det(det: f64, floor: f64) -> (f64, bool) {
    if det >= floor {
        return (1.0 / det, false);
    }
    if det <= 0.5 * floor {
        return (1.0, true);
    }
    let chi = smoothstep_chi(det / floor);
    (chi / det + (1.0 - chi), true)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricJet {
    pub g: Mat2,
    pub dg: [Mat2; 2],
    pub ddg: [[Mat2; 2]; 2],
    pub det: f64,
    /// `s̃ · cofactor(g)`, the clamped inverse metric.
    pub inv: Mat2,
    pub s_tilde: f64,
    pub clamp_active: bool,
}

impl MetricJet {
    pub fn new(jet: &MatJet, floor: f64) -> Self {
        let det = jet.value.determinant();
        let (s_tilde, clamp_active) = safe_inverse_det(det, floor);
        Self {
            g: jet.value,
            dg: jet.d,
            ddg: jet.dd,
            det,
            inv: adjugate(&jet.value) * s_tilde,
            s_tilde,
            clamp_active,
        }
    }

    /// Exact inversion, for metrics known to be nondegenerate.
    pub fn unclamped(jet: &MatJet) -> Self {
        Self::new(jet, 0.0)
    }

    fn dg(&self, i: usize, j: usize, k: usize) -> f64 {
        self.dg[k][(i, j)]
    }

    fn ddg(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.ddg[k][l][(i, j)]
    }
}

pub fn christoffel(m: &MetricJet) -> Christoffel {
    let mut first = [[[0.0; 2]; 2]; 2];
    for (a, fa) in first.iter_mut().enumerate() {
        for k in 0..2 {
            for l in 0..2 {
                fa[k][l] = 0.5 * (m.dg(a, k, l) + m.dg(a, l, k) - m.dg(k, l, a));
            }
        }
    }
    let mut gamma = [[[0.0; 2]; 2]; 2];
    for (i, gi) in gamma.iter_mut().enumerate() {
        for k in 0..2 {
            for l in 0..2 {
                gi[k][l] = (0..2).map(|a| m.inv[(i, a)] * first[a][k][l]).sum();
            }
        }
    }
    gamma
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurvatureResult {
    pub gamma: Christoffel,
    pub riemann: Riemann,
    pub r1212: f64,
    /// `2 R₁₂₁₂ s̃`.
    pub scalar: f64,
    pub det: f64,
    pub clamp_active: bool,
}

pub fn riemann(m: &MetricJet, gamma: &Christoffel) -> Riemann {
    let mut r = [[[[0.0; 2]; 2]; 2]; 2];
    for i in 0..2 {
        for k in 0..2 {
            for l in 0..2 {
                for mm in 0..2 {
                    let mut v = 0.5
                        * (m.ddg(i, mm, k, l) + m.ddg(k, l, i, mm)
                            - m.ddg(i, l, k, mm)
                            - m.ddg(k, mm, i, l));
                    for n in 0..2 {
                        for p in 0..2 {
                            v += m.g[(n, p)]
                                * (gamma[n][k][l] * gamma[p][i][mm]
                                    - gamma[n][k][mm] * gamma[p][i][l]);
                        }
                    }
                    r[i][k][l][mm] = v;
                }
            }
        }
    }
    r
}

pub fn curvature(m: &MetricJet) -> CurvatureResult {
    let gamma = christoffel(m);
    let r = riemann(m, &gamma);
    let r1212 = r[0][1][0][1];
    CurvatureResult {
        gamma,
        riemann: r,
        r1212,
        scalar: 2.0 * r1212 * m.s_tilde,
        det: m.det,
        clamp_active: m.clamp_active,
    }
}

/// `∮ κ_g ds` over the coordinate circle `|x| = λ`, traversed
/// counterclockwise with the normal pointing into the disc, using an
/// `n`-point trapezoid rule in the angle.
pub fn geodesic_curvature_circle(
    metric: impl Fn(&Vec2) -> Result<MetricJet>,
    lambda: f64,
    n: usize,
) -> Result<f64> {
    let dtheta = 2.0 * PI / n as f64;
    let mut total = 0.0;
    for j in 0..n {
        let (s, c) = (j as f64 * dtheta).sin_cos();
        let p = Vec2::new(c, s) * lambda;
        let v = Vec2::new(-s, c) * lambda;
        let acc = -p;
        let m = metric(&p)?;
        if !(m.det > 0.0) {
            return Err(Error::DegenerateMetric(m.det));
        }
        let gamma = christoffel(&m);
        let mut dv = acc;
        for (k, gk) in gamma.iter().enumerate() {
            for a in 0..2 {
                for b in 0..2 {
                    dv[k] += gk[a][b] * v[a] * v[b];
                }
            }
        }
        let gv = m.g * v;
        let normal = Vec2::new(-gv.y, gv.x);
        let normal = normal / normal.dot(&(m.g * normal)).sqrt();
        let speed2 = v.dot(&gv);
        let kappa = dv.dot(&(m.g * normal)) / speed2;
        total += kappa * speed2.sqrt() * dtheta;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{conical_metric, TensorField};
    use crate::quadrature::PolarDiscRule;
    use proptest::prelude::*;

    fn field_metric(f: &TensorField) -> impl Fn(&Vec2) -> Result<MetricJet> + '_ {
        move |y| Ok(MetricJet::unclamped(&f.jet(y)))
    }

    #[test]
    fn clamp_profile() {
        assert_eq!(safe_inverse_det(2.0, 0.5), (0.5, false));
        assert_eq!(safe_inverse_det(0.2, 0.5), (1.0, true));
        assert_eq!(safe_inverse_det(-1.0, 0.5), (1.0, true));
        let (mid, active) = safe_inverse_det(0.375, 0.5);
        assert!(active && mid > 1.0 && mid < 1.0 / 0.375);
        // continuity at both ends
        assert!((safe_inverse_det(0.5 - 1e-9, 0.5).0 - 2.0).abs() < 1e-6);
        assert!((safe_inverse_det(0.25 + 1e-9, 0.5).0 - 1.0).abs() < 1e-6);
        assert!((default_floor(0.5) - 0.015625).abs() < 1e-15);
    }

    #[test]
    fn flat_metric_has_no_curvature() {
        let m = MetricJet::unclamped(&MatJet::constant(Mat2::identity()));
        let c = curvature(&m);
        assert_eq!(c.scalar, 0.0);
        assert!(c.gamma.iter().flatten().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn cone_is_flat_away_from_apex() {
        let f = conical_metric(0.35).unwrap();
        for y in [
            Vec2::new(0.3, 0.1),
            Vec2::new(-0.2, 0.45),
            Vec2::new(0.01, -0.02),
        ] {
            let c = curvature(&MetricJet::unclamped(&f.jet(&y)));
            let scale = y.norm().powi(-2);
            assert!(
                c.scalar.abs() < 1e-10 * scale,
                "scalar {} at {y:?}",
                c.scalar
            );
        }
    }

    #[test]
    fn christoffel_matches_finite_difference_metric() {
        let f = conical_metric(0.6).unwrap();
        let y = Vec2::new(0.25, -0.4);
        let m = MetricJet::unclamped(&f.jet(&y));
        let gamma = christoffel(&m);
        let h = 1e-6;
        let d = |k: usize| {
            let mut e = Vec2::zeros();
            e[k] = h;
            (f.value(&(y + e)) - f.value(&(y - e))) / (2.0 * h)
        };
        let dg = [d(0), d(1)];
        let ginv = f.value(&y).try_inverse().unwrap();
        for i in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    let mut v = 0.0;
                    for a in 0..2 {
                        v += 0.5 * ginv[(i, a)] * (dg[l][(a, k)] + dg[k][(a, l)] - dg[a][(k, l)]);
                    }
                    assert!((v - gamma[i][k][l]).abs() < 1e-7);
                }
            }
        }
    }

    #[test]
    fn round_sphere_has_scalar_curvature_two() {
        let f = TensorField::SphereChart;
        for y in [
            Vec2::new(0.0, 0.0),
            Vec2::new(0.4, -0.3),
            Vec2::new(1.5, 2.0),
        ] {
            let c = curvature(&MetricJet::unclamped(&f.jet(&y)));
            assert!((c.scalar - 2.0).abs() < 1e-8, "{}", c.scalar);
        }
    }

    #[test]
    fn circle_curvature_totals() {
        let flat = TensorField::Constant(Mat2::identity());
        let total = geodesic_curvature_circle(field_metric(&flat), 0.5, 64).unwrap();
        assert!((total - 2.0 * PI).abs() < 1e-8);
        for alpha in [0.2, 0.5, 0.9] {
            let f = conical_metric(alpha).unwrap();
            let total = geodesic_curvature_circle(field_metric(&f), 0.5, 64).unwrap();
            assert!((total - 2.0 * PI * alpha).abs() < 1e-8, "{total}");
        }
    }

    #[test]
    fn gauss_bonnet_on_sphere_cap() {
        let f = TensorField::SphereChart;
        let lambda = 0.7;
        let rule = PolarDiscRule::new(&[0.0, 0.35, 0.7], 24, 64);
        let interior: f64 = rule
            .nodes
            .iter()
            .map(|(y, w)| {
                let m = MetricJet::unclamped(&f.jet(y));
                0.5 * curvature(&m).scalar * m.det.sqrt() * w
            })
            .sum();
        let area = 4.0 * PI * lambda * lambda / (1.0 + lambda * lambda);
        assert!((interior - area).abs() < 1e-9);
        let boundary = geodesic_curvature_circle(field_metric(&f), lambda, 128).unwrap();
        assert!((interior + boundary - 2.0 * PI).abs() < 1e-6);
    }

    #[test]
    fn degenerate_metric_on_curve_is_an_error() {
        let zero = TensorField::Constant(Mat2::zeros());
        assert!(matches!(
            geodesic_curvature_circle(field_metric(&zero), 0.5, 16),
            Err(Error::DegenerateMetric(_))
        ));
    }

    fn arb_sym() -> impl Strategy<Value = Mat2> {
        (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0).prop_map(|(a, b, c)| Mat2::new(a, b, b, c))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn riemann_symmetries(
            a in 0.5f64..2.0, b in -0.3f64..0.3, c in 0.5f64..2.0,
            d0 in arb_sym(), d1 in arb_sym(),
            e00 in arb_sym(), e01 in arb_sym(), e11 in arb_sym(),
        ) {
            let jet = MatJet { value: Mat2::new(a, b, b, c), d: [d0, d1], dd: [[e00, e01], [e01, e11]] };
            let m = MetricJet::unclamped(&jet);
            let r = curvature(&m).riemann;
            for i in 0..2 { for k in 0..2 { for l in 0..2 { for n in 0..2 {
                prop_assert!((r[i][k][l][n] + r[k][i][l][n]).abs() < 1e-10);
                prop_assert!((r[i][k][l][n] + r[i][k][n][l]).abs() < 1e-10);
                prop_assert!((r[i][k][l][n] - r[l][n][i][k]).abs() < 1e-10);
            }}}}
        }
    }
}
