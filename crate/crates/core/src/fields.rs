//! Background tensor fields and their regularization by a kernel net and a
//! transport net.
//!
//! The regularized field is
//!
//! ```text
//! g̃_ε(x) = ∫ A_ε(y, x)ᵀ g(y) A_ε(y, x) φ_ε(x)(y) dy
//! ```
//!
//! evaluated together with its first and second x-derivatives. Every
//! integral is carried out in profile coordinates `z`, where
//! `y = x + ε L⁻¹(z + c)` and the density is `ρ(z) dz`; x-derivatives then
//! fall on the kernel weights and on the transport factor only, never on
//! the (possibly singular) background field.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fit::{Claim, OrderFitReport};
use crate::kernels::SmoothingKernelNet;
use crate::linalg::{AffineMap, Mat2, MatJet, Vec2};
use crate::quadrature::DiscQuadrature;
use crate::transport::{congruence_jet, TensorTransport, TransportNet};

/// Smooth test field used for embedding checks.
const SMOOTH_WAVES: [(usize, usize, f64, f64, f64, f64); 3] = [
    // (row, col, amplitude, a, b, phase)
    (0, 0, 0.3, 1.1, 0.7, 0.0),
    (0, 1, 0.2, 0.9, -1.3, std::f64::consts::FRAC_PI_2),
    (1, 1, 0.25, 0.6, 1.4, 0.5),
];
const SMOOTH_BASE: [f64; 2] = [1.2, 0.9];

#[derive(Clone, Debug, PartialEq)]
pub enum TensorField {
    Constant(Mat2),
    /// `h = [[cos 2θ, sin 2θ], [sin 2θ, −cos 2θ]]`, singular at the origin.
    ConicalH,
    /// `½(1+α²) δ + ½(1−α²) h`, the cone of total angle `2πα`.
    Conical {
        alpha: f64,
    },
    /// A fixed positive definite field built from plane waves.
    SmoothTest,
    /// Round metric of the unit sphere in stereographic coordinates.
    SphereChart,
    /// `(μ* u)(y) = Mᵀ u(μ y) M`.
    Pullback {
        base: Box<TensorField>,
        map: AffineMap,
    },
    Combination(Vec<(f64, TensorField)>),
}

pub fn conical_metric(alpha: f64) -> Result<TensorField> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Config(format!(
            "cone parameter alpha = {alpha} must lie in (0, 1]"
        )));
    }
    Ok(TensorField::Conical { alpha })
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

/// `∂₁^m ∂₂^n (z / z̄)`, using `∂₁ = ∂ + ∂̄`, `∂₂ = i(∂ − ∂̄)` and the fact
/// that `z / z̄` is affine in `z`.
fn phase_partial(y: &Vec2, m: usize, n: usize) -> Complex64 {
    let z = Complex64::new(y.x, y.y);
    let zb = z.conj();
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..=m.min(1) {
        for l in 0..=n.min(1 - j) {
            let b = (m - j) + (n - l);
            let sign = if (b + n - l).is_multiple_of(2) {
                1.0
            } else {
                -1.0
            };
            let mut term = zb.powi(-1 - b as i32) * (sign * factorial(b));
            if j + l == 0 {
                term *= z;
            }
            acc += term * (binomial(m, j) * binomial(n, l));
        }
    }
    acc * Complex64::i().powu(n as u32)
}

fn h_from_phase(f: Complex64) -> Mat2 {
    Mat2::new(f.re, f.im, f.im, -f.re)
}

fn jet_from_partials(p: impl Fn(usize, usize) -> Mat2) -> MatJet {
    let mixed = p(1, 1);
    MatJet {
        value: p(0, 0),
        d: [p(1, 0), p(0, 1)],
        dd: [[p(2, 0), mixed], [mixed, p(0, 2)]],
    }
}

impl TensorField {
    pub fn value(&self, y: &Vec2) -> Mat2 {
        match self {
            TensorField::Constant(m) => *m,
            TensorField::ConicalH => {
                if y.x == 0.0 && y.y == 0.0 {
                    return Mat2::zeros();
                }
                h_from_phase(phase_partial(y, 0, 0))
            }
            TensorField::Conical { alpha } => {
                let a2 = alpha * alpha;
                Mat2::identity() * (0.5 * (1.0 + a2))
                    + TensorField::ConicalH.value(y) * (0.5 * (1.0 - a2))
            }
            TensorField::SmoothTest => self.partial(y, 0, 0).expect("smooth test field"),
            TensorField::SphereChart => Mat2::identity() * (4.0 / (1.0 + y.norm_squared()).powi(2)),
            TensorField::Pullback { base, map } => map.pull_covariant(&base.value(&map.apply(y))),
            TensorField::Combination(terms) => terms
                .iter()
                .fold(Mat2::zeros(), |acc, (c, t)| acc + t.value(y) * *c),
        }
    }

    /// Value with first and second derivatives.
    pub fn jet(&self, y: &Vec2) -> MatJet {
        match self {
            TensorField::Constant(m) => MatJet::constant(*m),
            TensorField::ConicalH | TensorField::Conical { .. } | TensorField::SmoothTest => {
                jet_from_partials(|m, n| self.partial(y, m, n).expect("closed form"))
            }
            TensorField::SphereChart => {
                let s = y.norm_squared();
                let w = 1.0 + s;
                let c = 4.0 / (w * w);
                let dc = [-16.0 * y.x / w.powi(3), -16.0 * y.y / w.powi(3)];
                let ddc = |i: usize, j: usize| {
                    let delta = if i == j { 1.0 } else { 0.0 };
                    -16.0 * delta / w.powi(3) + 96.0 * y[i] * y[j] / w.powi(4)
                };
                let id = Mat2::identity();
                MatJet {
                    value: id * c,
                    d: [id * dc[0], id * dc[1]],
                    dd: [
                        [id * ddc(0, 0), id * ddc(0, 1)],
                        [id * ddc(1, 0), id * ddc(1, 1)],
                    ],
                }
            }
            TensorField::Pullback { base, map } => {
                let inner = base.jet(&map.apply(y));
                let m = &map.matrix;
                let pull = |v: &Mat2| map.pull_covariant(v);
                let mut out = MatJet::constant(pull(&inner.value));
                for c in 0..2 {
                    let d = inner.d[0] * m[(0, c)] + inner.d[1] * m[(1, c)];
                    out.d[c] = pull(&d);
                    for e in 0..2 {
                        let mut dd = Mat2::zeros();
                        for a in 0..2 {
                            for b in 0..2 {
                                dd += inner.dd[a][b] * (m[(a, c)] * m[(b, e)]);
                            }
                        }
                        out.dd[c][e] = pull(&dd);
                    }
                }
                out
            }
            TensorField::Combination(terms) => terms
                .iter()
                .fold(MatJet::zero(), |acc, (c, t)| acc + t.jet(y) * *c),
        }
    }

    /// `∂₁^m ∂₂^n` of the field at `y`. Arbitrary orders are available for
    /// the constant, conical and smooth test fields; the others stop at
    /// order two.
    pub fn partial(&self, y: &Vec2, m: usize, n: usize) -> Option<Mat2> {
        match self {
            TensorField::Constant(c) => Some(if m + n == 0 { *c } else { Mat2::zeros() }),
            TensorField::ConicalH => Some(h_from_phase(phase_partial(y, m, n))),
            TensorField::Conical { alpha } => {
                let a2 = alpha * alpha;
                let h = h_from_phase(phase_partial(y, m, n)) * (0.5 * (1.0 - a2));
                Some(if m + n == 0 {
                    h + Mat2::identity() * (0.5 * (1.0 + a2))
                } else {
                    h
                })
            }
            TensorField::SmoothTest => {
                let mut out = Mat2::zeros();
                if m + n == 0 {
                    out[(0, 0)] = SMOOTH_BASE[0];
                    out[(1, 1)] = SMOOTH_BASE[1];
                }
                for (i, j, amp, a, b, phase) in SMOOTH_WAVES {
                    let arg =
                        a * y.x + b * y.y + phase + (m + n) as f64 * std::f64::consts::FRAC_PI_2;
                    let v = amp * a.powi(m as i32) * b.powi(n as i32) * arg.sin();
                    out[(i, j)] += v;
                    if i != j {
                        out[(j, i)] += v;
                    }
                }
                Some(out)
            }
            TensorField::Combination(terms) => {
                terms.iter().try_fold(Mat2::zeros(), |acc, (c, t)| {
                    t.partial(y, m, n).map(|p| acc + p * *c)
                })
            }
            _ if m + n <= 2 => {
                let jet = self.jet(y);
                Some(match (m, n) {
                    (0, 0) => jet.value,
                    (1, 0) => jet.d[0],
                    (0, 1) => jet.d[1],
                    (2, 0) => jet.dd[0][0],
                    (1, 1) => jet.dd[0][1],
                    _ => jet.dd[1][1],
                })
            }
            _ => None,
        }
    }

    /// Points where the field fails to be smooth.
    pub fn singular_points(&self) -> Vec<Vec2> {
        match self {
            TensorField::Conical { alpha } if *alpha == 1.0 => Vec::new(),
            TensorField::ConicalH | TensorField::Conical { .. } => vec![Vec2::zeros()],
            TensorField::Pullback { base, map } => base
                .singular_points()
                .iter()
                .map(|p| map.apply_inverse(p))
                .collect(),
            TensorField::Combination(terms) => terms
                .iter()
                .flat_map(|(_, t)| t.singular_points())
                .collect(),
            _ => Vec::new(),
        }
    }

    /// Degree `d` with `u(λy) = λ^d u(y)` for `λ > 0`, if the field is
    /// homogeneous.
    pub fn homogeneity_degree(&self) -> Option<i32> {
        match self {
            TensorField::Constant(_) | TensorField::ConicalH | TensorField::Conical { .. } => {
                Some(0)
            }
            _ => None,
        }
    }
}

/// Tolerance of the signed unit-mass self check run alongside every
/// smoothing integral.
pub const MASS_SELF_CHECK_TOL: f64 = 1e-4;

/// Everything needed to regularize a field at a point.
#[derive(Clone, Copy)]
pub struct Smoother<'a> {
    pub field: &'a TensorField,
    pub kernel: &'a SmoothingKernelNet,
    pub transport: &'a TensorTransport,
    pub quadrature: &'a DiscQuadrature,
    /// Radius of the chart disc; support balls must stay inside it.
    pub chart_radius: Option<f64>,
}

impl<'a> Smoother<'a> {
    pub fn new(
        field: &'a TensorField,
        kernel: &'a SmoothingKernelNet,
        transport: &'a TensorTransport,
        quadrature: &'a DiscQuadrature,
    ) -> Self {
        Self {
            field,
            kernel,
            transport,
            quadrature,
            chart_radius: None,
        }
    }

    pub fn with_chart_radius(mut self, radius: f64) -> Self {
        self.chart_radius = Some(radius);
        self
    }

    fn singular_coordinate(&self, eps: f64, x: &Vec2) -> Option<Vec2> {
        self.field
            .singular_points()
            .iter()
            .map(|s| self.kernel.local_coordinate(eps, x, s))
            .min_by(|a, b| a.norm().total_cmp(&b.norm()))
    }

    fn check_chart(&self, eps: f64, x: &Vec2) -> Result<()> {
        if let Some(chart) = self.chart_radius {
            let radius = self.kernel.support_constant() * eps;
            if x.norm() + radius >= chart {
                return Err(Error::SupportOutsideChart {
                    x: x.x,
                    y: x.y,
                    radius,
                    chart,
                });
            }
        }
        Ok(())
    }

    /// `g̃_ε(x)` with x-derivatives up to `max_deriv` (0, 1 or 2); higher
    /// slots of the jet are left at zero.
    pub fn jet(&self, eps: f64, x: &Vec2, max_deriv: usize) -> Result<MatJet> {
        if max_deriv > 2 {
            return Err(Error::Unsupported(format!(
                "smoothed derivatives of order {max_deriv}"
            )));
        }
        if !(eps > 0.0) {
            return Err(Error::Config(format!("eps = {eps} must be positive")));
        }
        self.check_chart(eps, x)?;
        let profile = self.kernel.profile();
        let identity = self.transport.is_identity();
        let mut out = MatJet::zero();
        let mut mass = 0.0;
        let zs = self.singular_coordinate(eps, x);
        // derivative weights integrate to zero, so subtracting a constant
        // from the field there changes nothing but the quadrature error
        let center = self.kernel.sample_point(eps, x, &Vec2::zeros());
        let (reference, reference_d) = if max_deriv == 0 {
            (Mat2::zeros(), [Mat2::zeros(); 2])
        } else if identity {
            (self.field.value(&center), [Mat2::zeros(); 2])
        } else {
            let t = congruence_jet(
                &self.transport.transport_jet(eps, x, &center),
                &self.field.value(&center),
            );
            (t.value, t.d)
        };
        self.quadrature.for_each(profile.radius(), zs, |z, w| {
            let (rho, k1, k2) = if max_deriv == 0 {
                (profile.eval(&z), Vec2::zeros(), Mat2::zeros())
            } else {
                self.kernel.weights_at(eps, &z)
            };
            if rho == 0.0 && max_deriv == 0 {
                return;
            }
            mass += w * rho;
            let y = self.kernel.sample_point(eps, x, &z);
            let f = self.field.value(&y);
            if identity {
                out.value += f * (w * rho);
                if max_deriv >= 1 {
                    let f = f - reference;
                    for c in 0..2 {
                        out.d[c] += f * (w * k1[c]);
                        if max_deriv == 2 {
                            for e in 0..2 {
                                out.dd[c][e] += f * (w * k2[(c, e)]);
                            }
                        }
                    }
                }
            } else {
                let t = congruence_jet(&self.transport.transport_jet(eps, x, &y), &f);
                out.value += t.value * (w * rho);
                if max_deriv >= 1 {
                    let v = t.value - reference;
                    let d = [t.d[0] - reference_d[0], t.d[1] - reference_d[1]];
                    for c in 0..2 {
                        out.d[c] += (t.d[c] * rho + v * k1[c]) * w;
                        if max_deriv == 2 {
                            for e in 0..2 {
                                out.dd[c][e] += (t.dd[c][e] * rho
                                    + d[c] * k1[e]
                                    + d[e] * k1[c]
                                    + v * k2[(c, e)])
                                    * w;
                            }
                        }
                    }
                }
            }
        });
        if (mass - 1.0).abs() > MASS_SELF_CHECK_TOL {
            return Err(Error::QuadratureTooCoarse(mass - 1.0));
        }
        out.symmetrize();
        Ok(out)
    }

    pub fn value(&self, eps: f64, x: &Vec2) -> Result<Mat2> {
        Ok(self.jet(eps, x, 0)?.value)
    }
}

/// One-shot form of [`Smoother::jet`].
pub fn smooth_jet(
    field: &TensorField,
    kernel: &SmoothingKernelNet,
    transport: &TensorTransport,
    quadrature: &DiscQuadrature,
    eps: f64,
    x: &Vec2,
    max_deriv: usize,
) -> Result<MatJet> {
    Smoother::new(field, kernel, transport, quadrature).jet(eps, x, max_deriv)
}

/// Fits the order at which `sup_x |g̃_ε(x) − t(x)|` vanishes over `points`
/// for a smooth field `t`.
#[allow(clippy::too_many_arguments)]
pub fn embed_negligibility_order(
    field: &TensorField,
    kernel: &SmoothingKernelNet,
    transport: &TensorTransport,
    quadrature: &DiscQuadrature,
    points: &[Vec2],
    schedule: &[f64],
    claimed_order: f64,
    tolerance: f64,
) -> Result<OrderFitReport> {
    crate::fit::validate_schedule(schedule)?;
    let smoother = Smoother::new(field, kernel, transport, quadrature);
    let mut samples = Vec::with_capacity(schedule.len());
    for &eps in schedule {
        let mut sup: f64 = 0.0;
        for x in points {
            sup = sup.max((smoother.value(eps, x)? - field.value(x)).amax());
        }
        samples.push((eps, sup));
    }
    Ok(OrderFitReport::new(
        "embedding-defect",
        samples,
        claimed_order,
        Claim::Within,
        tolerance,
    ))
}

/// Largest entrywise gap between `μ*(g̃_ε)` and the regularization of `μ*u`
/// with the pulled-back kernel and transport nets, over `points`.
pub fn pullback_commutation_check(
    map: &AffineMap,
    field: &TensorField,
    kernel: &SmoothingKernelNet,
    transport: &TransportNet,
    quadrature: &DiscQuadrature,
    points: &[Vec2],
    eps: f64,
) -> Result<f64> {
    let back = map.inverse();
    let direct_t = crate::transport::tensor_action(transport.clone(), (0, 2))?;
    let pulled_field = TensorField::Pullback {
        base: Box::new(field.clone()),
        map: *map,
    };
    let pulled_kernel = kernel.pushforward(&back);
    let pulled_t = crate::transport::tensor_action(transport.pushforward(&back), (0, 2))?;
    let direct = Smoother::new(field, kernel, &direct_t, quadrature);
    let pulled = Smoother::new(&pulled_field, &pulled_kernel, &pulled_t, quadrature);
    let mut worst: f64 = 0.0;
    for x in points {
        let lhs = map.pull_covariant(&direct.value(eps, &map.apply(x))?);
        let rhs = pulled.value(eps, x)?;
        worst = worst.max((lhs - rhs).amax());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::geometric_schedule;
    use crate::kernels::{make_kernel_net, make_polynomial_profile};
    use crate::quadrature::{QuadratureSpec, Scheme};
    use crate::transport::{identity_transport, perturbed_transport, tensor_action, MatrixField};

    fn model(q: usize) -> SmoothingKernelNet {
        make_kernel_net(make_polynomial_profile(2, q).unwrap(), Vec2::zeros()).unwrap()
    }

    fn quad() -> DiscQuadrature {
        DiscQuadrature::new(QuadratureSpec::default()).unwrap()
    }

    fn id() -> TensorTransport {
        tensor_action(identity_transport(), (0, 2)).unwrap()
    }

    #[test]
    fn conical_values() {
        let g = conical_metric(0.5).unwrap();
        let y = Vec2::new(0.3, 0.0);
        assert!((g.value(&y) - Mat2::new(1.0, 0.0, 0.0, 0.25)).amax() < 1e-15);
        for theta in [0.1f64, 0.9, 2.0, -1.3] {
            let y = Vec2::new(theta.cos(), theta.sin()) * 0.7;
            let v = g.value(&y);
            assert!((v.determinant() - 0.25).abs() < 1e-14);
            // radial direction has unit length, tangential has length α
            let er = y.normalize();
            let et = Vec2::new(-er.y, er.x);
            assert!((er.dot(&(v * er)) - 1.0).abs() < 1e-14);
            assert!((et.dot(&(v * et)) - 0.25).abs() < 1e-14);
        }
        assert!(conical_metric(0.0).is_err());
        assert!(conical_metric(1.5).is_err());
        assert!(conical_metric(1.0).is_ok());
    }

    fn fd_check(field: &TensorField, y: &Vec2, tol: f64) {
        let h = 1e-5;
        let jet = field.jet(y);
        for c in 0..2 {
            let mut e = Vec2::zeros();
            e[c] = h;
            let fd = (field.value(&(y + e)) - field.value(&(y - e))) / (2.0 * h);
            assert!((fd - jet.d[c]).amax() < tol, "{field:?} d{c}");
            for k in 0..2 {
                let fdd = (field.jet(&(y + e)).d[k] - field.jet(&(y - e)).d[k]) / (2.0 * h);
                assert!((fdd - jet.dd[c][k]).amax() < tol, "{field:?} dd{c}{k}");
            }
        }
    }

    #[test]
    fn jets_match_finite_differences() {
        let map = AffineMap::new(Mat2::new(1.1, 0.4, -0.2, 0.8), Vec2::new(0.05, -0.1)).unwrap();
        let fields = [
            conical_metric(0.3).unwrap(),
            TensorField::SmoothTest,
            TensorField::SphereChart,
            TensorField::Pullback {
                base: Box::new(conical_metric(0.6).unwrap()),
                map,
            },
            TensorField::Combination(vec![
                (2.0, TensorField::SmoothTest),
                (-0.5, TensorField::ConicalH),
            ]),
        ];
        for f in &fields {
            for y in [
                Vec2::new(0.4, 0.2),
                Vec2::new(-0.3, 0.5),
                Vec2::new(0.1, -0.6),
            ] {
                fd_check(f, &y, 1e-4);
            }
        }
    }

    #[test]
    fn higher_partials_match_finite_differences() {
        let y = Vec2::new(0.35, -0.25);
        let h = 1e-4;
        for field in [TensorField::ConicalH, TensorField::SmoothTest] {
            for (m, n) in [(2, 1), (1, 2), (3, 0), (0, 3), (2, 2)] {
                let (dm, dn, sh) = if m > 0 {
                    (m - 1, n, Vec2::new(h, 0.0))
                } else {
                    (m, n - 1, Vec2::new(0.0, h))
                };
                let fd = (field.partial(&(y + sh), dm, dn).unwrap()
                    - field.partial(&(y - sh), dm, dn).unwrap())
                    / (2.0 * h);
                let exact = field.partial(&y, m, n).unwrap();
                assert!(
                    (fd - exact).amax() < 1e-5 * exact.amax().max(1.0),
                    "{field:?} ({m},{n})"
                );
            }
        }
    }

    #[test]
    fn conical_partials_are_homogeneous() {
        let y = Vec2::new(0.3, 0.4);
        for (m, n) in [(1, 0), (1, 1), (3, 1)] {
            let a = TensorField::ConicalH.partial(&y, m, n).unwrap();
            let b = TensorField::ConicalH.partial(&(y * 2.5), m, n).unwrap();
            let k = (m + n) as i32;
            assert!((b - a * 2.5f64.powi(-k)).amax() < 1e-12);
        }
    }

    #[test]
    fn smoothing_is_linear_and_symmetric() {
        let net =
            make_kernel_net(make_polynomial_profile(2, 2).unwrap(), Vec2::new(0.3, -0.1)).unwrap();
        let t = tensor_action(
            perturbed_transport(MatrixField::rotation_generator(), 1, 0.1).unwrap(),
            (0, 2),
        )
        .unwrap();
        // one node set for all fields, so linearity holds to roundoff
        let q = DiscQuadrature::new(QuadratureSpec {
            scheme: Scheme::PolarCenteredAtX,
            ..Default::default()
        })
        .unwrap();
        let f1 = conical_metric(0.4).unwrap();
        let f2 = TensorField::SmoothTest;
        let comb = TensorField::Combination(vec![(1.5, f1.clone()), (-2.0, f2.clone())]);
        let x = Vec2::new(0.05, 0.02);
        let eps = 0.1;
        let a = smooth_jet(&f1, &net, &t, &q, eps, &x, 2).unwrap();
        let b = smooth_jet(&f2, &net, &t, &q, eps, &x, 2).unwrap();
        let c = smooth_jet(&comb, &net, &t, &q, eps, &x, 2).unwrap();
        let gap = (c - (a * 1.5 - b * 2.0)).max_abs();
        assert!(
            gap < 1e-12 * c.max_abs().max(1.0),
            "{gap:e} vs {:e}",
            c.max_abs()
        );
        for m in [a.value, a.d[0], a.d[1], a.dd[0][1]] {
            assert_eq!(m[(0, 1)], m[(1, 0)]);
        }
    }

    #[test]
    fn smoothed_derivatives_match_finite_differences() {
        let net =
            make_kernel_net(make_polynomial_profile(2, 2).unwrap(), Vec2::new(0.2, 0.1)).unwrap();
        let t = tensor_action(
            perturbed_transport(
                MatrixField::Wave {
                    amplitude: Mat2::new(0.3, 0.1, -0.2, 0.4),
                    kx: Vec2::new(1.0, 0.5),
                    ky: Vec2::new(-0.7, 1.2),
                    phase: 0.2,
                },
                1,
                0.2,
            )
            .unwrap(),
            (0, 2),
        )
        .unwrap();
        let q = quad();
        let f = conical_metric(0.5).unwrap();
        let eps = 0.1;
        let x = Vec2::new(0.04, -0.03);
        let jet = smooth_jet(&f, &net, &t, &q, eps, &x, 2).unwrap();
        let h = 1e-5;
        for c in 0..2 {
            let mut e = Vec2::zeros();
            e[c] = h;
            let p = smooth_jet(&f, &net, &t, &q, eps, &(x + e), 1).unwrap();
            let m = smooth_jet(&f, &net, &t, &q, eps, &(x - e), 1).unwrap();
            assert!(((p.value - m.value) / (2.0 * h) - jet.d[c]).amax() < 1e-4);
            for k in 0..2 {
                assert!(((p.d[k] - m.d[k]) / (2.0 * h) - jet.dd[c][k]).amax() < 1e-3);
            }
        }
    }

    #[test]
    fn chart_guard_and_mass_check() {
        let net = model(2);
        let t = id();
        let q = quad();
        let f = TensorField::SmoothTest;
        let s = Smoother::new(&f, &net, &t, &q).with_chart_radius(0.5);
        assert!(matches!(
            s.jet(0.1, &Vec2::new(0.45, 0.0), 0),
            Err(Error::SupportOutsideChart { .. })
        ));
        assert!(s.jet(0.1, &Vec2::new(0.3, 0.0), 0).is_ok());
    }

    #[test]
    fn negligibility_orders() {
        let q = quad();
        let t = id();
        let points = crate::region::Region::annulus(0.2, 0.5).samples(2, 4);
        let schedule = geometric_schedule(0.08, 0.7, 6);
        let f = TensorField::SmoothTest;
        for (qq, shift, order) in [
            (2, Vec2::zeros(), 2.0),
            (4, Vec2::zeros(), 4.0),
            (2, Vec2::new(0.4, 0.2), 1.0),
        ] {
            let net = make_kernel_net(make_polynomial_profile(2, qq).unwrap(), shift).unwrap();
            let r = embed_negligibility_order(&f, &net, &t, &q, &points, &schedule, order, 0.1)
                .unwrap();
            assert!(r.pass, "q={qq} shift={shift:?} slope {}", r.slope);
            assert!((r.slope - order).abs() < 0.1, "q={qq} slope {}", r.slope);
        }
    }

    #[test]
    fn smoothing_commutes_with_affine_pullback() {
        let q = quad();
        let points = [
            Vec2::new(0.2, 0.1),
            Vec2::new(-0.15, 0.3),
            Vec2::new(0.02, -0.01),
        ];
        let net =
            make_kernel_net(make_polynomial_profile(2, 4).unwrap(), Vec2::new(0.3, 0.0)).unwrap();
        let f = conical_metric(0.4).unwrap();
        let transports = [
            identity_transport(),
            perturbed_transport(MatrixField::rotation_generator(), 2, 0.1).unwrap(),
        ];
        let maps = [
            AffineMap::rotation(std::f64::consts::FRAC_PI_4),
            AffineMap::scaling(2.0).unwrap(),
            AffineMap::new(Mat2::new(1.3, 0.2, -0.1, 0.7), Vec2::new(0.05, 0.02)).unwrap(),
        ];
        for tr in &transports {
            for map in &maps {
                let gap = pullback_commutation_check(map, &f, &net, tr, &q, &points, 0.05).unwrap();
                assert!(gap < 1e-8, "gap {gap}");
            }
        }
    }
}
