//! Smoothing-kernel nets built from a compactly supported profile.
//!
//! A profile `ρ` is a polynomial in `|z|²` times the bump
//! `exp(1/(|z|² − 1))`, normalized to unit mass with vanishing moments of
//! every order `1 ≤ |β| < q`. A net scales it to `φ_ε(x)(y) = ε⁻ⁿ ρ((y−x)/ε − c)`
//! for a fixed center shift `c`.
//!
//! No fixed profile has vanishing moments of *all* orders, so nets carry a
//! finite moment order `q`, and everything downstream is checked at that
//! order.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fit::{self, fit_log_log, Claim};
use crate::linalg::{spectral_norm, AffineMap, Mat2, Vec2};
use crate::quadrature::{DiscQuadrature, GaussRule, QuadratureSpec};
use crate::region::Region;

/// Nodes used when solving the moment system. Far beyond what the smooth
/// bump needs for double precision.
const CONSTRUCTION_NODES: usize = 256;

/// Highest supported moment order; the Hankel moment system gets
/// ill-conditioned beyond this.
pub const MAX_MOMENT_ORDER: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MollifierProfile {
    dim: usize,
    radius: f64,
    /// Coefficients of `p(s) = Σ c_k s^k`, `s = |z|²`.
    coeffs: Vec<f64>,
    moment_order: usize,
}

fn bump(s: f64) -> [f64; 3] {
    if s >= 1.0 {
        return [0.0; 3];
    }
    let t = 1.0 - s;
    let b = (-1.0 / t).exp();
    if b == 0.0 {
        return [0.0; 3];
    }
    let t2 = t * t;
    [b, -b / t2, b * (2.0 * s - 1.0) / (t2 * t2)]
}

/// Radial measure moments `∫ |z|^{2k} bump(|z|²) dz` in dimension `dim`.
fn bump_moment(dim: usize, k: usize, rule: &GaussRule) -> f64 {
    match dim {
        1 => 2.0 * rule.integrate(0.0, 1.0, |t| t.powi(2 * k as i32) * bump(t * t)[0]),
        _ => {
            2.0 * std::f64::consts::PI
                * rule.integrate(0.0, 1.0, |r| r.powi(2 * k as i32 + 1) * bump(r * r)[0])
        }
    }
}

/// Builds the radial profile of moment order `q` in dimension `dim`.
///
/// Odd moments vanish by symmetry, so only the even radial moments
/// `∫|z|^{2k}ρ` for `0 < 2k < q` have to be killed; together with unit mass
/// that is a small Hankel system in the coefficients of `p`.
pub fn make_polynomial_profile(dim: usize, q: usize) -> Result<MollifierProfile> {
    if !(dim == 1 || dim == 2) {
        return Err(Error::Config(format!(
            "profile dimension must be 1 or 2, got {dim}"
        )));
    }
    if !(2..=MAX_MOMENT_ORDER).contains(&q) {
        return Err(Error::Config(format!(
            "moment order must lie in 2..={MAX_MOMENT_ORDER}, got {q}"
        )));
    }
    let m = (q - 1) / 2 + 1;
    let rule = GaussRule::new(CONSTRUCTION_NODES);
    let mu: Vec<f64> = (0..2 * m).map(|k| bump_moment(dim, k, &rule)).collect();
    let system = DMatrix::from_fn(m, m, |k, j| mu[k + j]);
    let mut rhs = DVector::zeros(m);
    rhs[0] = 1.0;
    let coeffs = system
        .lu()
        .solve(&rhs)
        .expect("Hankel moment matrix of a positive measure is nonsingular");
    Ok(MollifierProfile {
        dim,
        radius: 1.0,
        coeffs: coeffs.iter().copied().collect(),
        moment_order: q,
    })
}

impl MollifierProfile {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn moment_order(&self) -> usize {
        self.moment_order
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    /// `F(s), F'(s), F''(s)` for the radial form `ρ(z) = F(|z|²)`.
    fn radial(&self, s: f64) -> [f64; 3] {
        let [b, b1, b2] = bump(s);
        if b == 0.0 {
            return [0.0; 3];
        }
        let (mut p, mut p1, mut p2) = (0.0, 0.0, 0.0);
        for c in self.coeffs.iter().rev() {
            p2 = p2 * s + 2.0 * p1;
            p1 = p1 * s + p;
            p = p * s + c;
        }
        [p * b, p1 * b + p * b1, p2 * b + 2.0 * p1 * b1 + p * b2]
    }

    /// Value at a 2-D point.
    pub fn eval(&self, z: &Vec2) -> f64 {
        self.radial(z.norm_squared())[0]
    }

    pub fn grad(&self, z: &Vec2) -> Vec2 {
        z * (2.0 * self.radial(z.norm_squared())[1])
    }

    pub fn hess(&self, z: &Vec2) -> Mat2 {
        let [_, f1, f2] = self.radial(z.norm_squared());
        Mat2::identity() * (2.0 * f1) + z * z.transpose() * (4.0 * f2)
    }

    /// Value, gradient and Hessian in one radial evaluation.
    pub fn eval_all(&self, z: &Vec2) -> (f64, Vec2, Mat2) {
        let [f0, f1, f2] = self.radial(z.norm_squared());
        (
            f0,
            z * (2.0 * f1),
            Mat2::identity() * (2.0 * f1) + z * z.transpose() * (4.0 * f2),
        )
    }

    pub fn eval_1d(&self, t: f64) -> f64 {
        self.radial(t * t)[0]
    }

    pub fn deriv_1d(&self, t: f64) -> f64 {
        2.0 * t * self.radial(t * t)[1]
    }

    pub fn deriv2_1d(&self, t: f64) -> f64 {
        let [_, f1, f2] = self.radial(t * t);
        2.0 * f1 + 4.0 * f2 * t * t
    }

    fn radial_integral(&self, g: impl Fn(f64, f64) -> f64) -> f64 {
        // g(r, value) integrated against the radial measure of `dim`
        let rule = GaussRule::new(CONSTRUCTION_NODES);
        match self.dim {
            1 => 2.0 * rule.integrate(0.0, self.radius, |t| g(t, self.eval_1d(t))),
            _ => {
                2.0 * std::f64::consts::PI
                    * rule.integrate(0.0, self.radius, |r| r * g(r, self.radial(r * r)[0]))
            }
        }
    }

    /// `∫ |z|^{2k} ρ(z) dz` in the profile's dimension.
    pub fn radial_moment(&self, k: usize) -> f64 {
        self.radial_integral(|r, v| r.powi(2 * k as i32) * v)
    }

    pub fn l1_norm(&self) -> f64 {
        self.radial_integral(|_, v| v.abs())
    }

    pub fn l2_norm_squared(&self) -> f64 {
        self.radial_integral(|_, v| v * v)
    }
}

/// A 2-D smoothing-kernel net
/// `φ_ε(x)(y) = ε⁻² |det L| ρ(L(y − x)/ε − c)`.
///
/// The model and shifted nets have `L = I`; a general `L` appears only as
/// the pushforward of a net under an affine map.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothingKernelNet {
    profile: MollifierProfile,
    shift: Vec2,
    linear: Mat2,
    linear_inv: Mat2,
    abs_det: f64,
}

pub fn make_kernel_net(profile: MollifierProfile, shift: Vec2) -> Result<SmoothingKernelNet> {
    if profile.dim != 2 {
        return Err(Error::Config("2-D kernel nets need a 2-D profile".into()));
    }
    if !(shift.x.is_finite() && shift.y.is_finite()) {
        return Err(Error::Config("kernel shift must be finite".into()));
    }
    Ok(SmoothingKernelNet {
        profile,
        shift,
        linear: Mat2::identity(),
        linear_inv: Mat2::identity(),
        abs_det: 1.0,
    })
}

impl SmoothingKernelNet {
    pub fn profile(&self) -> &MollifierProfile {
        &self.profile
    }

    pub fn shift(&self) -> Vec2 {
        self.shift
    }

    pub fn moment_order(&self) -> usize {
        self.profile.moment_order
    }

    /// `C` with `supp φ_ε(x) ⊆ B_{Cε}(x)`.
    pub fn support_constant(&self) -> f64 {
        spectral_norm(&self.linear_inv) * (self.profile.radius + self.shift.norm())
    }

    /// Profile coordinate of `y` relative to `x`.
    pub fn local_coordinate(&self, eps: f64, x: &Vec2, y: &Vec2) -> Vec2 {
        self.linear * (y - x) / eps - self.shift
    }

    /// Inverse of [`Self::local_coordinate`].
    pub fn sample_point(&self, eps: f64, x: &Vec2, z: &Vec2) -> Vec2 {
        x + self.linear_inv * (z + self.shift) * eps
    }

    pub fn eval(&self, eps: f64, x: &Vec2, y: &Vec2) -> f64 {
        let z = self.local_coordinate(eps, x, y);
        self.abs_det * self.profile.eval(&z) / (eps * eps)
    }

    /// `∂_x φ_ε(x)(y)`.
    pub fn dx(&self, eps: f64, x: &Vec2, y: &Vec2) -> Vec2 {
        let z = self.local_coordinate(eps, x, y);
        -self.linear.transpose() * self.profile.grad(&z) * (self.abs_det / eps.powi(3))
    }

    /// `∂_x ∂_x φ_ε(x)(y)`.
    pub fn dxx(&self, eps: f64, x: &Vec2, y: &Vec2) -> Mat2 {
        let z = self.local_coordinate(eps, x, y);
        self.linear.transpose() * self.profile.hess(&z) * self.linear * (self.abs_det / eps.powi(4))
    }

    /// Kernel value and x-derivatives per unit profile measure `dz` at the
    /// profile coordinate `z`: `(ρ, −Lᵀ∇ρ/ε, LᵀHρL/ε²)`.
    pub fn weights_at(&self, eps: f64, z: &Vec2) -> (f64, Vec2, Mat2) {
        let (v, g, h) = self.profile.eval_all(z);
        let lt = self.linear.transpose();
        (v, -lt * g / eps, lt * h * self.linear / (eps * eps))
    }

    /// `(μ₀)_* Φ`: the net transported along an affine map, with the density
    /// picking up `|det Dμ|⁻¹`.
    pub fn pushforward(&self, map: &AffineMap) -> SmoothingKernelNet {
        let linear = self.linear * map.inverse_matrix();
        let linear_inv = map.matrix * self.linear_inv;
        SmoothingKernelNet {
            profile: self.profile.clone(),
            shift: self.shift,
            linear,
            linear_inv,
            abs_det: linear.determinant().abs(),
        }
    }

    /// `(Φ_ε f)(x) = ∫ f(y) φ_ε(x)(y) dy`.
    pub fn smooth_scalar(
        &self,
        quad: &DiscQuadrature,
        eps: f64,
        x: &Vec2,
        f: impl Fn(&Vec2) -> f64,
    ) -> f64 {
        let mut acc = 0.0;
        quad.for_each(self.profile.radius, None, |z, w| {
            acc += w * self.profile.eval(&z) * f(&self.sample_point(eps, x, &z));
        });
        acc
    }
}

/// 1-D net `ρ_ε(x)(y) = ε⁻¹ ρ((y − x)/ε − c)`.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelNet1d {
    profile: MollifierProfile,
    shift: f64,
}

impl KernelNet1d {
    pub fn new(profile: MollifierProfile, shift: f64) -> Result<Self> {
        if profile.dim != 1 {
            return Err(Error::Config("1-D kernel nets need a 1-D profile".into()));
        }
        Ok(Self { profile, shift })
    }

    pub fn support_constant(&self) -> f64 {
        self.profile.radius + self.shift.abs()
    }

    pub fn eval(&self, eps: f64, x: f64, y: f64) -> f64 {
        self.profile.eval_1d((y - x) / eps - self.shift) / eps
    }

    pub fn dx(&self, eps: f64, x: f64, y: f64) -> f64 {
        -self.profile.deriv_1d((y - x) / eps - self.shift) / (eps * eps)
    }

    /// Support interval of `ρ_ε(x)`.
    pub fn support(&self, eps: f64, x: f64) -> (f64, f64) {
        let c = x + eps * self.shift;
        (c - eps * self.profile.radius, c + eps * self.profile.radius)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition {
    Support,
    UnitMassLimit,
    DerivativeL1Growth,
    FiniteMomentOrder,
    /// Transport nets: no growth of the sup norms along the schedule.
    Boundedness,
    /// Transport nets: order of `A_ε(x,x) − I`.
    DiagonalOrder,
    /// Transport nets: near-diagonal deviation tends to zero.
    NearDiagonal,
}

impl Condition {
    pub fn label(&self) -> &'static str {
        match self {
            Condition::Support => "support",
            Condition::UnitMassLimit => "unit-mass-limit",
            Condition::DerivativeL1Growth => "derivative-L1-growth",
            Condition::FiniteMomentOrder => "finite-moment-order",
            Condition::Boundedness => "boundedness",
            Condition::DiagonalOrder => "diagonal-order",
            Condition::NearDiagonal => "near-diagonal",
        }
    }
}

/// Outcome of one admissibility condition over an ε schedule.
///
/// `fitted_slope` is NaN for conditions that are not slope judgements.
#[derive(Clone, Debug, Serialize)]
pub struct AdmissibilityReport {
    pub condition: Condition,
    /// Derivative order or claimed order the condition was tested at.
    pub order: Option<u32>,
    pub measured: Vec<(f64, f64)>,
    pub fitted_slope: f64,
    pub pass: bool,
    pub tolerance_used: f64,
}

impl AdmissibilityReport {
    pub fn condition_id(&self) -> String {
        match self.order {
            Some(k) => format!("{}-{k}", self.condition.label()),
            None => self.condition.label().to_string(),
        }
    }

    /// CSV rows `condition_id, eps, value, fitted_slope, pass`.
    pub fn csv_rows(&self) -> Vec<[String; 5]> {
        self.measured
            .iter()
            .map(|(eps, v)| {
                [
                    self.condition_id(),
                    eps.to_string(),
                    v.to_string(),
                    self.fitted_slope.to_string(),
                    self.pass.to_string(),
                ]
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct TestObjectOptions {
    pub max_deriv: usize,
    /// Order the moment condition is certified at; defaults to the profile's `q`.
    pub certify_order: Option<usize>,
    pub quadrature: QuadratureSpec,
    pub rings: usize,
    pub angles: usize,
}

impl Default for TestObjectOptions {
    fn default() -> Self {
        Self {
            max_deriv: 2,
            certify_order: None,
            quadrature: QuadratureSpec::default(),
            rings: 3,
            angles: 8,
        }
    }
}

pub const DERIVATIVE_GROWTH_TOL: f64 = 0.2;
pub const UNIT_MASS_TOL: f64 = 1e-6;
pub const MOMENT_ORDER_TOL: f64 = 0.3;
/// Absolute error allowed when reproducing polynomials of degree `< q`.
pub const REPRODUCTION_TOL: f64 = 1e-9;
/// Smoothing errors of the probe below this are quadrature noise.
pub const MOMENT_NOISE: f64 = 1e-12;

/// Smooth non-polynomial probe for the moment-order condition.
fn order_probe(y: &Vec2) -> f64 {
    (0.6 * y.x).exp() * (0.8 * y.y + 0.3).cos()
}

pub fn check_test_object(
    net: &SmoothingKernelNet,
    region: &Region,
    schedule: &[f64],
    max_deriv: usize,
) -> Result<Vec<AdmissibilityReport>> {
    check_test_object_with(
        net,
        region,
        schedule,
        &TestObjectOptions {
            max_deriv,
            ..Default::default()
        },
    )
}

pub fn check_test_object_with(
    net: &SmoothingKernelNet,
    region: &Region,
    schedule: &[f64],
    opts: &TestObjectOptions,
) -> Result<Vec<AdmissibilityReport>> {
    fit::validate_schedule(schedule)?;
    let quad = DiscQuadrature::new(opts.quadrature)?;
    let points = region.samples(opts.rings, opts.angles);
    let radius = net.profile.radius;
    let c = net.support_constant();
    let mut reports = Vec::new();

    // support: the kernel vanishes identically outside B_{Cε}(x)
    let mut support = Vec::new();
    for &eps in schedule {
        let mut worst: f64 = 0.0;
        for x in &points {
            for delta in [1e-12, 1e-6, 1e-2, 0.5] {
                for j in 0..16 {
                    let (s, co) = (std::f64::consts::PI * j as f64 / 8.0).sin_cos();
                    let y = x + Vec2::new(co, s) * (c * eps * (1.0 + delta));
                    worst = worst.max(net.eval(eps, x, &y).abs());
                }
            }
        }
        support.push((eps, worst));
    }
    reports.push(AdmissibilityReport {
        condition: Condition::Support,
        order: None,
        pass: support.iter().all(|(_, v)| *v == 0.0),
        measured: support,
        fitted_slope: f64::NAN,
        tolerance_used: 0.0,
    });

    // derivative growth: sup_x max_{|α|=k} ||∂^α_x φ_ε(x)||_{L¹}
    for k in 1..=opts.max_deriv.min(2) {
        let mut table = Vec::new();
        for &eps in schedule {
            let mut sup: f64 = 0.0;
            for _x in &points {
                let mut norms = [0.0; 4];
                quad.for_each(radius, None, |z, w| {
                    let (_, d1, d2) = net.weights_at(eps, &z);
                    if k == 1 {
                        norms[0] += w * d1.x.abs();
                        norms[1] += w * d1.y.abs();
                    } else {
                        norms[0] += w * d2[(0, 0)].abs();
                        norms[1] += w * d2[(0, 1)].abs();
                        norms[2] += w * d2[(1, 1)].abs();
                    }
                });
                sup = sup.max(norms.iter().cloned().fold(0.0, f64::max));
            }
            table.push((eps, sup));
        }
        let fitted = fit_log_log(&table);
        let claimed = -(k as f64);
        reports.push(AdmissibilityReport {
            condition: Condition::DerivativeL1Growth,
            order: Some(k as u32),
            pass: fit::judge(&fitted, claimed, Claim::AtLeast, DERIVATIVE_GROWTH_TOL),
            measured: table,
            fitted_slope: fitted.slope,
            tolerance_used: DERIVATIVE_GROWTH_TOL,
        });
    }

    // unit mass limit: sup_x ∫|φ_ε(x)| → 1
    let mut mass = Vec::new();
    for &eps in schedule {
        let mut sup: f64 = 0.0;
        for _x in &points {
            let mut acc = 0.0;
            quad.for_each(radius, None, |z, w| acc += w * net.profile.eval(&z).abs());
            sup = sup.max(acc);
        }
        mass.push((eps, sup));
    }
    reports.push(AdmissibilityReport {
        condition: Condition::UnitMassLimit,
        order: None,
        pass: mass.iter().all(|(_, v)| (v - 1.0).abs() <= UNIT_MASS_TOL),
        measured: mass,
        fitted_slope: f64::NAN,
        tolerance_used: UNIT_MASS_TOL,
    });

    // finite moment order: polynomials of degree < certify reproduced, and the
    // smoothing error of a generic smooth function decays at the certified order
    let q = net.profile.moment_order;
    let certify = opts.certify_order.unwrap_or(q);
    let mut reproduced = true;
    for &eps in schedule {
        for x in &points {
            for a in 0..certify {
                for b in 0..certify - a {
                    let mono = |y: &Vec2| y.x.powi(a as i32) * y.y.powi(b as i32);
                    let err = (net.smooth_scalar(&quad, eps, x, mono) - mono(x)).abs();
                    if err > REPRODUCTION_TOL {
                        reproduced = false;
                    }
                }
            }
        }
    }
    let mut order_table = Vec::new();
    for &eps in schedule {
        let sup = points
            .iter()
            .map(|x| (net.smooth_scalar(&quad, eps, x, order_probe) - order_probe(x)).abs())
            .fold(0.0, f64::max);
        order_table.push((eps, sup));
    }
    let order_table = fit::denoise(&order_table, |_| MOMENT_NOISE);
    let fitted = fit_log_log(&order_table);
    reports.push(AdmissibilityReport {
        condition: Condition::FiniteMomentOrder,
        order: Some(certify as u32),
        pass: reproduced && fit::judge(&fitted, certify as f64, Claim::AtLeast, MOMENT_ORDER_TOL),
        measured: order_table,
        fitted_slope: fitted.slope,
        tolerance_used: MOMENT_ORDER_TOL,
    });
    Ok(reports)
}

#[derive(Clone, Debug, Serialize)]
pub struct DeltaProductRow {
    pub eps: f64,
    /// `∫ ρ_ε ρ̃_ε ω`, identically zero for disjointly supported nets.
    pub cross: f64,
    /// `∫ ρ_ε² ω`.
    pub self_product: f64,
    /// `ε⁻¹ ∫ ρ²`, the self product against `ω ≡ 1`.
    pub self_product_unit: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DeltaProductReport {
    pub rows: Vec<DeltaProductRow>,
    pub self_slope: crate::fit::OrderFitReport,
    pub cross_identically_zero: bool,
}

pub const SELF_PRODUCT_SLOPE_TOL: f64 = 0.05;

/// The two shifted 1-D delta nets `ρ_ε(y) = ε⁻¹ρ(y/ε + 1)` and
/// `ρ̃_ε(y) = ε⁻¹ρ(y/ε − 1)`: their product vanishes pointwise, while the
/// square of either one blows up like `ε⁻¹` against a test function with
/// `ω(0) ≠ 0`.
pub fn delta_product_demo(
    profile: &MollifierProfile,
    schedule: &[f64],
    omega: impl Fn(f64) -> f64,
) -> Result<DeltaProductReport> {
    if profile.dim != 1 {
        return Err(Error::Config(
            "delta-product demo needs a 1-D profile".into(),
        ));
    }
    if profile.radius > 1.0 {
        return Err(Error::Config(
            "profile radius must be <= 1 for disjoint shifted supports".into(),
        ));
    }
    fit::validate_schedule(schedule)?;
    let left = KernelNet1d::new(profile.clone(), -1.0)?;
    let right = KernelNet1d::new(profile.clone(), 1.0)?;
    let rule = GaussRule::new(128);
    let unit = profile.l2_norm_squared();
    let mut rows = Vec::new();
    for &eps in schedule {
        let (a, b) = left.support(eps, 0.0);
        let (c, d) = right.support(eps, 0.0);
        let lo = a.min(c);
        let hi = b.max(d);
        // panels split at the contact point so each side is a smooth integrand
        let mid = 0.5 * (b + c);
        let mut cross = 0.0;
        for (p, q) in [(lo, mid), (mid, hi)] {
            for (y, w) in rule.on(p, q) {
                cross += w * left.eval(eps, 0.0, y) * right.eval(eps, 0.0, y) * omega(y);
            }
        }
        let self_product: f64 = rule
            .on(a, b)
            .map(|(y, w)| w * left.eval(eps, 0.0, y).powi(2) * omega(y))
            .sum();
        rows.push(DeltaProductRow {
            eps,
            cross,
            self_product,
            self_product_unit: unit / eps,
        });
    }
    let self_slope = crate::fit::OrderFitReport::new(
        "delta-self-product",
        rows.iter().map(|r| (r.eps, r.self_product)).collect(),
        -1.0,
        Claim::Within,
        SELF_PRODUCT_SLOPE_TOL,
    );
    Ok(DeltaProductReport {
        cross_identically_zero: rows.iter().all(|r| r.cross == 0.0),
        rows,
        self_slope,
    })
}

/// Standard 1-D test function with `ω(0) = 1`, supported in `(−1, 1)`.
pub fn unit_bump_1d(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - t * t)).exp()
    }
}
