//! Transport-operator nets `A_ε(x, y)` on the chart and their action on
//! covariant 2-tensors.
//!
//! Only two families are provided: the identity, and `I + ε^k B(x, y)` for
//! a smooth matrix field `B`. The identity is the only family flat to all
//! orders on the diagonal; the perturbations realize order-`k` deviations
//! for regularization-independence experiments. Derivatives are supplied
//! analytically by each family.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fit::{self, fit_log_log, Claim};
use crate::kernels::{AdmissibilityReport, Condition};
use crate::linalg::{spectral_norm, AffineMap, Mat2, MatJet, Vec2};
use crate::region::Region;

/// Which argument of a two-point field is differentiated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    First,
    Second,
}

/// A smooth 2×2 matrix field on Ω × Ω with closed-form derivatives.
#[derive(Clone, Debug, PartialEq)]
pub enum MatrixField {
    Constant(Mat2),
    /// `amplitude · sin(kx·x + ky·y + phase)`.
    Wave {
        amplitude: Mat2,
        kx: Vec2,
        ky: Vec2,
        phase: f64,
    },
}

impl MatrixField {
    pub fn rotation_generator() -> Self {
        MatrixField::Constant(Mat2::new(0.0, -1.0, 1.0, 0.0))
    }

    pub fn value(&self, x: &Vec2, y: &Vec2) -> Mat2 {
        match self {
            MatrixField::Constant(m) => *m,
            MatrixField::Wave {
                amplitude,
                kx,
                ky,
                phase,
            } => amplitude * (kx.dot(x) + ky.dot(y) + phase).sin(),
        }
    }

    pub fn jet(&self, x: &Vec2, y: &Vec2, slot: Slot) -> MatJet {
        match self {
            MatrixField::Constant(m) => MatJet::constant(*m),
            MatrixField::Wave {
                amplitude,
                kx,
                ky,
                phase,
            } => {
                let arg = kx.dot(x) + ky.dot(y) + phase;
                let (s, c) = arg.sin_cos();
                let k = match slot {
                    Slot::First => kx,
                    Slot::Second => ky,
                };
                MatJet {
                    value: amplitude * s,
                    d: [amplitude * (c * k[0]), amplitude * (c * k[1])],
                    dd: [
                        [
                            amplitude * (-s * k[0] * k[0]),
                            amplitude * (-s * k[0] * k[1]),
                        ],
                        [
                            amplitude * (-s * k[1] * k[0]),
                            amplitude * (-s * k[1] * k[1]),
                        ],
                    ],
                }
            }
        }
    }

    /// Upper bound for the spectral norm over the whole plane.
    pub fn sup_norm(&self) -> f64 {
        match self {
            MatrixField::Constant(m) => spectral_norm(m),
            MatrixField::Wave { amplitude, .. } => spectral_norm(amplitude),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TransportNet {
    Identity,
    Perturbed {
        field: MatrixField,
        order: u32,
    },
    /// `(μ_* A)(x', y') = M A(μ⁻¹x', μ⁻¹y') M⁻¹`.
    Pushforward {
        base: Box<TransportNet>,
        map: AffineMap,
    },
}

pub fn identity_transport() -> TransportNet {
    TransportNet::Identity
}

/// `A_ε(x, y) = I + ε^k B(x, y)`, rejected when `ε^k ‖B‖ ≥ 1` could occur
/// for some `ε ≤ max_eps`.
pub fn perturbed_transport(field: MatrixField, order: u32, max_eps: f64) -> Result<TransportNet> {
    if order == 0 {
        return Err(Error::Config(
            "perturbation order k must be positive".into(),
        ));
    }
    let bound = max_eps.powi(order as i32) * field.sup_norm();
    if !(bound < 1.0) {
        return Err(Error::Config(format!(
            "perturbed transport may lose invertibility: eps^k |B| = {bound} >= 1 at eps = {max_eps}"
        )));
    }
    Ok(TransportNet::Perturbed { field, order })
}

impl TransportNet {
    pub fn family_id(&self) -> String {
        match self {
            TransportNet::Identity => "identity".into(),
            TransportNet::Perturbed { order, .. } => format!("perturbed-k{order}"),
            TransportNet::Pushforward { base, .. } => format!("pushforward({})", base.family_id()),
        }
    }

    pub fn is_identity(&self) -> bool {
        match self {
            TransportNet::Identity => true,
            TransportNet::Perturbed { .. } => false,
            TransportNet::Pushforward { base, .. } => base.is_identity(),
        }
    }

    pub fn eval(&self, eps: f64, x: &Vec2, y: &Vec2) -> Mat2 {
        match self {
            TransportNet::Identity => Mat2::identity(),
            TransportNet::Perturbed { field, order } => {
                Mat2::identity() + field.value(x, y) * eps.powi(*order as i32)
            }
            TransportNet::Pushforward { base, map } => {
                map.matrix
                    * base.eval(eps, &map.apply_inverse(x), &map.apply_inverse(y))
                    * map.inverse_matrix()
            }
        }
    }

    /// Value and derivatives in the chosen argument.
    pub fn jet(&self, eps: f64, x: &Vec2, y: &Vec2, slot: Slot) -> MatJet {
        match self {
            TransportNet::Identity => MatJet::constant(Mat2::identity()),
            TransportNet::Perturbed { field, order } => {
                let mut j = field.jet(x, y, slot) * eps.powi(*order as i32);
                j.value += Mat2::identity();
                j
            }
            TransportNet::Pushforward { base, map } => {
                let inner = base.jet(eps, &map.apply_inverse(x), &map.apply_inverse(y), slot);
                let jinv = map.inverse_matrix();
                let conj = |m: &Mat2| map.matrix * m * jinv;
                let mut out = MatJet::constant(conj(&inner.value));
                for c in 0..2 {
                    let mut d = Mat2::zeros();
                    for a in 0..2 {
                        d += inner.d[a] * jinv[(a, c)];
                    }
                    out.d[c] = conj(&d);
                    for e in 0..2 {
                        let mut dd = Mat2::zeros();
                        for a in 0..2 {
                            for b in 0..2 {
                                dd += inner.dd[a][b] * (jinv[(a, c)] * jinv[(b, e)]);
                            }
                        }
                        out.dd[c][e] = conj(&dd);
                    }
                }
                out
            }
        }
    }

    /// `∂_x A_ε(x, y)`.
    pub fn dx_eval(&self, eps: f64, x: &Vec2, y: &Vec2) -> [Mat2; 2] {
        self.jet(eps, x, y, Slot::First).d
    }

    pub fn dxx_eval(&self, eps: f64, x: &Vec2, y: &Vec2) -> [[Mat2; 2]; 2] {
        self.jet(eps, x, y, Slot::First).dd
    }

    pub fn pushforward(&self, map: &AffineMap) -> TransportNet {
        TransportNet::Pushforward {
            base: Box::new(self.clone()),
            map: *map,
        }
    }
}

/// The functorial action of a transport net on a tensor fiber.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorTransport {
    base: TransportNet,
    valence: (u32, u32),
}

/// Lifts `net` to tensors of valence `(r, s)`; only covariant 2-tensors
/// `(0, 2)` are needed for metrics.
pub fn tensor_action(net: TransportNet, valence: (u32, u32)) -> Result<TensorTransport> {
    if valence != (0, 2) {
        return Err(Error::Unsupported(format!(
            "tensor action of valence ({}, {}); only (0, 2) is implemented",
            valence.0, valence.1
        )));
    }
    Ok(TensorTransport { base: net, valence })
}

impl TensorTransport {
    pub fn base(&self) -> &TransportNet {
        &self.base
    }

    pub fn valence(&self) -> (u32, u32) {
        self.valence
    }

    pub fn is_identity(&self) -> bool {
        self.base.is_identity()
    }

    /// Moves the fiber value `v` at `y` to `x`: `A(y,x)ᵀ v A(y,x)`, i.e. the
    /// action through `A*(x,y) = A(y,x)ᵀ`.
    pub fn act(&self, eps: f64, x: &Vec2, y: &Vec2, v: &Mat2) -> Mat2 {
        let a = self.base.eval(eps, y, x);
        a.transpose() * v * a
    }

    /// `A(y, x)` with derivatives in `x`.
    pub fn transport_jet(&self, eps: f64, x: &Vec2, y: &Vec2) -> MatJet {
        self.base.jet(eps, y, x, Slot::Second)
    }

    /// [`Self::act`] with its first and second x-derivatives, for a fixed
    /// fiber value `v`.
    pub fn act_jet(&self, eps: f64, x: &Vec2, y: &Vec2, v: &Mat2) -> MatJet {
        congruence_jet(&self.transport_jet(eps, x, y), v)
    }
}

/// Product-rule derivatives of `Aᵀ v A` for constant `v`.
pub fn congruence_jet(a: &MatJet, v: &Mat2) -> MatJet {
    let at = a.value.transpose();
    let va = v * a.value;
    let vd = [v * a.d[0], v * a.d[1]];
    let mut out = MatJet::constant(at * va);
    for c in 0..2 {
        out.d[c] = a.d[c].transpose() * va + at * vd[c];
        for e in 0..2 {
            out.dd[c][e] = a.dd[c][e].transpose() * va
                + a.d[c].transpose() * vd[e]
                + a.d[e].transpose() * vd[c]
                + at * (v * a.dd[c][e]);
        }
    }
    out
}

pub const BOUNDEDNESS_TOL: f64 = 0.1;
pub const DIAGONAL_ORDER_TOL: f64 = 0.05;

#[derive(Clone, Debug, Serialize)]
pub struct AdmissibleOptions {
    pub rings: usize,
    pub angles: usize,
    /// Radius constant for the near-diagonal sup, `|y − x| ≤ Cε`.
    pub support_constant: f64,
}

impl Default for AdmissibleOptions {
    fn default() -> Self {
        Self {
            rings: 3,
            angles: 6,
            support_constant: 1.0,
        }
    }
}

pub fn check_admissible(
    net: &TransportNet,
    region: &Region,
    schedule: &[f64],
    orders: &[u32],
) -> Result<Vec<AdmissibilityReport>> {
    check_admissible_with(net, region, schedule, orders, &AdmissibleOptions::default())
}

pub fn check_admissible_with(
    net: &TransportNet,
    region: &Region,
    schedule: &[f64],
    orders: &[u32],
    opts: &AdmissibleOptions,
) -> Result<Vec<AdmissibilityReport>> {
    fit::validate_schedule(schedule)?;
    let points = region.samples(opts.rings, opts.angles);
    let mut reports = Vec::new();

    // boundedness of A and ∂_x A over region × region
    let mut bounded = Vec::new();
    for &eps in schedule {
        let mut sup: f64 = 0.0;
        for x in &points {
            for y in &points {
                let j = net.jet(eps, x, y, Slot::First);
                sup = sup
                    .max(spectral_norm(&j.value))
                    .max(spectral_norm(&j.d[0]))
                    .max(spectral_norm(&j.d[1]));
            }
        }
        bounded.push((eps, sup));
    }
    let fitted = fit_log_log(&bounded);
    reports.push(AdmissibilityReport {
        condition: Condition::Boundedness,
        order: None,
        pass: fit::judge(&fitted, 0.0, Claim::AtLeast, BOUNDEDNESS_TOL),
        measured: bounded,
        fitted_slope: fitted.slope,
        tolerance_used: BOUNDEDNESS_TOL,
    });

    // diagonal deviation sup_x |A_ε(x,x) − I| at each requested order
    let diagonal: Vec<(f64, f64)> = schedule
        .iter()
        .map(|&eps| {
            let sup = points
                .iter()
                .map(|x| spectral_norm(&(net.eval(eps, x, x) - Mat2::identity())))
                .fold(0.0, f64::max);
            (eps, sup)
        })
        .collect();
    let fitted = fit_log_log(&diagonal);
    for &m in orders {
        reports.push(AdmissibilityReport {
            condition: Condition::DiagonalOrder,
            order: Some(m),
            pass: fit::judge(&fitted, m as f64, Claim::AtLeast, DIAGONAL_ORDER_TOL),
            measured: diagonal.clone(),
            fitted_slope: fitted.slope,
            tolerance_used: DIAGONAL_ORDER_TOL,
        });
    }

    // near-diagonal entries |A^i_j(x,y) − δ^i_j| for |y − x| ≤ Cε
    let near: Vec<(f64, f64)> = schedule
        .iter()
        .map(|&eps| {
            let mut sup: f64 = 0.0;
            for x in &points {
                for r in [0.0, 0.5, 1.0] {
                    for j in 0..8 {
                        let (s, c) = (std::f64::consts::FRAC_PI_4 * j as f64).sin_cos();
                        let y = x + Vec2::new(c, s) * (r * opts.support_constant * eps);
                        sup = sup.max((net.eval(eps, x, &y) - Mat2::identity()).amax());
                    }
                }
            }
            (eps, sup)
        })
        .collect();
    let fitted = fit_log_log(&near);
    let decreasing = near.windows(2).all(|w| w[1].1 <= w[0].1);
    reports.push(AdmissibilityReport {
        condition: Condition::NearDiagonal,
        order: None,
        pass: fitted.is_vanishing() || (fitted.slope > 0.0 && decreasing),
        measured: near,
        fitted_slope: fitted.slope,
        tolerance_used: 0.0,
    });
    Ok(reports)
}
