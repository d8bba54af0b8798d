//! Small fixed-size linear algebra on the 2-D chart.
//!
//! Everything lives on a single coordinate chart of the plane, so the only
//! shapes that appear are 2-vectors, 2×2 matrices, and arrays of those for
//! first and second partial derivatives.

use std::ops::{Add, Mul, Sub};

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;
pub type Mat2 = Matrix2<f64>;

/// A 2×2 matrix-valued function together with its first and second partial
/// derivatives at one point. `d[c]` is `∂_c`, `dd[c][e]` is `∂_c ∂_e`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatJet {
    pub value: Mat2,
    pub d: [Mat2; 2],
    pub dd: [[Mat2; 2]; 2],
}

impl MatJet {
    pub fn zero() -> Self {
        Self::constant(Mat2::zeros())
    }

    pub fn constant(value: Mat2) -> Self {
        Self {
            value,
            d: [Mat2::zeros(); 2],
            dd: [[Mat2::zeros(); 2]; 2],
        }
    }

    /// Makes every stored matrix exactly symmetric by copying the upper
    /// off-diagonal entry into the lower one.
    pub fn symmetrize(&mut self) {
        mirror(&mut self.value);
        for c in 0..2 {
            mirror(&mut self.d[c]);
            for e in 0..2 {
                mirror(&mut self.dd[c][e]);
            }
        }
    }

    pub fn map(&self, f: impl Fn(&Mat2) -> Mat2) -> Self {
        Self {
            value: f(&self.value),
            d: [f(&self.d[0]), f(&self.d[1])],
            dd: [
                [f(&self.dd[0][0]), f(&self.dd[0][1])],
                [f(&self.dd[1][0]), f(&self.dd[1][1])],
            ],
        }
    }

    /// Largest absolute entry over value and all derivatives.
    pub fn max_abs(&self) -> f64 {
        let mut m = self.value.amax();
        for c in 0..2 {
            m = m.max(self.d[c].amax());
            for e in 0..2 {
                m = m.max(self.dd[c][e].amax());
            }
        }
        m
    }
}

impl Add for MatJet {
    type Output = MatJet;
    fn add(self, rhs: MatJet) -> MatJet {
        let mut out = self;
        out.value += rhs.value;
        for c in 0..2 {
            out.d[c] += rhs.d[c];
            for e in 0..2 {
                out.dd[c][e] += rhs.dd[c][e];
            }
        }
        out
    }
}

impl Sub for MatJet {
    type Output = MatJet;
    fn sub(self, rhs: MatJet) -> MatJet {
        self + rhs * -1.0
    }
}

impl Mul<f64> for MatJet {
    type Output = MatJet;
    fn mul(self, s: f64) -> MatJet {
        self.map(|m| m * s)
    }
}

fn mirror(m: &mut Mat2) {
    m[(1, 0)] = m[(0, 1)];
}

/// An affine diffeomorphism `y ↦ M y + b` of the plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineMap {
    pub matrix: Mat2,
    pub shift: Vec2,
    inverse: Mat2,
}

impl AffineMap {
    pub fn new(matrix: Mat2, shift: Vec2) -> Result<Self> {
        let det = matrix.determinant();
        if !(det.abs() > 1e-14) || !det.is_finite() {
            return Err(Error::SingularMap(det));
        }
        let inverse = matrix.try_inverse().ok_or(Error::SingularMap(det))?;
        Ok(Self {
            matrix,
            shift,
            inverse,
        })
    }

    pub fn identity() -> Self {
        Self::new(Mat2::identity(), Vec2::zeros()).expect("identity is invertible")
    }

    pub fn rotation(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(Mat2::new(c, -s, s, c), Vec2::zeros()).expect("rotations are invertible")
    }

    pub fn scaling(factor: f64) -> Result<Self> {
        Self::new(Mat2::identity() * factor, Vec2::zeros())
    }

    pub fn apply(&self, y: &Vec2) -> Vec2 {
        self.matrix * y + self.shift
    }

    pub fn apply_inverse(&self, y: &Vec2) -> Vec2 {
        self.inverse * (y - self.shift)
    }

    pub fn inverse_matrix(&self) -> &Mat2 {
        &self.inverse
    }

    pub fn abs_det(&self) -> f64 {
        self.matrix.determinant().abs()
    }

    pub fn inverse(&self) -> AffineMap {
        AffineMap {
            matrix: self.inverse,
            shift: -(self.inverse * self.shift),
            inverse: self.matrix,
        }
    }

    /// Pullback of a covariant 2-tensor value: `Mᵀ v M`.
    pub fn pull_covariant(&self, v: &Mat2) -> Mat2 {
        self.matrix.transpose() * v * self.matrix
    }
}

/// Spectral norm of a 2×2 matrix.
pub fn spectral_norm(m: &Mat2) -> f64 {
    let ata = m.transpose() * m;
    let tr = ata.trace();
    let det = ata.determinant();
    let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
    (0.5 * tr + disc).max(0.0).sqrt()
}

/// Cofactor (adjugate) of a symmetric 2×2 matrix; `g · cofactor(g) = det(g) I`.
pub fn adjugate(m: &Mat2) -> Mat2 {
    Mat2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_round_trip() {
        let map = AffineMap::new(Mat2::new(2.0, 1.0, 0.5, 3.0), Vec2::new(0.1, -0.2)).unwrap();
        let y = Vec2::new(0.3, 0.7);
        let back = map.apply_inverse(&map.apply(&y));
        assert!((back - y).norm() < 1e-15);
    }

    #[test]
    fn singular_map_rejected() {
        let err = AffineMap::new(Mat2::new(1.0, 2.0, 2.0, 4.0), Vec2::zeros());
        assert!(matches!(err, Err(Error::SingularMap(_))));
    }

    #[test]
    fn spectral_norm_of_rotation_is_one() {
        let r = AffineMap::rotation(0.7).matrix;
        assert!((spectral_norm(&r) - 1.0).abs() < 1e-15);
        assert!((spectral_norm(&Mat2::new(3.0, 0.0, 0.0, -5.0)) - 5.0).abs() < 1e-14);
    }

    #[test]
    fn adjugate_inverts_up_to_det() {
        let g = Mat2::new(2.0, 0.3, 0.3, 1.5);
        let prod = g * adjugate(&g);
        let det = g.determinant();
        assert!((prod - Mat2::identity() * det).amax() < 1e-15);
    }
}
