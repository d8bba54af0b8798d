use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::linalg::Vec2;

/// A compact sampling region in the chart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Region {
    Annulus { r_in: f64, r_out: f64 },
    Disc { radius: f64 },
    Points { points: Vec<[f64; 2]> },
}

impl Region {
    pub fn annulus(r_in: f64, r_out: f64) -> Self {
        Region::Annulus { r_in, r_out }
    }

    /// Sample points: `rings` radii by `angles` directions for the polar
    /// shapes (the disc also gets its center), verbatim for point lists.
    pub fn samples(&self, rings: usize, angles: usize) -> Vec<Vec2> {
        let ring = |r: f64, out: &mut Vec<Vec2>| {
            for j in 0..angles {
                let (s, c) = (2.0 * PI * (j as f64 + 0.25) / angles as f64).sin_cos();
                out.push(Vec2::new(r * c, r * s));
            }
        };
        let mut out = Vec::new();
        match self {
            Region::Annulus { r_in, r_out } => {
                for i in 0..rings {
                    let t = if rings == 1 {
                        0.5
                    } else {
                        i as f64 / (rings - 1) as f64
                    };
                    ring(r_in + t * (r_out - r_in), &mut out);
                }
            }
            Region::Disc { radius } => {
                out.push(Vec2::zeros());
                for i in 1..=rings {
                    ring(radius * i as f64 / rings as f64, &mut out);
                }
            }
            Region::Points { points } => {
                out.extend(points.iter().map(|p| Vec2::new(p[0], p[1])));
            }
        }
        out
    }

    pub fn max_radius(&self) -> f64 {
        match self {
            Region::Annulus { r_out, .. } => *r_out,
            Region::Disc { radius } => *radius,
            Region::Points { points } => {
                points.iter().map(|p| p[0].hypot(p[1])).fold(0.0, f64::max)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn annulus_samples_stay_inside() {
        let pts = Region::annulus(0.2, 0.5).samples(4, 12);
        assert_eq!(pts.len(), 48);
        assert!(pts
            .iter()
            .all(|p| p.norm() >= 0.2 - 1e-15 && p.norm() <= 0.5 + 1e-15));
    }

    #[test]
    fn disc_samples_include_center() {
        let pts = Region::Disc { radius: 0.5 }.samples(3, 8);
        assert_eq!(pts.len(), 25);
        assert_eq!(pts[0], Vec2::zeros());
    }
}
