//! Quadrature on the reference simplex, in barycentric coordinates.
//! Weights sum to the reference volume (1/2 for triangles, 1/6 for tets,
//! 1 for the unit interval used on faces in 2D).

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct QuadratureRule {
    /// Barycentric coordinates, one entry per point, `dim + 1` values each.
    pub points: Vec<Vec<f64>>,
    /// Weights summing to the reference volume.
    pub weights: Vec<f64>,
    pub degree: usize,
    pub dim: usize,
}

impl QuadratureRule {
    /// Rule on the reference simplex of dimension `dim` exact for
    /// polynomials up to `degree`.
    pub fn simplex(dim: usize, degree: usize) -> Result<Self> {
        match (dim, degree) {
            (1, _) => Self::interval(degree),
            (2, 0) | (2, 1) => Ok(Self::bary(
                2,
                1,
                vec![(vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 0.5)],
            )),
            (2, 2) => {
                let a = 2.0 / 3.0;
                let b = 1.0 / 6.0;
                Ok(Self::bary(
                    2,
                    2,
                    perms3(a, b).into_iter().map(|p| (p, 1.0 / 6.0)).collect(),
                ))
            }
            (2, 3) | (2, 4) => {
                // Dunavant 6-point, degree 4
                let a1 = 0.445_948_490_915_965;
                let w1 = 0.223_381_589_678_011 / 2.0;
                let a2 = 0.091_576_213_509_771;
                let w2 = 0.109_951_743_655_322 / 2.0;
                let mut pts = Vec::new();
                for p in perms3(1.0 - 2.0 * a1, a1) {
                    pts.push((p, w1));
                }
                for p in perms3(1.0 - 2.0 * a2, a2) {
                    pts.push((p, w2));
                }
                Ok(Self::bary(2, 4, pts))
            }
            (2, 5) => {
                // 7-point, degree 5
                let mut pts = vec![(vec![1.0 / 3.0; 3], 0.225 / 2.0)];
                let a1 = 0.470_142_064_105_115;
                let w1 = 0.132_394_152_788_506 / 2.0;
                let a2 = 0.101_286_507_323_456;
                let w2 = 0.125_939_180_544_827 / 2.0;
                for p in perms3(1.0 - 2.0 * a1, a1) {
                    pts.push((p, w1));
                }
                for p in perms3(1.0 - 2.0 * a2, a2) {
                    pts.push((p, w2));
                }
                Ok(Self::bary(2, 5, pts))
            }
            (3, 0) | (3, 1) => Ok(Self::bary(3, 1, vec![(vec![0.25; 4], 1.0 / 6.0)])),
            (3, 2) => {
                let a = (5.0 + 3.0 * 5f64.sqrt()) / 20.0;
                let b = (5.0 - 5f64.sqrt()) / 20.0;
                Ok(Self::bary(
                    3,
                    2,
                    perms4(a, b).into_iter().map(|p| (p, 1.0 / 24.0)).collect(),
                ))
            }
            (3, 3) => {
                // 5-point rule with a negative centroid weight
                let mut pts = vec![(vec![0.25; 4], -4.0 / 30.0)];
                for p in perms4(0.5, 1.0 / 6.0) {
                    pts.push((p, 9.0 / 120.0));
                }
                Ok(Self::bary(3, 3, pts))
            }
            _ => Err(Error::Model(format!(
                "no quadrature rule for dim {dim}, degree {degree}"
            ))),
        }
    }

    /// Gauss-Legendre on [0,1] as a 1-simplex (barycentric (1-t, t)).
    pub fn interval(degree: usize) -> Result<Self> {
        let (ts, ws): (Vec<f64>, Vec<f64>) = match degree {
            0 | 1 => (vec![0.5], vec![1.0]),
            2 | 3 => {
                let d = 0.5 / 3f64.sqrt();
                (vec![0.5 - d, 0.5 + d], vec![0.5, 0.5])
            }
            4 | 5 => {
                let d = 0.5 * (3f64 / 5.0).sqrt();
                (
                    vec![0.5 - d, 0.5, 0.5 + d],
                    vec![5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0],
                )
            }
            _ => {
                return Err(Error::Model(format!(
                    "no interval rule for degree {degree}"
                )))
            }
        };
        let pts = ts
            .iter()
            .zip(&ws)
            .map(|(&t, &w)| (vec![1.0 - t, t], w))
            .collect();
        Ok(Self::bary(1, degree.max(1), pts))
    }

    fn bary(dim: usize, degree: usize, pts: Vec<(Vec<f64>, f64)>) -> Self {
        let (points, weights) = pts.into_iter().unzip();
        Self {
            points,
            weights,
            degree,
            dim,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Reference volume of the simplex (sum of weights by construction).
    pub fn reference_volume(&self) -> f64 {
        let mut f = 1.0;
        for k in 2..=self.dim {
            f *= k as f64;
        }
        1.0 / f
    }
}

fn perms3(a: f64, b: f64) -> Vec<Vec<f64>> {
    vec![vec![a, b, b], vec![b, a, b], vec![b, b, a]]
}

fn perms4(a: f64, b: f64) -> Vec<Vec<f64>> {
    vec![
        vec![a, b, b, b],
        vec![b, a, b, b],
        vec![b, b, a, b],
        vec![b, b, b, a],
    ]
}
