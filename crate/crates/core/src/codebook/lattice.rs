use nalgebra::{Matrix2, Vector2};

use crate::array_model::{Position, SceneConfig};
use crate::error::{Error, Result};

/// Box enumerations beyond this many integer pairs are refused.
const ENUMERATION_LIMIT: u128 = 50_000_000;

/// Full-rank 2x2 lattice generator; the columns are the basis vectors, in
/// meters on the agent plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeGenerator {
    matrix: Matrix2<f64>,
}

impl LatticeGenerator {
    pub fn new(matrix: Matrix2<f64>) -> Result<Self> {
        let det = matrix.determinant();
        let scale = matrix.column(0).norm() * matrix.column(1).norm();
        if !det.is_finite() || !(scale > 0.0) || det.abs() <= 1e-12 * scale {
            return Err(Error::RankDeficient { det });
        }
        Ok(Self { matrix })
    }

    pub fn from_columns(g1: [f64; 2], g2: [f64; 2]) -> Result<Self> {
        Self::new(Matrix2::new(g1[0], g2[0], g1[1], g2[1]))
    }

    pub fn matrix(&self) -> &Matrix2<f64> {
        &self.matrix
    }

    /// Area of one lattice cell, `|det G|`.
    pub fn cell_area(&self) -> f64 {
        self.matrix.determinant().abs()
    }

    pub fn point(&self, k1: i64, k2: i64, origin: Position) -> Position {
        let p = self.matrix * Vector2::new(k1 as f64, k2 as f64);
        Position::new(origin.y + p.x, origin.z + p.y)
    }
}

/// Lattice points `origin + G k` that fall inside the agent plane, sorted by
/// `z` then `y`.
///
/// The integer search box comes from mapping the plane corners through
/// `G^-1`, widened by one cell on each side.
pub fn truncate_lattice(
    gen: &LatticeGenerator,
    origin: Position,
    scene: &SceneConfig,
) -> Result<Vec<Position>> {
    let inv = gen.matrix.try_inverse().ok_or(Error::RankDeficient {
        det: gen.matrix.determinant(),
    })?;
    let (hy, hz) = (scene.extent_y / 2.0, scene.extent_z / 2.0);
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for (cy, cz) in [(-hy, -hz), (hy, -hz), (-hy, hz), (hy, hz)] {
        let k = inv * Vector2::new(cy - origin.y, cz - origin.z);
        for d in 0..2 {
            lo[d] = lo[d].min(k[d]);
            hi[d] = hi[d].max(k[d]);
        }
    }
    let range = |d: usize| -> Result<(i64, i64)> {
        let (a, b) = (lo[d].floor() - 1.0, hi[d].ceil() + 1.0);
        if !(a.is_finite() && b.is_finite()) || b - a > ENUMERATION_LIMIT as f64 {
            return Err(Error::EnumerationTooLarge {
                count: u128::MAX,
                limit: ENUMERATION_LIMIT,
            });
        }
        Ok((a as i64, b as i64))
    };
    let (r1, r2) = (range(0)?, range(1)?);
    let count = (r1.1 - r1.0 + 1) as u128 * (r2.1 - r2.0 + 1) as u128;
    if count > ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge {
            count,
            limit: ENUMERATION_LIMIT,
        });
    }
    let mut points = Vec::new();
    for k2 in r2.0..=r2.1 {
        for k1 in r1.0..=r1.1 {
            let p = gen.point(k1, k2, origin);
            if scene.contains(p) {
                points.push(p);
            }
        }
    }
    points.sort_by(|a, b| a.z.total_cmp(&b.z).then(a.y.total_cmp(&b.y)));
    Ok(points)
}
