//! Pure 3D scalar/vector kernels: signed tetrahedron volume, triangle areas,
//! Cayley-Menger volumes, and signed dihedral angles.

use serde::{Deserialize, Serialize};
use std::ops::{Add, AddAssign, Mul, Neg, Sub};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("triangle inequality violated: squared-area radicand {radicand} < 0 for sides ({a}, {b}, {c})")]
    InvalidTriangle {
        a: f64,
        b: f64,
        c: f64,
        radicand: f64,
    },
    #[error("distances are not realizable in 3D: Cayley-Menger determinant {det} < 0")]
    Unrealizable { det: f64 },
    #[error("degenerate face: {0}")]
    DegenerateFace(&'static str),
}

/// 3D point or vector. Components must stay finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        debug_assert!(x.is_finite() && y.is_finite() && z.is_finite());
        Vec3 { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Vec3) -> Vec3 {
        Vec3 {
            x: self.y * other.z - self.z * other.y,
            y: self.z * other.x - self.x * other.z,
            z: self.x * other.y - self.y * other.x,
        }
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// Unit vector in the same direction, or `None` for a (near-)zero vector.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        if n < 1e-300 {
            None
        } else {
            Some(self * (1.0 / n))
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3 {
            x: a[0],
            y: a[1],
            z: a[2],
        }
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        [v.x, v.y, v.z]
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, rhs: Vec3) -> Vec3 {
        Vec3 {
            x: self.x + rhs.x,
            y: self.y + rhs.y,
            z: self.z + rhs.z,
        }
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, rhs: Vec3) {
        *self = *self + rhs;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, rhs: Vec3) -> Vec3 {
        Vec3 {
            x: self.x - rhs.x,
            y: self.y - rhs.y,
            z: self.z - rhs.z,
        }
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3 {
            x: self.x * s,
            y: self.y * s,
            z: self.z * s,
        }
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3 {
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }
}

/// Signed volume of the tetrahedron (p1, p2, p3, p4).
///
/// Positive iff vertices 1,2,3 appear counterclockwise to an observer at
/// vertex 4 facing the 1-2-3 plane; zero for coplanar points or any three
/// collinear points.
pub fn signed_volume(p1: Vec3, p2: Vec3, p3: Vec3, p4: Vec3) -> f64 {
    -(p1 - p4).dot((p2 - p4).cross(p3 - p4)) / 6.0
}

/// Unsigned triangle area from the three side lengths (Heron, in the
/// distance-squared form). The arguments are the lengths of sides
/// (j,i), (k,i), (k,j) of triangle i-j-k.
pub fn heron_area(d_ji: f64, d_ki: f64, d_kj: f64) -> Result<f64, GeometryError> {
    let (a2, b2, c2) = (d_ji * d_ji, d_ki * d_ki, d_kj * d_kj);
    let radicand = 2.0 * a2 * b2 + 2.0 * a2 * c2 + 2.0 * b2 * c2 - a2 * a2 - b2 * b2 - c2 * c2;
    let scale = d_ji.max(d_ki).max(d_kj).powi(4);
    if radicand < -1e-9 * scale.max(f64::MIN_POSITIVE) {
        return Err(GeometryError::InvalidTriangle {
            a: d_ji,
            b: d_ki,
            c: d_kj,
            radicand,
        });
    }
    Ok(radicand.max(0.0).sqrt() / 4.0)
}

/// Determinant of a 5x5 matrix by Gaussian elimination with partial pivoting.
#[allow(clippy::needless_range_loop)] // row and column updates index the same matrix
fn det5(mut m: [[f64; 5]; 5]) -> f64 {
    let mut det = 1.0;
    for col in 0..5 {
        let pivot = (col..5)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap();
        if m[pivot][col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            m.swap(pivot, col);
            det = -det;
        }
        det *= m[col][col];
        for row in col + 1..5 {
            let f = m[row][col] / m[col][col];
            for c in col..5 {
                m[row][c] -= f * m[col][c];
            }
        }
    }
    det
}

/// Tetrahedron volume from the six pairwise distances via the Cayley-Menger
/// determinant, with the caller-supplied orientation sign applied.
///
/// Distance order: (j,i), (k,i), (l,i), (k,j), (l,j), (l,k) for the
/// tetrahedron with vertices i, j, k, l.
pub fn cayley_menger_volume(
    d_ji: f64,
    d_ki: f64,
    d_li: f64,
    d_kj: f64,
    d_lj: f64,
    d_lk: f64,
    sign: f64,
) -> Result<f64, GeometryError> {
    let sq = |d: f64| d * d;
    let m = [
        [0.0, 1.0, 1.0, 1.0, 1.0],
        [1.0, 0.0, sq(d_ji), sq(d_ki), sq(d_li)],
        [1.0, sq(d_ji), 0.0, sq(d_kj), sq(d_lj)],
        [1.0, sq(d_ki), sq(d_kj), 0.0, sq(d_lk)],
        [1.0, sq(d_li), sq(d_lj), sq(d_lk), 0.0],
    ];
    let det = det5(m);
    let scale = d_ji
        .max(d_ki)
        .max(d_li)
        .max(d_kj)
        .max(d_lj)
        .max(d_lk)
        .powi(8);
    if det < -1e-9 * scale.max(f64::MIN_POSITIVE) {
        return Err(GeometryError::Unrealizable { det });
    }
    Ok(sign.signum() * (det.max(0.0) / 288.0).sqrt())
}

/// Cosine of the dihedral angle along edge (1,2) from the three face angles
/// at vertex 2: theta_423, theta_123, theta_124 (radians). Clamped to [-1, 1].
pub fn cos_dihedral(theta_423: f64, theta_123: f64, theta_124: f64) -> Result<f64, GeometryError> {
    let (s123, s124) = (theta_123.sin(), theta_124.sin());
    if s123.abs() < 1e-12 || s124.abs() < 1e-12 {
        return Err(GeometryError::DegenerateFace(
            "zero face-angle sine in dihedral denominator",
        ));
    }
    let c = (theta_423.cos() - theta_123.cos() * theta_124.cos()) / (s123 * s124);
    Ok(c.clamp(-1.0, 1.0))
}

/// Signed dihedral angle between faces 1-2-3 and 1-2-4 along edge (1,2).
///
/// The sign follows the signed height of vertex 4, which carries the sign of
/// `signed_volume(p1, p2, p3, p4)`.
pub fn signed_dihedral(p1: Vec3, p2: Vec3, p3: Vec3, p4: Vec3) -> Result<f64, GeometryError> {
    let edge = p1 - p2;
    let scale = (p1 - p2).norm().max((p3 - p2).norm()).max((p4 - p2).norm());
    if edge.norm() < 1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Err(GeometryError::DegenerateFace("vertices 1 and 2 coincide"));
    }
    let n123 = (p3 - p2).cross(edge);
    let n124 = (p4 - p2).cross(edge);
    let (m123, m124) = (n123.norm(), n124.norm());
    if m123 < 1e-12 * scale * scale || m124 < 1e-12 * scale * scale {
        return Err(GeometryError::DegenerateFace(
            "face 1-2-3 or 1-2-4 has zero area",
        ));
    }
    let cos_alpha = (n123.dot(n124) / (m123 * m124)).clamp(-1.0, 1.0);
    // h = 3V/S_123 has the sign of the signed volume; b is the distance
    // from vertex 4 to the edge line.
    let area_123 = m123 / 2.0;
    let h = 3.0 * signed_volume(p1, p2, p3, p4) / area_123;
    let b = (p4 - p1).cross(edge).norm() / edge.norm();
    Ok((h / b).atan2(cos_alpha))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQRT_2_3: f64 = 0.816496580927726; // sqrt(2/3)

    /// Direct 4x4 determinant evaluation, kept independent of the
    /// triple-product implementation path.
    fn volume_det4_oracle(p: [Vec3; 4]) -> f64 {
        // Expand det [[1,1,1,1],[p1,p2,p3,p4]] along the first row.
        let det3 = |a: Vec3, b: Vec3, c: Vec3| {
            a.x * (b.y * c.z - b.z * c.y) - a.y * (b.x * c.z - b.z * c.x)
                + a.z * (b.x * c.y - b.y * c.x)
        };
        (det3(p[1], p[2], p[3]) - det3(p[0], p[2], p[3]) + det3(p[0], p[1], p[3])
            - det3(p[0], p[1], p[2]))
            / 6.0
    }

    fn unit_right_tetra() -> [Vec3; 4] {
        [
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
        ]
    }

    #[test]
    fn signed_volume_unit_right_tetrahedron() {
        let [p1, p2, p3, p4] = unit_right_tetra();
        let v = signed_volume(p1, p2, p3, p4);
        assert!((v - 1.0 / 6.0).abs() < 1e-15);
        assert!((v - volume_det4_oracle(unit_right_tetra())).abs() < 1e-15);
    }

    #[test]
    fn signed_volume_collinear_is_zero() {
        let v = signed_volume(
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(2.0, 0.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
        );
        assert_eq!(v, 0.0);
    }

    #[test]
    fn signed_volume_antisymmetric_under_swap() {
        let [p1, p2, p3, p4] = unit_right_tetra();
        assert_eq!(
            signed_volume(p2, p1, p3, p4),
            -signed_volume(p1, p2, p3, p4)
        );
    }

    #[test]
    fn heron_equilateral() {
        // Cross-product oracle on an explicit equilateral embedding.
        let pi = Vec3::new(0.0, 0.0, 0.0);
        let pj = Vec3::new(1.0, 0.0, 0.0);
        let pk = Vec3::new(0.5, 3f64.sqrt() / 2.0, 0.0);
        let oracle = (pi - pk).cross(pj - pk).norm() / 2.0;
        let a = heron_area(1.0, 1.0, 1.0).unwrap();
        assert!((a - oracle).abs() < 1e-15);
        assert!((a - 3f64.sqrt() / 4.0).abs() < 1e-15);
    }

    #[test]
    fn heron_degenerate_collinear() {
        assert_eq!(heron_area(2.0, 1.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn heron_right_triangle() {
        // Legs 3 and 4 embedding: area = 6 by the cross-product oracle.
        let pi = Vec3::new(0.0, 0.0, 0.0);
        let pj = Vec3::new(3.0, 0.0, 0.0);
        let pk = Vec3::new(0.0, 4.0, 0.0);
        let oracle = (pi - pk).cross(pj - pk).norm() / 2.0;
        assert!((oracle - 6.0).abs() < 1e-12);
        assert!((heron_area(3.0, 4.0, 5.0).unwrap() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn heron_rejects_impossible_triangle() {
        assert!(matches!(
            heron_area(10.0, 1.0, 1.0),
            Err(GeometryError::InvalidTriangle { .. })
        ));
    }

    #[test]
    fn cayley_menger_regular_unit() {
        // 5x5 determinant oracle gives det = 4 for the all-ones tetrahedron.
        let v = cayley_menger_volume(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert!((v - (4.0f64 / 288.0).sqrt()).abs() < 1e-15);
        assert!((v - 1.0 / (6.0 * 2f64.sqrt())).abs() < 1e-15);
    }

    #[test]
    fn cayley_menger_matches_unit_right_tetrahedron() {
        let s = 2f64.sqrt();
        let v = cayley_menger_volume(1.0, 1.0, 1.0, s, s, s, 1.0).unwrap();
        let [p1, p2, p3, p4] = unit_right_tetra();
        assert!((v - signed_volume(p1, p2, p3, p4)).abs() < 1e-12);
    }

    #[test]
    fn cayley_menger_coplanar_square() {
        let s = 2f64.sqrt();
        // Unit square vertices: sides 1,1,1 and diagonals sqrt(2).
        let v = cayley_menger_volume(1.0, s, 1.0, 1.0, s, 1.0, 1.0).unwrap();
        assert!(v.abs() < 1e-9);
    }

    #[test]
    fn cayley_menger_rejects_unrealizable() {
        assert!(matches!(
            cayley_menger_volume(1.0, 1.0, 1.0, 1.0, 1.0, 10.0, 1.0),
            Err(GeometryError::Unrealizable { .. })
        ));
    }

    #[test]
    fn cos_dihedral_regular_tetrahedron() {
        // Embedding + normal-vector oracle: arccos(1/3) for the regular tetrahedron.
        let deg60 = std::f64::consts::FRAC_PI_3;
        let c = cos_dihedral(deg60, deg60, deg60).unwrap();
        assert!((c - 1.0 / 3.0).abs() < 1e-12);

        let p1 = Vec3::new(0.0, 0.0, 0.0);
        let p2 = Vec3::new(1.0, 0.0, 0.0);
        let p3 = Vec3::new(0.5, 3f64.sqrt() / 2.0, 0.0);
        let p4 = Vec3::new(0.5, 3f64.sqrt() / 6.0, SQRT_2_3);
        let n123 = (p3 - p2).cross(p1 - p2);
        let n124 = (p4 - p2).cross(p1 - p2);
        let oracle = n123.dot(n124) / (n123.norm() * n124.norm());
        assert!((c - oracle).abs() < 1e-12);
    }

    #[test]
    fn cos_dihedral_right_angle_base() {
        // theta_123 = 90 degrees: cos(alpha) = cos(theta_423)/sin(theta_124).
        // t must satisfy cot(t) <= 1 for the angles to be realizable.
        let t = 1.0;
        let c = cos_dihedral(t, std::f64::consts::FRAC_PI_2, t).unwrap();
        assert!((c - t.cos() / t.sin()).abs() < 1e-12);
    }

    #[test]
    fn cos_dihedral_unit_right_tetra_perpendicular_faces() {
        // Face angles at vertex 2 of the unit right tetrahedron, edge (1,2):
        // theta_123 = theta_124 = 45 deg, theta_423 = 60 deg -> perpendicular planes.
        let [p1, p2, p3, p4] = unit_right_tetra();
        let ang = |a: Vec3, b: Vec3, c: Vec3| {
            ((a - b).dot(c - b) / ((a - b).norm() * (c - b).norm())).acos()
        };
        let c = cos_dihedral(ang(p4, p2, p3), ang(p1, p2, p3), ang(p1, p2, p4)).unwrap();
        assert!(c.abs() < 1e-12);
    }

    #[test]
    fn cos_dihedral_degenerate_face_error() {
        assert!(cos_dihedral(0.3, 0.0, 0.5).is_err());
    }

    #[test]
    fn signed_dihedral_regular_tetrahedron() {
        let p1 = Vec3::new(0.0, 0.0, 0.0);
        let p2 = Vec3::new(1.0, 0.0, 0.0);
        let p3 = Vec3::new(0.5, 3f64.sqrt() / 2.0, 0.0);
        let p4 = Vec3::new(0.5, 3f64.sqrt() / 6.0, SQRT_2_3);
        assert!(signed_volume(p1, p2, p3, p4) > 0.0);
        let a = signed_dihedral(p1, p2, p3, p4).unwrap();
        assert!((a - (1.0f64 / 3.0).acos()).abs() < 1e-12);

        // Reflection through the 1-2-3 plane negates the angle.
        let p4r = Vec3::new(p4.x, p4.y, -p4.z);
        let ar = signed_dihedral(p1, p2, p3, p4r).unwrap();
        assert!((ar + (1.0f64 / 3.0).acos()).abs() < 1e-12);
    }

    #[test]
    fn signed_dihedral_coplanar_vertex() {
        // p4 in the 1-2-3 plane, outside edge (1,2): h = 0, angle 0 or pi.
        let p1 = Vec3::new(0.0, 0.0, 0.0);
        let p2 = Vec3::new(1.0, 0.0, 0.0);
        let p3 = Vec3::new(0.5, 1.0, 0.0);
        let same_side = signed_dihedral(p1, p2, p3, Vec3::new(0.5, 2.0, 0.0)).unwrap();
        assert_eq!(same_side, 0.0);
        let far_side = signed_dihedral(p1, p2, p3, Vec3::new(0.5, -2.0, 0.0)).unwrap();
        assert!((far_side.abs() - std::f64::consts::PI).abs() < 1e-12);
    }
}
