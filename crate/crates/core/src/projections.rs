//! Orthogonal-basis normals and the projection variables zeta/varphi/vartheta,
//! their stacked vector Lambda, and desired projections computed from
//! distances only.

use crate::framework::{DesiredFormation, Framework, FrameworkError};
use crate::geometry::{heron_area, Vec3};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ProjectionError {
    #[error("agents 1 and 2 collocated at t > 0 after a non-collocated start; n_2 is undefined")]
    MidRunCollocated12,
    #[error("agents 1, 2, 3 collinear at t > 0 after a non-collinear start; n_123 is undefined")]
    MidRunCollinear123,
    #[error("projection vectors have different dimensions ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error(transparent)]
    Framework(#[from] FrameworkError),
}

/// Normals frozen at t = 0 for the degenerate initial-condition cases of the
/// orthogonal-basis definition, plus the degeneracy tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalCache {
    pub n2_fallback: Option<Vec3>,
    pub n123_fallback: Option<Vec3>,
    pub degenerate_12_at_t0: bool,
    pub degenerate_123_at_t0: bool,
    /// Permanently pins n_2 to `n2_fallback` (mid-run recovery).
    pub frozen_12: bool,
    /// Permanently pins n_123 to `n123_fallback` (mid-run recovery, 2D mode).
    pub frozen_123: bool,
    pub eps: f64,
}

impl NormalCache {
    /// Inspects the initial positions and records fallback normals where the
    /// corresponding geometry is degenerate. `n2_plus` is used when agents 1
    /// and 2 start collocated (any unit vector is admissible). Fallbacks are
    /// transient: the live value takes over once the geometry is
    /// well defined, and by construction the two agree at the handover.
    pub fn from_initial(p0: &[Vec3], eps: f64, n2_plus: Vec3) -> Self {
        let p21 = p0[0] - p0[1];
        let p31 = p0[0] - p0[2];
        let p32 = p0[1] - p0[2];
        let degenerate_12 = p21.norm() <= eps;
        let degenerate_123 = p31.cross(p32).norm() <= eps;
        let n2_plus = n2_plus.normalized().unwrap_or(Vec3::new(1.0, 0.0, 0.0));
        let n123_fallback = degenerate_123.then(|| {
            if degenerate_12 {
                // Agents 1 and 2 are collocated, so the first motion of
                // agent 2 is along n_2^+ and the triangle normal emerges as
                // n_2^+ x p_31; pick the fallback to match it when defined.
                let c = n2_plus.cross(p31);
                if let Some(n) = (c.norm() > eps * p31.norm())
                    .then(|| c.normalized())
                    .flatten()
                {
                    return n;
                }
            }
            select_n123_plus(p31, p32, eps)
        });
        NormalCache {
            n2_fallback: degenerate_12.then_some(n2_plus),
            n123_fallback,
            degenerate_12_at_t0: degenerate_12,
            degenerate_123_at_t0: degenerate_123,
            frozen_12: false,
            frozen_123: false,
            eps,
        }
    }

    /// Cache for the planar (2D) mode: the plane normal is fixed.
    pub fn planar(p0: &[Vec3], eps: f64, n2_plus: Vec3) -> Self {
        let mut cache = Self::from_initial(p0, eps, n2_plus);
        cache.frozen_123 = true;
        cache.n123_fallback = Some(Vec3::new(0.0, 0.0, 1.0));
        cache
    }

    /// Copy with the 1-2-3 normal frozen to `n`, used when the triangle
    /// degenerates mid-run and the last valid normal is carried forward.
    pub fn with_frozen_n123(&self, n: Vec3) -> Self {
        let mut c = self.clone();
        c.frozen_123 = true;
        c.n123_fallback = Some(n);
        c
    }

    /// Copy with n_2 frozen to `n` (mid-run collocation of agents 1 and 2).
    pub fn with_frozen_n2(&self, n: Vec3) -> Self {
        let mut c = self.clone();
        c.frozen_12 = true;
        c.n2_fallback = Some(n);
        c
    }
}

/// Unit vector orthogonal to both inputs when they are (near-)collinear,
/// following the published selection procedure branch by branch.
pub fn select_n123_plus(p31: Vec3, p32: Vec3, eps: f64) -> Vec3 {
    let pick = |v: Vec3| -> Option<Vec3> {
        if v.z.abs() > eps {
            Some(Vec3::new(1.0, 1.0, -(v.x + v.y) / v.z))
        } else if v.y.abs() > eps {
            Some(Vec3::new(1.0, -(v.x + v.z) / v.y, 1.0))
        } else if v.x.abs() > eps {
            Some(Vec3::new(-(v.y + v.z) / v.x, 1.0, 1.0))
        } else {
            None
        }
    };
    let nt = if p31.norm() > eps {
        pick(p31)
    } else if p32.norm() > eps {
        pick(p32)
    } else {
        None
    }
    .unwrap_or(Vec3::new(0.0, 0.0, 1.0));
    nt.normalized().unwrap_or(Vec3::new(0.0, 0.0, 1.0))
}

/// n_2 from the relative position p_21 = p_1 - p_2.
pub fn n2_from_rel(p21: Vec3, cache: &NormalCache) -> Result<Vec3, ProjectionError> {
    if cache.frozen_12 {
        return Ok(cache.n2_fallback.expect("fallback present when frozen"));
    }
    match p21.normalized() {
        Some(u) => Ok(u),
        None if cache.degenerate_12_at_t0 => {
            Ok(cache.n2_fallback.expect("fallback present when flag set"))
        }
        None => Err(ProjectionError::MidRunCollocated12),
    }
}

/// Unit normal of the 1-2-3 triangle from relative positions p_31, p_32.
pub fn n123_from_rel(p31: Vec3, p32: Vec3, cache: &NormalCache) -> Result<Vec3, ProjectionError> {
    if cache.frozen_123 {
        return Ok(cache.n123_fallback.expect("fallback present when frozen"));
    }
    let c = p31.cross(p32);
    let scale = p31.norm() * p32.norm();
    if c.norm() <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
        if cache.degenerate_123_at_t0 {
            return Ok(cache.n123_fallback.expect("fallback present when flag set"));
        }
        return Err(ProjectionError::MidRunCollinear123);
    }
    Ok(c * (1.0 / c.norm()))
}

/// Basis normal n_ijk for a follower whose base is {i, j, k}. Relative
/// positions are those the follower can measure: p_li, p_lj, p_lk.
///
/// For a non-{1,2,3} base this is the unnormalized cross product
/// p_ki x p_kj; for the {1,2,3} base it is the unit triangle normal.
pub fn normal_from_rel(
    base_is_123: bool,
    p_li: Vec3,
    p_lj: Vec3,
    p_lk: Vec3,
    cache: &NormalCache,
) -> Result<Vec3, ProjectionError> {
    if base_is_123 {
        // p_31 = p_l1 - p_l3, p_32 = p_l2 - p_l3 (i=1, j=2, k=3).
        n123_from_rel(p_li - p_lk, p_lj - p_lk, cache)
    } else {
        Ok((p_li - p_lk).cross(p_lj - p_lk))
    }
}

/// Basis normal n_ijk from global positions (1-based agent ids).
pub fn normal_ijk(
    positions: &[Vec3],
    i: usize,
    j: usize,
    k: usize,
    cache: &NormalCache,
) -> Result<Vec3, ProjectionError> {
    let base_is_123 = [i, j, k] == [1, 2, 3];
    let from = |a: usize, b: usize| positions[b - 1] - positions[a - 1];
    if base_is_123 {
        n123_from_rel(from(3, 1), from(3, 2), cache)
    } else {
        Ok(from(k, i).cross(from(k, j)))
    }
}

/// Projection variables (zeta_l, varphi_l, vartheta_l) of follower l over
/// base i < j < k.
pub fn projections_l(
    positions: &[Vec3],
    i: usize,
    j: usize,
    k: usize,
    l: usize,
    cache: &NormalCache,
) -> Result<(f64, f64, f64), ProjectionError> {
    let n = normal_ijk(positions, i, j, k, cache)?;
    let p_li = positions[i - 1] - positions[l - 1];
    let p_ji = positions[i - 1] - positions[j - 1];
    Ok((p_li.dot(p_ji), p_li.dot(n.cross(p_ji)), p_li.dot(n)))
}

/// zeta_2 = p_21^T n_2 (equals ||p_21|| in the non-degenerate case).
pub fn zeta2(positions: &[Vec3], cache: &NormalCache) -> Result<f64, ProjectionError> {
    let p21 = positions[0] - positions[1];
    Ok(p21.dot(n2_from_rel(p21, cache)?))
}

/// zeta_3 = p_31^T p_21 and varphi_3 = p_31^T (n_123 x p_21).
pub fn zeta3_varphi3(
    positions: &[Vec3],
    cache: &NormalCache,
) -> Result<(f64, f64), ProjectionError> {
    let p21 = positions[0] - positions[1];
    let p31 = positions[0] - positions[2];
    let p32 = positions[1] - positions[2];
    let n = n123_from_rel(p31, p32, cache)?;
    Ok((p31.dot(p21), p31.dot(n.cross(p21))))
}

/// Stacked projection variables [zeta_2; zeta_3, varphi_3; zeta_l, varphi_l,
/// vartheta_l ...] of dimension 3N - 6.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionVector {
    n_agents: usize,
    values: Vec<f64>,
}

impl ProjectionVector {
    pub fn from_values(n_agents: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), 3 * n_agents - 6);
        ProjectionVector { n_agents, values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn zeta2(&self) -> f64 {
        self.values[0]
    }

    pub fn zeta3(&self) -> f64 {
        self.values[1]
    }

    pub fn varphi3(&self) -> f64 {
        self.values[2]
    }

    /// (zeta_l, varphi_l, vartheta_l) for an ordinary follower l >= 4.
    pub fn follower(&self, l: usize) -> (f64, f64, f64) {
        let o = 3 * (l - 4) + 3;
        (self.values[o], self.values[o + 1], self.values[o + 2])
    }

    /// Indices of the vartheta components (the reflection-sensitive ones).
    pub fn vartheta_indices(&self) -> impl Iterator<Item = usize> {
        (0..self.n_agents.saturating_sub(3)).map(|m| 3 * m + 5)
    }
}

/// Lambda(p): the full projection vector of a framework.
pub fn lambda(f: &Framework, cache: &NormalCache) -> Result<ProjectionVector, ProjectionError> {
    let p = &f.positions;
    let n = f.graph.agent_count();
    let mut values = Vec::with_capacity(3 * n - 6);
    values.push(zeta2(p, cache)?);
    let (z3, v3) = zeta3_varphi3(p, cache)?;
    values.push(z3);
    values.push(v3);
    for &[i, j, k, l] in f.graph.tetrahedra() {
        let (z, v, t) = projections_l(p, i, j, k, l, cache)?;
        values.push(z);
        values.push(v);
        values.push(t);
    }
    Ok(ProjectionVector::from_values(n, values))
}

/// Half-difference of squared distances, (a^2 + b^2 - c^2)/2: the desired
/// inner product of two edges sharing a vertex (law of cosines).
fn half_cos_term(a: f64, b: f64, c: f64) -> f64 {
    (a * a + b * b - c * c) / 2.0
}

/// Desired magnitude ||n*_ijk|| of the basis normal: twice the base-triangle
/// area for a non-{1,2,3} base, one for the normalized {1,2,3} normal.
pub fn desired_normal_magnitude(
    d: &DesiredFormation,
    tet: [usize; 4],
) -> Result<f64, ProjectionError> {
    let [i, j, k, _] = tet;
    if [i, j, k] == [1, 2, 3] {
        Ok(1.0)
    } else {
        let d_ji = d.distance(j, i)?;
        let d_ki = d.distance(k, i)?;
        let d_kj = d.distance(k, j)?;
        Ok(2.0 * heron_area(d_ji, d_ki, d_kj).map_err(FrameworkError::from)?)
    }
}

/// Lambda*: desired projections synthesized purely from the desired
/// distances and volume-orientation signs.
pub fn desired_lambda(d: &DesiredFormation) -> Result<ProjectionVector, ProjectionError> {
    let n = d.agent_count();
    let mut values = Vec::with_capacity(3 * n - 6);
    let d21 = d.distance(2, 1)?;
    let d31 = d.distance(3, 1)?;
    let d32 = d.distance(3, 2)?;
    values.push(d21);
    values.push(half_cos_term(d31, d21, d32));
    let area123 = heron_area(d21, d31, d32).map_err(FrameworkError::from)?;
    values.push(2.0 * area123);
    for &tet in d.graph.tetrahedra() {
        let [i, j, k, _] = tet;
        let [d_ji, d_ki, d_li, d_kj, d_lj, d_lk] = d.tetra_distances(tet)?;
        let zeta = half_cos_term(d_li, d_ji, d_lj);
        // varphi* = (||n*||/||p_ki x p_kj||) * (p_ki x p_kj)^T (p_ji x p_li),
        // both factors expanded in distances only.
        let cross_dot = half_cos_term(d_kj, d_lj, d_lk) * d_ji * d_ji
            - half_cos_term(d_kj, d_ji, d_ki) * half_cos_term(d_ji, d_lj, d_li);
        let factor = if [i, j, k] == [1, 2, 3] {
            1.0 / (2.0 * area123)
        } else {
            1.0
        };
        let varphi = factor * cross_dot;
        let v_star = d.tetra_volume(tet)?;
        let vartheta = if [i, j, k] == [1, 2, 3] {
            -6.0 * v_star / (2.0 * area123)
        } else {
            -6.0 * v_star
        };
        values.push(zeta);
        values.push(varphi);
        values.push(vartheta);
    }
    Ok(ProjectionVector::from_values(n, values))
}

/// Reconstructs one set of desired positions from the distances and volume
/// signs: agent 1 at the origin, agent 2 on +x, agent 3 in the z = 0 plane
/// with positive y, and each follower placed via its desired projections on
/// the orthogonal basis of its (already placed) base triangle.
pub fn embed_desired(d: &DesiredFormation) -> Result<Vec<Vec3>, ProjectionError> {
    if let Some(p) = &d.desired_positions {
        return Ok(p.clone());
    }
    let lambda_star = desired_lambda(d)?;
    let n = d.agent_count();
    let mut p = Vec::with_capacity(n);
    let d21 = d.distance(2, 1)?;
    p.push(Vec3::ZERO);
    p.push(Vec3::new(d21, 0.0, 0.0));
    // zeta_3 = p_31^T p_21 with p_21 = (-d21, 0, 0); varphi_3 = 2 S_123.
    let x3 = lambda_star.zeta3() / d21;
    let y3 = lambda_star.varphi3() / d21;
    p.push(Vec3::new(x3, y3, 0.0));
    for &tet in d.graph.tetrahedra() {
        let [i, j, k, l] = tet;
        let (zeta, varphi, vartheta) = lambda_star.follower(l);
        let d_ji = d.distance(j, i)?;
        let n_mag = desired_normal_magnitude(d, tet)?;
        let p_i = p[i - 1];
        let p_ji = p_i - p[j - 1];
        let n_ijk = if [i, j, k] == [1, 2, 3] {
            let c = (p[0] - p[2]).cross(p[1] - p[2]);
            c * (1.0 / c.norm())
        } else {
            (p_i - p[k - 1]).cross(p[j - 1] - p[k - 1])
        };
        let e1 = p_ji * (1.0 / d_ji);
        let e3 = n_ijk * (1.0 / n_mag);
        let e2 = e3.cross(e1);
        // p_li = a e1 + b e2 + c e3 solves the three projection equations.
        let a = zeta / d_ji;
        let b = varphi / (d_ji * n_mag);
        let c = vartheta / n_mag;
        let p_li = e1 * a + e2 * b + e3 * c;
        p.push(p_i - p_li);
    }
    Ok(p)
}
