//! Leader-first-follower directed graphs built by 3D type-I Henneberg
//! insertion, frameworks (graph + positions), and congruency predicates.

use crate::geometry::{cayley_menger_volume, signed_volume, GeometryError, Vec3};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FrameworkError {
    #[error("insertion vertices must be 4..=N in ascending order, got {0}")]
    BadInsertionOrder(usize),
    #[error("insertion for agent {l} references agent {referenced} (must be distinct and < {l})")]
    BadReference { l: usize, referenced: usize },
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("positions length {got} does not match agent count {expected}")]
    PositionCount { got: usize, expected: usize },
    #[error("frameworks are built on different graphs")]
    GraphMismatch,
    #[error("edge ({0}, {1}) has no desired distance")]
    MissingDistance(usize, usize),
    #[error("desired distance for edge ({0}, {1}) must be positive")]
    NonPositiveDistance(usize, usize),
    #[error("tetrahedron ({0}, {1}, {2}, {3}) has no volume sign")]
    MissingVolumeSign(usize, usize, usize, usize),
    #[error("pair ({0}, {1}) of a tetrahedron base is not a graph edge; its desired distance is undefined")]
    BaseNotConnected(usize, usize),
    #[error(
        "tetrahedron ({0}, {1}, {2}, {3}) is degenerate or unrealizable at the desired distances"
    )]
    DegenerateDesiredTetrahedron(usize, usize, usize, usize),
    #[error("desired positions disagree with distance {dist} on edge ({j}, {i}): got {actual}")]
    PositionDistanceMismatch {
        j: usize,
        i: usize,
        dist: f64,
        actual: f64,
    },
    #[error("desired positions give volume sign {actual} on tetrahedron ({0}, {1}, {2}, {3}), declared {declared}", .tet[0], .tet[1], .tet[2], .tet[3])]
    VolumeSignMismatch {
        tet: [usize; 4],
        declared: f64,
        actual: f64,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Directed graph with the leader-first-follower out-degree pattern
/// (out(1)=0, out(2)=1, out(3)=2, out(l)=3) and one tetrahedron per
/// ordinary follower. Agent ids are 1-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectedFormationGraph {
    n: usize,
    /// (source, sink) pairs with source > sink, in lexicographic order.
    edges: Vec<(usize, usize)>,
    /// One per agent l >= 4, sorted vertices i < j < k < l.
    tetrahedra: Vec<[usize; 4]>,
}

impl DirectedFormationGraph {
    /// Builds the graph from the seed triangle {2->1, 3->1, 3->2} plus one
    /// Henneberg type-I insertion (l, {i, j, k}) per ordinary follower,
    /// given in ascending l = 4..=N.
    pub fn henneberg(insertions: &[(usize, [usize; 3])]) -> Result<Self, FrameworkError> {
        let n = 3 + insertions.len();
        let mut edges: BTreeSet<(usize, usize)> = [(2, 1), (3, 1), (3, 2)].into();
        let mut tetrahedra = Vec::with_capacity(insertions.len());
        for (idx, &(l, base)) in insertions.iter().enumerate() {
            if l != idx + 4 {
                return Err(FrameworkError::BadInsertionOrder(l));
            }
            let mut sorted = base;
            sorted.sort_unstable();
            if sorted[0] == sorted[1] || sorted[1] == sorted[2] {
                return Err(FrameworkError::BadReference {
                    l,
                    referenced: sorted[1],
                });
            }
            for &v in &sorted {
                if v == 0 || v >= l {
                    return Err(FrameworkError::BadReference { l, referenced: v });
                }
            }
            for &v in &sorted {
                if !edges.insert((l, v)) {
                    return Err(FrameworkError::DuplicateEdge(l, v));
                }
            }
            tetrahedra.push([sorted[0], sorted[1], sorted[2], l]);
        }
        let edges: Vec<_> = edges.into_iter().collect();
        debug_assert_eq!(edges.len(), 3 * n - 6);
        Ok(DirectedFormationGraph {
            n,
            edges,
            tetrahedra,
        })
    }

    pub fn agent_count(&self) -> usize {
        self.n
    }

    /// Edges (source, sink) in the fixed lexicographic ordering used by the
    /// edge function.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn tetrahedra(&self) -> &[[usize; 4]] {
        &self.tetrahedra
    }

    pub fn has_edge(&self, source: usize, sink: usize) -> bool {
        self.edges.binary_search(&(source, sink)).is_ok()
    }

    /// Out-neighbor base (i, j, k) of ordinary follower l.
    pub fn base_of(&self, l: usize) -> Option<[usize; 3]> {
        self.tetrahedra
            .get(l.checked_sub(4)?)
            .map(|t| [t[0], t[1], t[2]])
    }
}

/// A graph together with agent positions (the stacked p).
#[derive(Debug, Clone)]
pub struct Framework {
    pub graph: DirectedFormationGraph,
    pub positions: Vec<Vec3>,
}

impl Framework {
    pub fn new(
        graph: DirectedFormationGraph,
        positions: Vec<Vec3>,
    ) -> Result<Self, FrameworkError> {
        if positions.len() != graph.agent_count() {
            return Err(FrameworkError::PositionCount {
                got: positions.len(),
                expected: graph.agent_count(),
            });
        }
        Ok(Framework { graph, positions })
    }

    /// Position of agent with 1-based id.
    pub fn pos(&self, agent: usize) -> Vec3 {
        self.positions[agent - 1]
    }

    /// Edge lengths in the graph's fixed edge ordering (length 3N-6).
    pub fn edge_function(&self) -> Vec<f64> {
        self.graph
            .edges
            .iter()
            .map(|&(src, sink)| (self.pos(sink) - self.pos(src)).norm())
            .collect()
    }

    /// Signed tetrahedron volumes, one per ordinary follower (length N-3).
    pub fn volume_vector(&self) -> Vec<f64> {
        self.graph
            .tetrahedra
            .iter()
            .map(|&[i, j, k, l]| signed_volume(self.pos(i), self.pos(j), self.pos(k), self.pos(l)))
            .collect()
    }
}

/// Equal edge functions within `tol` (absolute, per component).
pub fn are_equivalent(f: &Framework, g: &Framework, tol: f64) -> Result<bool, FrameworkError> {
    if f.graph != g.graph {
        return Err(FrameworkError::GraphMismatch);
    }
    Ok(f.edge_function()
        .iter()
        .zip(g.edge_function())
        .all(|(a, b)| (a - b).abs() <= tol))
}

/// Equivalent and with equal signed-volume vectors: rules out reflections.
pub fn is_strongly_congruent(
    f: &Framework,
    g: &Framework,
    tol: f64,
) -> Result<bool, FrameworkError> {
    if !are_equivalent(f, g, tol)? {
        return Ok(false);
    }
    Ok(f.volume_vector()
        .iter()
        .zip(g.volume_vector())
        .all(|(a, b)| (a - b).abs() <= tol))
}

/// Desired formation: distances on the graph edges plus an orientation sign
/// per tetrahedron, optionally backed by explicit desired positions.
#[derive(Debug, Clone)]
pub struct DesiredFormation {
    pub graph: DirectedFormationGraph,
    distances: BTreeMap<(usize, usize), f64>,
    volume_signs: BTreeMap<[usize; 4], f64>,
    pub desired_positions: Option<Vec<Vec3>>,
}

impl DesiredFormation {
    /// Validates distances, realizability of every tetrahedron, and (when
    /// positions are supplied) consistency of distances and volume signs.
    ///
    /// `volume_signs` may be omitted when `desired_positions` are given, in
    /// which case the signs are derived from the positions.
    pub fn new(
        graph: DirectedFormationGraph,
        distances: BTreeMap<(usize, usize), f64>,
        volume_signs: BTreeMap<[usize; 4], f64>,
        desired_positions: Option<Vec<Vec3>>,
    ) -> Result<Self, FrameworkError> {
        for &(src, sink) in graph.edges() {
            match distances.get(&(src, sink)) {
                None => return Err(FrameworkError::MissingDistance(src, sink)),
                Some(&d) if d <= 0.0 || !d.is_finite() => {
                    return Err(FrameworkError::NonPositiveDistance(src, sink))
                }
                _ => {}
            }
        }
        let mut signs = volume_signs;
        if let Some(p) = &desired_positions {
            if p.len() != graph.agent_count() {
                return Err(FrameworkError::PositionCount {
                    got: p.len(),
                    expected: graph.agent_count(),
                });
            }
            for (&(src, sink), &d) in &distances {
                let actual = (p[sink - 1] - p[src - 1]).norm();
                if (actual - d).abs() > 1e-9 * d.max(1.0) {
                    return Err(FrameworkError::PositionDistanceMismatch {
                        j: src,
                        i: sink,
                        dist: d,
                        actual,
                    });
                }
            }
            for &tet in graph.tetrahedra() {
                let [i, j, k, l] = tet;
                let v = signed_volume(p[i - 1], p[j - 1], p[k - 1], p[l - 1]);
                let derived = v.signum();
                match signs.get(&tet) {
                    Some(&s) if s * v <= 0.0 => {
                        return Err(FrameworkError::VolumeSignMismatch {
                            tet,
                            declared: s,
                            actual: derived,
                        })
                    }
                    Some(_) => {}
                    None => {
                        signs.insert(tet, derived);
                    }
                }
            }
        }
        let desired = DesiredFormation {
            graph,
            distances,
            volume_signs: signs,
            desired_positions,
        };
        // Every tetrahedron must have a sign and strictly positive volume at
        // the desired distances (non-degeneracy condition).
        for &tet in desired.graph.tetrahedra() {
            let [i, j, k, l] = tet;
            if !desired.volume_signs.contains_key(&tet) {
                return Err(FrameworkError::MissingVolumeSign(i, j, k, l));
            }
            let v = desired.tetra_volume(tet)?;
            let scale = desired
                .tetra_distances(tet)?
                .into_iter()
                .fold(0.0f64, f64::max);
            if v.abs() <= 1e-9 * scale.powi(3) {
                return Err(FrameworkError::DegenerateDesiredTetrahedron(i, j, k, l));
            }
        }
        Ok(desired)
    }

    pub fn agent_count(&self) -> usize {
        self.graph.agent_count()
    }

    /// Desired distance between two agents; order-insensitive. The pair must
    /// be a graph edge.
    pub fn distance(&self, a: usize, b: usize) -> Result<f64, FrameworkError> {
        let key = (a.max(b), a.min(b));
        self.distances
            .get(&key)
            .copied()
            .ok_or(FrameworkError::BaseNotConnected(key.0, key.1))
    }

    pub fn volume_sign(&self, tet: [usize; 4]) -> f64 {
        self.volume_signs[&tet]
    }

    /// The six distances (d_ji, d_ki, d_li, d_kj, d_lj, d_lk) of a
    /// tetrahedron. Base pairs that are not graph edges are an error: the
    /// graph is then not tetrahedralized and the desired volume is undefined.
    pub fn tetra_distances(&self, tet: [usize; 4]) -> Result<[f64; 6], FrameworkError> {
        let [i, j, k, l] = tet;
        Ok([
            self.distance(j, i)?,
            self.distance(k, i)?,
            self.distance(l, i)?,
            self.distance(k, j)?,
            self.distance(l, j)?,
            self.distance(l, k)?,
        ])
    }

    /// Desired signed volume of a tetrahedron from distances and the
    /// declared orientation sign.
    pub fn tetra_volume(&self, tet: [usize; 4]) -> Result<f64, FrameworkError> {
        let [d_ji, d_ki, d_li, d_kj, d_lj, d_lk] = self.tetra_distances(tet)?;
        Ok(cayley_menger_volume(
            d_ji,
            d_ki,
            d_li,
            d_kj,
            d_lj,
            d_lk,
            self.volume_signs[&tet],
        )?)
    }

    /// Largest desired distance (used for initial-condition scaling).
    pub fn max_distance(&self) -> f64 {
        self.distances.values().copied().fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn unit_right_positions() -> Vec<Vec3> {
        vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
        ]
    }

    fn n4_graph() -> DirectedFormationGraph {
        DirectedFormationGraph::henneberg(&[(4, [1, 2, 3])]).unwrap()
    }

    #[test]
    fn henneberg_minimal_case() {
        let g = n4_graph();
        assert_eq!(g.agent_count(), 4);
        assert_eq!(g.edges().len(), 6);
        assert_eq!(g.tetrahedra(), &[[1, 2, 3, 4]]);
        assert_eq!(g.edges(), &[(2, 1), (3, 1), (3, 2), (4, 1), (4, 2), (4, 3)]);
    }

    #[test]
    fn henneberg_two_tetrahedra() {
        let g = DirectedFormationGraph::henneberg(&[(4, [1, 2, 3]), (5, [1, 3, 4])]).unwrap();
        assert_eq!(g.agent_count(), 5);
        assert_eq!(g.edges().len(), 9);
        assert_eq!(g.tetrahedra(), &[[1, 2, 3, 4], [1, 3, 4, 5]]);
    }

    #[test]
    fn henneberg_rejects_forward_reference() {
        assert!(matches!(
            DirectedFormationGraph::henneberg(&[(4, [1, 2, 3]), (5, [1, 2, 6])]),
            Err(FrameworkError::BadReference {
                l: 5,
                referenced: 6
            })
        ));
    }

    #[test]
    fn henneberg_rejects_out_of_order() {
        assert!(matches!(
            DirectedFormationGraph::henneberg(&[(5, [1, 2, 3])]),
            Err(FrameworkError::BadInsertionOrder(5))
        ));
    }

    #[test]
    fn edge_function_unit_right_tetrahedron() {
        let f = Framework::new(n4_graph(), unit_right_positions()).unwrap();
        let s = 2f64.sqrt();
        let expected = [1.0, 1.0, s, 1.0, s, s];
        for (a, b) in f.edge_function().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn edge_function_collocated_and_translated() {
        let g = n4_graph();
        let f = Framework::new(g.clone(), vec![Vec3::ZERO; 4]).unwrap();
        assert!(f.edge_function().iter().all(|&d| d == 0.0));

        let t = Vec3::new(5.0, -3.0, 2.0);
        let f1 = Framework::new(g.clone(), unit_right_positions()).unwrap();
        let f2 = Framework::new(
            g,
            unit_right_positions().into_iter().map(|p| p + t).collect(),
        )
        .unwrap();
        for (a, b) in f1.edge_function().iter().zip(f2.edge_function()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn volume_vector_reflection_negates() {
        let g = DirectedFormationGraph::henneberg(&[(4, [1, 2, 3]), (5, [1, 3, 4])]).unwrap();
        let mut p = unit_right_positions();
        p.push(Vec3::new(1.0, 1.0, -1.0));
        let f = Framework::new(g.clone(), p.clone()).unwrap();
        let reflected = Framework::new(
            g,
            p.into_iter().map(|q| Vec3::new(q.x, q.y, -q.z)).collect(),
        )
        .unwrap();
        for (a, b) in f.volume_vector().iter().zip(reflected.volume_vector()) {
            assert!((a + b).abs() < 1e-12);
        }
    }

    #[test]
    fn coplanar_volume_vector_is_zero() {
        let g = n4_graph();
        let p = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(1.0, 1.0, 0.0),
        ];
        let f = Framework::new(g, p).unwrap();
        assert_eq!(f.volume_vector(), vec![0.0]);
    }

    #[test]
    fn strong_congruency_rejects_reflection() {
        let g = n4_graph();
        let f = Framework::new(g.clone(), unit_right_positions()).unwrap();
        let reflected = Framework::new(
            g,
            unit_right_positions()
                .into_iter()
                .map(|q| Vec3::new(q.x, q.y, -q.z))
                .collect(),
        )
        .unwrap();
        assert!(are_equivalent(&f, &reflected, 1e-9).unwrap());
        assert!(!is_strongly_congruent(&f, &reflected, 1e-9).unwrap());
    }

    #[test]
    fn predicates_need_matching_graphs() {
        let f = Framework::new(n4_graph(), unit_right_positions()).unwrap();
        let g5 = DirectedFormationGraph::henneberg(&[(4, [1, 2, 3]), (5, [1, 3, 4])]).unwrap();
        let mut p = unit_right_positions();
        p.push(Vec3::new(1.0, 1.0, 1.0));
        let f5 = Framework::new(g5, p).unwrap();
        assert!(matches!(
            are_equivalent(&f, &f5, 1e-9),
            Err(FrameworkError::GraphMismatch)
        ));
    }

    #[test]
    fn desired_formation_validates_positions() {
        let g = n4_graph();
        let p = unit_right_positions();
        let mut distances = BTreeMap::new();
        for &(src, sink) in g.edges() {
            distances.insert((src, sink), (p[sink - 1] - p[src - 1]).norm());
        }
        let d =
            DesiredFormation::new(g.clone(), distances.clone(), BTreeMap::new(), Some(p)).unwrap();
        assert_eq!(d.volume_sign([1, 2, 3, 4]), 1.0);
        assert!((d.tetra_volume([1, 2, 3, 4]).unwrap() - 1.0 / 6.0).abs() < 1e-12);

        // Declaring the opposite sign contradicts the positions.
        let mut signs = BTreeMap::new();
        signs.insert([1, 2, 3, 4], -1.0);
        assert!(matches!(
            DesiredFormation::new(g, distances, signs, Some(unit_right_positions())),
            Err(FrameworkError::VolumeSignMismatch { .. })
        ));
    }

    #[test]
    fn desired_formation_rejects_degenerate() {
        let g = n4_graph();
        let mut distances = BTreeMap::new();
        // Collinear/coplanar distances: agent 4 in the plane of 1,2,3.
        for &(src, sink) in g.edges() {
            distances.insert((src, sink), 1.0);
        }
        distances.insert((3, 2), 2.0); // 1,2,3 collinear
        let mut signs = BTreeMap::new();
        signs.insert([1, 2, 3, 4], 1.0);
        assert!(DesiredFormation::new(g, distances, signs, None).is_err());
    }

    #[test]
    fn desired_formation_rejects_zero_distance() {
        let g = n4_graph();
        let mut distances = BTreeMap::new();
        for &(src, sink) in g.edges() {
            distances.insert((src, sink), 1.0);
        }
        distances.insert((2, 1), 0.0);
        let mut signs = BTreeMap::new();
        signs.insert([1, 2, 3, 4], 1.0);
        assert!(matches!(
            DesiredFormation::new(g, distances, signs, None),
            Err(FrameworkError::NonPositiveDistance(2, 1))
        ));
    }
}
