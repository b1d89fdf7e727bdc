//! Shared generators for the integration suites: random rigid motions and
//! random non-degenerate frameworks on tetrahedralized graphs.

#![allow(dead_code)]

use formation_sim::framework::{DesiredFormation, DirectedFormationGraph, Framework};
use formation_sim::geometry::{signed_volume, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

pub type Rot = [[f64; 3]; 3];

/// Rotation matrix from a unit quaternion (w, x, y, z).
pub fn rotation_from_quat(q: [f64; 4]) -> Rot {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    let [w, x, y, z] = [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
    [
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ]
}

pub fn apply_rot(m: &Rot, v: Vec3) -> Vec3 {
    Vec3::new(
        m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
        m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
        m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
    )
}

pub fn random_rotation(rng: &mut impl Rng) -> Rot {
    loop {
        let q = [
            rng.gen_range(-1.0..=1.0),
            rng.gen_range(-1.0..=1.0),
            rng.gen_range(-1.0..=1.0),
            rng.gen_range(-1.0..=1.0),
        ];
        let n2: f64 = q.iter().map(|c| c * c).sum();
        if n2 > 0.05 && n2 <= 1.0 {
            return rotation_from_quat(q);
        }
    }
}

pub fn random_vec(rng: &mut impl Rng, half: f64) -> Vec3 {
    Vec3::new(
        rng.gen_range(-half..=half),
        rng.gen_range(-half..=half),
        rng.gen_range(-half..=half),
    )
}

/// Mirror through the plane with unit normal `n` through `origin`.
pub fn reflect(p: &[Vec3], origin: Vec3, n: Vec3) -> Vec<Vec3> {
    p.iter()
        .map(|&q| q - n * (2.0 * (q - origin).dot(n)))
        .collect()
}

pub fn rigid_motion(p: &[Vec3], rot: &Rot, shift: Vec3) -> Vec<Vec3> {
    p.iter().map(|&q| apply_rot(rot, q) + shift).collect()
}

/// Random tetrahedralized insertion list: each follower attaches to a face
/// whose three pairs are already edges, so every tetrahedron carries six
/// well-defined distances.
pub fn random_tetrahedralized_insertions(rng: &mut impl Rng, n: usize) -> Vec<(usize, [usize; 3])> {
    let mut faces: Vec<[usize; 3]> = vec![[1, 2, 3]];
    let mut insertions = Vec::new();
    for l in 4..=n {
        let face = faces[rng.gen_range(0..faces.len())];
        insertions.push((l, face));
        let [a, b, c] = face;
        faces.push([a, b, l]);
        faces.push([a, c, l]);
        faces.push([b, c, l]);
    }
    insertions
}

/// Positions with a well-conditioned base triangle and every tetrahedron
/// clearly non-degenerate, by rejection sampling.
pub fn random_nondegenerate_positions(
    rng: &mut impl Rng,
    graph: &DirectedFormationGraph,
) -> Vec<Vec3> {
    let n = graph.agent_count();
    'outer: loop {
        let p: Vec<Vec3> = (0..n).map(|_| random_vec(rng, 2.0)).collect();
        if (p[0] - p[1]).norm() < 0.4 {
            continue;
        }
        if (p[0] - p[2]).cross(p[1] - p[2]).norm() < 0.2 {
            continue;
        }
        for &[i, j, k, l] in graph.tetrahedra() {
            let v = signed_volume(p[i - 1], p[j - 1], p[k - 1], p[l - 1]);
            if v.abs() < 0.05 {
                continue 'outer;
            }
            // keep all six tetra distances well away from zero
            for (a, b) in [(i, j), (i, k), (i, l), (j, k), (j, l), (k, l)] {
                if (p[a - 1] - p[b - 1]).norm() < 0.3 {
                    continue 'outer;
                }
            }
        }
        return p;
    }
}

pub fn random_framework(rng: &mut impl Rng, n: usize) -> Framework {
    let insertions = random_tetrahedralized_insertions(rng, n);
    let graph = DirectedFormationGraph::henneberg(&insertions).unwrap();
    let positions = random_nondegenerate_positions(rng, &graph);
    Framework::new(graph, positions).unwrap()
}

/// Desired formation whose distances and volume signs come from explicit
/// non-degenerate positions.
pub fn desired_from_positions(graph: DirectedFormationGraph, p: Vec<Vec3>) -> DesiredFormation {
    // Tetrahedralized insertions guarantee every tetra pair is a graph edge,
    // so edge distances alone determine all tetra volumes.
    let mut distances = BTreeMap::new();
    for &(src, sink) in graph.edges() {
        distances.insert((src, sink), (p[src - 1] - p[sink - 1]).norm());
    }
    DesiredFormation::new(graph, distances, BTreeMap::new(), Some(p)).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
