//! JSON scenario files: formation, gains, and simulation settings.

use crate::control::{ControlError, Gains};
use crate::framework::{DesiredFormation, DirectedFormationGraph, FrameworkError};
use crate::geometry::Vec3;
use crate::sim::{PlanarFormation, SimConfig, SimError};
use serde::Deserialize;
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario file: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Framework(#[from] FrameworkError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum Mode {
    #[serde(rename = "3d")]
    ThreeD,
    #[serde(rename = "2d")]
    TwoD,
}

fn default_mode() -> Mode {
    Mode::ThreeD
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FormationSpec {
    agents: usize,
    /// 3D: base triple of agent l, in order l = 4..=N.
    #[serde(default)]
    insertions: Vec<[usize; 3]>,
    /// 2D: base pair of agent l, in order l = 3..=N.
    #[serde(default)]
    bases: Vec<[usize; 2]>,
    /// Entries [j, i, d]: desired distance d between agents j and i.
    /// May be omitted when desired_positions are given.
    #[serde(default)]
    distances: Vec<(usize, usize, f64)>,
    /// Entries [i, j, k, l, sign]. May be omitted when desired_positions
    /// are given (signs are then derived).
    #[serde(default)]
    volume_signs: Vec<(usize, usize, usize, usize, f64)>,
    #[serde(default)]
    desired_positions: Option<Vec<[f64; 3]>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PerAgentGains {
    mu: Option<f64>,
    nu: Option<f64>,
    lambda: Option<f64>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GainsSpec {
    #[serde(default = "one")]
    mu: f64,
    #[serde(default = "one")]
    nu: f64,
    #[serde(default = "one")]
    lambda: f64,
    /// Per-agent overrides keyed by agent id.
    #[serde(default)]
    per_agent: BTreeMap<String, PerAgentGains>,
}

impl Default for GainsSpec {
    fn default() -> Self {
        GainsSpec {
            mu: 1.0,
            nu: 1.0,
            lambda: 1.0,
            per_agent: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default = "default_mode")]
    mode: Mode,
    formation: FormationSpec,
    #[serde(default)]
    gains: GainsSpec,
    sim: SimConfig,
}

/// A fully validated scenario, ready to run.
#[derive(Debug)]
pub enum Scenario {
    ThreeD {
        desired: DesiredFormation,
        gains: Gains,
        sim: SimConfig,
    },
    TwoD {
        plan: PlanarFormation,
        gains: Gains,
        sim: SimConfig,
    },
}

impl Scenario {
    pub fn sim_config(&self) -> &SimConfig {
        match self {
            Scenario::ThreeD { sim, .. } | Scenario::TwoD { sim, .. } => sim,
        }
    }

    pub fn sim_config_mut(&mut self) -> &mut SimConfig {
        match self {
            Scenario::ThreeD { sim, .. } | Scenario::TwoD { sim, .. } => sim,
        }
    }
}

fn build_gains(spec: &GainsSpec, n: usize) -> Result<Gains, ScenarioError> {
    let mut gains = Gains::uniform(n, spec.mu, spec.nu, spec.lambda)?;
    for (key, over) in &spec.per_agent {
        let agent: usize = key.parse().map_err(|_| {
            ScenarioError::Invalid(format!("per_agent key {key:?} is not an agent id"))
        })?;
        if agent < 2 || agent > n {
            return Err(ScenarioError::Invalid(format!(
                "per_agent key {agent} outside 2..={n}"
            )));
        }
        gains.set_agent(
            agent,
            over.mu,
            over.nu.filter(|_| agent >= 3),
            over.lambda.filter(|_| agent >= 4),
        )?;
    }
    Ok(gains)
}

fn build_3d(f: &FormationSpec) -> Result<DesiredFormation, ScenarioError> {
    if f.agents < 4 {
        return Err(ScenarioError::Invalid(
            "3D scenarios need at least 4 agents".into(),
        ));
    }
    if f.insertions.len() != f.agents - 3 {
        return Err(ScenarioError::Invalid(format!(
            "expected {} insertions for {} agents, got {}",
            f.agents - 3,
            f.agents,
            f.insertions.len()
        )));
    }
    if !f.bases.is_empty() {
        return Err(ScenarioError::Invalid(
            "field 'bases' is only used in 2D mode".into(),
        ));
    }
    let insertions: Vec<(usize, [usize; 3])> = f
        .insertions
        .iter()
        .enumerate()
        .map(|(idx, &b)| (idx + 4, b))
        .collect();
    let graph = DirectedFormationGraph::henneberg(&insertions)?;

    let positions: Option<Vec<Vec3>> = f
        .desired_positions
        .as_ref()
        .map(|ps| ps.iter().map(|&[x, y, z]| Vec3::new(x, y, z)).collect());

    let mut distances: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for &(j, i, d) in &f.distances {
        let key = if j > i { (j, i) } else { (i, j) };
        if distances.insert(key, d).is_some() {
            return Err(ScenarioError::Invalid(format!(
                "distance for edge ({}, {}) given twice",
                key.0, key.1
            )));
        }
    }
    if distances.is_empty() {
        if let Some(p) = &positions {
            if p.len() == f.agents {
                for &(src, sink) in graph.edges() {
                    distances.insert((src, sink), (p[src - 1] - p[sink - 1]).norm());
                }
            }
        }
    }

    let mut signs: BTreeMap<[usize; 4], f64> = BTreeMap::new();
    for &(i, j, k, l, s) in &f.volume_signs {
        let mut tet = [i, j, k, l];
        tet.sort_unstable();
        if tet != [i, j, k, l] {
            return Err(ScenarioError::Invalid(format!(
                "volume sign vertices ({i}, {j}, {k}, {l}) must be ascending"
            )));
        }
        signs.insert(tet, s);
    }

    Ok(DesiredFormation::new(graph, distances, signs, positions)?)
}

fn build_2d(f: &FormationSpec) -> Result<PlanarFormation, ScenarioError> {
    if !f.insertions.is_empty() || !f.distances.is_empty() || !f.volume_signs.is_empty() {
        return Err(ScenarioError::Invalid(
            "2D scenarios use 'bases' and 'desired_positions' only".into(),
        ));
    }
    let positions = f
        .desired_positions
        .as_ref()
        .ok_or_else(|| ScenarioError::Invalid("2D scenarios require desired_positions".into()))?;
    if positions.len() != f.agents {
        return Err(ScenarioError::Invalid(format!(
            "expected {} desired positions, got {}",
            f.agents,
            positions.len()
        )));
    }
    let positions: Vec<Vec3> = positions
        .iter()
        .map(|&[x, y, z]| Vec3::new(x, y, z))
        .collect();
    Ok(PlanarFormation::new(f.bases.clone(), positions)?)
}

pub fn parse_scenario(json: &str) -> Result<Scenario, ScenarioError> {
    let file: ScenarioFile = serde_json::from_str(json)?;
    file.sim.validate()?;
    match file.mode {
        Mode::ThreeD => {
            let desired = build_3d(&file.formation)?;
            let gains = build_gains(&file.gains, file.formation.agents)?;
            Ok(Scenario::ThreeD {
                desired,
                gains,
                sim: file.sim,
            })
        }
        Mode::TwoD => {
            let plan = build_2d(&file.formation)?;
            let gains = build_gains(&file.gains, file.formation.agents)?;
            Ok(Scenario::TwoD {
                plan,
                gains,
                sim: file.sim,
            })
        }
    }
}

pub fn load_scenario<P: AsRef<Path>>(path: P) -> Result<Scenario, ScenarioError> {
    parse_scenario(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const REGULAR_TETRA: &str = r#"{
        "mode": "3d",
        "formation": {
            "agents": 4,
            "insertions": [[1, 2, 3]],
            "distances": [[2,1,1.0],[3,1,1.0],[3,2,1.0],[4,1,1.0],[4,2,1.0],[4,3,1.0]],
            "volume_signs": [[1,2,3,4,1.0]]
        },
        "gains": { "mu": 1.0, "nu": 1.0, "lambda": 1.0 },
        "sim": { "ic": { "type": "random-cube", "seed": 1 } }
    }"#;

    #[test]
    fn parses_regular_tetrahedron() {
        let sc = parse_scenario(REGULAR_TETRA).unwrap();
        match sc {
            Scenario::ThreeD { desired, sim, .. } => {
                assert_eq!(desired.agent_count(), 4);
                assert_eq!(sim.dt, 0.005);
                assert_eq!(sim.t_max, 60.0);
            }
            _ => panic!("expected 3D scenario"),
        }
    }

    #[test]
    fn distances_derived_from_positions() {
        let json = r#"{
            "formation": {
                "agents": 4,
                "insertions": [[1, 2, 3]],
                "desired_positions": [[0,0,0],[1,0,0],[0.5,0.8660254037844386,0],
                                      [0.5,0.28867513459481287,0.816496580927726]]
            },
            "sim": { "ic": { "type": "reflected-desired" } }
        }"#;
        match parse_scenario(json).unwrap() {
            Scenario::ThreeD { desired, .. } => {
                assert!((desired.distance(4, 2).unwrap() - 1.0).abs() < 1e-12);
                assert_eq!(desired.volume_sign([1, 2, 3, 4]), 1.0);
            }
            _ => panic!(),
        }
    }

    #[test]
    fn error_carries_line_info() {
        let bad = "{\n \"mode\": \"3d\",\n \"formation\": 5\n}";
        let err = parse_scenario(bad).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3"), "message was: {msg}");
    }

    #[test]
    fn rejects_unknown_fields() {
        let bad = REGULAR_TETRA.replace("\"mode\"", "\"mod\"");
        assert!(parse_scenario(&bad).is_err());
    }

    #[test]
    fn parses_2d_scenario() {
        let json = r#"{
            "mode": "2d",
            "formation": {
                "agents": 3,
                "bases": [[1, 2]],
                "desired_positions": [[0,0,0],[1,0,0],[0.5,0.8660254037844386,0]]
            },
            "sim": { "ic": { "type": "random-cube", "seed": 9, "half_width": 3.0 } }
        }"#;
        match parse_scenario(json).unwrap() {
            Scenario::TwoD { plan, .. } => assert_eq!(plan.agent_count(), 3),
            _ => panic!("expected 2D scenario"),
        }
    }

    #[test]
    fn per_agent_gain_overrides() {
        let json = REGULAR_TETRA.replace(
            r#""gains": { "mu": 1.0, "nu": 1.0, "lambda": 1.0 }"#,
            r#""gains": { "mu": 1.0, "per_agent": { "4": { "mu": 2.5 } } }"#,
        );
        match parse_scenario(&json).unwrap() {
            Scenario::ThreeD { gains, .. } => {
                assert_eq!(gains.mu(4).unwrap(), 2.5);
                assert_eq!(gains.mu(3).unwrap(), 1.0);
            }
            _ => panic!(),
        }
    }
}
