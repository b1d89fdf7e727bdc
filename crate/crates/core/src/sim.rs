//! Single-integrator simulation: RK4 stepping, initial-condition generation
//! (including the degenerate classes), trajectory recording, and the planar
//! degenerate mode.

use crate::control::{control_inputs, projection_errors, ControlError, Gains};
use crate::framework::{DesiredFormation, Framework, FrameworkError};
use crate::geometry::Vec3;
use crate::projections::{
    desired_lambda, embed_desired, lambda, n123_from_rel, n2_from_rel, NormalCache,
    ProjectionError, ProjectionVector,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("simulation diverged at t = {t}")]
    Diverged { t: f64, trajectory: Box<Trajectory> },
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Framework(#[from] FrameworkError),
}

/// Initial-condition class for a run.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum IcSpec {
    /// Explicit starting positions.
    Explicit { positions: Vec<Vec3> },
    /// Every agent uniform in the cube [-L, L]^3; L defaults to five times
    /// the largest desired distance.
    RandomCube { half_width: Option<f64>, seed: u64 },
    /// Agents 1 and 2 collocated, the rest random.
    Collocated12 { seed: u64 },
    /// Agents 1, 2, 3 on a random line, the rest random.
    Collinear123 { seed: u64 },
    /// All agents in the z = 0 plane.
    CoplanarAll { seed: u64 },
    /// The desired formation reflected through the plane of agents 1, 2, 3.
    ReflectedDesired,
}

fn default_dt() -> f64 {
    0.005
}
fn default_t_max() -> f64 {
    60.0
}
fn default_tol() -> f64 {
    1e-6
}
fn default_eps() -> f64 {
    1e-3
}
fn default_record_every() -> usize {
    10
}
fn default_n2_plus() -> Vec3 {
    Vec3::new(1.0, 0.0, 0.0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_tol")]
    pub convergence_tol: f64,
    pub ic: IcSpec,
    #[serde(default = "default_eps")]
    pub eps_alg1: f64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default = "default_n2_plus")]
    pub n2_plus: Vec3,
    /// Agents whose input is forced to zero (diagnostic hook for the
    /// frozen-base Lyapunov checks). Agent 1 is always stationary.
    #[serde(default)]
    pub pinned: BTreeSet<usize>,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.dt <= 0.0 || !self.dt.is_finite() {
            return Err(SimError::InvalidConfig("dt must be positive".into()));
        }
        if self.t_max < 0.0 {
            return Err(SimError::InvalidConfig("t_max must be non-negative".into()));
        }
        if self.convergence_tol <= 0.0 || !self.convergence_tol.is_finite() {
            return Err(SimError::InvalidConfig(
                "convergence_tol must be positive".into(),
            ));
        }
        if self.record_every == 0 {
            return Err(SimError::InvalidConfig("record_every must be >= 1".into()));
        }
        Ok(())
    }

    pub fn with_ic(&self, ic: IcSpec) -> SimConfig {
        let mut c = self.clone();
        c.ic = ic;
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Termination {
    Converged,
    Horizon,
    Diverged,
}

/// Time series of one simulation run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub positions: Vec<Vec<Vec3>>,
    /// Projection-error components per sample (3N-6 in 3D, 2N-3 in 2D).
    pub errors: Vec<Vec<f64>>,
    pub err_inf: Vec<f64>,
    pub n2_trace: Vec<Vec3>,
    pub n123_trace: Vec<Vec3>,
    pub termination: Termination,
    pub steps: usize,
    pub diagnostics: Vec<String>,
}

impl Trajectory {
    pub fn final_positions(&self) -> &[Vec3] {
        self.positions
            .last()
            .expect("trajectory has at least one sample")
    }

    pub fn final_err_inf(&self) -> f64 {
        *self
            .err_inf
            .last()
            .expect("trajectory has at least one sample")
    }

    /// First sample time at which the error drops below `tol`.
    pub fn time_to_tol(&self, tol: f64) -> Option<f64> {
        self.err_inf
            .iter()
            .position(|&e| e < tol)
            .map(|idx| self.times[idx])
    }

    pub fn n2_drift_max(&self) -> f64 {
        drift_max(&self.n2_trace)
    }

    pub fn n123_drift_max(&self) -> f64 {
        drift_max(&self.n123_trace)
    }

    /// CSV export: t, per-agent x/y/z, each error component, and the
    /// infinity norm, in full double precision.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.positions[0].len();
        let dim = self.errors[0].len();
        let mut header = String::from("t");
        for a in 1..=n {
            header.push_str(&format!(",x_{a},y_{a},z_{a}"));
        }
        for c in 0..dim {
            header.push_str(&format!(",err_{c}"));
        }
        header.push_str(",err_inf");
        writeln!(w, "{header}")?;
        for s in 0..self.times.len() {
            write!(w, "{:.17e}", self.times[s])?;
            for p in &self.positions[s] {
                write!(w, ",{:.17e},{:.17e},{:.17e}", p.x, p.y, p.z)?;
            }
            for e in &self.errors[s] {
                write!(w, ",{:.17e}", e)?;
            }
            writeln!(w, ",{:.17e}", self.err_inf[s])?;
        }
        Ok(())
    }
}

fn drift_max(trace: &[Vec3]) -> f64 {
    let first = trace[0];
    trace.iter().fold(0.0, |m, v| m.max((*v - first).norm()))
}

/// Builds the frozen-normal cache from the initial positions.
pub fn make_normal_cache(p0: &[Vec3], eps: f64, n2_plus: Vec3) -> NormalCache {
    NormalCache::from_initial(p0, eps, n2_plus)
}

fn reflect_through_base_plane(p: &[Vec3]) -> Vec<Vec3> {
    let origin = p[0];
    let normal = (p[1] - p[0])
        .cross(p[2] - p[0])
        .normalized()
        .unwrap_or(Vec3::new(0.0, 0.0, 1.0));
    p.iter()
        .map(|&q| q - normal * (2.0 * (q - origin).dot(normal)))
        .collect()
}

/// Generates initial positions for a 3D run.
pub fn initial_positions(d: &DesiredFormation, cfg: &SimConfig) -> Result<Vec<Vec3>, SimError> {
    let n = d.agent_count();
    let default_half_width = 5.0 * d.max_distance();
    let cube = |rng: &mut ChaCha8Rng, half: f64| {
        Vec3::new(
            rng.gen_range(-half..=half),
            rng.gen_range(-half..=half),
            rng.gen_range(-half..=half),
        )
    };
    match &cfg.ic {
        IcSpec::Explicit { positions } => {
            if positions.len() != n {
                return Err(SimError::InvalidConfig(format!(
                    "expected {n} initial positions, got {}",
                    positions.len()
                )));
            }
            Ok(positions.clone())
        }
        IcSpec::RandomCube { half_width, seed } => {
            let half = half_width.unwrap_or(default_half_width);
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            Ok((0..n).map(|_| cube(&mut rng, half)).collect())
        }
        IcSpec::Collocated12 { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut p: Vec<Vec3> = (0..n).map(|_| cube(&mut rng, default_half_width)).collect();
            p[1] = p[0];
            Ok(p)
        }
        IcSpec::Collinear123 { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut p: Vec<Vec3> = (0..n).map(|_| cube(&mut rng, default_half_width)).collect();
            let dir = cube(&mut rng, 1.0)
                .normalized()
                .unwrap_or(Vec3::new(1.0, 0.0, 0.0));
            p[1] = p[0] + dir * rng.gen_range(0.1..default_half_width.max(0.2));
            p[2] = p[0] + dir * rng.gen_range(0.1..default_half_width.max(0.2));
            Ok(p)
        }
        IcSpec::CoplanarAll { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            Ok((0..n)
                .map(|_| {
                    let v = cube(&mut rng, default_half_width);
                    Vec3::new(v.x, v.y, 0.0)
                })
                .collect())
        }
        IcSpec::ReflectedDesired => {
            let p_star = embed_desired(d)?;
            Ok(reflect_through_base_plane(&p_star))
        }
    }
}

/// One classical RK4 step of p' = f(p). Agents in `frozen` keep their
/// positions bit-identical.
fn rk4_step<F>(
    p: &[Vec3],
    dt: f64,
    frozen: &BTreeSet<usize>,
    mut f: F,
) -> Result<Vec<Vec3>, SimError>
where
    F: FnMut(&[Vec3]) -> Result<Vec<Vec3>, SimError>,
{
    let advance = |p: &[Vec3], k: &[Vec3], h: f64| -> Vec<Vec3> {
        p.iter()
            .zip(k)
            .map(|(&pi, &ki)| pi + ki * h)
            .collect::<Vec<_>>()
    };
    let k1 = f(p)?;
    let k2 = f(&advance(p, &k1, dt / 2.0))?;
    let k3 = f(&advance(p, &k2, dt / 2.0))?;
    let k4 = f(&advance(p, &k3, dt))?;
    let mut next: Vec<Vec3> = (0..p.len())
        .map(|idx| p[idx] + (k1[idx] + (k2[idx] + k3[idx]) * 2.0 + k4[idx]) * (dt / 6.0))
        .collect();
    for &agent in frozen {
        next[agent - 1] = p[agent - 1];
    }
    Ok(next)
}

fn zero_pinned(u: &mut [Vec3], pinned: &BTreeSet<usize>) {
    for &agent in pinned {
        if agent >= 1 && agent <= u.len() {
            u[agent - 1] = Vec3::ZERO;
        }
    }
}

struct Recorder {
    traj: Trajectory,
    tol: f64,
    consecutive_below: usize,
}

impl Recorder {
    fn new(tol: f64) -> Self {
        Recorder {
            traj: Trajectory {
                times: Vec::new(),
                positions: Vec::new(),
                errors: Vec::new(),
                err_inf: Vec::new(),
                n2_trace: Vec::new(),
                n123_trace: Vec::new(),
                termination: Termination::Horizon,
                steps: 0,
                diagnostics: Vec::new(),
            },
            tol,
            consecutive_below: 0,
        }
    }

    /// Records a sample; returns true when the error has stayed below the
    /// tolerance for 10 consecutive samples.
    fn record(&mut self, t: f64, p: &[Vec3], errs: Vec<f64>, n2: Vec3, n123: Vec3) -> bool {
        let inf = errs.iter().fold(0.0f64, |m, e| m.max(e.abs()));
        self.traj.times.push(t);
        self.traj.positions.push(p.to_vec());
        self.traj.errors.push(errs);
        self.traj.err_inf.push(inf);
        self.traj.n2_trace.push(n2);
        self.traj.n123_trace.push(n123);
        if inf < self.tol {
            self.consecutive_below += 1;
        } else {
            self.consecutive_below = 0;
        }
        self.consecutive_below >= 10
    }
}

fn divergence_scale(p0: &[Vec3], d_max: f64) -> f64 {
    p0.iter().fold(d_max.max(1.0), |m, p| m.max(p.norm()))
}

/// Integrates the closed-loop single-integrator dynamics until the error
/// stays below tolerance for 10 consecutive samples, the horizon is reached,
/// or the run diverges.
pub fn run(d: &DesiredFormation, gains: &Gains, cfg: &SimConfig) -> Result<Trajectory, SimError> {
    cfg.validate()?;
    let p0 = initial_positions(d, cfg)?;
    let lambda_star = desired_lambda(d)?;
    run_from(d, gains, cfg, p0, &lambda_star)
}

/// As `run`, but with explicit initial positions and a precomputed target.
pub fn run_from(
    d: &DesiredFormation,
    gains: &Gains,
    cfg: &SimConfig,
    p0: Vec<Vec3>,
    lambda_star: &ProjectionVector,
) -> Result<Trajectory, SimError> {
    cfg.validate()?;
    let mut cache = make_normal_cache(&p0, cfg.eps_alg1, cfg.n2_plus);
    let mut frozen: BTreeSet<usize> = cfg.pinned.clone();
    frozen.insert(1);

    let mut scratch = Framework::new(d.graph.clone(), p0.clone())?;
    let guard = 1e6 * divergence_scale(&p0, d.max_distance());

    let mut recorder = Recorder::new(cfg.convergence_tol);
    let mut p = p0;
    let mut t = 0.0;
    let mut step_idx: usize = 0;

    // Normals actually in force, re-read at every sample for the drift
    // diagnostics and carried forward on mid-run degeneracy.
    let read_normals = |p: &[Vec3], cache: &NormalCache| -> Result<(Vec3, Vec3), ProjectionError> {
        let n2 = n2_from_rel(p[0] - p[1], cache)?;
        let n123 = n123_from_rel(p[0] - p[2], p[1] - p[2], cache)?;
        Ok((n2, n123))
    };

    let sample_errors =
        |scratch: &mut Framework, p: &[Vec3], cache: &NormalCache| -> Result<Vec<f64>, SimError> {
            scratch.positions.clear();
            scratch.positions.extend_from_slice(p);
            let lam = lambda(scratch, cache)?;
            Ok(projection_errors(&lam, lambda_star)?.as_slice().to_vec())
        };

    let (mut last_n2, mut last_n123) = read_normals(&p, &cache)?;
    let e0 = sample_errors(&mut scratch, &p, &cache)?;
    recorder.record(t, &p, e0, last_n2, last_n123);

    let total_steps = (cfg.t_max / cfg.dt).ceil() as usize;
    while step_idx < total_steps {
        let step_result = {
            let cache_ref = &cache;
            rk4_step(&p, cfg.dt, &frozen, |q| {
                scratch.positions.clear();
                scratch.positions.extend_from_slice(q);
                let lam = lambda(&scratch, cache_ref)?;
                let errs = projection_errors(&lam, lambda_star)?;
                let mut u = control_inputs(&scratch, &errs, gains, cache_ref)?;
                zero_pinned(&mut u, &frozen);
                Ok(u)
            })
        };
        let next = match step_result {
            Ok(next) => next,
            Err(SimError::Projection(ProjectionError::MidRunCollinear123)) => {
                recorder.traj.diagnostics.push(format!(
                    "t={t:.6}: agents 1-2-3 collinear mid-run; continuing with last valid n_123"
                ));
                cache = cache.with_frozen_n123(last_n123);
                continue;
            }
            Err(SimError::Projection(ProjectionError::MidRunCollocated12)) => {
                recorder.traj.diagnostics.push(format!(
                    "t={t:.6}: agents 1-2 collocated mid-run; continuing with last valid n_2"
                ));
                cache = cache.with_frozen_n2(last_n2);
                continue;
            }
            Err(e) => return Err(e),
        };
        p = next;
        t += cfg.dt;
        step_idx += 1;

        if p.iter().any(|q| !q.is_finite() || q.norm() > guard) {
            let e = sample_errors(&mut scratch, &p, &cache).unwrap_or_default();
            recorder.record(t, &p, e, last_n2, last_n123);
            recorder.traj.termination = Termination::Diverged;
            recorder.traj.steps = step_idx;
            return Err(SimError::Diverged {
                t,
                trajectory: Box::new(recorder.traj),
            });
        }

        if step_idx.is_multiple_of(cfg.record_every) || step_idx == total_steps {
            if let Ok(pair) = read_normals(&p, &cache) {
                (last_n2, last_n123) = pair;
            }
            let errs = match sample_errors(&mut scratch, &p, &cache) {
                Ok(e) => e,
                Err(SimError::Projection(ProjectionError::MidRunCollinear123)) => {
                    recorder.traj.diagnostics.push(format!(
                        "t={t:.6}: agents 1-2-3 collinear at sample; continuing with last valid n_123"
                    ));
                    cache = cache.with_frozen_n123(last_n123);
                    sample_errors(&mut scratch, &p, &cache)?
                }
                Err(SimError::Projection(ProjectionError::MidRunCollocated12)) => {
                    recorder.traj.diagnostics.push(format!(
                        "t={t:.6}: agents 1-2 collocated at sample; continuing with last valid n_2"
                    ));
                    cache = cache.with_frozen_n2(last_n2);
                    sample_errors(&mut scratch, &p, &cache)?
                }
                Err(e) => return Err(e),
            };
            if recorder.record(t, &p, errs, last_n2, last_n123) {
                recorder.traj.termination = Termination::Converged;
                recorder.traj.steps = step_idx;
                return Ok(recorder.traj);
            }
        }
    }

    recorder.traj.termination = Termination::Horizon;
    recorder.traj.steps = step_idx;
    Ok(recorder.traj)
}

/// Planar (2D) formation: a triangulated leader-first-follower structure
/// with out(l) = 2 for l >= 3, specified by explicit planar positions.
#[derive(Debug, Clone)]
pub struct PlanarFormation {
    /// One base pair [i, j] (i < j < l) per agent l = 3..=N.
    pub bases: Vec<[usize; 2]>,
    pub desired_positions: Vec<Vec3>,
}

impl PlanarFormation {
    pub fn new(bases: Vec<[usize; 2]>, desired_positions: Vec<Vec3>) -> Result<Self, SimError> {
        let n = desired_positions.len();
        if n < 3 || bases.len() != n - 2 {
            return Err(SimError::InvalidConfig(format!(
                "planar formation needs one base pair per agent 3..=N, got {} for N = {n}",
                bases.len()
            )));
        }
        for (idx, &[i, j]) in bases.iter().enumerate() {
            let l = idx + 3;
            if i == 0 || i >= j || j >= l {
                return Err(SimError::InvalidConfig(format!(
                    "base pair ({i}, {j}) of agent {l} must satisfy 0 < i < j < l"
                )));
            }
        }
        if desired_positions.iter().any(|p| p.z != 0.0) {
            return Err(SimError::InvalidConfig(
                "planar desired positions must have zero z-components".into(),
            ));
        }
        Ok(PlanarFormation {
            bases,
            desired_positions,
        })
    }

    pub fn agent_count(&self) -> usize {
        self.desired_positions.len()
    }

    /// Planar projection variables [zeta_2; zeta_l, varphi_l ...] with the
    /// plane normal fixed to (0, 0, 1). Dimension 2N - 3.
    pub fn lambda_2d(&self, p: &[Vec3], cache: &NormalCache) -> Result<Vec<f64>, ProjectionError> {
        let z_hat = Vec3::new(0.0, 0.0, 1.0);
        let mut values = Vec::with_capacity(2 * p.len() - 3);
        let p21 = p[0] - p[1];
        values.push(p21.dot(n2_from_rel(p21, cache)?));
        for (idx, &[i, j]) in self.bases.iter().enumerate() {
            let l = idx + 3;
            let p_li = p[i - 1] - p[l - 1];
            let p_ji = p[i - 1] - p[j - 1];
            values.push(p_li.dot(p_ji));
            values.push(p_li.dot(z_hat.cross(p_ji)));
        }
        Ok(values)
    }

    fn control_2d(
        &self,
        p: &[Vec3],
        errs: &[f64],
        gains: &Gains,
        cache: &NormalCache,
    ) -> Result<Vec<Vec3>, SimError> {
        let z_hat = Vec3::new(0.0, 0.0, 1.0);
        let mut u = vec![Vec3::ZERO; p.len()];
        let p21 = p[0] - p[1];
        u[1] = n2_from_rel(p21, cache).map_err(SimError::from)? * (gains.mu(2)? * errs[0]);
        for (idx, &[i, j]) in self.bases.iter().enumerate() {
            let l = idx + 3;
            let diff = p[i - 1] - p[j - 1];
            let ze = errs[1 + 2 * idx];
            let ve = errs[2 + 2 * idx];
            u[l - 1] = diff * (gains.mu(l)? * ze) + z_hat.cross(diff) * (gains.nu(l)? * ve);
        }
        Ok(u)
    }
}

/// Runs the planar degenerate mode: the controls' z-components are
/// identically zero, so planar starts stay planar bitwise.
pub fn run_2d(
    plan: &PlanarFormation,
    gains: &Gains,
    cfg: &SimConfig,
) -> Result<Trajectory, SimError> {
    cfg.validate()?;
    let n = plan.agent_count();
    let p0: Vec<Vec3> = match &cfg.ic {
        IcSpec::Explicit { positions } => {
            if positions.len() != n {
                return Err(SimError::InvalidConfig(format!(
                    "expected {n} initial positions, got {}",
                    positions.len()
                )));
            }
            positions.clone()
        }
        IcSpec::RandomCube { half_width, seed } => {
            let d_max = plan
                .desired_positions
                .iter()
                .flat_map(|a| plan.desired_positions.iter().map(move |b| (*a - *b).norm()))
                .fold(0.0f64, f64::max);
            let half = half_width.unwrap_or(5.0 * d_max);
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            (0..n)
                .map(|_| {
                    Vec3::new(
                        rng.gen_range(-half..=half),
                        rng.gen_range(-half..=half),
                        0.0,
                    )
                })
                .collect()
        }
        IcSpec::ReflectedDesired => {
            // In-plane reflection across the line through agents 1 and 2.
            let p = &plan.desired_positions;
            let dir = (p[1] - p[0])
                .normalized()
                .ok_or_else(|| SimError::InvalidConfig("desired agents 1 and 2 coincide".into()))?;
            p.iter()
                .map(|&q| {
                    let rel = q - p[0];
                    let along = dir * rel.dot(dir);
                    p[0] + along * 2.0 - rel
                })
                .collect()
        }
        other => {
            return Err(SimError::InvalidConfig(format!(
                "initial-condition class {other:?} is not supported in 2D mode"
            )))
        }
    };
    if p0.iter().any(|p| p.z != 0.0) {
        return Err(SimError::InvalidConfig(
            "2D initial positions must have z = 0".into(),
        ));
    }

    let mut n2_plus = cfg.n2_plus;
    n2_plus.z = 0.0;
    let cache = NormalCache::planar(&p0, cfg.eps_alg1, n2_plus);
    let lambda_star = plan.lambda_2d(&plan.desired_positions, &{
        let mut c = cache.clone();
        // The target is evaluated with its own (non-degenerate) n_2.
        c.degenerate_12_at_t0 = false;
        c.n2_fallback = None;
        c
    })?;

    let mut frozen: BTreeSet<usize> = cfg.pinned.clone();
    frozen.insert(1);
    let guard = 1e6
        * divergence_scale(
            &p0,
            plan.desired_positions
                .iter()
                .fold(0.0f64, |m, p| m.max(p.norm())),
        );

    let mut recorder = Recorder::new(cfg.convergence_tol);
    let mut p = p0;
    let mut t = 0.0;
    let mut step_idx = 0usize;

    let errors_at = |p: &[Vec3]| -> Result<Vec<f64>, SimError> {
        let lam = plan.lambda_2d(p, &cache)?;
        Ok(lam.iter().zip(&lambda_star).map(|(a, b)| a - b).collect())
    };

    let n123 = Vec3::new(0.0, 0.0, 1.0);
    let n2_at = |p: &[Vec3]| n2_from_rel(p[0] - p[1], &cache).unwrap_or(n2_plus);
    recorder.record(t, &p, errors_at(&p)?, n2_at(&p), n123);

    let total_steps = (cfg.t_max / cfg.dt).ceil() as usize;
    while step_idx < total_steps {
        let next = rk4_step(&p, cfg.dt, &frozen, |q| {
            let errs = errors_at(q)?;
            let mut u = plan.control_2d(q, &errs, gains, &cache)?;
            zero_pinned(&mut u, &frozen);
            Ok(u)
        })?;
        p = next;
        t += cfg.dt;
        step_idx += 1;

        if p.iter().any(|q| !q.is_finite() || q.norm() > guard) {
            recorder.traj.termination = Termination::Diverged;
            recorder.traj.steps = step_idx;
            return Err(SimError::Diverged {
                t,
                trajectory: Box::new(recorder.traj),
            });
        }

        if (step_idx.is_multiple_of(cfg.record_every) || step_idx == total_steps)
            && recorder.record(t, &p, errors_at(&p)?, n2_at(&p), n123)
        {
            recorder.traj.termination = Termination::Converged;
            recorder.traj.steps = step_idx;
            return Ok(recorder.traj);
        }
    }
    recorder.traj.termination = Termination::Horizon;
    recorder.traj.steps = step_idx;
    Ok(recorder.traj)
}
