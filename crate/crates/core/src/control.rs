//! Projection errors, the decentralized control law, Lyapunov diagnostics,
//! and the linearization-diagonal rate predictor.

use crate::framework::{DesiredFormation, Framework};
use crate::geometry::Vec3;
use crate::projections::{
    desired_normal_magnitude, n123_from_rel, n2_from_rel, normal_from_rel, NormalCache,
    ProjectionError, ProjectionVector,
};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ControlError {
    #[error("control gain for agent {0} must be strictly positive")]
    NonPositiveGain(usize),
    #[error("gain map missing agent {0}")]
    MissingGain(usize),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
}

/// Per-agent positive control gains: mu for agents >= 2, nu for agents >= 3,
/// lambda for agents >= 4.
#[derive(Debug, Clone)]
pub struct Gains {
    mu: BTreeMap<usize, f64>,
    nu: BTreeMap<usize, f64>,
    lambda_g: BTreeMap<usize, f64>,
}

impl Gains {
    pub fn new(
        mu: BTreeMap<usize, f64>,
        nu: BTreeMap<usize, f64>,
        lambda_g: BTreeMap<usize, f64>,
    ) -> Result<Self, ControlError> {
        for map in [&mu, &nu, &lambda_g] {
            for (&agent, &g) in map {
                if g <= 0.0 || !g.is_finite() {
                    return Err(ControlError::NonPositiveGain(agent));
                }
            }
        }
        Ok(Gains { mu, nu, lambda_g })
    }

    /// Identical gains for every agent of an N-agent formation.
    pub fn uniform(n_agents: usize, mu: f64, nu: f64, lambda: f64) -> Result<Self, ControlError> {
        Gains::new(
            (2..=n_agents).map(|a| (a, mu)).collect(),
            (3..=n_agents).map(|a| (a, nu)).collect(),
            (4..=n_agents).map(|a| (a, lambda)).collect(),
        )
    }

    /// Every gain multiplied by `factor` (rate-scaling experiments).
    pub fn scaled(&self, factor: f64) -> Result<Self, ControlError> {
        Gains::new(
            self.mu.iter().map(|(&a, &g)| (a, g * factor)).collect(),
            self.nu.iter().map(|(&a, &g)| (a, g * factor)).collect(),
            self.lambda_g
                .iter()
                .map(|(&a, &g)| (a, g * factor))
                .collect(),
        )
    }

    pub fn set_mu(&mut self, agent: usize, g: f64) {
        self.mu.insert(agent, g);
    }

    /// Overrides individual gains of one agent; `None` leaves a gain as is.
    pub fn set_agent(
        &mut self,
        agent: usize,
        mu: Option<f64>,
        nu: Option<f64>,
        lambda: Option<f64>,
    ) -> Result<(), ControlError> {
        for (map, g) in [
            (&mut self.mu, mu),
            (&mut self.nu, nu),
            (&mut self.lambda_g, lambda),
        ] {
            if let Some(g) = g {
                if g <= 0.0 || !g.is_finite() {
                    return Err(ControlError::NonPositiveGain(agent));
                }
                map.insert(agent, g);
            }
        }
        Ok(())
    }

    pub fn mu(&self, agent: usize) -> Result<f64, ControlError> {
        self.mu
            .get(&agent)
            .copied()
            .ok_or(ControlError::MissingGain(agent))
    }

    pub fn nu(&self, agent: usize) -> Result<f64, ControlError> {
        self.nu
            .get(&agent)
            .copied()
            .ok_or(ControlError::MissingGain(agent))
    }

    pub fn lambda(&self, agent: usize) -> Result<f64, ControlError> {
        self.lambda_g
            .get(&agent)
            .copied()
            .ok_or(ControlError::MissingGain(agent))
    }
}

/// Stacked projection errors, same layout as `ProjectionVector`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorVector {
    n_agents: usize,
    values: Vec<f64>,
}

impl ErrorVector {
    pub fn dim(&self) -> usize {
        self.values.len()
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

    pub fn follower(&self, l: usize) -> (f64, f64, f64) {
        let o = 3 * (l - 4) + 3;
        (self.values[o], self.values[o + 1], self.values[o + 2])
    }

    pub fn inf_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Component-wise Lambda - Lambda*.
pub fn projection_errors(
    lambda: &ProjectionVector,
    lambda_star: &ProjectionVector,
) -> Result<ErrorVector, ControlError> {
    if lambda.dim() != lambda_star.dim() {
        return Err(ProjectionError::DimensionMismatch(lambda.dim(), lambda_star.dim()).into());
    }
    Ok(ErrorVector {
        n_agents: lambda.n_agents(),
        values: lambda
            .as_slice()
            .iter()
            .zip(lambda_star.as_slice())
            .map(|(a, b)| a - b)
            .collect(),
    })
}

/// u_2 = mu_2 zeta~_2 n_2, from agent 2's own relative measurement p_21.
pub fn agent2_control(
    p21: Vec3,
    zeta2_err: f64,
    mu2: f64,
    cache: &NormalCache,
) -> Result<Vec3, ProjectionError> {
    Ok(n2_from_rel(p21, cache)? * (mu2 * zeta2_err))
}

/// u_3 from agent 3's relative measurements p_31, p_32.
pub fn agent3_control(
    p31: Vec3,
    p32: Vec3,
    zeta3_err: f64,
    varphi3_err: f64,
    mu3: f64,
    nu3: f64,
    cache: &NormalCache,
) -> Result<Vec3, ProjectionError> {
    let n = n123_from_rel(p31, p32, cache)?;
    let diff = p31 - p32;
    Ok(diff * (mu3 * zeta3_err) + n.cross(diff) * (nu3 * varphi3_err))
}

/// u_l for an ordinary follower, from its three relative measurements.
#[allow(clippy::too_many_arguments)]
pub fn follower_control(
    base_is_123: bool,
    p_li: Vec3,
    p_lj: Vec3,
    p_lk: Vec3,
    errs: (f64, f64, f64),
    mu: f64,
    nu: f64,
    lambda: f64,
    cache: &NormalCache,
) -> Result<Vec3, ProjectionError> {
    let n = normal_from_rel(base_is_123, p_li, p_lj, p_lk, cache)?;
    let diff = p_li - p_lj;
    let (ze, ve, te) = errs;
    Ok(diff * (mu * ze) + n.cross(diff) * (nu * ve) + n * (lambda * te))
}

/// All N control inputs. Each agent's input depends only on its own relative
/// measurements and on the frozen normals in the cache.
pub fn control_inputs(
    f: &Framework,
    errors: &ErrorVector,
    gains: &Gains,
    cache: &NormalCache,
) -> Result<Vec<Vec3>, ControlError> {
    let p = &f.positions;
    let mut u = vec![Vec3::ZERO; p.len()];
    u[1] = agent2_control(p[0] - p[1], errors.zeta2(), gains.mu(2)?, cache)?;
    u[2] = agent3_control(
        p[0] - p[2],
        p[1] - p[2],
        errors.zeta3(),
        errors.varphi3(),
        gains.mu(3)?,
        gains.nu(3)?,
        cache,
    )?;
    for &[i, j, k, l] in f.graph.tetrahedra() {
        let p_l = p[l - 1];
        u[l - 1] = follower_control(
            [i, j, k] == [1, 2, 3],
            p[i - 1] - p_l,
            p[j - 1] - p_l,
            p[k - 1] - p_l,
            errors.follower(l),
            gains.mu(l)?,
            gains.nu(l)?,
            gains.lambda(l)?,
            cache,
        )?;
    }
    Ok(u)
}

/// Per-agent Lyapunov values W_3 .. W_N (quadratic forms of the errors).
pub fn lyapunov_values(errors: &ErrorVector) -> Vec<f64> {
    let mut w = Vec::with_capacity(errors.n_agents - 2);
    w.push(0.5 * (errors.zeta3().powi(2) + errors.varphi3().powi(2)));
    for l in 4..=errors.n_agents {
        let (ze, ve, te) = errors.follower(l);
        w.push(0.5 * (ze * ze + ve * ve + te * te));
    }
    w
}

/// Diagonal of the error-dynamics matrix evaluated at the desired formation.
///
/// The matrix is lower triangular, so its diagonal is its spectrum and the
/// minimum entry is the predicted slowest local decay rate.
pub fn linearization_diagonal(
    d: &DesiredFormation,
    gains: &Gains,
) -> Result<Vec<f64>, ControlError> {
    let d21 = d.distance(2, 1).map_err(ProjectionError::from)?;
    let mut diag = Vec::with_capacity(3 * d.agent_count() - 6);
    diag.push(gains.mu(2)?);
    diag.push(gains.mu(3)? * d21 * d21);
    // ||n*_123 x p*_21|| = d_21 since n_123 is a unit vector.
    diag.push(gains.nu(3)? * d21 * d21);
    for &tet in d.graph.tetrahedra() {
        let [i, j, _, l] = tet;
        let d_ji = d.distance(j, i).map_err(ProjectionError::from)?;
        let n_mag = desired_normal_magnitude(d, tet)?;
        diag.push(gains.mu(l)? * d_ji * d_ji);
        diag.push(gains.nu(l)? * (n_mag * d_ji).powi(2));
        diag.push(gains.lambda(l)? * n_mag * n_mag);
    }
    Ok(diag)
}
