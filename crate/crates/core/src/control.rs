//! Per-agent control input: agent–agent (α), obstacle (β) and leader (γ)
//! terms summed into a single acceleration.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{phi_alpha, phi_beta, sigma_norm_len, ActionParams, LeaderProfile, MathError};
use crate::world::{adjacency_alpha, adjacency_beta, beta_project, n_vector, World, WorldError};
use crate::Vec2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("agent {agent} has penetrated obstacle {obstacle}")]
    Penetration { agent: usize, obstacle: usize },
    #[error(transparent)]
    Gains(#[from] MathError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlockGains {
    pub c1_alpha: f64,
    pub c2_alpha: f64,
    pub c1_beta: f64,
    pub c2_beta: f64,
    pub c1_gamma: f64,
    pub c2_gamma: f64,
}

impl FlockGains {
    pub fn validate(&self) -> Result<(), MathError> {
        let all = [
            ("c1_alpha", self.c1_alpha),
            ("c2_alpha", self.c2_alpha),
            ("c1_beta", self.c1_beta),
            ("c2_beta", self.c2_beta),
            ("c1_gamma", self.c1_gamma),
            ("c2_gamma", self.c2_gamma),
        ];
        for (name, value) in all {
            if !(value.is_finite() && value > 0.0) {
                return Err(MathError::InvalidParam {
                    name,
                    value,
                    reason: "gains must be finite and > 0",
                });
            }
        }
        Ok(())
    }
}

/// Acceleration for agent `i`.
///
/// Fails if the agent is dead or sits inside (or on) any obstacle.
pub fn control_input(
    i: usize,
    world: &World,
    gains: &FlockGains,
    p: &ActionParams,
    leader: &LeaderProfile,
) -> Result<Vec2, ControlError> {
    let (u, penetrated) = control_input_lenient(i, world, gains, p, leader)?;
    match penetrated.first() {
        Some(&obstacle) => Err(ControlError::Penetration { agent: i, obstacle }),
        None => Ok(u),
    }
}

/// Like [`control_input`], but obstacles the agent has penetrated are left out
/// of the sum and reported instead.
pub fn control_input_lenient(
    i: usize,
    world: &World,
    gains: &FlockGains,
    p: &ActionParams,
    leader: &LeaderProfile,
) -> Result<(Vec2, Vec<usize>), ControlError> {
    let me = world.agent(i)?;
    if !me.alive {
        return Err(WorldError::DeadAgent(i).into());
    }
    let r = p.r();
    let mut u = Vec2::zeros();

    // α: gradient plus velocity consensus over the proximity graph, in id order.
    for other in &world.agents {
        if !other.alive || other.id == i {
            continue;
        }
        let offset = other.q - me.q;
        let dist = offset.norm();
        if dist >= r {
            continue;
        }
        let z = sigma_norm_len(dist, p.eps);
        u += gains.c1_alpha * phi_alpha(z, p) * n_vector(me.q, other.q, p.eps);
        u += gains.c2_alpha * adjacency_alpha(me.q, other.q, p) * (other.p - me.p);
    }

    // β: one virtual agent per obstacle within sensing range.
    let mut penetrated = Vec::new();
    for (k, obs) in world.obstacles.iter().enumerate() {
        let beta = match beta_project(me.q, me.p, obs, k) {
            Ok(b) => b,
            Err(WorldError::DegenerateProjection { .. }) => {
                penetrated.push(k);
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let dist = (beta.q_hat - me.q).norm();
        if dist >= p.r_obs {
            continue;
        }
        let z = sigma_norm_len(dist, p.eps);
        u += gains.c1_beta * phi_beta(z, p) * n_vector(me.q, beta.q_hat, p.eps);
        u += gains.c2_beta * adjacency_beta(me.q, beta.q_hat, p) * (beta.p_hat - me.p);
    }

    // γ: pull toward the leader beyond the target circle, push inside it.
    let dist = (world.leader.q - me.q).norm();
    if dist > 0.0 {
        let z = sigma_norm_len(dist, p.eps_l);
        u += gains.c1_gamma * leader.eval(z) * (world.leader.q - me.q) / dist;
    }
    u -= gains.c2_gamma * (me.p - world.leader.p);

    Ok((u, penetrated))
}

/// Control inputs for every agent, zero for dead ones.
pub fn control_inputs(
    world: &World,
    gains: &FlockGains,
    p: &ActionParams,
    leader: &LeaderProfile,
) -> Result<Vec<Vec2>, ControlError> {
    world
        .agents
        .iter()
        .map(|a| {
            if a.alive {
                control_input(a.id, world, gains, p, leader)
            } else {
                Ok(Vec2::zeros())
            }
        })
        .collect()
}
