//! World state: follower agents, the virtual leader and circular obstacles,
//! together with the proximity graph and obstacle-surface projections.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{bump, sigma_grad, sigma_norm_len, ActionParams};
use crate::Vec2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("unknown agent id {0}")]
    UnknownAgent(usize),
    #[error("agent {0} is not alive")]
    DeadAgent(usize),
    #[error("agent at distance {distance} from obstacle centre is not outside radius {radius}")]
    DegenerateProjection { distance: f64, radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState {
    pub id: usize,
    pub q: Vec2,
    pub p: Vec2,
    pub alive: bool,
}

impl AgentState {
    pub fn new(id: usize, q: Vec2, p: Vec2) -> Self {
        Self {
            id,
            q,
            p,
            alive: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeaderState {
    pub q: Vec2,
    pub p: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Obstacle {
    pub fn new(center: Vec2, radius: f64) -> Self {
        Self {
            center: [center.x, center.y],
            radius,
        }
    }

    pub fn center(&self) -> Vec2 {
        Vec2::new(self.center[0], self.center[1])
    }

    /// Signed distance from `q` to the obstacle surface (negative inside).
    pub fn clearance(&self, q: Vec2) -> f64 {
        (q - self.center()).norm() - self.radius
    }
}

/// Virtual agent on an obstacle surface, the closest point to some follower.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaAgent {
    pub q_hat: Vec2,
    pub p_hat: Vec2,
    pub obstacle: usize,
}

/// Snapshot of every agent, the leader and the obstacle field.
///
/// Agent ids are the indices into `agents`.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub agents: Vec<AgentState>,
    pub leader: LeaderState,
    pub obstacles: Vec<Obstacle>,
}

impl World {
    pub fn new(positions: &[Vec2], velocities: &[Vec2], leader: LeaderState) -> Self {
        let agents = positions
            .iter()
            .zip(velocities)
            .enumerate()
            .map(|(id, (q, p))| AgentState::new(id, *q, *p))
            .collect();
        Self {
            agents,
            leader,
            obstacles: Vec::new(),
        }
    }

    pub fn with_obstacles(mut self, obstacles: Vec<Obstacle>) -> Self {
        self.obstacles = obstacles;
        self
    }

    pub fn agent(&self, id: usize) -> Result<&AgentState, WorldError> {
        self.agents.get(id).ok_or(WorldError::UnknownAgent(id))
    }

    pub fn alive(&self) -> impl Iterator<Item = &AgentState> {
        self.agents.iter().filter(|a| a.alive)
    }

    pub fn alive_count(&self) -> usize {
        self.alive().count()
    }
}

/// Alive agents strictly closer than `r` to agent `i` (excluding `i`).
pub fn neighbors(i: usize, world: &World, r: f64) -> Result<Vec<usize>, WorldError> {
    let me = world.agent(i)?;
    if !me.alive {
        return Err(WorldError::DeadAgent(i));
    }
    Ok(world
        .agents
        .iter()
        .filter(|o| o.alive && o.id != i && (o.q - me.q).norm() < r)
        .map(|o| o.id)
        .collect())
}

/// Spatial adjacency weight `ρ_h(‖q_j − q_i‖_σ / r_α)`.
#[inline]
pub fn adjacency_alpha(q_i: Vec2, q_j: Vec2, p: &ActionParams) -> f64 {
    bump(sigma_norm_len((q_j - q_i).norm(), p.eps) / p.r_alpha(), p.h)
}

/// Obstacle adjacency weight `ρ_h(‖q̂ − q_i‖_σ / d_β)`.
#[inline]
pub fn adjacency_beta(q_i: Vec2, q_hat: Vec2, p: &ActionParams) -> f64 {
    bump(
        sigma_norm_len((q_hat - q_i).norm(), p.eps) / p.d_beta(),
        p.h,
    )
}

/// Closest point on the obstacle boundary and the tangential part of the
/// agent velocity scaled by `μ = R/‖q − y‖`.
pub fn beta_project(
    q_i: Vec2,
    p_i: Vec2,
    obs: &Obstacle,
    obstacle_id: usize,
) -> Result<BetaAgent, WorldError> {
    let y = obs.center();
    let offset = q_i - y;
    let dist = offset.norm();
    if !(dist > obs.radius) {
        return Err(WorldError::DegenerateProjection {
            distance: dist,
            radius: obs.radius,
        });
    }
    let mu = obs.radius / dist;
    let normal = offset / dist;
    let q_hat = y + normal * obs.radius;
    let p_hat = (p_i - normal * normal.dot(&p_i)) * mu;
    Ok(BetaAgent {
        q_hat,
        p_hat,
        obstacle: obstacle_id,
    })
}

/// β-agents currently inside agent `i`'s obstacle sensing range `r_obs`.
pub fn beta_agents(
    agent: &AgentState,
    obstacles: &[Obstacle],
    p: &ActionParams,
) -> Result<Vec<BetaAgent>, WorldError> {
    let mut out = Vec::new();
    for (k, obs) in obstacles.iter().enumerate() {
        let beta = beta_project(agent.q, agent.p, obs, k)?;
        if (beta.q_hat - agent.q).norm() < p.r_obs {
            out.push(beta);
        }
    }
    Ok(out)
}

/// `(q_to − q_from)/√(1 + ε‖q_to − q_from‖²)`, the σ-norm gradient.
#[inline]
pub fn n_vector(q_from: Vec2, q_to: Vec2, eps: f64) -> Vec2 {
    sigma_grad(q_to - q_from, eps)
}
