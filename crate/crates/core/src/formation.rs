//! Formation geometry and bookkeeping: regular-polygon spacing, re-spacing
//! after agent failures, obstacle-triggered size scaling and concentric
//! multi-circle planning.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{ActionParams, CirclePlan, MathError};
use crate::world::{adjacency_beta, World};

/// Smallest admissible agent spacing.
pub const MIN_SPACING: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormationError {
    #[error("spacing {d:.4} for {n} agents on radius {d_l} is below the minimum of 1")]
    InfeasibleSpacing { n: usize, d_l: f64, d: f64 },
    #[error("spacing {d} exceeds the circle diameter {diameter}")]
    SpacingTooWide { d: f64, diameter: f64 },
    #[error("a polygon needs at least 2 agents, got {0}")]
    TooFewAgents(usize),
    #[error("unknown agent id {0}")]
    UnknownAgent(usize),
    #[error("agent {0} has already failed")]
    AlreadyDead(usize),
    #[error("invalid fault schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid scaling policy: {0}")]
    InvalidPolicy(String),
    #[error(transparent)]
    Plan(#[from] MathError),
}

/// Spacing `2 sin(π/N)·d_L` of `N` agents forming a regular polygon on a
/// circle of radius `d_L`.
pub fn polygon_spacing(n: usize, d_l: f64) -> Result<f64, FormationError> {
    if n < 2 {
        return Err(FormationError::TooFewAgents(n));
    }
    let d = 2.0 * (PI / n as f64).sin() * d_l;
    if d < MIN_SPACING {
        return Err(FormationError::InfeasibleSpacing { n, d_l, d });
    }
    Ok(d)
}

/// Largest `N` whose polygon spacing on radius `d_L` is still at least `d`.
pub fn max_agents_on_circle(d: f64, d_l: f64) -> Result<usize, FormationError> {
    let diameter = 2.0 * d_l;
    if !(d > 0.0 && d <= diameter) {
        return Err(FormationError::SpacingTooWide { d, diameter });
    }
    let exact = PI / (d / diameter).asin();
    // Guard against π/asin(sin(π/N)) landing a hair below N.
    Ok((exact * (1.0 + 1e-12)).floor() as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScalingPolicy {
    pub expand_factor: f64,
    pub shrink_factor: f64,
    pub hold_duration: f64,
    pub enabled: bool,
}

impl Default for ScalingPolicy {
    fn default() -> Self {
        Self {
            expand_factor: 2.0,
            shrink_factor: 0.5,
            hold_duration: 20.0,
            enabled: true,
        }
    }
}

impl ScalingPolicy {
    pub fn validate(&self) -> Result<(), FormationError> {
        if !(self.expand_factor > 1.0) {
            return Err(FormationError::InvalidPolicy(format!(
                "expand_factor = {} must be > 1",
                self.expand_factor
            )));
        }
        if !(self.shrink_factor > 0.0 && self.shrink_factor < 1.0) {
            return Err(FormationError::InvalidPolicy(format!(
                "shrink_factor = {} must lie in (0, 1)",
                self.shrink_factor
            )));
        }
        if !(self.hold_duration > 0.0) {
            return Err(FormationError::InvalidPolicy(format!(
                "hold_duration = {} must be > 0",
                self.hold_duration
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultEvent {
    pub time: f64,
    pub agent: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FaultSchedule {
    pub events: Vec<FaultEvent>,
}

impl FaultSchedule {
    pub fn validate(&self, n_agents: usize) -> Result<(), FormationError> {
        let bad = |msg: String| Err(FormationError::InvalidSchedule(msg));
        let mut seen = vec![false; n_agents];
        let mut last = f64::NEG_INFINITY;
        for ev in &self.events {
            if !(ev.time >= last) {
                return bad(format!(
                    "fault times must be nondecreasing (at t = {})",
                    ev.time
                ));
            }
            last = ev.time;
            match seen.get_mut(ev.agent) {
                None => return bad(format!("agent {} does not exist", ev.agent)),
                Some(true) => return bad(format!("agent {} fails twice", ev.agent)),
                Some(s) => *s = true,
            }
        }
        if !self.events.is_empty() && n_agents.saturating_sub(self.events.len()) < 3 {
            return bad(format!(
                "{} faults among {} agents leave fewer than 3 survivors",
                self.events.len(),
                n_agents
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleKind {
    Expand,
    Shrink,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalingPhase {
    Armed,
    Holding { kind: ScaleKind, until: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScalingEvent {
    Scaled {
        kind: ScaleKind,
        triggered: Vec<usize>,
        d_l: f64,
        d: f64,
    },
    Reverted {
        d_l: f64,
        d: f64,
    },
}

/// Formation-level state owned by the simulation loop.
#[derive(Debug, Clone, PartialEq)]
pub struct FormationState {
    pub n_alive: usize,
    /// Current target radius.
    pub d_l: f64,
    /// Radius to restore when a scaling hold expires.
    pub base_d_l: f64,
    pub d: f64,
    pub phase: ScalingPhase,
}

impl FormationState {
    pub fn new(n_alive: usize, d_l: f64) -> Result<Self, FormationError> {
        Ok(Self {
            n_alive,
            d_l,
            base_d_l: d_l,
            d: polygon_spacing(n_alive, d_l)?,
            phase: ScalingPhase::Armed,
        })
    }

    /// Copy the current spacing and radius into the action parameters.
    pub fn apply(&self, params: &mut ActionParams) {
        params.d = self.d;
        params.d_l = self.d_l;
    }

    /// Mark `agent` dead and re-space the polygon for the survivors.
    pub fn on_fault(
        &mut self,
        world: &mut World,
        params: &mut ActionParams,
        agent: usize,
    ) -> Result<(), FormationError> {
        let state = world
            .agents
            .get(agent)
            .ok_or(FormationError::UnknownAgent(agent))?;
        if !state.alive {
            return Err(FormationError::AlreadyDead(agent));
        }
        let n_new = self.n_alive - 1;
        let d_new = polygon_spacing(n_new, self.d_l)?;
        world.agents[agent].alive = false;
        world.agents[agent].p = crate::Vec2::zeros();
        self.n_alive = n_new;
        self.d = d_new;
        self.apply(params);
        Ok(())
    }

    /// One evaluation of the size-scaling rules at time `t`.
    ///
    /// While armed: if at least a quarter of the alive agents sense an
    /// obstacle, the radius expands when those agents form one connected
    /// group under the agent–agent range and shrinks otherwise. The new
    /// radius is held for `hold_duration`, then restored, after which the
    /// rules are checked again from the next step on.
    pub fn scaling_step(
        &mut self,
        world: &World,
        policy: &ScalingPolicy,
        params: &mut ActionParams,
        t: f64,
    ) -> Result<Option<ScalingEvent>, FormationError> {
        if !policy.enabled {
            return Ok(None);
        }
        match self.phase {
            ScalingPhase::Holding { until, .. } => {
                if t + 1e-9 < until {
                    return Ok(None);
                }
                let d = polygon_spacing(self.n_alive, self.base_d_l)?;
                self.d_l = self.base_d_l;
                self.d = d;
                self.phase = ScalingPhase::Armed;
                self.apply(params);
                Ok(Some(ScalingEvent::Reverted { d_l: self.d_l, d }))
            }
            ScalingPhase::Armed => {
                let triggered = obstacle_triggered(world, params);
                if triggered.len() < quarter(self.n_alive) {
                    return Ok(None);
                }
                let kind = if is_connected(world, &triggered, params.r()) {
                    ScaleKind::Expand
                } else {
                    ScaleKind::Shrink
                };
                let factor = match kind {
                    ScaleKind::Expand => policy.expand_factor,
                    ScaleKind::Shrink => policy.shrink_factor,
                };
                let d_l = self.base_d_l * factor;
                let d = polygon_spacing(self.n_alive, d_l)?;
                self.d_l = d_l;
                self.d = d;
                self.phase = ScalingPhase::Holding {
                    kind,
                    until: t + policy.hold_duration,
                };
                self.apply(params);
                Ok(Some(ScalingEvent::Scaled {
                    kind,
                    triggered,
                    d_l,
                    d,
                }))
            }
        }
    }
}

/// `⌈N/4⌉`, the trigger threshold for size scaling.
pub fn quarter(n: usize) -> usize {
    n.div_ceil(4)
}

/// Alive agents with a nonzero obstacle adjacency weight for some obstacle.
pub fn obstacle_triggered(world: &World, params: &ActionParams) -> Vec<usize> {
    world
        .alive()
        .filter(|a| {
            world.obstacles.iter().any(|o| {
                let offset = a.q - o.center();
                let dist = offset.norm();
                if dist <= o.radius {
                    return true;
                }
                let q_hat = o.center() + offset * (o.radius / dist);
                (q_hat - a.q).norm() < params.r_obs && adjacency_beta(a.q, q_hat, params) > 0.0
            })
        })
        .map(|a| a.id)
        .collect()
}

/// Whether `ids` form a single component when agents closer than `r` are linked.
pub fn is_connected(world: &World, ids: &[usize], r: f64) -> bool {
    if ids.len() <= 1 {
        return true;
    }
    let mut reached = vec![false; ids.len()];
    let mut stack = vec![0];
    reached[0] = true;
    while let Some(k) = stack.pop() {
        let qk = world.agents[ids[k]].q;
        for (m, id) in ids.iter().enumerate() {
            if !reached[m] && (world.agents[*id].q - qk).norm() < r {
                reached[m] = true;
                stack.push(m);
            }
        }
    }
    reached.into_iter().all(|x| x)
}

/// Geometry of a multi-circle plan before validation, for reporting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanReport {
    pub spacing: f64,
    pub interaction_range: f64,
    pub radii: Vec<f64>,
    pub cutoffs: Vec<f64>,
    /// `(d_L(i+1) − d_L(i)) − r` for each adjacent pair; must be positive.
    pub range_margins: Vec<f64>,
    pub violations: Vec<String>,
}

/// Radii and cut-offs for concentric circles sharing one agent spacing.
///
/// The spacing comes from the innermost polygon; every outer radius is the
/// one on which `counts[i]` agents sit at that spacing. A circle's leader
/// cut-off is placed `d_eps` inside the radius an extra agent would occupy
/// when squeezed out between two neighbours on that circle.
pub fn plan_report(counts: &[usize], d_l1: f64, d_eps: f64, kappa: f64) -> PlanReport {
    let mut violations = Vec::new();
    if counts.is_empty() {
        violations.push("no circles requested".to_string());
    }
    if let Some(&n1) = counts.first() {
        if n1 < 3 {
            violations.push(format!("N_1 = {n1} < 3: innermost circle needs a polygon"));
        }
    }
    if !(d_eps > 0.0) {
        violations.push(format!("d_eps = {d_eps} must be > 0"));
    }
    let spacing = counts
        .first()
        .map(|&n| 2.0 * (PI / n.max(1) as f64).sin() * d_l1)
        .unwrap_or(f64::NAN);
    if spacing < MIN_SPACING {
        violations.push(format!("spacing d = {spacing:.4} < 1"));
    }
    let radii: Vec<f64> = counts
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            if i == 0 {
                d_l1
            } else if n < 2 {
                f64::NAN
            } else {
                spacing / (2.0 * (PI / n as f64).sin())
            }
        })
        .collect();
    for (i, &n) in counts.iter().enumerate().skip(1) {
        if n < 2 {
            violations.push(format!("N_{} = {} < 2", i + 1, n));
        }
    }
    let d_r = 3f64.sqrt() / 2.0 * spacing;
    let cutoffs: Vec<f64> = counts
        .iter()
        .zip(&radii)
        .take(counts.len().saturating_sub(1))
        .map(|(&n, &r)| {
            let d_h = r * (PI / n.max(1) as f64).cos();
            d_h + d_r - d_eps
        })
        .collect();
    let range = kappa * spacing;
    let range_margins: Vec<f64> = radii.windows(2).map(|w| (w[1] - w[0]) - range).collect();
    for (i, m) in range_margins.iter().enumerate() {
        if !(*m > 0.0) {
            violations.push(format!(
                "r = {:.4} is not below d_L{} - d_L{} = {:.4}",
                range,
                i + 2,
                i + 1,
                radii[i + 1] - radii[i]
            ));
        }
    }
    for (i, &cut) in cutoffs.iter().enumerate() {
        if !(cut > radii[i]) {
            violations.push(format!(
                "cut-off r_L{} = {:.4} is not above d_L{} = {:.4}",
                i + 1,
                cut,
                i + 1,
                radii[i]
            ));
        }
        if !(cut < radii[i + 1]) {
            violations.push(format!(
                "cut-off r_L{} = {:.4} is not below d_L{} = {:.4}",
                i + 1,
                cut,
                i + 2,
                radii[i + 1]
            ));
        }
    }
    PlanReport {
        spacing,
        interaction_range: range,
        radii,
        cutoffs,
        range_margins,
        violations,
    }
}

/// Validated [`CirclePlan`] for the given per-circle counts.
pub fn plan_circles(
    counts: &[usize],
    d_l1: f64,
    d_eps: f64,
    kappa: f64,
    ts: f64,
    amplitudes: &[f64],
) -> Result<CirclePlan, FormationError> {
    let report = plan_report(counts, d_l1, d_eps, kappa);
    if !report.violations.is_empty() {
        return Err(MathError::InvalidPlan(report.violations.join("; ")).into());
    }
    Ok(CirclePlan::new(
        report.radii,
        counts.to_vec(),
        amplitudes.to_vec(),
        d_eps,
        report.cutoffs,
        ts,
        report.spacing,
        kappa,
    )?)
}
