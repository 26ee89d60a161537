//! Time-stepped integration of the double-integrator agents under the
//! flocking control law, with fault injection, size scaling, leader
//! scripting and per-step metrics.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, InitialConditions, Mode, ScenarioConfig};
use crate::control::{control_input_lenient, ControlError, FlockGains};
use crate::formation::{
    plan_circles, FormationError, FormationState, ScaleKind, ScalingEvent, ScalingPhase,
};
use crate::math::{
    adaptive_simpson, psi_alpha, sigma_norm_len, ActionParams, CirclePlan, LeaderProfile,
};
use crate::world::{AgentState, LeaderState, World};
use crate::Vec2;

/// States beyond this magnitude are treated as diverged.
const DIVERGENCE_LIMIT: f64 = 1e8;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("state diverged at t = {t}: agent {agent}")]
    Divergence { t: f64, agent: usize },
    #[error(transparent)]
    Formation(#[from] FormationError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Control(#[from] ControlError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Collision {
        t: f64,
        a: usize,
        b: usize,
        distance: f64,
    },
    Penetration {
        t: f64,
        agent: usize,
        obstacle: usize,
        clearance: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimEvent {
    Fault {
        t: f64,
        agent: usize,
        n_alive: usize,
        d: f64,
    },
    Scaled {
        t: f64,
        scale: ScaleKind,
        triggered: Vec<usize>,
        d_l: f64,
        d: f64,
    },
    Reverted {
        t: f64,
        d_l: f64,
        d: f64,
    },
    CircleSwitch {
        t: f64,
        active: usize,
    },
}

/// Positions and velocities of everyone at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryFrame {
    pub t: f64,
    pub agents: Vec<AgentState>,
    pub leader: LeaderState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsFrame {
    pub t: f64,
    pub n_alive: usize,
    pub d: f64,
    pub d_l: f64,
    pub active_circles: usize,
    /// Leader distance of every alive agent, in id order.
    pub leader_distances: Vec<f64>,
    /// The `n_alive` shortest pairwise distances, ascending.
    pub adjacent_distances: Vec<f64>,
    pub min_pair: f64,
    /// Smallest agent-to-obstacle-surface distance; infinite without obstacles.
    pub min_clearance: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: ScenarioConfig,
    pub frames: Vec<TrajectoryFrame>,
    pub metrics: Vec<MetricsFrame>,
    pub events: Vec<SimEvent>,
    pub violations: Vec<Violation>,
}

impl RunOutput {
    pub fn final_frame(&self) -> Option<&TrajectoryFrame> {
        self.frames.last()
    }
}

/// A running scenario. Owns the world snapshot and all formation state.
#[derive(Debug, Clone)]
pub struct Simulation {
    config: ScenarioConfig,
    world: World,
    params: ActionParams,
    formation: FormationState,
    plan: Option<CirclePlan>,
    step: usize,
    next_fault: usize,
    active_circles: usize,
    events: Vec<SimEvent>,
    violations: Vec<Violation>,
}

fn initial_world(cfg: &ScenarioConfig) -> World {
    let n = cfg.agents.count;
    let (qs, ps): (Vec<Vec2>, Vec<Vec2>) = match &cfg.agents.initial {
        InitialConditions::Normal { mean, std } => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let qs = if *std > 0.0 {
                let normal = Normal::new(0.0, *std).expect("validated std");
                (0..n)
                    .map(|_| {
                        let x = normal.sample(&mut rng);
                        let y = normal.sample(&mut rng);
                        Vec2::new(mean[0] + x, mean[1] + y)
                    })
                    .collect()
            } else {
                vec![Vec2::new(mean[0], mean[1]); n]
            };
            (qs, vec![Vec2::zeros(); n])
        }
        InitialConditions::Explicit {
            positions,
            velocities,
        } => {
            let qs = positions.iter().map(|q| Vec2::new(q[0], q[1])).collect();
            let ps = match velocities {
                Some(v) => v.iter().map(|p| Vec2::new(p[0], p[1])).collect(),
                None => vec![Vec2::zeros(); n],
            };
            (qs, ps)
        }
    };
    let leader = LeaderState {
        q: Vec2::new(cfg.leader.position[0], cfg.leader.position[1]),
        p: cfg.leader.velocity(0.0),
    };
    World::new(&qs, &ps, leader).with_obstacles(cfg.obstacles.clone())
}

impl Simulation {
    pub fn new(config: ScenarioConfig) -> Result<Self, SimError> {
        config.validate()?;
        let world = initial_world(&config);
        let n = config.agents.count;
        let (formation, plan) = match &config.mode {
            Mode::MultiCircle(spec) => {
                let plan = plan_circles(
                    &spec.counts,
                    config.params.d_l,
                    spec.d_eps,
                    config.params.kappa,
                    spec.ts,
                    &spec.amplitudes,
                )?;
                let state = FormationState {
                    n_alive: n,
                    d_l: config.params.d_l,
                    base_d_l: config.params.d_l,
                    d: plan.spacing(),
                    phase: ScalingPhase::Armed,
                };
                (state, Some(plan))
            }
            _ => (FormationState::new(n, config.params.d_l)?, None),
        };
        let mut params = config.params;
        formation.apply(&mut params);
        let active_circles = match (&plan, &config.mode) {
            (Some(plan), Mode::MultiCircle(spec)) if spec.switched => plan.active_circles(0.0),
            (Some(plan), _) => plan.n(),
            _ => 1,
        };
        Ok(Self {
            config,
            world,
            params,
            formation,
            plan,
            step: 0,
            next_fault: 0,
            active_circles,
            events: Vec::new(),
            violations: Vec::new(),
        })
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.config.dt
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn params(&self) -> &ActionParams {
        &self.params
    }

    pub fn formation(&self) -> &FormationState {
        &self.formation
    }

    pub fn plan(&self) -> Option<&CirclePlan> {
        self.plan.as_ref()
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn events(&self) -> &[SimEvent] {
        &self.events
    }

    pub fn violations(&self) -> &[Violation] {
        &self.violations
    }

    pub fn is_finished(&self) -> bool {
        self.step >= self.config.steps()
    }

    pub fn snapshot(&self) -> TrajectoryFrame {
        TrajectoryFrame {
            t: self.time(),
            agents: self.world.agents.clone(),
            leader: self.world.leader,
        }
    }

    fn leader_profile(&mut self, t: f64) -> LeaderProfile {
        match (&self.plan, &self.config.mode) {
            (Some(plan), Mode::MultiCircle(spec)) => {
                let active = if spec.switched {
                    plan.active_circles(t)
                } else {
                    plan.n()
                };
                if active != self.active_circles {
                    self.active_circles = active;
                    self.events.push(SimEvent::CircleSwitch { t, active });
                }
                LeaderProfile::circles(plan, active, &self.params)
            }
            _ => LeaderProfile::single(&self.params),
        }
    }

    /// Advance one `dt`: apply due faults and scaling rules, integrate with
    /// semi-implicit Euler, move the leader, then measure.
    pub fn step(&mut self) -> Result<MetricsFrame, SimError> {
        let t = self.time();
        let dt = self.config.dt;

        while let Some(ev) = self.config.faults.events.get(self.next_fault) {
            if ev.time > t + 1e-9 {
                break;
            }
            let agent = ev.agent;
            self.formation
                .on_fault(&mut self.world, &mut self.params, agent)?;
            self.next_fault += 1;
            self.events.push(SimEvent::Fault {
                t,
                agent,
                n_alive: self.formation.n_alive,
                d: self.formation.d,
            });
        }

        if let Mode::Scaling { policy } = self.config.mode {
            if let Some(ev) =
                self.formation
                    .scaling_step(&self.world, &policy, &mut self.params, t)?
            {
                self.events.push(match ev {
                    ScalingEvent::Scaled {
                        kind,
                        triggered,
                        d_l,
                        d,
                    } => SimEvent::Scaled {
                        t,
                        scale: kind,
                        triggered,
                        d_l,
                        d,
                    },
                    ScalingEvent::Reverted { d_l, d } => SimEvent::Reverted { t, d_l, d },
                });
            }
        }

        let profile = self.leader_profile(t);
        let gains: FlockGains = self.config.gains;
        let substeps = self.config.substeps.max(1);
        let h = dt / substeps as f64;
        let mut inputs = vec![Vec2::zeros(); self.world.agents.len()];
        for k in 0..substeps {
            let tk = t + k as f64 * h;
            self.world.leader.p = self.config.leader.velocity(tk);
            for (agent, u) in self.world.agents.iter().zip(inputs.iter_mut()) {
                // Penetrations are picked up by the post-step scan.
                *u = if agent.alive {
                    control_input_lenient(agent.id, &self.world, &gains, &self.params, &profile)?.0
                } else {
                    Vec2::zeros()
                };
            }
            for (agent, u) in self.world.agents.iter_mut().zip(&inputs) {
                if !agent.alive {
                    continue;
                }
                agent.p += h * u;
                agent.q += h * agent.p;
                let bounded = agent
                    .q
                    .iter()
                    .chain(agent.p.iter())
                    .all(|c| c.is_finite() && c.abs() < DIVERGENCE_LIMIT);
                if !bounded {
                    return Err(SimError::Divergence {
                        t: tk + h,
                        agent: agent.id,
                    });
                }
            }
            self.world.leader.q += h * self.world.leader.p;
        }
        self.step += 1;
        self.world.leader.p = self.config.leader.velocity(self.time());

        let frame = self.measure();
        self.record_violations(&frame);
        Ok(frame)
    }

    fn measure(&self) -> MetricsFrame {
        let alive: Vec<&AgentState> = self.world.alive().collect();
        let leader_distances = alive
            .iter()
            .map(|a| (a.q - self.world.leader.q).norm())
            .collect();
        let mut pairs = Vec::with_capacity(alive.len() * alive.len().saturating_sub(1) / 2);
        for (k, a) in alive.iter().enumerate() {
            for b in &alive[k + 1..] {
                pairs.push((a.q - b.q).norm());
            }
        }
        let adjacent_distances = shortest(&mut pairs, alive.len());
        let min_pair = adjacent_distances.first().copied().unwrap_or(f64::INFINITY);
        let min_clearance = alive
            .iter()
            .flat_map(|a| self.world.obstacles.iter().map(move |o| o.clearance(a.q)))
            .fold(f64::INFINITY, f64::min);
        MetricsFrame {
            t: self.time(),
            n_alive: alive.len(),
            d: self.formation.d,
            d_l: self.formation.d_l,
            active_circles: self.active_circles,
            leader_distances,
            adjacent_distances,
            min_pair,
            min_clearance,
        }
    }

    fn record_violations(&mut self, frame: &MetricsFrame) {
        let t = frame.t;
        if frame.min_pair < self.config.collision_floor {
            let alive: Vec<&AgentState> = self.world.alive().collect();
            for (k, a) in alive.iter().enumerate() {
                for b in &alive[k + 1..] {
                    let distance = (a.q - b.q).norm();
                    if distance < self.config.collision_floor {
                        self.violations.push(Violation::Collision {
                            t,
                            a: a.id,
                            b: b.id,
                            distance,
                        });
                    }
                }
            }
        }
        if frame.min_clearance <= 0.0 {
            for a in self.world.alive() {
                for (k, o) in self.world.obstacles.iter().enumerate() {
                    let clearance = o.clearance(a.q);
                    if clearance <= 0.0 {
                        self.violations.push(Violation::Penetration {
                            t,
                            agent: a.id,
                            obstacle: k,
                            clearance,
                        });
                    }
                }
            }
        }
    }

    /// Run to `t_final`, calling `observe` after every step.
    pub fn run_with<F>(&mut self, mut observe: F) -> Result<(), SimError>
    where
        F: FnMut(&Simulation, &MetricsFrame),
    {
        while !self.is_finished() {
            let frame = self.step()?;
            observe(self, &frame);
        }
        Ok(())
    }
}

/// The `n` smallest values of `values`, ascending.
fn shortest(values: &mut [f64], n: usize) -> Vec<f64> {
    let n = n.min(values.len());
    if n == 0 {
        return Vec::new();
    }
    if n < values.len() {
        values.select_nth_unstable_by(n - 1, f64::total_cmp);
    }
    let mut out = values[..n].to_vec();
    out.sort_by(f64::total_cmp);
    out
}

/// Execute a scenario end to end, keeping every frame.
pub fn run(config: &ScenarioConfig) -> Result<RunOutput, SimError> {
    let mut sim = Simulation::new(config.clone())?;
    let mut frames = Vec::with_capacity(config.steps());
    let mut metrics = Vec::with_capacity(config.steps());
    sim.run_with(|s, m| {
        frames.push(s.snapshot());
        metrics.push(m.clone());
    })?;
    Ok(RunOutput {
        config: config.clone(),
        frames,
        metrics,
        events: sim.events,
        violations: sim.violations,
    })
}

/// Leader potential `∫_{d_L}^{s} φ_αL(‖u‖_σ) du` along the radial line.
pub fn leader_potential(s: f64, profile: &LeaderProfile) -> f64 {
    let p = profile.params();
    adaptive_simpson(
        &|u| profile.eval(sigma_norm_len(u, p.eps_l)),
        p.d_l,
        s,
        1e-9,
    )
}

/// Kinetic energy relative to the leader plus the α and γ potentials.
/// Obstacle terms are not included.
pub fn formation_energy(world: &World, gains: &FlockGains, params: &ActionParams) -> f64 {
    let profile = LeaderProfile::single(params);
    let alive: Vec<&AgentState> = world.alive().collect();
    let mut energy = 0.0;
    for (k, a) in alive.iter().enumerate() {
        energy += 0.5 * (a.p - world.leader.p).norm_squared();
        energy += gains.c1_gamma * leader_potential((a.q - world.leader.q).norm(), &profile);
        for b in &alive[k + 1..] {
            let z = sigma_norm_len((a.q - b.q).norm(), params.eps);
            energy += gains.c1_alpha * psi_alpha(z, params);
        }
    }
    energy
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{AgentSpec, LeaderScript, LeaderSegment};
    use crate::formation::polygon_spacing;

    pub(crate) fn table2_gains() -> FlockGains {
        FlockGains {
            c1_alpha: 6.6,
            c2_alpha: 2.4,
            c1_beta: 15.0,
            c2_beta: 7.0,
            c1_gamma: 4.3,
            c2_gamma: 11.2,
        }
    }

    fn explicit(
        positions: Vec<[f64; 2]>,
        velocities: Vec<[f64; 2]>,
        t_final: f64,
    ) -> ScenarioConfig {
        ScenarioConfig {
            name: "unit".into(),
            seed: 0,
            dt: 0.1,
            substeps: 1,
            t_final,
            collision_floor: 0.1,
            transient: 10.0,
            agents: AgentSpec {
                count: positions.len(),
                initial: InitialConditions::Explicit {
                    positions,
                    velocities: Some(velocities),
                },
            },
            gains: table2_gains(),
            params: ActionParams::default(),
            leader: LeaderScript::default(),
            obstacles: Vec::new(),
            mode: Mode::Single,
            faults: Default::default(),
        }
    }

    #[test]
    fn free_motion_is_a_straight_line() {
        // Two agents far apart from each other, leader at the origin: only the
        // γ terms act, so zero them by putting both agents on the target circle
        // with velocities equal to the (moving) leader's.
        let mut cfg = explicit(
            vec![[5.0, 0.0], [-5.0, 0.0]],
            vec![[0.5, 0.0], [0.5, 0.0]],
            0.1,
        );
        cfg.leader = LeaderScript {
            position: [0.0, 0.0],
            hold: 0.0,
            segments: vec![LeaderSegment {
                duration: 100.0,
                velocity: [0.5, 0.0],
            }],
        };
        let mut sim = Simulation::new(cfg).unwrap();
        let before = sim.world().agents.clone();
        sim.step().unwrap();
        for (a, b) in before.iter().zip(&sim.world().agents) {
            assert!((b.q - (a.q + 0.1 * a.p)).norm() < 1e-12);
        }
        assert_eq!(sim.world().leader.q, Vec2::new(0.05, 0.0));
    }

    #[test]
    fn co_moving_polygon_is_preserved() {
        let n = 10;
        let v = [0.3, -0.2];
        let positions: Vec<[f64; 2]> = (0..n)
            .map(|k| {
                let th = std::f64::consts::TAU * k as f64 / n as f64;
                [5.0 * th.cos(), 5.0 * th.sin()]
            })
            .collect();
        let mut cfg = explicit(positions, vec![v; n], 5.0);
        cfg.leader.segments = vec![LeaderSegment {
            duration: 100.0,
            velocity: v,
        }];
        let mut sim = Simulation::new(cfg).unwrap();
        for _ in 0..50 {
            let before: Vec<Vec2> = sim
                .world()
                .agents
                .iter()
                .map(|a| a.q - sim.world().leader.q)
                .collect();
            sim.step().unwrap();
            for (a, rel) in sim.world().agents.iter().zip(&before) {
                assert!(((a.q - sim.world().leader.q) - rel).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn lone_agent_is_pulled_in() {
        let cfg = explicit(vec![[10.0, 0.0], [-40.0, 0.0]], vec![[0.0, 0.0]; 2], 1.0);
        let mut sim = Simulation::new(cfg).unwrap();
        let mut last = 10.0;
        for _ in 0..5 {
            let m = sim.step().unwrap();
            assert!(m.leader_distances[0] < last);
            last = m.leader_distances[0];
        }
    }

    #[test]
    fn divergence_is_reported() {
        let mut cfg = explicit(vec![[1e9, 0.0], [0.0, 1.0]], vec![[0.0, 0.0]; 2], 1.0);
        cfg.params.d_l = 5.0;
        let mut sim = Simulation::new(cfg).unwrap();
        assert!(matches!(
            sim.step(),
            Err(SimError::Divergence { agent: 0, .. })
        ));
    }

    #[test]
    fn faults_freeze_agents_and_respace() {
        let n = 8;
        let positions: Vec<[f64; 2]> = (0..n)
            .map(|k| {
                let th = std::f64::consts::TAU * k as f64 / n as f64;
                [5.0 * th.cos(), 5.0 * th.sin()]
            })
            .collect();
        let mut cfg = explicit(positions, vec![[0.0, 0.0]; n], 3.0);
        cfg.faults.events = vec![
            crate::formation::FaultEvent {
                time: 1.0,
                agent: 3,
            },
            crate::formation::FaultEvent {
                time: 2.0,
                agent: 5,
            },
        ];
        let out = run(&cfg).unwrap();
        let frozen = out.frames[10].agents[3].q;
        for f in &out.frames[10..] {
            assert_eq!(f.agents[3].q, frozen);
            assert!(!f.agents[3].alive);
        }
        let last = out.metrics.last().unwrap();
        assert_eq!(last.n_alive, 6);
        assert_eq!(last.d, polygon_spacing(6, 5.0).unwrap());
        assert_eq!(last.leader_distances.len(), 6);
        let faults = out
            .events
            .iter()
            .filter(|e| matches!(e, SimEvent::Fault { .. }))
            .count();
        assert_eq!(faults, 2);
    }

    #[test]
    fn metrics_pick_shortest_pairs() {
        let mut v = vec![5.0, 1.0, 4.0, 2.0, 3.0];
        assert_eq!(shortest(&mut v, 3), vec![1.0, 2.0, 3.0]);
        let mut v = vec![2.0];
        assert_eq!(shortest(&mut v, 3), vec![2.0]);
    }

    #[test]
    fn energy_is_minimal_at_the_polygon() {
        let n = 10;
        let p = ActionParams {
            d: polygon_spacing(n, 5.0).unwrap(),
            ..ActionParams::default()
        };
        let ring = |r: f64| {
            let qs: Vec<Vec2> = (0..n)
                .map(|k| {
                    let th = std::f64::consts::TAU * k as f64 / n as f64;
                    Vec2::new(th.cos(), th.sin()) * r
                })
                .collect();
            World::new(
                &qs,
                &vec![Vec2::zeros(); n],
                LeaderState {
                    q: Vec2::zeros(),
                    p: Vec2::zeros(),
                },
            )
        };
        let e0 = formation_energy(&ring(5.0), &table2_gains(), &p);
        assert!(formation_energy(&ring(5.3), &table2_gains(), &p) > e0);
        assert!(formation_energy(&ring(4.7), &table2_gains(), &p) > e0);
    }
}
