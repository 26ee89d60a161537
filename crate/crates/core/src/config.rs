//! Scenario description loaded from TOML.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::FlockGains;
use crate::formation::{FaultSchedule, ScalingPolicy};
use crate::math::ActionParams;
use crate::world::Obstacle;
use crate::Vec2;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid field `{field}`: {message}")]
    Field { field: String, message: String },
    #[error("unknown bundled scenario `{0}`")]
    UnknownBundled(String),
}

fn field(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialConditions {
    /// Isotropic normal positions, zero velocities.
    Normal { mean: [f64; 2], std: f64 },
    Explicit {
        positions: Vec<[f64; 2]>,
        #[serde(default)]
        velocities: Option<Vec<[f64; 2]>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub count: usize,
    pub initial: InitialConditions,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeaderSegment {
    pub duration: f64,
    pub velocity: [f64; 2],
}

/// Piecewise-constant leader velocity after an initial stationary hold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderScript {
    #[serde(default)]
    pub position: [f64; 2],
    #[serde(default)]
    pub hold: f64,
    #[serde(default)]
    pub segments: Vec<LeaderSegment>,
}

impl Default for LeaderScript {
    fn default() -> Self {
        Self {
            position: [0.0, 0.0],
            hold: 0.0,
            segments: Vec::new(),
        }
    }
}

impl LeaderScript {
    /// Scripted velocity at time `t`; zero during the hold and after the last segment.
    pub fn velocity(&self, t: f64) -> Vec2 {
        let mut start = self.hold;
        if t < start {
            return Vec2::zeros();
        }
        for seg in &self.segments {
            let end = start + seg.duration;
            if t < end {
                return Vec2::new(seg.velocity[0], seg.velocity[1]);
            }
            start = end;
        }
        Vec2::zeros()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiCircleSpec {
    pub counts: Vec<usize>,
    pub d_eps: f64,
    pub amplitudes: Vec<f64>,
    pub ts: f64,
    /// Enable circles one at a time; otherwise the full piecewise function acts from t = 0.
    #[serde(default = "yes")]
    pub switched: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mode {
    Single,
    Scaling {
        #[serde(flatten)]
        policy: ScalingPolicy,
    },
    MultiCircle(MultiCircleSpec),
}

fn one() -> usize {
    1
}

fn default_collision_floor() -> f64 {
    0.1
}

fn default_transient() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    pub seed: u64,
    /// Recording interval.
    pub dt: f64,
    /// Integration steps per `dt`.
    #[serde(default = "one")]
    pub substeps: usize,
    pub t_final: f64,
    /// Pairwise distances below this are reported as collisions.
    #[serde(default = "default_collision_floor")]
    pub collision_floor: f64,
    /// Settling window used by post-run checks; the run itself ignores it.
    #[serde(default = "default_transient")]
    pub transient: f64,
    pub agents: AgentSpec,
    pub gains: FlockGains,
    pub params: ActionParams,
    #[serde(default)]
    pub leader: LeaderScript,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    pub mode: Mode,
    #[serde(default)]
    pub faults: FaultSchedule,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario config serialises")
    }

    /// Number of integration steps, `round(t_final / dt)`.
    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(field("dt", format!("{} must be > 0", self.dt)));
        }
        if self.substeps == 0 {
            return Err(field("substeps", "must be >= 1"));
        }
        if !(self.t_final >= self.dt && self.t_final.is_finite()) {
            return Err(field("t_final", format!("{} must be >= dt", self.t_final)));
        }
        if !(self.collision_floor >= 0.0) {
            return Err(field("collision_floor", "must be >= 0"));
        }
        let n = self.agents.count;
        if n < 2 {
            return Err(field(
                "agents.count",
                format!("{n} agents; need at least 2"),
            ));
        }
        match &self.agents.initial {
            InitialConditions::Normal { std, mean } => {
                if !(*std >= 0.0 && std.is_finite()) {
                    return Err(field("agents.initial.std", "must be finite and >= 0"));
                }
                if !mean.iter().all(|m| m.is_finite()) {
                    return Err(field("agents.initial.mean", "must be finite"));
                }
            }
            InitialConditions::Explicit {
                positions,
                velocities,
            } => {
                if positions.len() != n {
                    return Err(field(
                        "agents.initial.positions",
                        format!("{} positions for {} agents", positions.len(), n),
                    ));
                }
                if let Some(v) = velocities {
                    if v.len() != n {
                        return Err(field(
                            "agents.initial.velocities",
                            format!("{} velocities for {} agents", v.len(), n),
                        ));
                    }
                }
            }
        }
        self.gains
            .validate()
            .map_err(|e| field("gains", e.to_string()))?;
        // Spacing is derived later; validate with a placeholder.
        ActionParams {
            d: 1.0,
            ..self.params
        }
        .validate()
        .map_err(|e| field("params", e.to_string()))?;
        for (k, o) in self.obstacles.iter().enumerate() {
            if !(o.radius > 0.0) {
                return Err(field(&format!("obstacles[{k}].radius"), "must be > 0"));
            }
            for (m, other) in self.obstacles.iter().enumerate().take(k) {
                if other == o {
                    return Err(field(
                        &format!("obstacles[{k}]"),
                        format!("identical to obstacles[{m}]"),
                    ));
                }
            }
        }
        for (k, seg) in self.leader.segments.iter().enumerate() {
            if !(seg.duration >= 0.0) {
                return Err(field(
                    &format!("leader.segments[{k}].duration"),
                    "must be >= 0",
                ));
            }
        }
        if !(self.leader.hold >= 0.0) {
            return Err(field("leader.hold", "must be >= 0"));
        }
        match &self.mode {
            Mode::Single => {}
            Mode::Scaling { policy } => policy
                .validate()
                .map_err(|e| field("mode", e.to_string()))?,
            Mode::MultiCircle(spec) => {
                if !self.faults.events.is_empty() {
                    return Err(field(
                        "faults",
                        "faults are not supported in multi-circle mode",
                    ));
                }
                if spec.counts.len() < 2 {
                    return Err(field("mode.counts", "need at least two circles"));
                }
                if spec.amplitudes.len() + 1 != spec.counts.len() {
                    return Err(field(
                        "mode.amplitudes",
                        format!(
                            "{} amplitudes for {} circles; need one per inner circle",
                            spec.amplitudes.len(),
                            spec.counts.len()
                        ),
                    ));
                }
            }
        }
        self.faults
            .validate(n)
            .map_err(|e| field("faults", e.to_string()))?;
        Ok(())
    }
}

/// Names of the scenarios shipped with the library.
pub const BUNDLED: &[&str] = &[
    "fig7_faults",
    "fig8_obstacles_moving",
    "fig9_obstacles_static",
    "fig10_scaling",
    "fig11_triangle",
    "fig11_pentagon",
    "fig11_hexagon",
    "optimize_base",
];

/// TOML source of a bundled scenario.
pub fn bundled_source(name: &str) -> Option<&'static str> {
    Some(match name {
        "fig7_faults" => include_str!("../scenarios/fig7_faults.toml"),
        "fig8_obstacles_moving" => include_str!("../scenarios/fig8_obstacles_moving.toml"),
        "fig9_obstacles_static" => include_str!("../scenarios/fig9_obstacles_static.toml"),
        "fig10_scaling" => include_str!("../scenarios/fig10_scaling.toml"),
        "fig11_triangle" => include_str!("../scenarios/fig11_triangle.toml"),
        "fig11_pentagon" => include_str!("../scenarios/fig11_pentagon.toml"),
        "fig11_hexagon" => include_str!("../scenarios/fig11_hexagon.toml"),
        "optimize_base" => include_str!("../scenarios/optimize_base.toml"),
        _ => return None,
    })
}

/// Parse and validate a bundled scenario.
pub fn bundled(name: &str) -> Result<ScenarioConfig, ConfigError> {
    let text = bundled_source(name).ok_or_else(|| ConfigError::UnknownBundled(name.to_string()))?;
    ScenarioConfig::from_toml_str(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenarios_parse() {
        for name in BUNDLED {
            let cfg = bundled(name).unwrap();
            assert_eq!(cfg.name, *name);
        }
        assert!(matches!(
            bundled("nope"),
            Err(ConfigError::UnknownBundled(_))
        ));
    }

    const MINIMAL: &str = r#"
        seed = 1
        dt = 0.1
        t_final = 1.0

        [agents]
        count = 4
        initial = { kind = "normal", mean = [0.0, 0.0], std = 5.0 }

        [gains]
        c1_alpha = 6.6
        c2_alpha = 2.4
        c1_beta = 15.0
        c2_beta = 7.0
        c1_gamma = 4.3
        c2_gamma = 11.2

        [params]
        a = 5.0
        b = 5.0
        a_l = 3.0
        b_l = 3.0
        eps = 0.1
        eps_l = 0.1
        h = 0.2
        d_obs = 3.0
        d_l = 5.0
        r_obs = 3.0

        [mode]
        kind = "single"
    "#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = ScenarioConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.steps(), 10);
        assert_eq!(cfg.params.kappa, 1.2);
        assert_eq!(cfg.params.a_sigma_l, 1.0);
        assert_eq!(cfg.collision_floor, 0.1);
        assert!(cfg.faults.events.is_empty());
        let again = ScenarioConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn field_errors_name_the_field() {
        let bad = MINIMAL.replace("dt = 0.1", "dt = -0.1");
        let err = ScenarioConfig::from_toml_str(&bad).unwrap_err();
        assert!(err.to_string().contains("`dt`"), "{err}");
        let bad = MINIMAL.replace("eps = 0.1", "eps = 1.5");
        let err = ScenarioConfig::from_toml_str(&bad).unwrap_err();
        assert!(err.to_string().contains("`params`"), "{err}");
        let bad = MINIMAL.replace("c1_beta = 15.0", "c1_beta = 0.0");
        assert!(ScenarioConfig::from_toml_str(&bad).is_err());
    }

    #[test]
    fn scaling_and_multi_modes_parse() {
        let scaling = MINIMAL.replace(
            "kind = \"single\"",
            "kind = \"scaling\"\nexpand_factor = 2.0\nhold_duration = 20.0",
        );
        let cfg = ScenarioConfig::from_toml_str(&scaling).unwrap();
        match cfg.mode {
            Mode::Scaling { policy } => {
                assert_eq!(policy.shrink_factor, 0.5);
                assert!(policy.enabled);
            }
            other => panic!("{other:?}"),
        }
        let multi = MINIMAL.replace(
            "kind = \"single\"",
            "kind = \"multi_circle\"\ncounts = [3, 11]\nd_eps = 1.5\namplitudes = [1.0]\nts = 110.0",
        );
        let cfg = ScenarioConfig::from_toml_str(&multi).unwrap();
        assert!(matches!(cfg.mode, Mode::MultiCircle(ref s) if s.switched));
    }

    #[test]
    fn leader_script_velocity() {
        let script = LeaderScript {
            position: [0.0, 0.0],
            hold: 20.0,
            segments: vec![
                LeaderSegment {
                    duration: 10.0,
                    velocity: [1.0, 0.0],
                },
                LeaderSegment {
                    duration: 5.0,
                    velocity: [0.0, -1.0],
                },
            ],
        };
        assert_eq!(script.velocity(19.9), Vec2::zeros());
        assert_eq!(script.velocity(20.0), Vec2::new(1.0, 0.0));
        assert_eq!(script.velocity(31.0), Vec2::new(0.0, -1.0));
        assert_eq!(script.velocity(35.0), Vec2::zeros());
    }
}
