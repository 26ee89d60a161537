//! Leader-following flocking on concentric circles with obstacle avoidance,
//! agent faults, adaptive formation size and gain tuning.

// NaN must fail the `!(x > 0.0)` checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod control;
pub mod formation;
pub mod io;
pub mod math;
pub mod optimizer;
pub mod sim;
pub mod world;

pub type Vec2 = nalgebra::Vector2<f64>;

pub use config::{Mode, ScenarioConfig};
pub use control::FlockGains;
pub use math::{ActionParams, CirclePlan, LeaderProfile};
pub use sim::{run, RunOutput, Simulation};
