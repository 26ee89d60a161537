//! Scalar function stack for flocking potentials: the σ-norm, the bump
//! cut-off, uneven sigmoids, the agent/obstacle/leader action functions and
//! the pairwise potential obtained by integrating them.
//!
//! Every function here is pure. Distances handed to the action functions are
//! already σ-mapped (see [`sigma_norm`]); the σ-images of the configured
//! distances are recomputed from [`ActionParams`] on demand.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Vec2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MathError {
    #[error("non-finite input to {0}")]
    NonFinite(&'static str),
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParam {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("invalid circle plan: {0}")]
    InvalidPlan(String),
}

/// Smoothed norm `(1/ε)(√(1 + ε‖z‖²) − 1)`.
pub fn sigma_norm(z: Vec2, eps: f64) -> Result<f64, MathError> {
    if !z.x.is_finite() || !z.y.is_finite() || !eps.is_finite() {
        return Err(MathError::NonFinite("sigma_norm"));
    }
    Ok(sigma_norm_len(z.norm(), eps))
}

/// σ-norm of a vector whose Euclidean length is `len`.
#[inline]
pub fn sigma_norm_len(len: f64, eps: f64) -> f64 {
    let sq = len * len;
    // (√(1+εs) − 1)/ε rewritten as s/(√(1+εs) + 1) to stay accurate for tiny ε.
    sq / ((1.0 + eps * sq).sqrt() + 1.0)
}

/// Gradient of the σ-norm, `z / √(1 + ε‖z‖²)`.
#[inline]
pub fn sigma_grad(z: Vec2, eps: f64) -> Vec2 {
    z / (1.0 + eps * z.norm_squared()).sqrt()
}

/// Bump function ρ_h: 1 on `[0, h)`, half-cosine blend on `[h, 1]`, 0 elsewhere.
#[inline]
pub fn bump(z: f64, h: f64) -> f64 {
    if (0.0..h).contains(&z) {
        1.0
    } else if (h..=1.0).contains(&z) {
        0.5 * (1.0 + (std::f64::consts::PI * (z - h) / (1.0 - h)).cos())
    } else {
        0.0
    }
}

/// σ₁(z) = z / √(1 + z²).
#[inline]
pub fn sigma1(z: f64) -> f64 {
    z / (1.0 + z * z).sqrt()
}

#[inline]
fn sigmoid_offset(a: f64, b: f64) -> f64 {
    (a - b).abs() / (4.0 * a * b).sqrt()
}

fn check_sigmoid_bounds(
    a: f64,
    b: f64,
    a_name: &'static str,
    b_name: &'static str,
) -> Result<(), MathError> {
    if !(a.is_finite() && a > 0.0) {
        return Err(MathError::InvalidParam {
            name: a_name,
            value: a,
            reason: "must be finite and > 0",
        });
    }
    if !(b.is_finite() && b >= a) {
        return Err(MathError::InvalidParam {
            name: b_name,
            value: b,
            reason: "must be finite and >= the lower sigmoid bound",
        });
    }
    Ok(())
}

/// Uneven sigmoid `½[(a+b)σ₁(z+c) + (a−b)]` with `c = |a−b|/√(4ab)`.
///
/// Requires `0 < a ≤ b`, which pins `φ(0) = 0`.
pub fn phi(z: f64, a: f64, b: f64) -> Result<f64, MathError> {
    check_sigmoid_bounds(a, b, "a", "b")?;
    Ok(phi_raw(z, a, b))
}

#[inline]
fn phi_raw(z: f64, a: f64, b: f64) -> f64 {
    let c = sigmoid_offset(a, b);
    0.5 * ((a + b) * sigma1(z + c) + (a - b))
}

fn default_a_sigma_l() -> f64 {
    1.0
}

fn default_kappa() -> f64 {
    1.2
}

/// Every scalar parameter of the action-function stack.
///
/// Distances are Euclidean; their σ-images are derived by the accessor
/// methods and never stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionParams {
    pub a: f64,
    pub b: f64,
    pub a_l: f64,
    pub b_l: f64,
    pub eps: f64,
    pub eps_l: f64,
    pub h: f64,
    /// Plateau fraction for leader cut-offs; falls back to `h` when absent.
    #[serde(default)]
    pub h_l: Option<f64>,
    #[serde(default = "default_a_sigma_l")]
    pub a_sigma_l: f64,
    /// Desired agent spacing. Scenario files may leave this out; it is
    /// derived from the formation geometry before a run starts.
    #[serde(default)]
    pub d: f64,
    pub d_obs: f64,
    pub d_l: f64,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    pub r_obs: f64,
}

impl Default for ActionParams {
    fn default() -> Self {
        Self {
            a: 5.0,
            b: 5.0,
            a_l: 3.0,
            b_l: 3.0,
            eps: 0.1,
            eps_l: 0.1,
            h: 0.2,
            h_l: None,
            a_sigma_l: 1.0,
            d: 3.0901699437494745,
            d_obs: 3.0,
            d_l: 5.0,
            kappa: 1.2,
            r_obs: 3.0,
        }
    }
}

impl ActionParams {
    pub fn validate(&self) -> Result<(), MathError> {
        check_sigmoid_bounds(self.a, self.b, "a", "b")?;
        check_sigmoid_bounds(self.a_l, self.b_l, "a_l", "b_l")?;
        let unit = |name, value: f64| {
            if value > 0.0 && value < 1.0 {
                Ok(())
            } else {
                Err(MathError::InvalidParam {
                    name,
                    value,
                    reason: "must lie strictly inside (0, 1)",
                })
            }
        };
        unit("eps", self.eps)?;
        unit("eps_l", self.eps_l)?;
        unit("h", self.h)?;
        unit("h_l", self.h_l())?;
        let positive = |name, value: f64| {
            if value.is_finite() && value > 0.0 {
                Ok(())
            } else {
                Err(MathError::InvalidParam {
                    name,
                    value,
                    reason: "must be finite and > 0",
                })
            }
        };
        positive("a_sigma_l", self.a_sigma_l)?;
        positive("d", self.d)?;
        positive("d_obs", self.d_obs)?;
        positive("d_l", self.d_l)?;
        positive("r_obs", self.r_obs)?;
        if !(self.kappa.is_finite() && self.kappa > 1.0) {
            return Err(MathError::InvalidParam {
                name: "kappa",
                value: self.kappa,
                reason: "must be > 1",
            });
        }
        Ok(())
    }

    pub fn h_l(&self) -> f64 {
        self.h_l.unwrap_or(self.h)
    }

    /// Agent–agent interaction range `r = κ·d`.
    pub fn r(&self) -> f64 {
        self.kappa * self.d
    }

    pub fn d_alpha(&self) -> f64 {
        sigma_norm_len(self.d, self.eps)
    }

    pub fn r_alpha(&self) -> f64 {
        sigma_norm_len(self.r(), self.eps)
    }

    pub fn d_beta(&self) -> f64 {
        sigma_norm_len(self.d_obs, self.eps)
    }

    pub fn r_beta(&self) -> f64 {
        sigma_norm_len(self.r_obs, self.eps)
    }

    pub fn d_alpha_l(&self) -> f64 {
        sigma_norm_len(self.d_l, self.eps_l)
    }
}

/// Agent–agent action function `ρ_h(z/r_α)·φ(z − d_α)`.
#[inline]
pub fn phi_alpha(z: f64, p: &ActionParams) -> f64 {
    let r_alpha = p.r_alpha();
    if z >= r_alpha {
        return 0.0;
    }
    bump(z / r_alpha, p.h) * phi_raw(z - p.d_alpha(), p.a, p.b)
}

/// Purely repulsive obstacle action function `ρ_h(z/d_β)(σ₁(z − d_β) − 1)`.
#[inline]
pub fn phi_beta(z: f64, p: &ActionParams) -> f64 {
    let d_beta = p.d_beta();
    bump(z / d_beta, p.h) * (sigma1(z - d_beta) - 1.0)
}

/// Leader sigmoid with the slope-normalised argument and no cut-off.
///
/// The argument is `(z − z₀)/(a_σL·z₀) + c`, so the zero crossing sits at the
/// σ-image `z₀` of the desired radius and a larger `a_σL` flattens the slope.
#[inline]
fn leader_sigmoid(z: f64, zero: f64, p: &ActionParams) -> f64 {
    let c = sigmoid_offset(p.a_l, p.b_l);
    let arg = (z - zero) / (p.a_sigma_l * zero) + c;
    0.5 * ((p.a_l + p.b_l) * sigma1(arg) + (p.a_l - p.b_l))
}

/// Single-circle leader action function (no cut-off).
#[inline]
pub fn phi_alpha_l(z: f64, p: &ActionParams) -> f64 {
    leader_sigmoid(z, p.d_alpha_l(), p)
}

/// One branch of a (possibly truncated) multi-circle leader profile, all in σ-space.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Branch {
    amplitude: f64,
    zero: f64,
    /// `None` for the outermost active circle.
    cutoff: Option<f64>,
}

/// The leader action function at one instant, with σ-images cached.
///
/// Build it once per integration step with [`LeaderProfile::single`] or
/// [`LeaderProfile::circles`] and evaluate it for every agent.
#[derive(Debug, Clone, PartialEq)]
pub struct LeaderProfile {
    params: ActionParams,
    /// Empty in single-circle mode.
    branches: Vec<Branch>,
}

impl LeaderProfile {
    pub fn single(params: &ActionParams) -> Self {
        Self {
            params: *params,
            branches: Vec::new(),
        }
    }

    /// Piecewise profile over the first `active` circles of `plan`; the last
    /// active circle loses its cut-off and amplitude.
    pub fn circles(plan: &CirclePlan, active: usize, params: &ActionParams) -> Self {
        let active = active.clamp(1, plan.n());
        let branches = (0..active)
            .map(|i| {
                let zero = sigma_norm_len(plan.radii[i], params.eps_l);
                if i + 1 == active {
                    Branch {
                        amplitude: 1.0,
                        zero,
                        cutoff: None,
                    }
                } else {
                    Branch {
                        amplitude: plan.amplitudes[i],
                        zero,
                        cutoff: Some(sigma_norm_len(plan.cutoffs[i], params.eps_l)),
                    }
                }
            })
            .collect();
        Self {
            params: *params,
            branches,
        }
    }

    pub fn params(&self) -> &ActionParams {
        &self.params
    }

    /// Number of circles the profile targets.
    pub fn circles_active(&self) -> usize {
        self.branches.len().max(1)
    }

    pub fn eval(&self, z: f64) -> f64 {
        let p = &self.params;
        if self.branches.is_empty() {
            return phi_alpha_l(z, p);
        }
        for br in &self.branches {
            match br.cutoff {
                Some(cut) if z <= cut => {
                    return br.amplitude * bump(z / cut, p.h_l()) * phi_raw(z - br.zero, p.a, p.b);
                }
                Some(_) => continue,
                None => return phi_raw(z - br.zero, p.a, p.b),
            }
        }
        unreachable!("last branch has no cut-off")
    }
}

/// Concentric-circle plan: radii, per-circle counts, leader cut-offs and the
/// switching interval. Construct through [`crate::formation::plan_circles`] or
/// [`CirclePlan::new`]; both enforce the ordering and range invariants.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CirclePlan {
    radii: Vec<f64>,
    counts: Vec<usize>,
    amplitudes: Vec<f64>,
    d_eps: f64,
    cutoffs: Vec<f64>,
    ts: f64,
    spacing: f64,
    kappa: f64,
}

impl CirclePlan {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        radii: Vec<f64>,
        counts: Vec<usize>,
        amplitudes: Vec<f64>,
        d_eps: f64,
        cutoffs: Vec<f64>,
        ts: f64,
        spacing: f64,
        kappa: f64,
    ) -> Result<Self, MathError> {
        let plan = Self {
            radii,
            counts,
            amplitudes,
            d_eps,
            cutoffs,
            ts,
            spacing,
            kappa,
        };
        let problems = plan.violations();
        if problems.is_empty() {
            Ok(plan)
        } else {
            Err(MathError::InvalidPlan(problems.join("; ")))
        }
    }

    /// Every violated invariant, as a human-readable inequality.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let n = self.radii.len();
        if n == 0 {
            out.push("plan has no circles".into());
            return out;
        }
        if self.counts.len() != n {
            out.push(format!("{} counts for {} radii", self.counts.len(), n));
        }
        if self.cutoffs.len() + 1 != n {
            out.push(format!("{} cut-offs for {} circles", self.cutoffs.len(), n));
        }
        if self.amplitudes.len() + 1 != n {
            out.push(format!(
                "{} amplitudes for {} circles",
                self.amplitudes.len(),
                n
            ));
        }
        if !(self.d_eps > 0.0) {
            out.push(format!("d_eps = {} must be > 0", self.d_eps));
        }
        if !(self.ts > 0.0) {
            out.push(format!("ts = {} must be > 0", self.ts));
        }
        if let Some(&c) = self.counts.first() {
            if c < 3 {
                out.push(format!("N_1 = {c} < 3: innermost circle needs a polygon"));
            }
        }
        for (i, &c) in self.counts.iter().enumerate() {
            if c == 0 {
                out.push(format!("N_{} = 0", i + 1));
            }
        }
        for (i, amp) in self.amplitudes.iter().enumerate() {
            if !(*amp > 0.0) {
                out.push(format!("a_{} = {} must be > 0", i + 1, amp));
            }
        }
        let r = self.kappa * self.spacing;
        for i in 1..n {
            let gap = self.radii[i] - self.radii[i - 1];
            if !(gap > 0.0) {
                out.push(format!(
                    "radii not increasing: d_L{} = {:.4} <= d_L{} = {:.4}",
                    i + 1,
                    self.radii[i],
                    i,
                    self.radii[i - 1]
                ));
            }
            if !(r < gap) {
                out.push(format!(
                    "interaction range r = {:.4} >= d_L{} - d_L{} = {:.4}",
                    r,
                    i + 1,
                    i,
                    gap
                ));
            }
        }
        for (i, &cut) in self.cutoffs.iter().enumerate() {
            if i + 1 >= n {
                break;
            }
            if !(cut > self.radii[i]) {
                out.push(format!(
                    "cut-off r_L{} = {:.4} <= d_L{} = {:.4}",
                    i + 1,
                    cut,
                    i + 1,
                    self.radii[i]
                ));
            }
            if !(cut < self.radii[i + 1]) {
                out.push(format!(
                    "cut-off r_L{} = {:.4} >= d_L{} = {:.4}",
                    i + 1,
                    cut,
                    i + 2,
                    self.radii[i + 1]
                ));
            }
        }
        out
    }

    pub fn n(&self) -> usize {
        self.radii.len()
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn cutoffs(&self) -> &[f64] {
        &self.cutoffs
    }

    pub fn d_eps(&self) -> f64 {
        self.d_eps
    }

    pub fn ts(&self) -> f64 {
        self.ts
    }

    /// Shared agent spacing `d`.
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn total_agents(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Number of circles whose leader branch is active at time `t`:
    /// one on `[0, ts]`, two on `(ts, 2ts]`, and so on, capped at `n`.
    pub fn active_circles(&self, t: f64) -> usize {
        let k = (t / self.ts).ceil().max(1.0) as usize;
        k.min(self.n())
    }
}

/// Full piecewise leader action function over every circle of `plan`.
pub fn phi_alpha_l_multi(z: f64, plan: &CirclePlan, p: &ActionParams) -> f64 {
    LeaderProfile::circles(plan, plan.n(), p).eval(z)
}

/// Time-switched leader action function: circles are enabled inner to outer,
/// one more every `ts` seconds.
pub fn phi_alpha_l_switched(z: f64, t: f64, plan: &CirclePlan, p: &ActionParams) -> f64 {
    LeaderProfile::circles(plan, plan.active_circles(t), p).eval(z)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Pairwise potential `ψ_α(z) = ∫_{d_α}^{z} φ_α(s) ds`.
pub fn psi_alpha(z: f64, p: &ActionParams) -> f64 {
    let d_alpha = p.d_alpha();
    let r_alpha = p.r_alpha();
    // The integrand vanishes past r_α; clip so the quadrature never sees the flat tail.
    let upper = z.min(r_alpha);
    if z > r_alpha && d_alpha >= r_alpha {
        return 0.0;
    }
    adaptive_simpson(&|s| phi_alpha(s, p), d_alpha, upper, 1e-8)
}
