//! Trapezoidal direct collocation of one periodic stance phase into a
//! finite-dimensional nonlinear program.
//!
//! Decision variables are the knot states, knot controls and the stance
//! duration `T`, in that order. Flight phases are not simulated; ballistic
//! arcs into and out of stance are imposed as energy-form boundary
//! constraints so that gaits with vanishing flight remain well posed.

mod nlp;

pub use nlp::Nlp;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{stance_deriv_kernel, ControlInput, ModelParams, StanceState};

/// Boundary conditions and actuation mode of one gait optimization problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaitTask {
    /// Apex height of the flight arc bounding the cycle.
    pub apex_height: f64,
    /// Horizontal velocity at apex.
    pub apex_velocity: f64,
    /// Whether ankle torque variables are part of the problem.
    pub ankle_enabled: bool,
}

impl GaitTask {
    pub fn new(apex_height: f64, apex_velocity: f64, ankle_enabled: bool) -> Self {
        GaitTask { apex_height, apex_velocity, ankle_enabled }
    }

    /// The same task with the other actuation mode.
    pub fn with_ankle(&self, ankle_enabled: bool) -> Self {
        GaitTask { ankle_enabled, ..*self }
    }
}

/// Discretization resolution and path bounds of the transcription.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TranscriptionConfig {
    /// Number of knot points, inclusive of both stance endpoints.
    pub n_knots: usize,
    /// Bounds on the stance duration.
    pub t_bounds: [f64; 2],
    /// Bounds on leg length r (and, by inheritance, on the set point r0).
    pub r_bounds: [f64; 2],
    /// Bounds on the axial leg force.
    pub f_bounds: [f64; 2],
    /// Bounds on the set-point acceleration.
    pub u_bounds: [f64; 2],
}

impl Default for TranscriptionConfig {
    fn default() -> Self {
        TranscriptionConfig {
            n_knots: 30,
            t_bounds: [0.2, 5.0],
            r_bounds: [0.5, 1.0],
            f_bounds: [0.0, 5.0],
            u_bounds: [-1.0, 1.0],
        }
    }
}

impl TranscriptionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_knots < 4 {
            return Err(Error::Infeasible(format!(
                "need at least 4 knot points, got {}",
                self.n_knots
            )));
        }
        let intervals = [
            ("t_bounds", self.t_bounds, 0.0),
            ("r_bounds", self.r_bounds, 0.0),
            ("u_bounds", self.u_bounds, f64::NEG_INFINITY),
        ];
        for (name, [lo, hi], min_lo) in intervals {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() || !(lo > min_lo) {
                return Err(Error::Infeasible(format!("{name} [{lo}, {hi}] is not a valid range")));
            }
        }
        // The multiplied-through center-of-pressure constraint relies on the
        // leg force being nonnegative.
        let [flo, fhi] = self.f_bounds;
        if !(flo >= 0.0) || !(fhi > flo) || !fhi.is_finite() {
            return Err(Error::Infeasible(format!(
                "f_bounds [{flo}, {fhi}] must satisfy 0 <= lo < hi"
            )));
        }
        if !(self.u_bounds[0] < 0.0 && self.u_bounds[1] > 0.0) {
            return Err(Error::Infeasible("u_bounds must contain zero".into()));
        }
        Ok(())
    }
}

/// A discretized stance trajectory on a uniform knot grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Stance duration.
    pub duration: f64,
    pub knot_states: Vec<StanceState>,
    pub knot_controls: Vec<ControlInput>,
}

impl Trajectory {
    pub fn n_knots(&self) -> usize {
        self.knot_states.len()
    }

    /// Knot times, uniformly spaced over [0, duration].
    pub fn times(&self) -> Vec<f64> {
        let n = self.n_knots();
        let h = self.duration / (n as f64 - 1.0);
        (0..n).map(|i| i as f64 * h).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.knot_states.len() != self.knot_controls.len() {
            return Err(Error::MalformedTrajectory(format!(
                "{} states vs {} controls",
                self.knot_states.len(),
                self.knot_controls.len()
            )));
        }
        if self.knot_states.len() < 2 {
            return Err(Error::MalformedTrajectory("need at least 2 knots".into()));
        }
        if !self.duration.is_finite() || self.duration < 0.0 {
            return Err(Error::MalformedTrajectory(format!(
                "knot times must be monotone: duration = {}",
                self.duration
            )));
        }
        Ok(())
    }

    pub fn first(&self) -> &StanceState {
        &self.knot_states[0]
    }

    pub fn last(&self) -> &StanceState {
        self.knot_states.last().expect("nonempty trajectory")
    }
}

/// Index map of the decision vector: states by knot, then controls by knot,
/// then the stance duration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub n_knots: usize,
    /// Controls per knot: 2 with ankle torque, 1 without.
    pub control_dim: usize,
}

pub const STATE_DIM: usize = 6;

impl Layout {
    pub fn new(n_knots: usize, ankle_enabled: bool) -> Self {
        Layout { n_knots, control_dim: if ankle_enabled { 2 } else { 1 } }
    }

    pub fn num_vars(&self) -> usize {
        self.n_knots * (STATE_DIM + self.control_dim) + 1
    }

    pub fn state_index(&self, knot: usize, component: usize) -> usize {
        debug_assert!(knot < self.n_knots && component < STATE_DIM);
        STATE_DIM * knot + component
    }

    pub fn control_index(&self, knot: usize, component: usize) -> usize {
        debug_assert!(knot < self.n_knots && component < self.control_dim);
        STATE_DIM * self.n_knots + self.control_dim * knot + component
    }

    pub fn duration_index(&self) -> usize {
        self.n_knots * (STATE_DIM + self.control_dim)
    }

    pub fn state_at(&self, x: &[f64], knot: usize) -> [f64; 6] {
        let base = self.state_index(knot, 0);
        x[base..base + STATE_DIM].try_into().expect("state slice")
    }

    pub fn control_at(&self, x: &[f64], knot: usize) -> [f64; 2] {
        let base = self.control_index(knot, 0);
        if self.control_dim == 2 {
            [x[base], x[base + 1]]
        } else {
            [x[base], 0.0]
        }
    }

    pub fn decode(&self, x: &[f64]) -> Trajectory {
        assert_eq!(x.len(), self.num_vars());
        let states = (0..self.n_knots)
            .map(|i| StanceState::from_array(&self.state_at(x, i)))
            .collect();
        let controls = (0..self.n_knots)
            .map(|i| {
                let u = self.control_at(x, i);
                ControlInput { u_r: u[0], tau: u[1] }
            })
            .collect();
        Trajectory { duration: x[self.duration_index()], knot_states: states, knot_controls: controls }
    }

    /// Pack a trajectory into a decision vector. Ankle torques are dropped
    /// when the layout has no torque variables.
    pub fn encode(&self, traj: &Trajectory) -> Result<Vec<f64>> {
        if traj.n_knots() != self.n_knots {
            return Err(Error::DimensionMismatch { expected: self.n_knots, got: traj.n_knots() });
        }
        let mut x = vec![0.0; self.num_vars()];
        for (i, s) in traj.knot_states.iter().enumerate() {
            x[self.state_index(i, 0)..self.state_index(i, 0) + STATE_DIM]
                .copy_from_slice(&s.to_array());
        }
        for (i, u) in traj.knot_controls.iter().enumerate() {
            x[self.control_index(i, 0)] = u.u_r;
            if self.control_dim == 2 {
                x[self.control_index(i, 1)] = u.tau;
            }
        }
        x[self.duration_index()] = traj.duration;
        Ok(x)
    }
}

/// Trapezoidal defect residuals with a caller-supplied derivative function.
/// Shared by the production dynamics and by synthetic test dynamics.
pub(crate) fn defects_with<F>(traj: &Trajectory, mut deriv: F) -> Vec<f64>
where
    F: FnMut(&[f64; 6], &[f64; 2]) -> [f64; 6],
{
    let n = traj.n_knots();
    let h = traj.duration / (n as f64 - 1.0);
    let mut f: Vec<[f64; 6]> = Vec::with_capacity(n);
    for (s, u) in traj.knot_states.iter().zip(&traj.knot_controls) {
        f.push(deriv(&s.to_array(), &u.to_array()));
    }
    let mut out = Vec::with_capacity(6 * (n - 1));
    for i in 0..n - 1 {
        let si = traj.knot_states[i].to_array();
        let sn = traj.knot_states[i + 1].to_array();
        for j in 0..6 {
            out.push(sn[j] - si[j] - 0.5 * h * (f[i][j] + f[i + 1][j]));
        }
    }
    out
}

/// Trapezoidal dynamics defects between consecutive knots:
/// s[i+1] - s[i] - h/2 (f(s[i], u[i]) + f(s[i+1], u[i+1])).
pub fn defect_constraints(traj: &Trajectory, params: &ModelParams) -> Vec<f64> {
    defects_with(traj, |s, u| stance_deriv_kernel(s, u, params))
}

/// Residuals linking stance endpoints to the apex conditions through
/// ballistic arcs, in energy form:
///
/// [xdot(0) - v, y(0) + ydot(0)^2/(2g) - h,
///  xdot(T) - v, y(T) + ydot(T)^2/(2g) - h]
///
/// The squared form admits zero-duration flight; the sign conditions
/// ydot(0) <= 0 and ydot(T) >= 0 are variable bounds in the NLP.
pub fn flight_linking_constraints(
    task: &GaitTask,
    first_state: &StanceState,
    last_state: &StanceState,
    params: &ModelParams,
) -> Result<Vec<f64>> {
    if first_state.y > task.apex_height {
        return Err(Error::Infeasible(format!(
            "touchdown height {} above apex height {}",
            first_state.y, task.apex_height
        )));
    }
    let g = params.g;
    Ok(vec![
        first_state.xdot - task.apex_velocity,
        first_state.y + first_state.ydot * first_state.ydot / (2.0 * g) - task.apex_height,
        last_state.xdot - task.apex_velocity,
        last_state.y + last_state.ydot * last_state.ydot / (2.0 * g) - task.apex_height,
    ])
}

/// Periodicity residuals: equal apex height and horizontal velocity at both
/// ends of the cycle, plus set-point continuity.
///
/// In the assembled NLP the apex matching is folded into the flight-linking
/// rows (both ends are pinned to the task apex), so only the set-point rows
/// are added there; this full residual is used by verification.
pub fn periodicity_constraints(
    _task: &GaitTask,
    first_state: &StanceState,
    last_state: &StanceState,
    params: &ModelParams,
) -> Vec<f64> {
    let g = params.g;
    let apex = |s: &StanceState| s.y + s.ydot * s.ydot / (2.0 * g);
    vec![
        apex(last_state) - apex(first_state),
        last_state.xdot - first_state.xdot,
        last_state.r0 - first_state.r0,
        last_state.r0dot - first_state.r0dot,
    ]
}

/// Center-of-pressure path residuals in multiplied-through form, two per
/// knot, both required nonnegative:
///
/// [lf/2 * F_leg * y/r - tau, lf/2 * F_leg * y/r + tau]
///
/// Equivalent to |x_cop| <= lf/2 wherever the quotient form is defined, and
/// additionally forces tau = 0 at force-free knots.
pub fn cop_path_constraints(traj: &Trajectory, params: &ModelParams) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * traj.n_knots());
    for (s, u) in traj.knot_states.iter().zip(&traj.knot_controls) {
        let sa = s.to_array();
        let r = f64::hypot(s.x, s.y);
        let f_leg = crate::model::leg_force_kernel(&sa, params);
        let margin = 0.5 * params.lf * f_leg * (s.y / r);
        out.push(margin - u.tau);
        out.push(margin + u.tau);
    }
    out
}

/// Distance traveled over one full cycle: inbound flight, stance, outbound
/// flight. Flight times follow from the vertical velocities at the stance
/// boundaries: t_fall = -ydot(0)/g, t_rise = ydot(T)/g.
pub fn stride_distance(task: &GaitTask, traj: &Trajectory, params: &ModelParams) -> f64 {
    stride_distance_parts(
        task,
        traj.first().x,
        traj.first().ydot,
        traj.last().x,
        traj.last().xdot,
        traj.last().ydot,
        params,
    )
}

#[inline]
pub(crate) fn stride_distance_parts(
    task: &GaitTask,
    x0: f64,
    ydot0: f64,
    x_end: f64,
    xdot_end: f64,
    ydot_end: f64,
    params: &ModelParams,
) -> f64 {
    let t_fall = -ydot0 / params.g;
    let t_rise = ydot_end / params.g;
    task.apex_velocity * t_fall + (x_end - x0) + xdot_end * t_rise
}

/// A feasible-leaning cold-start seed: symmetric stance arc under the apex,
/// body height dipping along a shallow parabola, set point at nominal leg
/// length, controls zero.
pub fn initial_guess(
    task: &GaitTask,
    params: &ModelParams,
    config: &TranscriptionConfig,
) -> Vec<f64> {
    let layout = Layout::new(config.n_knots, task.ankle_enabled);
    let n = config.n_knots;
    let mut x = vec![0.0; layout.num_vars()];

    let [tlo, thi] = config.t_bounds;
    let duration = (0.55f64).clamp(tlo + 0.05 * (thi - tlo), thi - 0.05 * (thi - tlo));
    // Touchdown angle heuristic: stance span matched to the apex speed.
    let x0 = -(task.apex_velocity * duration / 2.0).clamp(0.05, 0.45);
    let y0 = (0.97 * task.apex_height)
        .min(0.95)
        .min((params.l0 * params.l0 - x0 * x0).max(0.25).sqrt() - 0.01)
        .max(0.15);
    let dip = 0.05 * y0;
    let r0_guess = config.r_bounds[1].min(params.l0);

    for i in 0..n {
        let t = i as f64 / (n as f64 - 1.0);
        let base = layout.state_index(i, 0);
        x[base] = x0 * (1.0 - 2.0 * t);
        x[base + 1] = y0 - 4.0 * dip * t * (1.0 - t);
        x[base + 2] = -2.0 * x0 / duration;
        x[base + 3] = -4.0 * dip * (1.0 - 2.0 * t) / duration;
        x[base + 4] = r0_guess;
        x[base + 5] = 0.0;
        // Controls stay zero.
    }
    x[layout.duration_index()] = duration;
    x
}

/// Assemble the nonlinear program for one gait task.
pub fn build_nlp(
    task: &GaitTask,
    params: &ModelParams,
    cost: &CostParams,
    config: &TranscriptionConfig,
) -> Result<Nlp> {
    Nlp::build(task, params, cost, config)
}

use crate::objective::CostParams;
