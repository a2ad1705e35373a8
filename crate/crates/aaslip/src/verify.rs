//! Independent verification oracle: re-integrate the solved controls with a
//! fixed-step fourth-order Runge-Kutta scheme and re-check the limit cycle.
//!
//! The oracle shares nothing with the transcription's defect evaluation
//! beyond the model's dynamics function, so a transcription bug shows up as
//! a re-integration mismatch rather than being reproduced.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{stance_deriv_kernel, ModelParams, StanceState};
use crate::transcription::{
    cop_path_constraints, flight_linking_constraints, GaitTask, Trajectory,
};

/// Leg-length guard band for re-integration; leaving it aborts with
/// diagnostics.
const R_GUARD: [f64; 2] = [0.25, 1.5];

/// Densely sampled stance produced by re-integration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenseTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<StanceState>,
}

impl DenseTrajectory {
    pub fn terminal(&self) -> &StanceState {
        self.states.last().expect("nonempty integration output")
    }
}

/// Integrate the stance dynamics from the trajectory's initial state with
/// controls interpolated linearly between knots (the same assumption the
/// trapezoidal transcription makes).
pub fn integrate_stance(
    traj: &Trajectory,
    params: &ModelParams,
    steps_per_interval: usize,
) -> Result<DenseTrajectory> {
    traj.validate()?;
    if steps_per_interval == 0 {
        return Err(Error::Domain("steps_per_interval must be positive".into()));
    }
    let n = traj.n_knots();
    let mut times = vec![0.0];
    let mut states = vec![traj.knot_states[0]];
    if traj.duration == 0.0 {
        return Ok(DenseTrajectory { times, states });
    }

    let h_knot = traj.duration / (n as f64 - 1.0);
    let dt = h_knot / steps_per_interval as f64;
    let mut s = traj.knot_states[0].to_array();

    for interval in 0..n - 1 {
        let u0 = traj.knot_controls[interval].to_array();
        let u1 = traj.knot_controls[interval + 1].to_array();
        let control_at = |frac: f64| -> [f64; 2] {
            [u0[0] + frac * (u1[0] - u0[0]), u0[1] + frac * (u1[1] - u0[1])]
        };
        for step in 0..steps_per_interval {
            let f0 = step as f64 / steps_per_interval as f64;
            let fh = (step as f64 + 0.5) / steps_per_interval as f64;
            let f1 = (step as f64 + 1.0) / steps_per_interval as f64;
            let (ua, um, ub) = (control_at(f0), control_at(fh), control_at(f1));

            let k1 = stance_deriv_kernel(&s, &ua, params);
            let mut s2 = s;
            for j in 0..6 {
                s2[j] += 0.5 * dt * k1[j];
            }
            let k2 = stance_deriv_kernel(&s2, &um, params);
            let mut s3 = s;
            for j in 0..6 {
                s3[j] += 0.5 * dt * k2[j];
            }
            let k3 = stance_deriv_kernel(&s3, &um, params);
            let mut s4 = s;
            for j in 0..6 {
                s4[j] += dt * k3[j];
            }
            let k4 = stance_deriv_kernel(&s4, &ub, params);
            for j in 0..6 {
                s[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            }

            let t = (interval * steps_per_interval + step + 1) as f64 * dt;
            let r = f64::hypot(s[0], s[1]);
            if !(s[1] > 0.0) {
                return Err(Error::IntegrationAborted {
                    time: t,
                    reason: format!("body height fell to {}", s[1]),
                });
            }
            if !(R_GUARD[0]..=R_GUARD[1]).contains(&r) || !r.is_finite() {
                return Err(Error::IntegrationAborted {
                    time: t,
                    reason: format!("leg length {r} left the guard band [{}, {}]", R_GUARD[0], R_GUARD[1]),
                });
            }
            times.push(t);
            states.push(StanceState::from_array(&s));
        }
    }
    Ok(DenseTrajectory { times, states })
}

/// Limit-cycle verification summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LimitCycleReport {
    pub steps_per_interval: usize,
    /// Euclidean distance between the re-integrated terminal state and the
    /// final collocation knot, over all six state components.
    pub terminal_deviation: f64,
    /// Apex residuals evaluated at the knot level (solver feasibility).
    pub apex_height_error_knot: f64,
    pub apex_velocity_error_knot: f64,
    /// Apex residuals after simulating the outbound flight from the
    /// re-integrated terminal state.
    pub apex_height_error_reintegrated: f64,
    pub apex_velocity_error_reintegrated: f64,
    /// Minimum of the multiplied-through center-of-pressure margins.
    pub cop_margin_min: f64,
    /// Distance of the leg force to its bounds, minimized over knots.
    pub force_margin_min: f64,
    /// Distance of the leg length to its bounds, minimized over knots.
    pub length_margin_min: f64,
}

/// Re-integrate a solved trajectory and summarize how well it closes the
/// limit cycle and respects the path constraints.
pub fn limit_cycle_report(
    task: &GaitTask,
    traj: &Trajectory,
    params: &ModelParams,
    config: &crate::transcription::TranscriptionConfig,
    steps_per_interval: usize,
) -> Result<LimitCycleReport> {
    let dense = integrate_stance(traj, params, steps_per_interval)?;
    let knot_end = traj.last().to_array();
    let rk_end = dense.terminal().to_array();
    let terminal_deviation = knot_end
        .iter()
        .zip(&rk_end)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();

    let fl = flight_linking_constraints(task, traj.first(), traj.last(), params)?;
    let apex_height_error_knot = fl[1].abs().max(fl[3].abs());
    let apex_velocity_error_knot = fl[0].abs().max(fl[2].abs());

    // Outbound flight from the re-integrated terminal state: the apex sits
    // at y + ydot^2/(2g) with unchanged horizontal velocity.
    let end = dense.terminal();
    let apex_height_error_reintegrated =
        (end.y + end.ydot * end.ydot / (2.0 * params.g) - task.apex_height).abs();
    let apex_velocity_error_reintegrated = (end.xdot - task.apex_velocity).abs();

    let cop = cop_path_constraints(traj, params);
    let cop_margin_min = cop.iter().fold(f64::INFINITY, |a, &v| a.min(v));

    let mut force_margin_min = f64::INFINITY;
    let mut length_margin_min = f64::INFINITY;
    for s in &traj.knot_states {
        let f = crate::model::leg_force(s, params)?;
        force_margin_min = force_margin_min.min(f - config.f_bounds[0]).min(config.f_bounds[1] - f);
        let r = f64::hypot(s.x, s.y);
        length_margin_min =
            length_margin_min.min(r - config.r_bounds[0]).min(config.r_bounds[1] - r);
    }

    Ok(LimitCycleReport {
        steps_per_interval,
        terminal_deviation,
        apex_height_error_knot,
        apex_velocity_error_knot,
        apex_height_error_reintegrated,
        apex_velocity_error_reintegrated,
        cop_margin_min,
        force_margin_min,
        length_margin_min,
    })
}
