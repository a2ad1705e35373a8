//! Energy objective: smoothed positive actuator work plus thermal losses,
//! trapezoidal energy over a trajectory, cost of transport and ankle utility.

use serde::{Deserialize, Serialize};

use crate::ad::Scalar;
use crate::error::{Error, Result};
use crate::model::{leg_force_kernel, ControlInput, ModelParams, StanceState};
use crate::transcription::Trajectory;

/// Weights of the cost integrand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostParams {
    /// Convex weight between mechanical power (0) and thermal losses (1).
    pub alpha: f64,
    /// Leg thermal-loss coefficient: power lost per squared leg force.
    pub r_leg: f64,
    /// Ankle thermal-loss coefficient: power lost per squared ankle torque.
    pub r_ankle: f64,
    /// Smoothing constant of the positive-part function.
    pub eps: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams { alpha: 0.5, r_leg: 0.028, r_ankle: 0.50, eps: 1e-6 }
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) || !self.alpha.is_finite() {
            return Err(Error::Domain(format!("alpha must be in [0, 1], got {}", self.alpha)));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Domain(format!("eps must be positive, got {}", self.eps)));
        }
        if self.r_leg < 0.0 || self.r_ankle < 0.0 {
            return Err(Error::Domain("thermal-loss coefficients must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Smooth positive part (x + sqrt(x^2 + eps^2)) / 2, differentiable everywhere.
pub fn smooth_max0(x: f64, eps: f64) -> f64 {
    smooth_max0_kernel(x, f64::c(eps))
}

#[inline]
pub(crate) fn smooth_max0_kernel<S: Scalar>(x: S, eps: S) -> S {
    (x + (x * x + eps * eps).sqrt()) / S::c(2.0)
}

/// Mechanical power of the leg actuator, F_leg * r0dot.
pub fn leg_power(state: &StanceState, params: &ModelParams) -> f64 {
    leg_force_kernel(&state.to_array(), params) * state.r0dot
}

/// Mechanical power of the ankle actuator, tau * (xdot*y - x*ydot) / r^2.
pub fn ankle_power(state: &StanceState, tau: f64) -> f64 {
    let r2 = state.x * state.x + state.y * state.y;
    tau * (state.xdot * state.y - state.x * state.ydot) / r2
}

/// Instantaneous energy-required integrand: each actuator's convex blend of
/// mechanical power and thermal loss, clipped by the smoothed positive part.
pub fn instantaneous_cost(
    state: &StanceState,
    control: &ControlInput,
    params: &ModelParams,
    cost: &CostParams,
) -> f64 {
    instantaneous_cost_kernel(&state.to_array(), &control.to_array(), params, cost)
}

#[inline]
pub(crate) fn instantaneous_cost_kernel<S: Scalar>(
    s: &[S; 6],
    u: &[S; 2],
    params: &ModelParams,
    cost: &CostParams,
) -> S {
    let f_leg = leg_force_kernel(s, params);
    let r2 = s[0] * s[0] + s[1] * s[1];
    let p_leg = f_leg * s[5];
    let p_ankle = u[1] * (s[2] * s[1] - s[0] * s[3]) / r2;
    let one_m_alpha = S::c(1.0 - cost.alpha);
    let alpha = S::c(cost.alpha);
    let leg_term = one_m_alpha * p_leg + alpha * S::c(cost.r_leg) * f_leg * f_leg;
    let ankle_term = one_m_alpha * p_ankle + alpha * S::c(cost.r_ankle) * u[1] * u[1];
    let eps = S::c(cost.eps);
    smooth_max0_kernel(leg_term, eps) + smooth_max0_kernel(ankle_term, eps)
}

/// Trapezoidal quadrature of the instantaneous cost over uniformly spaced
/// knots. This is the exact summation the transcription's objective uses,
/// so solved objectives and post-hoc energies agree bit-for-bit.
pub(crate) fn energy_from_knots(
    states: &[StanceState],
    controls: &[ControlInput],
    duration: f64,
    params: &ModelParams,
    cost: &CostParams,
) -> f64 {
    let n = states.len();
    let h = duration / (n as f64 - 1.0);
    let mut integrand = Vec::with_capacity(n);
    for (s, u) in states.iter().zip(controls) {
        integrand.push(instantaneous_cost_kernel(&s.to_array(), &u.to_array(), params, cost));
    }
    let mut e = 0.0;
    for i in 0..n - 1 {
        e += 0.5 * h * (integrand[i] + integrand[i + 1]);
    }
    e
}

/// Total energy required over one stance, by trapezoidal quadrature on the
/// trajectory's knot grid.
pub fn energy_required(
    trajectory: &Trajectory,
    params: &ModelParams,
    cost: &CostParams,
) -> Result<f64> {
    trajectory.validate()?;
    Ok(energy_from_knots(
        &trajectory.knot_states,
        &trajectory.knot_controls,
        trajectory.duration,
        params,
        cost,
    ))
}

/// Cost of transport E_req / (m * g * d).
pub fn cost_of_transport(e_req: f64, d: f64, params: &ModelParams) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::Domain(format!("distance must be positive, got {d}")));
    }
    Ok(e_req / (params.m * params.g * d))
}

/// Percent decrease in cost of transport when the ankle is available.
pub fn ankle_utility(cot_no_ankle: f64, cot_ankle: f64) -> Result<f64> {
    if !(cot_no_ankle > 0.0) {
        return Err(Error::Domain(format!(
            "baseline cost of transport must be positive, got {cot_no_ankle}"
        )));
    }
    Ok(100.0 * (cot_no_ankle - cot_ankle) / cot_no_ankle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn smooth_max0_at_zero_is_half_eps() {
        assert_relative_eq!(smooth_max0(0.0, 1e-6), 5e-7, epsilon = 1e-20);
    }

    #[test]
    fn smooth_max0_at_one_is_nearly_one() {
        let v = smooth_max0(1.0, 1e-6);
        assert!((v - 1.0).abs() < 1e-12);
        assert!(v > 1.0);
    }

    #[test]
    fn leg_power_examples() {
        let p = ModelParams::default();
        // Stationary set point.
        let s = StanceState { x: 0.0, y: 0.9, r0: 1.0, ..Default::default() };
        assert_eq!(leg_power(&s, &p), 0.0);
        // F = 2 (r = 0.9, r0 = 1, k = 20 with rate term c*0.1 = 0.04 avoided by
        // choosing rdot = r0dot): use rates zero and add r0dot separately.
        let s = StanceState { x: 0.0, y: 0.9, r0: 1.0, r0dot: 0.1, ..Default::default() };
        // F = 20*0.1 + 0.4*0.1 = 2.04; P = 0.204. Exercise the pure F=2 case
        // through an undamped parameter set instead.
        let undamped = ModelParams { c: 0.0, ..p };
        assert_relative_eq!(leg_power(&s, &undamped), 0.2, epsilon = 1e-15);
        let s = StanceState { x: 0.0, y: 0.9, r0: 1.0, r0dot: -0.1, ..Default::default() };
        assert_relative_eq!(leg_power(&s, &undamped), -0.2, epsilon = 1e-15);
    }

    #[test]
    fn ankle_power_examples() {
        let s = StanceState { x: 0.0, y: 1.0, xdot: 1.0, ydot: 0.0, ..Default::default() };
        assert_eq!(ankle_power(&s, 0.0), 0.0);
        assert_relative_eq!(ankle_power(&s, -0.1), -0.1, epsilon = 1e-15);
        assert_relative_eq!(ankle_power(&s, 0.1), 0.1, epsilon = 1e-15);
    }

    #[test]
    fn instantaneous_cost_at_rest_is_eps() {
        // Zero force and torque: both smoothed terms sit at eps/2.
        let p = ModelParams::default();
        let c = CostParams::default();
        let s = StanceState { x: 0.0, y: 1.0, r0: 1.0, ..Default::default() };
        let v = instantaneous_cost(&s, &ControlInput::default(), &p, &c);
        assert_relative_eq!(v, 1e-6, epsilon = 1e-18);
    }

    #[test]
    fn instantaneous_cost_hand_value() {
        // alpha = 0.5, F = 2, r0dot = 0.1, tau = 0:
        // leg term = 0.5*0.2 + 0.5*0.028*4 = 0.156, ankle term ~ eps/2.
        let p = ModelParams { c: 0.0, ..Default::default() };
        let c = CostParams::default();
        let s = StanceState { x: 0.0, y: 0.9, r0: 1.0, r0dot: 0.1, ..Default::default() };
        let v = instantaneous_cost(&s, &ControlInput::default(), &p, &c);
        assert_relative_eq!(v, 0.156 + 5e-7, epsilon = 1e-9);
    }

    #[test]
    fn pure_thermal_cost_ignores_rates() {
        // alpha = 1 removes the mechanical power terms entirely.
        let p = ModelParams { c: 0.0, ..Default::default() };
        let c = CostParams { alpha: 1.0, ..Default::default() };
        let s1 = StanceState { x: 0.0, y: 0.9, r0: 1.0, r0dot: 0.3, xdot: 1.0, ..Default::default() };
        let s2 = StanceState { x: 0.0, y: 0.9, r0: 1.0, r0dot: -0.7, xdot: -2.0, ..Default::default() };
        let u = ControlInput { u_r: 0.0, tau: 0.05 };
        let v1 = instantaneous_cost(&s1, &u, &p, &c);
        let v2 = instantaneous_cost(&s2, &u, &p, &c);
        assert_relative_eq!(v1, v2, epsilon = 1e-15);
    }

    fn flat_trajectory(n: usize, duration: f64) -> Trajectory {
        let s = StanceState { x: 0.0, y: 1.0, r0: 1.0, ..Default::default() };
        Trajectory {
            duration,
            knot_states: vec![s; n],
            knot_controls: vec![ControlInput::default(); n],
        }
    }

    #[test]
    fn energy_of_smoothed_zero() {
        let p = ModelParams::default();
        let c = CostParams::default();
        let e = energy_required(&flat_trajectory(30, 1.0), &p, &c).unwrap();
        assert_relative_eq!(e, 1e-6, epsilon = 1e-18);
    }

    #[test]
    fn trapezoid_is_exact_on_constants() {
        // Constant integrand value over T integrates to p*T.
        let p = ModelParams { c: 0.0, ..Default::default() };
        let c = CostParams::default();
        let mut traj = flat_trajectory(17, 2.5);
        for s in traj.knot_states.iter_mut() {
            s.y = 0.9;
            s.r0dot = 0.1;
        }
        let per_knot = instantaneous_cost(
            &traj.knot_states[0],
            &traj.knot_controls[0],
            &p,
            &c,
        );
        let e = energy_required(&traj, &p, &c).unwrap();
        assert_relative_eq!(e, per_knot * 2.5, epsilon = 1e-12);
    }

    #[test]
    fn malformed_trajectories_rejected() {
        let mut t = flat_trajectory(5, 1.0);
        t.duration = -1.0;
        assert!(energy_required(&t, &ModelParams::default(), &CostParams::default()).is_err());
        let mut t = flat_trajectory(5, 1.0);
        t.knot_controls.pop();
        assert!(energy_required(&t, &ModelParams::default(), &CostParams::default()).is_err());
    }

    #[test]
    fn cost_of_transport_examples() {
        let p = ModelParams::default();
        assert_relative_eq!(cost_of_transport(0.1, 1.0, &p).unwrap(), 0.1);
        assert_relative_eq!(cost_of_transport(0.1, 2.0, &p).unwrap(), 0.05);
        assert!(cost_of_transport(0.1, 0.0, &p).is_err());
    }

    #[test]
    fn ankle_utility_examples() {
        assert_eq!(ankle_utility(0.2, 0.2).unwrap(), 0.0);
        assert_relative_eq!(ankle_utility(0.2, 0.19).unwrap(), 5.0, epsilon = 1e-12);
        assert!(ankle_utility(0.0, 0.1).is_err());
        assert!(ankle_utility(-0.5, 0.1).is_err());
    }

    proptest! {
        #[test]
        fn smooth_max0_dominates_positive_part(x in -10.0f64..10.0) {
            let eps = 1e-6;
            let v = smooth_max0(x, eps);
            prop_assert!(v >= x.max(0.0));
            prop_assert!(v - x.max(0.0) <= eps / 2.0 + 1e-18);
        }

        #[test]
        fn smooth_max0_reflection_identity(x in -5.0f64..5.0) {
            let eps = 1e-6;
            let lhs = smooth_max0(-x, eps);
            let rhs = smooth_max0(x, eps) - x;
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }

        #[test]
        fn cost_monotone_in_alpha_when_thermal_dominates(
            y in 0.5f64..1.1,
            r0 in 0.6f64..1.0,
            tau in -0.2f64..0.2,
            a1 in 0.0f64..1.0,
            da in 0.0f64..0.5,
        ) {
            // With zero rates the mechanical powers vanish, so
            // P <= R * effort^2 holds for both actuators.
            let p = ModelParams::default();
            let s = StanceState { x: 0.0, y, r0, ..Default::default() };
            let u = ControlInput { u_r: 0.0, tau };
            let a2 = (a1 + da).min(1.0);
            let c1 = CostParams { alpha: a1, ..Default::default() };
            let c2 = CostParams { alpha: a2, ..Default::default() };
            let v1 = instantaneous_cost(&s, &u, &p, &c1);
            let v2 = instantaneous_cost(&s, &u, &p, &c2);
            prop_assert!(v2 >= v1 - 1e-15);
        }
    }
}
