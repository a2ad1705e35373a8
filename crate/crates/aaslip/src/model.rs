//! Stance-phase dynamics of the ankle-actuated spring-loaded inverted
//! pendulum and its ankle-free reduction.
//!
//! The body is a point mass on a massless leg pinned to the ground at the
//! coordinate origin. The leg carries a spring of stiffness `k` whose set
//! point `r0` is driven by a series actuator, a damper `c`, and an ankle
//! torque that shifts the center of pressure within a flat foot of length
//! `lf`, producing a force on the body perpendicular to the leg. Everything
//! is nondimensional with m = g = l0 = 1 at the nominal parameter set.

use serde::{Deserialize, Serialize};

use crate::ad::Scalar;
use crate::error::{Error, Result};

/// Physical constants of the leg-ankle plant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelParams {
    /// Body mass.
    pub m: f64,
    /// Gravitational acceleration.
    pub g: f64,
    /// Leg spring stiffness.
    pub k: f64,
    /// Leg damping.
    pub c: f64,
    /// Nominal leg length.
    pub l0: f64,
    /// Foot length; the center of pressure may travel +/- lf/2 from the ankle.
    pub lf: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams { m: 1.0, g: 1.0, k: 20.0, c: 0.4, l0: 1.0, lf: 0.15 }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("m", self.m),
            ("g", self.g),
            ("k", self.k),
            ("c", self.c),
            ("l0", self.l0),
            ("lf", self.lf),
        ];
        for (name, v) in fields {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Domain(format!(
                    "model parameter {name} must be strictly positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Continuous stance state: body position and velocity relative to the foot
/// pin, plus the leg spring set point and its rate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StanceState {
    /// Horizontal body position relative to the foot pin.
    pub x: f64,
    /// Vertical body position; positive during stance.
    pub y: f64,
    pub xdot: f64,
    pub ydot: f64,
    /// Leg spring set point.
    pub r0: f64,
    /// Set-point rate.
    pub r0dot: f64,
}

impl StanceState {
    pub fn to_array(&self) -> [f64; 6] {
        [self.x, self.y, self.xdot, self.ydot, self.r0, self.r0dot]
    }

    pub fn from_array(a: &[f64; 6]) -> Self {
        StanceState { x: a[0], y: a[1], xdot: a[2], ydot: a[3], r0: a[4], r0dot: a[5] }
    }

    fn check_valid(&self) -> Result<()> {
        if !(self.y > 0.0) {
            return Err(Error::InvalidState(format!("y = {} not positive", self.y)));
        }
        let r2 = self.x * self.x + self.y * self.y;
        if !(r2 > 0.0) || !r2.is_finite() {
            return Err(Error::InvalidState("degenerate leg length r = 0".into()));
        }
        Ok(())
    }
}

/// Actuator inputs: leg set-point acceleration and ankle torque.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    /// Set-point acceleration, bounded to [-1, 1] in the transcription.
    pub u_r: f64,
    /// Ankle torque.
    pub tau: f64,
}

impl ControlInput {
    pub fn to_array(&self) -> [f64; 2] {
        [self.u_r, self.tau]
    }
}

// --- generic kernels used by plain evaluation, Jacobians and Hessians ---

/// Leg length and its direction cosines: (r, sin(theta), cos(theta)).
#[inline]
pub(crate) fn leg_geometry<S: Scalar>(x: S, y: S) -> (S, S, S) {
    let r = (x * x + y * y).sqrt();
    (r, y / r, x / r)
}

/// Radial rate: rdot = (x*xdot + y*ydot) / r.
#[inline]
pub(crate) fn radial_rate<S: Scalar>(x: S, y: S, xdot: S, ydot: S, r: S) -> S {
    (x * xdot + y * ydot) / r
}

/// Axial spring-damper force k*(r0 - r) + c*(r0dot - rdot).
#[inline]
pub(crate) fn leg_force_kernel<S: Scalar>(s: &[S; 6], p: &ModelParams) -> S {
    let (r, _, _) = leg_geometry(s[0], s[1]);
    let rdot = radial_rate(s[0], s[1], s[2], s[3], r);
    S::c(p.k) * (s[4] - r) + S::c(p.c) * (s[5] - rdot)
}

/// Full six-dimensional state derivative of the stance phase.
///
/// State order is [x, y, xdot, ydot, r0, r0dot]; controls are [u_r, tau].
#[inline]
pub(crate) fn stance_deriv_kernel<S: Scalar>(s: &[S; 6], u: &[S; 2], p: &ModelParams) -> [S; 6] {
    let (r, _, _) = leg_geometry(s[0], s[1]);
    let rdot = radial_rate(s[0], s[1], s[2], s[3], r);
    let f_leg = S::c(p.k) * (s[4] - r) + S::c(p.c) * (s[5] - rdot);
    let f_ankle = -u[1] / r;
    let mr = S::c(p.m) * r;
    let ax = (s[0] * f_leg - s[1] * f_ankle) / mr;
    let ay = (s[1] * f_leg + s[0] * f_ankle) / mr - S::c(p.g);
    [s[2], s[3], ax, ay, s[5], u[0]]
}

// --- public operations ---

/// Leg length and leg angle from the ground plane, with sin(theta) = y/r.
pub fn leg_length_and_angle(state: &StanceState) -> Result<(f64, f64)> {
    state.check_valid()?;
    let (r, _, _) = leg_geometry(state.x, state.y);
    Ok((r, state.y.atan2(state.x)))
}

/// Axial leg force k*(r0 - r) + c*(r0dot - rdot).
pub fn leg_force(state: &StanceState, params: &ModelParams) -> Result<f64> {
    state.check_valid()?;
    Ok(leg_force_kernel(&state.to_array(), params))
}

/// Center of pressure x_cop = -tau / (F_leg * sin(theta)).
///
/// Undefined when the denominator vanishes; the transcription uses the
/// multiplied-through constraint form instead of this quotient.
pub fn cop_position(tau: f64, f_leg: f64, theta: f64) -> Result<f64> {
    let denom = f_leg * theta.sin();
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::UndefinedCop);
    }
    Ok(-tau / denom)
}

/// Force on the body perpendicular to the leg, F_ankle = -tau / r.
pub fn ankle_force(tau: f64, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::InvalidState(format!("leg length r = {r} not positive")));
    }
    Ok(-tau / r)
}

/// Body accelerations (xddot, yddot) under leg and ankle forces.
pub fn stance_accel(
    state: &StanceState,
    control: &ControlInput,
    params: &ModelParams,
) -> Result<(f64, f64)> {
    let d = stance_derivative(state, control, params)?;
    Ok((d[2], d[3]))
}

/// Full derivative of the stance state: (xdot, ydot, xddot, yddot, r0dot, u_r).
pub fn stance_derivative(
    state: &StanceState,
    control: &ControlInput,
    params: &ModelParams,
) -> Result<[f64; 6]> {
    state.check_valid()?;
    Ok(stance_deriv_kernel(&state.to_array(), &control.to_array(), params))
}

/// Total mechanical energy: kinetic + gravitational + spring potential.
pub fn mechanical_energy(state: &StanceState, params: &ModelParams) -> f64 {
    let r = (state.x * state.x + state.y * state.y).sqrt();
    0.5 * params.m * (state.xdot * state.xdot + state.ydot * state.ydot)
        + params.m * params.g * state.y
        + 0.5 * params.k * (state.r0 - r) * (state.r0 - r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ad::Dual;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn state(x: f64, y: f64, xdot: f64, ydot: f64, r0: f64, r0dot: f64) -> StanceState {
        StanceState { x, y, xdot, ydot, r0, r0dot }
    }

    #[test]
    fn nominal_params_are_valid() {
        let p = ModelParams::default();
        assert_eq!((p.m, p.g, p.k, p.c, p.l0, p.lf), (1.0, 1.0, 20.0, 0.4, 1.0, 0.15));
        p.validate().unwrap();
    }

    #[test]
    fn rejects_nonpositive_params() {
        let p = ModelParams { k: 0.0, ..Default::default() };
        assert!(p.validate().is_err());
        let p = ModelParams { lf: -0.1, ..Default::default() };
        assert!(p.validate().is_err());
    }

    #[test]
    fn vertical_leg_geometry() {
        let (r, theta) = leg_length_and_angle(&state(0.0, 1.0, 0.0, 0.0, 1.0, 0.0)).unwrap();
        assert_eq!(r, 1.0);
        assert_relative_eq!(theta, std::f64::consts::FRAC_PI_2);
    }

    #[test]
    fn pythagorean_leg_geometry() {
        let (r, theta) = leg_length_and_angle(&state(-0.6, 0.8, 0.0, 0.0, 1.0, 0.0)).unwrap();
        assert_relative_eq!(r, 1.0, epsilon = 1e-15);
        assert_relative_eq!(theta.sin(), 0.8, epsilon = 1e-15);
    }

    #[test]
    fn degenerate_pin_is_invalid() {
        assert!(leg_length_and_angle(&state(0.0, 0.0, 0.0, 0.0, 1.0, 0.0)).is_err());
        assert!(leg_length_and_angle(&state(0.3, -0.1, 0.0, 0.0, 1.0, 0.0)).is_err());
    }

    #[test]
    fn uncompressed_static_spring_has_no_force() {
        let p = ModelParams::default();
        let f = leg_force(&state(0.0, 1.0, 0.0, 0.0, 1.0, 0.0), &p).unwrap();
        assert_eq!(f, 0.0);
    }

    #[test]
    fn spring_compression_force() {
        // r = 0.9, r0 = 1, rates zero, k = 20 -> F = 2.0
        let p = ModelParams::default();
        let f = leg_force(&state(0.0, 0.9, 0.0, 0.0, 1.0, 0.0), &p).unwrap();
        assert_relative_eq!(f, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn damper_setpoint_rate_force() {
        // r = r0 = 1, r0dot = 0.1, rdot = 0, c = 0.4 -> F = 0.04
        let p = ModelParams::default();
        let f = leg_force(&state(0.0, 1.0, 0.0, 0.0, 1.0, 0.1), &p).unwrap();
        assert_relative_eq!(f, 0.04, epsilon = 1e-15);
    }

    #[test]
    fn cop_zero_torque_stays_at_ankle() {
        assert_eq!(cop_position(0.0, 2.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn cop_within_foot_bound() {
        let x = cop_position(-0.1, 2.0, std::f64::consts::FRAC_PI_2).unwrap();
        assert_relative_eq!(x, 0.05, epsilon = 1e-15);
        assert!(x.abs() < 0.15 / 2.0);
    }

    #[test]
    fn cop_undefined_at_zero_force() {
        assert!(matches!(cop_position(0.1, 0.0, 1.0), Err(Error::UndefinedCop)));
    }

    #[test]
    fn ankle_force_examples() {
        assert_eq!(ankle_force(0.0, 1.0).unwrap(), 0.0);
        assert_relative_eq!(ankle_force(-0.1, 1.0).unwrap(), 0.1, epsilon = 1e-15);
        assert_relative_eq!(ankle_force(0.05, 0.5).unwrap(), -0.1, epsilon = 1e-15);
        assert!(ankle_force(0.1, 0.0).is_err());
    }

    #[test]
    fn static_equilibrium_balances() {
        // Vertical leg, F_leg = m*g via set-point offset: k*(r0 - 1) = 1.
        let p = ModelParams::default();
        let s = state(0.0, 1.0, 0.0, 0.0, 1.0 + 1.0 / p.k, 0.0);
        let (ax, ay) = stance_accel(&s, &ControlInput::default(), &p).unwrap();
        assert_relative_eq!(ax, 0.0, epsilon = 1e-14);
        assert_relative_eq!(ay, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn ankle_torque_accelerates_body() {
        // x = 0, y = 1, F_leg = 1 via set point, tau = -0.1 -> F_ankle = 0.1,
        // xddot = x*F/(mr) - y*F_a/(mr) = -0.1, yddot = 0.
        let p = ModelParams::default();
        let s = state(0.0, 1.0, 0.0, 0.0, 1.0 + 1.0 / p.k, 0.0);
        let u = ControlInput { u_r: 0.0, tau: -0.1 };
        let (ax, ay) = stance_accel(&s, &u, &p).unwrap();
        assert_relative_eq!(ax, -0.1, epsilon = 1e-14);
        assert_relative_eq!(ay, 0.0, epsilon = 1e-14);
    }

    // Independently coded ankle-free right-hand side used as an oracle for
    // the collapse property below. Same elementary formulas (plain sqrt,
    // not hypot) so any mismatch is an ankle-term leak, not rounding.
    fn aslip_rhs(s: &StanceState, u_r: f64, p: &ModelParams) -> [f64; 6] {
        let r = (s.x * s.x + s.y * s.y).sqrt();
        let rdot = (s.x * s.xdot + s.y * s.ydot) / r;
        let f = p.k * (s.r0 - r) + p.c * (s.r0dot - rdot);
        [
            s.xdot,
            s.ydot,
            s.x * f / (p.m * r),
            s.y * f / (p.m * r) - p.g,
            s.r0dot,
            u_r,
        ]
    }

    proptest! {
        #[test]
        fn zero_torque_collapses_to_aslip(
            x in -0.9f64..0.9,
            y in 0.2f64..1.2,
            xdot in -1.5f64..1.5,
            ydot in -1.5f64..1.5,
            r0 in 0.5f64..1.0,
            r0dot in -1.0f64..1.0,
            u_r in -1.0f64..1.0,
        ) {
            let p = ModelParams::default();
            let s = state(x, y, xdot, ydot, r0, r0dot);
            let d = stance_derivative(&s, &ControlInput { u_r, tau: 0.0 }, &p).unwrap();
            let o = aslip_rhs(&s, u_r, &p);
            // Bit-identical: the ankle terms vanish exactly at tau = 0.
            // Adding 0.0 normalizes the sign of zero, which differs between
            // the two groupings at x = 0 without being an ankle-term leak.
            for i in 0..6 {
                prop_assert_eq!((d[i] + 0.0).to_bits(), (o[i] + 0.0).to_bits(), "component {}", i);
            }
        }

        #[test]
        fn cop_identity_holds_where_defined(
            tau in -0.3f64..0.3,
            f_leg in 0.01f64..5.0,
            theta in 0.3f64..2.8,
        ) {
            let x = cop_position(tau, f_leg, theta).unwrap();
            prop_assert!((x * f_leg * theta.sin() + tau).abs() < 1e-12);
        }

        #[test]
        fn dynamics_jacobian_matches_finite_differences(
            x in -0.8f64..0.8,
            y in 0.3f64..1.1,
            xdot in -1.0f64..1.0,
            ydot in -1.0f64..1.0,
            r0 in 0.55f64..0.95,
            r0dot in -0.5f64..0.5,
            u_r in -0.9f64..0.9,
            tau in -0.2f64..0.2,
        ) {
            let p = ModelParams::default();
            let z = [x, y, xdot, ydot, r0, r0dot, u_r, tau];
            // Analytic Jacobian via duals.
            let mut sd = [Dual::<8>::c(0.0); 6];
            let mut ud = [Dual::<8>::c(0.0); 2];
            for i in 0..6 { sd[i] = Dual::var(z[i], i); }
            for i in 0..2 { ud[i] = Dual::var(z[6 + i], 6 + i); }
            let f = stance_deriv_kernel(&sd, &ud, &p);
            let h = 1e-6;
            for col in 0..8 {
                let mut zp = z; zp[col] += h;
                let mut zm = z; zm[col] -= h;
                let eval = |q: &[f64; 8]| {
                    let s: [f64; 6] = q[..6].try_into().unwrap();
                    let u: [f64; 2] = q[6..].try_into().unwrap();
                    stance_deriv_kernel(&s, &u, &p)
                };
                let fp = eval(&zp);
                let fm = eval(&zm);
                for row in 0..6 {
                    let fd = (fp[row] - fm[row]) / (2.0 * h);
                    let a = f[row].d[col];
                    let err = (a - fd).abs() / a.abs().max(fd.abs()).max(1.0);
                    prop_assert!(err < 1e-5, "row {} col {}: {} vs {}", row, col, a, fd);
                }
            }
        }
    }
}
