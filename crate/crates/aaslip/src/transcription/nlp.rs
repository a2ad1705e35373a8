//! The assembled nonlinear program for one gait task: decision-vector
//! layout, bounds, constraint rows, objective, and exact first and second
//! derivatives produced by forward-mode duals.
//!
//! Row order: trapezoidal dynamics defects, flight linking (4), set-point
//! periodicity (2), per-knot leg force, per-knot leg length, per-knot
//! center-of-pressure pairs at interior knots (ankle problems only).
//!
//! The minimized functional is the cost of transport E/(m g d); the energy
//! numerator is evaluated by the same summation as the post-hoc energy so
//! the two agree bit for bit.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::ad::{Dual, Dual2, Scalar};
use crate::error::{Error, Result};
use crate::model::{leg_force_kernel, stance_deriv_kernel, ModelParams};
use crate::objective::{energy_from_knots, instantaneous_cost_kernel, CostParams};
use crate::transcription::{
    initial_guess, stride_distance_parts, GaitTask, Layout, Trajectory, TranscriptionConfig,
    STATE_DIM,
};

/// Guard-rail box bounds on state components that the physical path
/// constraints do not already pin. Wide enough to never bind at solutions.
const X_BOX: [f64; 2] = [-2.0, 2.0];
const Y_BOX: [f64; 2] = [0.05, 1.5];
const XDOT_BOX: [f64; 2] = [-1.0, 3.0];
const YDOT_BOX: [f64; 2] = [-2.5, 2.5];
const R0DOT_BOX: [f64; 2] = [-3.0, 3.0];
/// Torque box; never active because the center-of-pressure rows cap
/// |tau| <= lf/2 * F_max well inside it.
const TAU_BOX: [f64; 2] = [-0.4, 0.4];

/// Everything a knot contributes to the problem, evaluated generically so
/// the same expression yields values, first and second derivatives.
struct KnotEval<S: Scalar> {
    /// State derivative f(s, u).
    f: [S; 6],
    f_leg: S,
    r: S,
    /// lf/2 * F * y/r - tau >= 0.
    cop_lo: S,
    /// lf/2 * F * y/r + tau >= 0.
    cop_hi: S,
    /// Cost integrand.
    cost: S,
}

fn eval_knot<S: Scalar>(
    s: &[S; 6],
    u: &[S; 2],
    params: &ModelParams,
    cost: &CostParams,
) -> KnotEval<S> {
    let f = stance_deriv_kernel(s, u, params);
    let f_leg = leg_force_kernel(s, params);
    let r = (s[0] * s[0] + s[1] * s[1]).sqrt();
    let margin = S::c(0.5 * params.lf) * f_leg * (s[1] / r);
    KnotEval {
        f,
        f_leg,
        r,
        cop_lo: margin - u[1],
        cop_hi: margin + u[1],
        cost: instantaneous_cost_kernel(s, u, params, cost),
    }
}

/// A transcribed periodic-gait problem with exact derivative evaluators.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Nlp {
    layout: Layout,
    task: GaitTask,
    params: ModelParams,
    cost: CostParams,
    config: TranscriptionConfig,
    x_lower: Vec<f64>,
    x_upper: Vec<f64>,
    c_lower: Vec<f64>,
    c_upper: Vec<f64>,
    #[serde(skip)]
    jac_sparsity: Vec<(usize, usize)>,
    guess: Vec<f64>,
}

impl Nlp {
    pub(crate) fn build(
        task: &GaitTask,
        params: &ModelParams,
        cost: &CostParams,
        config: &TranscriptionConfig,
    ) -> Result<Self> {
        params.validate()?;
        cost.validate()?;
        config.validate()?;
        if !(task.apex_velocity > 0.0 && task.apex_velocity < XDOT_BOX[1]) {
            return Err(Error::Infeasible(format!(
                "apex velocity {} outside (0, {})",
                task.apex_velocity, XDOT_BOX[1]
            )));
        }
        if !(task.apex_height > Y_BOX[0]) {
            return Err(Error::Infeasible(format!(
                "apex height {} below the minimum body height bound {}",
                task.apex_height, Y_BOX[0]
            )));
        }
        if !(task.apex_height < 2.0) {
            return Err(Error::Infeasible(format!(
                "apex height {} beyond the sweepable range",
                task.apex_height
            )));
        }

        let layout = Layout::new(config.n_knots, task.ankle_enabled);
        let n = config.n_knots;
        let nv = layout.num_vars();

        let mut xl = vec![f64::NEG_INFINITY; nv];
        let mut xu = vec![f64::INFINITY; nv];
        for i in 0..n {
            let b = layout.state_index(i, 0);
            xl[b] = X_BOX[0];
            xu[b] = if i == 0 { 0.0 } else { X_BOX[1] };
            xl[b + 1] = Y_BOX[0];
            xu[b + 1] = Y_BOX[1];
            xl[b + 2] = XDOT_BOX[0];
            xu[b + 2] = XDOT_BOX[1];
            xl[b + 3] = if i == n - 1 { 0.0 } else { YDOT_BOX[0] };
            xu[b + 3] = if i == 0 { 0.0 } else { YDOT_BOX[1] };
            xl[b + 4] = config.r_bounds[0];
            xu[b + 4] = config.r_bounds[1];
            xl[b + 5] = R0DOT_BOX[0];
            xu[b + 5] = R0DOT_BOX[1];
            let c = layout.control_index(i, 0);
            xl[c] = config.u_bounds[0];
            xu[c] = config.u_bounds[1];
            if layout.control_dim == 2 {
                // An unloaded leg transmits no torque, so the torque is
                // pinned at the force-free touchdown and liftoff knots.
                let pinned = i == 0 || i == n - 1;
                xl[c + 1] = if pinned { 0.0 } else { TAU_BOX[0] };
                xu[c + 1] = if pinned { 0.0 } else { TAU_BOX[1] };
            }
        }
        xl[layout.duration_index()] = config.t_bounds[0];
        xu[layout.duration_index()] = config.t_bounds[1];

        let num_cop = if task.ankle_enabled { 2 * (n - 2) } else { 0 };
        let m = 6 * (n - 1) + 4 + 2 + n + n + num_cop;
        let mut cl = vec![0.0; m];
        let mut cu = vec![0.0; m];
        // Defects, flight linking, periodicity are equalities at zero.
        let base_force = 6 * (n - 1) + 6;
        for i in 0..n {
            // Impact-free stance entry and exit: zero leg force at the ends.
            let (lo, hi) = if i == 0 || i == n - 1 {
                (0.0, 0.0)
            } else {
                (config.f_bounds[0], config.f_bounds[1])
            };
            cl[base_force + i] = lo;
            cu[base_force + i] = hi;
        }
        let base_r = base_force + n;
        for i in 0..n {
            cl[base_r + i] = config.r_bounds[0];
            cu[base_r + i] = config.r_bounds[1];
        }
        let base_cop = base_r + n;
        for i in 0..num_cop {
            cl[base_cop + i] = 0.0;
            cu[base_cop + i] = f64::INFINITY;
        }

        let guess = initial_guess(task, params, config);
        let mut nlp = Nlp {
            layout,
            task: *task,
            params: *params,
            cost: *cost,
            config: *config,
            x_lower: xl,
            x_upper: xu,
            c_lower: cl,
            c_upper: cu,
            jac_sparsity: Vec::new(),
            guess,
        };
        let mut pattern = Vec::new();
        let guess = nlp.guess.clone();
        nlp.visit_jacobian(&guess, &mut |r, c, _| pattern.push((r, c)));
        nlp.jac_sparsity = pattern;
        Ok(nlp)
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn task(&self) -> &GaitTask {
        &self.task
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn cost_params(&self) -> &CostParams {
        &self.cost
    }

    pub fn config(&self) -> &TranscriptionConfig {
        &self.config
    }

    pub fn num_vars(&self) -> usize {
        self.layout.num_vars()
    }

    pub fn num_constraints(&self) -> usize {
        self.c_lower.len()
    }

    pub fn var_bounds(&self) -> (&[f64], &[f64]) {
        (&self.x_lower, &self.x_upper)
    }

    pub fn constraint_bounds(&self) -> (&[f64], &[f64]) {
        (&self.c_lower, &self.c_upper)
    }

    pub fn initial_guess(&self) -> &[f64] {
        &self.guess
    }

    /// Pin the ankle torque variables to zero without changing the layout.
    /// The feasible set then coincides with the ankle-free problem's.
    pub fn pin_ankle_torque(&mut self) {
        if self.layout.control_dim != 2 {
            return;
        }
        for i in 0..self.layout.n_knots {
            let c = self.layout.control_index(i, 1);
            self.x_lower[c] = 0.0;
            self.x_upper[c] = 0.0;
        }
    }

    /// A reproducible random point strictly inside the box bounds, suitable
    /// as a reference point for finite-difference derivative checks. Torque
    /// entries are kept away from zero so the smoothed positive-part clip in
    /// the cost integrand stays out of its high-curvature center, where a
    /// central-difference oracle at step 1e-6 stops being a valid reference.
    pub fn sample_interior_point(&self, seed: u64) -> Vec<f64> {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let (xl, xu) = self.var_bounds();
        let mut point: Vec<f64> = self
            .guess
            .iter()
            .zip(xl.iter().zip(xu))
            .map(|(&g, (&lo, &hi))| {
                if lo == hi {
                    lo
                } else {
                    let v = g + rng.gen_range(-0.08..0.08);
                    let margin = 1e-3 * (hi - lo).min(1.0);
                    v.clamp(lo + margin, hi - margin)
                }
            })
            .collect();
        if self.layout.control_dim == 2 {
            for i in 0..self.layout.n_knots {
                let c = self.layout.control_index(i, 1);
                if xl[c] != xu[c] && point[c].abs() < 0.02 {
                    point[c] = 0.02f64.copysign(point[c]);
                }
            }
        }
        point
    }

    pub fn decode(&self, x: &[f64]) -> Trajectory {
        self.layout.decode(x)
    }

    pub fn encode(&self, traj: &Trajectory) -> Result<Vec<f64>> {
        self.layout.encode(traj)
    }

    fn knot_interior_row_offsets(&self) -> (usize, usize, usize) {
        let n = self.layout.n_knots;
        let base_force = 6 * (n - 1) + 6;
        let base_r = base_force + n;
        let base_cop = base_r + n;
        (base_force, base_r, base_cop)
    }

    /// Energy numerator of the objective; identical summation to the
    /// post-hoc trajectory energy.
    pub fn energy(&self, x: &[f64]) -> f64 {
        let traj = self.decode(x);
        energy_from_knots(
            &traj.knot_states,
            &traj.knot_controls,
            traj.duration,
            &self.params,
            &self.cost,
        )
    }

    /// Cycle distance as a function of the decision vector.
    pub fn distance(&self, x: &[f64]) -> f64 {
        let layout = &self.layout;
        let n = layout.n_knots;
        stride_distance_parts(
            &self.task,
            x[layout.state_index(0, 0)],
            x[layout.state_index(0, 3)],
            x[layout.state_index(n - 1, 0)],
            x[layout.state_index(n - 1, 2)],
            x[layout.state_index(n - 1, 3)],
            &self.params,
        )
    }

    /// Minimized functional: cost of transport E / (m g d).
    pub fn objective(&self, x: &[f64]) -> f64 {
        self.energy(x) / (self.params.m * self.params.g * self.distance(x))
    }

    pub fn constraints(&self, x: &[f64], out: &mut [f64]) {
        let layout = &self.layout;
        let n = layout.n_knots;
        let t = x[layout.duration_index()];
        let h = t / (n as f64 - 1.0);
        let p = &self.params;

        let evals: Vec<KnotEval<f64>> = (0..n)
            .map(|i| eval_knot(&layout.state_at(x, i), &layout.control_at(x, i), p, &self.cost))
            .collect();

        for i in 0..n - 1 {
            for j in 0..6 {
                out[6 * i + j] = x[layout.state_index(i + 1, j)]
                    - x[layout.state_index(i, j)]
                    - 0.5 * h * (evals[i].f[j] + evals[i + 1].f[j]);
            }
        }
        let fl = 6 * (n - 1);
        let g = p.g;
        let (y0, yd0) = (x[layout.state_index(0, 1)], x[layout.state_index(0, 3)]);
        let (ye, yde) = (x[layout.state_index(n - 1, 1)], x[layout.state_index(n - 1, 3)]);
        out[fl] = x[layout.state_index(0, 2)] - self.task.apex_velocity;
        out[fl + 1] = y0 + yd0 * yd0 / (2.0 * g) - self.task.apex_height;
        out[fl + 2] = x[layout.state_index(n - 1, 2)] - self.task.apex_velocity;
        out[fl + 3] = ye + yde * yde / (2.0 * g) - self.task.apex_height;
        out[fl + 4] = x[layout.state_index(n - 1, 4)] - x[layout.state_index(0, 4)];
        out[fl + 5] = x[layout.state_index(n - 1, 5)] - x[layout.state_index(0, 5)];

        let (base_force, base_r, base_cop) = self.knot_interior_row_offsets();
        for i in 0..n {
            out[base_force + i] = evals[i].f_leg;
            out[base_r + i] = evals[i].r;
        }
        if self.task.ankle_enabled {
            for i in 1..n - 1 {
                out[base_cop + 2 * (i - 1)] = evals[i].cop_lo;
                out[base_cop + 2 * (i - 1) + 1] = evals[i].cop_hi;
            }
        }
    }

    pub fn objective_grad(&self, x: &[f64], grad: &mut [f64]) {
        grad.fill(0.0);
        let layout = &self.layout;
        let n = layout.n_knots;
        let nm1 = n as f64 - 1.0;
        let t = x[layout.duration_index()];
        let h = t / nm1;
        let p = &self.params;
        let mgd_scale = p.m * p.g;

        // Energy gradient from per-knot cost gradients.
        let mut e_sum = 0.0;
        let mut grad_e = vec![0.0; x.len()];
        for i in 0..n {
            let (sd, ud) = seed_knot::<8>(layout, x, i);
            let c = instantaneous_cost_kernel(&sd, &ud, p, &self.cost);
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            e_sum += w * c.v;
            for l in 0..8 {
                if let Some(col) = map_local(layout, i, l) {
                    grad_e[col] += h * w * c.d[l];
                }
            }
        }
        grad_e[layout.duration_index()] = e_sum / nm1;
        let e = h * e_sum;

        // Distance gradient: sparse, five entries.
        let d = self.distance(x);
        let gd = self.distance_grad_entries(x);

        let denom = mgd_scale * d;
        let scale = e / (mgd_scale * d * d);
        for i in 0..x.len() {
            grad[i] = grad_e[i] / denom;
        }
        for &(col, v) in &gd {
            grad[col] -= scale * v;
        }
    }

    /// Nonzero entries of the cycle-distance gradient.
    fn distance_grad_entries(&self, x: &[f64]) -> [(usize, f64); 5] {
        let layout = &self.layout;
        let n = layout.n_knots;
        let g = self.params.g;
        [
            (layout.state_index(0, 0), -1.0),
            (layout.state_index(0, 3), -self.task.apex_velocity / g),
            (layout.state_index(n - 1, 0), 1.0),
            (layout.state_index(n - 1, 2), x[layout.state_index(n - 1, 3)] / g),
            (layout.state_index(n - 1, 3), x[layout.state_index(n - 1, 2)] / g),
        ]
    }

    pub fn jacobian_sparsity(&self) -> &[(usize, usize)] {
        &self.jac_sparsity
    }

    pub fn jacobian_values(&self, x: &[f64], vals: &mut [f64]) {
        let mut k = 0;
        self.visit_jacobian(x, &mut |_, _, v| {
            vals[k] = v;
            k += 1;
        });
        debug_assert_eq!(k, self.jac_sparsity.len());
    }

    /// Walk every Jacobian nonzero in canonical order. The sparsity pattern
    /// and the value evaluation share this single code path.
    fn visit_jacobian(&self, x: &[f64], visit: &mut dyn FnMut(usize, usize, f64)) {
        let layout = &self.layout;
        let n = layout.n_knots;
        let nm1 = n as f64 - 1.0;
        let t = x[layout.duration_index()];
        let h = t / nm1;
        let p = &self.params;
        let tcol = layout.duration_index();

        let evals: Vec<KnotEval<Dual<8>>> = (0..n)
            .map(|i| {
                let (sd, ud) = seed_knot::<8>(layout, x, i);
                eval_knot(&sd, &ud, p, &self.cost)
            })
            .collect();

        // Dynamics defects.
        for i in 0..n - 1 {
            for j in 0..6 {
                let row = 6 * i + j;
                for l in 0..8 {
                    if let Some(col) = map_local(layout, i, l) {
                        let ident = if l == j { -1.0 } else { 0.0 };
                        visit(row, col, ident - 0.5 * h * evals[i].f[j].d[l]);
                    }
                }
                for l in 0..8 {
                    if let Some(col) = map_local(layout, i + 1, l) {
                        let ident = if l == j { 1.0 } else { 0.0 };
                        visit(row, col, ident - 0.5 * h * evals[i + 1].f[j].d[l]);
                    }
                }
                visit(row, tcol, -(evals[i].f[j].v + evals[i + 1].f[j].v) / (2.0 * nm1));
            }
        }

        // Flight linking and set-point periodicity.
        let fl = 6 * (n - 1);
        let g = p.g;
        visit(fl, layout.state_index(0, 2), 1.0);
        visit(fl + 1, layout.state_index(0, 1), 1.0);
        visit(fl + 1, layout.state_index(0, 3), x[layout.state_index(0, 3)] / g);
        visit(fl + 2, layout.state_index(n - 1, 2), 1.0);
        visit(fl + 3, layout.state_index(n - 1, 1), 1.0);
        visit(fl + 3, layout.state_index(n - 1, 3), x[layout.state_index(n - 1, 3)] / g);
        visit(fl + 4, layout.state_index(0, 4), -1.0);
        visit(fl + 4, layout.state_index(n - 1, 4), 1.0);
        visit(fl + 5, layout.state_index(0, 5), -1.0);
        visit(fl + 5, layout.state_index(n - 1, 5), 1.0);

        // Leg force and leg length rows.
        let (base_force, base_r, base_cop) = self.knot_interior_row_offsets();
        for i in 0..n {
            for l in 0..STATE_DIM {
                visit(base_force + i, layout.state_index(i, l), evals[i].f_leg.d[l]);
            }
            visit(base_r + i, layout.state_index(i, 0), evals[i].r.d[0]);
            visit(base_r + i, layout.state_index(i, 1), evals[i].r.d[1]);
        }

        // Center-of-pressure rows at interior knots.
        if self.task.ankle_enabled {
            for i in 1..n - 1 {
                let row = base_cop + 2 * (i - 1);
                for l in 0..STATE_DIM {
                    visit(row, layout.state_index(i, l), evals[i].cop_lo.d[l]);
                    visit(row + 1, layout.state_index(i, l), evals[i].cop_hi.d[l]);
                }
                let tau_col = layout.control_index(i, 1);
                visit(row, tau_col, evals[i].cop_lo.d[7]);
                visit(row + 1, tau_col, evals[i].cop_hi.d[7]);
            }
        }
    }

    /// Hessian of sigma * objective + lambda . constraints, dense symmetric.
    pub fn lagrangian_hessian(
        &self,
        x: &[f64],
        sigma: f64,
        lambda: &[f64],
        out: &mut DMatrix<f64>,
    ) {
        let nv = self.num_vars();
        debug_assert_eq!(lambda.len(), self.num_constraints());
        debug_assert_eq!((out.nrows(), out.ncols()), (nv, nv));
        out.fill(0.0);

        let layout = &self.layout;
        let n = layout.n_knots;
        let nm1 = n as f64 - 1.0;
        let t = x[layout.duration_index()];
        let h = t / nm1;
        let p = &self.params;
        let tcol = layout.duration_index();
        let (base_force, base_r, base_cop) = self.knot_interior_row_offsets();

        let d = self.distance(x);
        let mgd = self.params.m * self.params.g * d;

        let mut e_sum = 0.0;
        let mut grad_e = vec![0.0; nv];

        for i in 0..n {
            let (sd, ud) = seed_knot2::<8>(layout, x, i);
            let ke = eval_knot(&sd, &ud, p, &self.cost);

            // Defect multipliers touching this knot, from intervals i-1 and i.
            let mut nu = [0.0; 6];
            for j in 0..6 {
                if i >= 1 {
                    nu[j] += lambda[6 * (i - 1) + j];
                }
                if i + 1 < n {
                    nu[j] += lambda[6 * i + j];
                }
            }
            let w_obj = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            let cost_w = sigma * w_obj / mgd;
            e_sum += w_obj * ke.cost.v;

            let l_force = lambda[base_force + i];
            let l_r = lambda[base_r + i];
            let (l_lo, l_hi) = if self.task.ankle_enabled && i >= 1 && i + 1 < n {
                (lambda[base_cop + 2 * (i - 1)], lambda[base_cop + 2 * (i - 1) + 1])
            } else {
                (0.0, 0.0)
            };

            for l1 in 0..8 {
                let Some(c1) = map_local(layout, i, l1) else { continue };
                // Gradient of the h-coupled part, for the T cross terms.
                let mut ga = cost_w * ke.cost.g[l1];
                for j in 0..6 {
                    ga -= 0.5 * nu[j] * ke.f[j].g[l1];
                }
                out[(tcol, c1)] += ga / nm1;
                out[(c1, tcol)] += ga / nm1;
                if sigma != 0.0 {
                    grad_e[c1] += h * w_obj * ke.cost.g[l1];
                }

                for l2 in 0..8 {
                    let Some(c2) = map_local(layout, i, l2) else { continue };
                    let mut a = cost_w * ke.cost.h[l1][l2];
                    for j in 0..6 {
                        a -= 0.5 * nu[j] * ke.f[j].h[l1][l2];
                    }
                    let b = l_force * ke.f_leg.h[l1][l2]
                        + l_r * ke.r.h[l1][l2]
                        + l_lo * ke.cop_lo.h[l1][l2]
                        + l_hi * ke.cop_hi.h[l1][l2];
                    out[(c1, c2)] += h * a + b;
                }
            }
        }

        // Flight-row curvature: the ydot^2/(2g) terms.
        let fl = 6 * (n - 1);
        let g = p.g;
        let yd0 = layout.state_index(0, 3);
        let yde = layout.state_index(n - 1, 3);
        out[(yd0, yd0)] += lambda[fl + 1] / g;
        out[(yde, yde)] += lambda[fl + 3] / g;

        if sigma != 0.0 {
            // Quotient-rule corrections for the E/(m g d) objective.
            let e = h * e_sum;
            grad_e[tcol] = e_sum / nm1;
            let gd = self.distance_grad_entries(x);
            let s1 = sigma / (self.params.m * self.params.g * d * d);
            for &(col, v) in &gd {
                for i in 0..nv {
                    let c = s1 * grad_e[i] * v;
                    out[(i, col)] -= c;
                    out[(col, i)] -= c;
                }
            }
            let s2 = 2.0 * sigma * e / (self.params.m * self.params.g * d * d * d);
            for &(c1, v1) in &gd {
                for &(c2, v2) in &gd {
                    out[(c1, c2)] += s2 * v1 * v2;
                }
            }
            // Hessian of d itself: the xdot_end * ydot_end / g bilinear term.
            let xde = layout.state_index(n - 1, 2);
            let se = sigma * e / (self.params.m * self.params.g * d * d) / g;
            out[(xde, yde)] -= se;
            out[(yde, xde)] -= se;
        }
    }
}

/// Seed one knot's local variables as first-order duals.
fn seed_knot<const N: usize>(layout: &Layout, x: &[f64], knot: usize) -> ([Dual<N>; 6], [Dual<N>; 2]) {
    let s = layout.state_at(x, knot);
    let u = layout.control_at(x, knot);
    let mut sd = [Dual::<N>::c(0.0); 6];
    let mut ud = [Dual::<N>::c(0.0); 2];
    for i in 0..6 {
        sd[i] = Dual::var(s[i], i);
    }
    ud[0] = Dual::var(u[0], 6);
    ud[1] = if layout.control_dim == 2 { Dual::var(u[1], 7) } else { Dual::c(0.0) };
    (sd, ud)
}

/// Seed one knot's local variables as second-order duals.
fn seed_knot2<const N: usize>(
    layout: &Layout,
    x: &[f64],
    knot: usize,
) -> ([Dual2<N>; 6], [Dual2<N>; 2]) {
    let s = layout.state_at(x, knot);
    let u = layout.control_at(x, knot);
    let mut sd = [Dual2::<N>::c(0.0); 6];
    let mut ud = [Dual2::<N>::c(0.0); 2];
    for i in 0..6 {
        sd[i] = Dual2::var(s[i], i);
    }
    ud[0] = Dual2::var(u[0], 6);
    ud[1] = if layout.control_dim == 2 { Dual2::var(u[1], 7) } else { Dual2::c(0.0) };
    (sd, ud)
}

/// Map a knot-local variable index (6 states, then u_r, then tau) to its
/// decision-vector column; `None` for the torque slot of ankle-free layouts.
fn map_local(layout: &Layout, knot: usize, local: usize) -> Option<usize> {
    if local < STATE_DIM {
        Some(layout.state_index(knot, local))
    } else if local == STATE_DIM {
        Some(layout.control_index(knot, 0))
    } else if layout.control_dim == 2 {
        Some(layout.control_index(knot, 1))
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transcription::build_nlp;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn nominal() -> (GaitTask, ModelParams, CostParams, TranscriptionConfig) {
        (
            GaitTask::new(1.0, 1.0, true),
            ModelParams::default(),
            CostParams::default(),
            TranscriptionConfig::default(),
        )
    }

    fn interior_point(nlp: &Nlp, seed: u64) -> Vec<f64> {
        nlp.sample_interior_point(seed)
    }

    #[test]
    fn problem_dimensions() {
        let (task, p, c, cfg) = nominal();
        let nlp = build_nlp(&task, &p, &c, &cfg).unwrap();
        assert_eq!(nlp.num_vars(), 241);
        assert_eq!(nlp.num_constraints(), 174 + 4 + 2 + 30 + 30 + 56);

        let no_ankle = build_nlp(&task.with_ankle(false), &p, &c, &cfg).unwrap();
        assert_eq!(no_ankle.num_vars(), 211);
        assert_eq!(no_ankle.num_constraints(), 174 + 4 + 2 + 30 + 30);
    }

    #[test]
    fn every_row_has_a_jacobian_entry() {
        let (task, p, c, cfg) = nominal();
        for ankle in [true, false] {
            let nlp = build_nlp(&task.with_ankle(ankle), &p, &c, &cfg).unwrap();
            let mut touched = vec![false; nlp.num_constraints()];
            for &(r, _) in nlp.jacobian_sparsity() {
                touched[r] = true;
            }
            assert!(touched.iter().all(|&t| t));
        }
    }

    #[test]
    fn infeasible_tasks_rejected_at_build() {
        let (_, p, c, cfg) = nominal();
        assert!(build_nlp(&GaitTask::new(0.04, 1.0, true), &p, &c, &cfg).is_err());
        assert!(build_nlp(&GaitTask::new(1.0, 0.0, true), &p, &c, &cfg).is_err());
        assert!(build_nlp(&GaitTask::new(1.0, -1.0, true), &p, &c, &cfg).is_err());
        let bad = TranscriptionConfig { f_bounds: [-1.0, 5.0], ..cfg };
        assert!(build_nlp(&GaitTask::new(1.0, 1.0, true), &p, &c, &bad).is_err());
    }

    #[test]
    fn defect_rows_match_standalone_residuals() {
        let (task, p, c, cfg) = nominal();
        let nlp = build_nlp(&task, &p, &c, &cfg).unwrap();
        let x = interior_point(&nlp, 7);
        let mut cons = vec![0.0; nlp.num_constraints()];
        nlp.constraints(&x, &mut cons);
        let traj = nlp.decode(&x);
        let defects = crate::transcription::defect_constraints(&traj, &p);
        for (a, b) in cons[..defects.len()].iter().zip(&defects) {
            assert!((a - b).abs() < 1e-14);
        }
        let cop = crate::transcription::cop_path_constraints(&traj, &p);
        let base_cop = nlp.num_constraints() - 56;
        for i in 1..29 {
            assert!((cons[base_cop + 2 * (i - 1)] - cop[2 * i]).abs() < 1e-14);
            assert!((cons[base_cop + 2 * (i - 1) + 1] - cop[2 * i + 1]).abs() < 1e-14);
        }
    }

    fn fd_check_gradients(nlp: &Nlp, x: &[f64]) -> f64 {
        let nv = nlp.num_vars();
        let m = nlp.num_constraints();
        let mut grad = vec![0.0; nv];
        nlp.objective_grad(x, &mut grad);
        let mut jac = vec![0.0; nlp.jacobian_sparsity().len()];
        nlp.jacobian_values(x, &mut jac);
        let mut dense = vec![vec![0.0; nv]; m];
        for (&(r, c), &v) in nlp.jacobian_sparsity().iter().zip(&jac) {
            dense[r][c] += v;
        }
        let hstep = 1e-6;
        let mut worst: f64 = 0.0;
        let mut cp = vec![0.0; m];
        let mut cm = vec![0.0; m];
        for col in 0..nv {
            let mut xp = x.to_vec();
            xp[col] += hstep;
            let mut xm = x.to_vec();
            xm[col] -= hstep;
            nlp.constraints(&xp, &mut cp);
            nlp.constraints(&xm, &mut cm);
            let fd_obj = (nlp.objective(&xp) - nlp.objective(&xm)) / (2.0 * hstep);
            let err = (grad[col] - fd_obj).abs() / grad[col].abs().max(fd_obj.abs()).max(1.0);
            worst = worst.max(err);
            for row in 0..m {
                let fd = (cp[row] - cm[row]) / (2.0 * hstep);
                let a = dense[row][col];
                let err = (a - fd).abs() / a.abs().max(fd.abs()).max(1.0);
                worst = worst.max(err);
            }
        }
        worst
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let (task, p, c, cfg) = nominal();
        let cfg = TranscriptionConfig { n_knots: 8, ..cfg };
        for ankle in [true, false] {
            let nlp = build_nlp(&task.with_ankle(ankle), &p, &c, &cfg).unwrap();
            for seed in [1u64, 2] {
                let x = interior_point(&nlp, seed);
                let worst = fd_check_gradients(&nlp, &x);
                assert!(worst < 1e-5, "ankle={ankle} seed={seed}: worst error {worst}");
            }
        }
    }

    #[test]
    fn hessian_matches_finite_differences_of_gradients() {
        let (task, p, c, cfg) = nominal();
        let cfg = TranscriptionConfig { n_knots: 6, ..cfg };
        for ankle in [true, false] {
            let nlp = build_nlp(&task.with_ankle(ankle), &p, &c, &cfg).unwrap();
            let nv = nlp.num_vars();
            let m = nlp.num_constraints();
            let x = interior_point(&nlp, 3);
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let sigma = 0.8;
            let lambda: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut hess = DMatrix::zeros(nv, nv);
            nlp.lagrangian_hessian(&x, sigma, &lambda, &mut hess);

            // Gradient of the Lagrangian at a point.
            let lag_grad = |x: &[f64]| -> Vec<f64> {
                let mut g = vec![0.0; nv];
                nlp.objective_grad(x, &mut g);
                for v in g.iter_mut() {
                    *v *= sigma;
                }
                let mut jac = vec![0.0; nlp.jacobian_sparsity().len()];
                nlp.jacobian_values(x, &mut jac);
                for (&(r, c), &v) in nlp.jacobian_sparsity().iter().zip(&jac) {
                    g[c] += lambda[r] * v;
                }
                g
            };
            // Pinned variables sit exactly at the cost clip's kink center,
            // where the finite-difference reference breaks down; the solver
            // eliminates them, so they are skipped here.
            let (xl, xu) = nlp.var_bounds();
            let h = 1e-6;
            let mut worst: f64 = 0.0;
            for col in 0..nv {
                if xl[col] == xu[col] {
                    continue;
                }
                let mut xp = x.clone();
                xp[col] += h;
                let mut xm = x.clone();
                xm[col] -= h;
                let gp = lag_grad(&xp);
                let gm = lag_grad(&xm);
                for row in 0..nv {
                    if xl[row] == xu[row] {
                        continue;
                    }
                    let fd = (gp[row] - gm[row]) / (2.0 * h);
                    let a = hess[(row, col)];
                    let err = (a - fd).abs() / a.abs().max(fd.abs()).max(1.0);
                    worst = worst.max(err);
                }
            }
            assert!(worst < 2e-4, "ankle={ankle}: worst Hessian error {worst}");
        }
    }

    #[test]
    fn pinned_torque_matches_ankle_free_problem() {
        let (task, p, c, cfg) = nominal();
        let mut ankle = build_nlp(&task, &p, &c, &cfg).unwrap();
        ankle.pin_ankle_torque();
        let free = build_nlp(&task.with_ankle(false), &p, &c, &cfg).unwrap();

        // Matched points: same states, controls, duration; torque zero.
        let xf = interior_point(&free, 5);
        let traj = free.decode(&xf);
        let xa = ankle.encode(&traj).unwrap();

        assert_eq!(ankle.objective(&xa).to_bits(), free.objective(&xf).to_bits());
        assert_eq!(ankle.energy(&xa).to_bits(), free.energy(&xf).to_bits());

        let mut ca = vec![0.0; ankle.num_constraints()];
        ankle.constraints(&xa, &mut ca);
        let mut cf = vec![0.0; free.num_constraints()];
        free.constraints(&xf, &mut cf);
        // Shared rows agree bit for bit.
        for (a, f) in ca.iter().zip(&cf) {
            assert_eq!(a.to_bits(), f.to_bits());
        }
        // With tau pinned to zero the extra torque rows collapse to the
        // symmetric margin, so they are implied by the shared force rows
        // (nonnegative wherever the force bounds hold).
        for pair in ca[cf.len()..].chunks(2) {
            assert_eq!(pair[0].to_bits(), pair[1].to_bits());
        }
    }

    #[test]
    fn objective_energy_matches_trajectory_energy() {
        let (task, p, c, cfg) = nominal();
        let nlp = build_nlp(&task, &p, &c, &cfg).unwrap();
        let x = interior_point(&nlp, 13);
        let traj = nlp.decode(&x);
        let e = crate::objective::energy_required(&traj, &p, &c).unwrap();
        assert_eq!(nlp.energy(&x).to_bits(), e.to_bits());
    }
}

