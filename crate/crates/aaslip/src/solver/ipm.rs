//! Primal-dual interior-point method for the transcribed gait programs:
//!
//! ```text
//!   min f(x)   s.t.  cl <= c(x) <= cu,   xl <= x <= xu
//! ```
//!
//! Equality rows (cl = cu) keep explicit multipliers; inequality rows get
//! slacks bounded by [cl, cu]. Bounds are handled by a logarithmic barrier
//! with a monotone Fiacco-McCormick schedule on the barrier parameter. The
//! search direction comes from a regularized symmetric quasi-definite KKT
//! system factored by fixed-order LDL^T; pivot signs drive the inertia
//! correction. Globalization is a backtracking line search on an L1 exact
//! penalty merit with a fraction-to-boundary rule.
//!
//! Everything is deterministic: no randomness, no time-dependent decisions
//! unless a wall-clock limit is explicitly configured.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::solver::ldl::LdlFactor;
use crate::solver::NlpProblem;

pub(crate) struct IpmOptions {
    /// Absolute constraint-violation tolerance (the paper-level gate).
    pub tol: f64,
    /// Scaled dual-infeasibility tolerance.
    pub dual_tol: f64,
    /// Scaled complementarity tolerance.
    pub comp_tol: f64,
    pub max_iter: usize,
    pub mu_init: f64,
    /// Optional wall-clock budget in seconds.
    pub max_seconds: Option<f64>,
}

impl Default for IpmOptions {
    fn default() -> Self {
        IpmOptions {
            tol: 1e-9,
            dual_tol: 1e-6,
            comp_tol: 1e-6,
            max_iter: 3000,
            mu_init: 1e-2,
            max_seconds: None,
        }
    }
}

pub(crate) struct IpmOutcome {
    pub x: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub constraint_violation: f64,
    pub dual_infeasibility: f64,
    pub objective: f64,
    pub termination: String,
}

const MU_MIN: f64 = 1e-11;
const TAU_MIN: f64 = 0.99;
const KAPPA_EPS: f64 = 10.0;
const KAPPA_SIGMA: f64 = 1e10;
const GAMMA_DUAL: f64 = 1e-11;
const DELTA_MIN: f64 = 1e-10;
const DELTA_MAX: f64 = 1e12;

struct Bound {
    lower: f64,
    upper: f64,
}

impl Bound {
    fn has_lower(&self) -> bool {
        self.lower.is_finite()
    }
    fn has_upper(&self) -> bool {
        self.upper.is_finite()
    }
}

/// Push a value strictly inside its bounds.
fn push_interior(v: f64, b: &Bound) -> f64 {
    let (lo, hi) = (b.lower, b.upper);
    match (b.has_lower(), b.has_upper()) {
        (true, true) => {
            let margin = (0.01 * (hi - lo)).min(0.01 * lo.abs().max(1.0));
            v.clamp(lo + margin, hi - margin)
        }
        (true, false) => v.max(lo + 1e-4 * lo.abs().max(1.0)),
        (false, true) => v.min(hi - 1e-4 * hi.abs().max(1.0)),
        (false, false) => v,
    }
}

pub(crate) fn solve_ipm(
    problem: &dyn NlpProblem,
    x0: &[f64],
    opts: &IpmOptions,
) -> Result<IpmOutcome> {
    let start = std::time::Instant::now();
    let nx = problem.num_vars();
    let m = problem.num_constraints();
    if x0.len() != nx {
        return Err(Error::DimensionMismatch { expected: nx, got: x0.len() });
    }
    let (xl, xu) = problem.var_bounds();
    let (cl, cu) = problem.constraint_bounds();

    let pinned: Vec<bool> = (0..nx).map(|i| xl[i] == xu[i]).collect();
    let xb: Vec<Bound> = (0..nx).map(|i| Bound { lower: xl[i], upper: xu[i] }).collect();

    let mut eq_rows = Vec::new();
    let mut in_rows = Vec::new();
    for j in 0..m {
        if cl[j] == cu[j] {
            eq_rows.push(j);
        } else {
            in_rows.push(j);
        }
    }
    let me = eq_rows.len();
    let mi = in_rows.len();
    let sb: Vec<Bound> = in_rows.iter().map(|&j| Bound { lower: cl[j], upper: cu[j] }).collect();

    let sparsity = problem.jacobian_sparsity();
    let nnz = sparsity.len();

    // Map each row to its position among equalities or inequalities.
    let mut row_kind = vec![(false, 0usize); m];
    for (k, &j) in eq_rows.iter().enumerate() {
        row_kind[j] = (true, k);
    }
    for (k, &j) in in_rows.iter().enumerate() {
        row_kind[j] = (false, k);
    }

    // --- iterate state ---
    let mut x: Vec<f64> = (0..nx)
        .map(|i| if pinned[i] { xl[i] } else { push_interior(x0[i], &xb[i]) })
        .collect();
    let mut cvals = vec![0.0; m];
    let mut grad = vec![0.0; nx];
    let mut jac = vec![0.0; nnz];

    let eval_at = |x: &[f64], cvals: &mut [f64], grad: &mut [f64], jac: &mut [f64]| -> Result<f64> {
        let f = problem.objective(x);
        problem.constraints(x, cvals);
        problem.objective_grad(x, grad);
        problem.jacobian_values(x, jac);
        if !f.is_finite() {
            return Err(Error::NonFinite { context: "objective".into(), index: 0 });
        }
        if let Some(i) = cvals.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: "constraint".into(), index: i });
        }
        if let Some(i) = grad.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: "objective gradient".into(), index: i });
        }
        if let Some(i) = jac.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: "constraint jacobian".into(), index: i });
        }
        Ok(f)
    };

    let mut fval = eval_at(&x, &mut cvals, &mut grad, &mut jac)?;

    let mut mu = opts.mu_init.max(MU_MIN);
    let mut s: Vec<f64> = (0..mi)
        .map(|k| push_interior(cvals[in_rows[k]], &sb[k]))
        .collect();
    let mut lam_eq = vec![0.0; me];
    let mut lam_in = vec![0.0; mi];
    let init_z = |dist: f64| (mu / dist).clamp(1e-8, 1e8);
    let mut zxl: Vec<f64> = (0..nx)
        .map(|i| if !pinned[i] && xb[i].has_lower() { init_z(x[i] - xb[i].lower) } else { 0.0 })
        .collect();
    let mut zxu: Vec<f64> = (0..nx)
        .map(|i| if !pinned[i] && xb[i].has_upper() { init_z(xb[i].upper - x[i]) } else { 0.0 })
        .collect();
    let mut zsl: Vec<f64> = (0..mi)
        .map(|k| if sb[k].has_lower() { init_z(s[k] - sb[k].lower) } else { 0.0 })
        .collect();
    let mut zsu: Vec<f64> = (0..mi)
        .map(|k| if sb[k].has_upper() { init_z(sb[k].upper - s[k]) } else { 0.0 })
        .collect();

    let nkkt = nx + me + mi;
    let mut kkt = vec![0.0; nkkt * nkkt];
    let mut rhs = vec![0.0; nkkt];
    let mut hess = DMatrix::<f64>::zeros(nx, nx);
    let mut lambda_full = vec![0.0; m];

    let mut nu_merit = 1.0f64;
    let mut delta_last = 0.0f64;

    let mut best_x = x.clone();
    let mut best_viol = f64::INFINITY;
    let mut best_obj = fval;

    let violation = |cvals: &[f64]| -> f64 {
        let mut v: f64 = 0.0;
        for j in 0..m {
            v = v.max(cl[j] - cvals[j]).max(cvals[j] - cu[j]);
        }
        v.max(0.0)
    };

    // L1 infeasibility of the barrier problem (slacks included).
    let theta = |cvals: &[f64], s: &[f64]| -> f64 {
        let mut t = 0.0;
        for &j in &eq_rows {
            t += (cvals[j] - cl[j]).abs();
        }
        for (k, &j) in in_rows.iter().enumerate() {
            t += (cvals[j] - s[k]).abs();
        }
        t
    };

    let barrier = |fv: f64, x: &[f64], s: &[f64], mu: f64| -> f64 {
        let mut b = fv;
        for i in 0..nx {
            if pinned[i] {
                continue;
            }
            if xb[i].has_lower() {
                b -= mu * (x[i] - xb[i].lower).ln();
            }
            if xb[i].has_upper() {
                b -= mu * (xb[i].upper - x[i]).ln();
            }
        }
        for k in 0..mi {
            if sb[k].has_lower() {
                b -= mu * (s[k] - sb[k].lower).ln();
            }
            if sb[k].has_upper() {
                b -= mu * (sb[k].upper - s[k]).ln();
            }
        }
        b
    };

    let mut iterations = 0;
    let mut termination = "max_iterations".to_string();
    let mut converged = false;
    let mut last_dual_inf = f64::INFINITY;

    let mut c_trial = vec![0.0; m];

    while iterations < opts.max_iter {
        if let Some(limit) = opts.max_seconds {
            if start.elapsed().as_secs_f64() > limit {
                termination = "time_limit".to_string();
                break;
            }
        }

        // --- optimality measures ---
        // dual residual: grad + J^T lambda - zxl + zxu (free variables only).
        let mut r_dual = grad.clone();
        for (idx, &(r, c)) in sparsity.iter().enumerate() {
            let lam = match row_kind[r] {
                (true, k) => lam_eq[k],
                (false, k) => lam_in[k],
            };
            r_dual[c] += lam * jac[idx];
        }
        let mut dual_inf: f64 = 0.0;
        let mut z_sum = 0.0;
        let mut z_count = 0usize;
        for i in 0..nx {
            if pinned[i] {
                continue;
            }
            let v = r_dual[i] - zxl[i] + zxu[i];
            dual_inf = dual_inf.max(v.abs());
        }
        // Slack stationarity: -lam_in - zsl + zsu = 0.
        for k in 0..mi {
            let v = -lam_in[k] - zsl[k] + zsu[k];
            dual_inf = dual_inf.max(v.abs());
        }
        for &z in zxl.iter().chain(&zxu).chain(&zsl).chain(&zsu) {
            if z != 0.0 {
                z_sum += z.abs();
                z_count += 1;
            }
        }
        for &l in lam_eq.iter().chain(&lam_in) {
            z_sum += l.abs();
            z_count += 1;
        }
        let sd = ((z_sum / z_count.max(1) as f64).max(100.0)) / 100.0;

        let mut comp_mu0: f64 = 0.0;
        let mut comp_mu: f64 = 0.0;
        for i in 0..nx {
            if pinned[i] {
                continue;
            }
            if xb[i].has_lower() {
                let c = zxl[i] * (x[i] - xb[i].lower);
                comp_mu0 = comp_mu0.max(c.abs());
                comp_mu = comp_mu.max((c - mu).abs());
            }
            if xb[i].has_upper() {
                let c = zxu[i] * (xb[i].upper - x[i]);
                comp_mu0 = comp_mu0.max(c.abs());
                comp_mu = comp_mu.max((c - mu).abs());
            }
        }
        for k in 0..mi {
            if sb[k].has_lower() {
                let c = zsl[k] * (s[k] - sb[k].lower);
                comp_mu0 = comp_mu0.max(c.abs());
                comp_mu = comp_mu.max((c - mu).abs());
            }
            if sb[k].has_upper() {
                let c = zsu[k] * (sb[k].upper - s[k]);
                comp_mu0 = comp_mu0.max(c.abs());
                comp_mu = comp_mu.max((c - mu).abs());
            }
        }

        last_dual_inf = dual_inf / sd;

        // Primal infeasibility of the original problem and of the barrier
        // subproblem (the latter includes the slack residuals).
        let viol = violation(&cvals);
        let mut prim_inf: f64 = 0.0;
        for &j in &eq_rows {
            prim_inf = prim_inf.max((cvals[j] - cl[j]).abs());
        }
        for (k, &j) in in_rows.iter().enumerate() {
            prim_inf = prim_inf.max((cvals[j] - s[k]).abs());
        }

        if viol < best_viol || (viol <= best_viol && fval < best_obj) {
            best_viol = viol;
            best_obj = fval;
            best_x.copy_from_slice(&x);
        }

        if viol <= opts.tol && dual_inf / sd <= opts.dual_tol && comp_mu0 / sd <= opts.comp_tol {
            converged = true;
            termination = "converged".to_string();
            break;
        }

        // Barrier subproblem optimality: tighten mu when solved well enough.
        let e_mu = (dual_inf / sd).max(prim_inf).max(comp_mu / sd);
        if e_mu <= KAPPA_EPS * mu && mu > MU_MIN {
            mu = (0.2 * mu).min(mu.powf(1.5)).max(MU_MIN);
            continue;
        }

        iterations += 1;

        // --- assemble and factor the KKT system ---
        for (k, &j) in eq_rows.iter().enumerate() {
            lambda_full[j] = lam_eq[k];
        }
        for (k, &j) in in_rows.iter().enumerate() {
            lambda_full[j] = lam_in[k];
        }
        problem.lagrangian_hessian(&x, 1.0, &lambda_full, &mut hess);

        let mut sigma_x = vec![0.0; nx];
        for i in 0..nx {
            if pinned[i] {
                continue;
            }
            if xb[i].has_lower() {
                sigma_x[i] += zxl[i] / (x[i] - xb[i].lower);
            }
            if xb[i].has_upper() {
                sigma_x[i] += zxu[i] / (xb[i].upper - x[i]);
            }
        }
        let mut sigma_s = vec![0.0; mi];
        for k in 0..mi {
            if sb[k].has_lower() {
                sigma_s[k] += zsl[k] / (s[k] - sb[k].lower);
            }
            if sb[k].has_upper() {
                sigma_s[k] += zsu[k] / (sb[k].upper - s[k]);
            }
            // Rows with at least one finite side always have sigma > 0.
            sigma_s[k] = sigma_s[k].max(1e-300);
        }

        // Barrier-gradient residuals.
        let mut rtx = vec![0.0; nx];
        for i in 0..nx {
            if pinned[i] {
                continue;
            }
            let mut v = r_dual[i];
            if xb[i].has_lower() {
                v -= mu / (x[i] - xb[i].lower);
            }
            if xb[i].has_upper() {
                v += mu / (xb[i].upper - x[i]);
            }
            // r_dual already contains grad + J^T lam; remove the z terms it
            // never had: rtx is grad + J^T lam - mu/(x-l) + mu/(u-x).
            rtx[i] = v;
        }
        let mut rts = vec![0.0; mi];
        for k in 0..mi {
            let mut v = lam_in[k];
            if sb[k].has_lower() {
                v += mu / (s[k] - sb[k].lower);
            }
            if sb[k].has_upper() {
                v -= mu / (sb[k].upper - s[k]);
            }
            rts[k] = v;
        }

        let build_kkt = |kkt: &mut [f64], delta: f64| {
            kkt.fill(0.0);
            for i in 0..nx {
                if pinned[i] {
                    kkt[i * nkkt + i] = 1.0;
                    continue;
                }
                for j in 0..nx {
                    if !pinned[j] {
                        kkt[i * nkkt + j] = hess[(i, j)];
                    }
                }
                kkt[i * nkkt + i] += sigma_x[i] + delta;
            }
            for (idx, &(r, c)) in sparsity.iter().enumerate() {
                if pinned[c] {
                    continue;
                }
                let (is_eq, k) = row_kind[r];
                let rr = if is_eq { nx + k } else { nx + me + k };
                kkt[rr * nkkt + c] += jac[idx];
                kkt[c * nkkt + rr] += jac[idx];
            }
            for k in 0..me {
                let rr = nx + k;
                kkt[rr * nkkt + rr] = -GAMMA_DUAL - delta * 1e-4;
            }
            for k in 0..mi {
                let rr = nx + me + k;
                kkt[rr * nkkt + rr] = -1.0 / sigma_s[k] - GAMMA_DUAL - delta * 1e-4;
            }
        };

        rhs[..nx].fill(0.0);
        for i in 0..nx {
            rhs[i] = if pinned[i] { 0.0 } else { -rtx[i] };
        }
        for (k, &j) in eq_rows.iter().enumerate() {
            rhs[nx + k] = -(cvals[j] - cl[j]);
        }
        for (k, &j) in in_rows.iter().enumerate() {
            rhs[nx + me + k] = -(cvals[j] - s[k]) + rts[k] / sigma_s[k];
        }

        let mut delta = if delta_last > 0.0 { (delta_last / 3.0).max(DELTA_MIN) } else { 0.0 };
        let mut factor = None;
        for _ in 0..40 {
            build_kkt(&mut kkt, delta);
            if let Some((f, inertia)) = LdlFactor::factor(&kkt, nkkt) {
                if inertia.positive == nx && inertia.negative == me + mi && inertia.zero == 0 {
                    factor = Some(f);
                    break;
                }
            }
            delta = if delta == 0.0 { DELTA_MIN.max(delta_last / 3.0) } else { delta * 8.0 };
            if delta > DELTA_MAX {
                break;
            }
        }
        let Some(factor) = factor else {
            termination = "kkt_factorization_failure".to_string();
            break;
        };
        delta_last = delta;

        let mut step = rhs.clone();
        factor.solve(&mut step);
        if step.iter().any(|v| !v.is_finite()) {
            termination = "kkt_solve_failure".to_string();
            break;
        }
        let dx = &step[..nx];
        let dlam_eq = &step[nx..nx + me];
        let dlam_in = &step[nx + me..];

        // Slack and bound-dual steps.
        let mut ds = vec![0.0; mi];
        for k in 0..mi {
            ds[k] = (dlam_in[k] + rts[k]) / sigma_s[k];
        }
        let mut dzxl = vec![0.0; nx];
        let mut dzxu = vec![0.0; nx];
        for i in 0..nx {
            if pinned[i] {
                continue;
            }
            if xb[i].has_lower() {
                let dist = x[i] - xb[i].lower;
                dzxl[i] = mu / dist - zxl[i] - zxl[i] / dist * dx[i];
            }
            if xb[i].has_upper() {
                let dist = xb[i].upper - x[i];
                dzxu[i] = mu / dist - zxu[i] + zxu[i] / dist * dx[i];
            }
        }
        let mut dzsl = vec![0.0; mi];
        let mut dzsu = vec![0.0; mi];
        for k in 0..mi {
            if sb[k].has_lower() {
                let dist = s[k] - sb[k].lower;
                dzsl[k] = mu / dist - zsl[k] - zsl[k] / dist * ds[k];
            }
            if sb[k].has_upper() {
                let dist = sb[k].upper - s[k];
                dzsu[k] = mu / dist - zsu[k] + zsu[k] / dist * ds[k];
            }
        }

        // Fraction-to-boundary step limits.
        let tau = TAU_MIN.max(1.0 - mu);
        let mut alpha_pri_max: f64 = 1.0;
        for i in 0..nx {
            if pinned[i] {
                continue;
            }
            if xb[i].has_lower() && dx[i] < 0.0 {
                alpha_pri_max = alpha_pri_max.min(-tau * (x[i] - xb[i].lower) / dx[i]);
            }
            if xb[i].has_upper() && dx[i] > 0.0 {
                alpha_pri_max = alpha_pri_max.min(tau * (xb[i].upper - x[i]) / dx[i]);
            }
        }
        for k in 0..mi {
            if sb[k].has_lower() && ds[k] < 0.0 {
                alpha_pri_max = alpha_pri_max.min(-tau * (s[k] - sb[k].lower) / ds[k]);
            }
            if sb[k].has_upper() && ds[k] > 0.0 {
                alpha_pri_max = alpha_pri_max.min(tau * (sb[k].upper - s[k]) / ds[k]);
            }
        }
        let mut alpha_dual: f64 = 1.0;
        for (z, dz) in zxl
            .iter()
            .zip(&dzxl)
            .chain(zxu.iter().zip(&dzxu))
            .chain(zsl.iter().zip(&dzsl))
            .chain(zsu.iter().zip(&dzsu))
        {
            if *z > 0.0 && *dz < 0.0 {
                alpha_dual = alpha_dual.min(-tau * z / dz);
            }
        }

        // --- merit line search ---
        let theta0 = theta(&cvals, &s);
        let phi0 = barrier(fval, &x, &s, mu);
        // Barrier-gradient directional derivative.
        let mut dphi = 0.0;
        for i in 0..nx {
            if pinned[i] {
                continue;
            }
            let mut gb = grad[i];
            if xb[i].has_lower() {
                gb -= mu / (x[i] - xb[i].lower);
            }
            if xb[i].has_upper() {
                gb += mu / (xb[i].upper - x[i]);
            }
            dphi += gb * dx[i];
        }
        for k in 0..mi {
            let mut gb = 0.0;
            if sb[k].has_lower() {
                gb -= mu / (s[k] - sb[k].lower);
            }
            if sb[k].has_upper() {
                gb += mu / (sb[k].upper - s[k]);
            }
            dphi += gb * ds[k];
        }
        if theta0 > 1e-14 {
            let lam_norm = lam_eq
                .iter()
                .zip(dlam_eq)
                .chain(lam_in.iter().zip(dlam_in))
                .fold(0.0f64, |a, (l, dl)| a.max((l + dl).abs()));
            let nu_req = (dphi.max(0.0) / (0.5 * theta0)).max(1.2 * lam_norm + 1.0);
            nu_merit = nu_merit.max(nu_req.min(1e10));
        }
        let merit0 = phi0 + nu_merit * theta0;
        let dmerit = dphi - nu_merit * theta0;

        let mut alpha = alpha_pri_max;
        let mut accepted = false;
        let mut f_trial = fval;
        let mut x_trial = x.clone();
        let mut s_trial = s.clone();
        for _ in 0..36 {
            for i in 0..nx {
                x_trial[i] = if pinned[i] { x[i] } else { x[i] + alpha * dx[i] };
            }
            for k in 0..mi {
                s_trial[k] = s[k] + alpha * ds[k];
            }
            f_trial = problem.objective(&x_trial);
            problem.constraints(&x_trial, &mut c_trial);
            let finite = f_trial.is_finite() && c_trial.iter().all(|v| v.is_finite());
            if finite {
                let merit_trial =
                    barrier(f_trial, &x_trial, &s_trial, mu) + nu_merit * theta(&c_trial, &s_trial);
                // Small slack absorbs floating-point noise near stationarity.
                let target = merit0 + 1e-4 * alpha * dmerit.min(0.0) + 1e-14 * merit0.abs().max(1.0);
                if merit_trial <= target {
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
            if alpha < 1e-14 {
                break;
            }
        }

        if !accepted {
            // Ask for a more damped direction before giving up.
            if delta_last < 1e-4 {
                delta_last = delta_last.max(1e-6) * 100.0;
                continue;
            }
            termination = "line_search_failure".to_string();
            break;
        }

        x.copy_from_slice(&x_trial);
        s.copy_from_slice(&s_trial);
        fval = f_trial;
        cvals.copy_from_slice(&c_trial);
        problem.objective_grad(&x, &mut grad);
        problem.jacobian_values(&x, &mut jac);
        if grad.iter().chain(jac.iter()).any(|v| !v.is_finite()) {
            termination = "non_finite_evaluation".to_string();
            break;
        }
        for k in 0..me {
            lam_eq[k] += alpha * dlam_eq[k];
        }
        for k in 0..mi {
            lam_in[k] += alpha * dlam_in[k];
        }
        for i in 0..nx {
            if pinned[i] {
                continue;
            }
            if xb[i].has_lower() {
                zxl[i] += alpha_dual * dzxl[i];
                let dist = x[i] - xb[i].lower;
                zxl[i] = zxl[i].clamp(mu / (KAPPA_SIGMA * dist), KAPPA_SIGMA * mu / dist);
            }
            if xb[i].has_upper() {
                zxu[i] += alpha_dual * dzxu[i];
                let dist = xb[i].upper - x[i];
                zxu[i] = zxu[i].clamp(mu / (KAPPA_SIGMA * dist), KAPPA_SIGMA * mu / dist);
            }
        }
        for k in 0..mi {
            if sb[k].has_lower() {
                zsl[k] += alpha_dual * dzsl[k];
                let dist = s[k] - sb[k].lower;
                zsl[k] = zsl[k].clamp(mu / (KAPPA_SIGMA * dist), KAPPA_SIGMA * mu / dist);
            }
            if sb[k].has_upper() {
                zsu[k] += alpha_dual * dzsu[k];
                let dist = sb[k].upper - s[k];
                zsu[k] = zsu[k].clamp(mu / (KAPPA_SIGMA * dist), KAPPA_SIGMA * mu / dist);
            }
        }
    }

    let final_viol = violation(&cvals);
    let (out_x, out_viol, out_obj) = if converged || final_viol <= best_viol {
        (x, final_viol, fval)
    } else {
        (best_x, best_viol, best_obj)
    };

    Ok(IpmOutcome {
        x: out_x,
        converged,
        iterations,
        constraint_violation: out_viol,
        dual_infeasibility: if last_dual_inf.is_finite() { last_dual_inf } else { -1.0 },
        objective: out_obj,
        termination,
    })
}
