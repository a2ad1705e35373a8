//! Nonlinear program solving to the gait tolerance, with a deterministic
//! multi-start recovery policy and a finite-difference gradient checker.

mod ipm;
mod ldl;

use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transcription::{Nlp, Trajectory};
use ipm::{solve_ipm, IpmOptions};

/// The problem surface the interior-point core consumes. Implemented by the
/// transcription's [`Nlp`] and by test fixtures.
pub trait NlpProblem {
    fn num_vars(&self) -> usize;
    fn num_constraints(&self) -> usize;
    /// Variable bounds; equal lower and upper pin a variable.
    fn var_bounds(&self) -> (&[f64], &[f64]);
    /// Constraint-row bounds; equal lower and upper mark an equality.
    fn constraint_bounds(&self) -> (&[f64], &[f64]);
    fn objective(&self, x: &[f64]) -> f64;
    fn objective_grad(&self, x: &[f64], grad: &mut [f64]);
    fn constraints(&self, x: &[f64], out: &mut [f64]);
    fn jacobian_sparsity(&self) -> &[(usize, usize)];
    fn jacobian_values(&self, x: &[f64], out: &mut [f64]);
    /// Hessian of sigma * f + lambda . c, written into a dense matrix.
    fn lagrangian_hessian(&self, x: &[f64], sigma: f64, lambda: &[f64], out: &mut DMatrix<f64>);
}

impl NlpProblem for Nlp {
    fn num_vars(&self) -> usize {
        Nlp::num_vars(self)
    }
    fn num_constraints(&self) -> usize {
        Nlp::num_constraints(self)
    }
    fn var_bounds(&self) -> (&[f64], &[f64]) {
        Nlp::var_bounds(self)
    }
    fn constraint_bounds(&self) -> (&[f64], &[f64]) {
        Nlp::constraint_bounds(self)
    }
    fn objective(&self, x: &[f64]) -> f64 {
        Nlp::objective(self, x)
    }
    fn objective_grad(&self, x: &[f64], grad: &mut [f64]) {
        Nlp::objective_grad(self, x, grad)
    }
    fn constraints(&self, x: &[f64], out: &mut [f64]) {
        Nlp::constraints(self, x, out)
    }
    fn jacobian_sparsity(&self) -> &[(usize, usize)] {
        Nlp::jacobian_sparsity(self)
    }
    fn jacobian_values(&self, x: &[f64], out: &mut [f64]) {
        Nlp::jacobian_values(self, x, out)
    }
    fn lagrangian_hessian(&self, x: &[f64], sigma: f64, lambda: &[f64], out: &mut DMatrix<f64>) {
        Nlp::lagrangian_hessian(self, x, sigma, lambda, out)
    }
}

/// Solver configuration, loadable from the shared configuration file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// Absolute constraint-violation tolerance.
    pub tol: f64,
    /// Scaled dual-infeasibility tolerance.
    pub dual_tol: f64,
    /// Scaled complementarity tolerance.
    pub comp_tol: f64,
    pub max_iterations: usize,
    /// Retries with a perturbed initial guess after a failed solve.
    pub multi_start: usize,
    /// Uniform perturbation magnitude for the retries.
    pub perturbation: f64,
    pub seed: u64,
    /// Initial barrier parameter for cold starts.
    pub mu_init: f64,
    /// Initial barrier parameter when warm-starting from a solution.
    pub mu_warm: f64,
    /// Optional wall-clock cap per solve, seconds. Off by default so runs
    /// stay deterministic.
    pub max_seconds: Option<f64>,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tol: 1e-9,
            dual_tol: 1e-6,
            comp_tol: 1e-6,
            max_iterations: 3000,
            multi_start: 5,
            perturbation: 0.05,
            seed: 0,
            mu_init: 1e-2,
            mu_warm: 1e-4,
            max_seconds: None,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Domain(format!("tolerance must be positive, got {}", self.tol)));
        }
        if self.max_iterations == 0 {
            return Err(Error::Domain("iteration cap must be positive".into()));
        }
        Ok(())
    }
}

/// Outcome of one solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub converged: bool,
    /// Max absolute violation over all constraint rows.
    pub constraint_violation: f64,
    /// Energy required by the solution trajectory (the objective's numerator,
    /// identical to the post-hoc trajectory energy).
    pub objective_value: f64,
    /// Cost of transport of the solution.
    pub cost_of_transport: f64,
    /// Cycle distance of the solution.
    pub stride_distance: f64,
    pub iterations: usize,
    pub wall_time: f64,
    pub termination_reason: String,
    pub dual_infeasibility: f64,
    /// Which start (0 = given guess) produced the reported iterate.
    pub attempt: usize,
}

/// Solve with default settings at the given constraint tolerance.
pub fn solve(nlp: &Nlp, guess: &[f64], tol: f64) -> Result<(Trajectory, SolveReport)> {
    let settings = SolverSettings { tol, ..Default::default() };
    solve_with(nlp, guess, &settings, false)
}

/// Solve with explicit settings. `warm` selects the warm-start barrier
/// initialization; pass it when the guess comes from a neighboring solution.
pub fn solve_with(
    nlp: &Nlp,
    guess: &[f64],
    settings: &SolverSettings,
    warm: bool,
) -> Result<(Trajectory, SolveReport)> {
    settings.validate()?;
    if guess.len() != nlp.num_vars() {
        return Err(Error::DimensionMismatch { expected: nlp.num_vars(), got: guess.len() });
    }
    let start = std::time::Instant::now();
    let opts = IpmOptions {
        tol: settings.tol,
        dual_tol: settings.dual_tol,
        comp_tol: settings.comp_tol,
        max_iter: settings.max_iterations,
        mu_init: if warm { settings.mu_warm } else { settings.mu_init },
        max_seconds: settings.max_seconds,
    };
    let (xl, xu) = nlp.var_bounds();

    let mut best: Option<(ipm::IpmOutcome, usize)> = None;
    let mut last_err = None;
    let mut total_iters = 0;
    for attempt in 0..=settings.multi_start {
        let attempt_guess = if attempt == 0 {
            guess.to_vec()
        } else {
            // Deterministic perturbation of the original guess.
            let mut rng = ChaCha8Rng::seed_from_u64(settings.seed.wrapping_add(attempt as u64));
            guess
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    if xl[i] == xu[i] {
                        v
                    } else {
                        let p = v + rng.gen_range(-settings.perturbation..settings.perturbation);
                        p.clamp(xl[i], xu[i])
                    }
                })
                .collect()
        };
        let opts = IpmOptions {
            // Perturbed restarts are effectively cold.
            mu_init: if attempt == 0 { opts.mu_init } else { settings.mu_init },
            max_seconds: opts.max_seconds,
            ..opts
        };
        match solve_ipm(nlp, &attempt_guess, &opts) {
            Ok(out) => {
                total_iters += out.iterations;
                let done = out.converged;
                let better = match &best {
                    None => true,
                    Some((b, _)) => {
                        out.constraint_violation < b.constraint_violation
                            || (out.constraint_violation == b.constraint_violation
                                && out.objective < b.objective)
                    }
                };
                if better {
                    best = Some((out, attempt));
                }
                if done {
                    break;
                }
            }
            Err(e) => last_err = Some(e),
        }
    }

    let Some((outcome, attempt)) = best else {
        return Err(last_err.unwrap_or_else(|| Error::Domain("all solve attempts failed".into())));
    };

    let trajectory = nlp.decode(&outcome.x);
    let energy = nlp.energy(&outcome.x);
    let distance = nlp.distance(&outcome.x);
    let report = SolveReport {
        converged: outcome.converged,
        constraint_violation: outcome.constraint_violation,
        objective_value: energy,
        cost_of_transport: energy / (nlp.params().m * nlp.params().g * distance),
        stride_distance: distance,
        iterations: total_iters,
        wall_time: start.elapsed().as_secs_f64(),
        termination_reason: outcome.termination,
        dual_infeasibility: outcome.dual_infeasibility,
        attempt,
    };
    Ok((trajectory, report))
}

/// Compare analytic first derivatives against central finite differences at
/// `point`, returning the worst relative error over the objective gradient
/// and every declared Jacobian nonzero. Differences fall back to one-sided
/// at variable bounds.
pub fn check_gradients(problem: &dyn NlpProblem, point: &[f64]) -> Result<f64> {
    let n = problem.num_vars();
    let m = problem.num_constraints();
    if point.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: point.len() });
    }
    let (xl, xu) = problem.var_bounds();

    let mut grad = vec![0.0; n];
    problem.objective_grad(point, &mut grad);
    let sparsity = problem.jacobian_sparsity().to_vec();
    let mut jac = vec![0.0; sparsity.len()];
    problem.jacobian_values(point, &mut jac);
    let mut dense = vec![0.0; m * n];
    for (&(r, c), &v) in sparsity.iter().zip(&jac) {
        dense[r * n + c] += v;
    }

    let step = 1e-6;
    let mut worst: f64 = 0.0;
    let mut cp = vec![0.0; m];
    let mut cm = vec![0.0; m];
    let mut xp = point.to_vec();
    let mut xm = point.to_vec();
    for col in 0..n {
        if xl[col] == xu[col] {
            continue;
        }
        // One-sided differencing when a bound is within reach of the step.
        let room_up = xu[col] - point[col];
        let room_down = point[col] - xl[col];
        let (hp, hm) = if room_up < step {
            (0.0, step)
        } else if room_down < step {
            (step, 0.0)
        } else {
            (step, step)
        };
        xp[col] = point[col] + hp;
        xm[col] = point[col] - hm;
        let denom = hp + hm;
        let fp = problem.objective(&xp);
        let fm = problem.objective(&xm);
        problem.constraints(&xp, &mut cp);
        problem.constraints(&xm, &mut cm);
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFinite { context: "objective".into(), index: col });
        }
        let fd = (fp - fm) / denom;
        let err = (grad[col] - fd).abs() / grad[col].abs().max(fd.abs()).max(1.0);
        worst = worst.max(err);
        for row in 0..m {
            if !cp[row].is_finite() || !cm[row].is_finite() {
                return Err(Error::NonFinite { context: "constraint".into(), index: row });
            }
            let fd = (cp[row] - cm[row]) / denom;
            let a = dense[row * n + col];
            if a == 0.0 && fd == 0.0 {
                continue;
            }
            let err = (a - fd).abs() / a.abs().max(fd.abs()).max(1.0);
            worst = worst.max(err);
        }
        xp[col] = point[col];
        xm[col] = point[col];
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The classic four-variable benchmark: minimize x0*x3*(x0+x1+x2) + x2
    /// subject to x0*x1*x2*x3 >= 25, sum of squares = 40, 1 <= x <= 5.
    struct Hs071 {
        xl: Vec<f64>,
        xu: Vec<f64>,
        cl: Vec<f64>,
        cu: Vec<f64>,
        sparsity: Vec<(usize, usize)>,
    }

    impl Hs071 {
        fn new() -> Self {
            Hs071 {
                xl: vec![1.0; 4],
                xu: vec![5.0; 4],
                cl: vec![25.0, 40.0],
                cu: vec![f64::INFINITY, 40.0],
                sparsity: (0..2).flat_map(|r| (0..4).map(move |c| (r, c))).collect(),
            }
        }
    }

    impl NlpProblem for Hs071 {
        fn num_vars(&self) -> usize {
            4
        }
        fn num_constraints(&self) -> usize {
            2
        }
        fn var_bounds(&self) -> (&[f64], &[f64]) {
            (&self.xl, &self.xu)
        }
        fn constraint_bounds(&self) -> (&[f64], &[f64]) {
            (&self.cl, &self.cu)
        }
        fn objective(&self, x: &[f64]) -> f64 {
            x[0] * x[3] * (x[0] + x[1] + x[2]) + x[2]
        }
        fn objective_grad(&self, x: &[f64], g: &mut [f64]) {
            g[0] = x[3] * (2.0 * x[0] + x[1] + x[2]);
            g[1] = x[0] * x[3];
            g[2] = x[0] * x[3] + 1.0;
            g[3] = x[0] * (x[0] + x[1] + x[2]);
        }
        fn constraints(&self, x: &[f64], out: &mut [f64]) {
            out[0] = x[0] * x[1] * x[2] * x[3];
            out[1] = x[0] * x[0] + x[1] * x[1] + x[2] * x[2] + x[3] * x[3];
        }
        fn jacobian_sparsity(&self) -> &[(usize, usize)] {
            &self.sparsity
        }
        fn jacobian_values(&self, x: &[f64], out: &mut [f64]) {
            out[0] = x[1] * x[2] * x[3];
            out[1] = x[0] * x[2] * x[3];
            out[2] = x[0] * x[1] * x[3];
            out[3] = x[0] * x[1] * x[2];
            out[4] = 2.0 * x[0];
            out[5] = 2.0 * x[1];
            out[6] = 2.0 * x[2];
            out[7] = 2.0 * x[3];
        }
        fn lagrangian_hessian(&self, x: &[f64], sigma: f64, lam: &[f64], out: &mut DMatrix<f64>) {
            out.fill(0.0);
            out[(0, 0)] = sigma * 2.0 * x[3] + lam[1] * 2.0;
            out[(0, 1)] = sigma * x[3] + lam[0] * x[2] * x[3];
            out[(0, 2)] = sigma * x[3] + lam[0] * x[1] * x[3];
            out[(0, 3)] = sigma * (2.0 * x[0] + x[1] + x[2]) + lam[0] * x[1] * x[2];
            out[(1, 1)] = lam[1] * 2.0;
            out[(1, 2)] = lam[0] * x[0] * x[3];
            out[(1, 3)] = sigma * x[0] + lam[0] * x[0] * x[2];
            out[(2, 2)] = lam[1] * 2.0;
            out[(2, 3)] = sigma * x[0] + lam[0] * x[0] * x[1];
            out[(3, 3)] = lam[1] * 2.0;
            for i in 0..4 {
                for j in 0..i {
                    out[(i, j)] = out[(j, i)];
                }
            }
        }
    }

    #[test]
    fn solves_hs071_to_reference_solution() {
        let p = Hs071::new();
        let opts = IpmOptions { tol: 1e-10, ..Default::default() };
        let out = solve_ipm(&p, &[1.0, 5.0, 5.0, 1.0], &opts).unwrap();
        assert!(out.converged, "termination: {}", out.termination);
        let expected = [1.000000, 4.742999, 3.821150, 1.379408];
        for (a, b) in out.x.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
        assert!((out.objective - 17.0140173).abs() < 1e-5);
        assert!(out.constraint_violation <= 1e-10);
    }

    #[test]
    fn gradient_check_passes_on_exact_derivatives() {
        let p = Hs071::new();
        let worst = check_gradients(&p, &[1.1, 4.9, 4.9, 1.1]).unwrap();
        assert!(worst < 1e-7, "worst {worst}");
    }

    #[test]
    fn gradient_check_is_one_sided_at_bounds() {
        let p = Hs071::new();
        // x0 exactly at its lower bound.
        let worst = check_gradients(&p, &[1.0, 4.0, 4.0, 2.0]).unwrap();
        assert!(worst.is_finite());
        assert!(worst < 1e-6, "worst {worst}");
    }

    /// Wrapper that corrupts one Jacobian value, for mutation testing.
    struct Corrupted<'a>(&'a Hs071);

    impl NlpProblem for Corrupted<'_> {
        fn num_vars(&self) -> usize {
            self.0.num_vars()
        }
        fn num_constraints(&self) -> usize {
            self.0.num_constraints()
        }
        fn var_bounds(&self) -> (&[f64], &[f64]) {
            self.0.var_bounds()
        }
        fn constraint_bounds(&self) -> (&[f64], &[f64]) {
            self.0.constraint_bounds()
        }
        fn objective(&self, x: &[f64]) -> f64 {
            self.0.objective(x)
        }
        fn objective_grad(&self, x: &[f64], g: &mut [f64]) {
            self.0.objective_grad(x, g)
        }
        fn constraints(&self, x: &[f64], out: &mut [f64]) {
            self.0.constraints(x, out)
        }
        fn jacobian_sparsity(&self) -> &[(usize, usize)] {
            self.0.jacobian_sparsity()
        }
        fn jacobian_values(&self, x: &[f64], out: &mut [f64]) {
            self.0.jacobian_values(x, out);
            out[3] += 0.05;
        }
        fn lagrangian_hessian(&self, x: &[f64], s: f64, l: &[f64], out: &mut DMatrix<f64>) {
            self.0.lagrangian_hessian(x, s, l, out)
        }
    }

    #[test]
    fn gradient_check_detects_seeded_bug() {
        let base = Hs071::new();
        let p = Corrupted(&base);
        let worst = check_gradients(&p, &[1.1, 4.9, 4.9, 1.1]).unwrap();
        assert!(worst > 1e-4, "seeded bug not detected: {worst}");
    }
}
