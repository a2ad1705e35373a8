//! Ankle-utility experiments: matched solves with and without ankle
//! actuation, one-dimensional apex-height sweeps with warm-start
//! continuation, and two-dimensional parameter grids.
//!
//! Failed solves are recorded as missing values, never fabricated. Output
//! rows are gathered in a deterministic order regardless of worker
//! scheduling, so identical runs produce byte-identical CSV files.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::AppConfig;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::objective::{ankle_utility, CostParams};
use crate::solver::{solve_with, SolveReport, SolverSettings};
use crate::transcription::{build_nlp, initial_guess, GaitTask, Trajectory, TranscriptionConfig};

/// A parameter that can be swept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    ApexHeight,
    Alpha,
    ApexVelocity,
    Damping,
}

impl SweepParam {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::ApexHeight => "apex_height",
            SweepParam::Alpha => "alpha",
            SweepParam::ApexVelocity => "apex_velocity",
            SweepParam::Damping => "damping",
        }
    }
}

/// One swept axis: the parameter and its strictly monotone value list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAxis {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

impl SweepAxis {
    pub fn linspace(param: SweepParam, lo: f64, hi: f64, points: usize) -> Result<SweepAxis> {
        if points < 1 || !(lo.is_finite() && hi.is_finite()) || (points > 1 && !(hi > lo)) {
            return Err(Error::Domain(format!(
                "invalid axis range [{lo}, {hi}] with {points} points"
            )));
        }
        let values = if points == 1 {
            vec![lo]
        } else {
            (0..points)
                .map(|i| lo + (hi - lo) * i as f64 / (points as f64 - 1.0))
                .collect()
        };
        Ok(SweepAxis { param, values })
    }

    fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Domain(format!("axis {} has no values", self.param.name())));
        }
        if self.values.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain(format!(
                "axis {} values must be strictly increasing",
                self.param.name()
            )));
        }
        Ok(())
    }
}

/// Swept axes plus the fixed values of everything not swept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axes: Vec<SweepAxis>,
    pub base_apex_height: f64,
    pub base_apex_velocity: f64,
    pub base_alpha: f64,
    pub base_damping: f64,
    /// Warm-start each solve from its apex-height neighbor.
    pub warm_start: bool,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() || self.axes.len() > 2 {
            return Err(Error::Domain(format!("expected 1 or 2 axes, got {}", self.axes.len())));
        }
        for axis in &self.axes {
            axis.validate()?;
        }
        if self.axes.len() == 2 {
            if !self.axes.iter().any(|a| a.param == SweepParam::ApexHeight) {
                return Err(Error::Domain("a 2-d grid must sweep apex_height on one axis".into()));
            }
            if self.axes[0].param == self.axes[1].param {
                return Err(Error::Domain("grid axes must differ".into()));
            }
        }
        Ok(())
    }

    fn apply(&self, param: SweepParam, value: f64, task: &mut GaitTask, params: &mut ModelParams, cost: &mut CostParams) {
        match param {
            SweepParam::ApexHeight => task.apex_height = value,
            SweepParam::ApexVelocity => task.apex_velocity = value,
            SweepParam::Alpha => cost.alpha = value,
            SweepParam::Damping => params.c = value,
        }
    }

    /// Resolve the task, model and cost parameters at one grid point.
    fn resolve(
        &self,
        base_params: &ModelParams,
        base_cost: &CostParams,
        assignments: &[(SweepParam, f64)],
    ) -> (GaitTask, ModelParams, CostParams) {
        let mut task = GaitTask::new(self.base_apex_height, self.base_apex_velocity, true);
        let mut params = *base_params;
        let mut cost = *base_cost;
        params.c = self.base_damping;
        cost.alpha = self.base_alpha;
        for &(p, v) in assignments {
            self.apply(p, v, &mut task, &mut params, &mut cost);
        }
        (task, params, cost)
    }
}

/// Paired solves at one parameter point and the resulting ankle utility.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UtilityPoint {
    pub apex_height: f64,
    pub apex_velocity: f64,
    pub alpha: f64,
    pub damping: f64,
    pub cot_ankle: Option<f64>,
    pub cot_no_ankle: Option<f64>,
    /// Percent decrease in cost of transport from ankle actuation.
    pub utility: Option<f64>,
    pub report_ankle: SolveReport,
    pub report_no_ankle: SolveReport,
    pub trajectory_ankle: Option<Trajectory>,
    pub trajectory_no_ankle: Option<Trajectory>,
}

/// Warm-start vectors carried along a sweep chain.
#[derive(Default, Clone)]
struct WarmState {
    ankle: Option<Vec<f64>>,
    no_ankle: Option<Vec<f64>>,
}

/// Solve the matched ankle and ankle-free problems for one task.
pub fn utility_at(
    task: &GaitTask,
    params: &ModelParams,
    cost: &CostParams,
    config: &TranscriptionConfig,
    settings: &SolverSettings,
) -> Result<UtilityPoint> {
    utility_at_warm(task, params, cost, config, settings, &mut WarmState::default())
}

fn utility_at_warm(
    task: &GaitTask,
    params: &ModelParams,
    cost: &CostParams,
    config: &TranscriptionConfig,
    settings: &SolverSettings,
    warm: &mut WarmState,
) -> Result<UtilityPoint> {
    // Ankle-free problem first: its optimum is feasible for the ankle
    // problem and serves as a fallback seed there.
    let task_n = task.with_ankle(false);
    let nlp_n = build_nlp(&task_n, params, cost, config)?;
    let (guess_n, warm_n) = match &warm.no_ankle {
        Some(v) => (v.clone(), true),
        None => (initial_guess(&task_n, params, config), false),
    };
    let (mut traj_n, mut report_n) = solve_with(&nlp_n, &guess_n, settings, warm_n)?;
    if !report_n.converged && warm_n {
        // Fall back to a cold start when continuation fails.
        let cold = initial_guess(&task_n, params, config);
        let (t, r) = solve_with(&nlp_n, &cold, settings, false)?;
        if r.converged || r.constraint_violation < report_n.constraint_violation {
            traj_n = t;
            report_n = r;
        }
    }

    let task_a = task.with_ankle(true);
    let nlp_a = build_nlp(&task_a, params, cost, config)?;
    let (guess_a, warm_a) = match &warm.ankle {
        Some(v) => (v.clone(), true),
        None => {
            // Seed the ankle problem from the ankle-free optimum when there
            // is one; the embedded point is feasible by construction.
            if report_n.converged {
                (nlp_a.encode(&traj_n)?, true)
            } else {
                (initial_guess(&task_a, params, config), false)
            }
        }
    };
    let (mut traj_a, mut report_a) = solve_with(&nlp_a, &guess_a, settings, warm_a)?;
    if !report_a.converged && warm_a {
        let cold = initial_guess(&task_a, params, config);
        let (t, r) = solve_with(&nlp_a, &cold, settings, false)?;
        if r.converged || r.constraint_violation < report_a.constraint_violation {
            traj_a = t;
            report_a = r;
        }
    }

    // The ankle feasible set contains the ankle-free one, so a converged
    // ankle solve should never be worse. If it is, it found a poorer local
    // optimum: re-solve from the embedded ankle-free solution.
    if report_a.converged
        && report_n.converged
        && report_a.cost_of_transport > report_n.cost_of_transport
    {
        let seed = nlp_a.encode(&traj_n)?;
        if let Ok((t, r)) = solve_with(&nlp_a, &seed, settings, true) {
            if r.converged && r.cost_of_transport < report_a.cost_of_transport {
                traj_a = t;
                report_a = r;
            }
        }
    }
    // Symmetrically, an implausibly large utility usually means the
    // ankle-free solve is stuck; re-seed it from the ankle solution.
    if report_a.converged
        && report_n.converged
        && report_n.cost_of_transport > 1.15 * report_a.cost_of_transport
    {
        let seed = nlp_n.encode(&traj_a)?;
        if let Ok((t, r)) = solve_with(&nlp_n, &seed, settings, true) {
            if r.converged && r.cost_of_transport < report_n.cost_of_transport {
                traj_n = t;
                report_n = r;
            }
        }
    }

    if report_a.converged {
        warm.ankle = Some(nlp_a.encode(&traj_a)?);
    } else {
        warm.ankle = None;
    }
    if report_n.converged {
        warm.no_ankle = Some(nlp_n.encode(&traj_n)?);
    } else {
        warm.no_ankle = None;
    }

    let cot_a = report_a.converged.then_some(report_a.cost_of_transport);
    let cot_n = report_n.converged.then_some(report_n.cost_of_transport);
    let utility = match (cot_n, cot_a) {
        (Some(n), Some(a)) => Some(ankle_utility(n, a)?),
        _ => None,
    };

    // Soft sanity signal: low utility should coincide with low ankle usage.
    if let (Some(u), true) = (utility, report_a.converged) {
        let max_tau = traj_a.knot_controls.iter().fold(0.0f64, |m, c| m.max(c.tau.abs()));
        if u < 0.5 && max_tau > 1e-3 {
            log::info!(
                "flag for inspection: utility {u:.3}% but max |tau| = {max_tau:.2e} at apex_height {}",
                task.apex_height
            );
        }
    }

    Ok(UtilityPoint {
        apex_height: task.apex_height,
        apex_velocity: task.apex_velocity,
        alpha: cost.alpha,
        damping: params.c,
        cot_ankle: cot_a,
        cot_no_ankle: cot_n,
        utility,
        report_ankle: report_a,
        report_no_ankle: report_n,
        trajectory_ankle: Some(traj_a),
        trajectory_no_ankle: Some(traj_n),
    })
}

/// Run one warm-start chain over apex heights with everything else fixed.
fn apex_chain(
    spec: &SweepSpec,
    apex_values: &[f64],
    fixed: &[(SweepParam, f64)],
    params: &ModelParams,
    cost: &CostParams,
    config: &TranscriptionConfig,
    settings: &SolverSettings,
) -> Result<Vec<UtilityPoint>> {
    let mut warm = WarmState::default();
    let mut out = Vec::with_capacity(apex_values.len());
    for &apex in apex_values {
        let mut assignments = fixed.to_vec();
        assignments.push((SweepParam::ApexHeight, apex));
        let (task, p, c) = spec.resolve(params, cost, &assignments);
        if !spec.warm_start {
            warm = WarmState::default();
        }
        let point = utility_at_warm(&task, &p, &c, config, settings, &mut warm)?;
        out.push(point);
    }
    Ok(out)
}

/// One-dimensional apex-height sweep with warm-start continuation.
pub fn sweep_apex_height(
    values: &[f64],
    base: &SweepSpec,
    params: &ModelParams,
    cost: &CostParams,
    config: &TranscriptionConfig,
    settings: &SolverSettings,
) -> Result<Vec<UtilityPoint>> {
    let axis = SweepAxis { param: SweepParam::ApexHeight, values: values.to_vec() };
    axis.validate()?;
    apex_chain(base, values, &[], params, cost, config, settings)
}

/// Full-factorial two-dimensional grid. One axis must be apex height; the
/// warm-start chains run along it, and chains for different values of the
/// second axis are independent work items.
pub fn grid_2d(
    spec: &SweepSpec,
    params: &ModelParams,
    cost: &CostParams,
    config: &TranscriptionConfig,
    settings: &SolverSettings,
) -> Result<Vec<UtilityPoint>> {
    spec.validate()?;
    if spec.axes.len() == 1 {
        return apex_chain(
            spec,
            &spec.axes[0].values.clone(),
            &[],
            params,
            cost,
            config,
            settings,
        );
    }
    let apex_pos = spec
        .axes
        .iter()
        .position(|a| a.param == SweepParam::ApexHeight)
        .expect("validated: one axis is apex_height");
    let other_pos = 1 - apex_pos;
    let apex_axis = &spec.axes[apex_pos];
    let other_axis = &spec.axes[other_pos];

    let chains: Vec<Result<Vec<UtilityPoint>>> = other_axis
        .values
        .par_iter()
        .map(|&v| {
            apex_chain(
                spec,
                &apex_axis.values,
                &[(other_axis.param, v)],
                params,
                cost,
                config,
                settings,
            )
        })
        .collect();
    let mut grid = Vec::with_capacity(other_axis.values.len());
    for chain in chains {
        grid.push(chain?);
    }

    // Flatten in declared axis order: axes[0] outer, axes[1] inner.
    let mut out = Vec::with_capacity(apex_axis.values.len() * other_axis.values.len());
    if apex_pos == 0 {
        for ai in 0..apex_axis.values.len() {
            for chain in &grid {
                out.push(chain[ai].clone());
            }
        }
    } else {
        for chain in grid {
            out.extend(chain);
        }
    }
    Ok(out)
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v}"),
        None => String::new(),
    }
}

/// Render utility points as CSV: swept parameter columns, both costs of
/// transport, the utility, and the convergence flags. The resolved
/// configuration is embedded as comment lines for provenance.
pub fn csv_string(points: &[UtilityPoint], axes: &[SweepParam], config: &AppConfig) -> String {
    let mut out = String::new();
    let config_json = serde_json::to_string(config).expect("config serializes");
    out.push_str("# ankle utility experiment\n");
    out.push_str(&format!("# config: {config_json}\n"));
    let mut header: Vec<&str> = axes.iter().map(|p| p.name()).collect();
    header.extend(["cot_ankle", "cot_no_ankle", "utility", "ankle_converged", "no_ankle_converged"]);
    out.push_str(&header.join(","));
    out.push('\n');
    for p in points {
        let mut fields: Vec<String> = axes
            .iter()
            .map(|a| {
                let v = match a {
                    SweepParam::ApexHeight => p.apex_height,
                    SweepParam::Alpha => p.alpha,
                    SweepParam::ApexVelocity => p.apex_velocity,
                    SweepParam::Damping => p.damping,
                };
                format!("{v}")
            })
            .collect();
        fields.push(fmt_opt(p.cot_ankle));
        fields.push(fmt_opt(p.cot_no_ankle));
        fields.push(fmt_opt(p.utility));
        fields.push(p.report_ankle.converged.to_string());
        fields.push(p.report_no_ankle.converged.to_string());
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}
