//! Command-line entry point: solve single gaits, run utility sweeps and
//! grids, verify solutions against the integration oracle, and check
//! analytic derivatives.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use aaslip::config::AppConfig;
use aaslip::experiments::{
    csv_string, grid_2d, sweep_apex_height, SweepAxis, SweepParam, SweepSpec, UtilityPoint,
};
use aaslip::solver::{check_gradients, solve_with, SolveReport};
use aaslip::transcription::{build_nlp, initial_guess, GaitTask, Trajectory};
use aaslip::verify::{limit_cycle_report, LimitCycleReport};

const EXIT_USAGE: u8 = 2;
const EXIT_SOLVE: u8 = 3;
const EXIT_VERIFY: u8 = 4;

#[derive(Parser)]
#[command(name = "aaslip", about = "Ankle-actuated SLIP gait optimization", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Configuration file; unspecified keys use nominal values.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Constraint tolerance override.
    #[arg(long)]
    tol: Option<f64>,
    /// Knot-count override.
    #[arg(long)]
    knots: Option<usize>,
    /// Random seed for multi-start perturbations and gradient-check points.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for grid rows (0 = automatic).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Args, Clone)]
struct TaskOpts {
    #[arg(long, default_value_t = 1.0)]
    apex_height: f64,
    #[arg(long, default_value_t = 1.0)]
    apex_velocity: f64,
    /// Convex weight between mechanical power and thermal losses.
    #[arg(long)]
    alpha: Option<f64>,
    /// Leg damping override.
    #[arg(long)]
    damping: Option<f64>,
    /// Optimize the ankle-free model (torque variables omitted).
    #[arg(long, default_value_t = false)]
    no_ankle: bool,
    /// Keep the ankle layout but pin every torque variable to zero.
    #[arg(long, default_value_t = false, conflicts_with = "no_ankle")]
    pin_ankle: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis2 {
    Alpha,
    ApexVelocity,
    Damping,
}

impl Axis2 {
    fn param(self) -> SweepParam {
        match self {
            Axis2::Alpha => SweepParam::Alpha,
            Axis2::ApexVelocity => SweepParam::ApexVelocity,
            Axis2::Damping => SweepParam::Damping,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve one periodic-gait problem and write the solution file.
    Solve {
        #[command(flatten)]
        common: CommonOpts,
        #[command(flatten)]
        task: TaskOpts,
        /// Output solution file.
        #[arg(long, default_value = "solution.json")]
        out: PathBuf,
    },
    /// Sweep apex height and write ankle-utility CSV.
    Sweep {
        #[command(flatten)]
        common: CommonOpts,
        #[command(flatten)]
        task: TaskOpts,
        #[arg(long)]
        apex_min: Option<f64>,
        #[arg(long)]
        apex_max: Option<f64>,
        /// Number of sweep points.
        #[arg(long)]
        points: Option<usize>,
        #[arg(long, default_value = "sweep.csv")]
        out: PathBuf,
    },
    /// Two-dimensional apex-height x second-axis utility grid.
    Grid {
        #[command(flatten)]
        common: CommonOpts,
        #[command(flatten)]
        task: TaskOpts,
        /// Second swept axis.
        #[arg(long, value_enum)]
        axis2: Axis2,
        #[arg(long)]
        apex_min: Option<f64>,
        #[arg(long)]
        apex_max: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
        #[arg(long)]
        axis2_min: Option<f64>,
        #[arg(long)]
        axis2_max: Option<f64>,
        #[arg(long)]
        axis2_points: Option<usize>,
        #[arg(long, default_value = "grid.csv")]
        out: PathBuf,
    },
    /// Re-verify a solution file with the integration oracle.
    Verify {
        /// Solution file written by `solve`.
        #[arg(long, value_name = "PATH")]
        solution: PathBuf,
        /// Integration substeps per knot interval.
        #[arg(long, default_value_t = 100)]
        steps: usize,
        /// Re-integration terminal-deviation threshold (30-knot default).
        #[arg(long, default_value_t = 1e-3)]
        max_deviation: f64,
    },
    /// Check analytic derivatives against finite differences.
    Gradcheck {
        #[command(flatten)]
        common: CommonOpts,
        #[command(flatten)]
        task: TaskOpts,
        /// Number of random interior points.
        #[arg(long, default_value_t = 10)]
        points: usize,
    },
}

/// Everything written about one solved gait, configuration included.
#[derive(Serialize, Deserialize)]
struct SolutionFile {
    config: AppConfig,
    task: GaitTask,
    trajectory: Trajectory,
    report: SolveReport,
    verification: LimitCycleReport,
}

fn load_config(common: &CommonOpts, task: Option<&TaskOpts>) -> Result<AppConfig, String> {
    let mut config = match &common.config {
        Some(path) => AppConfig::load(path).map_err(|e| e.to_string())?,
        None => AppConfig::default(),
    };
    if let Some(tol) = common.tol {
        config.solver.tol = tol;
    }
    if let Some(knots) = common.knots {
        config.transcription.n_knots = knots;
    }
    if let Some(seed) = common.seed {
        config.solver.seed = seed;
    }
    if let Some(t) = task {
        if let Some(alpha) = t.alpha {
            config.cost.alpha = alpha;
        }
        if let Some(damping) = t.damping {
            config.model.c = damping;
        }
    }
    config.validate().map_err(|e| e.to_string())?;
    Ok(config)
}

fn init_jobs(jobs: usize) {
    if jobs > 0 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), String> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| e.to_string())?;
        }
    }
    std::fs::write(path, contents).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn cmd_solve(common: CommonOpts, task_opts: TaskOpts, out: PathBuf) -> u8 {
    let config = match load_config(&common, Some(&task_opts)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    init_jobs(common.jobs);
    let task = GaitTask::new(task_opts.apex_height, task_opts.apex_velocity, !task_opts.no_ankle);
    let result = (|| -> aaslip::Result<(Trajectory, SolveReport, LimitCycleReport)> {
        let mut nlp = build_nlp(&task, &config.model, &config.cost, &config.transcription)?;
        if task_opts.pin_ankle {
            nlp.pin_ankle_torque();
        }
        let guess = initial_guess(&task, &config.model, &config.transcription);
        let (traj, report) = solve_with(&nlp, &guess, &config.solver, false)?;
        let verification =
            limit_cycle_report(&task, &traj, &config.model, &config.transcription, 100)?;
        Ok((traj, report, verification))
    })();
    match result {
        Ok((trajectory, report, verification)) => {
            let converged = report.converged;
            eprintln!(
                "solve: {} in {} iterations, max violation {:.3e}",
                report.termination_reason, report.iterations, report.constraint_violation
            );
            println!("CoT = {:.9}", report.cost_of_transport);
            let file = SolutionFile { config, task, trajectory, report, verification };
            let json = serde_json::to_string_pretty(&file).expect("solution serializes");
            if let Err(e) = write_file(&out, &json) {
                eprintln!("error: {e}");
                return EXIT_USAGE;
            }
            if converged {
                0
            } else {
                EXIT_SOLVE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_SOLVE
        }
    }
}

fn spec_from(task: &TaskOpts, config: &AppConfig, axes: Vec<SweepAxis>) -> SweepSpec {
    SweepSpec {
        axes,
        base_apex_height: task.apex_height,
        base_apex_velocity: task.apex_velocity,
        base_alpha: config.cost.alpha,
        base_damping: config.model.c,
        warm_start: config.experiments.warm_start,
    }
}

fn finish_experiment(
    points: Vec<UtilityPoint>,
    axes: &[SweepParam],
    config: &AppConfig,
    out: &Path,
) -> u8 {
    let total = points.len();
    let failed = points.iter().filter(|p| p.utility.is_none()).count();
    let csv = csv_string(&points, axes, config);
    if let Err(e) = write_file(out, &csv) {
        eprintln!("error: {e}");
        return EXIT_USAGE;
    }
    let dump = serde_json::to_string(&points).expect("points serialize");
    let traj_path = out.with_extension("trajectories.json");
    if let Err(e) = write_file(&traj_path, &dump) {
        eprintln!("error: {e}");
        return EXIT_USAGE;
    }
    eprintln!(
        "wrote {} ({} points, {} failed) and {}",
        out.display(),
        total,
        failed,
        traj_path.display()
    );
    if failed == total {
        EXIT_SOLVE
    } else {
        0
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    common: CommonOpts,
    task: TaskOpts,
    apex_min: Option<f64>,
    apex_max: Option<f64>,
    points: Option<usize>,
    out: PathBuf,
) -> u8 {
    let config = match load_config(&common, Some(&task)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    init_jobs(common.jobs);
    let lo = apex_min.unwrap_or(config.experiments.apex_height_range[0]);
    let hi = apex_max.unwrap_or(config.experiments.apex_height_range[1]);
    let n = points.unwrap_or(config.experiments.sweep_points);
    let axis = match SweepAxis::linspace(SweepParam::ApexHeight, lo, hi, n) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let spec = spec_from(&task, &config, vec![axis.clone()]);
    eprintln!("sweeping apex height over [{lo}, {hi}] at {n} points");
    match sweep_apex_height(
        &axis.values,
        &spec,
        &config.model,
        &config.cost,
        &config.transcription,
        &config.solver,
    ) {
        Ok(points) => {
            for p in &points {
                eprintln!(
                    "  apex {:.4}: utility {}",
                    p.apex_height,
                    p.utility.map_or("failed".into(), |u| format!("{u:.3}%"))
                );
            }
            finish_experiment(points, &[SweepParam::ApexHeight], &config, &out)
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_SOLVE
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_grid(
    common: CommonOpts,
    task: TaskOpts,
    axis2: Axis2,
    apex_min: Option<f64>,
    apex_max: Option<f64>,
    points: Option<usize>,
    axis2_min: Option<f64>,
    axis2_max: Option<f64>,
    axis2_points: Option<usize>,
    out: PathBuf,
) -> u8 {
    let config = match load_config(&common, Some(&task)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    init_jobs(common.jobs);
    let param2 = axis2.param();
    let range2 = match param2 {
        SweepParam::Alpha => config.experiments.alpha_range,
        SweepParam::ApexVelocity => config.experiments.apex_velocity_range,
        SweepParam::Damping => config.experiments.damping_range,
        SweepParam::ApexHeight => unreachable!("axis2 excludes apex height"),
    };
    let lo = apex_min.unwrap_or(config.experiments.apex_height_range[0]);
    let hi = apex_max.unwrap_or(config.experiments.apex_height_range[1]);
    let n1 = points.unwrap_or(config.experiments.grid_points[0]);
    let lo2 = axis2_min.unwrap_or(range2[0]);
    let hi2 = axis2_max.unwrap_or(range2[1]);
    let n2 = axis2_points.unwrap_or(config.experiments.grid_points[1]);
    let axes = match (
        SweepAxis::linspace(SweepParam::ApexHeight, lo, hi, n1),
        SweepAxis::linspace(param2, lo2, hi2, n2),
    ) {
        (Ok(a), Ok(b)) => vec![a, b],
        (Err(e), _) | (_, Err(e)) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let spec = spec_from(&task, &config, axes);
    eprintln!(
        "grid: apex_height [{lo}, {hi}] x {} points by {} [{lo2}, {hi2}] x {} points",
        n1,
        param2.name(),
        n2
    );
    match grid_2d(&spec, &config.model, &config.cost, &config.transcription, &config.solver) {
        Ok(points) => {
            finish_experiment(points, &[SweepParam::ApexHeight, param2], &config, &out)
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_SOLVE
        }
    }
}

fn cmd_verify(solution: PathBuf, steps: usize, max_deviation: f64) -> u8 {
    let text = match std::fs::read_to_string(&solution) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", solution.display());
            return EXIT_USAGE;
        }
    };
    let file: SolutionFile = match serde_json::from_str(&text) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: corrupt solution file {}: {e}", solution.display());
            return EXIT_USAGE;
        }
    };
    match limit_cycle_report(
        &file.task,
        &file.trajectory,
        &file.config.model,
        &file.config.transcription,
        steps,
    ) {
        Ok(report) => {
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            let tol_apex = 1e-7;
            let tol_margin = -1e-7;
            let ok = report.terminal_deviation <= max_deviation
                && report.apex_height_error_knot <= tol_apex
                && report.apex_velocity_error_knot <= tol_apex
                && report.cop_margin_min >= tol_margin
                && report.force_margin_min >= tol_margin
                && report.length_margin_min >= tol_margin;
            if ok {
                0
            } else {
                eprintln!("verification failed: tolerances exceeded");
                EXIT_VERIFY
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_VERIFY
        }
    }
}

fn cmd_gradcheck(common: CommonOpts, task_opts: TaskOpts, points: usize) -> u8 {
    let config = match load_config(&common, Some(&task_opts)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let task = GaitTask::new(task_opts.apex_height, task_opts.apex_velocity, !task_opts.no_ankle);
    let nlp = match build_nlp(&task, &config.model, &config.cost, &config.transcription) {
        Ok(n) => n,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let mut worst: f64 = 0.0;
    for k in 0..points.max(1) {
        let point = nlp.sample_interior_point(config.solver.seed.wrapping_add(k as u64));
        match check_gradients(&nlp, &point) {
            Ok(err) => {
                eprintln!("point {k}: worst relative error {err:.3e}");
                worst = worst.max(err);
            }
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_VERIFY;
            }
        }
    }
    println!("worst relative derivative error: {worst:.6e}");
    if worst < 1e-5 {
        0
    } else {
        EXIT_VERIFY
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Solve { common, task, out } => cmd_solve(common, task, out),
        Command::Sweep { common, task, apex_min, apex_max, points, out } => {
            cmd_sweep(common, task, apex_min, apex_max, points, out)
        }
        Command::Grid {
            common,
            task,
            axis2,
            apex_min,
            apex_max,
            points,
            axis2_min,
            axis2_max,
            axis2_points,
            out,
        } => cmd_grid(
            common, task, axis2, apex_min, apex_max, points, axis2_min, axis2_max, axis2_points,
            out,
        ),
        Command::Verify { solution, steps, max_deviation } => {
            cmd_verify(solution, steps, max_deviation)
        }
        Command::Gradcheck { common, task, points } => cmd_gradcheck(common, task, points),
    };
    ExitCode::from(code)
}
