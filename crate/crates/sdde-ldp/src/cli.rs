//! Command-line dispatcher: one thin binary over the library.
//!
//! Exit codes: 0 success, 1 usage/parse/alignment problems, 2 numerical
//! failures (blow-up, non-convergence, underdetermined fits), 3 reliability
//! warnings promoted by `--strict`. Data goes to stdout or `--out` files;
//! the one-line human summary always goes to stderr. Worker threads follow
//! rayon's `RAYON_NUM_THREADS` environment variable.

use crate::check::{check_assumptions, SamplerConfig};
use crate::control::Control;
use crate::error::{Error, Result};
use crate::event::{EventSpec, HalfspaceSide};
use crate::grid::TimeGrid;
use crate::mc::{epsilon_sweep, estimate_prob, sweep_csv, BudgetMode, SweepConfig};
use crate::model::CoefficientModel;
use crate::path::{InitialSegment, Origin, Trajectory};
use crate::rate::{evaluate_rate_with_tol, minimize_rate, GradientMethod, MinimizeConfig};
use crate::rng::RngStream;
use crate::sdde::{moment_sweep, simulate, Scheme};
use crate::skeleton::{solve_skeleton, PicardOptions, SkeletonConfig, SkeletonMethod};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Parser, Debug)]
#[command(
    name = "sdde-ldp",
    version,
    about = "Small-noise large-deviations laboratory for stochastic delay differential equations"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Sample-check the structural conditions a model declares
    Check(CheckArgs),
    /// Solve the deterministic controlled skeleton equation
    Skeleton(SkeletonArgs),
    /// Simulate small-noise paths, or run a sup-moment sweep
    Simulate(SimulateArgs),
    /// Evaluate the rate of a stored trajectory
    #[command(name = "rate-eval")]
    RateEval(RateEvalArgs),
    /// Minimize the rate over an endpoint deviation event
    #[command(name = "rate-min")]
    RateMin(RateMinArgs),
    /// Estimate one event probability (plain or importance-sampled)
    Mc(McArgs),
    /// Sweep the noise level and extrapolate the decay rate
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    /// Model definition file (TOML)
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 100_000)]
    n_points: usize,
    /// Box radius for the sampled states
    #[arg(long, default_value_t = 5.0)]
    radius: f64,
    /// Upper end of the sampled time interval
    #[arg(long, default_value_t = 1.0)]
    t_max: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the JSON report here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SkeletonArgs {
    #[arg(long)]
    model: PathBuf,
    /// Constant ("1.0" or "0.5,0.5") or a trajectory CSV covering [-tau, 0]
    #[arg(long)]
    phi: String,
    /// Control CSV (one row per step); omitted means the zero control
    #[arg(long)]
    control: Option<PathBuf>,
    #[arg(long = "T")]
    horizon: f64,
    #[arg(long)]
    h: f64,
    /// Override the model's delay
    #[arg(long)]
    tau: Option<f64>,
    /// rk4 | picard
    #[arg(long, default_value = "rk4")]
    method: String,
    /// Truncation level for the picard route (default: from the a priori bound)
    #[arg(long)]
    truncation_level: Option<f64>,
    /// Trajectory CSV destination (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    phi: String,
    /// Noise intensity for a single path
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long = "T")]
    horizon: f64,
    #[arg(long)]
    h: f64,
    #[arg(long)]
    tau: Option<f64>,
    /// euler | tamed_euler
    #[arg(long, default_value = "tamed_euler")]
    scheme: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Stream id of the single simulated path
    #[arg(long, default_value_t = 0)]
    stream: u64,
    /// Moment order p: switches to the sup-moment sweep (needs --eps-list, --n)
    #[arg(long)]
    moment_p: Option<f64>,
    /// Comma-separated noise levels for the moment sweep
    #[arg(long)]
    eps_list: Option<String>,
    /// Samples per noise level in the moment sweep
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RateEvalArgs {
    #[arg(long)]
    model: PathBuf,
    /// Trajectory CSV produced by `skeleton` or `simulate`
    #[arg(long)]
    path: PathBuf,
    /// Residual tolerance (default 10 h)
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RateMinArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    phi: String,
    /// Event: halfspace:COORD:ge|le:THRESHOLD or ball:RADIUS:C0[,C1,...]
    #[arg(long)]
    event: String,
    #[arg(long = "T")]
    horizon: f64,
    #[arg(long)]
    h: f64,
    #[arg(long)]
    tau: Option<f64>,
    /// adjoint | fd
    #[arg(long, default_value = "adjoint")]
    gradient: String,
    /// Base path: writes BASE.json, BASE.control.csv, BASE.trajectory.csv
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct McArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    phi: String,
    #[arg(long)]
    eps: f64,
    /// Event: halfspace:..., ball:..., or tube:RADIUS:REF_CSV
    #[arg(long)]
    event: String,
    #[arg(long)]
    n: usize,
    #[arg(long = "T")]
    horizon: f64,
    #[arg(long)]
    h: f64,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, default_value = "tamed_euler")]
    scheme: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Importance-sampling control CSV
    #[arg(long)]
    is_control: Option<PathBuf>,
    /// Compute the tilting control by rate minimization
    #[arg(long, default_value_t = false)]
    auto_importance: bool,
    /// Promote reliability warnings to exit code 3
    #[arg(long, default_value_t = false)]
    strict: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    phi: String,
    /// Comma-separated strictly decreasing noise levels
    #[arg(long)]
    eps_list: String,
    #[arg(long)]
    event: String,
    /// Samples per noise level
    #[arg(long)]
    n: usize,
    #[arg(long = "T")]
    horizon: f64,
    #[arg(long)]
    h: f64,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, default_value = "tamed_euler")]
    scheme: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Disable the importance-sampling tilt (plain counting)
    #[arg(long, default_value_t = false)]
    plain: bool,
    /// uniform | geometric (doubles n as eps halves)
    #[arg(long, default_value = "uniform")]
    budget: String,
    #[arg(long, default_value_t = false)]
    strict: bool,
    /// Base path: writes BASE.csv and BASE.json
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parse the process arguments and run; returns the process exit code.
pub fn main_entry() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}

pub fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Check(args) => run_check(args),
        Command::Skeleton(args) => run_skeleton(args),
        Command::Simulate(args) => run_simulate(args),
        Command::RateEval(args) => run_rate_eval(args),
        Command::RateMin(args) => run_rate_min(args),
        Command::Mc(args) => run_mc(args),
        Command::Sweep(args) => run_sweep(args),
    }
}

fn run_check(args: CheckArgs) -> Result<i32> {
    let model = CoefficientModel::from_file(&args.model)?;
    let cfg = SamplerConfig {
        n_points: args.n_points,
        radius: args.radius,
        t_max: args.t_max,
        seed: args.seed,
    };
    let report = check_assumptions(&model, &cfg)?;
    emit_json(&report, args.out.as_deref())?;
    let n_pass = report.conditions.iter().filter(|c| c.pass).count();
    eprintln!(
        "check: {}/{} conditions pass, largest feasible eta {:.3}, theorem gate {}",
        n_pass,
        report.conditions.len(),
        report.largest_feasible_eta,
        if report.theorem_gate_pass { "PASS" } else { "FAIL" }
    );
    Ok(0)
}

fn run_skeleton(args: SkeletonArgs) -> Result<i32> {
    let (model, grid) = load_model_grid(&args.model, args.horizon, args.h, args.tau)?;
    let phi = load_phi(&args.phi, &grid, model.state_dim())?;
    let ctrl = match &args.control {
        Some(path) => read_control(path, grid)?,
        None => Control::zeros(grid, model.noise_dim()),
    };
    let method = match args.method.as_str() {
        "rk4" | "steps_rk4" => SkeletonMethod::StepsRk4,
        "picard" | "picard_truncated" => SkeletonMethod::PicardTruncated,
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown method '{other}' (expected rk4 or picard)"
            )))
        }
    };
    let cfg = SkeletonConfig {
        method,
        picard: PicardOptions { truncation_level: args.truncation_level, ..Default::default() },
    };
    let traj = solve_skeleton(&model, &phi, &ctrl, &grid, &cfg)?;
    emit_trajectory(&traj, args.out.as_deref())?;
    eprintln!(
        "skeleton: solved {} steps, endpoint {:?}",
        grid.n_steps(),
        traj.endpoint()
    );
    Ok(0)
}

fn run_simulate(args: SimulateArgs) -> Result<i32> {
    let (model, grid) = load_model_grid(&args.model, args.horizon, args.h, args.tau)?;
    let phi = load_phi(&args.phi, &grid, model.state_dim())?;
    let scheme = Scheme::parse(&args.scheme)?;

    if let Some(order) = args.moment_p {
        let eps_list = parse_eps_list(
            args.eps_list
                .as_deref()
                .ok_or_else(|| Error::InvalidArgument("--moment-p needs --eps-list".into()))?,
        )?;
        let n = args
            .n
            .ok_or_else(|| Error::InvalidArgument("--moment-p needs --n samples".into()))?;
        let sweep = moment_sweep(&model, &phi, &eps_list, order, n, &grid, scheme, args.seed)?;
        let mut csv = String::from("eps,p,estimate,stderr,n\n");
        for row in &sweep.rows {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                row.eps, row.order, row.estimate, row.stderr, row.n
            ));
        }
        emit_text(&csv, args.out.as_deref())?;
        if let Some(w) = &sweep.hypothesis_warning {
            eprintln!("warning: {w}");
        }
        let max = sweep.rows.iter().map(|r| r.estimate).fold(f64::NEG_INFINITY, f64::max);
        let min = sweep.rows.iter().map(|r| r.estimate).fold(f64::INFINITY, f64::min);
        eprintln!(
            "simulate: moment sweep over {} levels, estimates in [{min:.4}, {max:.4}]",
            sweep.rows.len()
        );
        return Ok(0);
    }

    let eps = args
        .eps
        .ok_or_else(|| Error::InvalidArgument("simulate needs --eps (or --moment-p)".into()))?;
    let mut rng = RngStream::new(args.seed, args.stream);
    let traj = simulate(&model, &phi, eps, &grid, scheme, &mut rng)?;
    emit_trajectory(&traj, args.out.as_deref())?;
    eprintln!("simulate: one path at eps={eps}, endpoint {:?}", traj.endpoint());
    Ok(0)
}

fn run_rate_eval(args: RateEvalArgs) -> Result<i32> {
    let model = CoefficientModel::from_file(&args.model)?;
    let file = fs::File::open(&args.path)?;
    let traj = Trajectory::read_csv(file, Origin::Skeleton)?;
    let grid = *traj.grid();
    if (grid.delay() - model.delay()).abs() > 1e-9 * model.delay().max(1.0) {
        return Err(Error::GridMismatch(format!(
            "trajectory delay {} does not match model delay {}",
            grid.delay(),
            model.delay()
        )));
    }
    let tol = args.tolerance.unwrap_or_else(|| crate::rate::default_feasibility_tol(&grid));
    let cert = evaluate_rate_with_tol(&model, &traj, &grid, tol)?;
    emit_json(&cert.summary(), args.out.as_deref())?;
    eprintln!(
        "rate-eval: value {}, feasible {}, max residual {:.3e}",
        cert.summary().value.map(|v| format!("{v:.6}")).unwrap_or_else(|| "inf".into()),
        cert.feasible,
        cert.max_residual
    );
    Ok(0)
}

#[derive(Serialize)]
struct RateMinSummary {
    value: f64,
    violation: f64,
    converged: bool,
    iterations: usize,
    penalty_rounds_used: usize,
}

fn run_rate_min(args: RateMinArgs) -> Result<i32> {
    let (model, grid) = load_model_grid(&args.model, args.horizon, args.h, args.tau)?;
    let phi = load_phi(&args.phi, &grid, model.state_dim())?;
    let event = parse_event(&args.event, model.state_dim())?;
    let gradient = match args.gradient.as_str() {
        "adjoint" => GradientMethod::Adjoint,
        "fd" | "finite_difference" => GradientMethod::FiniteDifference,
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown gradient '{other}' (expected adjoint or fd)"
            )))
        }
    };
    let cfg = MinimizeConfig { gradient, ..Default::default() };
    let out = minimize_rate(&model, &phi, &event, &grid, &cfg)?;
    let summary = RateMinSummary {
        value: out.value,
        violation: out.violation,
        converged: out.converged,
        iterations: out.iterations,
        penalty_rounds_used: out.penalty_rounds_used,
    };
    if let Some(base) = &args.out {
        write_json_file(&summary, &with_suffix(base, ".json"))?;
        let mut buf = Vec::new();
        out.control.write_csv(&mut buf)?;
        fs::write(with_suffix(base, ".control.csv"), buf)?;
        let mut buf = Vec::new();
        out.trajectory.write_csv(&mut buf)?;
        fs::write(with_suffix(base, ".trajectory.csv"), buf)?;
    }
    println!("{}", serde_json::to_string_pretty(&summary).expect("serializable"));
    eprintln!(
        "rate-min: value {:.6}, violation {:.3e}, {}",
        out.value,
        out.violation,
        if out.converged { "converged" } else { "NOT converged" }
    );
    Ok(if out.converged { 0 } else { 2 })
}

fn run_mc(args: McArgs) -> Result<i32> {
    let (model, grid) = load_model_grid(&args.model, args.horizon, args.h, args.tau)?;
    let phi = load_phi(&args.phi, &grid, model.state_dim())?;
    let event = parse_event_with_tube(&args.event, model.state_dim(), &grid)?;
    let scheme = Scheme::parse(&args.scheme)?;
    let tilt = match (&args.is_control, args.auto_importance) {
        (Some(_), true) => {
            return Err(Error::InvalidArgument(
                "--is-control and --auto-importance are mutually exclusive".into(),
            ))
        }
        (Some(path), false) => Some(read_control(path, grid)?),
        (None, true) => {
            Some(minimize_rate(&model, &phi, &event, &grid, &MinimizeConfig::default())?.control)
        }
        (None, false) => None,
    };
    let est = estimate_prob(
        &model,
        &phi,
        args.eps,
        &event,
        args.n,
        &grid,
        scheme,
        args.seed,
        tilt.as_ref(),
    )?;
    emit_json(&est, args.out.as_deref())?;
    eprintln!(
        "mc: p_hat {} +- {} (n = {}, {:?})",
        est.p_hat, est.stderr, est.n, est.method
    );
    if args.strict && !est.warnings.is_empty() {
        return Ok(3);
    }
    Ok(0)
}

fn run_sweep(args: SweepArgs) -> Result<i32> {
    let (model, grid) = load_model_grid(&args.model, args.horizon, args.h, args.tau)?;
    let phi = load_phi(&args.phi, &grid, model.state_dim())?;
    let event = parse_event_with_tube(&args.event, model.state_dim(), &grid)?;
    let eps_list = parse_eps_list(&args.eps_list)?;
    let budget = match args.budget.as_str() {
        "uniform" => BudgetMode::Uniform,
        "geometric" => BudgetMode::Geometric,
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown budget '{other}' (expected uniform or geometric)"
            )))
        }
    };
    let cfg = SweepConfig {
        n_per_eps: args.n,
        scheme: Scheme::parse(&args.scheme)?,
        seed: args.seed,
        use_importance: !args.plain,
        budget,
        minimize: MinimizeConfig::default(),
    };
    let sweep = epsilon_sweep(&model, &phi, &eps_list, &event, &grid, &cfg)?;
    let csv = sweep_csv(&sweep);
    if let Some(base) = &args.out {
        fs::write(with_suffix(base, ".csv"), &csv)?;
        write_json_file(&sweep.summary(), &with_suffix(base, ".json"))?;
    }
    println!("{}", serde_json::to_string_pretty(&sweep.summary()).expect("serializable"));
    eprintln!(
        "sweep: extrapolated rate {:.4} +- {:.4}, variational {}, gap {}",
        sweep.extrapolated_rate,
        sweep.rate_stderr,
        sweep
            .variational_value
            .map(|v| format!("{v:.4}"))
            .unwrap_or_else(|| "n/a".into()),
        sweep.gap.map(|v| format!("{v:.4}")).unwrap_or_else(|| "n/a".into()),
    );
    for w in &sweep.warnings {
        eprintln!("warning: {w}");
    }
    if args.strict && !sweep.warnings.is_empty() {
        return Ok(3);
    }
    Ok(0)
}

fn load_model_grid(
    model_path: &Path,
    horizon: f64,
    h: f64,
    tau_override: Option<f64>,
) -> Result<(CoefficientModel, TimeGrid)> {
    let model = CoefficientModel::from_file(model_path)?;
    let model = match tau_override {
        Some(tau) => model.with_delay(tau)?,
        None => model,
    };
    let grid = TimeGrid::new(horizon, h, model.delay())?;
    Ok((model, grid))
}

/// A phi argument is either comma-separated constants or a CSV file path.
fn load_phi(spec: &str, grid: &TimeGrid, dim: usize) -> Result<InitialSegment> {
    if let Some(values) = parse_floats(spec) {
        if values.len() != dim {
            return Err(Error::InvalidArgument(format!(
                "phi constant has {} components, model needs {dim}",
                values.len()
            )));
        }
        return InitialSegment::constant(grid, &values);
    }
    let file = fs::File::open(spec).map_err(|e| {
        Error::InvalidArgument(format!("phi '{spec}' is neither a number list nor a readable file: {e}"))
    })?;
    let (times, values, file_dim) = crate::path::read_csv(file)?;
    if file_dim != dim {
        return Err(Error::InvalidArgument(format!(
            "phi file has dimension {file_dim}, model needs {dim}"
        )));
    }
    InitialSegment::from_samples(grid, dim, &times, &values)
}

fn read_control(path: &Path, grid: TimeGrid) -> Result<Control> {
    let file = fs::File::open(path)?;
    Control::read_csv(file, grid)
}

fn parse_floats(s: &str) -> Option<Vec<f64>> {
    s.split(',').map(|p| p.trim().parse::<f64>().ok()).collect()
}

fn parse_eps_list(s: &str) -> Result<Vec<f64>> {
    parse_floats(s).ok_or_else(|| Error::InvalidArgument(format!("bad eps list '{s}'")))
}

/// `halfspace:COORD:ge|le:THRESHOLD` or `ball:RADIUS:C0[,C1,...]`.
fn parse_event(s: &str, dim: usize) -> Result<EventSpec> {
    let parts: Vec<&str> = s.split(':').collect();
    let event = match parts.as_slice() {
        ["halfspace", coord, side, threshold] => {
            let coord = coord
                .parse::<usize>()
                .map_err(|_| Error::InvalidArgument(format!("bad event coordinate '{coord}'")))?;
            let side = match *side {
                "ge" | ">=" => HalfspaceSide::Above,
                "le" | "<=" => HalfspaceSide::Below,
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "bad halfspace side '{other}' (expected ge or le)"
                    )))
                }
            };
            let threshold = parse_threshold(threshold)?;
            EventSpec::EndpointHalfspace { coord, threshold, side }
        }
        ["ball", radius, center] => {
            let radius = radius
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("bad ball radius '{radius}'")))?;
            let center = parse_floats(center)
                .ok_or_else(|| Error::InvalidArgument(format!("bad ball center '{center}'")))?;
            EventSpec::EndpointBallExterior { center, radius }
        }
        _ => {
            return Err(Error::InvalidArgument(format!(
                "bad event '{s}' (expected halfspace:COORD:ge|le:THRESHOLD, ball:RADIUS:CENTER or tube:RADIUS:REF_CSV)"
            )))
        }
    };
    match &event {
        EventSpec::EndpointHalfspace { coord, .. } if *coord >= dim => Err(Error::InvalidArgument(
            format!("event coordinate {coord} out of range for dimension {dim}"),
        )),
        _ => Ok(event),
    }
}

fn parse_event_with_tube(s: &str, dim: usize, grid: &TimeGrid) -> Result<EventSpec> {
    let parts: Vec<&str> = s.split(':').collect();
    if let ["tube", radius, file] = parts.as_slice() {
        let radius = radius
            .parse::<f64>()
            .map_err(|_| Error::InvalidArgument(format!("bad tube radius '{radius}'")))?;
        let reference = Trajectory::read_csv(fs::File::open(file)?, Origin::Skeleton)?;
        let event = EventSpec::TubeExit { reference, radius };
        event.validate_for(grid, dim)?;
        return Ok(event);
    }
    parse_event(s, dim)
}

fn parse_threshold(s: &str) -> Result<f64> {
    match s {
        "inf" | "+inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        other => other
            .parse::<f64>()
            .map_err(|_| Error::InvalidArgument(format!("bad threshold '{other}'"))),
    }
}

fn with_suffix(base: &Path, suffix: &str) -> PathBuf {
    let mut s = base.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable") + "\n";
    emit_text(&text, out)
}

fn write_json_file<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable") + "\n";
    fs::write(path, text)?;
    Ok(())
}

fn emit_text(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
        }
    }
    Ok(())
}

fn emit_trajectory(traj: &Trajectory, out: Option<&Path>) -> Result<()> {
    let mut buf = Vec::new();
    traj.write_csv(&mut buf)?;
    emit_text(std::str::from_utf8(&buf).expect("csv is utf-8"), out)
}
