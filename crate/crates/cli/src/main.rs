//! `permon`: validate scenarios, search for monitoring cycles, and evaluate
//! stored solutions.
//!
//! Exit codes: 0 ok, 1 violations or no feasible cycle, 2 usage or unreadable
//! input, 3 solver backend failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use permon_core::evaluation::{self, GammaSource, SimulationConfig};
use permon_core::formats;
use permon_core::model::{self, Scenario};
use permon_core::scenarios;
use permon_core::scheduler::{sdp_pm, SearchConfig};
use permon_core::sdp::{self, sdpa};
use permon_core::trajectory::{self, build_prop2, oracle_cost, Prop2Options, TrajectorySolution};
use permon_core::Error;

const EXIT_VIOLATION: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_BACKEND: u8 = 3;

/// Slack on the speed limit and on `γ` consistency when checking stored solutions.
const CHECK_TOL: f64 = 1e-6;

#[derive(Parser, Debug)]
#[command(name = "permon", version, about = "Persistent monitoring trajectories for a single mobile sensor")]
struct Cli {
    /// Repeat for more log output.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse a scenario and list every violated modelling assumption.
    Validate { scenario: PathBuf },
    /// Search cycles and write the best trajectory with its tables.
    Optimize {
        scenario: PathBuf,
        #[arg(long, default_value_t = 200)]
        iters: usize,
        #[arg(long)]
        budget_seconds: Option<f64>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        /// Candidates solved concurrently.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        /// Also render trajectory.svg and cost.svg.
        #[arg(long)]
        svg: bool,
        /// Also write the best candidate's SDP in SDPA sparse format.
        #[arg(long)]
        dump_sdpa: bool,
    },
    /// Compare a stored solution's cost with covariance propagation and simulation.
    Evaluate {
        scenario: PathBuf,
        solution: PathBuf,
        /// Measured steps; defaults to 200 cycles.
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Drive the filter with γ recomputed from the stored positions.
        #[arg(long)]
        physical_gamma: bool,
        /// Write the numbers as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Write a bundled scenario file.
    ExampleScenario {
        #[arg(value_enum)]
        kind: ExampleKind,
        #[arg(short, long)]
        out: PathBuf,
        /// Number of targets (random only).
        #[arg(long, default_value_t = 7)]
        targets: usize,
        /// Seed (random only).
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Sensing range (random only).
        #[arg(long, default_value_t = 0.3)]
        range: f64,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ExampleKind {
    ThreeTarget,
    Random,
    GoldenScalar,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::BackendUnavailable | Error::Backend(_) => EXIT_BACKEND,
            Error::NotPositiveDefinite(_) | Error::Divergent { .. } | Error::InvalidScenario(_) => EXIT_VIOLATION,
            _ => EXIT_USAGE,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

type CmdResult = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Validate { scenario } => validate(&scenario),
        Command::Optimize { scenario, iters, budget_seconds, out_dir, parallel, svg, dump_sdpa } => {
            optimize(&scenario, iters, budget_seconds, &out_dir, parallel, svg, dump_sdpa)
        }
        Command::Evaluate { scenario, solution, horizon, trials, seed, physical_gamma, report } => {
            evaluate(&scenario, &solution, horizon, trials, seed, physical_gamma, report.as_deref())
        }
        Command::ExampleScenario { kind, out, targets, seed, range } => example(kind, &out, targets, seed, range),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

/// Load and validate; prints violations and returns `Err` with exit 1 if any.
fn load_valid(path: &Path) -> Result<Scenario, Failure> {
    let scenario = formats::load_scenario(path)?;
    let violations = model::validate(&scenario);
    if violations.is_empty() {
        return Ok(scenario);
    }
    for v in &violations {
        println!("violation: {v}");
    }
    Err(Failure { code: EXIT_VIOLATION, message: format!("{} violation(s) in {}", violations.len(), path.display()) })
}

fn validate(path: &Path) -> CmdResult {
    let scenario = load_valid(path)?;
    println!("{}: {} targets, no violations", scenario.name, scenario.n_targets());
    Ok(0)
}

fn optimize(
    path: &Path,
    iters: usize,
    budget_seconds: Option<f64>,
    out_dir: &Path,
    parallel: usize,
    svg: bool,
    dump_sdpa: bool,
) -> CmdResult {
    let scenario = load_valid(path)?;
    sdp::default_backend()?;
    let budget = match budget_seconds {
        Some(s) if !(s >= 0.0) || !s.is_finite() => {
            return Err(Failure { code: EXIT_USAGE, message: format!("invalid --budget-seconds {s}") })
        }
        Some(s) => Some(Duration::from_secs_f64(s)),
        None => None,
    };
    let config = SearchConfig { n_iter: iters, budget, parallel, options: Prop2Options::default(), keep_solutions: false };
    let state = sdp_pm(&scenario, &config);

    std::fs::create_dir_all(out_dir)?;
    let report = formats::RunReport::new(&scenario, &state);
    std::fs::write(out_dir.join("report.json"), serde_json::to_string_pretty(&report).map_err(Error::from)? + "\n")?;
    formats::write_history_csv(&out_dir.join("history.csv"), &state)?;
    if svg {
        std::fs::write(out_dir.join("cost.svg"), formats::cost_svg(&state))?;
    }
    println!("explored {} candidates in {:.2}s", state.explored, state.wall_seconds);

    let Some(best) = &state.best_solution else {
        let backend_errors = state
            .history
            .iter()
            .any(|r| r.warnings.iter().any(|w| w.contains("backend")));
        if backend_errors {
            return Err(Failure { code: EXIT_BACKEND, message: "the SDP backend failed on every candidate".into() });
        }
        println!("no feasible cycle found");
        return Ok(EXIT_VIOLATION);
    };
    formats::save_solution(&out_dir.join("solution.json"), &scenario, best)?;
    formats::write_step_tables(out_dir, best)?;
    if svg {
        std::fs::write(out_dir.join("trajectory.svg"), formats::trajectory_svg(&scenario, best))?;
    }
    if dump_sdpa {
        let p = build_prop2(&scenario, &best.schedule, &config.options)?;
        std::fs::write(out_dir.join("best.dat-s"), sdpa::to_sdpa_string(&p.problem))?;
    }
    println!("best cycle {:?} (τ = {}) cost {:.6}", best.schedule.sequence, best.tau(), state.best_cost);
    for w in &best.warnings {
        println!("warning: {w}");
    }
    Ok(0)
}

#[derive(Debug, Serialize)]
struct EvaluationReport {
    schema: &'static str,
    scenario: String,
    tau: usize,
    gamma_source: GammaSource,
    violations: Vec<String>,
    sdp_cost: Option<f64>,
    oracle_cost: Option<f64>,
    deterministic_cost: f64,
    deterministic_cost_without_warmup: f64,
    deterministic_horizon: usize,
    warmup_steps: usize,
    monte_carlo: evaluation::MonteCarloStats,
}

/// Speed-limit and `γ` consistency checks of a stored trajectory.
fn solution_violations(scenario: &Scenario, sol: &TrajectorySolution) -> Vec<String> {
    let mut out = Vec::new();
    let tau = sol.tau();
    let u = scenario.agent.u_max;
    for k in 0..tau {
        let step = (sol.positions[(k + 1) % tau] - sol.positions[k]).norm();
        if step > u + CHECK_TOL {
            out.push(format!("speed limit exceeded between steps {k} and {}: {step:.6} > {u}", (k + 1) % tau));
        }
    }
    for (i, t) in scenario.targets.iter().enumerate() {
        for k in 0..tau {
            let stored = sol.gammas[i][k];
            let physical = model::gamma(t, &sol.positions[k]);
            if !(-CHECK_TOL..=1.0 + CHECK_TOL).contains(&stored) {
                out.push(format!("target {}: γ({k}) = {stored} outside [0, 1]", t.id));
            } else if stored > physical + CHECK_TOL {
                out.push(format!(
                    "target {}: γ({k}) = {stored:.6} exceeds {physical:.6} at the stored position",
                    t.id
                ));
            } else if !sol.schedule.b[i][k] && stored.abs() > CHECK_TOL {
                out.push(format!("target {}: γ({k}) = {stored} at an undesignated step", t.id));
            }
        }
    }
    out
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn evaluate(
    scenario_path: &Path,
    solution_path: &Path,
    horizon: Option<usize>,
    trials: usize,
    seed: u64,
    physical_gamma: bool,
    report_path: Option<&Path>,
) -> CmdResult {
    let scenario = load_valid(scenario_path)?;
    let sol = formats::load_solution(solution_path, &scenario)?;
    let tau = sol.tau();
    let violations = solution_violations(&scenario, &sol);
    for v in &violations {
        println!("violation: {v}");
    }
    let source = if physical_gamma { GammaSource::Physical } else { GammaSource::Scheduled };
    let gammas = evaluation::gamma_matrix(&scenario, &sol, source);
    let oracle = oracle_cost(&scenario, &gammas).ok();
    let sigma0 = evaluation::default_sigma0(&scenario);
    let det_horizon = 500 * tau;
    let warmup = SimulationConfig::DEFAULT_WARMUP_CYCLES * tau;
    let det_cold = evaluation::deterministic_cost_with(&scenario, &sol, &sigma0, det_horizon, source)?;
    let det = evaluation::deterministic_cost_after(&scenario, &sol, &sigma0, warmup, det_horizon, source)?;
    let config = SimulationConfig {
        gamma_source: source,
        ..SimulationConfig::new(horizon.unwrap_or(200 * tau), trials, seed)
    };
    let mc = evaluation::monte_carlo(&scenario, &sol, &sigma0, &config)?;

    let sdp_cost = sol.cost.is_finite().then_some(sol.cost);
    println!("scenario {}  cycle {:?}  τ = {tau}  γ: {source:?}", scenario.name, sol.schedule.sequence);
    match sdp_cost {
        Some(c) => println!("  SDP cost              {c:>14.6}"),
        None => println!("  SDP cost              {:>14}", "n/a"),
    }
    match oracle {
        Some(c) => println!("  fixed-point cost      {c:>14.6}"),
        None => println!("  fixed-point cost      {:>14}", "diverges"),
    }
    println!("  deterministic cost    {det:>14.6}  (M = {det_horizon} after {warmup} warmup steps)");
    println!("  without warmup        {det_cold:>14.6}  (Σ(0) = 10·I)");
    println!(
        "  Monte Carlo MSE       {:>14.6} ± {:.6}  ({} trials × {} steps, seed {seed})",
        mc.mse, mc.std_error, mc.n_trials, mc.horizon
    );
    if let Some(c) = sdp_cost {
        println!("  rel. deterministic vs SDP  {:.3e}", rel(det, c));
        println!("  rel. Monte Carlo vs SDP    {:.3e}", rel(mc.mse, c));
    }
    if let Some(p) = report_path {
        let r = EvaluationReport {
            schema: "permon-evaluation/1",
            scenario: scenario.name.clone(),
            tau,
            gamma_source: source,
            violations: violations.clone(),
            sdp_cost,
            oracle_cost: oracle,
            deterministic_cost: det,
            deterministic_cost_without_warmup: det_cold,
            deterministic_horizon: det_horizon,
            warmup_steps: warmup,
            monte_carlo: mc,
        };
        std::fs::write(p, serde_json::to_string_pretty(&r).map_err(Error::from)? + "\n")?;
    }
    if tau > trajectory::CONDITIONING_TAU {
        println!("warning: τ = {tau} is in the poorly conditioned regime");
    }
    Ok(if violations.is_empty() { 0 } else { EXIT_VIOLATION })
}

fn example(kind: ExampleKind, out: &Path, targets: usize, seed: u64, range: f64) -> CmdResult {
    let scenario = match kind {
        ExampleKind::ThreeTarget => scenarios::three_target(),
        ExampleKind::GoldenScalar => scenarios::golden_scalar(),
        ExampleKind::Random => {
            if targets == 0 {
                return Err(Failure { code: EXIT_USAGE, message: "--targets must be positive".into() });
            }
            scenarios::random_uniform(targets, seed, range)
        }
    };
    formats::save_scenario(out, &scenario)?;
    println!("wrote {} ({} targets) to {}", scenario.name, scenario.n_targets(), out.display());
    Ok(0)
}
