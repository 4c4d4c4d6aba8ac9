//! Independent cost checks for a periodic trajectory: deterministic Kalman
//! covariance propagation and Monte Carlo simulation of the targets and the
//! time-varying Kalman filter.
//!
//! # Random draws
//!
//! Trial `j` uses `ChaCha20Rng::seed_from_u64(seed)` with `set_stream(j)`.
//! Within a trial the draws are standard normals from `rand_distr`, consumed
//! in this order:
//!
//! 1. for each target in id order, `L` draws for the initial error;
//! 2. for each step, for each target in id order, `L` draws for the process
//!    noise then `m` draws for the measurement noise (drawn even when the
//!    target is not observed).
//!
//! Draws are coloured with the lower Cholesky factors of `Σ(0)`, `Q` and `R`.
//!
//! The estimation error `e = φ − φ̂` is propagated directly,
//! `e⁺ = (I − KH)(Ae + w) − Kv`, which is the difference of the state and
//! filter recursions without the cancellation that differencing two large
//! numbers would cause for unstable targets. Traces additionally carry `φ`
//! and `φ̂ = φ − e`.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filtering::{kalman_covariance_step, steady_state_covariances, CovarianceState, FixedPointSettings};
use crate::linalg::{self, CompensatedSum, Mat};
use crate::model::{self, Scenario};
use crate::trajectory::TrajectorySolution;

/// Which `γ` drives the filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum GammaSource {
    /// The schedule's `γ`: zero for targets that do not own the step.
    #[default]
    Scheduled,
    /// `γ` from the agent's distance to every target.
    Physical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    /// Measured steps `M`, after warmup.
    pub horizon: usize,
    pub n_trials: usize,
    pub seed: u64,
    /// Whole cycles simulated and discarded before measuring.
    pub warmup_cycles: usize,
    pub gamma_source: GammaSource,
}

impl SimulationConfig {
    pub const DEFAULT_WARMUP_CYCLES: usize = 20;

    pub fn new(horizon: usize, n_trials: usize, seed: u64) -> Self {
        Self {
            horizon,
            n_trials,
            seed,
            warmup_cycles: Self::DEFAULT_WARMUP_CYCLES,
            gamma_source: GammaSource::Scheduled,
        }
    }

    fn check(&self, tau: usize) -> Result<()> {
        if self.horizon < tau {
            return Err(Error::Dimension(format!(
                "horizon {} is shorter than the cycle length {tau}",
                self.horizon
            )));
        }
        if self.n_trials == 0 {
            return Err(Error::Dimension("at least one trial is required".into()));
        }
        Ok(())
    }
}

/// `γ_i(k)` for one cycle.
pub fn gamma_matrix(scenario: &Scenario, solution: &TrajectorySolution, source: GammaSource) -> Vec<Vec<f64>> {
    match source {
        GammaSource::Scheduled => solution
            .gammas
            .iter()
            .map(|row| row.iter().map(|g| g.clamp(0.0, 1.0)).collect())
            .collect(),
        GammaSource::Physical => scenario
            .targets
            .iter()
            .map(|t| solution.positions.iter().map(|s| model::gamma(t, s)).collect())
            .collect(),
    }
}

/// Per-target covariances one step before slot 0 at the periodic steady
/// state, i.e. `Σ̄_i(τ − 1)`. Starting a propagation here reproduces the
/// steady state from the first step.
pub fn steady_state_initial(scenario: &Scenario, gammas: &[Vec<f64>]) -> Result<Vec<Mat>> {
    scenario
        .targets
        .iter()
        .zip(gammas)
        .map(|(t, g)| Ok(steady_state_covariances(t, g)?.pop().expect("τ ≥ 1")))
        .collect()
}

fn check_sigma0(scenario: &Scenario, sigma0: &[Mat]) -> Result<()> {
    if sigma0.len() != scenario.n_targets() {
        return Err(Error::Dimension(format!(
            "{} initial covariances for {} targets",
            sigma0.len(),
            scenario.n_targets()
        )));
    }
    for (t, s) in scenario.targets.iter().zip(sigma0) {
        if s.shape() != t.a.shape() {
            return Err(Error::Dimension(format!("initial covariance of target {} has the wrong shape", t.id)));
        }
        linalg::require_pd(s, "initial covariance")?;
    }
    Ok(())
}

/// Per-step `Σ_i tr Σ_i(t)` for `t = 0..steps`, starting from `Σ_i(−1) = sigma0[i]`.
pub fn covariance_trace_series(
    scenario: &Scenario,
    gammas: &[Vec<f64>],
    sigma0: &[Mat],
    steps: usize,
) -> Result<Vec<Vec<f64>>> {
    check_sigma0(scenario, sigma0)?;
    let tau = gammas.first().map_or(0, |g| g.len());
    if tau == 0 {
        return Err(Error::InvalidSchedule("empty γ sequence".into()));
    }
    let guard = FixedPointSettings::default().divergence_guard;
    let mut out = vec![Vec::with_capacity(steps); scenario.n_targets()];
    for (i, target) in scenario.targets.iter().enumerate() {
        let mut state = CovarianceState { sigma: sigma0[i].clone(), k: 0 };
        for t in 0..steps {
            state = kalman_covariance_step(target, &state, gammas[i][t % tau])?;
            let trace = state.sigma.trace();
            if !(trace <= guard) {
                return Err(Error::Divergent { trace, steps: t + 1 });
            }
            out[i].push(trace);
        }
    }
    Ok(out)
}

/// `(1/M) Σ_t Σ_i tr Σ_i(t)` over `M` steps of covariance propagation.
pub fn deterministic_cost(
    scenario: &Scenario,
    solution: &TrajectorySolution,
    sigma0: &[Mat],
    horizon: usize,
) -> Result<f64> {
    deterministic_cost_with(scenario, solution, sigma0, horizon, GammaSource::Scheduled)
}

pub fn deterministic_cost_with(
    scenario: &Scenario,
    solution: &TrajectorySolution,
    sigma0: &[Mat],
    horizon: usize,
    source: GammaSource,
) -> Result<f64> {
    deterministic_cost_after(scenario, solution, sigma0, 0, horizon, source)
}

/// `(1/M) Σ_t Σ_i tr Σ_i(t)` over steps `warmup..warmup + M`. Without a
/// warmup the average carries the initial transient's total excess divided
/// by `M`, which for long unobserved stretches can exceed a cycle's cost.
pub fn deterministic_cost_after(
    scenario: &Scenario,
    solution: &TrajectorySolution,
    sigma0: &[Mat],
    warmup: usize,
    horizon: usize,
    source: GammaSource,
) -> Result<f64> {
    if horizon == 0 {
        return Err(Error::Dimension("horizon must be positive".into()));
    }
    let gammas = gamma_matrix(scenario, solution, source);
    let series = covariance_trace_series(scenario, &gammas, sigma0, warmup + horizon)?;
    let total: CompensatedSum = series.iter().flat_map(|s| s[warmup..].iter().copied()).collect();
    Ok(total.value() / horizon as f64)
}

/// Per-step record of one simulated trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    /// `[t][i]` true state.
    pub states: Vec<Vec<Vec<f64>>>,
    /// `[t][i]` filter estimate.
    pub estimates: Vec<Vec<Vec<f64>>>,
    /// `[t][i]` filter covariance trace.
    pub covariance_traces: Vec<Vec<f64>>,
    /// `[t][i]` observation, empty when `γ = 0`.
    pub observations: Vec<Vec<Vec<f64>>>,
    /// `[t][i]` process noise.
    pub process_noise: Vec<Vec<Vec<f64>>>,
    /// `[t][i]` measurement noise.
    pub measurement_noise: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloStats {
    pub n_trials: usize,
    pub horizon: usize,
    pub warmup_steps: usize,
    /// Per target, mean over trials and steps of `‖e_i(t)‖²`.
    pub mse_per_target: Vec<f64>,
    /// `Σ_i` of the above: the empirical per-step cost.
    pub mse: f64,
    /// Standard error of `mse` across trials.
    pub std_error: f64,
    /// Deterministic `(1/M) Σ_t Σ_i tr Σ_i(t)` over the same window.
    pub expected: f64,
}

impl MonteCarloStats {
    pub fn relative_error(&self) -> f64 {
        (self.mse - self.expected).abs() / self.expected.abs()
    }
}

fn draw(rng: &mut ChaCha20Rng, n: usize) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)))
}

struct TargetSim {
    a: Mat,
    q_factor: Mat,
    r_factor: Mat,
    h_max: Mat,
    q: Mat,
    r: Mat,
    s0_factor: Mat,
    s0: Mat,
}

struct Trial {
    /// Per target, sum over measured steps of `‖e‖²`.
    sq_err: Vec<f64>,
    trace: Option<SimTrace>,
}

fn run_trial(
    sims: &[TargetSim],
    gammas: &[Vec<f64>],
    warmup: usize,
    horizon: usize,
    seed: u64,
    trial: u64,
    record: bool,
) -> Result<Trial> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    let n = sims.len();
    let tau = gammas[0].len();
    let mut err: Vec<DVector<f64>> =
        sims.iter().map(|s| &s.s0_factor * draw(&mut rng, s.a.nrows())).collect();
    let mut state: Vec<DVector<f64>> = err.clone();
    let mut sigma: Vec<Mat> = sims.iter().map(|s| s.s0.clone()).collect();
    let mut sq_err = vec![0.0; n];
    let mut comp: Vec<CompensatedSum> = vec![CompensatedSum::default(); n];
    let mut trace = record.then(|| SimTrace {
        states: Vec::new(),
        estimates: Vec::new(),
        covariance_traces: Vec::new(),
        observations: Vec::new(),
        process_noise: Vec::new(),
        measurement_noise: Vec::new(),
    });
    for t in 0..warmup + horizon {
        let mut row = record.then(|| (vec![], vec![], vec![], vec![], vec![], vec![]));
        for (i, s) in sims.iter().enumerate() {
            let l = s.a.nrows();
            let w = &s.q_factor * draw(&mut rng, l);
            let v = &s.r_factor * draw(&mut rng, s.h_max.nrows());
            let g = gammas[i][t % tau];
            let pred = linalg::symmetrize(&(&s.a * &sigma[i] * s.a.transpose() + &s.q));
            let e_pred = &s.a * &err[i] + &w;
            state[i] = &s.a * &state[i] + &w;
            let mut z = DVector::zeros(0);
            if g > 0.0 {
                let h = &s.h_max * g.sqrt();
                let innov = &h * &pred * h.transpose() + &s.r;
                let chol = linalg::require_pd(&innov, "innovation covariance")?;
                let gain = chol.solve(&(&h * &pred)).transpose();
                let ikh = Mat::identity(l, l) - &gain * &h;
                err[i] = &ikh * e_pred - &gain * &v;
                sigma[i] =
                    linalg::symmetrize(&(&ikh * &pred * ikh.transpose() + &gain * &s.r * gain.transpose()));
                z = &h * &state[i] + &v;
            } else {
                err[i] = e_pred;
                sigma[i] = pred;
            }
            if t >= warmup {
                comp[i].add(err[i].norm_squared());
            }
            if let Some(r) = row.as_mut() {
                r.0.push(state[i].as_slice().to_vec());
                r.1.push((&state[i] - &err[i]).as_slice().to_vec());
                r.2.push(sigma[i].trace());
                r.3.push(z.as_slice().to_vec());
                r.4.push(w.as_slice().to_vec());
                r.5.push(v.as_slice().to_vec());
            }
        }
        if let (Some(tr), Some(r)) = (trace.as_mut(), row) {
            tr.states.push(r.0);
            tr.estimates.push(r.1);
            tr.covariance_traces.push(r.2);
            tr.observations.push(r.3);
            tr.process_noise.push(r.4);
            tr.measurement_noise.push(r.5);
        }
    }
    for i in 0..n {
        sq_err[i] = comp[i].value();
    }
    Ok(Trial { sq_err, trace })
}

fn target_sims(scenario: &Scenario, sigma0: &[Mat]) -> Result<Vec<TargetSim>> {
    scenario
        .targets
        .iter()
        .zip(sigma0)
        .map(|(t, s0)| {
            Ok(TargetSim {
                a: t.a.clone(),
                q_factor: linalg::require_pd(&t.q, "Q")?.l(),
                r_factor: linalg::require_pd(&t.r, "R")?.l(),
                h_max: t.h_max.clone(),
                q: t.q.clone(),
                r: t.r.clone(),
                s0_factor: linalg::require_pd(s0, "initial covariance")?.l(),
                s0: s0.clone(),
            })
        })
        .collect()
}

/// Empirical mean squared estimation error along the solution's trajectory.
/// Trials run in parallel; the reduction is in trial order, so results do
/// not depend on thread scheduling.
pub fn monte_carlo(
    scenario: &Scenario,
    solution: &TrajectorySolution,
    sigma0: &[Mat],
    config: &SimulationConfig,
) -> Result<MonteCarloStats> {
    let tau = solution.tau();
    config.check(tau)?;
    check_sigma0(scenario, sigma0)?;
    let gammas = gamma_matrix(scenario, solution, config.gamma_source);
    let sims = target_sims(scenario, sigma0)?;
    let warmup = config.warmup_cycles * tau;
    let trials: Vec<Trial> = (0..config.n_trials as u64)
        .into_par_iter()
        .map(|j| run_trial(&sims, &gammas, warmup, config.horizon, config.seed, j, false))
        .collect::<Result<_>>()?;

    let n = scenario.n_targets();
    let m = config.horizon as f64;
    let per_trial: Vec<f64> = trials.iter().map(|t| t.sq_err.iter().sum::<f64>() / m).collect();
    let mse_per_target: Vec<f64> = (0..n)
        .map(|i| {
            let s: CompensatedSum = trials.iter().map(|t| t.sq_err[i] / m).collect();
            s.value() / config.n_trials as f64
        })
        .collect();
    let mse: f64 = {
        let s: CompensatedSum = per_trial.iter().copied().collect();
        s.value() / config.n_trials as f64
    };
    let std_error = if config.n_trials > 1 {
        let s: CompensatedSum = per_trial.iter().map(|x| (x - mse).powi(2)).collect();
        (s.value() / (config.n_trials - 1) as f64 / config.n_trials as f64).sqrt()
    } else {
        f64::NAN
    };
    let series = covariance_trace_series(scenario, &gammas, sigma0, warmup + config.horizon)?;
    let expected: CompensatedSum = series.iter().flat_map(|s| s[warmup..].iter().copied()).collect();
    Ok(MonteCarloStats {
        n_trials: config.n_trials,
        horizon: config.horizon,
        warmup_steps: warmup,
        mse_per_target,
        mse,
        std_error,
        expected: expected.value() / m,
    })
}

/// A single trial with its full per-step record (warmup included).
pub fn simulate_trace(
    scenario: &Scenario,
    solution: &TrajectorySolution,
    sigma0: &[Mat],
    config: &SimulationConfig,
    trial: u64,
) -> Result<SimTrace> {
    let tau = solution.tau();
    config.check(tau)?;
    check_sigma0(scenario, sigma0)?;
    let gammas = gamma_matrix(scenario, solution, config.gamma_source);
    let sims = target_sims(scenario, sigma0)?;
    let warmup = config.warmup_cycles * tau;
    let t = run_trial(&sims, &gammas, warmup, config.horizon, config.seed, trial, true)?;
    Ok(t.trace.expect("recorded"))
}

/// `10·I` per target, an arbitrary initial covariance.
pub fn default_sigma0(scenario: &Scenario) -> Vec<Mat> {
    scenario.targets.iter().map(|t| Mat::identity(t.state_dim(), t.state_dim()) * 10.0).collect()
}
