//! Joint optimization of the agent trajectory and the target covariances for
//! a fixed cycle length and visit pattern.
//!
//! Variables: agent positions `s(k)`, one squared distance `d_i(k) ∈ [0, r_i²]`
//! per designated visit, and per target block-diagonal `Γ_i`, `Π_i` as in
//! [`crate::sdp::prop1`]. At a designated visit `γ_i(k) = 1 − d_i(k)/r_i²`,
//! substituted directly; elsewhere `γ_i(k) = 0`. `d_i(k) ≥ ‖s(k) − x_i‖²` and
//! `‖s(k+1) − s(k)‖ ≤ u_max` (cyclically) are Schur-complement LMIs. The
//! objective is `(1/τ) Σ_i tr Γ_i`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filtering::{build_augmented, periodic_riccati_fixed_point};
use crate::linalg::{self, Mat};
use crate::model::{Point, Scenario};
use crate::sdp::expr::{AffineExpr, MatExpr, VarId};
use crate::sdp::problem::{MatrixStructure, MatrixVarId, SdpProblem};
use crate::sdp::prop1::{add_riccati_block_lmis, slot_blocks, weighted_trace, SlotScaling};
use crate::sdp::{self, SdpSolution, SdpStatus, SolverDiagnostics, SolverSettings};

/// Cycle lengths above which results are flagged as numerically fragile.
pub const CONDITIONING_TAU: usize = 100;
/// Relative objective/oracle agreement required of an Optimal solve.
pub const ORACLE_REL_TOL: f64 = 1e-4;
/// Absolute slack allowed in a designated visit's distance epigraph.
pub const DISTANCE_SLACK_TOL: f64 = 1e-6;
/// Relative `‖ΓΠ − I‖` allowed per target.
pub const INVERSE_REL_TOL: f64 = 1e-6;

/// A periodic visit plan: which target, if any, owns each step of the cycle.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CycleSchedule {
    /// Visited target ids `(n_1, …, n_F)`, 1-based.
    pub sequence: Vec<usize>,
    pub tau: usize,
    /// `b[i][k]` for target `i + 1` and step `k`.
    pub b: Vec<Vec<bool>>,
    /// Step index of each sequence entry.
    pub visit_slots: Vec<usize>,
}

impl CycleSchedule {
    /// Build from a sequence and its visit slots; `b` is derived.
    pub fn new(
        sequence: Vec<usize>,
        tau: usize,
        visit_slots: Vec<usize>,
        n_targets: usize,
    ) -> Result<Self> {
        if sequence.len() != visit_slots.len() {
            return Err(Error::InvalidSchedule(format!(
                "{} sequence entries but {} visit slots",
                sequence.len(),
                visit_slots.len()
            )));
        }
        let mut b = vec![vec![false; tau]; n_targets];
        for (&id, &k) in sequence.iter().zip(&visit_slots) {
            if id == 0 || id > n_targets {
                return Err(Error::InvalidSchedule(format!("unknown target id {id}")));
            }
            if k >= tau {
                return Err(Error::InvalidSchedule(format!("visit slot {k} outside a cycle of {tau}")));
            }
            b[id - 1][k] = true;
        }
        let s = Self { sequence, tau, b, visit_slots };
        s.check(n_targets, true)?;
        Ok(s)
    }

    pub fn n_targets(&self) -> usize {
        self.b.len()
    }

    /// Target id designated at step `k`.
    pub fn owner(&self, k: usize) -> Option<usize> {
        (0..self.b.len()).find(|&i| self.b[i][k]).map(|i| i + 1)
    }

    pub fn visits(&self, id: usize) -> usize {
        self.b[id - 1].iter().filter(|&&x| x).count()
    }

    /// Structural invariants; with `require_coverage` every target must be visited.
    pub fn check(&self, n_targets: usize, require_coverage: bool) -> Result<()> {
        if self.tau == 0 {
            return Err(Error::InvalidSchedule("cycle length must be at least 1".into()));
        }
        if self.b.len() != n_targets || self.b.iter().any(|row| row.len() != self.tau) {
            return Err(Error::InvalidSchedule(format!(
                "visit matrix must be {n_targets}×{}",
                self.tau
            )));
        }
        for k in 0..self.tau {
            let owners = self.b.iter().filter(|row| row[k]).count();
            if owners > 1 {
                return Err(Error::InvalidSchedule(format!("step {k} is designated to {owners} targets")));
            }
        }
        for (&id, &k) in self.sequence.iter().zip(&self.visit_slots) {
            if id == 0 || id > n_targets || k >= self.tau || !self.b[id - 1][k] {
                return Err(Error::InvalidSchedule(format!(
                    "sequence entry {id}@{k} disagrees with the visit matrix"
                )));
            }
        }
        if require_coverage {
            if let Some(i) = (0..n_targets).find(|&i| !self.b[i].iter().any(|&x| x)) {
                return Err(Error::InvalidSchedule(format!("target {} is never visited", i + 1)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Prop2Options {
    /// Accept schedules that leave targets unvisited.
    pub allow_uncovered: bool,
    /// Pin the agent to these positions instead of optimizing them.
    pub fixed_positions: Option<Vec<Point>>,
    /// Drop the objective (pure feasibility).
    pub feasibility_only: bool,
    pub solver: SolverSettings,
}

/// Handles into the assembled problem.
#[derive(Debug, Clone)]
pub struct Prop2Problem {
    pub problem: SdpProblem,
    pub tau: usize,
    pub positions: Vec<[VarId; 2]>,
    /// `γ_i(k)` as affine expressions.
    pub gammas: Vec<Vec<AffineExpr>>,
    /// `d_i(k)` where designated.
    pub distances: Vec<Vec<Option<VarId>>>,
    pub gamma: Vec<MatrixVarId>,
    pub pi: Vec<MatrixVarId>,
    pub scalings: Vec<SlotScaling>,
    pub blocks: Vec<usize>,
}

fn position_expr(v: &[VarId; 2]) -> [AffineExpr; 2] {
    [AffineExpr::var(v[0]), AffineExpr::var(v[1])]
}

/// `[[c·I₂, e], [eᵀ, t]] ⪰ 0`, i.e. `‖e‖² ≤ c·t`.
fn norm_lmi(e: [AffineExpr; 2], c: f64, t: AffineExpr) -> MatExpr {
    let mut m = MatExpr::zeros(3, 3);
    *m.get_mut(0, 0) = AffineExpr::constant(c);
    *m.get_mut(1, 1) = AffineExpr::constant(c);
    *m.get_mut(0, 2) = e[0].clone();
    *m.get_mut(2, 0) = e[0].clone();
    *m.get_mut(1, 2) = e[1].clone();
    *m.get_mut(2, 1) = e[1].clone();
    *m.get_mut(2, 2) = t;
    m
}

pub fn build_prop2(
    scenario: &Scenario,
    schedule: &CycleSchedule,
    options: &Prop2Options,
) -> Result<Prop2Problem> {
    build_prop2_anchored(scenario, schedule, options, None)
}

/// As [`build_prop2`], with each target's slots scaled by the Cholesky
/// factors of an estimate `anchors[i][k]` of `Π_i(k)`. The constraints and
/// objective are the same up to an exact change of variables; only the
/// conditioning differs.
pub fn build_prop2_anchored(
    scenario: &Scenario,
    schedule: &CycleSchedule,
    options: &Prop2Options,
    anchors: Option<&[Vec<Mat>]>,
) -> Result<Prop2Problem> {
    let n = scenario.n_targets();
    schedule.check(n, !options.allow_uncovered)?;
    let tau = schedule.tau;
    if let Some(a) = anchors {
        if a.len() != n || a.iter().any(|v| v.len() != tau) {
            return Err(Error::Dimension(format!("anchors must be {n} targets × {tau} slots")));
        }
    }
    let u_max = scenario.agent.u_max;
    let mut problem = SdpProblem::new();

    let positions: Vec<[VarId; 2]> = (0..tau)
        .map(|k| [problem.add_free(format!("s[{k}].x")), problem.add_free(format!("s[{k}].y"))])
        .collect();
    if let Some(fixed) = &options.fixed_positions {
        if fixed.len() != tau {
            return Err(Error::Dimension(format!("{} fixed positions for τ = {tau}", fixed.len())));
        }
        for (k, (v, p)) in positions.iter().zip(fixed).enumerate() {
            for c in 0..2 {
                problem.add_equality(
                    format!("fix s[{k}].{c}"),
                    AffineExpr::var(v[c]) - AffineExpr::constant(p[c]),
                )?;
            }
        }
    }

    // motion: one constraint per cyclic edge, a single one for τ = 2
    let edges = match tau {
        1 => 0,
        2 => 1,
        _ => tau,
    };
    for k in 0..edges {
        let next = (k + 1) % tau;
        let a = position_expr(&positions[next]);
        let b = position_expr(&positions[k]);
        let e = [a[0].clone() - b[0].clone(), a[1].clone() - b[1].clone()];
        problem.add_lmi(format!("motion[{k}]"), norm_lmi(e, u_max, AffineExpr::constant(u_max)))?;
    }

    let mut gammas = vec![vec![AffineExpr::zero(); tau]; n];
    let mut distances = vec![vec![None; tau]; n];
    for (i, target) in scenario.targets.iter().enumerate() {
        let r2 = target.range * target.range;
        for k in 0..tau {
            if !schedule.b[i][k] {
                continue;
            }
            let d = problem.add_scalar(format!("d[{}][{k}]", i + 1), Some(0.0), Some(r2));
            let s = position_expr(&positions[k]);
            let e = [
                s[0].clone() - AffineExpr::constant(target.position[0]),
                s[1].clone() - AffineExpr::constant(target.position[1]),
            ];
            problem.add_lmi(format!("distance[{}][{k}]", i + 1), norm_lmi(e, 1.0, AffineExpr::var(d)))?;
            distances[i][k] = Some(d);
            gammas[i][k] = AffineExpr::constant(1.0) - AffineExpr::term(d, 1.0 / r2);
        }
    }

    let mut gamma_ids = Vec::with_capacity(n);
    let mut pi_ids = Vec::with_capacity(n);
    let mut scalings = Vec::with_capacity(n);
    let mut blocks = Vec::with_capacity(n);
    let mut objective = AffineExpr::zero();
    for (i, target) in scenario.targets.iter().enumerate() {
        let aug = build_augmented(target, tau)?;
        let l = aug.block;
        let structure = MatrixStructure::BlockDiagonal { block: l };
        let g = problem.add_sym_matrix(format!("Gamma[{}]", i + 1), aug.dim(), structure)?;
        let p = problem.add_sym_matrix(format!("Pi[{}]", i + 1), aug.dim(), structure)?;
        let scaling = match anchors {
            Some(a) => SlotScaling::anchored(&a[i])?,
            None => SlotScaling::uniform(tau, l, linalg::spectral_norm(&aug.q_tilde_inv)),
        };
        let sb = slot_blocks(&aug, &scaling)?;
        let pis: Vec<_> = (0..tau).map(|k| problem.matrix_block_expr(p, k * l, l)).collect();
        let gs: Vec<_> = (0..tau).map(|k| problem.matrix_block_expr(g, k * l, l)).collect();
        add_riccati_block_lmis(&mut problem, &format!("t{}:", i + 1), &sb, &pis, &gs, &gammas[i])?;
        for (k, gk) in gs.iter().enumerate() {
            objective.add_scaled(&weighted_trace(gk, &scaling.weight(k)), 1.0 / tau as f64);
        }
        gamma_ids.push(g);
        pi_ids.push(p);
        scalings.push(scaling);
        blocks.push(l);
    }
    if !options.feasibility_only {
        problem.set_objective(objective)?;
    }
    Ok(Prop2Problem {
        problem,
        tau,
        positions,
        gammas,
        distances,
        gamma: gamma_ids,
        pi: pi_ids,
        scalings,
        blocks,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySolution {
    pub schedule: CycleSchedule,
    pub status: SdpStatus,
    /// `s(0..τ)`.
    pub positions: Vec<Point>,
    /// `γ_i(k)`, N×τ.
    pub gammas: Vec<Vec<f64>>,
    /// `d_i(k)` at designated visits and `‖s(k) − x_i‖²` elsewhere, N×τ.
    pub distances_sq: Vec<Vec<f64>>,
    /// Per target, the diagonal blocks `Γ_i(k)`.
    pub gamma_blocks: Vec<Vec<Mat>>,
    /// Per target, the diagonal blocks `Π_i(k)`.
    pub pi_blocks: Vec<Vec<Mat>>,
    /// `(1/τ) Σ_i tr Γ_i` when Optimal, `+∞` otherwise.
    pub cost: f64,
    /// Solver objective as returned, whatever the status.
    pub sdp_objective: f64,
    /// `(1/τ) Σ_i Σ_k tr P̄_i(k)⁻¹` for the extracted γ, when it exists.
    pub oracle_cost: Option<f64>,
    pub diagnostics: Option<SolverDiagnostics>,
    pub warnings: Vec<String>,
}

impl TrajectorySolution {
    pub fn tau(&self) -> usize {
        self.schedule.tau
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SdpStatus::Optimal
    }

    /// An infinite-cost placeholder carrying only the schedule and a reason.
    pub fn failed(schedule: CycleSchedule, status: SdpStatus, warning: String) -> Self {
        let n = schedule.n_targets();
        let tau = schedule.tau;
        Self {
            schedule,
            status,
            positions: vec![Point::zeros(); tau],
            gammas: vec![vec![0.0; tau]; n],
            distances_sq: vec![vec![f64::NAN; tau]; n],
            gamma_blocks: vec![Vec::new(); n],
            pi_blocks: vec![Vec::new(); n],
            cost: f64::INFINITY,
            sdp_objective: f64::NAN,
            oracle_cost: None,
            diagnostics: None,
            warnings: vec![warning],
        }
    }

    /// `tr Σ_i(k)` of the SDP's `Γ_i(k)` blocks, N×τ.
    pub fn covariance_traces(&self) -> Vec<Vec<f64>> {
        self.gamma_blocks.iter().map(|bs| bs.iter().map(|b| b.trace()).collect()).collect()
    }

    /// Largest step `‖s(k+1) − s(k)‖` around the cycle.
    pub fn max_step(&self) -> f64 {
        let tau = self.positions.len();
        (0..tau)
            .map(|k| (self.positions[(k + 1) % tau] - self.positions[k]).norm())
            .fold(0.0, f64::max)
    }
}

fn extract(
    scenario: &Scenario,
    schedule: &CycleSchedule,
    p: &Prop2Problem,
    sdp: &SdpSolution,
) -> TrajectorySolution {
    let tau = p.tau;
    let positions: Vec<Point> =
        p.positions.iter().map(|v| Point::new(sdp.value(v[0]), sdp.value(v[1]))).collect();
    let mut gammas = vec![vec![0.0; tau]; p.gammas.len()];
    let mut distances_sq = vec![vec![0.0; tau]; p.gammas.len()];
    for (i, target) in scenario.targets.iter().enumerate() {
        for k in 0..tau {
            gammas[i][k] = sdp.eval(&p.gammas[i][k]);
            distances_sq[i][k] = match p.distances[i][k] {
                Some(d) => sdp.value(d),
                None => (positions[k] - target.position).norm_squared(),
            };
        }
    }
    let mut gamma_blocks = Vec::new();
    let mut pi_blocks = Vec::new();
    for i in 0..p.gamma.len() {
        let l = p.blocks[i];
        let g = linalg::diag_blocks(&sdp.matrix(&p.problem, p.gamma[i]), l);
        let pm = linalg::diag_blocks(&sdp.matrix(&p.problem, p.pi[i]), l);
        gamma_blocks
            .push(g.iter().enumerate().map(|(k, b)| p.scalings[i].unscale_gamma(k, b)).collect());
        pi_blocks.push(pm.iter().enumerate().map(|(k, b)| p.scalings[i].unscale_pi(k, b)).collect());
    }
    TrajectorySolution {
        schedule: schedule.clone(),
        status: sdp.status,
        positions,
        gammas,
        distances_sq,
        gamma_blocks,
        pi_blocks,
        cost: if sdp.is_optimal() { sdp.objective } else { f64::INFINITY },
        sdp_objective: sdp.objective,
        oracle_cost: None,
        diagnostics: Some(sdp.diagnostics.clone()),
        warnings: Vec::new(),
    }
}

/// `(1/τ) Σ_i Σ_k tr P̄_i(k)⁻¹` for the given γ matrix; `+∞` when any target
/// has no periodic steady state.
pub fn oracle_cost(scenario: &Scenario, gammas: &[Vec<f64>]) -> Result<f64> {
    let tau = gammas.first().map_or(0, |g| g.len());
    let mut total = linalg::CompensatedSum::default();
    for (target, g) in scenario.targets.iter().zip(gammas) {
        let clamped: Vec<f64> = g.iter().map(|x| x.clamp(0.0, 1.0)).collect();
        for s in periodic_riccati_fixed_point(target, &clamped)? {
            total.add(linalg::spd_inverse(&s.p, "P̄")?.trace());
        }
    }
    Ok(total.value() / tau as f64)
}

/// Certificate failures of an Optimal solve, as warnings; `fatal` when the
/// solve must be downgraded.
struct Certification {
    warnings: Vec<String>,
    fatal: bool,
}

fn certify(scenario: &Scenario, sol: &mut TrajectorySolution) -> Certification {
    let mut warnings = Vec::new();
    match oracle_cost(scenario, &sol.gammas) {
        Ok(c) => sol.oracle_cost = Some(c),
        Err(e) => {
            sol.oracle_cost = None;
            warnings.push(format!("fixed-point oracle failed on the extracted γ: {e}"));
        }
    }
    let report = check_tightness(sol, scenario);
    let agree = sol.oracle_cost.is_some_and(|c| (sol.cost - c).abs() <= ORACLE_REL_TOL * c.abs());
    if !agree {
        warnings.push(format!("SDP objective {} disagrees with oracle cost {:?}", sol.cost, sol.oracle_cost));
    }
    let slack = report.max_distance_slack > DISTANCE_SLACK_TOL;
    if slack {
        warnings.push(format!(
            "distance epigraph slack {:.3e} exceeds {DISTANCE_SLACK_TOL:e}",
            report.max_distance_slack
        ));
    }
    if report.max_inverse_gap > INVERSE_REL_TOL {
        warnings.push(format!("relative ‖ΓΠ − I‖ = {:.3e} exceeds {INVERSE_REL_TOL:e}", report.max_inverse_gap));
    }
    Certification { warnings, fatal: !agree || slack }
}

fn solve_pass(
    scenario: &Scenario,
    schedule: &CycleSchedule,
    options: &Prop2Options,
    anchors: Option<&[Vec<Mat>]>,
) -> Result<TrajectorySolution> {
    let p = build_prop2_anchored(scenario, schedule, options, anchors)?;
    let sdp_solution = sdp::solve(&p.problem, &options.solver)?;
    Ok(extract(scenario, schedule, &p, &sdp_solution))
}

/// Solve the joint SDP for a schedule and certify the result. A solve whose
/// certificate fails is repeated once with every target's slots rescaled
/// around the first pass's `Π`. If that still fails, an Optimal solve whose
/// objective disagrees with the oracle or whose designated distance
/// epigraphs are slack is reported as NumericalFailure.
pub fn solve_schedule(
    scenario: &Scenario,
    schedule: &CycleSchedule,
    options: &Prop2Options,
) -> Result<TrajectorySolution> {
    schedule.check(scenario.n_targets(), !options.allow_uncovered)?;
    // an unvisited target is only feasible if its open-loop covariance settles
    for (i, target) in scenario.targets.iter().enumerate() {
        if schedule.b[i].iter().any(|&x| x) {
            continue;
        }
        if let Err(e @ Error::Divergent { .. }) = periodic_riccati_fixed_point(target, &vec![0.0; schedule.tau]) {
            let reason = format!("target {} is never visited and its covariance diverges: {e}", target.id);
            log::info!("schedule {:?}: {reason}", schedule.sequence);
            return Ok(TrajectorySolution::failed(schedule.clone(), SdpStatus::Infeasible, reason));
        }
    }
    let mut sol = solve_pass(scenario, schedule, options, None)?;
    let mut notes = Vec::new();
    if schedule.tau > CONDITIONING_TAU {
        notes.push(format!(
            "cycle length {} exceeds {CONDITIONING_TAU}; the SDP is poorly conditioned in this regime",
            schedule.tau
        ));
    }
    if !sol.is_optimal() {
        log::info!("schedule {:?}: solver status {}", schedule.sequence, sol.status);
        sol.warnings.extend(notes);
        return Ok(sol);
    }
    if options.feasibility_only {
        sol.oracle_cost = oracle_cost(scenario, &sol.gammas).ok();
        sol.warnings.extend(notes);
        return Ok(sol);
    }
    let mut cert = certify(scenario, &mut sol);
    if !cert.warnings.is_empty() {
        let anchors = sol.pi_blocks.clone();
        match solve_pass(scenario, schedule, options, Some(&anchors)) {
            Ok(mut second) if second.is_optimal() => {
                let c2 = certify(scenario, &mut second);
                if c2.warnings.len() < cert.warnings.len() || (cert.fatal && !c2.fatal) {
                    log::debug!("schedule {:?}: anchored pass accepted", schedule.sequence);
                    sol = second;
                    cert = c2;
                }
            }
            Ok(second) => log::debug!("schedule {:?}: anchored pass {}", schedule.sequence, second.status),
            Err(e) => log::debug!("schedule {:?}: anchored pass failed: {e}", schedule.sequence),
        }
    }
    sol.warnings.extend(notes);
    sol.warnings.extend(cert.warnings);
    if cert.fatal {
        for w in &sol.warnings {
            log::warn!("schedule {:?}: {w}", schedule.sequence);
        }
        sol.status = SdpStatus::NumericalFailure;
        sol.cost = f64::INFINITY;
    }
    Ok(sol)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SlackKind {
    Distance,
    Inverse,
    Speed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlackEntry {
    pub kind: SlackKind,
    /// 1-based target id, when the constraint belongs to one.
    pub target: Option<usize>,
    pub slot: Option<usize>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TightnessReport {
    /// Largest `d_i(k) − ‖s(k) − x_i‖²` over designated visits.
    pub max_distance_slack: f64,
    /// Largest `‖Γ_iΠ_i − I‖ / (‖Γ_i‖‖Π_i‖)` over targets.
    pub max_inverse_gap: f64,
    /// Largest speed excess `‖s(k+1) − s(k)‖ − u_max`.
    pub max_speed_excess: f64,
    pub flagged: Vec<SlackEntry>,
}

impl TightnessReport {
    pub fn is_tight(&self) -> bool {
        self.flagged.is_empty()
    }
}

pub fn check_tightness(solution: &TrajectorySolution, scenario: &Scenario) -> TightnessReport {
    let schedule = &solution.schedule;
    let mut flagged = Vec::new();
    let mut max_distance_slack: f64 = 0.0;
    for (i, target) in scenario.targets.iter().enumerate() {
        for k in 0..schedule.tau {
            if !schedule.b[i][k] {
                continue;
            }
            let actual = (solution.positions[k] - target.position).norm_squared();
            let slack = solution.distances_sq[i][k] - actual;
            max_distance_slack = max_distance_slack.max(slack.abs());
            if slack.abs() > DISTANCE_SLACK_TOL {
                flagged.push(SlackEntry {
                    kind: SlackKind::Distance,
                    target: Some(i + 1),
                    slot: Some(k),
                    value: slack,
                });
            }
        }
    }
    let mut max_inverse_gap: f64 = 0.0;
    for (i, (gs, ps)) in solution.gamma_blocks.iter().zip(&solution.pi_blocks).enumerate() {
        if gs.is_empty() {
            continue;
        }
        let g = linalg::block_diag(gs);
        let p = linalg::block_diag(ps);
        let eye = Mat::identity(g.nrows(), g.ncols());
        let rel = linalg::spectral_norm(&(&g * &p - eye))
            / (linalg::spectral_norm(&g) * linalg::spectral_norm(&p));
        max_inverse_gap = max_inverse_gap.max(rel);
        if !(rel <= INVERSE_REL_TOL) {
            flagged.push(SlackEntry { kind: SlackKind::Inverse, target: Some(i + 1), slot: None, value: rel });
        }
    }
    let u_max = scenario.agent.u_max;
    let tau = solution.positions.len();
    let mut max_speed_excess = f64::NEG_INFINITY;
    for k in 0..tau {
        let step = (solution.positions[(k + 1) % tau] - solution.positions[k]).norm();
        let excess = step - u_max;
        max_speed_excess = max_speed_excess.max(excess);
        if excess > 1e-6 {
            flagged.push(SlackEntry { kind: SlackKind::Speed, target: None, slot: Some(k), value: excess });
        }
    }
    TightnessReport { max_distance_slack, max_inverse_gap, max_speed_excess, flagged }
}
