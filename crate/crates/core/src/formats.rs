//! On-disk formats. Every file carries a versioned `schema` field.
//!
//! Scenario (TOML, `permon-scenario/1`):
//!
//! ```toml
//! schema = "permon-scenario/1"
//! name = "three-target"
//!
//! [agent]
//! u_max = 0.33
//! s0 = [1.0, 1.0]
//!
//! [[targets]]
//! id = 1
//! position = [1.0, 1.0]
//! range = 0.6
//! a = [[1.1, 0.0], [0.0, 1.1]]       # rows
//! q = [[0.1, 0.0], [0.0, 0.1]]
//! h_max = [[0.7071, 0.7071], [-0.7071, 0.7071]]
//! r = [[1.0, 0.0], [0.0, 1.0]]
//! ```
//!
//! Solution (JSON, `permon-solution/1`): schedule, positions, γ, squared
//! distances, the per-slot `Γ`/`Π` blocks and costs; infinite costs are `null`.
//!
//! Run report (JSON, `permon-report/1`): best cycle and cost, the iteration
//! history and timing.
//!
//! Tables (CSV): `history.csv` one row per iteration; `trajectory.csv` one row
//! per step; `targets.csv` one row per (step, target).

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::model::{AgentModel, Point, Scenario, TargetModel};
use crate::scheduler::{IterationRecord, SearchState};
use crate::sdp::SdpStatus;
use crate::trajectory::{CycleSchedule, TrajectorySolution};

pub const SCENARIO_SCHEMA: &str = "permon-scenario/1";
pub const SOLUTION_SCHEMA: &str = "permon-solution/1";
pub const REPORT_SCHEMA: &str = "permon-report/1";

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    schema: String,
    name: String,
    agent: AgentFile,
    targets: Vec<TargetFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentFile {
    u_max: f64,
    s0: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TargetFile {
    id: usize,
    position: [f64; 2],
    range: f64,
    a: Rows,
    q: Rows,
    h_max: Rows,
    r: Rows,
}

fn check_schema(found: &str, expected: &str) -> Result<()> {
    if found != expected {
        return Err(Error::Parse(format!("schema: expected \"{expected}\", found \"{found}\"")));
    }
    Ok(())
}

fn matrix(rows: &Rows, field: &str) -> Result<Mat> {
    linalg::from_rows(rows).map_err(|e| Error::Parse(format!("{field}: {e}")))
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    check_schema(&file.schema, SCENARIO_SCHEMA)?;
    let targets = file
        .targets
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let field = |name: &str| format!("targets[{k}] (id {}).{name}", t.id);
            Ok(TargetModel {
                id: t.id,
                a: matrix(&t.a, &field("a"))?,
                q: matrix(&t.q, &field("q"))?,
                h_max: matrix(&t.h_max, &field("h_max"))?,
                r: matrix(&t.r, &field("r"))?,
                position: Point::new(t.position[0], t.position[1]),
                range: t.range,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Scenario {
        name: file.name,
        targets,
        agent: AgentModel {
            u_max: file.agent.u_max,
            s0: Point::new(file.agent.s0[0], file.agent.s0[1]),
        },
    })
}

pub fn scenario_to_toml(scenario: &Scenario) -> String {
    let file = ScenarioFile {
        schema: SCENARIO_SCHEMA.into(),
        name: scenario.name.clone(),
        agent: AgentFile { u_max: scenario.agent.u_max, s0: [scenario.agent.s0.x, scenario.agent.s0.y] },
        targets: scenario
            .targets
            .iter()
            .map(|t| TargetFile {
                id: t.id,
                position: [t.position.x, t.position.y],
                range: t.range,
                a: linalg::to_rows(&t.a),
                q: linalg::to_rows(&t.q),
                h_max: linalg::to_rows(&t.h_max),
                r: linalg::to_rows(&t.r),
            })
            .collect(),
    };
    toml::to_string(&file).expect("scenario fields are always representable")
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario(&text).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn save_scenario(path: &Path, scenario: &Scenario) -> Result<()> {
    Ok(std::fs::write(path, scenario_to_toml(scenario))?)
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub schema: String,
    pub scenario: String,
    pub n_targets: usize,
    pub sequence: Vec<usize>,
    pub tau: usize,
    pub visit_slots: Vec<usize>,
    pub status: SdpStatus,
    pub cost: Option<f64>,
    pub sdp_objective: Option<f64>,
    pub oracle_cost: Option<f64>,
    pub positions: Vec<[f64; 2]>,
    pub gammas: Rows,
    pub distances_sq: Rows,
    /// `[target][slot]` rows of `Γ_i(k)`.
    pub gamma_blocks: Vec<Vec<Rows>>,
    pub pi_blocks: Vec<Vec<Rows>>,
    pub warnings: Vec<String>,
}

impl SolutionFile {
    pub fn from_solution(scenario: &Scenario, sol: &TrajectorySolution) -> Self {
        let blocks = |bs: &[Vec<Mat>]| bs.iter().map(|v| v.iter().map(linalg::to_rows).collect()).collect();
        Self {
            schema: SOLUTION_SCHEMA.into(),
            scenario: scenario.name.clone(),
            n_targets: scenario.n_targets(),
            sequence: sol.schedule.sequence.clone(),
            tau: sol.tau(),
            visit_slots: sol.schedule.visit_slots.clone(),
            status: sol.status,
            cost: finite(sol.cost),
            sdp_objective: finite(sol.sdp_objective),
            oracle_cost: sol.oracle_cost.and_then(finite),
            positions: sol.positions.iter().map(|p| [p.x, p.y]).collect(),
            gammas: sol.gammas.clone(),
            distances_sq: sol.distances_sq.clone(),
            gamma_blocks: blocks(&sol.gamma_blocks),
            pi_blocks: blocks(&sol.pi_blocks),
            warnings: sol.warnings.clone(),
        }
    }

    /// Rebuild the solution, checking it against `scenario`.
    pub fn into_solution(self, scenario: &Scenario) -> Result<TrajectorySolution> {
        check_schema(&self.schema, SOLUTION_SCHEMA)?;
        let n = scenario.n_targets();
        if self.n_targets != n {
            return Err(Error::Dimension(format!(
                "solution has {} targets, scenario has {n}",
                self.n_targets
            )));
        }
        let tau = self.tau;
        let rows_ok = |m: &Rows| m.len() == n && m.iter().all(|r| r.len() == tau);
        if self.positions.len() != tau || !rows_ok(&self.gammas) || !rows_ok(&self.distances_sq) {
            return Err(Error::Dimension(format!(
                "solution arrays do not match τ = {tau} and {n} targets"
            )));
        }
        let schedule = CycleSchedule::new(self.sequence, tau, self.visit_slots, n)?;
        let blocks = |bs: Vec<Vec<Rows>>, what: &str| -> Result<Vec<Vec<Mat>>> {
            if bs.len() != n {
                return Err(Error::Dimension(format!("{what}: {} targets, expected {n}", bs.len())));
            }
            bs.iter()
                .zip(&scenario.targets)
                .map(|(v, t)| {
                    if !v.is_empty() && v.len() != tau {
                        return Err(Error::Dimension(format!("{what}: {} slots for τ = {tau}", v.len())));
                    }
                    v.iter()
                        .map(|r| {
                            let m = linalg::from_rows(r)?;
                            if m.shape() != t.a.shape() {
                                return Err(Error::Dimension(format!("{what}: block shape {:?}", m.shape())));
                            }
                            Ok(m)
                        })
                        .collect()
                })
                .collect()
        };
        Ok(TrajectorySolution {
            schedule,
            status: self.status,
            positions: self.positions.iter().map(|p| Point::new(p[0], p[1])).collect(),
            gammas: self.gammas,
            distances_sq: self.distances_sq,
            gamma_blocks: blocks(self.gamma_blocks, "gamma_blocks")?,
            pi_blocks: blocks(self.pi_blocks, "pi_blocks")?,
            cost: self.cost.unwrap_or(f64::INFINITY),
            sdp_objective: self.sdp_objective.unwrap_or(f64::NAN),
            oracle_cost: self.oracle_cost,
            diagnostics: None,
            warnings: self.warnings,
        })
    }
}

pub fn save_solution(path: &Path, scenario: &Scenario, sol: &TrajectorySolution) -> Result<()> {
    let text = serde_json::to_string_pretty(&SolutionFile::from_solution(scenario, sol))?;
    Ok(std::fs::write(path, text + "\n")?)
}

pub fn load_solution(path: &Path, scenario: &Scenario) -> Result<TrajectorySolution> {
    let text = std::fs::read_to_string(path)?;
    let file: SolutionFile = serde_json::from_str(&text)?;
    file.into_solution(scenario)
}

/// One row of the iteration history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iteration: usize,
    pub tau: usize,
    /// Target ids joined with `-`.
    pub sequence: String,
    pub status: SdpStatus,
    pub cost: Option<f64>,
    pub best_cost: Option<f64>,
    pub solve_seconds: f64,
    pub cumulative_seconds: f64,
    pub n_warnings: usize,
}

impl From<&IterationRecord> for HistoryRow {
    fn from(r: &IterationRecord) -> Self {
        Self {
            iteration: r.iteration,
            tau: r.tau,
            sequence: join_ids(&r.sequence),
            status: r.status,
            cost: finite(r.cost),
            best_cost: finite(r.best_cost),
            solve_seconds: r.solve_seconds,
            cumulative_seconds: r.cumulative_seconds,
            n_warnings: r.warnings.len(),
        }
    }
}

fn join_ids(ids: &[usize]) -> String {
    ids.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("-")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestCycle {
    pub sequence: Vec<usize>,
    pub tau: usize,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateLog {
    pub iteration: usize,
    pub sequence: Vec<usize>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: String,
    pub tool_version: String,
    pub scenario: String,
    pub best: Option<BestCycle>,
    pub iterations: usize,
    pub remaining_candidates: usize,
    pub wall_seconds: f64,
    pub solver_seconds: f64,
    pub history: Vec<HistoryRow>,
    /// Candidates that produced warnings.
    pub candidate_log: Vec<CandidateLog>,
}

impl RunReport {
    pub fn new(scenario: &Scenario, state: &SearchState) -> Self {
        let best = state.best_solution.as_ref().map(|s| BestCycle {
            sequence: s.schedule.sequence.clone(),
            tau: s.tau(),
            cost: state.best_cost,
        });
        Self {
            schema: REPORT_SCHEMA.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            scenario: scenario.name.clone(),
            best,
            iterations: state.explored,
            remaining_candidates: state.remaining,
            wall_seconds: state.wall_seconds,
            solver_seconds: state.history.last().map_or(0.0, |r| r.cumulative_seconds),
            history: state.history.iter().map(HistoryRow::from).collect(),
            candidate_log: state
                .history
                .iter()
                .filter(|r| !r.warnings.is_empty())
                .map(|r| CandidateLog {
                    iteration: r.iteration,
                    sequence: r.sequence.clone(),
                    warnings: r.warnings.clone(),
                })
                .collect(),
        }
    }
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse(format!("{other:?}")),
    }
}

pub fn write_history_csv(path: &Path, state: &SearchState) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    for r in &state.history {
        w.serialize(HistoryRow::from(r)).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_history_csv(path: &Path) -> Result<Vec<HistoryRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
    r.deserialize().map(|row| row.map_err(csv_error)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub k: usize,
    pub x: f64,
    pub y: f64,
    /// Designated target at this step, 0 for none.
    pub owner: usize,
    /// `‖s(k+1) − s(k)‖`, cyclic.
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetStepRow {
    pub k: usize,
    pub target: usize,
    pub gamma: f64,
    pub distance_sq: f64,
    /// `tr Σ_i(k)` from the SDP's blocks.
    pub covariance_trace: Option<f64>,
}

pub fn write_step_tables(dir: &Path, sol: &TrajectorySolution) -> Result<()> {
    let tau = sol.tau();
    let mut w = csv::Writer::from_path(dir.join("trajectory.csv")).map_err(csv_error)?;
    for k in 0..tau {
        let p = sol.positions[k];
        w.serialize(TrajectoryRow {
            k,
            x: p.x,
            y: p.y,
            owner: sol.schedule.owner(k).unwrap_or(0),
            step: (sol.positions[(k + 1) % tau] - p).norm(),
        })
        .map_err(csv_error)?;
    }
    w.flush()?;
    let traces = sol.covariance_traces();
    let mut w = csv::Writer::from_path(dir.join("targets.csv")).map_err(csv_error)?;
    for k in 0..tau {
        for i in 0..sol.gammas.len() {
            w.serialize(TargetStepRow {
                k,
                target: i + 1,
                gamma: sol.gammas[i][k],
                distance_sq: sol.distances_sq[i][k],
                covariance_trace: traces.get(i).and_then(|t| t.get(k)).copied(),
            })
            .map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Static plot of the target ranges and the cyclic trajectory.
pub fn trajectory_svg(scenario: &Scenario, sol: &TrajectorySolution) -> String {
    let pts = scenario
        .targets
        .iter()
        .flat_map(|t| [t.position - Point::new(t.range, t.range), t.position + Point::new(t.range, t.range)])
        .chain(sol.positions.iter().copied());
    let (mut lo, mut hi) = (Point::repeat(f64::INFINITY), Point::repeat(f64::NEG_INFINITY));
    for p in pts {
        lo = lo.inf(&p);
        hi = hi.sup(&p);
    }
    let pad = 0.1 * (hi - lo).max().max(1e-3);
    lo -= Point::repeat(pad);
    hi += Point::repeat(pad);
    let size = 480.0;
    let scale = size / (hi - lo).max();
    let map = |p: &Point| ((p.x - lo.x) * scale, (hi.y - p.y) * scale);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for t in &scenario.targets {
        let (x, y) = map(&t.position);
        let _ = writeln!(
            s,
            r##"<circle cx="{x:.2}" cy="{y:.2}" r="{:.2}" fill="#dde8f5" stroke="#5a7fb0"/>"##,
            t.range * scale
        );
        let _ = writeln!(s, r##"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="#1f3f70"/>"##);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" font-size="12">{}</text>"#, x + 5.0, y - 5.0, t.id);
    }
    let path: Vec<String> = sol
        .positions
        .iter()
        .map(|p| {
            let (x, y) = map(p);
            format!("{x:.2},{y:.2}")
        })
        .collect();
    let _ = writeln!(s, r##"<polygon points="{}" fill="none" stroke="#c03030"/>"##, path.join(" "));
    for p in &sol.positions {
        let (x, y) = map(p);
        let _ = writeln!(s, r##"<circle cx="{x:.2}" cy="{y:.2}" r="2" fill="#c03030"/>"##);
    }
    s.push_str("</svg>\n");
    s
}

/// Static plot of per-iteration cost and best-so-far cost.
pub fn cost_svg(state: &SearchState) -> String {
    let (w, h, m) = (640.0, 360.0, 40.0);
    let finite: Vec<(usize, f64, f64)> = state
        .history
        .iter()
        .filter(|r| r.best_cost.is_finite())
        .map(|r| (r.iteration, r.cost, r.best_cost))
        .collect();
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    if let (Some(first), Some(last)) = (finite.first(), state.history.last()) {
        let costs = finite.iter().flat_map(|r| [r.1, r.2]).filter(|c| c.is_finite());
        let (ymin, ymax) = costs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), c| (a.min(c), b.max(c)));
        let span = (ymax - ymin).max(1e-9);
        let x0 = first.0 as f64;
        let xspan = (last.iteration as f64 - x0).max(1.0);
        let map = |i: usize, c: f64| (m + (i as f64 - x0) / xspan * (w - 2.0 * m), h - m - (c - ymin) / span * (h - 2.0 * m));
        for r in &finite {
            if r.1.is_finite() {
                let (x, y) = map(r.0, r.1);
                let _ = writeln!(s, r##"<circle cx="{x:.2}" cy="{y:.2}" r="2" fill="#888"/>"##);
            }
        }
        let best: Vec<String> = finite
            .iter()
            .map(|r| {
                let (x, y) = map(r.0, r.2);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(s, r##"<polyline points="{}" fill="none" stroke="#c03030"/>"##, best.join(" "));
        let _ = writeln!(s, r#"<text x="{m}" y="20" font-size="12">best {ymin:.4}, worst {ymax:.4}</text>"#);
    }
    s.push_str("</svg>\n");
    s
}
