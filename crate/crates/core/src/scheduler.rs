//! Cycle search: minimum-transition graph over targets, translation of visit
//! sequences into schedules, and the ordered exploration loop that solves one
//! trajectory SDP per candidate.

use std::collections::{BTreeSet, HashSet};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Scenario;
use crate::sdp::SdpStatus;
use crate::trajectory::{solve_schedule, CycleSchedule, Prop2Options, TrajectorySolution};

/// Slack subtracted before rounding up, so that exact multiples of `u_max`
/// are not pushed to the next step by floating-point noise.
const CEIL_EPS: f64 = 1e-9;

/// Edge costs `ξ(i, h)` between targets, 1-based through the accessors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetGraph {
    pub n: usize,
    pub xi: Vec<Vec<usize>>,
}

impl TargetGraph {
    pub fn from_scenario(scenario: &Scenario) -> Self {
        let n = scenario.n_targets();
        let xi = (1..=n).map(|i| (1..=n).map(|h| edge_cost(scenario, i, h)).collect()).collect();
        Self { n, xi }
    }

    /// From an explicit cost matrix; the diagonal must be 1 and every entry ≥ 1.
    pub fn from_matrix(xi: Vec<Vec<usize>>) -> Result<Self> {
        let n = xi.len();
        for (i, row) in xi.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Dimension(format!("row {} has {} entries, expected {n}", i + 1, row.len())));
            }
            if row[i] != 1 {
                return Err(Error::InvalidScenario(format!("ξ({0},{0}) must be 1", i + 1)));
            }
            if row.contains(&0) {
                return Err(Error::InvalidScenario(format!("row {} has a zero edge cost", i + 1)));
            }
        }
        Ok(Self { n, xi })
    }

    pub fn xi(&self, i: usize, h: usize) -> usize {
        self.xi[i - 1][h - 1]
    }

    /// Whether `ξ(a, v) + ξ(v, b) ≥ ξ(a, b)` for all triples. When it holds,
    /// inserting a visit never shortens a cycle.
    pub fn satisfies_triangle_inequality(&self) -> bool {
        (1..=self.n).all(|a| {
            (1..=self.n).all(|b| (1..=self.n).all(|v| self.xi(a, v) + self.xi(v, b) >= self.xi(a, b)))
        })
    }
}

/// `max(1, ⌈(‖x_i − x_h‖ − r_i − r_h)/u_max⌉)`, and 1 for `i = h`.
pub fn edge_cost(scenario: &Scenario, i: usize, h: usize) -> usize {
    if i == h {
        return 1;
    }
    let a = scenario.target(i);
    let b = scenario.target(h);
    let gap = (a.position - b.position).norm() - a.range - b.range;
    let steps = (gap / scenario.agent.u_max - CEIL_EPS).ceil();
    if steps < 1.0 {
        1
    } else {
        steps as usize
    }
}

/// `ξ(n_F, n_1) + Σ_j ξ(n_j, n_{j+1})`.
pub fn cycle_length(graph: &TargetGraph, sequence: &[usize]) -> usize {
    let f = sequence.len();
    (0..f).map(|j| graph.xi(sequence[j], sequence[(j + 1) % f])).sum()
}

/// Step index of each sequence entry: the first at 0, then `ξ` apart.
pub fn visit_slots(graph: &TargetGraph, sequence: &[usize]) -> Vec<usize> {
    let mut slots = Vec::with_capacity(sequence.len());
    let mut k = 0;
    for (j, &n) in sequence.iter().enumerate() {
        slots.push(k);
        if let Some(&next) = sequence.get(j + 1) {
            k += graph.xi(n, next);
        }
    }
    slots
}

pub fn schedule_from_sequence(graph: &TargetGraph, sequence: &[usize]) -> Result<CycleSchedule> {
    if sequence.is_empty() {
        return Err(Error::InvalidSchedule("empty visit sequence".into()));
    }
    if let Some(&bad) = sequence.iter().find(|&&id| id == 0 || id > graph.n) {
        return Err(Error::InvalidSchedule(format!("unknown target id {bad}")));
    }
    let tau = cycle_length(graph, sequence);
    CycleSchedule::new(sequence.to_vec(), tau, visit_slots(graph, sequence), graph.n)
}

/// Lexicographically smallest rotation.
pub fn canonicalize(sequence: &[usize]) -> Vec<usize> {
    let f = sequence.len();
    (0..f)
        .map(|r| sequence[r..].iter().chain(&sequence[..r]).copied().collect::<Vec<_>>())
        .min()
        .unwrap_or_default()
}

/// Candidates ordered by `(τ, sequence)`; every canonical sequence is
/// accepted at most once over the list's lifetime.
#[derive(Debug, Clone, Default)]
pub struct CandidateList {
    queue: BTreeSet<(usize, Vec<usize>)>,
    seen: HashSet<Vec<usize>>,
}

impl CandidateList {
    pub fn new() -> Self {
        Self::default()
    }

    /// Canonicalize and enqueue; false if the sequence was already seen.
    pub fn push(&mut self, graph: &TargetGraph, sequence: &[usize]) -> bool {
        let canon = canonicalize(sequence);
        if !self.seen.insert(canon.clone()) {
            return false;
        }
        let tau = cycle_length(graph, &canon);
        self.queue.insert((tau, canon));
        true
    }

    pub fn pop(&mut self) -> Option<(Vec<usize>, usize)> {
        self.queue.pop_first().map(|(tau, s)| (s, tau))
    }

    pub fn peek(&self) -> Option<(&[usize], usize)> {
        self.queue.first().map(|(tau, s)| (s.as_slice(), *tau))
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn seen(&self) -> usize {
        self.seen.len()
    }

    /// Queued `(sequence, τ)` pairs in pop order.
    pub fn iter(&self) -> impl Iterator<Item = (&[usize], usize)> {
        self.queue.iter().map(|(tau, s)| (s.as_slice(), *tau))
    }
}

/// Every permutation of `1..=n` that starts with target 1, one per cyclic class.
pub fn init_candidates(graph: &TargetGraph) -> CandidateList {
    let mut list = CandidateList::new();
    if graph.n == 0 {
        return list;
    }
    let mut rest: Vec<usize> = (2..=graph.n).collect();
    permute(&mut rest, 0, &mut |p| {
        let mut seq = Vec::with_capacity(graph.n);
        seq.push(1);
        seq.extend_from_slice(p);
        list.push(graph, &seq);
    });
    list
}

fn permute(v: &mut [usize], start: usize, emit: &mut impl FnMut(&[usize])) {
    if start == v.len() {
        emit(v);
        return;
    }
    for i in start..v.len() {
        v.swap(start, i);
        permute(v, start + 1, emit);
        v.swap(start, i);
    }
}

/// Children of `sequence`: every target inserted before each position
/// `2..=F+1` (1-based; the last appends). Not deduplicated.
pub fn expand(sequence: &[usize], n_targets: usize) -> Vec<Vec<usize>> {
    let f = sequence.len();
    let mut out = Vec::with_capacity(n_targets * f);
    for p in 1..=f {
        for v in 1..=n_targets {
            let mut child = Vec::with_capacity(f + 1);
            child.extend_from_slice(&sequence[..p]);
            child.push(v);
            child.extend_from_slice(&sequence[p..]);
            out.push(child);
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct SearchConfig {
    pub n_iter: usize,
    /// Wall-clock limit checked before each batch.
    pub budget: Option<Duration>,
    /// Candidates solved concurrently per batch; 1 is sequential.
    pub parallel: usize,
    pub options: Prop2Options,
    /// Keep every Optimal solution in [`SearchState::solutions`].
    pub keep_solutions: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self { n_iter: 200, budget: None, parallel: 1, options: Prop2Options::default(), keep_solutions: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based.
    pub iteration: usize,
    pub tau: usize,
    pub sequence: Vec<usize>,
    pub status: SdpStatus,
    /// `+∞` unless Optimal.
    pub cost: f64,
    pub best_cost: f64,
    pub solve_seconds: f64,
    pub cumulative_seconds: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SearchState {
    pub best_cost: f64,
    pub best_cycle: Option<Vec<usize>>,
    pub best_solution: Option<TrajectorySolution>,
    /// Optimal solutions in exploration order, when requested.
    pub solutions: Vec<TrajectorySolution>,
    pub explored: usize,
    pub history: Vec<IterationRecord>,
    /// Candidates still queued when the search stopped.
    pub remaining: usize,
    pub wall_seconds: f64,
    pub graph: TargetGraph,
}

fn solve_candidate(
    scenario: &Scenario,
    graph: &TargetGraph,
    sequence: &[usize],
    options: &Prop2Options,
) -> (TrajectorySolution, f64) {
    let start = Instant::now();
    let sol = match schedule_from_sequence(graph, sequence) {
        Ok(schedule) => match solve_schedule(scenario, &schedule, options) {
            Ok(s) => s,
            Err(e) => TrajectorySolution::failed(schedule, SdpStatus::NumericalFailure, e.to_string()),
        },
        Err(e) => {
            // unreachable for candidates built from permutations
            let schedule = CycleSchedule {
                sequence: sequence.to_vec(),
                tau: 1,
                b: vec![vec![false]; graph.n],
                visit_slots: vec![],
            };
            TrajectorySolution::failed(schedule, SdpStatus::NumericalFailure, e.to_string())
        }
    };
    (sol, start.elapsed().as_secs_f64())
}

/// Explore candidates in order of cycle length, keeping the cheapest solution.
pub fn sdp_pm(scenario: &Scenario, config: &SearchConfig) -> SearchState {
    let start = Instant::now();
    let graph = TargetGraph::from_scenario(scenario);
    let mut list = init_candidates(&graph);
    let mut state = SearchState {
        best_cost: f64::INFINITY,
        best_cycle: None,
        best_solution: None,
        solutions: Vec::new(),
        explored: 0,
        history: Vec::new(),
        remaining: 0,
        wall_seconds: 0.0,
        graph: graph.clone(),
    };
    let width = config.parallel.max(1);
    let mut cumulative = 0.0;
    while state.explored < config.n_iter && !list.is_empty() {
        if config.budget.is_some_and(|b| start.elapsed() >= b) {
            log::info!("time budget reached after {} iterations", state.explored);
            break;
        }
        let take = width.min(config.n_iter - state.explored);
        let batch: Vec<(Vec<usize>, usize)> = std::iter::from_fn(|| list.pop()).take(take).collect();
        let results: Vec<(TrajectorySolution, f64)> = if width == 1 {
            batch.iter().map(|(s, _)| solve_candidate(scenario, &graph, s, &config.options)).collect()
        } else {
            batch.par_iter().map(|(s, _)| solve_candidate(scenario, &graph, s, &config.options)).collect()
        };
        for ((sequence, tau), (sol, secs)) in batch.into_iter().zip(results) {
            state.explored += 1;
            cumulative += secs;
            let cost = if sol.is_optimal() { sol.cost } else { f64::INFINITY };
            if cost < state.best_cost {
                state.best_cost = cost;
                state.best_cycle = Some(sequence.clone());
                state.best_solution = Some(sol.clone());
            }
            log::debug!(
                "iteration {}: {:?} τ={tau} {} cost={cost}",
                state.explored,
                sequence,
                sol.status
            );
            state.history.push(IterationRecord {
                iteration: state.explored,
                tau,
                sequence: sequence.clone(),
                status: sol.status,
                cost,
                best_cost: state.best_cost,
                solve_seconds: secs,
                cumulative_seconds: cumulative,
                warnings: sol.warnings.clone(),
            });
            if config.keep_solutions && sol.is_optimal() {
                state.solutions.push(sol);
            }
            for child in expand(&sequence, graph.n) {
                list.push(&graph, &child);
            }
        }
    }
    state.remaining = list.len();
    state.wall_seconds = start.elapsed().as_secs_f64();
    state
}
