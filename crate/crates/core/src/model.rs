//! Targets, agent, and the distance-dependent sensing model.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::linalg::{self, Mat};

/// Number of spatial dimensions of the environment.
pub const ENV_DIM: usize = 2;

pub type Point = Vector2<f64>;

/// Relative singular-value threshold used for the observability rank test.
pub const OBSERVABILITY_RANK_TOL: f64 = 1e-9;

/// One monitored target: linear stochastic dynamics plus a sensor footprint.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetModel {
    /// 1-based identifier, contiguous within a scenario.
    pub id: usize,
    /// State transition `A` (L×L).
    pub a: Mat,
    /// Process noise covariance `Q` (L×L).
    pub q: Mat,
    /// Observation matrix at zero distance (m×L).
    pub h_max: Mat,
    /// Measurement noise covariance `R` (m×m).
    pub r: Mat,
    pub position: Point,
    /// Sensing radius; nothing is observed at or beyond it.
    pub range: f64,
}

impl TargetModel {
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn obs_dim(&self) -> usize {
        self.h_max.nrows()
    }

    /// `G = H_maxᵀ R⁻¹ H_max`, the information gained per unit of `gamma`.
    pub fn information_gain(&self) -> Mat {
        let rinv = linalg::spd_inverse(&self.r, "R").unwrap_or_else(|_| {
            // unvalidated scenario; fall back to a generic inverse
            self.r.clone().try_inverse().unwrap_or_else(|| Mat::zeros(self.obs_dim(), self.obs_dim()))
        });
        linalg::symmetrize(&(self.h_max.transpose() * rinv * &self.h_max))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentModel {
    /// Maximum displacement per time step.
    pub u_max: f64,
    /// Initial position; informational only.
    pub s0: Point,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub targets: Vec<TargetModel>,
    pub agent: AgentModel,
}

impl Scenario {
    pub fn n_targets(&self) -> usize {
        self.targets.len()
    }

    /// Target by 1-based id.
    pub fn target(&self, id: usize) -> &TargetModel {
        &self.targets[id - 1]
    }
}

/// Signal-strength factor in `[0, 1]`: `1 − ‖s − x‖²/r²` inside the range, 0 outside.
pub fn gamma(target: &TargetModel, s: &Point) -> f64 {
    let d2 = (s - target.position).norm_squared();
    let r2 = target.range * target.range;
    if d2 < r2 {
        1.0 - d2 / r2
    } else {
        0.0
    }
}

/// `√γ(s) · H_max`.
pub fn observation_matrix(target: &TargetModel, s: &Point) -> Mat {
    &target.h_max * gamma(target, s).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Check {
    ProcessNoiseNotPd,
    MeasurementNoiseNotPd,
    NotObservable,
    NonPositiveRange,
    NonPositiveSpeed,
    DimensionMismatch,
    BadIds,
    NoTargets,
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Check::ProcessNoiseNotPd => "Q not positive definite",
            Check::MeasurementNoiseNotPd => "R not positive definite",
            Check::NotObservable => "not observable",
            Check::NonPositiveRange => "sensing range not positive",
            Check::NonPositiveSpeed => "u_max not positive",
            Check::DimensionMismatch => "dimension mismatch",
            Check::BadIds => "target ids not unique and contiguous 1..N",
            Check::NoTargets => "no targets",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// Offending target id, `None` for scenario-level checks.
    pub target: Option<usize>,
    pub check: Check,
    pub detail: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.target {
            Some(id) => write!(f, "target {id}: {}", self.check)?,
            None => write!(f, "scenario: {}", self.check)?,
        }
        if !self.detail.is_empty() {
            write!(f, " ({})", self.detail)?;
        }
        Ok(())
    }
}

/// Collect every assumption the optimizer relies on that the scenario breaks.
pub fn validate(scenario: &Scenario) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |target: Option<usize>, check: Check, detail: String| {
        out.push(Violation { target, check, detail })
    };

    if scenario.targets.is_empty() {
        push(None, Check::NoTargets, String::new());
    }
    if !(scenario.agent.u_max > 0.0) {
        push(None, Check::NonPositiveSpeed, format!("u_max = {}", scenario.agent.u_max));
    }
    let ids_ok = scenario
        .targets
        .iter()
        .enumerate()
        .all(|(k, t)| t.id == k + 1);
    if !ids_ok {
        let ids: Vec<_> = scenario.targets.iter().map(|t| t.id).collect();
        push(None, Check::BadIds, format!("ids {ids:?}"));
    }

    for t in &scenario.targets {
        let id = Some(t.id);
        let l = t.a.nrows();
        let m = t.h_max.nrows();
        let dims_ok = t.a.is_square()
            && t.q.shape() == (l, l)
            && t.h_max.ncols() == l
            && t.r.shape() == (m, m)
            && l > 0
            && m > 0;
        if !dims_ok {
            push(
                id,
                Check::DimensionMismatch,
                format!(
                    "A {:?}, Q {:?}, H_max {:?}, R {:?}",
                    t.a.shape(),
                    t.q.shape(),
                    t.h_max.shape(),
                    t.r.shape()
                ),
            );
            continue;
        }
        if !is_symmetric(&t.q) || !linalg::is_positive_definite(&t.q) {
            push(id, Check::ProcessNoiseNotPd, String::new());
        }
        if !is_symmetric(&t.r) || !linalg::is_positive_definite(&t.r) {
            push(id, Check::MeasurementNoiseNotPd, String::new());
        }
        let rank = linalg::rank(
            &linalg::observability_matrix(&t.a, &t.h_max),
            OBSERVABILITY_RANK_TOL,
        );
        if rank < l {
            push(id, Check::NotObservable, format!("observability rank {rank} < {l}"));
        }
        if !(t.range > 0.0) {
            push(id, Check::NonPositiveRange, format!("r = {}", t.range));
        }
    }
    out
}

fn is_symmetric(m: &Mat) -> bool {
    let scale = m.amax().max(1.0);
    (m - m.transpose()).amax() <= 1e-12 * scale
}
