//! Heuristic controllers: the strongest-guy placement search, receding-horizon
//! control and the constructive convergence policies.

mod mpc;
mod policies;
mod strongest_guy;

use std::fmt;

use thiserror::Error;

use crate::dynamics::{ControlSequence, DynamicsError};
use crate::numeric::Rational;

pub use mpc::{mpc, InnerSolver, MpcMode, MpcResult, StrongestGuyInner};
pub use policies::{merge_walk_policy, merge_walk_stage_bound, constant_control_policy, constant_control_stage_bound, PolicyOptions, PolicyOutcome};
pub use strongest_guy::{
    apply_index_sequence, modified_strongest_guy, mu, strongest_guy_search, AppliedSequence, IndexSequence,
    SearchMode, SearchOptions, DEFAULT_BUDGET,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HeuristicError {
    #[error("{0} needs a bounded-confidence instance")]
    NeedsBoundedConfidence(&'static str),
    #[error("{0} needs a DeGroot instance")]
    NeedsDeGroot(&'static str),
    #[error("index {index} out of range 0..={n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("sequence has {found} indices but the horizon is {horizon}")]
    SequenceLength { found: usize, horizon: usize },
    #[error("delta {delta} must satisfy 0 <= delta < epsilon")]
    BadDelta { delta: String },
    #[error("beam width must be at least 1")]
    ZeroBeamWidth,
    #[error("exhaustive search needs {required} evaluations, budget is {budget}; use beam or random mode")]
    BudgetExceeded { required: String, budget: u64 },
    #[error("MPC horizon must be at least 1")]
    ZeroMpcHorizon,
    #[error("inner solver failed at stage {stage}: {message}")]
    InnerFailure { stage: usize, message: String },
    #[error("inner solver returned {found} controls for a window of {window} at stage {stage}")]
    InnerLength { stage: usize, found: usize, window: usize },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("control has no influence (min control weight is 0)")]
    Uncontrollable,
    #[error("tolerance {0} must lie in (0, 1)")]
    BadTolerance(String),
    #[error("envelope |x - p| <= (1 - omega)^t broken for voter {voter} at stage {stage}")]
    EnvelopeViolated { stage: usize, voter: usize },
    #[error("policy did not finish within its stage bound {bound}")]
    BoundExceeded { bound: u64 },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// How much a reported count can be trusted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    /// Best possible within the searched control space.
    OptimalInSpace,
    /// Some control achieving the count was found; better ones may exist.
    LowerBound,
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Bound::OptimalInSpace => "optimal within the strongest-guy space",
            Bound::LowerBound => "lower bound",
        })
    }
}

/// Which solver produced a result.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Provenance {
    StrongestGuy { mode: SearchMode, delta: Rational },
    Mpc { window: usize, mode: MpcMode, inner: String },
    Genetic { seed: u64, fitness: String },
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::StrongestGuy { mode, delta } => {
                write!(f, "strongest-guy ({mode}, delta {})", crate::numeric::format_ratio(delta))
            }
            Provenance::Mpc { window, mode, inner } => write!(f, "mpc (window {window}, {mode}, inner {inner})"),
            Provenance::Genetic { seed, fitness } => write!(f, "genetic algorithm (seed {seed}, fitness {fitness})"),
        }
    }
}

/// Best control found by a search.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchResult {
    pub controls: ControlSequence,
    pub sequence: Option<IndexSequence>,
    pub count: usize,
    pub perturbed_objective: Option<Rational>,
    pub provenance: Provenance,
    pub bound: Bound,
    pub evaluations: u64,
}
