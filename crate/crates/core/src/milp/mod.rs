//! MILP models of the control problem, emitted for an external solver, and
//! exact re-verification of the controls such a solver returns.
//!
//! Variable-conditioned rows are linearised with Big-M constants derived
//! from the variable boxes. Every row is scaled so that all coefficients are
//! terminating decimals, which keeps the emitted LP text exact.

mod bc_advanced;
mod bc_basic;
mod dg;
mod embed;
mod lp;
mod model;
mod params;
mod solution;

use std::fmt;
use std::str::FromStr;

use num_traits::Signed;
use thiserror::Error;

use crate::dynamics::{ControlSequence, DynamicsError, Instance};
use crate::numeric::{format_ratio, ratio, Rational};

pub use bc_advanced::build_bc_advanced_model;
pub use bc_basic::build_bc_basic_model;
pub use dg::build_dg_model;
pub use embed::canonical_assignment;
pub use lp::{emit_lp, emit_priorities, lint_lp, LintReport, ParsedRow};
pub use model::{Constraint, Domain, GuardInfo, MilpModel, MilpVar, Sense, VarName, Violation};
pub use params::{solver_parameters, SOLVER_PARAMETERS};
pub use solution::{
    extract_control, parse_solution, snap_controls, verify_control, BandHit, SolutionMap, VerificationReport,
    BINARY_TOLERANCE, SNAP_TOLERANCE,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MilpError {
    #[error("{model} model needs {needed} dynamics")]
    WrongDynamics { model: &'static str, needed: &'static str },
    #[error("safety margin {eps_hat} must satisfy |eps_hat| < epsilon = {epsilon}")]
    EpsHat { eps_hat: String, epsilon: String },
    #[error("perturbed objective needs 0 < left and right < 1, got [{left}, {right}]")]
    PerturbationUndefined { left: String, right: String },
    #[error("the model needs at least one stage")]
    NoStages,
    #[error("unknown variable {0:?}")]
    UnknownVariable(String),
    #[error("missing variable {0}")]
    MissingVariable(String),
    #[error("binary {name} has non-integral value {value}")]
    NonIntegralBinary { name: String, value: String },
    #[error("control {name} = {value} lies outside [0, 1]")]
    ControlOutOfRange { name: String, value: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("Big-M row {0} is not slack when its guard is off")]
    BigM(String),
    #[error("LP line {line}: {message}")]
    Lint { line: usize, message: String },
    #[error("expected {expected} controls, found {found}")]
    ControlLength { expected: usize, found: usize },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Which of the three models to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    DeGroot,
    BcBasic,
    BcAdvanced,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::DeGroot => "dg",
            ModelKind::BcBasic => "bc-basic",
            ModelKind::BcAdvanced => "bc-advanced",
        })
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dg" => Ok(ModelKind::DeGroot),
            "bc-basic" => Ok(ModelKind::BcBasic),
            "bc-advanced" => Ok(ModelKind::BcAdvanced),
            other => Err(format!("unknown model {other:?}; expected dg, bc-basic or bc-advanced")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MilpBuildOptions {
    /// Safety margin: voters count as out of confidence only at distance
    /// `>= epsilon + eps_hat`. Positive values give a model whose feasible
    /// controls are genuine, non-positive values give a relaxation.
    pub eps_hat: Rational,
    /// Adds `x_0_0 <= 1/2`; only valid for mirror-symmetric instances.
    pub symmetry_break: bool,
}

impl Default for MilpBuildOptions {
    fn default() -> Self {
        Self::lower_bound()
    }
}

impl MilpBuildOptions {
    pub fn lower_bound() -> Self {
        Self {
            eps_hat: ratio(1, 100_000),
            symmetry_break: false,
        }
    }

    pub fn upper_bound() -> Self {
        Self {
            eps_hat: ratio(-1, 100_000),
            symmetry_break: false,
        }
    }

    pub fn with_eps_hat(mut self, eps_hat: Rational) -> Self {
        self.eps_hat = eps_hat;
        self
    }

    pub fn with_symmetry_break(mut self, on: bool) -> Self {
        self.symmetry_break = on;
        self
    }
}

/// Builds the chosen model for `stages` stages.
pub fn build_model(
    kind: ModelKind,
    instance: &Instance,
    stages: usize,
    options: &MilpBuildOptions,
) -> Result<MilpModel, MilpError> {
    match kind {
        ModelKind::DeGroot => build_dg_model(instance, stages),
        ModelKind::BcBasic => build_bc_basic_model(instance, stages, options),
        ModelKind::BcAdvanced => build_bc_advanced_model(instance, stages, options),
    }
}

/// The radius of a BC instance after checking the safety margin.
fn bc_epsilon<'a>(
    instance: &'a Instance,
    options: &MilpBuildOptions,
    model: &'static str,
) -> Result<&'a Rational, MilpError> {
    let epsilon = instance.epsilon().ok_or(MilpError::WrongDynamics {
        model,
        needed: "bounded-confidence",
    })?;
    if options.eps_hat.abs() >= *epsilon {
        return Err(MilpError::EpsHat {
            eps_hat: format_ratio(&options.eps_hat),
            epsilon: format_ratio(epsilon),
        });
    }
    Ok(epsilon)
}

fn check_control_length(controls: &ControlSequence, stages: usize) -> Result<(), MilpError> {
    if controls.len() != stages {
        return Err(MilpError::ControlLength {
            expected: stages,
            found: controls.len(),
        });
    }
    Ok(())
}
