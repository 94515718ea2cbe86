//! Optimal control of opinion dynamics: exact simulation, heuristic search,
//! MILP model generation and a genetic algorithm.

pub mod dynamics;
pub mod ga;
pub mod heuristics;
pub mod instances;
pub mod milp;
pub mod numeric;

pub use dynamics::{
    bc_step, confidence_set, conviction_set, convinced_count, dg_step, perturbed_objective, simulate,
    ControlSequence, ConvictionInterval, Dynamics, DynamicsError, Instance, Member, OpinionProfile,
    Trajectory, WeightMatrix,
};
pub use numeric::Rational;
