//! Trajectories, limit cycles and long-run probes.

mod cycles;
mod integrator;
mod probes;

use thiserror::Error;

use crate::lincheck::{Classification, StabilityError};
use crate::massaction::MassActionError;
use crate::models::ModelError;

pub use cycles::{
    find_limit_cycle, refine_cycle_newton, Crossing, CycleOptions, CycleSearch, CycleStability,
    LimitCycleReport, ReturnMap, SectionSpec,
};
pub use integrator::{flow, integrate, DenseStep, Stepper, Tolerance, Trajectory, CLIP};
pub use probes::{
    bistability_probe, permanence_probe, random_class_points, BistabilityReport, Fate,
    PermanenceReport, ProbeOptions, ProbeStart,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("state has {got} components, system has {expected} species")]
    Dimension { expected: usize, got: usize },
    #[error("initial state must be finite and nonnegative")]
    NegativeStart,
    #[error("horizon must be positive, got {0}")]
    InvalidHorizon(f64),
    #[error(
        "step size underflow at t = {t} (h = {h:e}, state {state:?}); the system may be stiff"
    )]
    StepUnderflow { t: f64, h: f64, state: Vec<f64> },
    #[error("solution became non-finite at t = {t}")]
    NonFinite { t: f64 },
    #[error("no return to the section within t = {0}")]
    NoReturn(f64),
    #[error("Newton shooting failed after {iterations} iterations (residual {residual:e})")]
    NewtonDivergence { iterations: usize, residual: f64 },
    #[error("section normal is orthogonal to the stoichiometric subspace")]
    SectionNotTransversal,
    #[error("equilibrium is {0:?}; the probe needs a stable equilibrium")]
    NotStable(Classification),
    #[error("cannot sample the stoichiometric class: {0}")]
    UnsupportedClass(String),
    #[error(transparent)]
    Stability(#[from] StabilityError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    MassAction(#[from] MassActionError),
}
