//! Finite-horizon inventory control with random delivery delays.
//!
//! The crate computes the mean-optimal ordering policy by backward
//! induction ([`solver`]), simulates realized costs under it and under
//! alternative rules ([`sim`]), and checks the probabilistic structure of
//! the realized cost ([`diagnostics`]): the optimality martingale, Dobrushin
//! coefficients, variance growth, asymptotic normality, concentration and
//! stochastic-order comparisons.

pub mod demand;
pub mod diagnostics;
pub mod error;
pub mod model;
pub mod persist;
pub mod rng;
pub mod sim;
pub mod solver;

pub use demand::{check_soft_unimodality, make_demand, DemandModel, DemandSpec};
pub use error::{Error, Result};
pub use model::{carrying_cost, compute_n0, ModelParams, NaturalsConvention};
pub use persist::PolicyFile;
pub use rng::{mix64, StreamSpec};
pub use sim::{
    horizon_sweep, simulate_batch, simulate_path, Batch, PolicyFamily, PolicySpec, Randomness, Trajectory,
};
pub use solver::{
    bellman_step, order_up_to, solve, solve_with, structure_report, PeriodRule, PolicyTable, Solution,
    SolverOptions, StateGrid, StructureReport, ValueGrid,
};
