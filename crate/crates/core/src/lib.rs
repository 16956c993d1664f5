//! Calculus of variations on time scales for Lagrangians that depend on the free end-point
//! value x(T).
//!
//! A [`TimeScale`] is a finite sorted sample of a closed subset of the reals. Problems are
//! posed with [`VariationalProblem`] or [`ControlProblem`], checked with the residuals in
//! [`conditions`] and solved with [`solver`].

pub mod cli;
pub mod conditions;
pub mod error;
pub mod expr;
pub mod problem;
pub mod solver;
pub mod timescale;

pub use conditions::{ResidualReport, Sufficiency, SufficiencyOptions};
pub use error::{Error, Result};
pub use expr::{parse, Env, Expr, Var};
pub use problem::{ControlProblem, Problem, ProblemKind, ProblemTemplate, VariationalProblem};
pub use solver::{brute_force_oracle, solve, solve_control, solve_stationarity, solve_variational, sweep, Solution, SolveOptions};
pub use timescale::{GridFunction, PointKind, TimeScale};
