//! The per-iteration convex subproblem as an explicit conic program
//! (second-order plus exponential cones) and its interior-point solution.

pub mod build;
pub mod program;
pub mod solve;

pub use build::{build_subproblem, encode_rate_log, StreamVars, VariableLayout};
pub use program::{ConeBlock, ConeKind, ConicProgram, LinearRow, ProgramBuilder};
pub use solve::{
    map_solution, solve, GammaValues, MappedSolution, SolveStatus, SolverResult, SolverSettings,
};

#[cfg(test)]
mod tests;
