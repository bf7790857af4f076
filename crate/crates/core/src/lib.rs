//! Steady-state kinetic solvers on discrete velocity grids.
//!
//! The crate discretizes the steady Boltzmann equation with BGK or binary
//! (Maxwell-molecule) collisions by finite volumes in space and a uniform
//! velocity grid, and solves the result with symmetric Gauss–Seidel scans,
//! a preconditioned cell-local fixed point, and FAS multigrid.

pub mod app;
pub mod cell_solver;
pub mod collision;
pub mod error;
pub mod iterate;
pub mod mesh;
pub mod multigrid;
mod quadrature;
pub mod velocity;

pub use app::{parse_config, run_case, CaseConfig, CaseId};
pub use cell_solver::{InnerOptions, InnerSolution, InnerSolver};
pub use collision::{CollisionKind, CollisionModel, FrequencyRule, SpectralOperator};
pub use error::{Error, Result};
pub use iterate::{run_solver, IterationReport, Method, SolveOutcome, SolverConfig, Status};
pub use mesh::{Order, Physics, Problem, Side, SpatialMesh, WallSpec, Walls};
pub use multigrid::{run_mg_solver, MgHierarchy, MgParams};
pub use velocity::{Centering, MaxwellianParams, Moments, NewtonOptions, VelocityGrid};
