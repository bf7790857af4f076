use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use serde::Serialize;

use super::{CaseConfig, CaseId};
use crate::error::Result;
use crate::iterate::{run_solver, IterationReport, Method, Status};
use crate::mesh::{write_moments_csv, Problem};

/// Contents of `summary.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub case: CaseId,
    pub method: Method,
    pub eps: f64,
    pub order: usize,
    pub cells: Vec<usize>,
    pub velocity_points: usize,
    pub half_width: f64,
    pub spectral_radius: Option<f64>,
    /// Spectral weight evaluation, recorded for binary cases.
    pub spectral_weights: Option<&'static str>,
    pub outer_tol: f64,
    pub inner_tol: f64,
    pub total_mass: f64,
    pub iterations: usize,
    pub fine_sweeps: usize,
    pub final_residual: Option<f64>,
    pub fallbacks: usize,
    pub elapsed_seconds: f64,
    pub status: Status,
    pub converged: bool,
}

/// Result of [`run_case`] including the final field.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub report: IterationReport,
    pub problem: Problem,
    pub values: Vec<f64>,
    pub output: PathBuf,
}

/// Solves one case and writes `moments.csv`, `history.csv` and
/// `summary.json` into the configured output directory.
///
/// Non-convergence is reported through [`RunSummary::converged`]; the
/// artifacts are written in every case.
pub fn run_case(config: &CaseConfig) -> Result<RunOutcome> {
    let start = Instant::now();
    let problem = config.build_problem()?;
    let initial = config.initial_field(&problem)?;
    let outcome = run_solver(&problem, &config.solver_config(), &initial)?;
    let elapsed = start.elapsed().as_secs_f64();

    fs::create_dir_all(&config.output)?;
    write_moments_csv(&config.output.join("moments.csv"), &problem, &outcome.values)?;
    outcome.report.write_history_csv(&config.output.join("history.csv"))?;

    let report = outcome.report;
    let binary = config.case.is_binary();
    let summary = RunSummary {
        case: config.case,
        method: config.method,
        eps: config.knudsen,
        order: config.order.number(),
        cells: config.cells[..config.case.space_dim()].to_vec(),
        velocity_points: config.velocity_points,
        half_width: config.half_width,
        spectral_radius: binary.then_some(config.spectral_radius),
        spectral_weights: binary.then_some("closed-form"),
        outer_tol: config.outer_tol,
        inner_tol: config.inner_tol,
        total_mass: config.total_mass.unwrap_or_else(|| problem.mesh().domain_volume()),
        iterations: report.iterations(),
        fine_sweeps: report.total_fine_sweeps(),
        final_residual: report.final_residual(),
        fallbacks: report.total_fallbacks(),
        elapsed_seconds: elapsed,
        converged: report.converged(),
        status: report.status.clone(),
    };
    fs::write(config.output.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(RunOutcome {
        summary,
        report,
        problem,
        values: outcome.values,
        output: config.output.clone(),
    })
}
