use std::path::Path;

use serde::Serialize;

use super::CaseConfig;
use crate::error::{Error, Result};
use crate::iterate::run_solver;
use crate::mesh::{moment_field, Order, Problem};
use crate::multigrid::restrict;

/// Tolerance of every solve in a convergence study.
pub const STUDY_TOL: f64 = 1e-9;

/// `L²` errors of density and temperature against a reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentErrors {
    pub density: f64,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    pub cells: usize,
    pub spacing: f64,
    pub err_density: f64,
    pub err_temperature: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyTable {
    pub order: usize,
    pub eps: f64,
    pub reference_cells: usize,
    pub rows: Vec<StudyRow>,
    /// Least-squares slope of `log err` against `log Δx`.
    pub slope_density: f64,
    pub slope_temperature: f64,
}

impl StudyTable {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["cells", "dx", "err_rho", "err_T", "iterations", "converged"])?;
        for r in &self.rows {
            w.write_record(&[
                r.cells.to_string(),
                format!("{:.6e}", r.spacing),
                format!("{:.6e}", r.err_density),
                format!("{:.6e}", r.err_temperature),
                r.iterations.to_string(),
                r.converged.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn fitted_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Errors of `values` on `problem` against the reference field restricted
/// (by child averaging) to the same mesh:
/// `sqrt(ΔV Σ_j (m_j − m_j^ref)²)`.
pub fn restricted_moment_errors(problem: &Problem, values: &[f64], reference: &Problem, reference_values: &[f64]) -> Result<MomentErrors> {
    let nv = problem.velocity_len();
    if reference.velocity_len() != nv {
        return Err(Error::GridMismatch("reference uses another velocity grid".into()));
    }
    let target = problem.mesh();
    let mut mesh = reference.mesh().clone();
    let mut field = reference_values.to_vec();
    while mesh.len() > target.len() {
        let coarse = mesh
            .coarsen()
            .map_err(|_| Error::GridMismatch("grid is not nested in the reference grid".into()))?;
        field = restrict(&mesh, &coarse, &field, nv)?;
        mesh = coarse;
    }
    if (0..target.dim()).any(|a| mesh.cells_per_axis(a) != target.cells_per_axis(a)) {
        return Err(Error::GridMismatch("grid is not nested in the reference grid".into()));
    }
    let restricted = reference.with_mesh(mesh)?;
    let a = moment_field(problem, values)?;
    let b = moment_field(&restricted, &field)?;
    let (mut er, mut et) = (0.0, 0.0);
    for (x, y) in a.iter().zip(&b) {
        er += (x.density - y.density).powi(2);
        et += (x.temperature - y.temperature).powi(2);
    }
    let dv = target.cell_volume();
    Ok(MomentErrors {
        density: (dv * er).sqrt(),
        temperature: (dv * et).sqrt(),
    })
}

fn with_cells(config: &CaseConfig, n: usize, order: Order) -> CaseConfig {
    let mut c = config.clone();
    c.cells = [n, if config.case.space_dim() > 1 { n } else { 1 }];
    c.order = order;
    c.outer_tol = STUDY_TOL;
    c.inner_tol = c.inner_tol.min(1e-2 * STUDY_TOL);
    c.mg = None;
    c
}

/// Solves the second-order reference on `cells` cells per axis.
pub fn solve_reference(config: &CaseConfig, cells: usize) -> Result<(Problem, Vec<f64>)> {
    let c = with_cells(config, cells, Order::Second);
    let p = c.build_problem()?;
    let f0 = c.initial_field(&p)?;
    let out = run_solver(&p, &c.solver_config(), &f0)?;
    if !out.report.converged() {
        return Err(Error::InvalidArgument(format!(
            "reference solve did not converge: {:?} after {} iterations",
            out.report.status,
            out.report.iterations()
        )));
    }
    Ok((p, out.values))
}

/// Error table of the configured scheme order on each grid in `grids`
/// against a second-order solution on `reference` cells per axis.
pub fn convergence_study(config: &CaseConfig, grids: &[usize], reference: usize) -> Result<StudyTable> {
    for &n in grids {
        if n == 0 || reference % n != 0 || !(reference / n).is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "grid of {n} cells is not nested in the {reference}-cell reference"
            )));
        }
    }
    let (rp, rv) = solve_reference(config, reference)?;
    convergence_study_against(config, grids, &rp, &rv)
}

/// As [`convergence_study`] with a reference solution already computed.
pub fn convergence_study_against(config: &CaseConfig, grids: &[usize], reference: &Problem, reference_values: &[f64]) -> Result<StudyTable> {
    if grids.len() < 2 {
        return Err(Error::InvalidArgument("a convergence study needs at least two grids".into()));
    }
    let mut rows = Vec::with_capacity(grids.len());
    for &n in grids {
        let c = with_cells(config, n, config.order);
        let p = c.build_problem()?;
        let f0 = c.initial_field(&p)?;
        let out = run_solver(&p, &c.solver_config(), &f0)?;
        let err = restricted_moment_errors(&p, &out.values, reference, reference_values)?;
        rows.push(StudyRow {
            cells: n,
            spacing: p.mesh().spacing(0),
            err_density: err.density,
            err_temperature: err.temperature,
            iterations: out.report.iterations(),
            converged: out.report.converged(),
        });
    }
    let dx: Vec<f64> = rows.iter().map(|r| r.spacing).collect();
    let er: Vec<f64> = rows.iter().map(|r| r.err_density).collect();
    let et: Vec<f64> = rows.iter().map(|r| r.err_temperature).collect();
    Ok(StudyTable {
        order: config.order.number(),
        eps: config.knudsen,
        reference_cells: reference.mesh().cells_per_axis(0),
        slope_density: fitted_slope(&dx, &er),
        slope_temperature: fitted_slope(&dx, &et),
        rows,
    })
}
