//! Outer iterations: source iteration, symmetric Gauss–Seidel scans, mass
//! rescaling and the stopping test.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::cell_solver::{assemble_cell_problem, solve_cell, CellLocalProblem, InnerOptions, InnerSolver};
use crate::collision::CollisionKind;
use crate::error::{Error, Result};
use crate::mesh::{for_each_cell, global_residual, rescale_mass, total_mass, Order, Problem, Side};
use crate::multigrid::{run_mg_solver, MgParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    #[serde(rename = "si")]
    SourceIteration,
    #[serde(rename = "sgs-fp")]
    SgsFp,
    #[serde(rename = "sgs-pfp")]
    SgsPfp,
    #[serde(rename = "mg-sgs-pfp")]
    MgSgsPfp,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::SourceIteration => "si",
            Method::SgsFp => "sgs-fp",
            Method::SgsPfp => "sgs-pfp",
            Method::MgSgsPfp => "mg-sgs-pfp",
        }
    }

    pub fn inner_solver(&self) -> InnerSolver {
        match self {
            Method::SgsFp => InnerSolver::FixedPoint,
            _ => InnerSolver::Preconditioned,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "si" => Ok(Method::SourceIteration),
            "sgs-fp" => Ok(Method::SgsFp),
            "sgs-pfp" => Ok(Method::SgsPfp),
            "mg-sgs-pfp" | "mg" => Ok(Method::MgSgsPfp),
            other => Err(Error::InvalidArgument(format!(
                "unknown method '{other}' (expected si, sgs-fp, sgs-pfp or mg-sgs-pfp)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub method: Method,
    pub outer_tol: f64,
    pub inner: InnerOptions,
    pub max_outer: usize,
    /// Total mass `C`; the domain volume when `None`.
    pub total_mass: Option<f64>,
    /// Multigrid parameters; derived from the problem when `None`.
    pub mg: Option<MgParams>,
    /// Evaluate explicit per-cell phases on the rayon pool.
    pub parallel: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: Method::SgsPfp,
            outer_tol: 1e-5,
            inner: InnerOptions::default(),
            max_outer: 10_000,
            total_mass: None,
            mg: None,
            parallel: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.outer_tol > 0.0) || !(self.inner.tol > 0.0) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        if let Some(c) = self.total_mass {
            if !(c > 0.0) {
                return Err(Error::InvalidArgument(format!("total mass must be positive, got {c}")));
            }
        }
        if self.max_outer == 0 {
            return Err(Error::InvalidArgument("max_outer must be at least 1".into()));
        }
        if !(self.inner.tau >= 0.0) {
            return Err(Error::InvalidArgument("relaxation factor must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Inner-solver statistics accumulated over cell visits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SweepStats {
    pub cell_solves: usize,
    pub inner_iterations: usize,
    pub max_inner: usize,
    pub fallbacks: usize,
}

impl SweepStats {
    pub fn merge(&mut self, other: &SweepStats) {
        self.cell_solves += other.cell_solves;
        self.inner_iterations += other.inner_iterations;
        self.max_inner = self.max_inner.max(other.max_inner);
        self.fallbacks += other.fallbacks;
    }

    /// Inner iterations per cell solve.
    pub fn average(&self) -> f64 {
        if self.cell_solves == 0 {
            0.0
        } else {
            self.inner_iterations as f64 / self.cell_solves as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", content = "reason", rename_all = "snake_case")]
pub enum Status {
    Converged,
    MaxIterations,
    Aborted(String),
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationReport {
    pub method: Method,
    pub residuals: Vec<f64>,
    /// Inner iterations per cell solve; for SGS this is the total over both scans divided by twice the cell count.
    pub avg_inner: Vec<f64>,
    pub max_inner: Vec<usize>,
    pub fallbacks: Vec<usize>,
    /// Seconds since the start of the run, per iteration.
    pub elapsed: Vec<f64>,
    /// Cumulative number of fine-level smoothing iterations (one forward plus one backward scan each).
    pub fine_sweeps: Vec<usize>,
    /// Total mass after rescaling.
    pub masses: Vec<f64>,
    pub status: Status,
}

impl IterationReport {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            residuals: Vec::new(),
            avg_inner: Vec::new(),
            max_inner: Vec::new(),
            fallbacks: Vec::new(),
            elapsed: Vec::new(),
            fine_sweeps: Vec::new(),
            masses: Vec::new(),
            status: Status::MaxIterations,
        }
    }

    pub fn iterations(&self) -> usize {
        self.residuals.len()
    }

    pub fn final_residual(&self) -> Option<f64> {
        self.residuals.last().copied()
    }

    pub fn total_fallbacks(&self) -> usize {
        self.fallbacks.iter().sum()
    }

    pub fn total_fine_sweeps(&self) -> usize {
        self.fine_sweeps.last().copied().unwrap_or(0)
    }

    pub fn converged(&self) -> bool {
        self.status == Status::Converged
    }

    pub(crate) fn record(&mut self, residual: f64, stats: &SweepStats, sweeps: usize, mass: f64, elapsed: f64) {
        let before = self.total_fine_sweeps();
        self.residuals.push(residual);
        self.avg_inner.push(stats.average());
        self.max_inner.push(stats.max_inner);
        self.fallbacks.push(stats.fallbacks);
        self.elapsed.push(elapsed);
        self.fine_sweeps.push(before + sweeps);
        self.masses.push(mass);
    }

    /// Columns `iter, residual, avg_inner, max_inner, fallbacks, elapsed_seconds`.
    pub fn write_history_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["iter", "residual", "avg_inner", "max_inner", "fallbacks", "elapsed_seconds"])?;
        for i in 0..self.iterations() {
            w.write_record(&[
                (i + 1).to_string(),
                format!("{:.6e}", self.residuals[i]),
                format!("{:.4}", self.avg_inner[i]),
                self.max_inner[i].to_string(),
                self.fallbacks[i].to_string(),
                format!("{:.6}", self.elapsed[i]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Final state and history of a run.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub values: Vec<f64>,
    pub report: IterationReport,
}

/// Frozen per-scan data: collision frequencies and the extra source
/// `−ε⁻¹P[f] − rhs` (absent for BGK without a right-hand side).
struct ScanSetup {
    frequencies: Vec<f64>,
    extra: Option<Vec<f64>>,
}

fn scan_setup(problem: &Problem, values: &[f64], rhs: Option<&[f64]>, parallel: bool) -> Result<ScanSetup> {
    let nv = problem.velocity_len();
    let cells = problem.mesh().len();
    let w = problem.grid().weight();
    let rule = problem.collision().frequency;
    let frequencies = (0..cells)
        .map(|j| rule.frequency(values[j * nv..(j + 1) * nv].iter().sum::<f64>() * w).map_err(|e| e.at_cell(j)))
        .collect::<Result<Vec<f64>>>()?;
    let binary = problem.collision().kind == CollisionKind::Binary;
    let extra = if binary {
        let inv_eps = 1.0 / problem.knudsen();
        let mut extra = vec![0.0; values.len()];
        for_each_cell(&mut extra, nv, parallel, |j, out| {
            problem.penalty(&values[j * nv..(j + 1) * nv], out).map_err(|e| e.at_cell(j))?;
            out.iter_mut().for_each(|x| *x *= -inv_eps);
            Ok(())
        })?;
        if let Some(r) = rhs {
            extra.iter_mut().zip(r).for_each(|(e, x)| *e -= x);
        }
        Some(extra)
    } else {
        rhs.map(|r| r.iter().map(|x| -x).collect())
    };
    Ok(ScanSetup { frequencies, extra })
}

/// One scan over all cells in lexicographic order (reversed for
/// [`Direction::Backward`]), updating cells in place.
///
/// Slopes, collision frequencies and the penalty remainder are taken from the
/// state before the scan; neighbors are read as currently stored.
pub fn sgs_sweep(
    problem: &Problem,
    values: &mut [f64],
    direction: Direction,
    solver: InnerSolver,
    opts: &InnerOptions,
    rhs: Option<&[f64]>,
    parallel: bool,
) -> Result<SweepStats> {
    problem.check_field(values)?;
    if let Some(r) = rhs {
        problem.check_field(r)?;
    }
    let nv = problem.velocity_len();
    let cells = problem.mesh().len();
    let slopes = problem.slopes(values)?;
    let setup = scan_setup(problem, values, rhs, parallel)?;
    let mut source = vec![0.0; nv];
    let mut stats = SweepStats::default();
    let order: Box<dyn Iterator<Item = usize>> = match direction {
        Direction::Forward => Box::new(0..cells),
        Direction::Backward => Box::new((0..cells).rev()),
    };
    for j in order {
        let extra = setup.extra.as_ref().map(|e| &e[j * nv..(j + 1) * nv]);
        assemble_cell_problem(problem, values, &slopes, j, extra, &mut source)?;
        let cell = CellLocalProblem {
            grid: problem.grid(),
            transport_weight: problem.transport_weight(),
            source: &source,
            frequency: setup.frequencies[j],
            knudsen: problem.knudsen(),
        };
        let sol = solve_cell(&cell, &values[j * nv..(j + 1) * nv], solver, opts).map_err(|e| e.at_cell(j))?;
        values[j * nv..(j + 1) * nv].copy_from_slice(&sol.values);
        stats.cell_solves += 1;
        stats.inner_iterations += sol.iterations;
        stats.max_inner = stats.max_inner.max(sol.iterations);
        stats.fallbacks += usize::from(sol.fallback);
    }
    Ok(stats)
}

/// Forward scan followed by backward scan.
pub fn sgs_iteration(
    problem: &Problem,
    values: &mut [f64],
    solver: InnerSolver,
    opts: &InnerOptions,
    rhs: Option<&[f64]>,
    parallel: bool,
) -> Result<SweepStats> {
    let mut stats = sgs_sweep(problem, values, Direction::Forward, solver, opts, rhs, parallel)?;
    stats.merge(&sgs_sweep(problem, values, Direction::Backward, solver, opts, rhs, parallel)?);
    Ok(stats)
}

/// One source iteration: with `M[f^n]`, `ν^n` and the wall densities frozen,
/// the transport problem decouples by velocity and is solved exactly by an
/// upwind-ordered pass for each velocity point.
pub fn source_iteration_step(problem: &Problem, values: &mut [f64], parallel: bool) -> Result<()> {
    problem.check_field(values)?;
    if problem.collision().kind != CollisionKind::Bgk {
        return Err(Error::InvalidArgument("source iteration is implemented for BGK only".into()));
    }
    if problem.order() != Order::First {
        return Err(Error::InvalidArgument("source iteration is implemented for the first-order scheme only".into()));
    }
    let nv = problem.velocity_len();
    let mesh = problem.mesh();
    let cells = mesh.len();
    let dim = mesh.dim();
    let inv_eps = 1.0 / problem.knudsen();

    // equilibrium part ν M / ε and the diagonal a + ν/ε
    let mut gain = vec![0.0; values.len()];
    let mut stiff = vec![0.0; cells];
    {
        let snapshot: &[f64] = values;
        for_each_cell(&mut gain, nv, parallel, |j, out| {
            let f = &snapshot[j * nv..(j + 1) * nv];
            let (fit, nu) = problem.local_equilibrium(f, None).map_err(|e| e.at_cell(j))?;
            for (o, m) in out.iter_mut().zip(&fit.values) {
                *o = nu * inv_eps * m;
            }
            Ok(())
        })?;
        let w = problem.grid().weight();
        for (j, s) in stiff.iter_mut().enumerate() {
            let rho = snapshot[j * nv..(j + 1) * nv].iter().sum::<f64>() * w;
            *s = problem.collision().frequency.frequency(rho).map_err(|e| e.at_cell(j))? * inv_eps;
        }
    }

    // inflow from walls, lagged
    let mut inflow: Vec<Option<Vec<f64>>> = vec![None; cells * 4];
    for j in 0..cells {
        for side in Side::ALL {
            if side.axis() >= dim || mesh.neighbor(j, side.axis(), side.is_upper()).is_some() {
                continue;
            }
            let f = &values[j * nv..(j + 1) * nv];
            let (rho, mw) = problem.wall_inflow(side, f, None).map_err(|e| e.at_cell(j))?;
            inflow[j * 4 + side as usize] = Some(mw.iter().map(|m| rho * m).collect());
        }
    }

    let a = problem.transport_weight();
    let nx = mesh.cells_per_axis(0);
    let ny = if dim > 1 { mesh.cells_per_axis(1) } else { 1 };
    for k in 0..nv {
        let vel: Vec<f64> = (0..dim).map(|ax| problem.axis_velocity(ax)[k]).collect();
        let xs: Vec<usize> = if vel[0] >= 0.0 { (0..nx).collect() } else { (0..nx).rev().collect() };
        let ys: Vec<usize> = if dim < 2 || vel[1] >= 0.0 { (0..ny).collect() } else { (0..ny).rev().collect() };
        for &ix in &xs {
            for &iy in &ys {
                let j = mesh.index(ix, iy);
                let mut rhs = gain[j * nv + k];
                for (ax, &v) in vel.iter().enumerate() {
                    if v == 0.0 {
                        continue;
                    }
                    let upper = v < 0.0;
                    let upwind = match mesh.neighbor(j, ax, upper) {
                        Some(n) => values[n * nv + k],
                        None => {
                            let side = match (ax, upper) {
                                (0, false) => Side::West,
                                (0, true) => Side::East,
                                (_, false) => Side::South,
                                (_, true) => Side::North,
                            };
                            inflow[j * 4 + side as usize].as_ref().expect("boundary inflow")[k]
                        }
                    };
                    rhs += v.abs() / mesh.spacing(ax) * upwind;
                }
                values[j * nv + k] = rhs / (a[k] + stiff[j]);
            }
        }
    }
    Ok(())
}

/// Iterates the configured method until the residual drops below the outer
/// tolerance, rescaling the total mass after every iteration.
pub fn run_solver(problem: &Problem, config: &SolverConfig, initial: &[f64]) -> Result<SolveOutcome> {
    config.validate()?;
    problem.check_field(initial)?;
    if config.method == Method::MgSgsPfp {
        return run_mg_solver(problem, config, initial);
    }
    let target = config.total_mass.unwrap_or_else(|| problem.mesh().domain_volume());
    let mut values = initial.to_vec();
    rescale_mass(problem, &mut values, target)?;
    let mut report = IterationReport::new(config.method);
    let start = Instant::now();
    for _ in 0..config.max_outer {
        let step = match config.method {
            Method::SourceIteration => source_iteration_step(problem, &mut values, config.parallel).map(|_| SweepStats::default()),
            Method::SgsFp | Method::SgsPfp => {
                sgs_iteration(problem, &mut values, config.method.inner_solver(), &config.inner, None, config.parallel)
            }
            Method::MgSgsPfp => unreachable!(),
        };
        let stats = match step {
            Ok(s) => s,
            Err(e) => {
                report.status = Status::Aborted(e.to_string());
                return Ok(SolveOutcome { values, report });
            }
        };
        let residual = match rescale_mass(problem, &mut values, target)
            .and_then(|_| global_residual(problem, &values, None, config.parallel))
        {
            Ok(r) => r,
            Err(e) => {
                report.status = Status::Aborted(e.to_string());
                return Ok(SolveOutcome { values, report });
            }
        };
        report.record(residual, &stats, 1, total_mass(problem, &values), start.elapsed().as_secs_f64());
        if residual < config.outer_tol {
            report.status = Status::Converged;
            break;
        }
    }
    Ok(SolveOutcome { values, report })
}
