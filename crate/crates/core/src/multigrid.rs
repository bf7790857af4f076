//! Nonlinear full-approximation-scheme V-cycles with SGS-PFP smoothing.

use std::time::Instant;

use crate::cell_solver::{InnerOptions, InnerSolver};
use crate::error::{Error, Result};
use crate::iterate::{sgs_iteration, IterationReport, Method, SolveOutcome, SolverConfig, Status, SweepStats};
use crate::mesh::{global_residual, rescale_mass, total_mass, Order, Problem, SpatialMesh};

/// Smoothing counts and coarsest level size of a V-cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MgParams {
    pub pre_smooth: usize,
    pub post_smooth: usize,
    /// Minimum cells per axis; coarsening stops before going below it.
    pub coarsest_cells: usize,
    /// SGS iteration cap on the coarsest level.
    pub coarsest_max_iter: usize,
    /// Coarsest-level tolerance relative to the outer tolerance.
    pub coarsest_tol_factor: f64,
}

impl MgParams {
    /// Standard parameters by spatial dimension and scheme order.
    pub fn table(dim: usize, order: Order) -> Self {
        let (pre_smooth, post_smooth, coarsest_cells) = match (dim, order) {
            (1, Order::First) => (1, 1, 4),
            (1, Order::Second) => (5, 1, 8),
            (_, Order::First) => (1, 1, 5),
            (_, Order::Second) => (5, 1, 5),
        };
        Self {
            pre_smooth,
            post_smooth,
            coarsest_cells,
            coarsest_max_iter: 50,
            coarsest_tol_factor: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.coarsest_cells == 0 {
            return Err(Error::InvalidArgument("coarsest level needs at least one cell".into()));
        }
        if self.pre_smooth + self.post_smooth == 0 {
            return Err(Error::InvalidArgument("a V-cycle needs at least one smoothing iteration".into()));
        }
        if self.coarsest_max_iter == 0 || !(self.coarsest_tol_factor > 0.0) {
            return Err(Error::InvalidArgument("invalid coarsest-level solve settings".into()));
        }
        Ok(())
    }
}

/// Level problems from finest (index 0) to coarsest, sharing walls, physics
/// and the velocity grid.
#[derive(Debug, Clone)]
pub struct MgHierarchy {
    levels: Vec<Problem>,
    params: MgParams,
}

/// Work done by one call of [`MgHierarchy::v_cycle`] on the level it was called for.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CycleStats {
    pub sweeps: usize,
    pub stats: SweepStats,
    /// Coarsest level reached.
    pub deepest_level: usize,
    /// Residual of the level after pre-smoothing.
    pub presmoothed_residual: f64,
}

impl MgHierarchy {
    /// Halves the mesh while every axis count is even and the halved count
    /// stays at or above `params.coarsest_cells`.
    pub fn new(problem: &Problem, params: MgParams) -> Result<Self> {
        params.validate()?;
        let mut levels = vec![problem.clone()];
        loop {
            let mesh = levels.last().expect("finest level").mesh();
            let dim = mesh.dim();
            let can = (0..dim).all(|a| {
                let n = mesh.cells_per_axis(a);
                n % 2 == 0 && n / 2 >= params.coarsest_cells
            });
            if !can {
                break;
            }
            let coarse = mesh.coarsen()?;
            let next = levels[0].with_mesh(coarse)?;
            levels.push(next);
        }
        Ok(Self { levels, params })
    }

    pub fn levels(&self) -> &[Problem] {
        &self.levels
    }

    pub fn level(&self, l: usize) -> &Problem {
        &self.levels[l]
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn params(&self) -> &MgParams {
        &self.params
    }

    /// One V-cycle on `level` for `R(f) = rhs`.
    pub fn v_cycle(
        &self,
        level: usize,
        values: &mut [f64],
        rhs: Option<&[f64]>,
        outer_tol: f64,
        inner: &InnerOptions,
        parallel: bool,
    ) -> Result<CycleStats> {
        self.cycle(level, values, rhs, outer_tol, inner, parallel).map_err(|e| e.at_level(level))
    }

    fn cycle(
        &self,
        level: usize,
        values: &mut [f64],
        rhs: Option<&[f64]>,
        outer_tol: f64,
        inner: &InnerOptions,
        parallel: bool,
    ) -> Result<CycleStats> {
        let p = self.levels.get(level).ok_or_else(|| Error::InvalidArgument(format!("no multigrid level {level}")))?;
        let smoother = InnerSolver::Preconditioned;
        let mut out = CycleStats {
            deepest_level: level,
            ..Default::default()
        };
        let last = self.levels.len() - 1;

        if level == last && level > 0 {
            let tol = self.params.coarsest_tol_factor * outer_tol;
            for _ in 0..self.params.coarsest_max_iter {
                out.stats.merge(&sgs_iteration(p, values, smoother, inner, rhs, parallel)?);
                out.sweeps += 1;
                let r = global_residual(p, values, rhs, parallel)?;
                if out.sweeps == 1 {
                    out.presmoothed_residual = r;
                }
                if r <= tol {
                    break;
                }
            }
            return Ok(out);
        }

        for _ in 0..self.params.pre_smooth {
            out.stats.merge(&sgs_iteration(p, values, smoother, inner, rhs, parallel)?);
            out.sweeps += 1;
        }
        let op = p.apply_operator(values, parallel)?;
        out.presmoothed_residual = p.residual_norm(&op, rhs);
        if out.presmoothed_residual <= outer_tol {
            return Ok(out);
        }

        if level < last {
            let coarse = &self.levels[level + 1];
            let base = restrict(p.mesh(), coarse.mesh(), values, p.velocity_len())?;
            let coarse_rhs = assemble_coarse_rhs(p, coarse, &base, &op, rhs, parallel)?;
            let mut coarse_values = base.clone();
            let sub = self.v_cycle(level + 1, &mut coarse_values, Some(&coarse_rhs), outer_tol, inner, parallel)?;
            out.deepest_level = sub.deepest_level;
            coarse_values.iter_mut().zip(&base).for_each(|(c, b)| *c -= b);
            let correction = prolong(coarse.mesh(), p.mesh(), &coarse_values, p.velocity_len())?;
            apply_correction(p, values, &correction);
        }

        for _ in 0..self.params.post_smooth {
            out.stats.merge(&sgs_iteration(p, values, smoother, inner, rhs, parallel)?);
            out.sweeps += 1;
        }
        Ok(out)
    }
}

/// Adds the correction, halving it while any cell density would become
/// nonpositive; the correction is dropped if that does not help.
fn apply_correction(problem: &Problem, values: &mut [f64], correction: &[f64]) {
    let nv = problem.velocity_len();
    let mut theta = 1.0;
    for _ in 0..20 {
        let ok = values.chunks(nv).zip(correction.chunks(nv)).all(|(f, c)| {
            let rho: f64 = f.iter().zip(c).map(|(a, b)| a + theta * b).sum();
            rho > 0.0 && rho.is_finite()
        });
        if ok {
            values.iter_mut().zip(correction).for_each(|(v, c)| *v += theta * c);
            return;
        }
        theta *= 0.5;
    }
}

fn check_pair(fine: &SpatialMesh, coarse: &SpatialMesh) -> Result<()> {
    if fine.dim() != coarse.dim() {
        return Err(Error::GridMismatch("levels differ in dimension".into()));
    }
    for a in 0..fine.dim() {
        let n = fine.cells_per_axis(a);
        if n % 2 != 0 {
            return Err(Error::GridMismatch(format!("odd cell count {n} along axis {a}")));
        }
        if coarse.cells_per_axis(a) * 2 != n {
            return Err(Error::GridMismatch(format!(
                "levels are not adjacent along axis {a}: {} vs {}",
                n,
                coarse.cells_per_axis(a)
            )));
        }
    }
    Ok(())
}

fn children<'a>(fine: &'a SpatialMesh, coarse: &SpatialMesh, jc: usize) -> impl Iterator<Item = usize> + 'a {
    let [cx, cy] = coarse.coords(jc);
    let ny = if fine.dim() > 1 { 2 } else { 1 };
    (0..2).flat_map(move |dx| (0..ny).map(move |dy| fine.index(2 * cx + dx, if ny == 2 { 2 * cy + dy } else { 0 })))
}

/// Coarse field whose cells are the mean of their 2 (1D) or 4 (2D) children.
pub fn restrict(fine: &SpatialMesh, coarse: &SpatialMesh, values: &[f64], velocity_len: usize) -> Result<Vec<f64>> {
    check_pair(fine, coarse)?;
    if values.len() != fine.len() * velocity_len {
        return Err(Error::GridMismatch(format!(
            "field of length {} does not fit {} cells",
            values.len(),
            fine.len()
        )));
    }
    let count = if fine.dim() > 1 { 4.0 } else { 2.0 };
    let mut out = vec![0.0; coarse.len() * velocity_len];
    for (jc, dst) in out.chunks_mut(velocity_len).enumerate() {
        for jf in children(fine, coarse, jc) {
            let src = &values[jf * velocity_len..(jf + 1) * velocity_len];
            dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
        }
        dst.iter_mut().for_each(|d| *d /= count);
    }
    Ok(out)
}

/// Piecewise-constant injection of a coarse field.
pub fn prolong(coarse: &SpatialMesh, fine: &SpatialMesh, values: &[f64], velocity_len: usize) -> Result<Vec<f64>> {
    check_pair(fine, coarse)?;
    if values.len() != coarse.len() * velocity_len {
        return Err(Error::GridMismatch(format!(
            "field of length {} does not fit {} cells",
            values.len(),
            coarse.len()
        )));
    }
    let mut out = vec![0.0; fine.len() * velocity_len];
    for jc in 0..coarse.len() {
        let src = &values[jc * velocity_len..(jc + 1) * velocity_len];
        for jf in children(fine, coarse, jc) {
            out[jf * velocity_len..(jf + 1) * velocity_len].copy_from_slice(src);
        }
    }
    Ok(out)
}

/// Coarse right-hand side `r_H = R_H(I f̄_h) + I(r_h − R_h f̄_h)`.
pub fn coarse_rhs(
    fine: &Problem,
    coarse: &Problem,
    smoothed: &[f64],
    rhs: Option<&[f64]>,
    parallel: bool,
) -> Result<Vec<f64>> {
    let op = fine.apply_operator(smoothed, parallel)?;
    let base = restrict(fine.mesh(), coarse.mesh(), smoothed, fine.velocity_len())?;
    assemble_coarse_rhs(fine, coarse, &base, &op, rhs, parallel)
}

fn assemble_coarse_rhs(
    fine: &Problem,
    coarse: &Problem,
    restricted: &[f64],
    fine_operator: &[f64],
    rhs: Option<&[f64]>,
    parallel: bool,
) -> Result<Vec<f64>> {
    let defect: Vec<f64> = match rhs {
        Some(r) => r.iter().zip(fine_operator).map(|(a, b)| a - b).collect(),
        None => fine_operator.iter().map(|b| -b).collect(),
    };
    let mut out = coarse.apply_operator(restricted, parallel)?;
    let d = restrict(fine.mesh(), coarse.mesh(), &defect, fine.velocity_len())?;
    out.iter_mut().zip(&d).for_each(|(o, x)| *o += x);
    Ok(out)
}

/// Repeated V-cycles with mass rescaling and a residual check after each.
pub fn run_mg_solver(problem: &Problem, config: &SolverConfig, initial: &[f64]) -> Result<SolveOutcome> {
    config.validate()?;
    problem.check_field(initial)?;
    let params = config
        .mg
        .unwrap_or_else(|| MgParams::table(problem.mesh().dim(), problem.order()));
    let hierarchy = MgHierarchy::new(problem, params)?;
    let target = config.total_mass.unwrap_or_else(|| problem.mesh().domain_volume());
    let mut values = initial.to_vec();
    rescale_mass(problem, &mut values, target)?;
    let mut report = IterationReport::new(Method::MgSgsPfp);
    let start = Instant::now();
    for _ in 0..config.max_outer {
        let cycle = hierarchy
            .v_cycle(0, &mut values, None, config.outer_tol, &config.inner, config.parallel)
            .and_then(|c| {
                rescale_mass(problem, &mut values, target)?;
                let r = global_residual(problem, &values, None, config.parallel)?;
                Ok((c, r))
            });
        let (c, residual) = match cycle {
            Ok(x) => x,
            Err(e) => {
                report.status = Status::Aborted(e.to_string());
                return Ok(SolveOutcome { values, report });
            }
        };
        report.record(residual, &c.stats, c.sweeps, total_mass(problem, &values), start.elapsed().as_secs_f64());
        if residual < config.outer_tol {
            report.status = Status::Converged;
            break;
        }
    }
    Ok(SolveOutcome { values, report })
}
