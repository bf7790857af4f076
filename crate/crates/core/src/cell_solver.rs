//! Cell-local nonlinear problem `a_k g + r = (ν/ε)(M[g] − g)`.
//!
//! [`fp_solve`] lags the Maxwellian; [`pfp_solve`] first recovers the
//! equilibrium from the `d + 2` moment equations of the problem and only then
//! updates `g`, which keeps its iteration count bounded as `ε → 0`.

use crate::error::{Error, Result};
use crate::mesh::{Problem, Slopes};
use crate::velocity::{
    discrete_maxwellian_from, fit_exponential, weighted_conserved_moments, MaxwellianFit, MaxwellianParams, NewtonOptions,
    VelocityGrid, MAX_INVARIANTS,
};

#[derive(Debug, Clone, Copy)]
pub struct CellLocalProblem<'a> {
    pub grid: &'a VelocityGrid,
    /// `a_k ≥ 0`.
    pub transport_weight: &'a [f64],
    /// `r_k`.
    pub source: &'a [f64],
    pub frequency: f64,
    pub knudsen: f64,
}

impl CellLocalProblem<'_> {
    pub fn validate(&self) -> Result<()> {
        self.grid.check_len(self.transport_weight)?;
        self.grid.check_len(self.source)?;
        if !(self.frequency > 0.0) || !(self.knudsen > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "cell problem needs ν > 0 and ε > 0 (got {}, {})",
                self.frequency, self.knudsen
            )));
        }
        if self.transport_weight.iter().any(|&a| !(a >= 0.0)) {
            return Err(Error::InvalidArgument("transport weights must be nonnegative".into()));
        }
        Ok(())
    }

    fn stiffness(&self) -> f64 {
        self.frequency / self.knudsen
    }

    /// `g = ((ν/ε) M − r) / (a + ν/ε)`.
    fn update(&self, maxwellian: &[f64], g: &mut [f64]) {
        let c = self.stiffness();
        for k in 0..g.len() {
            g[k] = (c * maxwellian[k] - self.source[k]) / (self.transport_weight[k] + c);
        }
    }
}

/// `s = Σ w φ [a(M[g] − g) − r]`; the first `d + 2` entries are used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentDefect {
    pub values: [f64; MAX_INVARIANTS],
    pub len: usize,
}

impl MomentDefect {
    pub fn as_slice(&self) -> &[f64] {
        &self.values[..self.len]
    }

    /// `s₀ > 0` and `s₀ s_{d+1} > Σ s_i²`; necessary for the weighted Maxwellian to exist.
    pub fn admissible(&self) -> bool {
        let s = self.as_slice();
        let d = self.len - 2;
        let sq: f64 = s[1..=d].iter().map(|x| x * x).sum();
        s[0] > 0.0 && s[0] * s[d + 1] > sq
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Relaxation factor used when the moment defect is inadmissible; `0` disables it.
    pub tau: f64,
    pub newton: NewtonOptions,
}

impl Default for InnerOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 10_000,
            tau: 0.0,
            newton: NewtonOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerSolver {
    FixedPoint,
    Preconditioned,
}

#[derive(Debug, Clone)]
pub struct InnerSolution {
    pub values: Vec<f64>,
    /// Number of updates of `g`, including those of a fallback.
    pub iterations: usize,
    pub fallback: bool,
    pub residual: f64,
    pub maxwellian: MaxwellianParams,
}

/// Source term of cell `j` for the current state: transport terms from
/// neighbors, walls and frozen slopes, plus `extra` (penalty and coarse-grid
/// terms) when given.
pub fn assemble_cell_problem(
    problem: &Problem,
    values: &[f64],
    slopes: &Slopes,
    j: usize,
    extra: Option<&[f64]>,
    out: &mut [f64],
) -> Result<()> {
    problem.transport_source(values, slopes, j, out)?;
    if let Some(e) = extra {
        out.iter_mut().zip(e).for_each(|(o, x)| *o += x);
    }
    Ok(())
}

/// `‖a g + r − (ν/ε)(M − g)‖` in the velocity quadrature norm.
pub fn inner_residual(problem: &CellLocalProblem, g: &[f64], maxwellian: &[f64]) -> f64 {
    let c = problem.stiffness();
    let mut sum = 0.0;
    for k in 0..g.len() {
        let e = problem.transport_weight[k] * g[k] + problem.source[k] - c * (maxwellian[k] - g[k]);
        sum += e * e;
    }
    (sum * problem.grid.weight()).sqrt()
}

pub fn solve_cell(problem: &CellLocalProblem, g0: &[f64], solver: InnerSolver, opts: &InnerOptions) -> Result<InnerSolution> {
    match solver {
        InnerSolver::FixedPoint => fp_solve(problem, g0, opts),
        InnerSolver::Preconditioned => pfp_solve(problem, g0, opts),
    }
}

/// Plain fixed point `g ← ((ν/ε)M[g] − r)/(a + ν/ε)`.
pub fn fp_solve(problem: &CellLocalProblem, g0: &[f64], opts: &InnerOptions) -> Result<InnerSolution> {
    problem.validate()?;
    problem.grid.check_len(g0)?;
    let mut g = g0.to_vec();
    fp_continue(problem, &mut g, None, 0, opts.max_iter, opts).map(|(fit, iterations, residual)| InnerSolution {
        values: g,
        iterations,
        fallback: false,
        residual,
        maxwellian: fit.params,
    })
}

/// Fixed-point iterations from `g` until converged; returns the Maxwellian of
/// the final `g`, the total count, and the residual.
fn fp_continue(
    problem: &CellLocalProblem,
    g: &mut [f64],
    guess: Option<MaxwellianParams>,
    start: usize,
    max_iter: usize,
    opts: &InnerOptions,
) -> Result<(MaxwellianFit, usize, f64)> {
    let mut iterations = start;
    let mut guess = guess;
    loop {
        let fit = discrete_maxwellian_from(g, problem.grid, &opts.newton, guess)?;
        let res = inner_residual(problem, g, &fit.values);
        if res <= opts.tol {
            return Ok((fit, iterations, res));
        }
        if iterations >= max_iter {
            return Err(Error::InnerNotConverged { iterations, residual: res });
        }
        problem.update(&fit.values, g);
        guess = Some(fit.params);
        iterations += 1;
    }
}

pub fn precond_moment_defect(problem: &CellLocalProblem, g: &[f64], maxwellian: &[f64]) -> MomentDefect {
    let grid = problem.grid;
    let n = grid.invariant_count();
    let mut s = [0.0; MAX_INVARIANTS];
    for k in 0..g.len() {
        let x = problem.transport_weight[k] * (maxwellian[k] - g[k]) - problem.source[k];
        let phi = grid.invariants(k);
        for i in 0..n {
            s[i] += phi[i] * x;
        }
    }
    s.iter_mut().for_each(|x| *x *= grid.weight());
    MomentDefect { values: s, len: n }
}

/// Relaxed defect `(s + τ Σ w φ a M[g]) / (1 + τ)`; equals `s` for `τ = 0`.
pub fn relaxed_defect(problem: &CellLocalProblem, defect: &MomentDefect, maxwellian: &[f64], tau: f64) -> MomentDefect {
    let am = weighted_conserved_moments(maxwellian, problem.transport_weight, problem.grid);
    let mut out = *defect;
    for i in 0..defect.len {
        out.values[i] = (defect.values[i] + tau * am[i]) / (1.0 + tau);
    }
    out
}

/// Exponential-family `M` with `Σ w φ a M = s`.
pub fn solve_weighted_maxwellian(
    defect: &MomentDefect,
    problem: &CellLocalProblem,
    guess: MaxwellianParams,
    newton: &NewtonOptions,
) -> Result<MaxwellianFit> {
    if !defect.admissible() {
        return Err(Error::ExistenceViolated);
    }
    fit_exponential(&defect.values, problem.grid, Some(problem.transport_weight), guess, newton)
}

/// Preconditioned fixed point with fallback to [`fp_solve`] iterations when
/// the weighted moment system has no solution.
pub fn pfp_solve(problem: &CellLocalProblem, g0: &[f64], opts: &InnerOptions) -> Result<InnerSolution> {
    problem.validate()?;
    problem.grid.check_len(g0)?;
    let mut g = g0.to_vec();
    let mut iterations = 0;
    let mut guess = None;
    loop {
        let fit = discrete_maxwellian_from(&g, problem.grid, &opts.newton, guess)?;
        let res = inner_residual(problem, &g, &fit.values);
        if res <= opts.tol {
            return Ok(InnerSolution {
                values: g,
                iterations,
                fallback: false,
                residual: res,
                maxwellian: fit.params,
            });
        }
        if iterations >= opts.max_iter {
            return Err(Error::InnerNotConverged { iterations, residual: res });
        }
        let mut defect = precond_moment_defect(problem, &g, &fit.values);
        if !defect.admissible() && opts.tau > 0.0 {
            defect = relaxed_defect(problem, &defect, &fit.values, opts.tau);
        }
        let step = solve_weighted_maxwellian(&defect, problem, fit.params, &opts.newton);
        match step {
            Ok(m) => {
                problem.update(&m.values, &mut g);
                guess = Some(fit.params);
                iterations += 1;
            }
            Err(Error::ExistenceViolated) | Err(Error::Newton { .. }) | Err(Error::NonPhysical(_)) => {
                let (fit, iterations, residual) = fp_continue(problem, &mut g, Some(fit.params), iterations, opts.max_iter, opts)?;
                return Ok(InnerSolution {
                    values: g,
                    iterations,
                    fallback: true,
                    residual,
                    maxwellian: fit.params,
                });
            }
            Err(e) => return Err(e),
        }
    }
}
