//! Velocity-space discretization.
//!
//! A [`VelocityGrid`] is a uniform tensor grid on the truncated box
//! `[-L, L]^d` with equal quadrature weights `Δv^d`. Every velocity integral
//! in the crate is a weighted sum over its points.
//!
//! The discrete Maxwellian of a distribution is the member of the exponential
//! family `exp(α + β·v − γ|v|²)` whose discrete mass, momentum and energy match
//! those of the distribution. It is found with a damped Newton iteration on the
//! `d + 2` parameters; [`fit_exponential`] also serves the weighted variant
//! used by the preconditioned cell solver.

use nalgebra::{SMatrix, SVector};

use crate::error::{Error, Result};

/// Largest supported velocity dimension.
pub const MAX_DIM: usize = 3;
/// Largest number of collision invariants `(1, v_1..v_d, |v|^2)`.
pub const MAX_INVARIANTS: usize = MAX_DIM + 2;

/// Placement of the grid points along each axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Centering {
    /// `−L + (i − 1/2)Δv`, `i = 1..K`; symmetric, no point at zero for even `K`.
    CellCentered,
    /// `iΔv`, `i ∈ {−K/2+1, …, K/2}`; contains zero, required by the spectral collision operator.
    NodePeriodic,
}

#[derive(Debug, Clone)]
pub struct VelocityGrid {
    dim: usize,
    points_per_axis: usize,
    half_width: f64,
    spacing: f64,
    centering: Centering,
    /// Flattened coordinates, `dim` entries per point; the last axis varies fastest.
    coords: Vec<f64>,
    speed_sq: Vec<f64>,
    weight: f64,
}

impl VelocityGrid {
    pub fn new(dim: usize, points_per_axis: usize, half_width: f64, centering: Centering) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::InvalidArgument(format!("velocity dimension {dim} not in 1..=3")));
        }
        if points_per_axis < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 points per axis, got {points_per_axis}"
            )));
        }
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::InvalidArgument(format!("half-width must be positive, got {half_width}")));
        }
        if centering == Centering::NodePeriodic && points_per_axis % 2 != 0 {
            return Err(Error::InvalidArgument(
                "node-periodic grids need an even number of points per axis".into(),
            ));
        }
        let k = points_per_axis;
        let spacing = 2.0 * half_width / k as f64;
        let axis: Vec<f64> = (0..k)
            .map(|i| match centering {
                Centering::CellCentered => -half_width + (i as f64 + 0.5) * spacing,
                Centering::NodePeriodic => (i as f64 - (k / 2) as f64 + 1.0) * spacing,
            })
            .collect();
        let n = k.pow(dim as u32);
        let mut coords = Vec::with_capacity(n * dim);
        let mut speed_sq = Vec::with_capacity(n);
        for flat in 0..n {
            let mut rest = flat;
            let mut idx = [0usize; MAX_DIM];
            for a in (0..dim).rev() {
                idx[a] = rest % k;
                rest /= k;
            }
            let mut s = 0.0;
            for &i in &idx[..dim] {
                coords.push(axis[i]);
                s += axis[i] * axis[i];
            }
            speed_sq.push(s);
        }
        Ok(Self {
            dim,
            points_per_axis,
            half_width,
            spacing,
            centering,
            coords,
            speed_sq,
            weight: spacing.powi(dim as i32),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn centering(&self) -> Centering {
        self.centering
    }

    /// Number of velocity points.
    pub fn len(&self) -> usize {
        self.speed_sq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.speed_sq.is_empty()
    }

    #[inline]
    pub fn point(&self, k: usize) -> &[f64] {
        &self.coords[k * self.dim..(k + 1) * self.dim]
    }

    /// Component `axis` of point `k`.
    #[inline]
    pub fn component(&self, k: usize, axis: usize) -> f64 {
        self.coords[k * self.dim + axis]
    }

    #[inline]
    pub fn speed_sq(&self, k: usize) -> f64 {
        self.speed_sq[k]
    }

    /// Common quadrature weight `Δv^d`.
    #[inline]
    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        std::iter::repeat(self.weight).take(self.len())
    }

    /// Per-axis integer index of point `k` (row-major, last axis fastest).
    pub fn axis_indices(&self, k: usize) -> [usize; MAX_DIM] {
        let mut rest = k;
        let mut idx = [0usize; MAX_DIM];
        for a in (0..self.dim).rev() {
            idx[a] = rest % self.points_per_axis;
            rest /= self.points_per_axis;
        }
        idx
    }

    /// Number of collision invariants `d + 2`.
    pub fn invariant_count(&self) -> usize {
        self.dim + 2
    }

    /// `φ(v_k) = (1, v_1, …, v_d, |v|²)`, padded with zeros.
    #[inline]
    pub fn invariants(&self, k: usize) -> [f64; MAX_INVARIANTS] {
        let mut phi = [0.0; MAX_INVARIANTS];
        phi[0] = 1.0;
        phi[1..=self.dim].copy_from_slice(self.point(k));
        phi[self.dim + 1] = self.speed_sq[k];
        phi
    }

    pub(crate) fn check_len(&self, values: &[f64]) -> Result<()> {
        if values.len() != self.len() {
            return Err(Error::GridMismatch(format!(
                "expected {} velocity values, got {}",
                self.len(),
                values.len()
            )));
        }
        Ok(())
    }
}

/// Builds a uniform velocity grid on `[-L, L]^d`.
pub fn build_velocity_grid(dim: usize, points_per_axis: usize, half_width: f64, centering: Centering) -> Result<VelocityGrid> {
    VelocityGrid::new(dim, points_per_axis, half_width, centering)
}

/// Macroscopic quantities of a distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub density: f64,
    pub velocity: Vec<f64>,
    pub temperature: f64,
    pub heat_flux: Option<Vec<f64>>,
}

/// Density, bulk velocity and temperature by quadrature.
pub fn moments(f: &[f64], grid: &VelocityGrid) -> Result<Moments> {
    grid.check_len(f)?;
    let m = conserved_moments(f, grid);
    let (density, velocity, temperature) = primitive_from_conserved(&m, grid.dim())?;
    Ok(Moments {
        density,
        velocity: velocity[..grid.dim()].to_vec(),
        temperature,
        heat_flux: None,
    })
}

/// Moments including the heat flux `q = ½ Σ w (v − U)|v − U|² f`.
pub fn moments_with_heat_flux(f: &[f64], grid: &VelocityGrid) -> Result<Moments> {
    let mut m = moments(f, grid)?;
    m.heat_flux = Some(heat_flux(f, grid, &m.velocity)?);
    Ok(m)
}

pub fn heat_flux(f: &[f64], grid: &VelocityGrid, bulk_velocity: &[f64]) -> Result<Vec<f64>> {
    grid.check_len(f)?;
    let d = grid.dim();
    if bulk_velocity.len() != d {
        return Err(Error::GridMismatch(format!(
            "bulk velocity has {} components, grid has {d}",
            bulk_velocity.len()
        )));
    }
    let mut q = vec![0.0; d];
    for (k, &fk) in f.iter().enumerate() {
        let v = grid.point(k);
        let c2: f64 = v.iter().zip(bulk_velocity).map(|(vi, ui)| (vi - ui) * (vi - ui)).sum();
        for a in 0..d {
            q[a] += (v[a] - bulk_velocity[a]) * c2 * fk;
        }
    }
    let scale = 0.5 * grid.weight();
    q.iter_mut().for_each(|x| *x *= scale);
    Ok(q)
}

/// `Σ_k w_k φ(v_k) f_k` for the collision invariants.
pub fn conserved_moments(f: &[f64], grid: &VelocityGrid) -> [f64; MAX_INVARIANTS] {
    let d = grid.dim();
    let mut m = [0.0; MAX_INVARIANTS];
    for (k, &fk) in f.iter().enumerate() {
        m[0] += fk;
        let v = grid.point(k);
        for a in 0..d {
            m[a + 1] += v[a] * fk;
        }
        m[d + 1] += grid.speed_sq(k) * fk;
    }
    let w = grid.weight();
    m.iter_mut().for_each(|x| *x *= w);
    m
}

/// `Σ_k w_k c_k φ(v_k) f_k` with an extra per-point weight `c_k`.
pub fn weighted_conserved_moments(f: &[f64], extra: &[f64], grid: &VelocityGrid) -> [f64; MAX_INVARIANTS] {
    let d = grid.dim();
    let mut m = [0.0; MAX_INVARIANTS];
    for (k, (&fk, &ck)) in f.iter().zip(extra).enumerate() {
        let x = fk * ck;
        m[0] += x;
        let v = grid.point(k);
        for a in 0..d {
            m[a + 1] += v[a] * x;
        }
        m[d + 1] += grid.speed_sq(k) * x;
    }
    let w = grid.weight();
    m.iter_mut().for_each(|x| *x *= w);
    m
}

fn primitive_from_conserved(m: &[f64; MAX_INVARIANTS], d: usize) -> Result<(f64, [f64; MAX_DIM], f64)> {
    let rho = m[0];
    if !(rho > 0.0) {
        return Err(Error::NonPhysical(format!("density {rho:.3e} is not positive")));
    }
    let mut u = [0.0; MAX_DIM];
    let mut u2 = 0.0;
    for a in 0..d {
        u[a] = m[a + 1] / rho;
        u2 += u[a] * u[a];
    }
    let t = (m[d + 1] / rho - u2) / d as f64;
    if !(t > 0.0) {
        return Err(Error::NonPhysical(format!("temperature {t:.3e} is not positive")));
    }
    Ok((rho, u, t))
}

/// Coefficients of `exp(α + β·v − γ|v|²)`; unused `β` entries are zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxwellianParams {
    pub alpha: f64,
    pub beta: [f64; MAX_DIM],
    pub gamma: f64,
}

impl MaxwellianParams {
    /// Parameters of the continuous Maxwellian with the given density, velocity and temperature.
    pub fn from_primitive(density: f64, velocity: &[f64], temperature: f64) -> Result<Self> {
        if !(density > 0.0) || !(temperature > 0.0) {
            return Err(Error::NonPhysical(format!(
                "Maxwellian needs positive density and temperature (got {density}, {temperature})"
            )));
        }
        let d = velocity.len();
        if d > MAX_DIM {
            return Err(Error::InvalidArgument(format!("velocity dimension {d} too large")));
        }
        let mut beta = [0.0; MAX_DIM];
        let mut u2 = 0.0;
        for (a, &u) in velocity.iter().enumerate() {
            beta[a] = u / temperature;
            u2 += u * u;
        }
        let alpha = (density / (2.0 * std::f64::consts::PI * temperature).powf(d as f64 / 2.0)).ln()
            - u2 / (2.0 * temperature);
        Ok(Self {
            alpha,
            beta,
            gamma: 0.5 / temperature,
        })
    }

    fn as_vector(&self, d: usize) -> [f64; MAX_INVARIANTS] {
        let mut x = [0.0; MAX_INVARIANTS];
        x[0] = self.alpha;
        x[1..=d].copy_from_slice(&self.beta[..d]);
        x[d + 1] = self.gamma;
        x
    }

    fn from_vector(x: &[f64; MAX_INVARIANTS], d: usize) -> Self {
        let mut beta = [0.0; MAX_DIM];
        beta[..d].copy_from_slice(&x[1..=d]);
        Self {
            alpha: x[0],
            beta,
            gamma: x[d + 1],
        }
    }

    #[inline]
    fn exponent(&self, grid: &VelocityGrid, k: usize) -> f64 {
        let v = grid.point(k);
        let mut e = self.alpha - self.gamma * grid.speed_sq(k);
        for (b, vi) in self.beta.iter().zip(v) {
            e += b * vi;
        }
        e
    }
}

// exp overflows just above 709.78
const EXP_LIMIT: f64 = 709.0;

/// Samples `exp(α + β·v_k − γ|v_k|²)` on the grid.
pub fn evaluate_exponential(params: &MaxwellianParams, grid: &VelocityGrid) -> Result<Vec<f64>> {
    let mut out = vec![0.0; grid.len()];
    evaluate_exponential_into(params, grid, &mut out)?;
    Ok(out)
}

pub fn evaluate_exponential_into(params: &MaxwellianParams, grid: &VelocityGrid, out: &mut [f64]) -> Result<()> {
    if !(params.gamma > 0.0) {
        return Err(Error::InvalidArgument(format!("γ must be positive, got {}", params.gamma)));
    }
    grid.check_len(out)?;
    if !fill_exponential(params, grid, out) {
        return Err(Error::NonPhysical("exponential overflows on the velocity grid".into()));
    }
    Ok(())
}

/// Returns false on overflow or non-finite parameters.
fn fill_exponential(params: &MaxwellianParams, grid: &VelocityGrid, out: &mut [f64]) -> bool {
    for (k, o) in out.iter_mut().enumerate() {
        let e = params.exponent(grid, k);
        if !(e < EXP_LIMIT) {
            return false;
        }
        *o = e.exp();
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Stop when `‖F‖∞ ≤ tol · max(1, ‖target‖∞)`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 50 }
    }
}

/// A converged exponential-family fit.
#[derive(Debug, Clone)]
pub struct MaxwellianFit {
    pub params: MaxwellianParams,
    pub values: Vec<f64>,
    /// Accepted Newton steps.
    pub iterations: usize,
    /// Final `‖F‖∞` of the moment equations.
    pub residual: f64,
    /// `‖F‖₂` at the initial guess and after every accepted step.
    pub merits: Vec<f64>,
}

/// Discrete Maxwellian of `f`: exponential-family values with the same discrete
/// mass, momentum and energy. The initial guess is the continuous Maxwellian of
/// the discrete moments.
pub fn discrete_maxwellian(f: &[f64], grid: &VelocityGrid, opts: &NewtonOptions) -> Result<MaxwellianFit> {
    discrete_maxwellian_from(f, grid, opts, None)
}

/// As [`discrete_maxwellian`], optionally warm-started from `guess`.
pub fn discrete_maxwellian_from(
    f: &[f64],
    grid: &VelocityGrid,
    opts: &NewtonOptions,
    guess: Option<MaxwellianParams>,
) -> Result<MaxwellianFit> {
    grid.check_len(f)?;
    let target = conserved_moments(f, grid);
    let start = match guess {
        Some(g) => g,
        None => {
            let (rho, u, t) = primitive_from_conserved(&target, grid.dim())?;
            MaxwellianParams::from_primitive(rho, &u[..grid.dim()], t)?
        }
    };
    fit_exponential(&target, grid, None, start, opts)
}

/// Damped Newton solve of `Σ_k w_k c_k φ(v_k) exp(α + β·v_k − γ|v_k|²) = target`,
/// with `c_k ≡ 1` when `extra` is `None`.
///
/// The Jacobian is assembled by the same quadrature. Each step is halved until
/// the residual 2-norm decreases and `γ` stays positive. After the tolerance is
/// met one more full step is tried and kept only if it lowers the residual.
pub fn fit_exponential(
    target: &[f64; MAX_INVARIANTS],
    grid: &VelocityGrid,
    extra: Option<&[f64]>,
    guess: MaxwellianParams,
    opts: &NewtonOptions,
) -> Result<MaxwellianFit> {
    if let Some(c) = extra {
        grid.check_len(c)?;
    }
    let d = grid.dim();
    let n = d + 2;
    let scale = target[..n].iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let threshold = opts.tol * scale;

    let mut theta = guess.as_vector(d);
    let mut values = vec![0.0; grid.len()];
    let mut trial_values = vec![0.0; grid.len()];
    let mut residual = [0.0; MAX_INVARIANTS];

    let eval = |theta: &[f64; MAX_INVARIANTS], vals: &mut [f64], res: &mut [f64; MAX_INVARIANTS]| -> f64 {
        let p = MaxwellianParams::from_vector(theta, d);
        if !(p.gamma > 0.0) || !fill_exponential(&p, grid, vals) {
            return f64::INFINITY;
        }
        let m = match extra {
            Some(c) => weighted_conserved_moments(vals, c, grid),
            None => conserved_moments(vals, grid),
        };
        let mut norm = 0.0;
        for i in 0..n {
            res[i] = m[i] - target[i];
            norm += res[i] * res[i];
        }
        if norm.is_finite() {
            norm.sqrt()
        } else {
            f64::INFINITY
        }
    };
    let inf_norm = |r: &[f64; MAX_INVARIANTS]| r[..n].iter().fold(0.0f64, |m, x| m.max(x.abs()));

    let mut merit = eval(&theta, &mut values, &mut residual);
    if !merit.is_finite() {
        return Err(Error::Newton {
            iterations: 0,
            residual: f64::INFINITY,
        });
    }

    let mut merits = vec![merit];
    let mut iterations = 0;
    let mut converged = inf_norm(&residual) <= threshold;
    let mut polished = false;
    loop {
        if converged && polished {
            break;
        }
        if !converged && iterations >= opts.max_iter {
            return Err(Error::Newton {
                iterations,
                residual: inf_norm(&residual),
            });
        }
        let step = match newton_step(grid, extra, &values, &residual, n) {
            Some(s) => s,
            None if converged => break,
            None => {
                return Err(Error::Newton {
                    iterations,
                    residual: inf_norm(&residual),
                })
            }
        };

        if converged {
            // polish: one full step, kept only if it helps
            polished = true;
            let mut trial = theta;
            for i in 0..n {
                trial[i] += step[i];
            }
            let mut trial_res = [0.0; MAX_INVARIANTS];
            let m = eval(&trial, &mut trial_values, &mut trial_res);
            if m < merit {
                theta = trial;
                residual = trial_res;
                merits.push(m);
                std::mem::swap(&mut values, &mut trial_values);
            }
            continue;
        }

        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let mut trial = theta;
            for i in 0..n {
                trial[i] += lambda * step[i];
            }
            let mut trial_res = [0.0; MAX_INVARIANTS];
            let m = eval(&trial, &mut trial_values, &mut trial_res);
            if m < merit {
                theta = trial;
                merit = m;
                merits.push(m);
                residual = trial_res;
                std::mem::swap(&mut values, &mut trial_values);
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(Error::Newton {
                iterations,
                residual: inf_norm(&residual),
            });
        }
        iterations += 1;
        converged = inf_norm(&residual) <= threshold;
    }

    Ok(MaxwellianFit {
        params: MaxwellianParams::from_vector(&theta, d),
        values,
        iterations,
        residual: inf_norm(&residual),
        merits,
    })
}

/// Solves `J δ = −F` with `J_ij = Σ w c M φ_i ψ_j`, `ψ = (1, v, −|v|²)`.
/// Unused rows are padded with the identity so a fixed 5×5 solve covers all `d`.
fn newton_step(
    grid: &VelocityGrid,
    extra: Option<&[f64]>,
    values: &[f64],
    residual: &[f64; MAX_INVARIANTS],
    n: usize,
) -> Option<[f64; MAX_INVARIANTS]> {
    let mut jac = SMatrix::<f64, MAX_INVARIANTS, MAX_INVARIANTS>::zeros();
    for (k, &mk) in values.iter().enumerate() {
        let c = extra.map_or(1.0, |e| e[k]);
        let x = mk * c;
        if x == 0.0 {
            continue;
        }
        let phi = grid.invariants(k);
        for i in 0..n {
            let xi = x * phi[i];
            for j in i..n {
                jac[(i, j)] += xi * phi[j];
            }
        }
    }
    let w = grid.weight();
    for i in 0..n {
        for j in i..n {
            let v = jac[(i, j)] * w;
            jac[(i, j)] = v;
            jac[(j, i)] = v;
        }
    }
    // ∂M/∂γ = −|v|² M
    for i in 0..n {
        jac[(i, n - 1)] = -jac[(i, n - 1)];
    }
    for i in n..MAX_INVARIANTS {
        jac[(i, i)] = 1.0;
    }
    let mut rhs = SVector::<f64, MAX_INVARIANTS>::zeros();
    for i in 0..n {
        rhs[i] = -residual[i];
    }
    let sol = jac.lu().solve(&rhs)?;
    if sol.iter().any(|x| !x.is_finite()) {
        return None;
    }
    let mut out = [0.0; MAX_INVARIANTS];
    out[..n].copy_from_slice(&sol.as_slice()[..n]);
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn gaussian(grid: &VelocityGrid, rho: f64, u: &[f64], t: f64) -> Vec<f64> {
        let d = grid.dim() as f64;
        (0..grid.len())
            .map(|k| {
                let c2: f64 = grid.point(k).iter().zip(u).map(|(v, ui)| (v - ui) * (v - ui)).sum();
                rho / (2.0 * std::f64::consts::PI * t).powf(d / 2.0) * (-c2 / (2.0 * t)).exp()
            })
            .collect()
    }

    #[test]
    fn grid_1d_paper_resolution() {
        let g = build_velocity_grid(1, 50, 6.0, Centering::CellCentered).unwrap();
        assert_eq!(g.len(), 50);
        assert_relative_eq!(g.spacing(), 0.24, epsilon = 1e-15);
        assert_relative_eq!(g.weights().sum::<f64>(), 12.0, max_relative = 1e-12);
        assert!((0..g.len()).all(|k| g.component(k, 0) != 0.0));
        assert_relative_eq!(g.component(0, 0), -6.0 + 0.12, epsilon = 1e-14);
    }

    #[test]
    fn smallest_periodic_grid() {
        let g = build_velocity_grid(1, 2, 1.0, Centering::NodePeriodic).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g.point(0), &[0.0]);
        assert_eq!(g.point(1), &[1.0]);
    }

    #[test]
    fn grid_2d_weight_sum() {
        let g = build_velocity_grid(2, 4, 2.0, Centering::CellCentered).unwrap();
        assert_eq!(g.len(), 16);
        assert_relative_eq!(g.weights().sum::<f64>(), 16.0, max_relative = 1e-12);
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(build_velocity_grid(1, 1, 1.0, Centering::CellCentered).is_err());
        assert!(build_velocity_grid(1, 4, 0.0, Centering::CellCentered).is_err());
        assert!(build_velocity_grid(1, 4, -1.0, Centering::NodePeriodic).is_err());
        assert!(build_velocity_grid(4, 4, 1.0, Centering::NodePeriodic).is_err());
    }

    #[test]
    fn periodic_grid_contains_zero_and_upper_node() {
        let g = build_velocity_grid(2, 8, 4.0, Centering::NodePeriodic).unwrap();
        let xs: Vec<f64> = (0..8).map(|i| g.component(i, 1)).collect();
        assert_eq!(xs, vec![-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn moments_of_constant() {
        let g = build_velocity_grid(1, 50, 6.0, Centering::CellCentered).unwrap();
        let c = 0.3;
        let f = vec![c; g.len()];
        let m = moments(&f, &g).unwrap();
        assert_relative_eq!(m.density, 12.0 * c, max_relative = 1e-13);
        assert!(m.velocity[0].abs() < 1e-14);
        let second: f64 = (0..g.len()).map(|k| g.weight() * g.speed_sq(k)).sum();
        assert_relative_eq!(m.temperature, second / 12.0, max_relative = 1e-13);
    }

    #[test]
    fn moments_reject_zero() {
        let g = build_velocity_grid(1, 10, 6.0, Centering::CellCentered).unwrap();
        assert!(matches!(moments(&vec![0.0; 10], &g), Err(Error::NonPhysical(_))));
        assert!(matches!(moments(&[1.0; 3], &g), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn heat_flux_vanishes_for_even_distribution() {
        let g = build_velocity_grid(2, 12, 5.0, Centering::CellCentered).unwrap();
        let f: Vec<f64> = (0..g.len()).map(|k| (-g.speed_sq(k)).exp() * (1.0 + g.component(k, 0).powi(2))).collect();
        let q = heat_flux(&f, &g, &[0.0, 0.0]).unwrap();
        assert!(q.iter().all(|x| x.abs() < 1e-14));
    }

    #[test]
    fn heat_flux_matches_direct_sum() {
        let g = build_velocity_grid(2, 16, 6.0, Centering::CellCentered).unwrap();
        let mut f = gaussian(&g, 1.0, &[0.0, 0.0], 1.0);
        for k in 0..g.len() {
            f[k] += 0.05 * g.component(k, 0) * (-g.speed_sq(k) / 2.0).exp();
        }
        let m = moments(&f, &g).unwrap();
        let q = heat_flux(&f, &g, &m.velocity).unwrap();
        let mut oracle = 0.0;
        for k in 0..g.len() {
            let c = [g.component(k, 0) - m.velocity[0], g.component(k, 1) - m.velocity[1]];
            oracle += 0.5 * g.weight() * c[0] * (c[0] * c[0] + c[1] * c[1]) * f[k];
        }
        assert_relative_eq!(q[0], oracle, max_relative = 1e-12);
        assert!(q[0].abs() > 1e-3);
    }

    #[test]
    fn exponential_is_positive_and_peaks_near_origin() {
        let g = build_velocity_grid(1, 20, 4.0, Centering::CellCentered).unwrap();
        let p = MaxwellianParams { alpha: 0.0, beta: [0.0; 3], gamma: 0.7 };
        let vals = evaluate_exponential(&p, &g).unwrap();
        assert!(vals.iter().all(|&x| x > 0.0));
        let kmax = (0..g.len()).max_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
        let kmin = (0..g.len()).min_by(|&a, &b| g.speed_sq(a).total_cmp(&g.speed_sq(b))).unwrap();
        assert_eq!(g.speed_sq(kmax), g.speed_sq(kmin));
    }

    #[test]
    fn exponential_with_peak_outside_box_is_finite() {
        let g = build_velocity_grid(1, 20, 4.0, Centering::CellCentered).unwrap();
        let p = MaxwellianParams { alpha: 0.0, beta: [20.0, 0.0, 0.0], gamma: 1.0 };
        let vals = evaluate_exponential(&p, &g).unwrap();
        assert!(vals.iter().all(|x| x.is_finite() && *x > 0.0));
        let bad = MaxwellianParams { alpha: 0.0, beta: [0.0; 3], gamma: 0.0 };
        assert!(evaluate_exponential(&bad, &g).is_err());
    }

    #[test]
    fn sampled_gaussian_is_its_own_discrete_maxwellian() {
        let g = build_velocity_grid(2, 16, 6.0, Centering::CellCentered).unwrap();
        let known = MaxwellianParams { alpha: -0.4, beta: [0.3, -0.2, 0.0], gamma: 0.35 };
        let f = evaluate_exponential(&known, &g).unwrap();
        let fit = discrete_maxwellian(&f, &g, &NewtonOptions::default()).unwrap();
        assert_relative_eq!(fit.params.alpha, known.alpha, epsilon = 1e-10);
        assert_relative_eq!(fit.params.beta[0], known.beta[0], epsilon = 1e-10);
        assert_relative_eq!(fit.params.beta[1], known.beta[1], epsilon = 1e-10);
        assert_relative_eq!(fit.params.gamma, known.gamma, epsilon = 1e-10);
    }

    #[test]
    fn discrete_maxwellian_conserves_and_round_trips() {
        let g = build_velocity_grid(1, 50, 6.0, Centering::CellCentered).unwrap();
        // bimodal, strongly non-equilibrium
        let f: Vec<f64> = (0..g.len())
            .map(|k| {
                let v = g.component(k, 0);
                0.6 * (-(v - 1.5).powi(2)).exp() + 0.3 * (-(v + 2.0).powi(2) / 0.5).exp()
            })
            .collect();
        let fit = discrete_maxwellian(&f, &g, &NewtonOptions::default()).unwrap();
        let a = conserved_moments(&f, &g);
        let b = conserved_moments(&fit.values, &g);
        for i in 0..3 {
            assert!((a[i] - b[i]).abs() <= 1e-12 * a[0].abs().max(1.0), "moment {i}");
        }
        let again = evaluate_exponential(&fit.params, &g).unwrap();
        let c = conserved_moments(&again, &g);
        for i in 0..3 {
            assert!((a[i] - c[i]).abs() <= 1e-12);
        }
    }

    #[test]
    fn newton_failure_reports_residual() {
        let g = build_velocity_grid(1, 20, 4.0, Centering::CellCentered).unwrap();
        // energy far above anything representable on [-4, 4]
        let mut target = [0.0; MAX_INVARIANTS];
        target[0] = 1.0;
        target[2] = 100.0;
        let guess = MaxwellianParams::from_primitive(1.0, &[0.0], 1.0).unwrap();
        let err = fit_exponential(&target, &g, None, guess, &NewtonOptions { tol: 1e-12, max_iter: 10 }).unwrap_err();
        assert!(matches!(err, Error::Newton { .. }));
    }
}
