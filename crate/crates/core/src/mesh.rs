//! Spatial finite-volume discretization on uniform rectangular meshes.
//!
//! Cell averages are reconstructed linearly per axis, fluxes are upwinded
//! dimension by dimension, and every boundary is a fully diffusive wall.
//! Distribution values are stored cell-major: cell `j` owns
//! `values[j * n_v..(j + 1) * n_v]`. In 2D the cell index is `j = ix * N_y + iy`.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use crate::collision::{corrected_collision_with, CollisionKind, CollisionModel, SpectralOperator};
use crate::error::{Error, Result};
use crate::velocity::{discrete_maxwellian_from, moments_with_heat_flux, MaxwellianFit, MaxwellianParams, NewtonOptions, VelocityGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    First,
    Second,
}

impl Order {
    pub fn from_number(order: usize) -> Result<Self> {
        match order {
            1 => Ok(Order::First),
            2 => Ok(Order::Second),
            _ => Err(Error::InvalidArgument(format!("scheme order must be 1 or 2, got {order}"))),
        }
    }

    pub fn number(&self) -> usize {
        match self {
            Order::First => 1,
            Order::Second => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialMesh {
    dim: usize,
    lower: [f64; 2],
    upper: [f64; 2],
    cells: [usize; 2],
    spacing: [f64; 2],
}

impl SpatialMesh {
    pub fn new_1d(lower: f64, upper: f64, cells: usize) -> Result<Self> {
        Self::build(1, [lower, 0.0], [upper, 1.0], [cells, 1])
    }

    pub fn new_2d(lower: [f64; 2], upper: [f64; 2], cells: [usize; 2]) -> Result<Self> {
        Self::build(2, lower, upper, cells)
    }

    fn build(dim: usize, lower: [f64; 2], upper: [f64; 2], cells: [usize; 2]) -> Result<Self> {
        let mut spacing = [1.0; 2];
        for a in 0..dim {
            if cells[a] == 0 {
                return Err(Error::InvalidArgument("mesh needs at least one cell per axis".into()));
            }
            if !(upper[a] > lower[a]) {
                return Err(Error::InvalidArgument(format!(
                    "empty domain along axis {a}: [{}, {}]",
                    lower[a], upper[a]
                )));
            }
            spacing[a] = (upper[a] - lower[a]) / cells[a] as f64;
        }
        Ok(Self {
            dim,
            lower,
            upper,
            cells,
            spacing,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells_per_axis(&self, axis: usize) -> usize {
        self.cells[axis]
    }

    /// Total number of cells.
    pub fn len(&self) -> usize {
        self.cells[0] * self.cells[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.spacing[axis]
    }

    pub fn lower(&self, axis: usize) -> f64 {
        self.lower[axis]
    }

    pub fn upper(&self, axis: usize) -> f64 {
        self.upper[axis]
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing[..self.dim].iter().product()
    }

    pub fn domain_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.upper[a] - self.lower[a]).product()
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        ix * self.cells[1] + iy
    }

    #[inline]
    pub fn coords(&self, j: usize) -> [usize; 2] {
        [j / self.cells[1], j % self.cells[1]]
    }

    pub fn center(&self, j: usize) -> [f64; 2] {
        let c = self.coords(j);
        let mut x = [0.0; 2];
        for a in 0..self.dim {
            x[a] = self.lower[a] + (c[a] as f64 + 0.5) * self.spacing[a];
        }
        x
    }

    /// Neighbor of `j` along `axis`, `upper` selecting the +direction.
    #[inline]
    pub fn neighbor(&self, j: usize, axis: usize, upper: bool) -> Option<usize> {
        let mut c = self.coords(j);
        if upper {
            if c[axis] + 1 >= self.cells[axis] {
                return None;
            }
            c[axis] += 1;
        } else {
            if c[axis] == 0 {
                return None;
            }
            c[axis] -= 1;
        }
        Some(self.index(c[0], c[1]))
    }

    /// Mesh with half the cells per axis.
    pub fn coarsen(&self) -> Result<Self> {
        let mut cells = self.cells;
        for a in 0..self.dim {
            if self.cells[a] % 2 != 0 || self.cells[a] < 2 {
                return Err(Error::InvalidArgument(format!(
                    "cannot coarsen {} cells along axis {a}",
                    self.cells[a]
                )));
            }
            cells[a] /= 2;
        }
        Self::build(self.dim, self.lower, self.upper, cells)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    West,
    East,
    South,
    North,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::West, Side::East, Side::South, Side::North];

    pub fn axis(&self) -> usize {
        match self {
            Side::West | Side::East => 0,
            Side::South | Side::North => 1,
        }
    }

    pub fn is_upper(&self) -> bool {
        matches!(self, Side::East | Side::North)
    }

    /// Sign of the outward normal along [`Side::axis`].
    pub fn normal_sign(&self) -> f64 {
        if self.is_upper() {
            1.0
        } else {
            -1.0
        }
    }

    fn slot(&self) -> usize {
        *self as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WallSpec {
    pub temperature: f64,
    /// Wall velocity, one component per velocity dimension.
    pub velocity: Vec<f64>,
}

impl WallSpec {
    pub fn at_rest(temperature: f64, velocity_dim: usize) -> Self {
        Self {
            temperature,
            velocity: vec![0.0; velocity_dim],
        }
    }

    pub fn moving(temperature: f64, velocity: Vec<f64>) -> Self {
        Self { temperature, velocity }
    }

    /// Continuous wall Maxwellian with unit density, sampled on the grid.
    fn sampled_maxwellian(&self, grid: &VelocityGrid) -> Vec<f64> {
        let d = grid.dim();
        let norm = (2.0 * PI * self.temperature).powf(-(d as f64) / 2.0);
        (0..grid.len())
            .map(|k| {
                let c2: f64 = grid.point(k).iter().zip(&self.velocity).map(|(v, u)| (v - u) * (v - u)).sum();
                norm * (-c2 / (2.0 * self.temperature)).exp()
            })
            .collect()
    }

    fn validate(&self, side: Side, grid: &VelocityGrid) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "{side:?} wall temperature must be positive, got {}",
                self.temperature
            )));
        }
        if self.velocity.len() != grid.dim() {
            return Err(Error::InvalidArgument(format!(
                "{side:?} wall velocity has {} components, velocity grid has {}",
                self.velocity.len(),
                grid.dim()
            )));
        }
        if self.velocity[side.axis()] != 0.0 {
            return Err(Error::InvalidArgument(format!("{side:?} wall velocity has a normal component")));
        }
        Ok(())
    }
}

/// Wall specifications by side; 1D meshes use only west and east.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Walls {
    sides: [Option<WallSpec>; 4],
}

impl Walls {
    pub fn one_d(west: WallSpec, east: WallSpec) -> Self {
        Self {
            sides: [Some(west), Some(east), None, None],
        }
    }

    pub fn two_d(west: WallSpec, east: WallSpec, south: WallSpec, north: WallSpec) -> Self {
        Self {
            sides: [Some(west), Some(east), Some(south), Some(north)],
        }
    }

    pub fn get(&self, side: Side) -> Option<&WallSpec> {
        self.sides[side.slot()].as_ref()
    }

    pub fn get_mut(&mut self, side: Side) -> Option<&mut WallSpec> {
        self.sides[side.slot()].as_mut()
    }

    pub fn temperatures(&self) -> impl Iterator<Item = f64> + '_ {
        self.sides.iter().flatten().map(|w| w.temperature)
    }
}

/// Result of the diffusive closure at one wall face.
#[derive(Debug, Clone)]
pub struct WallGhost {
    /// Density `ρ^w` of the re-emitted Maxwellian.
    pub density: f64,
    /// Face values for outgoing velocities, re-emitted values for incoming ones.
    pub merged: Vec<f64>,
}

/// Diffusive-wall closure for the face values `face` at `side`.
///
/// `ρ^w` is fixed by the discrete zero-mass-flux condition
/// `Σ_out w (v·n) f + ρ^w Σ_in w (v·n) M^w = 0`, so the net discrete flux
/// through the face vanishes to rounding.
pub fn wall_ghost_distribution(face: &[f64], wall: &WallSpec, side: Side, grid: &VelocityGrid) -> Result<WallGhost> {
    grid.check_len(face)?;
    wall.validate(side, grid)?;
    let closure = WallClosure::new(wall, side, grid)?;
    let density = closure.density(face, None, grid)?;
    let merged = (0..grid.len())
        .map(|k| {
            if closure.incoming(grid.component(k, side.axis())) {
                density * closure.maxwellian[k]
            } else {
                face[k]
            }
        })
        .collect();
    Ok(WallGhost { density, merged })
}

#[derive(Debug, Clone)]
struct WallClosure {
    axis: usize,
    sign: f64,
    /// Sampled wall Maxwellian, zero for outgoing velocities.
    maxwellian: Vec<f64>,
    /// `Σ_in w |v·n| M^w`.
    incoming_flux: f64,
}

impl WallClosure {
    fn new(wall: &WallSpec, side: Side, grid: &VelocityGrid) -> Result<Self> {
        let axis = side.axis();
        let sign = side.normal_sign();
        let mut maxwellian = wall.sampled_maxwellian(grid);
        let mut incoming_flux = 0.0;
        for (k, m) in maxwellian.iter_mut().enumerate() {
            let vn = sign * grid.component(k, axis);
            if vn < 0.0 {
                incoming_flux += grid.weight() * (-vn) * *m;
            } else {
                *m = 0.0;
            }
        }
        if !(incoming_flux > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "{side:?} wall has no incoming velocities on this grid"
            )));
        }
        Ok(Self {
            axis,
            sign,
            maxwellian,
            incoming_flux,
        })
    }

    #[inline]
    fn incoming(&self, v_axis: f64) -> bool {
        self.sign * v_axis < 0.0
    }

    /// `ρ^w` from outgoing face values `f + (sign/2) s` (slope optional).
    fn density(&self, f: &[f64], slope: Option<&[f64]>, grid: &VelocityGrid) -> Result<f64> {
        let mut out = 0.0;
        for k in 0..f.len() {
            let vn = self.sign * grid.component(k, self.axis);
            if vn > 0.0 {
                let face = match slope {
                    Some(s) => f[k] + 0.5 * self.sign * s[k],
                    None => f[k],
                };
                out += vn * face;
            }
        }
        out *= grid.weight();
        if !(out > 0.0) {
            return Err(Error::NonPhysical(format!("outgoing wall mass flux {out:.3e} is not positive")));
        }
        Ok(out / self.incoming_flux)
    }
}

/// Per-axis slopes; an order-1 scheme stores none and reads as zero.
#[derive(Debug, Clone)]
pub struct Slopes {
    velocity_len: usize,
    cells: usize,
    data: Vec<f64>,
}

impl Slopes {
    pub fn zero(cells: usize, velocity_len: usize) -> Self {
        Self {
            velocity_len,
            cells,
            data: Vec::new(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, axis: usize, j: usize) -> Option<&[f64]> {
        if self.data.is_empty() {
            return None;
        }
        let start = (axis * self.cells + j) * self.velocity_len;
        Some(&self.data[start..start + self.velocity_len])
    }
}

/// Limiter-free slopes: one-sided at the first and last cell of each line, central inside.
pub fn compute_slopes(mesh: &SpatialMesh, order: Order, values: &[f64], velocity_len: usize) -> Result<Slopes> {
    let cells = mesh.len();
    if values.len() != cells * velocity_len {
        return Err(Error::GridMismatch(format!(
            "field has {} values, mesh and grid need {}",
            values.len(),
            cells * velocity_len
        )));
    }
    if order == Order::First {
        return Ok(Slopes::zero(cells, velocity_len));
    }
    for a in 0..mesh.dim() {
        if mesh.cells_per_axis(a) < 2 {
            return Err(Error::InvalidArgument("second-order slopes need at least 2 cells per axis".into()));
        }
    }
    let nv = velocity_len;
    let mut data = vec![0.0; mesh.dim() * cells * nv];
    for a in 0..mesh.dim() {
        for j in 0..cells {
            let lo = mesh.neighbor(j, a, false);
            let hi = mesh.neighbor(j, a, true);
            let out = &mut data[(a * cells + j) * nv..(a * cells + j + 1) * nv];
            let cell = |i: usize| &values[i * nv..(i + 1) * nv];
            match (lo, hi) {
                (Some(l), Some(h)) => {
                    for ((o, x), y) in out.iter_mut().zip(cell(h)).zip(cell(l)) {
                        *o = 0.5 * (x - y);
                    }
                }
                (None, Some(h)) => {
                    for ((o, x), y) in out.iter_mut().zip(cell(h)).zip(cell(j)) {
                        *o = x - y;
                    }
                }
                (Some(l), None) => {
                    for ((o, x), y) in out.iter_mut().zip(cell(j)).zip(cell(l)) {
                        *o = x - y;
                    }
                }
                (None, None) => unreachable!("checked at least two cells per axis"),
            }
        }
    }
    Ok(Slopes {
        velocity_len,
        cells,
        data,
    })
}

/// Physical and numerical parameters shared by all mesh levels.
#[derive(Debug, Clone)]
pub struct Physics {
    pub knudsen: f64,
    pub order: Order,
    pub collision: CollisionModel,
    pub spectral: Option<Arc<SpectralOperator>>,
    pub newton: NewtonOptions,
}

/// A fully specified discrete steady-state problem on one mesh.
#[derive(Debug, Clone)]
pub struct Problem {
    mesh: SpatialMesh,
    grid: Arc<VelocityGrid>,
    walls: Walls,
    physics: Physics,
    closures: [Option<WallClosure>; 4],
    /// `a_k = Σ_axes |v_axis| / Δ_axis`.
    transport_weight: Vec<f64>,
    /// Velocity components along each spatial axis.
    axis_velocity: Vec<Vec<f64>>,
}

impl Problem {
    pub fn new(mesh: SpatialMesh, grid: Arc<VelocityGrid>, walls: Walls, physics: Physics) -> Result<Self> {
        if grid.dim() < mesh.dim() {
            return Err(Error::InvalidArgument(format!(
                "velocity dimension {} is below the spatial dimension {}",
                grid.dim(),
                mesh.dim()
            )));
        }
        if !(physics.knudsen > 0.0) {
            return Err(Error::InvalidArgument(format!("Knudsen number must be positive, got {}", physics.knudsen)));
        }
        physics.collision.validate()?;
        if physics.collision.kind == CollisionKind::Binary {
            match &physics.spectral {
                Some(op) if op.matches(&grid) => {}
                Some(_) => return Err(Error::GridMismatch("spectral operator was built for another grid".into())),
                None => return Err(Error::InvalidArgument("binary collisions need a spectral operator".into())),
            }
        }
        let mut closures: [Option<WallClosure>; 4] = Default::default();
        for side in Side::ALL {
            let needed = side.axis() < mesh.dim();
            match (walls.get(side), needed) {
                (Some(w), true) => {
                    w.validate(side, &grid)?;
                    closures[side.slot()] = Some(WallClosure::new(w, side, &grid)?);
                }
                (None, true) => return Err(Error::InvalidArgument(format!("missing {side:?} wall"))),
                (_, false) => {}
            }
        }
        let axis_velocity: Vec<Vec<f64>> = (0..mesh.dim())
            .map(|a| (0..grid.len()).map(|k| grid.component(k, a)).collect())
            .collect();
        let transport_weight = (0..grid.len())
            .map(|k| (0..mesh.dim()).map(|a| axis_velocity[a][k].abs() / mesh.spacing(a)).sum())
            .collect();
        Ok(Self {
            mesh,
            grid,
            walls,
            physics,
            closures,
            transport_weight,
            axis_velocity,
        })
    }

    /// The same problem on another mesh of the same domain.
    pub fn with_mesh(&self, mesh: SpatialMesh) -> Result<Self> {
        Self::new(mesh, self.grid.clone(), self.walls.clone(), self.physics.clone())
    }

    pub fn mesh(&self) -> &SpatialMesh {
        &self.mesh
    }

    pub fn grid(&self) -> &VelocityGrid {
        &self.grid
    }

    pub fn grid_arc(&self) -> &Arc<VelocityGrid> {
        &self.grid
    }

    pub fn walls(&self) -> &Walls {
        &self.walls
    }

    pub fn physics(&self) -> &Physics {
        &self.physics
    }

    pub fn knudsen(&self) -> f64 {
        self.physics.knudsen
    }

    pub fn order(&self) -> Order {
        self.physics.order
    }

    pub fn collision(&self) -> &CollisionModel {
        &self.physics.collision
    }

    pub fn newton(&self) -> &NewtonOptions {
        &self.physics.newton
    }

    pub fn transport_weight(&self) -> &[f64] {
        &self.transport_weight
    }

    /// Number of unknowns per cell.
    pub fn velocity_len(&self) -> usize {
        self.grid.len()
    }

    pub fn field_len(&self) -> usize {
        self.mesh.len() * self.grid.len()
    }

    pub fn check_field(&self, values: &[f64]) -> Result<()> {
        if values.len() != self.field_len() {
            return Err(Error::GridMismatch(format!(
                "field has {} values, problem needs {}",
                values.len(),
                self.field_len()
            )));
        }
        Ok(())
    }

    pub fn slopes(&self, values: &[f64]) -> Result<Slopes> {
        compute_slopes(&self.mesh, self.physics.order, values, self.grid.len())
    }

    /// Transport terms of cell `j` other than `a_k f_{j,k}`:
    /// `Σ_axes Δ⁻¹ [v s_j/2 − v⁺ F_lower + v⁻ F_upper]`, where `F` are the
    /// neighbor face values or the wall ghost values.
    pub fn transport_source(&self, values: &[f64], slopes: &Slopes, j: usize, out: &mut [f64]) -> Result<()> {
        let nv = self.grid.len();
        let cell = |i: usize| &values[i * nv..(i + 1) * nv];
        out.iter_mut().for_each(|x| *x = 0.0);
        let fj = cell(j);
        for a in 0..self.mesh.dim() {
            let inv = 1.0 / self.mesh.spacing(a);
            let vel = &self.axis_velocity[a];
            let sj = slopes.get(a, j);
            if let Some(s) = sj {
                for ((o, v), sk) in out.iter_mut().zip(vel).zip(s) {
                    *o += 0.5 * inv * v * sk;
                }
            }
            match self.mesh.neighbor(j, a, false) {
                Some(n) => {
                    let fnb = cell(n);
                    let sn = slopes.get(a, n);
                    for k in 0..nv {
                        let v = vel[k];
                        if v > 0.0 {
                            let face = fnb[k] + sn.map_or(0.0, |s| 0.5 * s[k]);
                            out[k] -= inv * v * face;
                        }
                    }
                }
                None => {
                    let side = if a == 0 { Side::West } else { Side::South };
                    let closure = self.closures[side.slot()].as_ref().expect("wall closure");
                    let rho = closure.density(fj, sj, &self.grid).map_err(|e| e.at_cell(j))?;
                    for k in 0..nv {
                        let v = vel[k];
                        if v > 0.0 {
                            out[k] -= inv * v * rho * closure.maxwellian[k];
                        }
                    }
                }
            }
            match self.mesh.neighbor(j, a, true) {
                Some(n) => {
                    let fnb = cell(n);
                    let sn = slopes.get(a, n);
                    for k in 0..nv {
                        let v = vel[k];
                        if v < 0.0 {
                            let face = fnb[k] - sn.map_or(0.0, |s| 0.5 * s[k]);
                            out[k] += inv * v * face;
                        }
                    }
                }
                None => {
                    let side = if a == 0 { Side::East } else { Side::North };
                    let closure = self.closures[side.slot()].as_ref().expect("wall closure");
                    let rho = closure.density(fj, sj, &self.grid).map_err(|e| e.at_cell(j))?;
                    for k in 0..nv {
                        let v = vel[k];
                        if v < 0.0 {
                            out[k] += inv * v * rho * closure.maxwellian[k];
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Wall density `ρ^w` at `side` for the boundary-cell values `f` (and
    /// slope along the wall normal), with the sampled wall Maxwellian that is
    /// zero for outgoing velocities.
    pub fn wall_inflow(&self, side: Side, f: &[f64], slope: Option<&[f64]>) -> Result<(f64, &[f64])> {
        let closure = self.closures[side.slot()]
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument(format!("no {side:?} wall on this mesh")))?;
        Ok((closure.density(f, slope, &self.grid)?, &closure.maxwellian))
    }

    /// Velocity components along spatial `axis`.
    pub fn axis_velocity(&self, axis: usize) -> &[f64] {
        &self.axis_velocity[axis]
    }

    /// Discrete Maxwellian and collision frequency of one cell.
    pub fn local_equilibrium(&self, f: &[f64], guess: Option<MaxwellianParams>) -> Result<(MaxwellianFit, f64)> {
        let fit = discrete_maxwellian_from(f, &self.grid, &self.physics.newton, guess)?;
        let density = f.iter().sum::<f64>() * self.grid.weight();
        let nu = self.physics.collision.frequency.frequency(density)?;
        Ok((fit, nu))
    }

    /// Collision term `C[f]` of one cell (no `1/ε`): `ν(M − f)` for BGK, the
    /// corrected spectral operator for binary collisions.
    pub fn collision_term(&self, f: &[f64], out: &mut [f64]) -> Result<()> {
        let (fit, nu) = self.local_equilibrium(f, None)?;
        match self.physics.collision.kind {
            CollisionKind::Bgk => {
                for ((o, m), fk) in out.iter_mut().zip(&fit.values).zip(f) {
                    *o = nu * (m - fk);
                }
            }
            CollisionKind::Binary => {
                let op = self.spectral()?;
                out.copy_from_slice(&corrected_collision_with(f, &fit.values, op)?);
            }
        }
        Ok(())
    }

    /// Penalty remainder `P[f] = Q[f] − ν(M − f)` of one cell together with `ν`.
    pub fn penalty(&self, f: &[f64], out: &mut [f64]) -> Result<f64> {
        let (fit, nu) = self.local_equilibrium(f, None)?;
        let op = self.spectral()?;
        let q = corrected_collision_with(f, &fit.values, op)?;
        for (((o, qk), m), fk) in out.iter_mut().zip(&q).zip(&fit.values).zip(f) {
            *o = qk - nu * (m - fk);
        }
        Ok(nu)
    }

    pub fn spectral(&self) -> Result<&SpectralOperator> {
        self.physics
            .spectral
            .as_deref()
            .ok_or_else(|| Error::InvalidArgument("binary collisions need a spectral operator".into()))
    }

    /// Discrete steady-state operator `R(f) = v·∇f − ε⁻¹ C[f]`, wall terms included.
    pub fn apply_operator(&self, values: &[f64], parallel: bool) -> Result<Vec<f64>> {
        self.check_field(values)?;
        let slopes = self.slopes(values)?;
        let nv = self.grid.len();
        let inv_eps = 1.0 / self.physics.knudsen;
        let mut out = vec![0.0; values.len()];
        for_each_cell(&mut out, nv, parallel, |j, o| {
            let f = &values[j * nv..(j + 1) * nv];
            self.transport_source(values, &slopes, j, o)?;
            let mut c = vec![0.0; nv];
            self.collision_term(f, &mut c).map_err(|e| e.at_cell(j))?;
            for k in 0..nv {
                o[k] += self.transport_weight[k] * f[k] - inv_eps * c[k];
            }
            Ok(())
        })?;
        Ok(out)
    }

    /// `sqrt(ΔV Σ_j Σ_k w (R(f) − rhs)²)`.
    pub fn residual_norm(&self, operator_values: &[f64], rhs: Option<&[f64]>) -> f64 {
        let mut sum = 0.0;
        match rhs {
            Some(r) => {
                for (a, b) in operator_values.iter().zip(r) {
                    sum += (a - b) * (a - b);
                }
            }
            None => {
                for a in operator_values {
                    sum += a * a;
                }
            }
        }
        (sum * self.mesh.cell_volume() * self.grid.weight()).sqrt()
    }

    /// Samples the continuous Maxwellian with zero velocity and temperature `t`,
    /// scaled to total discrete mass `mass`.
    pub fn uniform_maxwellian(&self, mass: f64, temperature: f64) -> Result<Vec<f64>> {
        let wall = WallSpec::at_rest(temperature, self.grid.dim());
        if !(temperature > 0.0) || !(mass > 0.0) {
            return Err(Error::InvalidArgument("initial mass and temperature must be positive".into()));
        }
        let m = wall.sampled_maxwellian(&self.grid);
        let mut values = Vec::with_capacity(self.field_len());
        for _ in 0..self.mesh.len() {
            values.extend_from_slice(&m);
        }
        rescale_mass(self, &mut values, mass)?;
        Ok(values)
    }
}

/// `Σ_j ΔV Σ_k w f_{j,k}`.
pub fn total_mass(problem: &Problem, values: &[f64]) -> f64 {
    values.iter().sum::<f64>() * problem.mesh().cell_volume() * problem.grid().weight()
}

/// Scales every value by `C / m` so the total mass becomes `C`.
pub fn rescale_mass(problem: &Problem, values: &mut [f64], target: f64) -> Result<f64> {
    problem.check_field(values)?;
    if !(target > 0.0) {
        return Err(Error::InvalidArgument(format!("target mass must be positive, got {target}")));
    }
    let m = total_mass(problem, values);
    if !(m > 0.0) {
        return Err(Error::NonPhysical(format!("total mass {m:.3e} is not positive")));
    }
    let factor = target / m;
    values.iter_mut().for_each(|x| *x *= factor);
    Ok(factor)
}

/// Global residual of the steady equation `R(f) = rhs` (`rhs = 0` when absent).
pub fn global_residual(problem: &Problem, values: &[f64], rhs: Option<&[f64]>, parallel: bool) -> Result<f64> {
    let op = problem.apply_operator(values, parallel)?;
    Ok(problem.residual_norm(&op, rhs))
}

/// Runs `body(j, chunk)` over per-cell chunks, optionally on the rayon pool.
pub(crate) fn for_each_cell<F>(out: &mut [f64], chunk: usize, parallel: bool, body: F) -> Result<()>
where
    F: Fn(usize, &mut [f64]) -> Result<()> + Sync,
{
    if parallel {
        out.par_chunks_mut(chunk).enumerate().try_for_each(|(j, c)| body(j, c))
    } else {
        out.chunks_mut(chunk).enumerate().try_for_each(|(j, c)| body(j, c))
    }
}

/// Per-cell moments including heat flux.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMoments {
    pub center: [f64; 2],
    pub density: f64,
    pub velocity: Vec<f64>,
    pub temperature: f64,
    pub heat_flux: Vec<f64>,
}

pub fn moment_field(problem: &Problem, values: &[f64]) -> Result<Vec<CellMoments>> {
    problem.check_field(values)?;
    let nv = problem.velocity_len();
    (0..problem.mesh().len())
        .map(|j| {
            let m = moments_with_heat_flux(&values[j * nv..(j + 1) * nv], problem.grid()).map_err(|e| e.at_cell(j))?;
            Ok(CellMoments {
                center: problem.mesh().center(j),
                density: m.density,
                velocity: m.velocity,
                temperature: m.temperature,
                heat_flux: m.heat_flux.unwrap_or_default(),
            })
        })
        .collect()
}

/// Writes columns `x[, y], rho, U1.., T, q1..` with one row per cell.
pub fn write_moments_csv(path: &Path, problem: &Problem, values: &[f64]) -> Result<()> {
    let rows = moment_field(problem, values)?;
    let dx = problem.mesh().dim();
    let dv = problem.grid().dim();
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = ["x", "y"][..dx].iter().map(|s| s.to_string()).collect();
    header.push("rho".into());
    header.extend((1..=dv).map(|i| format!("U{i}")));
    header.push("T".into());
    header.extend((1..=dv).map(|i| format!("q{i}")));
    w.write_record(&header)?;
    for r in rows {
        let mut rec: Vec<String> = r.center[..dx].iter().map(|x| format!("{x:.17e}")).collect();
        rec.push(format!("{:.17e}", r.density));
        rec.extend(r.velocity.iter().map(|x| format!("{x:.17e}")));
        rec.push(format!("{:.17e}", r.temperature));
        rec.extend(r.heat_flux.iter().map(|x| format!("{x:.17e}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
