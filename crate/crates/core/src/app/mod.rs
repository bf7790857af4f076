//! Case registry, configuration parsing and run drivers.

mod bench;
mod run;
mod study;

pub use bench::{expand_matrix, run_bench, BenchRow};
pub use run::{run_case, RunOutcome, RunSummary};
pub use study::{
    convergence_study, convergence_study_against, fitted_slope, restricted_moment_errors, solve_reference, MomentErrors, StudyRow,
    StudyTable, STUDY_TOL,
};

use std::collections::HashSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use crate::cell_solver::InnerOptions;
use crate::collision::{build_spectral_operator, CollisionModel, FrequencyRule, DEALIASING_RATIO, DEFAULT_RADIUS};
use crate::error::{Error, Result};
use crate::iterate::{Method, SolverConfig};
use crate::mesh::{Order, Physics, Problem, Side, SpatialMesh, WallSpec, Walls};
use crate::multigrid::MgParams;
use crate::velocity::{build_velocity_grid, Centering, NewtonOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseId {
    /// Heat transfer between plates, BGK, one space and one velocity dimension.
    Heat1d1v,
    /// Heated square cavity, BGK, two space and three velocity dimensions.
    Cavity2d3v,
    /// Heat transfer between plates with binary collisions, two velocity dimensions.
    Plates1d2v,
    /// Lid-driven square cavity with binary collisions.
    Lid2d2v,
}

impl CaseId {
    pub const ALL: [CaseId; 4] = [CaseId::Heat1d1v, CaseId::Cavity2d3v, CaseId::Plates1d2v, CaseId::Lid2d2v];

    pub fn name(&self) -> &'static str {
        match self {
            CaseId::Heat1d1v => "heat1d1v",
            CaseId::Cavity2d3v => "cavity2d3v",
            CaseId::Plates1d2v => "plates1d2v",
            CaseId::Lid2d2v => "lid2d2v",
        }
    }

    pub fn space_dim(&self) -> usize {
        match self {
            CaseId::Heat1d1v | CaseId::Plates1d2v => 1,
            CaseId::Cavity2d3v | CaseId::Lid2d2v => 2,
        }
    }

    pub fn velocity_dim(&self) -> usize {
        match self {
            CaseId::Heat1d1v => 1,
            CaseId::Plates1d2v | CaseId::Lid2d2v => 2,
            CaseId::Cavity2d3v => 3,
        }
    }

    pub fn is_binary(&self) -> bool {
        matches!(self, CaseId::Plates1d2v | CaseId::Lid2d2v)
    }

    pub fn collision(&self) -> CollisionModel {
        match self {
            CaseId::Heat1d1v => CollisionModel::bgk(FrequencyRule::Constant(1.0)),
            CaseId::Cavity2d3v => CollisionModel::bgk(FrequencyRule::FourPiRho),
            CaseId::Plates1d2v | CaseId::Lid2d2v => CollisionModel::binary(FrequencyRule::TwoPiRho),
        }
    }

    fn default_walls(&self) -> Walls {
        let dv = self.velocity_dim();
        match self {
            CaseId::Heat1d1v | CaseId::Plates1d2v => Walls::one_d(WallSpec::at_rest(1.0, dv), WallSpec::at_rest(2.0, dv)),
            CaseId::Cavity2d3v => Walls::two_d(
                WallSpec::at_rest(1.0, dv),
                WallSpec::at_rest(1.0, dv),
                WallSpec::at_rest(1.0, dv),
                WallSpec::at_rest(2.0, dv),
            ),
            CaseId::Lid2d2v => Walls::two_d(
                WallSpec::at_rest(1.0, dv),
                WallSpec::at_rest(1.0, dv),
                WallSpec::at_rest(1.0, dv),
                WallSpec::moving(1.0, vec![1.0, 0.0]),
            ),
        }
    }

    /// `(cells per axis, velocity points per axis)`.
    fn sizes(&self, paper_scale: bool) -> (usize, usize) {
        match (self, paper_scale) {
            (CaseId::Heat1d1v, _) => (256, 50),
            (CaseId::Cavity2d3v, false) => (20, 12),
            (CaseId::Cavity2d3v, true) => (40, 20),
            (CaseId::Plates1d2v, false) => (64, 32),
            (CaseId::Plates1d2v, true) => (128, 32),
            (CaseId::Lid2d2v, false) => (20, 24),
            (CaseId::Lid2d2v, true) => (40, 32),
        }
    }
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CaseId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CaseId::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown case '{s}'")))
    }
}

/// Everything needed to set up and run one case.
#[derive(Debug, Clone)]
pub struct CaseConfig {
    pub case: CaseId,
    pub knudsen: f64,
    /// Cells per spatial axis; the second entry is ignored in 1D.
    pub cells: [usize; 2],
    pub velocity_points: usize,
    /// Velocity box half-width `L`.
    pub half_width: f64,
    /// Support radius `R` of the spectral operator (binary cases only).
    pub spectral_radius: f64,
    pub order: Order,
    pub method: Method,
    pub outer_tol: f64,
    pub inner_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub tau: f64,
    /// Total mass; the domain volume when `None`.
    pub total_mass: Option<f64>,
    pub walls: Walls,
    pub mg: Option<MgParams>,
    pub output: PathBuf,
    pub parallel: bool,
    pub paper_scale: bool,
}

impl CaseConfig {
    /// Desk-scale defaults, or the published sizes when `paper_scale` is set.
    pub fn defaults(case: CaseId, paper_scale: bool) -> Self {
        let (n, k) = case.sizes(paper_scale);
        let radius = DEFAULT_RADIUS;
        Self {
            case,
            knudsen: 1.0,
            cells: [n, if case.space_dim() > 1 { n } else { 1 }],
            velocity_points: k,
            half_width: if case.is_binary() { DEALIASING_RATIO * radius } else { 6.0 },
            spectral_radius: radius,
            order: Order::First,
            method: Method::SgsPfp,
            outer_tol: 1e-5,
            inner_tol: 1e-8,
            max_outer: 20_000,
            max_inner: 10_000,
            tau: 0.0,
            total_mass: None,
            walls: case.default_walls(),
            mg: None,
            output: PathBuf::from("out"),
            parallel: false,
            paper_scale,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let field = |m: String| Error::InvalidArgument(m);
        if !(self.knudsen > 0.0) {
            return Err(field(format!("eps must be positive, got {}", self.knudsen)));
        }
        for a in 0..self.case.space_dim() {
            if self.cells[a] == 0 {
                return Err(field("cell counts must be positive".into()));
            }
        }
        if self.case.space_dim() == 1 && self.cells[1] != 1 {
            return Err(field(format!("{} is one-dimensional in space", self.case)));
        }
        if self.velocity_points < 2 {
            return Err(field("velocity grid needs at least 2 points per axis".into()));
        }
        if !(self.half_width > 0.0) || !(self.spectral_radius > 0.0) {
            return Err(field("velocity box and spectral radius must be positive".into()));
        }
        if !(self.outer_tol > 0.0) || !(self.inner_tol > 0.0) {
            return Err(field("tolerances must be positive".into()));
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(field("iteration caps must be positive".into()));
        }
        if !(self.tau >= 0.0) {
            return Err(field(format!("tau must be nonnegative, got {}", self.tau)));
        }
        if let Some(c) = self.total_mass {
            if !(c > 0.0) {
                return Err(field(format!("mass must be positive, got {c}")));
            }
        }
        if self.method == Method::SourceIteration && (self.case.is_binary() || self.order != Order::First) {
            return Err(field("source iteration supports only BGK cases with order 1".into()));
        }
        if let Some(mg) = &self.mg {
            mg.validate()?;
        }
        for t in self.walls.temperatures() {
            if !(t > 0.0) {
                return Err(field(format!("wall temperature must be positive, got {t}")));
            }
        }
        Ok(())
    }

    fn domain(&self) -> Result<SpatialMesh> {
        match self.case.space_dim() {
            1 => SpatialMesh::new_1d(-0.5, 0.5, self.cells[0]),
            _ => SpatialMesh::new_2d([-0.5, -0.5], [0.5, 0.5], self.cells),
        }
    }

    /// Builds the discrete problem, including the spectral table for binary cases.
    pub fn build_problem(&self) -> Result<Problem> {
        self.validate()?;
        let dv = self.case.velocity_dim();
        let (grid, spectral) = if self.case.is_binary() {
            let grid = build_velocity_grid(dv, self.velocity_points, self.half_width, Centering::NodePeriodic)?;
            let op = build_spectral_operator(&grid, self.spectral_radius)?;
            (grid, Some(Arc::new(op)))
        } else {
            (build_velocity_grid(dv, self.velocity_points, self.half_width, Centering::CellCentered)?, None)
        };
        Problem::new(
            self.domain()?,
            Arc::new(grid),
            self.walls.clone(),
            Physics {
                knudsen: self.knudsen,
                order: self.order,
                collision: self.case.collision(),
                spectral,
                newton: NewtonOptions::default(),
            },
        )
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            method: self.method,
            outer_tol: self.outer_tol,
            inner: InnerOptions {
                tol: self.inner_tol,
                max_iter: self.max_inner,
                tau: self.tau,
                newton: NewtonOptions::default(),
            },
            max_outer: self.max_outer,
            total_mass: self.total_mass,
            mg: self.mg,
            parallel: self.parallel,
        }
    }

    /// Uniform Maxwellian at rest with the mean wall temperature and total mass `C`.
    pub fn initial_field(&self, problem: &Problem) -> Result<Vec<f64>> {
        let temps: Vec<f64> = self.walls.temperatures().collect();
        let t = temps.iter().sum::<f64>() / temps.len() as f64;
        let mass = self.total_mass.unwrap_or_else(|| problem.mesh().domain_volume());
        problem.uniform_maxwellian(mass, t)
    }

    /// Short label used for output subdirectories.
    pub fn label(&self) -> String {
        format!("{}_{}_eps{:e}_o{}", self.case, self.method, self.knudsen, self.order.number())
    }
}

struct Entry<'a> {
    line: usize,
    key: String,
    value: &'a str,
}

fn entries(text: &str) -> Result<Vec<Entry<'_>>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("");
        for item in body.split(',') {
            let item = item.trim();
            if item.is_empty() {
                continue;
            }
            let (key, value) = item.split_once('=').ok_or_else(|| Error::Config {
                line,
                message: format!("expected key=value, got '{item}'"),
            })?;
            let key = key.trim().to_ascii_lowercase();
            if !seen.insert(key.clone()) {
                return Err(Error::Config {
                    line,
                    message: format!("duplicate key '{key}'"),
                });
            }
            out.push(Entry {
                line,
                key,
                value: value.trim(),
            });
        }
    }
    Ok(out)
}

fn num<T: FromStr>(e: &Entry) -> Result<T> {
    e.value.parse().map_err(|_| Error::Config {
        line: e.line,
        message: format!("invalid value '{}' for {}", e.value, e.key),
    })
}

fn positive(e: &Entry) -> Result<f64> {
    let v: f64 = num(e)?;
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::Config {
            line: e.line,
            message: format!("{} must be positive, got {}", e.key, e.value),
        });
    }
    Ok(v)
}

fn count(e: &Entry) -> Result<usize> {
    let v: usize = num(e)?;
    if v == 0 {
        return Err(Error::Config {
            line: e.line,
            message: format!("{} must be positive", e.key),
        });
    }
    Ok(v)
}

fn boolean(e: &Entry) -> Result<bool> {
    match e.value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config {
            line: e.line,
            message: format!("invalid boolean '{}' for {}", e.value, e.key),
        }),
    }
}

fn side_named(name: &str) -> Option<Side> {
    match name {
        "west" => Some(Side::West),
        "east" => Some(Side::East),
        "south" => Some(Side::South),
        "north" => Some(Side::North),
        _ => None,
    }
}

/// Parses `key=value` pairs separated by commas or newlines, with `#`
/// comments. `case` selects the defaults that the other keys override.
pub fn parse_config(text: &str) -> Result<CaseConfig> {
    let items = entries(text)?;
    let case_entry = items.iter().find(|e| e.key == "case").ok_or(Error::Config {
        line: 1,
        message: "missing required key 'case'".into(),
    })?;
    let case: CaseId = case_entry.value.parse().map_err(|e: Error| Error::Config {
        line: case_entry.line,
        message: e.to_string(),
    })?;
    let paper_scale = match items.iter().find(|e| e.key == "paper_scale") {
        Some(e) => boolean(e)?,
        None => false,
    };
    let mut cfg = CaseConfig::defaults(case, paper_scale);
    let dx = case.space_dim();
    let mut mg: Option<MgParams> = None;
    let mg_base = MgParams::table(dx, Order::First);

    for e in &items {
        let err = |message: String| Error::Config { line: e.line, message };
        match e.key.as_str() {
            "case" | "paper_scale" => {}
            "eps" => cfg.knudsen = positive(e)?,
            "order" => cfg.order = Order::from_number(num(e)?).map_err(|x| err(x.to_string()))?,
            "method" => cfg.method = e.value.parse().map_err(|x: Error| err(x.to_string()))?,
            "n" => {
                let n = count(e)?;
                cfg.cells = [n, if dx > 1 { n } else { 1 }];
            }
            "nx" => cfg.cells[0] = count(e)?,
            "ny" => {
                if dx < 2 {
                    return Err(err(format!("ny is not valid for the one-dimensional case {case}")));
                }
                cfg.cells[1] = count(e)?;
            }
            "k" => cfg.velocity_points = count(e)?,
            "l" => {
                if case.is_binary() {
                    return Err(err("l is derived from radius for binary cases".into()));
                }
                cfg.half_width = positive(e)?;
            }
            "radius" => {
                if !case.is_binary() {
                    return Err(err(format!("radius applies only to binary cases, not {case}")));
                }
                cfg.spectral_radius = positive(e)?;
                cfg.half_width = DEALIASING_RATIO * cfg.spectral_radius;
            }
            "outer_tol" => cfg.outer_tol = positive(e)?,
            "inner_tol" => cfg.inner_tol = positive(e)?,
            "max_outer" => cfg.max_outer = count(e)?,
            "max_inner" => cfg.max_inner = count(e)?,
            "tau" => {
                let t: f64 = num(e)?;
                if !(t >= 0.0) {
                    return Err(err(format!("tau must be nonnegative, got {t}")));
                }
                cfg.tau = t;
            }
            "mass" => cfg.total_mass = Some(positive(e)?),
            "out" => cfg.output = PathBuf::from(e.value),
            "parallel" => cfg.parallel = boolean(e)?,
            key if key.starts_with("mg.") => {
                let p = mg.get_or_insert(mg_base);
                match &key[3..] {
                    "pre_smooth" => p.pre_smooth = num(e)?,
                    "post_smooth" => p.post_smooth = num(e)?,
                    "coarsest_cells" => p.coarsest_cells = count(e)?,
                    "coarsest_max_iter" => p.coarsest_max_iter = count(e)?,
                    other => return Err(err(format!("unknown multigrid key '{other}'"))),
                }
            }
            key if key.starts_with("wall.") => {
                let mut parts = key[5..].split('.');
                let (side, field) = match (parts.next().and_then(side_named), parts.next(), parts.next()) {
                    (Some(s), Some(f), None) => (s, f),
                    _ => return Err(err(format!("unknown wall key '{key}'"))),
                };
                let wall = cfg
                    .walls
                    .get_mut(side)
                    .ok_or_else(|| err(format!("case {case} has no {side:?} wall")))?;
                let axis = match field {
                    "t" => {
                        wall.temperature = positive(e)?;
                        continue;
                    }
                    "ux" => 0,
                    "uy" => 1,
                    "uz" => 2,
                    other => return Err(err(format!("unknown wall field '{other}'"))),
                };
                if axis >= wall.velocity.len() {
                    return Err(err(format!("{key} exceeds the velocity dimension of {case}")));
                }
                wall.velocity[axis] = num(e)?;
            }
            other => return Err(err(format!("unknown key '{other}'"))),
        }
    }
    if let Some(mut p) = mg {
        // untouched entries follow the table for the final order
        let table = MgParams::table(dx, cfg.order);
        if !items.iter().any(|e| e.key == "mg.pre_smooth") {
            p.pre_smooth = table.pre_smooth;
        }
        if !items.iter().any(|e| e.key == "mg.post_smooth") {
            p.post_smooth = table.post_smooth;
        }
        if !items.iter().any(|e| e.key == "mg.coarsest_cells") {
            p.coarsest_cells = table.coarsest_cells;
        }
        cfg.mg = Some(p);
    }
    cfg.validate().map_err(|e| Error::Config {
        line: 0,
        message: e.to_string(),
    })?;
    Ok(cfg)
}
