//! Collision right-hand sides.
//!
//! All operators here return the collision term without the `1/ε` factor.

pub mod spectral;

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::velocity::{conserved_moments, discrete_maxwellian, Moments, NewtonOptions, VelocityGrid};

pub use spectral::{build_spectral_operator, fsm_collision, SpectralOperator, WeightRule, DEALIASING_RATIO, DEFAULT_RADIUS};

/// How the BGK relaxation frequency depends on the local state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FrequencyRule {
    Constant(f64),
    /// `ν = 4πρ`, matching the binary loss term in three velocity dimensions.
    FourPiRho,
    /// `ν = 2πρ`, matching the binary loss term in two velocity dimensions.
    TwoPiRho,
}

impl FrequencyRule {
    pub fn frequency(&self, density: f64) -> Result<f64> {
        if !(density > 0.0) {
            return Err(Error::NonPhysical(format!("density {density:.3e} is not positive")));
        }
        Ok(match *self {
            FrequencyRule::Constant(nu) => nu,
            FrequencyRule::FourPiRho => 4.0 * PI * density,
            FrequencyRule::TwoPiRho => 2.0 * PI * density,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollisionKind {
    Bgk,
    /// Binary collisions of Maxwell molecules, solved through the BGK penalty split.
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionModel {
    pub kind: CollisionKind,
    pub frequency: FrequencyRule,
    /// Collision kernel constant `B`; only `1` is supported by the spectral operator.
    pub kernel_constant: f64,
}

impl CollisionModel {
    pub fn bgk(frequency: FrequencyRule) -> Self {
        Self {
            kind: CollisionKind::Bgk,
            frequency,
            kernel_constant: 1.0,
        }
    }

    pub fn binary(frequency: FrequencyRule) -> Self {
        Self {
            kind: CollisionKind::Binary,
            frequency,
            kernel_constant: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let FrequencyRule::Constant(nu) = self.frequency {
            if !(nu > 0.0) {
                return Err(Error::InvalidArgument(format!("collision frequency must be positive, got {nu}")));
            }
        }
        if self.kind == CollisionKind::Binary && self.kernel_constant != 1.0 {
            return Err(Error::InvalidArgument("binary collisions support only B = 1".into()));
        }
        Ok(())
    }
}

pub fn collision_frequency(moments: &Moments, model: &CollisionModel) -> Result<f64> {
    model.frequency.frequency(moments.density)
}

/// `ν(M[f] − f)`.
pub fn bgk_operator(f: &[f64], nu: f64, grid: &VelocityGrid, newton: &NewtonOptions) -> Result<Vec<f64>> {
    let m = discrete_maxwellian(f, grid, newton)?;
    Ok(m.values.iter().zip(f).map(|(mk, fk)| nu * (mk - fk)).collect())
}

/// `Q^FSM[f, f] − Q^FSM[M[f], M[f]]`, which vanishes identically on the discrete Maxwellian.
pub fn corrected_collision(f: &[f64], grid: &VelocityGrid, op: &SpectralOperator, newton: &NewtonOptions) -> Result<Vec<f64>> {
    let m = discrete_maxwellian(f, grid, newton)?;
    corrected_collision_with(f, &m.values, op)
}

/// As [`corrected_collision`] with the discrete Maxwellian already known.
pub fn corrected_collision_with(f: &[f64], maxwellian: &[f64], op: &SpectralOperator) -> Result<Vec<f64>> {
    let mut q = fsm_collision(f, op)?;
    let qm = fsm_collision(maxwellian, op)?;
    q.iter_mut().zip(&qm).for_each(|(a, b)| *a -= b);
    Ok(q)
}

/// Penalty remainder `P[f] = Q[f, f] − ν(M[f] − f)`.
pub fn penalty_remainder(
    f: &[f64],
    nu: f64,
    grid: &VelocityGrid,
    op: &SpectralOperator,
    newton: &NewtonOptions,
) -> Result<Vec<f64>> {
    let m = discrete_maxwellian(f, grid, newton)?;
    let mut p = corrected_collision_with(f, &m.values, op)?;
    for ((pk, mk), fk) in p.iter_mut().zip(&m.values).zip(f) {
        *pk -= nu * (mk - fk);
    }
    Ok(p)
}

/// Largest absolute discrete moment `|Σ w φ q|` of a collision term.
pub fn moment_defect(q: &[f64], grid: &VelocityGrid) -> f64 {
    let m = conserved_moments(q, grid);
    m[..grid.invariant_count()].iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::velocity::{build_velocity_grid, evaluate_exponential, Centering, MaxwellianParams};

    #[test]
    fn frequency_rules() {
        assert!((FrequencyRule::FourPiRho.frequency(1.0).unwrap() - 12.566370614359172).abs() < 1e-12);
        assert_eq!(FrequencyRule::TwoPiRho.frequency(1.0).unwrap(), 2.0 * PI);
        assert_eq!(FrequencyRule::Constant(1.0).frequency(0.5).unwrap(), 1.0);
        assert!(FrequencyRule::Constant(1.0).frequency(0.0).is_err());
    }

    #[test]
    fn bgk_vanishes_on_maxwellian() {
        let g = build_velocity_grid(1, 50, 6.0, Centering::CellCentered).unwrap();
        let p = MaxwellianParams::from_primitive(1.3, &[0.2], 0.8).unwrap();
        let f = evaluate_exponential(&p, &g).unwrap();
        let q = bgk_operator(&f, 2.0, &g, &NewtonOptions::default()).unwrap();
        assert!(q.iter().all(|x| x.abs() < 1e-10));
    }

    #[test]
    fn bgk_on_zero_moment_perturbation() {
        let g = build_velocity_grid(1, 40, 6.0, Centering::CellCentered).unwrap();
        let p = MaxwellianParams::from_primitive(1.0, &[0.0], 1.0).unwrap();
        let m = evaluate_exponential(&p, &g).unwrap();
        // odd cubic perturbation minus its projection on (1, v, v²)
        let raw: Vec<f64> = (0..g.len()).map(|k| g.component(k, 0).powi(4) * m[k]).collect();
        let mut delta = raw.clone();
        let phi = |k: usize| [1.0, g.component(k, 0), g.speed_sq(k)];
        let mut gram = nalgebra::Matrix3::<f64>::zeros();
        let mut rhs = nalgebra::Vector3::<f64>::zeros();
        for k in 0..g.len() {
            let p = phi(k);
            for i in 0..3 {
                rhs[i] += g.weight() * p[i] * raw[k];
                for j in 0..3 {
                    gram[(i, j)] += g.weight() * p[i] * p[j] * m[k];
                }
            }
        }
        let c = gram.lu().solve(&rhs).unwrap();
        for k in 0..g.len() {
            let p = phi(k);
            delta[k] -= m[k] * (c[0] * p[0] + c[1] * p[1] + c[2] * p[2]);
            delta[k] *= 1e-3;
        }
        let f: Vec<f64> = m.iter().zip(&delta).map(|(a, b)| a + b).collect();
        let q = bgk_operator(&f, 1.5, &g, &NewtonOptions::default()).unwrap();
        for k in 0..g.len() {
            assert!((q[k] + 1.5 * delta[k]).abs() < 1e-12, "k={k}");
        }
    }

    #[test]
    fn corrected_collision_cancels_exactly() {
        let r = spectral::DEFAULT_RADIUS;
        let g = build_velocity_grid(2, 8, spectral::DEALIASING_RATIO * r, Centering::NodePeriodic).unwrap();
        let op = build_spectral_operator(&g, r).unwrap();
        let p = MaxwellianParams::from_primitive(1.0, &[0.1, 0.0], 1.0).unwrap();
        let f = evaluate_exponential(&p, &g).unwrap();
        let fit = discrete_maxwellian(&f, &g, &NewtonOptions::default()).unwrap();
        let q = corrected_collision_with(&fit.values, &fit.values, &op).unwrap();
        assert!(q.iter().all(|&x| x == 0.0));
        let pen = penalty_remainder(&fit.values, 2.0 * PI, &g, &op, &NewtonOptions::default()).unwrap();
        assert!(pen.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn penalty_identity() {
        let r = spectral::DEFAULT_RADIUS;
        let g = build_velocity_grid(2, 8, spectral::DEALIASING_RATIO * r, Centering::NodePeriodic).unwrap();
        let op = build_spectral_operator(&g, r).unwrap();
        let f: Vec<f64> = (0..g.len())
            .map(|k| (-(g.component(k, 0) - 0.7).powi(2) - 0.5 * g.component(k, 1).powi(2)).exp() + 0.3 * (-g.speed_sq(k)).exp())
            .collect();
        let newton = NewtonOptions::default();
        let nu = 2.0 * PI;
        let p = penalty_remainder(&f, nu, &g, &op, &newton).unwrap();
        let b = bgk_operator(&f, nu, &g, &newton).unwrap();
        let q = corrected_collision(&f, &g, &op, &newton).unwrap();
        for k in 0..g.len() {
            assert!((p[k] + b[k] - q[k]).abs() < 1e-12 * q[k].abs().max(1.0));
        }
    }
}
