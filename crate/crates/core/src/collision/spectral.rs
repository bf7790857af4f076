//! Fourier spectral evaluation of the binary collision operator for
//! two-dimensional Maxwell molecules (`B ≡ 1`).
//!
//! The distribution is assumed supported in `B(0, R)` and extended
//! periodically from `[-L, L]²`. With `f(v) = Σ_k f̂_k e^{iξ_k·v}`,
//! `ξ_k = πk/L`, the truncated operator (relative speeds `|g| ≤ 2R`) has modes
//!
//! ```text
//! Q̂_k = Σ_{l+m=k} β(l, m) f̂_l f̂_m,    β(l, m) = G(l, m) − G(l, l),
//! G(l, m) = ∫_{B(0,2R)} ∫_{S¹} exp(−i(ξ_l·g⁺ + ξ_m·g⁻)) dω dg,
//! g± = (g ± |g|ω)/2,
//! ```
//!
//! which reduces to `G = 4π² ∫_0^{2R} ρ J₀(ρ|ξ_l − ξ_m|/2) J₀(ρ|ξ_l + ξ_m|/2) dρ`.
//! The radial integral is evaluated in closed form (Lommel) by default, or by
//! Gauss–Legendre in radius with a trapezoidal angular rule for `J₀`.
//!
//! Evaluation is the direct `O(K⁴)` mode sum; transforms are separable DFTs.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::Complex;

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;
use crate::velocity::{Centering, VelocityGrid};

/// Ratio `L / R` that avoids aliasing in the truncated operator.
pub const DEALIASING_RATIO: f64 = (3.0 * std::f64::consts::SQRT_2 + 1.0) / 2.0;

/// Default support radius.
pub const DEFAULT_RADIUS: f64 = 3.0;

type C64 = Complex<f64>;

/// How the kernel-mode weights are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightRule {
    /// Exact radial integral via Bessel functions.
    ClosedForm,
    /// Gauss–Legendre in radius, trapezoid in angle.
    Quadrature { radial: usize, angular: usize },
}

impl WeightRule {
    /// The quadrature fallback with 32 radial and 32 angular nodes.
    pub const DEFAULT_QUADRATURE: WeightRule = WeightRule::Quadrature { radial: 32, angular: 32 };

    fn node_counts(&self) -> (u32, u32) {
        match *self {
            WeightRule::ClosedForm => (0, 0),
            WeightRule::Quadrature { radial, angular } => (radial as u32, angular as u32),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpectralOperator {
    modes: usize,
    half_width: f64,
    radius: f64,
    rule: WeightRule,
    /// `β(l, m)` at `l_flat * K² + m_flat`; mode index `p` maps to `p − K/2`.
    table: Vec<f64>,
    /// `exp(−2πi k j / K)` at `p * K + q`, mode index `p`, grid index `q`.
    twiddle: Vec<C64>,
}

/// Precomputes the weight table for a node-periodic 2D grid.
pub fn build_spectral_operator(grid: &VelocityGrid, radius: f64) -> Result<SpectralOperator> {
    SpectralOperator::new(grid, radius, WeightRule::ClosedForm)
}

impl SpectralOperator {
    pub fn new(grid: &VelocityGrid, radius: f64, rule: WeightRule) -> Result<Self> {
        Self::check_geometry(grid, radius)?;
        if let WeightRule::Quadrature { radial, angular } = rule {
            if radial == 0 || angular == 0 {
                return Err(Error::InvalidArgument("quadrature node counts must be positive".into()));
            }
        }
        let k = grid.points_per_axis();
        let l = grid.half_width();
        let n = k * k;
        let mut table = vec![0.0; n * n];
        let xi = |p: usize| (p as f64 - (k / 2) as f64) * PI / l;
        let cutoff = 2.0 * radius;
        let kernel = |a: f64, b: f64| -> f64 {
            4.0 * PI * PI
                * match rule {
                    WeightRule::ClosedForm => lommel(a, b, cutoff),
                    WeightRule::Quadrature { radial, angular } => radial_quadrature(a, b, cutoff, radial, angular),
                }
        };
        // G(l, l) depends on |ξ_l| only
        let mut loss = vec![0.0; n];
        for (lf, slot) in loss.iter_mut().enumerate() {
            let (x0, x1) = (xi(lf / k), xi(lf % k));
            *slot = kernel(0.0, (x0 * x0 + x1 * x1).sqrt());
        }
        for lf in 0..n {
            let (l0, l1) = (xi(lf / k), xi(lf % k));
            let row = &mut table[lf * n..(lf + 1) * n];
            for (mf, slot) in row.iter_mut().enumerate() {
                let (m0, m1) = (xi(mf / k), xi(mf % k));
                let a = 0.5 * ((l0 - m0).powi(2) + (l1 - m1).powi(2)).sqrt();
                let b = 0.5 * ((l0 + m0).powi(2) + (l1 + m1).powi(2)).sqrt();
                *slot = kernel(a, b) - loss[lf];
            }
        }
        Ok(Self {
            modes: k,
            half_width: l,
            radius,
            rule,
            table,
            twiddle: twiddles(k),
        })
    }

    fn check_geometry(grid: &VelocityGrid, radius: f64) -> Result<()> {
        if grid.centering() != Centering::NodePeriodic {
            return Err(Error::InvalidArgument("spectral collision needs a node-periodic grid".into()));
        }
        if grid.dim() != 2 {
            return Err(Error::InvalidArgument(format!(
                "spectral collision is implemented for 2D velocity, got {}D",
                grid.dim()
            )));
        }
        if !(radius > 0.0) {
            return Err(Error::InvalidArgument(format!("support radius must be positive, got {radius}")));
        }
        if grid.half_width() < DEALIASING_RATIO * radius * (1.0 - 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "half-width {} is below the dealiasing bound {} for R = {radius}",
                grid.half_width(),
                DEALIASING_RATIO * radius
            )));
        }
        Ok(())
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn rule(&self) -> WeightRule {
        self.rule
    }

    /// `β(l, m)` for signed mode vectors `l, m ∈ {−K/2, …, K/2−1}²`.
    pub fn weight(&self, l: [i64; 2], m: [i64; 2]) -> Option<f64> {
        let lf = self.mode_flat(l)?;
        let mf = self.mode_flat(m)?;
        let n = self.modes * self.modes;
        Some(self.table[lf * n + mf])
    }

    fn mode_flat(&self, mode: [i64; 2]) -> Option<usize> {
        let half = (self.modes / 2) as i64;
        let p0 = mode[0] + half;
        let p1 = mode[1] + half;
        let k = self.modes as i64;
        if (0..k).contains(&p0) && (0..k).contains(&p1) {
            Some((p0 * k + p1) as usize)
        } else {
            None
        }
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn matches(&self, grid: &VelocityGrid) -> bool {
        grid.dim() == 2
            && grid.centering() == Centering::NodePeriodic
            && grid.points_per_axis() == self.modes
            && grid.half_width() == self.half_width
    }

    /// Fourier coefficients `f̂_k = K⁻² Σ_j f_j e^{−2πi k·j/K}`, mode-major.
    pub fn forward(&self, f: &[f64]) -> Vec<C64> {
        let k = self.modes;
        let tw = &self.twiddle;
        // along the fast axis: a[q0][p1] = Σ_q1 f[q0][q1] tw[p1][q1]
        let mut a = vec![C64::new(0.0, 0.0); k * k];
        for q0 in 0..k {
            let row = &f[q0 * k..(q0 + 1) * k];
            for p1 in 0..k {
                let t = &tw[p1 * k..(p1 + 1) * k];
                let mut s = C64::new(0.0, 0.0);
                for (x, w) in row.iter().zip(t) {
                    s += w * *x;
                }
                a[q0 * k + p1] = s;
            }
        }
        let norm = 1.0 / (k * k) as f64;
        let mut out = vec![C64::new(0.0, 0.0); k * k];
        for p0 in 0..k {
            let t = &tw[p0 * k..(p0 + 1) * k];
            for q0 in 0..k {
                let w = t[q0] * norm;
                let src = &a[q0 * k..(q0 + 1) * k];
                let dst = &mut out[p0 * k..(p0 + 1) * k];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
        out
    }

    /// Truncated mode sum `Q̂_k = Σ_{l+m=k} β(l,m) f̂_l f̂_m`.
    pub fn mode_sum(&self, fhat: &[C64]) -> Vec<C64> {
        let k = self.modes;
        let n = k * k;
        let half = k / 2;
        let mut out = vec![C64::new(0.0, 0.0); n];
        for a0 in 0..k {
            // b0 with a0 + b0 − K/2 ∈ [0, K)
            let b0_lo = half.saturating_sub(a0);
            let b0_hi = (k + half - a0).min(k);
            for a1 in 0..k {
                let lf = a0 * k + a1;
                let fl = fhat[lf];
                if fl.re == 0.0 && fl.im == 0.0 {
                    continue;
                }
                let b1_lo = half.saturating_sub(a1);
                let b1_hi = (k + half - a1).min(k);
                let row = &self.table[lf * n..(lf + 1) * n];
                for b0 in b0_lo..b0_hi {
                    let k0 = a0 + b0 - half;
                    let base_m = b0 * k;
                    let start_k = k0 * k + a1 + b1_lo - half;
                    let betas = &row[base_m + b1_lo..base_m + b1_hi];
                    let fm = &fhat[base_m + b1_lo..base_m + b1_hi];
                    let dst = &mut out[start_k..start_k + (b1_hi - b1_lo)];
                    for ((d, &beta), m) in dst.iter_mut().zip(betas).zip(fm) {
                        *d += fl * m * beta;
                    }
                }
            }
        }
        out
    }

    /// `Re Σ_k ĝ_k e^{2πi k·j/K}` on the grid.
    pub fn inverse(&self, ghat: &[C64]) -> Vec<f64> {
        let k = self.modes;
        let tw = &self.twiddle;
        // a[p0][q1] = Σ_p1 ĝ[p0][p1] conj(tw[p1][q1])
        let mut a = vec![C64::new(0.0, 0.0); k * k];
        for p0 in 0..k {
            let src = &ghat[p0 * k..(p0 + 1) * k];
            let dst = &mut a[p0 * k..(p0 + 1) * k];
            for (p1, g) in src.iter().enumerate() {
                let t = &tw[p1 * k..(p1 + 1) * k];
                for (d, w) in dst.iter_mut().zip(t) {
                    *d += g * w.conj();
                }
            }
        }
        let mut out = vec![0.0; k * k];
        for p0 in 0..k {
            let t = &tw[p0 * k..(p0 + 1) * k];
            let src = &a[p0 * k..(p0 + 1) * k];
            for q0 in 0..k {
                let w = t[q0].conj();
                let dst = &mut out[q0 * k..(q0 + 1) * k];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += (w * s).re;
                }
            }
        }
        out
    }

    /// Writes the table as: magic `FSMW`, `d`, `K` (u32), `R`, `L` (f64),
    /// radial and angular node counts (u32, zero for the closed form), then
    /// `K^{2d}` weights, all little-endian.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        w.write_all(b"FSMW")?;
        w.write_all(&2u32.to_le_bytes())?;
        w.write_all(&(self.modes as u32).to_le_bytes())?;
        w.write_all(&self.radius.to_le_bytes())?;
        w.write_all(&self.half_width.to_le_bytes())?;
        let (nr, na) = self.rule.node_counts();
        w.write_all(&nr.to_le_bytes())?;
        w.write_all(&na.to_le_bytes())?;
        for x in &self.table {
            w.write_all(&x.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    /// Loads a cached table, checking the header against `grid` and `radius`.
    pub fn load(path: &Path, grid: &VelocityGrid, radius: f64) -> Result<Self> {
        Self::check_geometry(grid, radius)?;
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let bad = |msg: &str| Error::GridMismatch(format!("weight cache {}: {msg}", path.display()));
        if bytes.len() < 36 || &bytes[..4] != b"FSMW" {
            return Err(bad("bad header"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let (d, k, r, l) = (u32_at(4), u32_at(8) as usize, f64_at(12), f64_at(20));
        let (nr, na) = (u32_at(28) as usize, u32_at(32) as usize);
        if d != 2 || k != grid.points_per_axis() || r != radius || l != grid.half_width() {
            return Err(bad("header does not match the requested grid"));
        }
        let n = k.pow(4);
        if bytes.len() != 36 + 8 * n {
            return Err(bad("truncated weight table"));
        }
        let table = (0..n).map(|i| f64_at(36 + 8 * i)).collect();
        let rule = if nr == 0 && na == 0 {
            WeightRule::ClosedForm
        } else {
            WeightRule::Quadrature { radial: nr, angular: na }
        };
        Ok(Self {
            modes: k,
            half_width: l,
            radius,
            rule,
            table,
            twiddle: twiddles(k),
        })
    }
}

/// Spectral evaluation of `Q[f, f]` on the operator's grid.
pub fn fsm_collision(f: &[f64], op: &SpectralOperator) -> Result<Vec<f64>> {
    if f.len() != op.modes * op.modes {
        return Err(Error::GridMismatch(format!(
            "spectral operator expects {} values, got {}",
            op.modes * op.modes,
            f.len()
        )));
    }
    let fhat = op.forward(f);
    let qhat = op.mode_sum(&fhat);
    Ok(op.inverse(&qhat))
}

fn twiddles(k: usize) -> Vec<C64> {
    let half = (k / 2) as i64;
    let mut tw = Vec::with_capacity(k * k);
    for p in 0..k {
        let mode = p as i64 - half;
        for q in 0..k {
            let j = q as i64 - half + 1;
            let phase = -2.0 * PI * ((mode * j).rem_euclid(k as i64)) as f64 / k as f64;
            tw.push(C64::new(phase.cos(), phase.sin()));
        }
    }
    tw
}

/// `∫_0^c ρ J₀(aρ) J₀(bρ) dρ`.
fn lommel(a: f64, b: f64, c: f64) -> f64 {
    let (j0a, j1a) = (libm::j0(a * c), libm::j1(a * c));
    if (a - b).abs() <= 1e-12 * (a + b).max(1e-300) {
        return 0.5 * c * c * (j0a * j0a + j1a * j1a);
    }
    let (j0b, j1b) = (libm::j0(b * c), libm::j1(b * c));
    c * (a * j1a * j0b - b * j0a * j1b) / (a * a - b * b)
}

fn radial_quadrature(a: f64, b: f64, c: f64, radial: usize, angular: usize) -> f64 {
    let (nodes, weights) = gauss_legendre(radial, 0.0, c);
    let bessel0 = |x: f64| -> f64 {
        (0..angular)
            .map(|i| (x * (2.0 * PI * i as f64 / angular as f64).sin()).cos())
            .sum::<f64>()
            / angular as f64
    };
    nodes
        .iter()
        .zip(&weights)
        .map(|(&r, &w)| w * r * bessel0(a * r) * bessel0(b * r))
        .sum()
}
