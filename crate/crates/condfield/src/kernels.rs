//! Stationary covariance kernels.
//!
//! Two families are provided:
//!
//! * scalar kernels ([`Kernel::squared_exponential`], [`Kernel::exponential`])
//!   for single-component fields;
//! * an isotropic, incompressible velocity kernel
//!   ([`TurbulenceKernel`]) for three-component fields, parameterized by the
//!   kinetic energy density `E` and a transverse length scale `lambda`.
//!
//! All kernels are evaluated entrywise through [`Kernel::entry`], which is
//! what covariance assembly and low-rank Gram computations consume.

use crate::error::{Error, Result};

/// A stationary covariance kernel, scalar or matrix-valued.
#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    /// `K(x, y) = variance * exp(-|x - y|^2 / (2 length^2))`.
    SquaredExponential {
        /// Marginal variance `K(x, x)`.
        variance: f64,
        /// Correlation length.
        length: f64,
    },
    /// `K(x, y) = variance * exp(-|x - y| / length)`.
    Exponential {
        /// Marginal variance `K(x, x)`.
        variance: f64,
        /// Correlation length.
        length: f64,
    },
    /// Incompressible isotropic velocity kernel; see [`TurbulenceKernel`].
    Turbulence(TurbulenceKernel),
}

impl Kernel {
    /// Squared-exponential kernel with validated parameters.
    pub fn squared_exponential(variance: f64, length: f64) -> Result<Self> {
        check_positive("variance", variance)?;
        check_positive("length", length)?;
        Ok(Self::SquaredExponential { variance, length })
    }

    /// Exponential kernel with validated parameters.
    pub fn exponential(variance: f64, length: f64) -> Result<Self> {
        check_positive("variance", variance)?;
        check_positive("length", length)?;
        Ok(Self::Exponential { variance, length })
    }

    /// Incompressible velocity kernel with validated parameters.
    pub fn turbulence(energy: f64, taylor_scale: f64) -> Result<Self> {
        Ok(Self::Turbulence(TurbulenceKernel::new(energy, taylor_scale)?))
    }

    /// Number of field components this kernel correlates (1 or 3).
    pub fn components(&self) -> usize {
        match self {
            Self::SquaredExponential { .. } | Self::Exponential { .. } => 1,
            Self::Turbulence(_) => 3,
        }
    }

    /// Covariance between component `ci` at `x` and component `cj` at `y`.
    ///
    /// Coordinates beyond the grid dimension must be zero (the arrays are
    /// always length 3, matching [`crate::grid::Grid::node_position`]).
    pub fn entry(&self, x: &[f64; 3], y: &[f64; 3], ci: usize, cj: usize) -> f64 {
        let r = [x[0] - y[0], x[1] - y[1], x[2] - y[2]];
        match self {
            Self::SquaredExponential { variance, length } => {
                debug_assert!(ci == 0 && cj == 0);
                let r2 = r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
                variance * (-r2 / (2.0 * length * length)).exp()
            }
            Self::Exponential { variance, length } => {
                debug_assert!(ci == 0 && cj == 0);
                let dist = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
                variance * (-dist / length).exp()
            }
            Self::Turbulence(t) => t.tensor_entry(&r, ci, cj),
        }
    }

    /// Full covariance block between points `x` and `y` as a
    /// `components x components` matrix (a 1x1 block for scalar kernels).
    pub fn block(&self, x: &[f64; 3], y: &[f64; 3]) -> Vec<f64> {
        let c = self.components();
        let mut out = vec![0.0; c * c];
        for ci in 0..c {
            for cj in 0..c {
                out[ci * c + cj] = self.entry(x, y, ci, cj);
            }
        }
        out
    }
}

fn check_positive(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::Kernel(format!("{name} must be positive and finite, got {value}")))
    }
}

/// Isotropic, mirror-symmetric, divergence-free velocity covariance.
///
/// The two-point function of a statistically isotropic incompressible
/// velocity field is determined by a single longitudinal shape function
/// `f(x)` (here Gaussian, `f(x) = exp(-x^2 / (2 lambda^2))`):
///
/// ```text
/// C_ij(r) = (2E/3) f(x) d_ij + (E/3) x f'(x) (d_ij - r_i r_j / x^2),
/// ```
///
/// with `x = |r|` and `d_ij` the identity. The normalization is
/// `trace C(0) = 2E`, so `E` is the mean kinetic energy density
/// `E = <|v|^2> / 2`, and `lambda` sets the curvature of `f` at the origin
/// (`f''(0) = -1/lambda^2`).
///
/// For the Gaussian shape `f'(x)/x = -f(x)/lambda^2` identically, so the
/// transverse term is evaluated in the division-free form
/// `(E/3) (f'(x)/x) (x^2 d_ij - r_i r_j)`, which is smooth through `r = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TurbulenceKernel {
    energy: f64,
    taylor_scale: f64,
}

impl TurbulenceKernel {
    /// Validates `energy > 0` and `taylor_scale > 0`.
    pub fn new(energy: f64, taylor_scale: f64) -> Result<Self> {
        check_positive("energy", energy)?;
        check_positive("taylor scale", taylor_scale)?;
        Ok(Self { energy, taylor_scale })
    }

    /// Mean kinetic energy density `E`.
    pub fn energy(&self) -> f64 {
        self.energy
    }

    /// Transverse curvature scale `lambda`.
    pub fn taylor_scale(&self) -> f64 {
        self.taylor_scale
    }

    /// Longitudinal shape function and its first three derivatives at
    /// separation `x`: `[f, f', f'', f''']`.
    ///
    /// For the Gaussian shape these are
    /// `f' = -(x/l^2) f`, `f'' = (x^2/l^4 - 1/l^2) f`,
    /// `f''' = (3x/l^4 - x^3/l^6) f`.
    pub fn longitudinal_moments(&self, x: f64) -> [f64; 4] {
        let l2 = self.taylor_scale * self.taylor_scale;
        let f = (-x * x / (2.0 * l2)).exp();
        let fp = -(x / l2) * f;
        let fpp = (x * x / (l2 * l2) - 1.0 / l2) * f;
        let fppp = (3.0 * x / (l2 * l2) - x * x * x / (l2 * l2 * l2)) * f;
        [f, fp, fpp, fppp]
    }

    /// `f'(x)/x`, which for the Gaussian shape equals `-f(x)/lambda^2`
    /// exactly (finite at `x = 0`).
    pub fn longitudinal_slope_over_x(&self, x: f64) -> f64 {
        let l2 = self.taylor_scale * self.taylor_scale;
        -(-x * x / (2.0 * l2)).exp() / l2
    }

    /// One entry of the covariance tensor at separation `r`.
    pub fn tensor_entry(&self, r: &[f64; 3], ci: usize, cj: usize) -> f64 {
        debug_assert!(ci < 3 && cj < 3);
        let x2 = r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
        let x = x2.sqrt();
        let f = self.longitudinal_moments(x)[0];
        let g = self.longitudinal_slope_over_x(x);
        let third = self.energy / 3.0;
        let delta = if ci == cj { 1.0 } else { 0.0 };
        2.0 * third * f * delta + third * g * (x2 * delta - r[ci] * r[cj])
    }

    /// Full 3x3 covariance tensor at separation `r`.
    pub fn tensor(&self, r: &[f64; 3]) -> [[f64; 3]; 3] {
        let mut out = [[0.0; 3]; 3];
        for (ci, row) in out.iter_mut().enumerate() {
            for (cj, entry) in row.iter_mut().enumerate() {
                *entry = self.tensor_entry(r, ci, cj);
            }
        }
        out
    }
}
