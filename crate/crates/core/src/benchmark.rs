//! Two-soliton test problem for `i u_t = -u_xx - 2|u|²u` on `[-20, 20]`.
//!
//! The exact solution is a bound state of solitons with masses 4 and 8 at
//! rest. It is periodic in time with period π/2, and its density has period
//! π/6. Discretisations that carry a slightly wrong energy split it into two
//! solitons drifting apart; [`drift_velocities`] predicts their speeds.

use thiserror::Error;

use crate::galerkin::GalerkinSpace;
use crate::invariants::fine_integral;
use crate::linalg::C64;
use crate::mesh::{FeFunction, GridHierarchy, Level, MeshError};
use crate::potential::PotentialSplit;

pub const DOMAIN: (f64, f64) = (-20.0, 20.0);
/// Cubic coefficient of the benchmark, `β|u|²u` with `β = -2`.
pub const BETA: f64 = -2.0;
pub const REFERENCE_MASS: f64 = 12.0;
pub const REFERENCE_ENERGY: f64 = -48.0;
pub const REFERENCE_MOMENTUM: f64 = 0.0;

/// `∫ x |u|²` of the exact solution, `-ln 4`.
pub fn reference_center_of_mass() -> f64 {
    -(4.0f64).ln()
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BenchmarkError {
    #[error("energy offset must be nonnegative, got {0}")]
    NegativeEnergyOffset(f64),
    #[error("soliton shape parameter must be positive, got {0}")]
    NonPositiveShape(f64),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

pub fn split() -> PotentialSplit {
    PotentialSplit::free(BETA)
}

/// Grid with `2^coarse_exp` coarse and `2^fine_exp` fine cells on the domain.
pub fn grid(coarse_exp: u32, fine_exp: u32) -> Result<GridHierarchy, MeshError> {
    GridHierarchy::dyadic(DOMAIN.0, DOMAIN.1, coarse_exp, fine_exp)
}

/// Scaled numerator and denominator `(N, D, N', D')`. Both carry the factor
/// `e^{-6|x|}` so that no exponential is positive.
fn scaled_parts(x: f64, t: f64) -> (C64, f64, C64, f64) {
    let sign = if x >= 0.0 { 1.0 } else { -1.0 };
    let ax = x.abs();
    // e^{kx - 6|x|} and its x-derivative.
    let ex = |k: f64| (k * x - 6.0 * ax).exp();
    let dk = |k: f64| k - 6.0 * sign;

    let p4 = C64::from_polar(8.0, 4.0 * t);
    let p16 = C64::from_polar(32.0, 16.0 * t);
    let (em4, ep4, em2, ep2) = (ex(-4.0), ex(4.0), ex(-2.0), ex(2.0));
    let (em6, ep6, e0) = (ex(-6.0), ex(6.0), ex(0.0));

    let num = p4 * (9.0 * em4 + 16.0 * ep4) - p16 * (4.0 * em2 + 9.0 * ep2);
    let dnum = p4 * (9.0 * dk(-4.0) * em4 + 16.0 * dk(4.0) * ep4)
        - p16 * (4.0 * dk(-2.0) * em2 + 9.0 * dk(2.0) * ep2);
    let c = -128.0 * (12.0 * t).cos();
    let den = c * e0 + 4.0 * em6 + 16.0 * ep6 + 81.0 * em2 + 64.0 * ep2;
    let dden = c * dk(0.0) * e0
        + 4.0 * dk(-6.0) * em6
        + 16.0 * dk(6.0) * ep6
        + 81.0 * dk(-2.0) * em2
        + 64.0 * dk(2.0) * ep2;
    (num, den, dnum, dden)
}

/// Exact two-soliton solution `u(x, t)`.
pub fn exact_solution(x: f64, t: f64) -> C64 {
    let (n, d, _, _) = scaled_parts(x, t);
    n / d
}

/// `∂u/∂x` of the exact solution.
pub fn exact_derivative(x: f64, t: f64) -> C64 {
    let (n, d, dn, dd) = scaled_parts(x, t);
    (dn * d - n * dd) / (d * d)
}

/// Fine nodal interpolant of `u(·, 0)`.
pub fn initial_value(grid: &GridHierarchy) -> FeFunction {
    FeFunction::interpolate(grid, Level::Fine, |x| exact_solution(x, 0.0))
}

/// `ψ(x, t) = √α e^{i(cx/2 − (c²/4 − α)t)} sech(√α (x − ct))`, a soliton of
/// mass `2√α` moving with velocity `c`.
pub fn single_soliton(x: f64, t: f64, alpha: f64, c: f64) -> Result<C64, BenchmarkError> {
    if !(alpha > 0.0) {
        return Err(BenchmarkError::NonPositiveShape(alpha));
    }
    let s = alpha.sqrt();
    let phase = 0.5 * c * x - (0.25 * c * c - alpha) * t;
    Ok(C64::from_polar(s / (s * (x - c * t)).cosh(), phase))
}

/// Speeds `(|c1|, |c2|)` of the mass-4 and mass-8 solitons when the discrete
/// energy exceeds the exact one by `eps`: `|c2| = √(ε/6)`, `|c1| = 2|c2|`.
pub fn drift_velocities(eps: f64) -> Result<(f64, f64), BenchmarkError> {
    if !(eps >= 0.0) {
        return Err(BenchmarkError::NegativeEnergyOffset(eps));
    }
    let c2 = (eps / 6.0).sqrt();
    Ok((2.0 * c2, c2))
}

/// Relative L² and H¹-seminorm errors of a state against the fine nodal
/// interpolant of the exact solution at time `t`.
pub fn error_norms<S: GalerkinSpace + ?Sized>(space: &S, coeffs: &[C64], t: f64) -> (f64, f64) {
    let grid = space.grid();
    let reference =
        FeFunction::interpolate(grid, Level::Fine, |x| exact_solution(x, t)).into_coeffs();
    relative_errors(grid, &reference, &space.expand(coeffs))
}

/// Relative L² and H¹-seminorm distances of two fine nodal vectors.
pub fn relative_errors(grid: &GridHierarchy, reference: &[C64], fine: &[C64]) -> (f64, f64) {
    let diff: Vec<C64> = reference.iter().zip(fine).map(|(a, b)| a - b).collect();
    let l2 = |v: &[C64]| fine_integral(grid, v, |_, u, _| u.norm_sqr()).sqrt();
    let h1 = |v: &[C64]| fine_integral(grid, v, |_, _, du| du.norm_sqr()).sqrt();
    (l2(&diff) / l2(reference), h1(&diff) / h1(reference))
}
