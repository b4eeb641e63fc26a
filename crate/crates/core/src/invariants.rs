//! Mass, energy, momentum and centre of mass of discrete states, plus the
//! modified energy conserved by the projected-density scheme.
//!
//! All functionals are evaluated on the fine grid with the four-point Gauss
//! rule per cell, so a state in an LOD space and its fine expansion give the
//! same numbers.

use rayon::prelude::*;

use crate::galerkin::GalerkinSpace;
use crate::linalg::C64;
use crate::lod::{LodError, LodSpace};
use crate::mesh::{p1_eval, GridHierarchy, QUADRATURE};
use crate::potential::PotentialSplit;

/// Invariants of one state at time `t`. `energy_lod` is only defined for LOD
/// states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvariantRecord {
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
    pub energy_lod: Option<f64>,
    pub momentum: f64,
    pub center_of_mass: f64,
}

/// Gauss sum of `f(x, u, u')` over the fine cells for a fine nodal vector.
pub(crate) fn fine_integral<F>(grid: &GridHierarchy, fine: &[C64], f: F) -> f64
where
    F: Fn(f64, C64, C64) -> f64 + Sync,
{
    let h = grid.fine_h();
    cell_sum(grid, |e| {
        let x0 = grid.fine_x(e);
        QUADRATURE
            .iter()
            .map(|&(lambda, w)| {
                let (u, du) = p1_eval(fine, h, e, lambda);
                w * h * f(x0 + lambda * h, u, du)
            })
            .sum::<f64>()
    })
}

/// Gauss sum of `f(x)` over the fine cells.
pub fn integrate_function<F>(grid: &GridHierarchy, f: F) -> f64
where
    F: Fn(f64) -> f64 + Sync,
{
    let h = grid.fine_h();
    cell_sum(grid, |e| {
        let x0 = grid.fine_x(e);
        QUADRATURE
            .iter()
            .map(|&(lambda, w)| w * h * f(x0 + lambda * h))
            .sum::<f64>()
    })
}

/// `Σ_e cell(e)` over the fine cells, summed in fixed blocks so the result
/// does not depend on the thread count.
fn cell_sum<F>(grid: &GridHierarchy, cell: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    const BLOCK: usize = 4096;
    let n = grid.n_fine_elements();
    let partial: Vec<f64> = (0..n.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| (b * BLOCK..((b + 1) * BLOCK).min(n)).map(&cell).sum())
        .collect();
    partial.iter().sum()
}

/// `∫ |u|²`
pub fn mass<S: GalerkinSpace + ?Sized>(space: &S, coeffs: &[C64]) -> f64 {
    let fine = space.expand(coeffs);
    fine_integral(space.grid(), &fine, |_, u, _| u.norm_sqr())
}

/// `∫ |u'|² + V |u|² + β/2 |u|⁴` with `V = V₁ + V₂` and β of the split.
pub fn energy<S: GalerkinSpace + ?Sized>(space: &S, coeffs: &[C64]) -> f64 {
    let fine = space.expand(coeffs);
    fine_energy(space.grid(), space.split(), &fine)
}

fn fine_energy(grid: &GridHierarchy, split: &PotentialSplit, fine: &[C64]) -> f64 {
    let beta = split.beta;
    let with_v = split.has_potential();
    fine_integral(grid, fine, |x, u, du| {
        let rho = u.norm_sqr();
        let v = if with_v { split.total(grid, x) } else { 0.0 };
        du.norm_sqr() + v * rho + 0.5 * beta * rho * rho
    })
}

/// `∫ 2 Im(conj(u) u')`
pub fn momentum<S: GalerkinSpace + ?Sized>(space: &S, coeffs: &[C64]) -> f64 {
    let fine = space.expand(coeffs);
    fine_integral(space.grid(), &fine, |_, u, du| 2.0 * (u.conj() * du).im)
}

/// `∫ x |u|²`, not normalised by the mass.
pub fn center_of_mass<S: GalerkinSpace + ?Sized>(space: &S, coeffs: &[C64]) -> f64 {
    let fine = space.expand(coeffs);
    fine_integral(space.grid(), &fine, |x, u, _| x * u.norm_sqr())
}

/// `E_LOD[u] = ∫ |u'|² + V|u|² + β/2 |P_LOD(|u|²)|²`, computed in LOD
/// coordinates as `Uᴴ(A + M_V)U + β/2 ρᵀMρ`.
pub fn modified_energy(space: &LodSpace, coeffs: &[C64]) -> Result<f64, LodError> {
    let quad = space.stiffness().complex_quadratic_form(coeffs)
        + space.potential_mass().complex_quadratic_form(coeffs);
    let beta = space.split().beta;
    if beta == 0.0 {
        return Ok(quad);
    }
    let rho = space.density_projection(coeffs)?;
    Ok(quad + 0.5 * beta * space.mass().quadratic_form(&rho))
}

/// `‖|u|² − P_LOD(|u|²)‖²`, the gap between the two energies scaled by `-β/2`.
pub fn density_defect(space: &LodSpace, coeffs: &[C64]) -> Result<f64, LodError> {
    let rho = space.density_projection(coeffs)?;
    let fine = space.expand(coeffs);
    // ∫|u|⁴ - 2⟨|u|², Pρ⟩ + ‖Pρ‖², where ⟨|u|², Pρ⟩ = ‖Pρ‖².
    let quartic = fine_integral(space.grid(), &fine, |_, u, _| u.norm_sqr().powi(2));
    Ok(quartic - space.mass().quadratic_form(&rho))
}

/// All invariants of a state; `energy_lod` is filled in for LOD spaces only.
pub fn record<S: GalerkinSpace + ?Sized>(space: &S, coeffs: &[C64], t: f64) -> InvariantRecord {
    let fine = space.expand(coeffs);
    let grid = space.grid();
    InvariantRecord {
        t,
        mass: fine_integral(grid, &fine, |_, u, _| u.norm_sqr()),
        energy: fine_energy(grid, space.split(), &fine),
        energy_lod: None,
        momentum: fine_integral(grid, &fine, |_, u, du| 2.0 * (u.conj() * du).im),
        center_of_mass: fine_integral(grid, &fine, |x, u, _| x * u.norm_sqr()),
    }
}

/// [`record`] including the modified energy.
pub fn record_lod(space: &LodSpace, coeffs: &[C64], t: f64) -> Result<InvariantRecord, LodError> {
    let mut r = record(space, coeffs, t);
    r.energy_lod = Some(modified_energy(space, coeffs)?);
    Ok(r)
}

/// Invariants of a smooth function given with its derivative, integrated
/// by Gauss quadrature on the fine cells of `grid`.
pub fn function_invariants<U, D>(
    grid: &GridHierarchy,
    split: &PotentialSplit,
    u: U,
    du: D,
    t: f64,
) -> InvariantRecord
where
    U: Fn(f64) -> C64 + Sync,
    D: Fn(f64) -> C64 + Sync,
{
    let beta = split.beta;
    InvariantRecord {
        t,
        mass: integrate_function(grid, |x| u(x).norm_sqr()),
        energy: integrate_function(grid, |x| {
            let rho = u(x).norm_sqr();
            du(x).norm_sqr() + split.total(grid, x) * rho + 0.5 * beta * rho * rho
        }),
        energy_lod: None,
        momentum: integrate_function(grid, |x| 2.0 * (u(x).conj() * du(x)).im),
        center_of_mass: integrate_function(grid, |x| x * u(x).norm_sqr()),
    }
}
