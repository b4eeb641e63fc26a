use std::collections::HashMap;
use std::ops::RangeInclusive;
use std::time::Instant;

use rayon::prelude::*;

use crate::linalg::{BandedLu, CsrMatrix, SparseTensor3, C64};
use crate::mesh::{
    assemble_p1, FeFunction, GridHierarchy, Level, MatrixKind, MeshError, QUADRATURE,
};
use crate::potential::PotentialSplit;

use super::corrector::{Corrector, PatchSystem};
use super::LodError;

/// Corrected hat `R_ℓ(φ_p) = φ_p + Σ_K Q_{K,ℓ}(φ_p)` as fine nodal values.
#[derive(Debug, Clone, PartialEq)]
pub struct LodBasisFunction {
    /// Interior coarse degree of freedom (coarse node `coarse_dof + 1`).
    pub coarse_dof: usize,
    /// Fine node carrying `values[0]`; the function vanishes outside
    /// `first_node ..= last_node`.
    pub first_node: usize,
    pub values: Vec<f64>,
}

impl LodBasisFunction {
    pub fn last_node(&self) -> usize {
        self.first_node + self.values.len() - 1
    }

    pub fn nodes(&self) -> RangeInclusive<usize> {
        self.first_node..=self.last_node()
    }

    #[inline]
    pub fn at_node(&self, n: usize) -> f64 {
        if n < self.first_node {
            return 0.0;
        }
        self.values.get(n - self.first_node).copied().unwrap_or(0.0)
    }
}

/// `ceil(2 |log₂ H|)`, at least one layer.
pub fn default_layers(coarse_h: f64) -> usize {
    (2.0 * coarse_h.log2().abs()).ceil().max(1.0) as usize
}

/// Localized LOD space with its Galerkin matrices and cubic-term tensor.
#[derive(Debug, Clone)]
pub struct LodSpace {
    grid: GridHierarchy,
    split: PotentialSplit,
    layers: usize,
    omega_tolerance: f64,
    translation_reuse: bool,
    basis: Vec<LodBasisFunction>,
    mass: CsrMatrix<f64>,
    stiffness: CsrMatrix<f64>,
    potential_mass: CsrMatrix<f64>,
    energy_gram: CsrMatrix<f64>,
    omega: SparseTensor3,
    mass_lu: BandedLu<f64>,
    gram_lu: BandedLu<f64>,
    fine_energy: CsrMatrix<f64>,
    timings: Option<BuildTimings>,
}

/// Builds `V_{ℓ,LOD}` on `grid`. Correctors use `a(·,·)` with `V₁` only, the
/// potential matrix uses `V₁ + V₂`.
pub fn build_lod_space(
    grid: &GridHierarchy,
    split: &PotentialSplit,
    layers: usize,
    omega_tolerance: f64,
) -> Result<LodSpace, LodError> {
    if layers == 0 {
        return Err(LodError::InvalidParameter("need at least one layer".into()));
    }
    if grid.refinement() == 0 {
        return Err(LodError::InvalidParameter(
            "fine grid must refine the coarse grid (r >= 1)".into(),
        ));
    }
    if !(omega_tolerance >= 0.0) {
        return Err(LodError::InvalidParameter(format!(
            "omega tolerance {omega_tolerance}"
        )));
    }
    split.validate(grid)?;
    let reuse = split.v1.is_coarse_translation_invariant(grid.coarse_h());
    let clock = Instant::now();
    let correctors = element_correctors(grid, split, layers, reuse)?;
    let basis = assemble_basis(grid, layers, &correctors);
    let basis_ms = ms(clock);
    let clock = Instant::now();
    let omega = assemble_omega(grid, &basis, layers, omega_tolerance)?;
    let omega_ms = ms(clock);
    let clock = Instant::now();
    let mut space = LodSpace::from_parts(
        grid.clone(),
        split.clone(),
        layers,
        omega_tolerance,
        reuse,
        basis,
        omega,
    )?;
    space.timings = Some(BuildTimings {
        basis_ms,
        omega_ms,
        matrices_ms: ms(clock),
    });
    Ok(space)
}

fn ms(clock: Instant) -> f64 {
    clock.elapsed().as_secs_f64() * 1e3
}

/// Wall-clock milliseconds spent in the phases of [`build_lod_space`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildTimings {
    /// Corrector solves and basis assembly.
    pub basis_ms: f64,
    pub omega_ms: f64,
    /// Galerkin matrices and their factorizations.
    pub matrices_ms: f64,
}

type ElementCorrectors = (Option<Corrector>, Option<Corrector>);

/// Correctors of the left and right hat of every coarse cell.
fn element_correctors(
    grid: &GridHierarchy,
    split: &PotentialSplit,
    layers: usize,
    reuse: bool,
) -> Result<Vec<ElementCorrectors>, LodError> {
    let n = grid.n_coarse();
    let solve = |e: usize| -> Result<ElementCorrectors, LodError> {
        let sys = PatchSystem::new(grid, &split.v1, e, layers)?;
        let left = if e >= 1 {
            Some(sys.corrector(e)?)
        } else {
            None
        };
        let right = if e + 1 < n {
            Some(sys.corrector(e + 1)?)
        } else {
            None
        };
        Ok((left, right))
    };

    if !reuse {
        return (0..n).into_par_iter().map(solve).collect();
    }

    // Patches with the same clipping are translates of each other. A patch
    // edge on the domain boundary has no coarse hat there, so touching the
    // boundary is part of the key.
    let extents = |e: usize| {
        let lo = e.saturating_sub(layers);
        let hi = (e + layers).min(n - 1);
        (e - lo, hi - e, lo == 0, hi == n - 1)
    };
    let mut representative: HashMap<(usize, usize, bool, bool), usize> = HashMap::new();
    for e in 0..n {
        representative.entry(extents(e)).or_insert(e);
    }
    let mut reps: Vec<usize> = representative.values().copied().collect();
    reps.sort_unstable();
    let solved: HashMap<usize, ElementCorrectors> = reps
        .par_iter()
        .map(|&e| solve(e).map(|c| (e, c)))
        .collect::<Result<_, _>>()?;

    let s = grid.ratio();
    let shift = |c: &Option<Corrector>, by: usize| {
        c.as_ref().map(|c| Corrector {
            first_node: c.first_node + by,
            values: c.values.clone(),
        })
    };
    Ok((0..n)
        .map(|e| {
            let rep = representative[&extents(e)];
            let (l, r) = &solved[&rep];
            (shift(l, (e - rep) * s), shift(r, (e - rep) * s))
        })
        .collect())
}

fn assemble_basis(
    grid: &GridHierarchy,
    layers: usize,
    correctors: &[ElementCorrectors],
) -> Vec<LodBasisFunction> {
    let n = grid.n_coarse();
    let s = grid.ratio();
    (1..n)
        .map(|p| {
            let start = p.saturating_sub(1 + layers) * s;
            let end = (p + 1 + layers).min(n) * s;
            let first_node = start + 1;
            let mut values: Vec<f64> = (first_node..end)
                .map(|m| grid.coarse_hat_at_fine_node(p, m))
                .collect();
            let parts = [correctors[p - 1].1.as_ref(), correctors[p].0.as_ref()];
            for q in parts.into_iter().flatten() {
                for (m, v) in q.values.iter().enumerate() {
                    values[q.first_node + m - first_node] += v;
                }
            }
            LodBasisFunction {
                coarse_dof: p - 1,
                first_node,
                values,
            }
        })
        .collect()
}

/// `G_ij = φ_iᵀ F φ_j` for a fine matrix `F`.
fn galerkin_matrix(
    grid: &GridHierarchy,
    basis: &[LodBasisFunction],
    fine: &CsrMatrix<f64>,
) -> CsrMatrix<f64> {
    let last_interior = grid.n_fine_elements() - 1;
    let products: Vec<(usize, Vec<f64>)> = basis
        .par_iter()
        .map(|phi| {
            let lo = phi.first_node.saturating_sub(1).max(1);
            let hi = (phi.last_node() + 1).min(last_interior);
            let y = (lo..=hi)
                .map(|n| {
                    let (cols, vals) = fine.row(n - 1);
                    cols.iter()
                        .zip(vals)
                        .map(|(&c, &v)| v * phi.at_node(c + 1))
                        .sum()
                })
                .collect();
            (lo, y)
        })
        .collect();

    let entries: Vec<(usize, usize, f64)> = (0..basis.len())
        .into_par_iter()
        .flat_map_iter(|j| {
            let (lo, y) = &products[j];
            let hi = lo + y.len() - 1;
            let mut out = Vec::new();
            for (i, phi) in basis.iter().enumerate().take(j + 1).rev() {
                if phi.last_node() < *lo {
                    break;
                }
                let a = phi.first_node.max(*lo);
                let b = phi.last_node().min(hi);
                if a > b {
                    continue;
                }
                let g: f64 = (a..=b).map(|n| phi.at_node(n) * y[n - lo]).sum();
                out.push((i, j, g));
                if i != j {
                    out.push((j, i, g));
                }
            }
            out
        })
        .collect();
    CsrMatrix::from_triplets(basis.len(), basis.len(), entries).expect("LOD indices are in range")
}

/// `ω_{kji} = ∫ φ_k φ_j φ_i`, accumulated cell by cell over the coarse mesh.
fn assemble_omega(
    grid: &GridHierarchy,
    basis: &[LodBasisFunction],
    layers: usize,
    tolerance: f64,
) -> Result<SparseTensor3, LodError> {
    let n_basis = basis.len();
    let n = grid.n_coarse();
    // Overlapping hats differ by at most 2ℓ+1 coarse nodes.
    let reach = 2 * layers + 1;
    let width = 2 * reach + 1;
    let band_len = n_basis * width * width;
    let slot =
        |k: usize, j: usize, i: usize| ((i * width) + (k + reach - i)) * width + (j + reach - i);

    // Fixed batches keep the summation order independent of the thread count.
    const BATCH: usize = 32;
    let mut band = vec![0.0f64; band_len];
    let elements: Vec<usize> = (0..n).collect();
    for batch in elements.chunks(BATCH) {
        let blocks: Vec<(Vec<usize>, Vec<f64>)> = batch
            .par_iter()
            .map(|&e| element_triple_products(grid, basis, layers, e))
            .collect();
        for (active, block) in blocks {
            let m = active.len();
            for a in 0..m {
                for b in a..m {
                    for c in 0..m {
                        band[slot(active[a], active[b], active[c])] += block[(a * m + b) * m + c];
                    }
                }
            }
        }
    }

    let mut entries = Vec::new();
    for i in 0..n_basis {
        let lo = i.saturating_sub(reach);
        let hi = (i + reach).min(n_basis - 1);
        for k in lo..=hi {
            for j in k..=hi {
                let v = band[slot(k, j, i)];
                if v != 0.0 {
                    entries.push((k, j, i, v));
                }
            }
        }
    }
    Ok(SparseTensor3::from_entries(n_basis, entries, tolerance)?)
}

/// Basis functions active on coarse cell `e` and the Gauss sums
/// `∫_e φ_a φ_b φ_c` for `a <= b`, stored at `(a·m + b)·m + c`.
fn element_triple_products(
    grid: &GridHierarchy,
    basis: &[LodBasisFunction],
    layers: usize,
    e: usize,
) -> (Vec<usize>, Vec<f64>) {
    let n = grid.n_coarse();
    let s = grid.ratio();
    let h = grid.fine_h();
    let lo_node = e * s;
    let hi_node = (e + 1) * s;
    let active: Vec<usize> = (e.saturating_sub(layers).max(1)..=(e + 1 + layers).min(n - 1))
        .map(|p| p - 1)
        .filter(|&b| {
            let phi = &basis[b];
            phi.first_node < hi_node && phi.last_node() > lo_node
        })
        .collect();
    let npts = s * QUADRATURE.len();
    let m = active.len();
    let mut vals = vec![vec![0.0; npts]; m];
    let mut weights = vec![0.0; npts];
    for f in 0..s {
        let node = lo_node + f;
        for (g, &(lambda, w)) in QUADRATURE.iter().enumerate() {
            let idx = f * QUADRATURE.len() + g;
            weights[idx] = w * h;
            for (a, &b) in active.iter().enumerate() {
                let phi = &basis[b];
                vals[a][idx] = (1.0 - lambda) * phi.at_node(node) + lambda * phi.at_node(node + 1);
            }
        }
    }
    let mut block = vec![0.0; m * m * m];
    let mut prod = vec![0.0; npts];
    for a in 0..m {
        for b in a..m {
            for ((p, w), (va, vb)) in prod
                .iter_mut()
                .zip(&weights)
                .zip(vals[a].iter().zip(&vals[b]))
            {
                *p = w * va * vb;
            }
            for (c, vc) in vals.iter().enumerate() {
                block[(a * m + b) * m + c] = prod.iter().zip(vc).map(|(p, q)| p * q).sum();
            }
        }
    }
    (active, block)
}

impl LodSpace {
    /// Assembles the Galerkin matrices for a given basis and tensor.
    pub fn from_parts(
        grid: GridHierarchy,
        split: PotentialSplit,
        layers: usize,
        omega_tolerance: f64,
        translation_reuse: bool,
        basis: Vec<LodBasisFunction>,
        omega: SparseTensor3,
    ) -> Result<Self, LodError> {
        if basis.len() != grid.coarse_dofs() || omega.dim() != basis.len() {
            return Err(LodError::InvalidParameter(format!(
                "{} basis functions and tensor of dimension {} for {} coarse dofs",
                basis.len(),
                omega.dim(),
                grid.coarse_dofs()
            )));
        }
        let fine_mass = assemble_p1(&grid, Level::Fine, MatrixKind::Mass);
        let fine_stiff = assemble_p1(&grid, Level::Fine, MatrixKind::Stiffness);
        let mass = galerkin_matrix(&grid, &basis, &fine_mass);
        let stiffness = galerkin_matrix(&grid, &basis, &fine_stiff);

        let dim = basis.len();
        let potential_mass = if split.has_potential() {
            let fv = fine_weighted(&grid, &split);
            galerkin_matrix(&grid, &basis, &fv)
        } else {
            CsrMatrix::zeros(dim, dim)
        };
        let fine_energy = if split.v1.is_zero() {
            fine_stiff
        } else {
            let fv1 = assemble_p1(&grid, Level::Fine, MatrixKind::WeightedMass(&split.v1));
            CsrMatrix::linear_combination(&[(1.0, &fine_stiff), (1.0, &fv1)])?
        };
        let energy_gram = if split.v1.is_zero() {
            stiffness.clone()
        } else {
            galerkin_matrix(&grid, &basis, &fine_energy)
        };
        let mass_lu = BandedLu::factor(&mass).map_err(LodError::SingularGram)?;
        let gram_lu = BandedLu::factor(&energy_gram).map_err(LodError::SingularGram)?;
        Ok(Self {
            grid,
            split,
            layers,
            omega_tolerance,
            translation_reuse,
            basis,
            mass,
            stiffness,
            potential_mass,
            energy_gram,
            omega,
            mass_lu,
            gram_lu,
            fine_energy,
            timings: None,
        })
    }

    pub fn grid(&self) -> &GridHierarchy {
        &self.grid
    }

    pub fn split(&self) -> &PotentialSplit {
        &self.split
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn omega_tolerance(&self) -> f64 {
        self.omega_tolerance
    }

    /// Whether correctors were produced by translating a few solved ones.
    pub fn translation_reuse(&self) -> bool {
        self.translation_reuse
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Phase timings when the space was built rather than loaded.
    pub fn build_timings(&self) -> Option<BuildTimings> {
        self.timings
    }

    pub fn basis(&self) -> &[LodBasisFunction] {
        &self.basis
    }

    /// `M_ij = ⟨φ_j, φ_i⟩`
    pub fn mass(&self) -> &CsrMatrix<f64> {
        &self.mass
    }

    /// `A_ij = ⟨φ_j', φ_i'⟩`
    pub fn stiffness(&self) -> &CsrMatrix<f64> {
        &self.stiffness
    }

    /// `(M_V)_ij = ⟨V φ_j, φ_i⟩` with the full potential.
    pub fn potential_mass(&self) -> &CsrMatrix<f64> {
        &self.potential_mass
    }

    /// Gram matrix of the energy inner product `a(φ_j, φ_i)`.
    pub fn energy_gram(&self) -> &CsrMatrix<f64> {
        &self.energy_gram
    }

    pub fn omega(&self) -> &SparseTensor3 {
        &self.omega
    }

    pub fn mass_lu(&self) -> &BandedLu<f64> {
        &self.mass_lu
    }

    /// Fine-grid vector `Σ_i U_i φ_i` on interior fine nodes.
    pub fn expand(&self, coeffs: &[C64]) -> Vec<C64> {
        assert_eq!(coeffs.len(), self.dim(), "LOD coefficient length");
        let mut out = vec![C64::new(0.0, 0.0); self.grid.fine_dofs()];
        for (phi, &c) in self.basis.iter().zip(coeffs) {
            if c == C64::new(0.0, 0.0) {
                continue;
            }
            for (m, &v) in phi.values.iter().enumerate() {
                out[phi.first_node + m - 1] += c * v;
            }
        }
        out
    }

    /// `(Φᵀ v)_i = Σ_n φ_i(x_n) v_n` for a fine nodal vector `v`.
    pub fn restrict(&self, fine: &[C64]) -> Vec<C64> {
        assert_eq!(fine.len(), self.grid.fine_dofs(), "fine vector length");
        self.basis
            .iter()
            .map(|phi| {
                phi.values
                    .iter()
                    .enumerate()
                    .map(|(m, &v)| fine[phi.first_node + m - 1] * v)
                    .sum()
            })
            .collect()
    }

    /// Ritz projection: `a(u₀_LOD, v) = a(u₀, v)` for all `v` in the space.
    pub fn ritz_project(&self, u0: &FeFunction) -> Result<Vec<C64>, LodError> {
        if u0.level() != Level::Fine {
            return Err(MeshError::WrongLevel {
                expected: Level::Fine,
            }
            .into());
        }
        if u0.coeffs().len() != self.grid.fine_dofs() {
            return Err(MeshError::LengthMismatch {
                expected: self.grid.fine_dofs(),
                found: u0.coeffs().len(),
            }
            .into());
        }
        let au = self.fine_energy.mul_complex(u0.coeffs())?;
        let rhs = self.restrict(&au);
        self.gram_lu
            .solve_complex(&rhs)
            .map_err(LodError::SingularGram)
    }

    /// Coefficients of `P_LOD(|u|²)`, the L²-projection of the density.
    pub fn density_projection(&self, coeffs: &[C64]) -> Result<Vec<f64>, LodError> {
        let load = self.omega.density_load(coeffs)?;
        Ok(self.mass_lu.solve(&load)?)
    }
}

fn fine_weighted(grid: &GridHierarchy, split: &PotentialSplit) -> CsrMatrix<f64> {
    let v1 = assemble_p1(grid, Level::Fine, MatrixKind::WeightedMass(&split.v1));
    let v2 = assemble_p1(grid, Level::Fine, MatrixKind::WeightedMass(&split.v2));
    CsrMatrix::linear_combination(&[(1.0, &v1), (1.0, &v2)]).expect("same fine shape")
}
