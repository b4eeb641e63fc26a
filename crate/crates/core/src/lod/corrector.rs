use crate::linalg::{BandedLu, LinalgError};
use crate::mesh::{element_matrix, GridHierarchy, MatrixKind};
use crate::potential::Potential;

use super::patch::{build_patch, Patch};
use super::LodError;

/// Fine-grid values of `Q_{K,ℓ}(φ_p)` on the interior nodes of its patch.
#[derive(Debug, Clone, PartialEq)]
pub struct Corrector {
    /// Fine node carrying `values[0]`.
    pub first_node: usize,
    pub values: Vec<f64>,
}

/// Constrained local problem on one patch:
///
/// ```text
/// [ K_p  Cᵀ ] [q]   [f]
/// [ C    0  ] [μ] = [0]
/// ```
///
/// `K_p` is the energy form `∫ q'w' + V₁ q w` on the patch, and the rows of
/// `C` are `⟨·, φ_q⟩` against every coarse hat meeting the patch, so `C q = 0`
/// is `P_H q = 0`. The multipliers are eliminated through the Schur complement
/// `C K_p⁻¹ Cᵀ`.
pub(crate) struct PatchSystem<'a> {
    grid: &'a GridHierarchy,
    v1: &'a Potential,
    patch: Patch,
    stiffness: BandedLu<f64>,
    constraints: Vec<Vec<f64>>,
    k_inv_ct: Vec<Vec<f64>>,
    schur: BandedLu<f64>,
}

impl<'a> PatchSystem<'a> {
    pub(crate) fn new(
        grid: &'a GridHierarchy,
        v1: &'a Potential,
        element: usize,
        layers: usize,
    ) -> Result<Self, LodError> {
        let patch = build_patch(grid, element, layers);
        let np = patch.n_fine_interior();
        let first = *patch.fine_nodes.start();
        let last = *patch.fine_nodes.end();
        let h = grid.fine_h();

        let mut diag = vec![0.0; np];
        let mut off = vec![0.0; np.saturating_sub(1)];
        for f in first..last {
            let em = energy_element(grid, v1, f, h);
            let (ia, ib) = (f as isize - first as isize - 1, f as isize - first as isize);
            if ia >= 0 {
                diag[ia as usize] += em[0][0];
            }
            if (ib as usize) < np {
                diag[ib as usize] += em[1][1];
            }
            if ia >= 0 && (ib as usize) < np {
                off[ia as usize] += em[0][1];
            }
        }
        let stiffness =
            BandedLu::from_band_fn(
                np,
                1,
                1,
                |i, j| {
                    if i == j {
                        diag[i]
                    } else {
                        off[i.min(j)]
                    }
                },
            )?;

        let mass = [[h / 3.0, h / 6.0], [h / 6.0, h / 3.0]];
        let constraints: Vec<Vec<f64>> = patch
            .coarse_nodes
            .iter()
            .map(|&q| {
                (0..np)
                    .map(|m| {
                        let n = patch.fine_node(m);
                        let left = grid.coarse_hat_at_fine_node(q, n - 1);
                        let mid = grid.coarse_hat_at_fine_node(q, n);
                        let right = grid.coarse_hat_at_fine_node(q, n + 1);
                        mass[1][0] * left + (mass[1][1] + mass[0][0]) * mid + mass[0][1] * right
                    })
                    .collect()
            })
            .collect();

        let k_inv_ct: Vec<Vec<f64>> = constraints
            .iter()
            .map(|c| stiffness.solve(c))
            .collect::<Result<_, _>>()?;
        let m = constraints.len();
        let schur_rows: Vec<Vec<f64>> = (0..m)
            .map(|a| (0..m).map(|b| dot(&constraints[a], &k_inv_ct[b])).collect())
            .collect();
        let schur = BandedLu::from_dense(&schur_rows).map_err(|e| match e {
            LinalgError::Singular { .. } => LodError::SingularSaddlePoint { element },
            other => other.into(),
        })?;
        Ok(Self {
            grid,
            v1,
            patch,
            stiffness,
            constraints,
            k_inv_ct,
            schur,
        })
    }

    /// Solves for the corrector of coarse hat `node`, which must be one of
    /// the two end nodes of the patch centre cell.
    pub(crate) fn corrector(&self, node: usize) -> Result<Corrector, LodError> {
        let element = self.patch.element;
        if node != element && node != element + 1 {
            return Err(LodError::HatOutsideElement { node, element });
        }
        let grid = self.grid;
        let np = self.patch.n_fine_interior();
        let first = *self.patch.fine_nodes.start();
        let h = grid.fine_h();
        let s = grid.ratio();

        // f = -a_K(φ_p, ·) restricted to the fine cells inside K.
        let mut rhs = vec![0.0; np];
        for f in element * s..(element + 1) * s {
            let em = energy_element(grid, self.v1, f, h);
            let hat = [
                grid.coarse_hat_at_fine_node(node, f),
                grid.coarse_hat_at_fine_node(node, f + 1),
            ];
            for (a, n) in [f, f + 1].into_iter().enumerate() {
                if n <= first || n > first + np {
                    continue;
                }
                rhs[n - first - 1] -= em[a][0] * hat[0] + em[a][1] * hat[1];
            }
        }

        let z = self.stiffness.solve(&rhs)?;
        let g: Vec<f64> = self.constraints.iter().map(|c| dot(c, &z)).collect();
        let mu = self.schur.solve(&g)?;
        let mut values = z;
        for (y, &m) in self.k_inv_ct.iter().zip(&mu) {
            for (v, yi) in values.iter_mut().zip(y) {
                *v -= m * yi;
            }
        }
        Ok(Corrector {
            first_node: first + 1,
            values,
        })
    }
}

fn energy_element(grid: &GridHierarchy, v1: &Potential, f: usize, h: f64) -> [[f64; 2]; 2] {
    let x0 = grid.fine_x(f);
    let mut em = element_matrix(grid, x0, h, MatrixKind::Stiffness);
    if !v1.is_zero() {
        let vm = element_matrix(grid, x0, h, MatrixKind::WeightedMass(v1));
        for a in 0..2 {
            for b in 0..2 {
                em[a][b] += vm[a][b];
            }
        }
    }
    em
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Corrector `Q_{K,ℓ}(φ_p)` of the coarse hat at coarse node `node` on the
/// cell `element`.
///
/// Without refinement the local detail space is trivial and the corrector
/// vanishes.
pub fn solve_corrector(
    grid: &GridHierarchy,
    v1: &Potential,
    node: usize,
    element: usize,
    layers: usize,
) -> Result<Corrector, LodError> {
    if element >= grid.n_coarse() {
        return Err(LodError::InvalidParameter(format!(
            "coarse element {element} out of range"
        )));
    }
    if node != element && node != element + 1 {
        return Err(LodError::HatOutsideElement { node, element });
    }
    if node == 0 || node >= grid.n_coarse() {
        return Err(LodError::InvalidParameter(format!(
            "coarse node {node} is a boundary node"
        )));
    }
    if grid.refinement() == 0 {
        let patch = build_patch(grid, element, layers);
        return Ok(Corrector {
            first_node: patch.fine_nodes.start() + 1,
            values: vec![0.0; patch.n_fine_interior()],
        });
    }
    PatchSystem::new(grid, v1, element, layers)?.corrector(node)
}
