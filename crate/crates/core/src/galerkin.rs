//! Common view of the discrete spaces the steppers run in.

use crate::linalg::{CsrMatrix, C64};
use crate::lod::LodSpace;
use crate::mesh::{assemble_p1, GridHierarchy, Level, MatrixKind, MeshError};
use crate::potential::PotentialSplit;

/// A finite-dimensional subspace of the fine P1 space with a real basis.
pub trait GalerkinSpace: Sync {
    fn grid(&self) -> &GridHierarchy;
    fn split(&self) -> &PotentialSplit;
    fn dim(&self) -> usize;
    fn mass(&self) -> &CsrMatrix<f64>;
    fn stiffness(&self) -> &CsrMatrix<f64>;
    /// Mass matrix weighted with the full potential `V₁ + V₂`.
    fn potential_mass(&self) -> &CsrMatrix<f64>;
    /// Fine nodal values of the function with coefficients `coeffs`.
    fn expand(&self, coeffs: &[C64]) -> Vec<C64>;
    /// Transpose of [`GalerkinSpace::expand`].
    fn restrict(&self, fine: &[C64]) -> Vec<C64>;
    /// True when the basis is the fine hat basis itself.
    fn is_fine_fe(&self) -> bool;
}

/// The fine P1 space.
#[derive(Debug, Clone)]
pub struct FeSpace {
    grid: GridHierarchy,
    split: PotentialSplit,
    mass: CsrMatrix<f64>,
    stiffness: CsrMatrix<f64>,
    potential_mass: CsrMatrix<f64>,
}

impl FeSpace {
    pub fn new(grid: &GridHierarchy, split: &PotentialSplit) -> Result<Self, MeshError> {
        split.validate(grid)?;
        let mass = assemble_p1(grid, Level::Fine, MatrixKind::Mass);
        let stiffness = assemble_p1(grid, Level::Fine, MatrixKind::Stiffness);
        let v1 = assemble_p1(grid, Level::Fine, MatrixKind::WeightedMass(&split.v1));
        let v2 = assemble_p1(grid, Level::Fine, MatrixKind::WeightedMass(&split.v2));
        let potential_mass =
            CsrMatrix::linear_combination(&[(1.0, &v1), (1.0, &v2)]).expect("same fine shape");
        Ok(Self {
            grid: grid.clone(),
            split: split.clone(),
            mass,
            stiffness,
            potential_mass,
        })
    }
}

impl GalerkinSpace for FeSpace {
    fn grid(&self) -> &GridHierarchy {
        &self.grid
    }
    fn split(&self) -> &PotentialSplit {
        &self.split
    }
    fn dim(&self) -> usize {
        self.grid.fine_dofs()
    }
    fn mass(&self) -> &CsrMatrix<f64> {
        &self.mass
    }
    fn stiffness(&self) -> &CsrMatrix<f64> {
        &self.stiffness
    }
    fn potential_mass(&self) -> &CsrMatrix<f64> {
        &self.potential_mass
    }
    fn expand(&self, coeffs: &[C64]) -> Vec<C64> {
        assert_eq!(coeffs.len(), self.dim(), "fine coefficient length");
        coeffs.to_vec()
    }
    fn restrict(&self, fine: &[C64]) -> Vec<C64> {
        assert_eq!(fine.len(), self.dim(), "fine vector length");
        fine.to_vec()
    }
    fn is_fine_fe(&self) -> bool {
        true
    }
}

impl GalerkinSpace for LodSpace {
    fn grid(&self) -> &GridHierarchy {
        LodSpace::grid(self)
    }
    fn split(&self) -> &PotentialSplit {
        LodSpace::split(self)
    }
    fn dim(&self) -> usize {
        LodSpace::dim(self)
    }
    fn mass(&self) -> &CsrMatrix<f64> {
        LodSpace::mass(self)
    }
    fn stiffness(&self) -> &CsrMatrix<f64> {
        LodSpace::stiffness(self)
    }
    fn potential_mass(&self) -> &CsrMatrix<f64> {
        LodSpace::potential_mass(self)
    }
    fn expand(&self, coeffs: &[C64]) -> Vec<C64> {
        LodSpace::expand(self, coeffs)
    }
    fn restrict(&self, fine: &[C64]) -> Vec<C64> {
        LodSpace::restrict(self, fine)
    }
    fn is_fine_fe(&self) -> bool {
        false
    }
}
