//! Nested interval meshes, P1 finite element assembly and Gauss quadrature.
//!
//! The coarse mesh has `n_coarse` cells of width `H`; the fine mesh refines
//! every coarse cell dyadically into `2^r` cells of width `h = H / 2^r`.
//! Homogeneous Dirichlet conditions are imposed by dropping the two boundary
//! nodes, so degree of freedom `d` sits on node `d + 1` at both levels.

use thiserror::Error;

use crate::linalg::{BandedLu, CsrMatrix, C64};
use crate::potential::Potential;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("function has {found} coefficients, level expects {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("nodal potential has {found} values, fine grid has {expected} nodes")]
    PotentialLength { expected: usize, found: usize },
    #[error("V1 must be nonnegative, found {value} at x = {x}")]
    NegativeV1 { x: f64, value: f64 },
    #[error("expected a function on the {expected:?} level")]
    WrongLevel { expected: Level },
}

/// Four-point Gauss–Legendre rule on `[0, 1]` as `(λ, weight)` pairs.
/// Exact for polynomials up to degree 7.
pub const QUADRATURE: [(f64, f64); 4] = [
    (0.069_431_844_202_973_71, 0.173_927_422_568_726_93),
    (0.330_009_478_207_571_87, 0.326_072_577_431_273_07),
    (0.669_990_521_792_428_1, 0.326_072_577_431_273_07),
    (0.930_568_155_797_026_3, 0.173_927_422_568_726_93),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Level {
    Coarse,
    Fine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridHierarchy {
    a: f64,
    b: f64,
    n_coarse: usize,
    refinement: u32,
}

impl GridHierarchy {
    pub fn new(a: f64, b: f64, n_coarse: usize, refinement: u32) -> Result<Self, MeshError> {
        if !(a.is_finite() && b.is_finite() && b > a) {
            return Err(MeshError::InvalidGrid(format!("interval [{a}, {b}]")));
        }
        if n_coarse < 2 {
            return Err(MeshError::InvalidGrid(format!(
                "need at least 2 coarse cells, got {n_coarse}"
            )));
        }
        if refinement > 26 || n_coarse.checked_shl(refinement).is_none_or(|n| n > 1 << 28) {
            return Err(MeshError::InvalidGrid(format!(
                "refinement 2^{refinement} of {n_coarse} cells is too large"
            )));
        }
        Ok(Self {
            a,
            b,
            n_coarse,
            refinement,
        })
    }

    /// Grid on `[a, b]` with `H = (b - a) / 2^coarse_exp` and
    /// `h = (b - a) / 2^fine_exp`.
    pub fn dyadic(a: f64, b: f64, coarse_exp: u32, fine_exp: u32) -> Result<Self, MeshError> {
        if fine_exp < coarse_exp || coarse_exp == 0 || coarse_exp > 26 {
            return Err(MeshError::InvalidGrid(format!(
                "coarse exponent {coarse_exp}, fine exponent {fine_exp}"
            )));
        }
        Self::new(a, b, 1 << coarse_exp, fine_exp - coarse_exp)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn length(&self) -> f64 {
        self.b - self.a
    }

    pub fn n_coarse(&self) -> usize {
        self.n_coarse
    }

    pub fn refinement(&self) -> u32 {
        self.refinement
    }

    /// Fine cells per coarse cell, `2^r`.
    pub fn ratio(&self) -> usize {
        1 << self.refinement
    }

    pub fn coarse_h(&self) -> f64 {
        self.length() / self.n_coarse as f64
    }

    pub fn fine_h(&self) -> f64 {
        self.coarse_h() / self.ratio() as f64
    }

    pub fn n_fine_elements(&self) -> usize {
        self.n_coarse * self.ratio()
    }

    pub fn n_elements(&self, level: Level) -> usize {
        match level {
            Level::Coarse => self.n_coarse,
            Level::Fine => self.n_fine_elements(),
        }
    }

    pub fn h(&self, level: Level) -> f64 {
        match level {
            Level::Coarse => self.coarse_h(),
            Level::Fine => self.fine_h(),
        }
    }

    pub fn fine_dofs(&self) -> usize {
        self.n_fine_elements() - 1
    }

    pub fn coarse_dofs(&self) -> usize {
        self.n_coarse - 1
    }

    pub fn dofs(&self, level: Level) -> usize {
        self.n_elements(level) - 1
    }

    /// Coordinate of fine node `n` (0 ..= n_fine_elements).
    pub fn fine_x(&self, n: usize) -> f64 {
        self.a + n as f64 * self.fine_h()
    }

    pub fn coarse_x(&self, p: usize) -> f64 {
        self.a + p as f64 * self.coarse_h()
    }

    pub fn x(&self, level: Level, n: usize) -> f64 {
        match level {
            Level::Coarse => self.coarse_x(n),
            Level::Fine => self.fine_x(n),
        }
    }

    /// Fine node that coincides with coarse node `p`.
    pub fn coarse_to_fine_node(&self, p: usize) -> usize {
        p * self.ratio()
    }

    /// Value of the coarse hat at coarse node `p` in fine node `n`.
    pub fn coarse_hat_at_fine_node(&self, p: usize, n: usize) -> f64 {
        let s = self.ratio() as f64;
        let d = (n as f64 - (p * self.ratio()) as f64).abs() / s;
        (1.0 - d).max(0.0)
    }
}

/// P1 function with implicit zero boundary values.
#[derive(Debug, Clone, PartialEq)]
pub struct FeFunction {
    level: Level,
    coeffs: Vec<C64>,
}

impl FeFunction {
    pub fn new(grid: &GridHierarchy, level: Level, coeffs: Vec<C64>) -> Result<Self, MeshError> {
        let expected = grid.dofs(level);
        if coeffs.len() != expected {
            return Err(MeshError::LengthMismatch {
                expected,
                found: coeffs.len(),
            });
        }
        Ok(Self { level, coeffs })
    }

    pub fn zeros(grid: &GridHierarchy, level: Level) -> Self {
        Self {
            level,
            coeffs: vec![C64::new(0.0, 0.0); grid.dofs(level)],
        }
    }

    /// Nodal interpolant of `f` at the interior nodes of `level`.
    pub fn interpolate<F>(grid: &GridHierarchy, level: Level, f: F) -> Self
    where
        F: Fn(f64) -> C64,
    {
        let coeffs = (1..=grid.dofs(level))
            .map(|n| f(grid.x(level, n)))
            .collect();
        Self { level, coeffs }
    }

    pub fn level(&self) -> Level {
        self.level
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<C64> {
        self.coeffs
    }
}

/// Which bilinear form to assemble.
#[derive(Debug, Clone, Copy)]
pub enum MatrixKind<'a> {
    /// `⟨u, v⟩`
    Mass,
    /// `⟨u', v'⟩`
    Stiffness,
    /// `⟨V u, v⟩`
    WeightedMass(&'a Potential),
}

/// Local 2×2 matrix of a form on the cell `[x0, x0 + h]`.
pub fn element_matrix(
    grid: &GridHierarchy,
    x0: f64,
    h: f64,
    kind: MatrixKind<'_>,
) -> [[f64; 2]; 2] {
    match kind {
        MatrixKind::Mass => [[h / 3.0, h / 6.0], [h / 6.0, h / 3.0]],
        MatrixKind::Stiffness => [[1.0 / h, -1.0 / h], [-1.0 / h, 1.0 / h]],
        MatrixKind::WeightedMass(v) => {
            let mut m = [[0.0; 2]; 2];
            if v.is_zero() {
                return m;
            }
            for &(lambda, w) in &QUADRATURE {
                let val = v.eval(grid, x0 + lambda * h) * w * h;
                let shape = [1.0 - lambda, lambda];
                for a in 0..2 {
                    for b in 0..2 {
                        m[a][b] += val * shape[a] * shape[b];
                    }
                }
            }
            m
        }
    }
}

/// Assembles a P1 matrix over the interior nodes of `level`.
pub fn assemble_p1(grid: &GridHierarchy, level: Level, kind: MatrixKind<'_>) -> CsrMatrix<f64> {
    let n_el = grid.n_elements(level);
    let h = grid.h(level);
    let ndof = grid.dofs(level);
    let mut trip = Vec::with_capacity(4 * n_el);
    for e in 0..n_el {
        let m = element_matrix(grid, grid.x(level, e), h, kind);
        let nodes = [e, e + 1];
        for a in 0..2 {
            for b in 0..2 {
                let (na, nb) = (nodes[a], nodes[b]);
                if na == 0 || nb == 0 || na == n_el || nb == n_el {
                    continue;
                }
                trip.push((na - 1, nb - 1, m[a][b]));
            }
        }
    }
    CsrMatrix::from_triplets(ndof, ndof, trip).expect("P1 assembly indices are in range")
}

/// Coarse-to-fine nodal embedding.
pub fn prolong(grid: &GridHierarchy, coarse: &FeFunction) -> Result<FeFunction, MeshError> {
    if coarse.level != Level::Coarse {
        return Err(MeshError::WrongLevel {
            expected: Level::Coarse,
        });
    }
    let s = grid.ratio();
    let mut full = vec![C64::new(0.0, 0.0); grid.n_coarse() + 1];
    full[1..grid.n_coarse()].copy_from_slice(&coarse.coeffs);
    let coeffs = (1..grid.n_fine_elements())
        .map(|n| {
            let p = n / s;
            let lambda = (n % s) as f64 / s as f64;
            if lambda == 0.0 {
                full[p]
            } else {
                full[p] * (1.0 - lambda) + full[p + 1] * lambda
            }
        })
        .collect();
    Ok(FeFunction {
        level: Level::Fine,
        coeffs,
    })
}

/// Loads `⟨f, φ_q⟩` of a fine function against every coarse hat.
pub fn coarse_load(grid: &GridHierarchy, fine: &FeFunction) -> Result<Vec<C64>, MeshError> {
    if fine.level != Level::Fine {
        return Err(MeshError::WrongLevel {
            expected: Level::Fine,
        });
    }
    let mass = assemble_p1(grid, Level::Fine, MatrixKind::Mass);
    let mf = mass.mul_complex(&fine.coeffs).expect("fine mass dimension");
    let s = grid.ratio();
    Ok((1..grid.n_coarse())
        .map(|p| {
            let centre = p * s;
            let lo = centre + 1 - s;
            let hi = centre + s - 1;
            (lo..=hi)
                .map(|n| mf[n - 1] * grid.coarse_hat_at_fine_node(p, n))
                .sum()
        })
        .collect())
}

/// Coarse L²-projection `P_H f`.
pub fn l2_project_coarse(grid: &GridHierarchy, fine: &FeFunction) -> Result<FeFunction, MeshError> {
    let load = coarse_load(grid, fine)?;
    let mass = assemble_p1(grid, Level::Coarse, MatrixKind::Mass);
    let lu = BandedLu::factor(&mass).expect("coarse mass matrix is SPD");
    let coeffs = lu.solve_complex(&load).expect("coarse dimension");
    Ok(FeFunction {
        level: Level::Coarse,
        coeffs,
    })
}

/// A Gauss point inside fine cell `element`.
#[derive(Debug, Clone, Copy)]
pub struct QuadPoint {
    pub element: usize,
    pub x: f64,
    pub lambda: f64,
    pub weight: f64,
}

/// Sums `f` over all fine-cell Gauss points (weights include `h`).
pub fn integrate<T, F>(grid: &GridHierarchy, f: F) -> T
where
    T: std::iter::Sum<T> + std::ops::Add<Output = T> + Default,
    F: Fn(QuadPoint) -> T,
{
    let h = grid.fine_h();
    (0..grid.n_fine_elements())
        .map(|e| {
            let x0 = grid.fine_x(e);
            QUADRATURE
                .iter()
                .map(|&(lambda, w)| {
                    f(QuadPoint {
                        element: e,
                        x: x0 + lambda * h,
                        lambda,
                        weight: w * h,
                    })
                })
                .fold(T::default(), |a, b| a + b)
        })
        .sum()
}

/// Evaluates a fine P1 function given by interior coefficients: value and
/// derivative at local coordinate `lambda` of fine cell `e`.
#[inline]
pub fn p1_eval(coeffs: &[C64], h: f64, e: usize, lambda: f64) -> (C64, C64) {
    let zero = C64::new(0.0, 0.0);
    let left = if e == 0 { zero } else { coeffs[e - 1] };
    let right = coeffs.get(e).copied().unwrap_or(zero);
    (left * (1.0 - lambda) + right * lambda, (right - left) / h)
}
