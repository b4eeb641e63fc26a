//! Sparse and banded linear algebra over real and complex scalars.
//!
//! Everything the discretization needs fits in three pieces: a compressed-row
//! matrix, a banded LU factorization with partial pivoting (which also serves
//! as the dense fallback when the bandwidth equals the dimension), and a sparse
//! rank-3 tensor for the cubic Galerkin term.

mod csr;
mod lu;
mod tensor;

use std::fmt::Debug;

use num_complex::Complex64;
use num_traits::NumAssign;
use thiserror::Error;

pub use csr::CsrMatrix;
pub use lu::{BandedLu, PIVOT_THRESHOLD};
pub use tensor::SparseTensor3;

pub type C64 = Complex64;
pub type ComplexSparseMatrix = CsrMatrix<C64>;
pub type RealSparseMatrix = CsrMatrix<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error(
        "matrix is singular: pivot {pivot:e} at column {column} below threshold {threshold:e}"
    )]
    Singular {
        column: usize,
        pivot: f64,
        threshold: f64,
    },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("index ({row}, {col}) out of bounds for {rows}x{cols} matrix")]
    OutOfBounds {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
}

/// Field of matrix entries. Implemented for `f64` and `Complex64`.
pub trait Scalar: NumAssign + Copy + Send + Sync + Debug + PartialEq + 'static {
    fn conj(self) -> Self;
    fn modulus(self) -> f64;
    fn from_real(x: f64) -> Self;
    fn real(self) -> f64;
}

impl Scalar for f64 {
    #[inline]
    fn conj(self) -> Self {
        self
    }
    #[inline]
    fn modulus(self) -> f64 {
        self.abs()
    }
    #[inline]
    fn from_real(x: f64) -> Self {
        x
    }
    #[inline]
    fn real(self) -> f64 {
        self
    }
}

impl Scalar for C64 {
    #[inline]
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    #[inline]
    fn modulus(self) -> f64 {
        self.norm()
    }
    #[inline]
    fn from_real(x: f64) -> Self {
        C64::new(x, 0.0)
    }
    #[inline]
    fn real(self) -> f64 {
        self.re
    }
}

/// Euclidean norm of a vector.
pub fn norm2<T: Scalar>(v: &[T]) -> f64 {
    v.iter().map(|x| x.modulus().powi(2)).sum::<f64>().sqrt()
}

/// Hermitian inner product `Σ conj(a_i) b_i`.
pub fn dot_conj(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn real_to_complex(v: &[f64]) -> Vec<C64> {
    v.iter().map(|&x| C64::new(x, 0.0)).collect()
}
