//! Localized orthogonal decomposition spaces.
//!
//! A coarse P1 hat `φ_p` is corrected by fine-scale functions from the
//! kernel of the coarse L²-projection, solved on patches of `ℓ` coarse layers,
//! so that the corrected hat is (almost) orthogonal to all fine details in the
//! energy inner product `a(v, w) = ∫ v'w' + V₁ v w`. The corrected hats span
//! the LOD space in which the time stepping runs.

mod cache;
mod corrector;
mod patch;
mod space;

use thiserror::Error;

use crate::linalg::LinalgError;
use crate::mesh::MeshError;

pub use cache::{CacheKey, CACHE_VERSION};
pub use corrector::{solve_corrector, Corrector};
pub use patch::{build_patch, Patch};
pub use space::{build_lod_space, default_layers, BuildTimings, LodBasisFunction, LodSpace};

#[derive(Debug, Error)]
pub enum LodError {
    #[error("singular saddle-point system on the patch of coarse element {element}")]
    SingularSaddlePoint { element: usize },
    #[error("coarse hat at node {node} does not touch element {element}")]
    HatOutsideElement { node: usize, element: usize },
    #[error("invalid LOD parameter: {0}")]
    InvalidParameter(String),
    #[error("singular Gram matrix: {0}")]
    SingularGram(LinalgError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("cache: {0}")]
    Cache(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
