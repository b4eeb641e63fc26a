//! External potentials and the split `V = V₁ + V₂` used by the LOD energy
//! inner product.

use std::fmt;
use std::sync::Arc;

use crate::mesh::{GridHierarchy, MeshError, QUADRATURE};

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A real potential on the computational interval.
#[derive(Clone)]
pub enum Potential {
    Zero,
    Constant(f64),
    /// Closure sampled at quadrature points. `period`, when set, declares
    /// `V(x + period) = V(x)`.
    Function {
        f: ScalarFn,
        period: Option<f64>,
    },
    /// Values at every fine node (boundary nodes included), interpolated
    /// linearly in between.
    Nodal(Vec<f64>),
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Potential::Zero => write!(f, "Zero"),
            Potential::Constant(c) => write!(f, "Constant({c})"),
            Potential::Function { period, .. } => write!(f, "Function {{ period: {period:?} }}"),
            Potential::Nodal(v) => write!(f, "Nodal({} values)", v.len()),
        }
    }
}

impl Potential {
    pub fn function<F>(f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Potential::Function {
            f: Arc::new(f),
            period: None,
        }
    }

    pub fn periodic<F>(f: F, period: f64) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Potential::Function {
            f: Arc::new(f),
            period: Some(period),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Potential::Zero) || matches!(self, Potential::Constant(c) if *c == 0.0)
    }

    /// Value at `x`. Nodal potentials are located on the fine grid of `grid`.
    pub fn eval(&self, grid: &GridHierarchy, x: f64) -> f64 {
        match self {
            Potential::Zero => 0.0,
            Potential::Constant(c) => *c,
            Potential::Function { f, .. } => f(x),
            Potential::Nodal(values) => {
                let h = grid.fine_h();
                let n = grid.n_fine_elements();
                let s = ((x - grid.a()) / h).clamp(0.0, n as f64);
                let e = (s.floor() as usize).min(n - 1);
                let lambda = s - e as f64;
                (1.0 - lambda) * values[e] + lambda * values[e + 1]
            }
        }
    }

    /// True when shifting the potential by one coarse cell leaves it
    /// unchanged, so local corrector problems are translates of each other.
    pub fn is_coarse_translation_invariant(&self, coarse_h: f64) -> bool {
        match self {
            Potential::Zero | Potential::Constant(_) => true,
            Potential::Function {
                period: Some(p), ..
            } if *p > 0.0 => {
                let ratio = coarse_h / p;
                (ratio - ratio.round()).abs() < 1e-9 && ratio.round() >= 1.0
            }
            _ => false,
        }
    }

    fn check(&self, grid: &GridHierarchy) -> Result<(), MeshError> {
        if let Potential::Nodal(v) = self {
            if v.len() != grid.n_fine_elements() + 1 {
                return Err(MeshError::PotentialLength {
                    expected: grid.n_fine_elements() + 1,
                    found: v.len(),
                });
            }
        }
        Ok(())
    }
}

/// `V = V₁ + V₂` together with the interaction strength β of the cubic term.
#[derive(Debug, Clone)]
pub struct PotentialSplit {
    pub v1: Potential,
    pub v2: Potential,
    pub beta: f64,
}

impl PotentialSplit {
    pub fn free(beta: f64) -> Self {
        Self {
            v1: Potential::Zero,
            v2: Potential::Zero,
            beta,
        }
    }

    pub fn total(&self, grid: &GridHierarchy, x: f64) -> f64 {
        self.v1.eval(grid, x) + self.v2.eval(grid, x)
    }

    pub fn has_potential(&self) -> bool {
        !(self.v1.is_zero() && self.v2.is_zero())
    }

    /// Checks nodal lengths and `V₁ >= 0` at every fine quadrature point.
    pub fn validate(&self, grid: &GridHierarchy) -> Result<(), MeshError> {
        self.v1.check(grid)?;
        self.v2.check(grid)?;
        let h = grid.fine_h();
        for e in 0..grid.n_fine_elements() {
            let x0 = grid.fine_x(e);
            for q in QUADRATURE.iter() {
                let x = x0 + q.0 * h;
                let v = self.v1.eval(grid, x);
                if !(v >= 0.0) {
                    return Err(MeshError::NegativeV1 { x, value: v });
                }
            }
        }
        Ok(())
    }
}
