//! Crank–Nicolson time stepping.
//!
//! Both schemes solve, for `U = Uⁿ⁺¹`,
//!
//! ```text
//! L U = L* Uⁿ − iτ N(Uⁿ, U),   L = M + iτ/2 (A + M_V),   L* = M − iτ/2 (A + M_V),
//! ```
//!
//! and differ in the cubic vector `N`:
//!
//! * [`ModifiedCn`] uses `N = β/4 ω(ρ, Uⁿ + U)` where `ρ` holds the LOD
//!   L²-projection of `|uⁿ|² + |u|²`. It conserves mass and the modified
//!   energy and never leaves LOD coordinates.
//! * [`ClassicalCn`] uses `N = β ⟨(|uⁿ|² + |u|²)/2 · (uⁿ + u)/2, φ⟩`
//!   integrated on the fine grid. It conserves mass and the exact energy.
//!
//! The implicit equation is solved by fixed-point iteration against the
//! factorization of `L`, or by Newton's method for the fine-grid classical
//! scheme.

use thiserror::Error;

use crate::galerkin::GalerkinSpace;
use crate::linalg::{BandedLu, CsrMatrix, LinalgError, C64};
use crate::lod::{LodError, LodSpace};
use crate::mesh::QUADRATURE;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error(
        "step {step}: no convergence after {iterations} iterations (last increment {residual:.3e})"
    )]
    NotConverged {
        step: usize,
        iterations: usize,
        residual: f64,
    },
    #[error("invalid solver options: {0}")]
    InvalidOptions(String),
    #[error("invalid time step {0}")]
    InvalidStep(f64),
    #[error("state has {found} coefficients, space has dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("Newton iteration is only available for the classical scheme on the fine grid")]
    NewtonUnsupported,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Lod(#[from] LodError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Bound on the L² norm of the last iteration increment.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Newton instead of fixed-point iteration (fine-grid classical scheme).
    pub newton: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 200,
            newton: false,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.tolerance > 0.0) {
            return Err(DynamicsError::InvalidOptions(format!(
                "tolerance {} must be positive",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(DynamicsError::InvalidOptions(
                "at least one iteration is required".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IterationStats {
    pub iterations: usize,
    pub residual: f64,
}

/// Coefficients `Uⁿ` after `step` steps, at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepperState {
    pub coeffs: Vec<C64>,
    pub step: usize,
    pub t: f64,
    pub last: IterationStats,
}

impl StepperState {
    pub fn new(coeffs: Vec<C64>) -> Self {
        Self {
            coeffs,
            step: 0,
            t: 0.0,
            last: IterationStats::default(),
        }
    }
}

pub trait TimeStepper {
    fn tau(&self) -> f64;
    /// Changes the step size and refactorizes `L`. A negative step runs the
    /// scheme backwards in time.
    fn set_tau(&mut self, tau: f64) -> Result<(), DynamicsError>;
    fn dim(&self) -> usize;
    fn step(&self, state: &StepperState) -> Result<StepperState, DynamicsError>;
}

/// `L`, its factorization and `L*` for one step size.
#[derive(Debug, Clone)]
struct CnOperators {
    tau: f64,
    l: CsrMatrix<C64>,
    l_lu: BandedLu<C64>,
    l_star: CsrMatrix<C64>,
}

impl CnOperators {
    fn new<S: GalerkinSpace + ?Sized>(space: &S, tau: f64) -> Result<Self, DynamicsError> {
        if !(tau.is_finite() && tau != 0.0) {
            return Err(DynamicsError::InvalidStep(tau));
        }
        let h = CsrMatrix::linear_combination(&[
            (1.0, space.stiffness()),
            (1.0, space.potential_mass()),
        ])?
        .to_complex();
        let m = space.mass().to_complex();
        let half = C64::new(0.0, 0.5 * tau);
        let l = CsrMatrix::linear_combination(&[(C64::new(1.0, 0.0), &m), (half, &h)])?;
        let l_star = CsrMatrix::linear_combination(&[(C64::new(1.0, 0.0), &m), (-half, &h)])?;
        let l_lu = BandedLu::factor(&l)?;
        Ok(Self {
            tau,
            l,
            l_lu,
            l_star,
        })
    }
}

fn check_dim(expected: usize, found: usize) -> Result<(), DynamicsError> {
    if expected != found {
        return Err(DynamicsError::DimensionMismatch { expected, found });
    }
    Ok(())
}

fn advance(state: &StepperState, coeffs: Vec<C64>, tau: f64, last: IterationStats) -> StepperState {
    StepperState {
        coeffs,
        step: state.step + 1,
        t: state.t + tau,
        last,
    }
}

/// `√(dᴴ M d)` for `d = a − b`.
fn l2_distance(mass: &CsrMatrix<f64>, a: &[C64], b: &[C64]) -> f64 {
    let d: Vec<C64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    mass.complex_quadratic_form(&d).max(0.0).sqrt()
}

/// Picard iteration `U_{i+1} = L⁻¹(L*Uⁿ − iτ N(Uⁿ, U_i))` from `U_0 = Uⁿ`.
fn fixed_point<F>(
    ops: &CnOperators,
    mass: &CsrMatrix<f64>,
    options: &SolverOptions,
    state: &StepperState,
    mut nonlinear: F,
) -> Result<(Vec<C64>, IterationStats), DynamicsError>
where
    F: FnMut(&[C64]) -> Result<Vec<C64>, DynamicsError>,
{
    let base = ops.l_star.mul_vec(&state.coeffs)?;
    let scale = C64::new(0.0, -ops.tau);
    let mut current = state.coeffs.clone();
    let mut residual = f64::INFINITY;
    for it in 1..=options.max_iterations {
        let n = nonlinear(&current)?;
        let mut rhs = base.clone();
        for (r, v) in rhs.iter_mut().zip(&n) {
            *r += scale * v;
        }
        ops.l_lu.solve_in_place(&mut rhs)?;
        residual = l2_distance(mass, &rhs, &current);
        current = rhs;
        if residual <= options.tolerance {
            return Ok((
                current,
                IterationStats {
                    iterations: it,
                    residual,
                },
            ));
        }
    }
    Err(DynamicsError::NotConverged {
        step: state.step + 1,
        iterations: options.max_iterations,
        residual,
    })
}

fn linear_step(
    ops: &CnOperators,
    state: &StepperState,
) -> Result<(Vec<C64>, IterationStats), DynamicsError> {
    let mut u = ops.l_star.mul_vec(&state.coeffs)?;
    ops.l_lu.solve_in_place(&mut u)?;
    Ok((
        u,
        IterationStats {
            iterations: 1,
            residual: 0.0,
        },
    ))
}

/// Projected-density Crank–Nicolson scheme in an LOD space.
#[derive(Debug, Clone)]
pub struct ModifiedCn<'a> {
    space: &'a LodSpace,
    ops: CnOperators,
    options: SolverOptions,
}

impl<'a> ModifiedCn<'a> {
    pub fn new(
        space: &'a LodSpace,
        tau: f64,
        options: SolverOptions,
    ) -> Result<Self, DynamicsError> {
        options.validate()?;
        if options.newton {
            return Err(DynamicsError::NewtonUnsupported);
        }
        Ok(Self {
            space,
            ops: CnOperators::new(space, tau)?,
            options,
        })
    }

    pub fn space(&self) -> &LodSpace {
        self.space
    }

    /// `N(a, b) = β/4 ω(ρ, a + b)` with `Mρ = b(a) + b(b)`.
    pub fn nonlinear_vector(&self, a: &[C64], b: &[C64]) -> Result<Vec<C64>, DynamicsError> {
        let load_a = self.space.omega().density_load(a)?;
        self.nonlinear_with_load(&load_a, a, b)
    }

    fn nonlinear_with_load(
        &self,
        load_a: &[f64],
        a: &[C64],
        b: &[C64],
    ) -> Result<Vec<C64>, DynamicsError> {
        let omega = self.space.omega();
        let mut load = omega.density_load(b)?;
        for (l, la) in load.iter_mut().zip(load_a) {
            *l += la;
        }
        self.space.mass_lu().solve_in_place(&mut load)?;
        let sum: Vec<C64> = a.iter().zip(b).map(|(x, y)| x + y).collect();
        let mut out = omega.contract(&load, &sum)?;
        let factor = 0.25 * self.space.split().beta;
        out.iter_mut().for_each(|v| *v *= factor);
        Ok(out)
    }
}

impl TimeStepper for ModifiedCn<'_> {
    fn tau(&self) -> f64 {
        self.ops.tau
    }

    fn set_tau(&mut self, tau: f64) -> Result<(), DynamicsError> {
        if tau != self.ops.tau {
            self.ops = CnOperators::new(self.space, tau)?;
        }
        Ok(())
    }

    fn dim(&self) -> usize {
        self.space.dim()
    }

    fn step(&self, state: &StepperState) -> Result<StepperState, DynamicsError> {
        check_dim(self.dim(), state.coeffs.len())?;
        let (u, stats) = if self.space.split().beta == 0.0 {
            linear_step(&self.ops, state)?
        } else {
            let load_n = self.space.omega().density_load(&state.coeffs)?;
            fixed_point(&self.ops, self.space.mass(), &self.options, state, |u| {
                self.nonlinear_with_load(&load_n, &state.coeffs, u)
            })?
        };
        Ok(advance(state, u, self.ops.tau, stats))
    }
}

/// Classical Crank–Nicolson scheme with the cubic term integrated on the
/// fine grid, for the fine P1 space or an LOD space.
pub struct ClassicalCn<'a, S: GalerkinSpace + ?Sized> {
    space: &'a S,
    ops: CnOperators,
    options: SolverOptions,
}

impl<'a, S: GalerkinSpace + ?Sized> ClassicalCn<'a, S> {
    pub fn new(space: &'a S, tau: f64, options: SolverOptions) -> Result<Self, DynamicsError> {
        options.validate()?;
        if options.newton && !space.is_fine_fe() {
            return Err(DynamicsError::NewtonUnsupported);
        }
        Ok(Self {
            space,
            ops: CnOperators::new(space, tau)?,
            options,
        })
    }

    /// `N(a, b) = β ⟨(|a|² + |b|²)/2 · (a + b)/2, φ⟩` for coefficient vectors.
    pub fn nonlinear_vector(&self, a: &[C64], b: &[C64]) -> Vec<C64> {
        let fa = self.space.expand(a);
        let fb = self.space.expand(b);
        let n = fine_cubic_vector(
            self.space.grid().fine_h(),
            self.space.split().beta,
            &fa,
            &fb,
        );
        self.space.restrict(&n)
    }

    fn newton(&self, state: &StepperState) -> Result<(Vec<C64>, IterationStats), DynamicsError> {
        let h = self.space.grid().fine_h();
        let beta = self.space.split().beta;
        let tau = self.ops.tau;
        let a = &state.coeffs;
        let n = a.len();
        let base = self.ops.l_star.mul_vec(a)?;
        let mut b = a.clone();
        let mut residual = f64::INFINITY;
        for it in 1..=self.options.max_iterations {
            // F(b) = L b − L*a + iτ N(a, b)
            let nl = fine_cubic_vector(h, beta, a, &b);
            let lb = self.ops.l.mul_vec(&b)?;
            let f: Vec<C64> = (0..n)
                .map(|i| lb[i] - base[i] + C64::new(0.0, tau) * nl[i])
                .collect();
            let (j1, j2) = cubic_jacobian(h, beta, a, &b);
            let it_tau = C64::new(0.0, tau);
            // Real 2n system for δ = x + iy in interleaved order (x₀, y₀, x₁, …),
            // from B δ + C conj(δ) = −F with B = L + iτJ1, C = iτJ2.
            let entry = |r: usize, c: usize| -> f64 {
                let (i, j) = (r / 2, c / 2);
                if i.abs_diff(j) > 1 {
                    return 0.0;
                }
                let bij = self.ops.l.get(i, j) + it_tau * j1.get(i, j);
                let cij = it_tau * j2.get(i, j);
                let plus = bij + cij;
                let minus = bij - cij;
                match (r % 2, c % 2) {
                    (0, 0) => plus.re,
                    (0, _) => -minus.im,
                    (_, 0) => plus.im,
                    _ => minus.re,
                }
            };
            let lu = BandedLu::from_band_fn(2 * n, 3, 3, entry)?;
            let mut rhs = vec![0.0; 2 * n];
            for i in 0..n {
                rhs[2 * i] = -f[i].re;
                rhs[2 * i + 1] = -f[i].im;
            }
            lu.solve_in_place(&mut rhs)?;
            let delta: Vec<C64> = (0..n)
                .map(|i| C64::new(rhs[2 * i], rhs[2 * i + 1]))
                .collect();
            for (bi, d) in b.iter_mut().zip(&delta) {
                *bi += d;
            }
            residual = self
                .space
                .mass()
                .complex_quadratic_form(&delta)
                .max(0.0)
                .sqrt();
            if residual <= self.options.tolerance {
                return Ok((
                    b,
                    IterationStats {
                        iterations: it,
                        residual,
                    },
                ));
            }
        }
        Err(DynamicsError::NotConverged {
            step: state.step + 1,
            iterations: self.options.max_iterations,
            residual,
        })
    }
}

impl<S: GalerkinSpace + ?Sized> TimeStepper for ClassicalCn<'_, S> {
    fn tau(&self) -> f64 {
        self.ops.tau
    }

    fn set_tau(&mut self, tau: f64) -> Result<(), DynamicsError> {
        if tau != self.ops.tau {
            self.ops = CnOperators::new(self.space, tau)?;
        }
        Ok(())
    }

    fn dim(&self) -> usize {
        self.space.dim()
    }

    fn step(&self, state: &StepperState) -> Result<StepperState, DynamicsError> {
        check_dim(self.dim(), state.coeffs.len())?;
        let (u, stats) = if self.space.split().beta == 0.0 {
            linear_step(&self.ops, state)?
        } else if self.options.newton {
            self.newton(state)?
        } else if self.space.is_fine_fe() {
            let h = self.space.grid().fine_h();
            let beta = self.space.split().beta;
            fixed_point(&self.ops, self.space.mass(), &self.options, state, |u| {
                Ok(fine_cubic_vector(h, beta, &state.coeffs, u))
            })?
        } else {
            let fa = self.space.expand(&state.coeffs);
            let h = self.space.grid().fine_h();
            let beta = self.space.split().beta;
            fixed_point(&self.ops, self.space.mass(), &self.options, state, |u| {
                let fb = self.space.expand(u);
                Ok(self.space.restrict(&fine_cubic_vector(h, beta, &fa, &fb)))
            })?
        };
        Ok(advance(state, u, self.ops.tau, stats))
    }
}

/// Fine-grid `β ⟨(|a|² + |b|²)/2 · (a + b)/2, φ_n⟩` for interior nodal vectors.
pub fn fine_cubic_vector(h: f64, beta: f64, a: &[C64], b: &[C64]) -> Vec<C64> {
    let n = a.len();
    let zero = C64::new(0.0, 0.0);
    let mut out = vec![zero; n];
    let node = |v: &[C64], m: usize| if m == 0 || m > n { zero } else { v[m - 1] };
    for e in 0..=n {
        let (al, ar) = (node(a, e), node(a, e + 1));
        let (bl, br) = (node(b, e), node(b, e + 1));
        if al == zero && ar == zero && bl == zero && br == zero {
            continue;
        }
        let mut left = zero;
        let mut right = zero;
        for &(lambda, w) in &QUADRATURE {
            let av = al + (ar - al) * lambda;
            let bv = bl + (br - bl) * lambda;
            let g = (av + bv) * (0.25 * w * h * (av.norm_sqr() + bv.norm_sqr()));
            left += g * (1.0 - lambda);
            right += g * lambda;
        }
        if e >= 1 {
            out[e - 1] += left * beta;
        }
        if e < n {
            out[e] += right * beta;
        }
    }
    out
}

/// Tridiagonal `J1 = β/4 ∫ (conj(b)(a+b) + |a|² + |b|²) φ_m φ_n` and
/// `J2 = β/4 ∫ b(a+b) φ_m φ_n`: the derivative of the cubic vector in `b`
/// is `δ ↦ J1 δ + J2 conj(δ)`.
fn cubic_jacobian(h: f64, beta: f64, a: &[C64], b: &[C64]) -> (CsrMatrix<C64>, CsrMatrix<C64>) {
    let n = a.len();
    let zero = C64::new(0.0, 0.0);
    let node = |v: &[C64], m: usize| if m == 0 || m > n { zero } else { v[m - 1] };
    let mut t1 = Vec::with_capacity(4 * (n + 1));
    let mut t2 = Vec::with_capacity(4 * (n + 1));
    for e in 0..=n {
        let mut m1 = [[zero; 2]; 2];
        let mut m2 = [[zero; 2]; 2];
        for &(lambda, w) in &QUADRATURE {
            let av = node(a, e) * (1.0 - lambda) + node(a, e + 1) * lambda;
            let bv = node(b, e) * (1.0 - lambda) + node(b, e + 1) * lambda;
            let s = av + bv;
            let g1 = (bv.conj() * s + av.norm_sqr() + bv.norm_sqr()) * (0.25 * beta * w * h);
            let g2 = bv * s * (0.25 * beta * w * h);
            let shape = [1.0 - lambda, lambda];
            for p in 0..2 {
                for q in 0..2 {
                    m1[p][q] += g1 * (shape[p] * shape[q]);
                    m2[p][q] += g2 * (shape[p] * shape[q]);
                }
            }
        }
        let nodes = [e, e + 1];
        for p in 0..2 {
            for q in 0..2 {
                let (np, nq) = (nodes[p], nodes[q]);
                if np == 0 || nq == 0 || np > n || nq > n {
                    continue;
                }
                t1.push((np - 1, nq - 1, m1[p][q]));
                t2.push((np - 1, nq - 1, m2[p][q]));
            }
        }
    }
    (
        CsrMatrix::from_triplets(n, n, t1).expect("tridiagonal indices"),
        CsrMatrix::from_triplets(n, n, t2).expect("tridiagonal indices"),
    )
}

/// Result of [`evolve`]: the last state and the iteration count of every
/// step taken.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub state: StepperState,
    pub iterations: Vec<usize>,
}

/// An aborted [`evolve`] run with everything computed before the failure.
#[derive(Debug)]
pub struct EvolveFailure {
    pub partial: Trajectory,
    pub error: DynamicsError,
}

/// Takes `n_steps` steps from `initial`. The observer sees the initial
/// state, every `stride`-th state (never when `stride == 0`) and the final
/// state, each exactly once.
pub fn evolve<T, O>(
    stepper: &T,
    initial: StepperState,
    n_steps: usize,
    stride: usize,
    mut observer: O,
) -> Result<Trajectory, Box<EvolveFailure>>
where
    T: TimeStepper + ?Sized,
    O: FnMut(&StepperState),
{
    observer(&initial);
    let mut traj = Trajectory {
        state: initial,
        iterations: Vec::with_capacity(n_steps),
    };
    for k in 1..=n_steps {
        match stepper.step(&traj.state) {
            Ok(next) => {
                traj.iterations.push(next.last.iterations);
                traj.state = next;
            }
            Err(error) => {
                return Err(Box::new(EvolveFailure {
                    partial: traj,
                    error,
                }))
            }
        }
        if k == n_steps || (stride > 0 && k % stride == 0) {
            observer(&traj.state);
        }
    }
    Ok(traj)
}
