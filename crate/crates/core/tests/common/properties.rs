//! Seeded property suites. Each function runs one suite and reports the
//! first counterexample.

use std::f64::consts::PI;
use std::sync::OnceLock;

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, RngSeed, TestCaseError, TestRunner};

use lod_gpe::dynamics::{ClassicalCn, ModifiedCn, SolverOptions, StepperState, TimeStepper};
use lod_gpe::galerkin::{FeSpace, GalerkinSpace};
use lod_gpe::invariants;
use lod_gpe::linalg::{CsrMatrix, SparseTensor3, C64};
use lod_gpe::lod::LodSpace;
use lod_gpe::mesh::{l2_project_coarse, prolong, FeFunction, Level};

use super::{full_domain_space, oracle_grid, oracle_split};

const SEED: u64 = 0x5eed_1d;

fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config {
        cases,
        rng_algorithm: RngAlgorithm::ChaCha,
        rng_seed: RngSeed::Fixed(SEED),
        failure_persistence: None,
        ..Config::default()
    })
}

fn space() -> &'static LodSpace {
    static SPACE: OnceLock<LodSpace> = OnceLock::new();
    SPACE.get_or_init(|| full_domain_space(-2.0, 1e-14))
}

fn fe_space() -> &'static FeSpace {
    static SPACE: OnceLock<FeSpace> = OnceLock::new();
    SPACE.get_or_init(|| FeSpace::new(&oracle_grid(), &oracle_split(-2.0)).unwrap())
}

fn complex_vec(n: usize, amplitude: f64) -> impl Strategy<Value = Vec<C64>> {
    prop::collection::vec((-amplitude..amplitude, -amplitude..amplitude), n)
        .prop_map(|v| v.into_iter().map(|(re, im)| C64::new(re, im)).collect())
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

fn max_rel(a: &[C64], b: &[C64]) -> f64 {
    let scale = b.iter().map(|z| z.norm()).fold(1.0, f64::max);
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
        / scale
}

fn report<T: std::fmt::Debug>(
    r: Result<(), proptest::test_runner::TestError<T>>,
) -> Result<(), String> {
    r.map_err(|e| e.to_string())
}

/// Mass, energies, momentum, centre of mass and the projected density do not
/// see a global phase; conjugation flips the momentum.
pub fn phase_invariance() -> Result<(), String> {
    let lod = space();
    let fe = fe_space();
    let strategy = (
        complex_vec(lod.dim(), 1.0),
        complex_vec(fe.dim(), 1.0),
        0.0..2.0 * PI,
    );
    report(runner(48).run(&strategy, |(u, f, theta)| {
        let rot = C64::from_polar(1.0, theta);
        let ur: Vec<C64> = u.iter().map(|z| z * rot).collect();
        let fr: Vec<C64> = f.iter().map(|z| z * rot).collect();
        let a = invariants::record_lod(lod, &u, 0.0).unwrap();
        let b = invariants::record_lod(lod, &ur, 0.0).unwrap();
        for (x, y) in [
            (a.mass, b.mass),
            (a.energy, b.energy),
            (a.energy_lod.unwrap(), b.energy_lod.unwrap()),
            (a.momentum, b.momentum),
            (a.center_of_mass, b.center_of_mass),
        ] {
            prop_assert!(close(x, y, 1e-12), "{x} vs {y}");
        }
        let da = invariants::density_defect(lod, &u).unwrap();
        let db = invariants::density_defect(lod, &ur).unwrap();
        prop_assert!(close(da, db, 1e-10), "defect {da} vs {db}");
        let ra = lod.density_projection(&u).unwrap();
        let rb = lod.density_projection(&ur).unwrap();
        for (x, y) in ra.iter().zip(&rb) {
            prop_assert!(close(*x, *y, 1e-12));
        }
        let fa = invariants::record(fe, &f, 0.0);
        let fb = invariants::record(fe, &fr, 0.0);
        prop_assert!(close(fa.mass, fb.mass, 1e-12));
        prop_assert!(close(fa.energy, fb.energy, 1e-12));
        prop_assert!(close(fa.momentum, fb.momentum, 1e-12));
        let conj: Vec<C64> = u.iter().map(|z| z.conj()).collect();
        let pc = invariants::momentum(lod, &conj);
        prop_assert!(
            close(pc, -a.momentum, 1e-12),
            "conjugate momentum {pc} vs {}",
            a.momentum
        );
        Ok(())
    }))
}

fn reversal<T: TimeStepper>(forward: &T, backward: &T, u: Vec<C64>) -> Result<f64, TestCaseError> {
    let mid = forward
        .step(&StepperState::new(u.clone()))
        .map_err(|e| TestCaseError::fail(e.to_string()))?;
    let back = backward
        .step(&StepperState::new(mid.coeffs))
        .map_err(|e| TestCaseError::fail(e.to_string()))?;
    Ok(max_rel(&back.coeffs, &u))
}

/// A step with `τ` followed by a step with `-τ` returns to the start.
pub fn time_reversibility() -> Result<(), String> {
    let lod = space();
    let fe = fe_space();
    let opts = SolverOptions {
        tolerance: 1e-13,
        ..SolverOptions::default()
    };
    let newton = SolverOptions {
        newton: true,
        ..opts
    };
    let strategy = (
        complex_vec(lod.dim(), 0.8),
        complex_vec(fe.dim(), 0.8),
        1e-3..2e-2,
    );
    report(runner(16).run(&strategy, |(u, f, tau)| {
        let e = reversal(
            &ModifiedCn::new(lod, tau, opts).unwrap(),
            &ModifiedCn::new(lod, -tau, opts).unwrap(),
            u.clone(),
        )?;
        prop_assert!(e <= 1e-10, "modified CN: {e}");
        let e = reversal(
            &ClassicalCn::new(lod, tau, opts).unwrap(),
            &ClassicalCn::new(lod, -tau, opts).unwrap(),
            u,
        )?;
        prop_assert!(e <= 1e-10, "classical CN in LOD space: {e}");
        let e = reversal(
            &ClassicalCn::new(fe, tau, newton).unwrap(),
            &ClassicalCn::new(fe, -tau, newton).unwrap(),
            f,
        )?;
        prop_assert!(e <= 1e-10, "classical CN on the fine grid: {e}");
        Ok(())
    }))
}

/// Ritz projection fixes LOD functions and the coarse L²-projection fixes
/// its own range.
pub fn projection_idempotence() -> Result<(), String> {
    let lod = space();
    let grid = lod.grid().clone();
    let strategy = (
        complex_vec(lod.dim(), 1.0),
        complex_vec(grid.fine_dofs(), 1.0),
    );
    report(runner(48).run(&strategy, |(u, f)| {
        let fine = FeFunction::new(&grid, Level::Fine, lod.expand(&u)).unwrap();
        let again = lod.ritz_project(&fine).unwrap();
        let e = max_rel(&again, &u);
        prop_assert!(e <= 1e-10, "Ritz projection: {e}");

        let f = FeFunction::new(&grid, Level::Fine, f).unwrap();
        let p = l2_project_coarse(&grid, &f).unwrap();
        let pp = l2_project_coarse(&grid, &prolong(&grid, &p).unwrap()).unwrap();
        let e = max_rel(pp.coeffs(), p.coeffs());
        prop_assert!(e <= 1e-12, "coarse L² projection: {e}");
        Ok(())
    }))
}

fn sparse_complex(n: usize) -> impl Strategy<Value = CsrMatrix<C64>> {
    let entry = (0..n, 0..n, -1.0..1.0f64, -1.0..1.0f64);
    prop::collection::vec(entry, 0..3 * n).prop_map(move |t| {
        CsrMatrix::from_triplets(
            n,
            n,
            t.into_iter().map(|(i, j, re, im)| (i, j, C64::new(re, im))),
        )
        .unwrap()
    })
}

/// `(Aᴴ)ᴴ = A` exactly and `⟨Ax, y⟩ = ⟨x, Aᴴy⟩`.
pub fn adjoint_involution() -> Result<(), String> {
    let strategy = (1usize..12)
        .prop_flat_map(|n| (sparse_complex(n), complex_vec(n, 1.0), complex_vec(n, 1.0)));
    report(runner(64).run(&strategy, |(a, x, y)| {
        let ah = a.hermitian_adjoint();
        prop_assert_eq!(&ah.hermitian_adjoint(), &a);
        let ax = a.mul_vec(&x).unwrap();
        let ahy = ah.mul_vec(&y).unwrap();
        let lhs: C64 = ax.iter().zip(&y).map(|(p, q)| p * q.conj()).sum();
        let rhs: C64 = x.iter().zip(&ahy).map(|(p, q)| p * q.conj()).sum();
        prop_assert!(
            (lhs - rhs).norm() <= 1e-12 * (1.0 + lhs.norm()),
            "{lhs} vs {rhs}"
        );
        Ok(())
    }))
}

fn tensor(n: usize) -> impl Strategy<Value = SparseTensor3> {
    let entry = (0..n, 0..n, 0..n, -1.0..1.0f64);
    prop::collection::vec(entry, 0..4 * n * n)
        .prop_map(move |e| SparseTensor3::from_entries(n, e, 0.0).unwrap())
}

/// `ω(ρ, u)` is linear in `ρ` and complex-linear in `u`; the density load is
/// phase invariant.
pub fn contraction_linearity() -> Result<(), String> {
    let strategy = (1usize..10).prop_flat_map(|n| {
        let real = prop::collection::vec(-1.0..1.0f64, n);
        (
            tensor(n),
            (real.clone(), real),
            (complex_vec(n, 1.0), complex_vec(n, 1.0)),
            (-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64, 0.0..2.0 * PI),
        )
    });
    report(
        runner(64).run(&strategy, |(t, (r1, r2), (u, v), (a, b, c, theta))| {
            let alpha = C64::new(a, c);
            let rho: Vec<f64> = r1.iter().zip(&r2).map(|(x, y)| a * x + b * y).collect();
            let lhs = t.contract(&rho, &u).unwrap();
            let c1 = t.contract(&r1, &u).unwrap();
            let c2 = t.contract(&r2, &u).unwrap();
            let rhs: Vec<C64> = c1.iter().zip(&c2).map(|(x, y)| x * a + y * b).collect();
            prop_assert!(max_rel(&lhs, &rhs) <= 1e-12);

            let w: Vec<C64> = u.iter().zip(&v).map(|(x, y)| alpha * x + y * b).collect();
            let lhs = t.contract(&r1, &w).unwrap();
            let cv = t.contract(&r1, &v).unwrap();
            let rhs: Vec<C64> = c1.iter().zip(&cv).map(|(x, y)| alpha * x + y * b).collect();
            prop_assert!(max_rel(&lhs, &rhs) <= 1e-12);

            let rot: Vec<C64> = u.iter().map(|z| z * C64::from_polar(1.0, theta)).collect();
            let la = t.density_load(&u).unwrap();
            let lb = t.density_load(&rot).unwrap();
            for (x, y) in la.iter().zip(&lb) {
                prop_assert!(close(*x, *y, 1e-12));
            }
            Ok(())
        }),
    )
}

pub const SUITES: [(&str, fn() -> Result<(), String>); 5] = [
    ("phase invariance", phase_invariance),
    ("time reversibility", time_reversibility),
    ("projection idempotence", projection_idempotence),
    ("adjoint involution", adjoint_involution),
    ("contraction linearity", contraction_linearity),
];
