mod common;

use common::*;
use lod_gpe::benchmark;
use lod_gpe::dynamics::{
    evolve, ClassicalCn, ModifiedCn, SolverOptions, StepperState, TimeStepper,
};
use lod_gpe::galerkin::FeSpace;
use lod_gpe::invariants;
use lod_gpe::linalg::C64;
use lod_gpe::lod::build_lod_space;
use lod_gpe::mesh::{FeFunction, GridHierarchy, Level};
use lod_gpe::potential::{Potential, PotentialSplit};

#[test]
fn full_domain_basis_matches_dense_saddle_point() {
    let space = full_domain_space(1.0, 0.0);
    let err = kkt_basis_error(&space);
    assert!(err <= 1e-10, "{err}");
}

#[test]
fn localized_basis_matches_dense_patch_problems() {
    let grid = GridHierarchy::new(-4.0, 4.0, 12, 3).unwrap();
    for layers in [1, 2, 3] {
        for split in [oracle_split(1.0), PotentialSplit::free(1.0)] {
            let space = build_lod_space(&grid, &split, layers, 0.0).unwrap();
            let v1 = split.v1.clone();
            let reference = localized_basis(&grid, &|x| v1.eval(&grid, x), layers);
            let err = basis_error(&space, &reference);
            assert!(err <= 1e-10, "ℓ = {layers}: {err}");
        }
    }
}

#[test]
fn omega_matches_direct_quadrature() {
    let space = full_domain_space(1.0, 0.0);
    let err = omega_error(&space);
    assert!(err <= 1e-12, "{err}");

    let grid = oracle_grid();
    let local = build_lod_space(&grid, &oracle_split(1.0), 2, 0.0).unwrap();
    let err = omega_error(&local);
    assert!(err <= 1e-12, "localized: {err}");
}

#[test]
fn galerkin_matrices_are_congruent_to_fine_matrices() {
    let grid = oracle_grid();
    let space = build_lod_space(&grid, &oracle_split(1.0), 2, 0.0).unwrap();
    let oracle = ModifiedCnOracle::new(&space);
    let mass = space.mass().to_dense();
    let ham: Vec<Vec<f64>> = space
        .stiffness()
        .to_dense()
        .iter()
        .zip(space.potential_mass().to_dense())
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
        .collect();
    for i in 0..space.dim() {
        for j in 0..space.dim() {
            assert!((mass[i][j] - oracle.mass[i][j]).abs() <= 1e-12);
            assert!((ham[i][j] - oracle.hamiltonian[i][j]).abs() <= 1e-12);
        }
    }
}

#[test]
fn modified_step_matches_dense_newton() {
    let space = full_domain_space(1.0, 0.0);
    let err = modified_step_error(&space, 0.05);
    assert!(err <= 1e-8, "{err}");
}

#[test]
fn classical_step_matches_dense_newton() {
    let (fpi, newton) = classical_step_errors(&oracle_grid(), 1.0, 0.05);
    assert!(fpi <= 1e-8, "fixed point: {fpi}");
    assert!(newton <= 1e-8, "Newton: {newton}");
}

#[test]
fn linear_schemes_coincide_and_match_dense_solve() {
    let space = full_domain_space(0.0, 0.0);
    let u0 = space
        .ritz_project(&FeFunction::interpolate(space.grid(), Level::Fine, wave))
        .unwrap();
    let tau = 0.05;
    let state = StepperState::new(u0.clone());
    let opts = SolverOptions::default();
    let a = ModifiedCn::new(&space, tau, opts)
        .unwrap()
        .step(&state)
        .unwrap();
    let b = ClassicalCn::new(&space, tau, opts)
        .unwrap()
        .step(&state)
        .unwrap();
    let d = a
        .coeffs
        .iter()
        .zip(&b.coeffs)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max);
    assert!(d <= 1e-14, "{d}");
    let oracle = ModifiedCnOracle::new(&space);
    let reference = oracle.solve(tau, &u0);
    let err = l2_distance(&oracle.mass, &a.coeffs, &reference);
    assert!(err <= 1e-10, "{err}");
}

#[test]
fn translated_patches_give_translated_basis() {
    let grid = GridHierarchy::new(-4.0, 4.0, 12, 3).unwrap();
    let layers = 2;
    let reused = build_lod_space(&grid, &PotentialSplit::free(1.0), layers, 0.0).unwrap();
    assert!(reused.translation_reuse());
    let zero = PotentialSplit {
        v1: Potential::function(|_| 0.0),
        v2: Potential::Zero,
        beta: 1.0,
    };
    let solved = build_lod_space(&grid, &zero, layers, 0.0).unwrap();
    assert!(!solved.translation_reuse());
    for (a, b) in reused.basis().iter().zip(solved.basis()) {
        assert_eq!(a.first_node, b.first_node);
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() <= 1e-12, "{x} {y}");
        }
    }
    let s = grid.ratio();
    let basis = solved.basis();
    // Both cells of both hats have patches away from the boundary.
    for p in layers + 1..grid.n_coarse() - layers - 3 {
        let (a, b) = (&basis[p], &basis[p + 1]);
        assert_eq!(b.first_node, a.first_node + s);
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() <= 1e-12, "{x} {y}");
        }
    }
}

#[test]
fn ritz_projection_of_zero_and_of_space_elements() {
    let space = full_domain_space(1.0, 0.0);
    let grid = space.grid();
    let z = space
        .ritz_project(&FeFunction::zeros(grid, Level::Fine))
        .unwrap();
    assert!(z.iter().all(|c| c.norm() == 0.0));
    let u: Vec<C64> = (0..space.dim())
        .map(|i| C64::new(i as f64 - 3.0, 0.5))
        .collect();
    let fine = FeFunction::new(grid, Level::Fine, space.expand(&u)).unwrap();
    let back = space.ritz_project(&fine).unwrap();
    for (a, b) in back.iter().zip(&u) {
        assert!((a - b).norm() <= 1e-11);
    }
}

#[test]
fn projected_density_matches_fine_quadrature() {
    let space = full_domain_space(1.0, 0.0);
    let grid = space.grid();
    let u = space
        .ritz_project(&FeFunction::interpolate(grid, Level::Fine, wave))
        .unwrap();
    let phi = basis_matrix(&space);
    let fine = space.expand(&u);
    let nf = grid.fine_dofs();
    let h = grid.fine_h();
    let node = |m: usize| {
        if m == 0 || m > nf {
            C64::new(0.0, 0.0)
        } else {
            fine[m - 1]
        }
    };
    let basis_at = |m: usize, i: usize| if m == 0 || m > nf { 0.0 } else { phi[m - 1][i] };
    let mut load = vec![0.0; space.dim()];
    for e in 0..grid.n_fine_elements() {
        for &(l, w) in &GAUSS3 {
            let rho = (node(e) * (1.0 - l) + node(e + 1) * l).norm_sqr();
            for (i, b) in load.iter_mut().enumerate() {
                *b += w * h * rho * ((1.0 - l) * basis_at(e, i) + l * basis_at(e + 1, i));
            }
        }
    }
    let expected = solve_dense(space.mass().to_dense(), load);
    let got = space.density_projection(&u).unwrap();
    for (a, b) in got.iter().zip(&expected) {
        assert!((a - b).abs() <= 1e-11, "{a} vs {b}");
    }
}

#[test]
fn modified_energy_differs_by_density_defect() {
    let space = full_domain_space(1.0, 0.0);
    let u = space
        .ritz_project(&FeFunction::interpolate(space.grid(), Level::Fine, wave))
        .unwrap();
    let e = invariants::energy(&space, &u);
    let e_lod = invariants::modified_energy(&space, &u).unwrap();
    let defect = invariants::density_defect(&space, &u).unwrap();
    assert!(defect > 0.0);
    assert!(
        (e_lod - e + 0.5 * defect).abs() <= 1e-10,
        "{e_lod} {e} {defect}"
    );
}

#[test]
fn single_steps_conserve_mass_and_energy() {
    let grid = benchmark::grid(4, 10).unwrap();
    let fe = FeSpace::new(&grid, &benchmark::split()).unwrap();
    let u0 = benchmark::initial_value(&grid).into_coeffs();
    let opts = SolverOptions {
        tolerance: 1e-12,
        ..SolverOptions::default()
    };
    let s = ClassicalCn::new(&fe, 1e-4, opts).unwrap();
    let next = s.step(&StepperState::new(u0.clone())).unwrap();
    let (m0, m1) = (
        invariants::mass(&fe, &u0),
        invariants::mass(&fe, &next.coeffs),
    );
    assert!((m1 - m0).abs() <= 1e-11 * m0, "{m0} {m1}");

    let space = full_domain_space(-2.0, 0.0);
    let u0 = space
        .ritz_project(&FeFunction::interpolate(space.grid(), Level::Fine, wave))
        .unwrap();
    let s = ModifiedCn::new(&space, 1e-2, opts).unwrap();
    let next = s.step(&StepperState::new(u0.clone())).unwrap();
    let (m0, m1) = (
        invariants::mass(&space, &u0),
        invariants::mass(&space, &next.coeffs),
    );
    assert!((m1 - m0).abs() <= 1e-11 * m0);
    let e0 = invariants::modified_energy(&space, &u0).unwrap();
    let e1 = invariants::modified_energy(&space, &next.coeffs).unwrap();
    assert!((e1 - e0).abs() <= 1e-11 * e0.abs(), "{e0} {e1}");
}

#[test]
fn evolve_reports_initial_strided_and_final_states() {
    let space = full_domain_space(1.0, 1e-14);
    let u0 = space
        .ritz_project(&FeFunction::interpolate(space.grid(), Level::Fine, wave))
        .unwrap();
    let s = ModifiedCn::new(&space, 1e-2, SolverOptions::default()).unwrap();
    let mut seen = Vec::new();
    let traj = evolve(&s, StepperState::new(u0.clone()), 5, 0, |st| {
        seen.push(st.step)
    })
    .unwrap();
    assert_eq!(seen, [0, 5]);
    assert_eq!(traj.iterations.len(), 5);
    assert!((traj.state.t - 5e-2).abs() < 1e-15);
    seen.clear();
    evolve(&s, StepperState::new(u0), 5, 2, |st| seen.push(st.step)).unwrap();
    assert_eq!(seen, [0, 2, 4, 5]);
}
