//! Dense reference computations shared by the integration tests.
#![allow(dead_code)]

pub mod properties;

use lod_gpe::dynamics::{ClassicalCn, ModifiedCn, SolverOptions, StepperState, TimeStepper};
use lod_gpe::galerkin::FeSpace;
use lod_gpe::linalg::C64;
use lod_gpe::lod::{build_lod_space, LodSpace};
use lod_gpe::mesh::{FeFunction, GridHierarchy, Level};
use lod_gpe::potential::{Potential, PotentialSplit};

/// Three-point Gauss rule on [0, 1], exact for quintics.
pub const GAUSS3: [(f64, f64); 3] = [
    (0.112_701_665_379_258_31, 5.0 / 18.0),
    (0.5, 4.0 / 9.0),
    (0.887_298_334_620_741_7, 5.0 / 18.0),
];

pub type Dense = Vec<Vec<f64>>;

/// Gaussian elimination with partial pivoting.
pub fn solve_dense(mut a: Dense, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n)
            .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
            .unwrap();
        a.swap(c, p);
        b.swap(c, p);
        assert!(a[c][c] != 0.0, "singular dense system");
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            if f == 0.0 {
                continue;
            }
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

pub fn mat_vec(a: &Dense, x: &[f64]) -> Vec<f64> {
    a.iter()
        .map(|row| row.iter().zip(x).map(|(p, q)| p * q).sum())
        .collect()
}

pub fn mat_cvec(a: &Dense, x: &[C64]) -> Vec<C64> {
    a.iter()
        .map(|row| row.iter().zip(x).map(|(p, q)| q * p).sum())
        .collect()
}

/// `Bᵀ A B`
pub fn congruence(a: &Dense, b: &Dense) -> Dense {
    let n = b[0].len();
    let ab: Dense = a
        .iter()
        .map(|row| {
            (0..n)
                .map(|j| row.iter().zip(b).map(|(x, r)| x * r[j]).sum())
                .collect()
        })
        .collect();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| b.iter().zip(&ab).map(|(r, s)| r[i] * s[j]).sum())
                .collect()
        })
        .collect()
}

/// Fine P1 matrix `∫ u'v' + w u v` on interior nodes, integrated with
/// [`GAUSS3`].
pub fn fine_dense(grid: &GridHierarchy, stiffness: f64, weight: &dyn Fn(f64) -> f64) -> Dense {
    let n = grid.fine_dofs();
    let h = grid.fine_h();
    let mut m = vec![vec![0.0; n]; n];
    for e in 0..grid.n_fine_elements() {
        let x0 = grid.fine_x(e);
        let mut local = [
            [stiffness / h, -stiffness / h],
            [-stiffness / h, stiffness / h],
        ];
        for &(l, w) in &GAUSS3 {
            let s = [1.0 - l, l];
            let v = weight(x0 + l * h) * w * h;
            for a in 0..2 {
                for b in 0..2 {
                    local[a][b] += v * s[a] * s[b];
                }
            }
        }
        for a in 0..2 {
            for b in 0..2 {
                let (p, q) = (e + a, e + b);
                if p >= 1 && p <= n && q >= 1 && q <= n {
                    m[p - 1][q - 1] += local[a][b];
                }
            }
        }
    }
    m
}

pub fn fine_mass(grid: &GridHierarchy) -> Dense {
    fine_dense(grid, 0.0, &|_| 1.0)
}

/// Fine nodal values of the basis, one column per LOD function.
pub fn basis_matrix(space: &LodSpace) -> Dense {
    let nf = space.grid().fine_dofs();
    (1..=nf)
        .map(|node| space.basis().iter().map(|phi| phi.at_node(node)).collect())
        .collect()
}

/// `ω_{kji} = ∫ φ_k φ_j φ_i` at index `(k·n + j)·n + i`, by [`GAUSS3`] on every
/// fine cell.
pub fn dense_omega(grid: &GridHierarchy, phi: &Dense) -> Vec<f64> {
    let n = phi[0].len();
    let nf = grid.fine_dofs();
    let h = grid.fine_h();
    let node = |m: usize, i: usize| if m == 0 || m > nf { 0.0 } else { phi[m - 1][i] };
    let mut omega = vec![0.0; n * n * n];
    for e in 0..grid.n_fine_elements() {
        for &(l, w) in &GAUSS3 {
            let v: Vec<f64> = (0..n)
                .map(|i| (1.0 - l) * node(e, i) + l * node(e + 1, i))
                .collect();
            for k in 0..n {
                for j in 0..n {
                    let kj = w * h * v[k] * v[j];
                    for i in 0..n {
                        omega[(k * n + j) * n + i] += kj * v[i];
                    }
                }
            }
        }
    }
    omega
}

/// Damped Newton for `F(z) = 0` with a central-difference Jacobian.
pub fn damped_newton(f: &dyn Fn(&[f64]) -> Vec<f64>, z0: Vec<f64>) -> Vec<f64> {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let n = z0.len();
    let mut z = z0;
    let mut r = f(&z);
    for _ in 0..60 {
        let rn = norm(&r);
        if rn < 1e-15 {
            break;
        }
        let mut jac = vec![vec![0.0; n]; n];
        for c in 0..n {
            let d = 1e-6 * z[c].abs().max(1.0);
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[c] += d;
            zm[c] -= d;
            let (fp, fm) = (f(&zp), f(&zm));
            for row in 0..n {
                jac[row][c] = (fp[row] - fm[row]) / (2.0 * d);
            }
        }
        let delta = solve_dense(jac, r.iter().map(|x| -x).collect());
        let mut lambda = 1.0;
        loop {
            let trial: Vec<f64> = z.iter().zip(&delta).map(|(a, b)| a + lambda * b).collect();
            let rt = f(&trial);
            if norm(&rt) < rn || lambda < 1e-6 {
                z = trial;
                r = rt;
                break;
            }
            lambda *= 0.5;
        }
        if lambda < 1e-6 {
            break;
        }
    }
    z
}

pub fn to_real(u: &[C64]) -> Vec<f64> {
    u.iter().flat_map(|c| [c.re, c.im]).collect()
}

pub fn to_complex(z: &[f64]) -> Vec<C64> {
    z.chunks(2).map(|c| C64::new(c[0], c[1])).collect()
}

/// `√(dᴴ M d)` with a dense mass matrix.
pub fn l2_distance(m: &Dense, a: &[C64], b: &[C64]) -> f64 {
    let d: Vec<C64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let md = mat_cvec(m, &d);
    d.iter()
        .zip(&md)
        .map(|(x, y)| (x.conj() * y).re)
        .sum::<f64>()
        .max(0.0)
        .sqrt()
}

/// Coarse grid with 8 cells and three refinements on [-4, 4].
pub fn oracle_grid() -> GridHierarchy {
    GridHierarchy::new(-4.0, 4.0, 8, 3).unwrap()
}

pub fn oracle_v1(x: f64) -> f64 {
    1.0 + 0.25 * x * x
}

pub fn oracle_v2(x: f64) -> f64 {
    0.05 * x * x * x - 0.2 * x
}

pub fn oracle_split(beta: f64) -> PotentialSplit {
    PotentialSplit {
        v1: Potential::function(oracle_v1),
        v2: Potential::function(oracle_v2),
        beta,
    }
}

/// Space whose patches cover the whole domain.
pub fn full_domain_space(beta: f64, omega_tolerance: f64) -> LodSpace {
    let grid = oracle_grid();
    build_lod_space(&grid, &oracle_split(beta), grid.n_coarse(), omega_tolerance).unwrap()
}

pub fn wave(x: f64) -> C64 {
    C64::from_polar(1.5 / x.cosh(), 0.7 * x)
}

/// `∫ u'v' + V₁ u v` on fine cell `e`.
fn cell_energy(grid: &GridHierarchy, e: usize, v1: &dyn Fn(f64) -> f64) -> [[f64; 2]; 2] {
    let h = grid.fine_h();
    let x0 = grid.fine_x(e);
    let mut m = [[1.0 / h, -1.0 / h], [-1.0 / h, 1.0 / h]];
    for &(l, w) in &GAUSS3 {
        let s = [1.0 - l, l];
        let v = v1(x0 + l * h) * w * h;
        for a in 0..2 {
            for b in 0..2 {
                m[a][b] += v * s[a] * s[b];
            }
        }
    }
    m
}

/// Corrected hats `φ_p + Σ_K Q_{K,ℓ}(φ_p)` as fine nodal columns. Each
/// `Q_{K,ℓ}` solves one dense saddle-point system on the interior fine nodes
/// of the patch, constrained against every coarse hat.
pub fn localized_basis(grid: &GridHierarchy, v1: &dyn Fn(f64) -> f64, layers: usize) -> Dense {
    let nf = grid.fine_dofs();
    let nc = grid.coarse_dofs();
    let n = grid.n_coarse();
    let s = grid.ratio();
    let k = fine_dense(grid, 1.0, v1);
    let mf = fine_mass(grid);
    let hat = |p: usize| -> Vec<f64> {
        (1..=nf)
            .map(|m| grid.coarse_hat_at_fine_node(p, m))
            .collect()
    };
    let loads: Vec<Vec<f64>> = (1..=nc).map(|p| mat_vec(&mf, &hat(p))).collect();
    let mut basis: Dense = vec![vec![0.0; nc]; nf];
    for p in 1..=nc {
        for (m, v) in hat(p).into_iter().enumerate() {
            basis[m][p - 1] = v;
        }
    }
    for e in 0..n {
        let lo = e.saturating_sub(layers);
        let hi = (e + layers).min(n - 1);
        // Fine unknowns (1-based nodes) strictly inside the patch.
        let nodes: Vec<usize> = (lo * s + 1..(hi + 1) * s).collect();
        let rows: Vec<Vec<f64>> = loads
            .iter()
            .map(|l| nodes.iter().map(|&m| l[m - 1]).collect::<Vec<f64>>())
            .filter(|r| r.iter().any(|&v| v != 0.0))
            .collect();
        let (np, nr) = (nodes.len(), rows.len());
        let mut kkt = vec![vec![0.0; np + nr]; np + nr];
        for (a, &ma) in nodes.iter().enumerate() {
            for (b, &mb) in nodes.iter().enumerate() {
                kkt[a][b] = k[ma - 1][mb - 1];
            }
        }
        for (r, row) in rows.iter().enumerate() {
            for a in 0..np {
                kkt[np + r][a] = row[a];
                kkt[a][np + r] = row[a];
            }
        }
        for p in [e, e + 1] {
            if p == 0 || p == n {
                continue;
            }
            // -a_K(φ_p, w) over the fine cells of K.
            let mut rhs = vec![0.0; np + nr];
            for f in e * s..(e + 1) * s {
                let cm = cell_energy(grid, f, v1);
                let vals = [
                    grid.coarse_hat_at_fine_node(p, f),
                    grid.coarse_hat_at_fine_node(p, f + 1),
                ];
                for (a, node) in [f, f + 1].into_iter().enumerate() {
                    if let Some(i) = nodes.iter().position(|&m| m == node) {
                        rhs[i] -= cm[a][0] * vals[0] + cm[a][1] * vals[1];
                    }
                }
            }
            let q = solve_dense(kkt.clone(), rhs);
            for (i, &m) in nodes.iter().enumerate() {
                basis[m - 1][p - 1] += q[i];
            }
        }
    }
    basis
}

/// Largest nodal deviation of the LOD basis from `reference` columns.
pub fn basis_error(space: &LodSpace, reference: &Dense) -> f64 {
    let mut worst: f64 = 0.0;
    for (m, row) in reference.iter().enumerate() {
        for (phi, r) in space.basis().iter().zip(row) {
            worst = worst.max((phi.at_node(m + 1) - r).abs());
        }
    }
    worst
}

/// Largest deviation of the LOD basis from `φ_p + Q(φ_p)` solved as one dense
/// saddle-point system on the whole fine grid.
pub fn kkt_basis_error(space: &LodSpace) -> f64 {
    let grid = space.grid();
    let nf = grid.fine_dofs();
    let nc = grid.coarse_dofs();
    let k = fine_dense(grid, 1.0, &oracle_v1);
    let mf = fine_mass(grid);
    let hats: Vec<Vec<f64>> = (1..=nc)
        .map(|p| {
            (1..=nf)
                .map(|n| grid.coarse_hat_at_fine_node(p, n))
                .collect()
        })
        .collect();
    let constraints: Vec<Vec<f64>> = hats.iter().map(|hat| mat_vec(&mf, hat)).collect();

    let size = nf + nc;
    let mut kkt = vec![vec![0.0; size]; size];
    for i in 0..nf {
        kkt[i][..nf].copy_from_slice(&k[i]);
    }
    for (p, c) in constraints.iter().enumerate() {
        for n in 0..nf {
            kkt[nf + p][n] = c[n];
            kkt[n][nf + p] = c[n];
        }
    }
    let mut reference = vec![vec![0.0; nc]; nf];
    for (p, hat) in hats.iter().enumerate() {
        let mut rhs: Vec<f64> = mat_vec(&k, hat).iter().map(|v| -v).collect();
        rhs.resize(size, 0.0);
        let q = solve_dense(kkt.clone(), rhs);
        for n in 0..nf {
            reference[n][p] = hat[n] + q[n];
        }
    }
    basis_error(space, &reference)
}

/// Largest deviation of the stored ω from [`dense_omega`].
pub fn omega_error(space: &LodSpace) -> f64 {
    let n = space.dim();
    let reference = dense_omega(space.grid(), &basis_matrix(space));
    let omega = space.omega();
    let mut worst: f64 = 0.0;
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                worst = worst.max((omega.get(k, j, i) - reference[(k * n + j) * n + i]).abs());
            }
        }
    }
    worst
}

/// Dense residual of one modified Crank–Nicolson step.
pub struct ModifiedCnOracle {
    pub mass: Dense,
    pub hamiltonian: Dense,
    pub omega: Vec<f64>,
    pub beta: f64,
}

impl ModifiedCnOracle {
    /// Galerkin matrices recomputed from fine dense matrices and the basis.
    pub fn new(space: &LodSpace) -> Self {
        let grid = space.grid();
        let phi = basis_matrix(space);
        let mass = congruence(&fine_mass(grid), &phi);
        let h = fine_dense(grid, 1.0, &|x| oracle_v1(x) + oracle_v2(x));
        Self {
            mass,
            hamiltonian: congruence(&h, &phi),
            omega: dense_omega(grid, &phi),
            beta: space.split().beta,
        }
    }

    fn load(&self, u: &[C64]) -> Vec<f64> {
        let n = u.len();
        let mut b = vec![0.0; n];
        for k in 0..n {
            for j in 0..n {
                let p = (u[k] * u[j].conj()).re;
                for i in 0..n {
                    b[i] += p * self.omega[(k * n + j) * n + i];
                }
            }
        }
        b
    }

    pub fn residual(&self, tau: f64, un: &[C64], u: &[C64]) -> Vec<C64> {
        let n = u.len();
        let half = C64::new(0.0, 0.5 * tau);
        let (mu, hu) = (mat_cvec(&self.mass, u), mat_cvec(&self.hamiltonian, u));
        let (mn, hn) = (mat_cvec(&self.mass, un), mat_cvec(&self.hamiltonian, un));
        let mut r: Vec<C64> = (0..n)
            .map(|i| mu[i] + half * hu[i] - mn[i] + half * hn[i])
            .collect();
        if self.beta != 0.0 {
            let load: Vec<f64> = self
                .load(un)
                .iter()
                .zip(self.load(u))
                .map(|(a, b)| a + b)
                .collect();
            let rho = solve_dense(self.mass.clone(), load);
            let s: Vec<C64> = un.iter().zip(u).map(|(a, b)| a + b).collect();
            let scale = C64::new(0.0, tau * 0.25 * self.beta);
            for k in 0..n {
                for j in 0..n {
                    let p = s[j] * rho[k];
                    for i in 0..n {
                        r[i] += scale * p * self.omega[(k * n + j) * n + i];
                    }
                }
            }
        }
        r
    }

    pub fn solve(&self, tau: f64, un: &[C64]) -> Vec<C64> {
        let f = |z: &[f64]| to_real(&self.residual(tau, un, &to_complex(z)));
        to_complex(&damped_newton(&f, to_real(un)))
    }
}

/// Dense residual of one classical Crank–Nicolson step in the fine P1 space.
pub struct ClassicalCnOracle {
    pub grid: GridHierarchy,
    pub mass: Dense,
    pub hamiltonian: Dense,
    pub beta: f64,
}

impl ClassicalCnOracle {
    pub fn new(grid: &GridHierarchy, beta: f64) -> Self {
        Self {
            grid: grid.clone(),
            mass: fine_mass(grid),
            hamiltonian: fine_dense(grid, 1.0, &|x| oracle_v1(x) + oracle_v2(x)),
            beta,
        }
    }

    pub fn residual(&self, tau: f64, un: &[C64], u: &[C64]) -> Vec<C64> {
        let n = u.len();
        let half = C64::new(0.0, 0.5 * tau);
        let (mu, hu) = (mat_cvec(&self.mass, u), mat_cvec(&self.hamiltonian, u));
        let (mn, hn) = (mat_cvec(&self.mass, un), mat_cvec(&self.hamiltonian, un));
        let mut r: Vec<C64> = (0..n)
            .map(|i| mu[i] + half * hu[i] - mn[i] + half * hn[i])
            .collect();
        let h = self.grid.fine_h();
        let zero = C64::new(0.0, 0.0);
        let node = |v: &[C64], m: usize| if m == 0 || m > n { zero } else { v[m - 1] };
        let scale = C64::new(0.0, tau * self.beta);
        for e in 0..=n {
            for &(l, w) in &GAUSS3 {
                let a = node(un, e) * (1.0 - l) + node(un, e + 1) * l;
                let b = node(u, e) * (1.0 - l) + node(u, e + 1) * l;
                let g = (a + b) * (0.25 * (a.norm_sqr() + b.norm_sqr()) * w * h) * scale;
                if e >= 1 {
                    r[e - 1] += g * (1.0 - l);
                }
                if e < n {
                    r[e] += g * l;
                }
            }
        }
        r
    }

    pub fn solve(&self, tau: f64, un: &[C64]) -> Vec<C64> {
        let f = |z: &[f64]| to_real(&self.residual(tau, un, &to_complex(z)));
        to_complex(&damped_newton(&f, to_real(un)))
    }
}

/// `‖U_fpi − U_newton‖` for one modified step from the Ritz projection of
/// [`wave`], measured in the LOD mass norm.
pub fn modified_step_error(space: &LodSpace, tau: f64) -> f64 {
    let u0 = space
        .ritz_project(&FeFunction::interpolate(space.grid(), Level::Fine, wave))
        .unwrap();
    let stepper = ModifiedCn::new(space, tau, SolverOptions::default()).unwrap();
    let next = stepper.step(&StepperState::new(u0.clone())).unwrap();
    let oracle = ModifiedCnOracle::new(space);
    let reference = oracle.solve(tau, &u0);
    l2_distance(&oracle.mass, &next.coeffs, &reference)
}

/// Same as [`modified_step_error`] for the classical scheme on the fine grid,
/// with fixed-point and Newton iteration.
pub fn classical_step_errors(grid: &GridHierarchy, beta: f64, tau: f64) -> (f64, f64) {
    let fe = FeSpace::new(grid, &oracle_split(beta)).unwrap();
    let u0 = FeFunction::interpolate(grid, Level::Fine, wave).into_coeffs();
    let oracle = ClassicalCnOracle::new(grid, beta);
    let reference = oracle.solve(tau, &u0);
    let err = |newton: bool| {
        let opts = SolverOptions {
            newton,
            ..SolverOptions::default()
        };
        let s = ClassicalCn::new(&fe, tau, opts).unwrap();
        let next = s.step(&StepperState::new(u0.clone())).unwrap();
        l2_distance(&oracle.mass, &next.coeffs, &reference)
    };
    (err(false), err(true))
}
