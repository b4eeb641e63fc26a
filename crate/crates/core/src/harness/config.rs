//! Experiment configuration.
//!
//! Configs are TOML files with the sections `[problem]`, `[mesh]`, `[time]`,
//! `[solver]`, `[lod]`, `[output]` and one section per experiment. Every
//! experiment has its own defaults; a user file only needs the keys it
//! changes and is merged key by key onto them.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::benchmark;
use crate::dynamics::SolverOptions;
use crate::linalg::C64;
use crate::mesh::{FeFunction, GridHierarchy, Level};
use crate::potential::{Potential, PotentialSplit};

use super::expr::Expression;
use super::HarnessError;

/// Largest fine exponent accepted, `h = (b - a) / 2^26`.
pub const MAX_FINE_EXPONENT: u32 = 26;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Experiment {
    Invariants,
    Decay,
    Converge,
    Drift,
    Cpu,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::Invariants,
        Experiment::Decay,
        Experiment::Converge,
        Experiment::Drift,
        Experiment::Cpu,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Invariants => "invariants",
            Experiment::Decay => "decay",
            Experiment::Converge => "converge",
            Experiment::Drift => "drift",
            Experiment::Cpu => "cpu",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Benchmark,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub kind: ProblemKind,
    pub domain: [f64; 2],
    pub beta: f64,
    /// `V₁`, the part of the potential built into the LOD basis.
    pub v1: String,
    pub v2: String,
    /// Period of `V₁`; lets the basis build reuse translated correctors.
    pub v1_period: Option<f64>,
    /// Initial value of a custom problem, real and imaginary part.
    pub initial_re: String,
    pub initial_im: String,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            kind: ProblemKind::Benchmark,
            domain: [benchmark::DOMAIN.0, benchmark::DOMAIN.1],
            beta: benchmark::BETA,
            v1: "0".into(),
            v2: "0".into(),
            v1_period: None,
            initial_re: String::new(),
            initial_im: "0".into(),
        }
    }
}

/// `"auto"` for `ceil(2 |log₂ H|)` layers, or explicit layer counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EllRepr", into = "EllRepr")]
pub enum EllSpec {
    Auto,
    Layers(Vec<usize>),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum EllRepr {
    Word(String),
    One(usize),
    List(Vec<usize>),
}

impl TryFrom<EllRepr> for EllSpec {
    type Error = String;
    fn try_from(r: EllRepr) -> Result<Self, String> {
        match r {
            EllRepr::Word(w) if w == "auto" => Ok(EllSpec::Auto),
            EllRepr::Word(w) => Err(format!("ell must be \"auto\" or a list, got {w:?}")),
            EllRepr::One(l) => Ok(EllSpec::Layers(vec![l])),
            EllRepr::List(v) => Ok(EllSpec::Layers(v)),
        }
    }
}

impl From<EllSpec> for EllRepr {
    fn from(e: EllSpec) -> Self {
        match e {
            EllSpec::Auto => EllRepr::Word("auto".into()),
            EllSpec::Layers(v) => EllRepr::List(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    /// `H = (b - a) / 2^k` for every listed `k`.
    pub coarse_exponents: Vec<u32>,
    /// `h = (b - a) / 2^fine_exponent`, shared by all coarse levels.
    pub fine_exponent: u32,
    pub ell: EllSpec,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self {
            coarse_exponents: vec![7],
            fine_exponent: 13,
            ell: EllSpec::Auto,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeConfig {
    pub tau: Option<f64>,
    pub steps: Option<usize>,
    pub final_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Newton iteration for the fine-grid classical scheme.
    pub newton: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let o = SolverOptions::default();
        Self {
            tolerance: o.tolerance,
            max_iterations: o.max_iterations,
            newton: o.newton,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LodConfig {
    /// Absolute drop tolerance for ω entries.
    pub omega_tolerance: f64,
    /// Directory for cached bases; no caching when absent.
    pub cache_dir: Option<PathBuf>,
}

impl Default for LodConfig {
    fn default() -> Self {
        Self {
            omega_tolerance: 1e-12,
            cache_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("output"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergeConfig {
    /// Step sizes of the τ-sweep, decreasing by a constant factor.
    pub tau_sweep: Vec<f64>,
    pub tau_sweep_coarse_exponent: u32,
}

impl Default for ConvergeConfig {
    fn default() -> Self {
        Self {
            tau_sweep: vec![2e-3, 1e-3, 5e-4],
            tau_sweep_coarse_exponent: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftConfig {
    /// Grid of the classical CN-FEM run, `h = (b - a) / 2^fe_exponent`.
    pub fe_exponent: u32,
    /// Time between recorded peak positions.
    pub sample_interval: f64,
    /// Time between density snapshots; none when zero.
    pub snapshot_interval: f64,
    /// Density maxima below this value are not counted as peaks.
    pub peak_threshold: f64,
    /// Two peaks further apart than this count as separated solitons.
    pub separation: f64,
}

impl Default for DriftConfig {
    fn default() -> Self {
        Self {
            fe_exponent: 9,
            sample_interval: 0.25,
            snapshot_interval: 5.0,
            peak_threshold: 0.5,
            separation: 2.0,
        }
    }
}

/// Fine grid of the CN-FEM runs in the CPU comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FeRepr", into = "FeRepr")]
pub enum FeChoice {
    /// Coarsest grid whose interpolant energy error does not exceed that of
    /// the LOD initial value.
    Matched,
    Exponent(u32),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum FeRepr {
    Word(String),
    Exponent(u32),
}

impl TryFrom<FeRepr> for FeChoice {
    type Error = String;
    fn try_from(r: FeRepr) -> Result<Self, String> {
        match r {
            FeRepr::Word(w) if w == "matched" => Ok(FeChoice::Matched),
            FeRepr::Word(w) => Err(format!(
                "fe_exponent must be \"matched\" or a number, got {w:?}"
            )),
            FeRepr::Exponent(e) => Ok(FeChoice::Exponent(e)),
        }
    }
}

impl From<FeChoice> for FeRepr {
    fn from(c: FeChoice) -> Self {
        match c {
            FeChoice::Matched => FeRepr::Word("matched".into()),
            FeChoice::Exponent(e) => FeRepr::Exponent(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CpuConfig {
    pub fe_exponent: FeChoice,
    /// Coarse exponents of the iteration-count sweep.
    pub iteration_exponents: Vec<u32>,
    /// Timed steps per scheme.
    pub steps: usize,
    /// Also time the Newton variant of CN-FEM.
    pub newton: bool,
}

impl Default for CpuConfig {
    fn default() -> Self {
        Self {
            fe_exponent: FeChoice::Matched,
            iteration_exponents: vec![8, 9, 10],
            steps: 20,
            newton: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seed for randomized inputs; the experiments themselves are
    /// deterministic.
    pub seed: u64,
    pub problem: ProblemConfig,
    pub mesh: MeshConfig,
    pub time: TimeConfig,
    pub solver: SolverConfig,
    pub lod: LodConfig,
    pub output: OutputConfig,
    pub converge: ConvergeConfig,
    pub drift: DriftConfig,
    pub cpu: CpuConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            problem: ProblemConfig::default(),
            mesh: MeshConfig::default(),
            time: TimeConfig::default(),
            solver: SolverConfig::default(),
            lod: LodConfig::default(),
            output: OutputConfig::default(),
            converge: ConvergeConfig::default(),
            drift: DriftConfig::default(),
            cpu: CpuConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Desk-scale defaults of `experiment`.
    pub fn defaults(experiment: Experiment) -> Self {
        let mut c = Self::default();
        match experiment {
            Experiment::Invariants => {
                c.mesh.coarse_exponents = vec![5, 6, 7, 8];
            }
            Experiment::Decay => {
                c.mesh.coarse_exponents = vec![5, 6, 7];
                c.mesh.ell = EllSpec::Layers((1..=12).collect());
            }
            Experiment::Converge => {
                c.mesh.coarse_exponents = vec![8, 9, 10];
                c.mesh.fine_exponent = 16;
                c.time.tau = Some(1e-4);
                c.time.final_time = Some(0.5);
            }
            Experiment::Drift => {
                c.mesh.coarse_exponents = vec![9];
                c.time.tau = Some(1e-3);
                c.time.final_time = Some(20.0);
            }
            Experiment::Cpu => {
                c.mesh.coarse_exponents = vec![10];
                c.mesh.fine_exponent = 18;
                c.time.tau = Some(1e-3);
            }
        }
        c
    }

    /// Defaults of `experiment` with the TOML document `text` merged on top.
    pub fn from_toml(experiment: Experiment, text: &str) -> Result<Self, HarnessError> {
        let user: toml::Table =
            toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        Self::merged(experiment, user)
    }

    pub fn merged(experiment: Experiment, user: toml::Table) -> Result<Self, HarnessError> {
        let mut base = toml::Value::try_from(Self::defaults(experiment))
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        merge(&mut base, toml::Value::Table(user));
        let cfg: Self = base
            .try_into()
            .map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// The effective configuration as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        let [a, b] = self.problem.domain;
        if !(a.is_finite() && b.is_finite() && a < b) {
            return bad(format!("domain [{a}, {b}] is not an interval"));
        }
        if !self.problem.beta.is_finite() {
            return bad("beta must be finite".into());
        }
        if self.problem.kind == ProblemKind::Benchmark {
            let standard = ProblemConfig::default();
            if self.problem.domain != standard.domain
                || self.problem.beta != standard.beta
                || !self.problem_expressions()?.0.is_zero_literal()
                || !self.problem_expressions()?.1.is_zero_literal()
            {
                return bad("the benchmark fixes domain [-20, 20], beta = -2 and V = 0; use kind = \"custom\"".into());
            }
        } else {
            if self.problem.initial_re.trim().is_empty() {
                return bad("a custom problem needs problem.initial_re".into());
            }
            self.initial_expressions()?;
        }
        if let Some(p) = self.problem.v1_period {
            if !(p > 0.0) {
                return bad(format!("v1_period {p} must be positive"));
            }
        }
        let fine = self.mesh.fine_exponent;
        if fine > MAX_FINE_EXPONENT {
            return bad(format!("fine exponent {fine} exceeds {MAX_FINE_EXPONENT}"));
        }
        if self.mesh.coarse_exponents.is_empty() {
            return bad("no coarse exponents".into());
        }
        for &k in &self.mesh.coarse_exponents {
            if k == 0 || k >= fine {
                return bad(format!("coarse exponent {k} must lie in 1..{fine}"));
            }
        }
        if let EllSpec::Layers(l) = &self.mesh.ell {
            if l.is_empty() || l.contains(&0) {
                return bad("ell needs at least one entry and every entry >= 1".into());
            }
        }
        self.time_steps()?;
        self.solver_options()
            .validate()
            .or_else(|e| bad(e.to_string()))?;
        if !(self.lod.omega_tolerance >= 0.0) {
            return bad("omega_tolerance must be nonnegative".into());
        }
        if self
            .converge
            .tau_sweep
            .iter()
            .any(|&t| !(t > 0.0 && t.is_finite()))
        {
            return bad("tau_sweep entries must be positive".into());
        }
        let d = &self.drift;
        if d.fe_exponent == 0 || d.fe_exponent > MAX_FINE_EXPONENT {
            return bad(format!("drift.fe_exponent {} out of range", d.fe_exponent));
        }
        if !(d.sample_interval > 0.0) || !(d.snapshot_interval >= 0.0) || !(d.separation > 0.0) {
            return bad("drift intervals and separation must be positive".into());
        }
        if let FeChoice::Exponent(e) = self.cpu.fe_exponent {
            if e == 0 || e > MAX_FINE_EXPONENT {
                return bad(format!("cpu.fe_exponent {e} out of range"));
            }
        }
        if self
            .cpu
            .iteration_exponents
            .iter()
            .any(|&k| k == 0 || k >= fine)
        {
            return bad("cpu.iteration_exponents must lie below the fine exponent".into());
        }
        Ok(())
    }

    /// `(τ, N)` from the `[time]` section, or `None` when no step size can
    /// be derived. Fails when `T`, `N` and `τ` are all given and `T ≠ Nτ`.
    pub fn time_steps(&self) -> Result<Option<(f64, usize)>, HarnessError> {
        let TimeConfig {
            tau,
            steps,
            final_time,
        } = self.time;
        let close =
            |t: f64, n: usize, tau: f64| (n as f64 * tau - t).abs() <= 1e-9 * t.abs().max(1.0);
        if let Some(t) = tau {
            if !(t > 0.0 && t.is_finite()) {
                return Err(HarnessError::Config(format!("tau {t} must be positive")));
            }
        }
        if let Some(t) = final_time {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(HarnessError::Config(format!(
                    "final_time {t} must be nonnegative"
                )));
            }
        }
        match (tau, steps, final_time) {
            (Some(tau), Some(n), Some(t)) => {
                if close(t, n, tau) {
                    Ok(Some((tau, n)))
                } else {
                    Err(HarnessError::Config(format!(
                        "final_time {t} differs from steps * tau = {}",
                        n as f64 * tau
                    )))
                }
            }
            (Some(tau), Some(n), None) => Ok(Some((tau, n))),
            (Some(tau), None, Some(t)) => {
                let n = (t / tau).round() as usize;
                if close(t, n, tau) {
                    Ok(Some((tau, n)))
                } else {
                    Err(HarnessError::Config(format!(
                        "final_time {t} is not a multiple of tau {tau}"
                    )))
                }
            }
            (None, Some(n), Some(t)) if n > 0 => Ok(Some((t / n as f64, n))),
            _ => Ok(None),
        }
    }

    /// Like [`ExperimentConfig::time_steps`] but required.
    pub fn require_time_steps(&self) -> Result<(f64, usize), HarnessError> {
        self.time_steps()?.ok_or_else(|| {
            HarnessError::Config("[time] needs two of tau, steps, final_time".into())
        })
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tolerance: self.solver.tolerance,
            max_iterations: self.solver.max_iterations,
            newton: self.solver.newton,
        }
    }

    fn problem_expressions(&self) -> Result<(Expression, Expression), HarnessError> {
        Ok((
            Expression::parse(&self.problem.v1)?,
            Expression::parse(&self.problem.v2)?,
        ))
    }

    fn initial_expressions(&self) -> Result<(Expression, Expression), HarnessError> {
        Ok((
            Expression::parse(&self.problem.initial_re)?,
            Expression::parse(&self.problem.initial_im)?,
        ))
    }

    pub fn is_benchmark(&self) -> bool {
        self.problem.kind == ProblemKind::Benchmark
    }

    pub fn split(&self) -> Result<PotentialSplit, HarnessError> {
        if self.is_benchmark() {
            return Ok(benchmark::split());
        }
        let (v1, v2) = self.problem_expressions()?;
        let to_potential = |e: Expression, period: Option<f64>| {
            if e.is_zero_literal() {
                Potential::Zero
            } else {
                match period {
                    Some(p) => Potential::periodic(move |x| e.eval(x), p),
                    None => Potential::function(move |x| e.eval(x)),
                }
            }
        };
        Ok(PotentialSplit {
            v1: to_potential(v1, self.problem.v1_period),
            v2: to_potential(v2, None),
            beta: self.problem.beta,
        })
    }

    /// Grid with `H = (b - a) / 2^coarse_exp` and the configured fine mesh.
    pub fn grid(&self, coarse_exp: u32) -> Result<GridHierarchy, HarnessError> {
        self.grid_with(coarse_exp, self.mesh.fine_exponent)
    }

    pub fn grid_with(&self, coarse_exp: u32, fine_exp: u32) -> Result<GridHierarchy, HarnessError> {
        let [a, b] = self.problem.domain;
        Ok(GridHierarchy::dyadic(a, b, coarse_exp, fine_exp)?)
    }

    /// Fine nodal interpolant of the initial value.
    pub fn initial_value(&self, grid: &GridHierarchy) -> Result<FeFunction, HarnessError> {
        if self.is_benchmark() {
            return Ok(benchmark::initial_value(grid));
        }
        let (re, im) = self.initial_expressions()?;
        Ok(FeFunction::interpolate(grid, Level::Fine, |x| {
            C64::new(re.eval(x), im.eval(x))
        }))
    }

    /// Layer counts for the coarse exponent at position `index`: `auto`
    /// gives one, a list with one entry per coarse exponent gives its entry,
    /// any other list applies in full to every exponent.
    pub fn layers_for(&self, index: usize, coarse_h: f64) -> Vec<usize> {
        match &self.mesh.ell {
            EllSpec::Auto => vec![crate::lod::default_layers(coarse_h)],
            EllSpec::Layers(l) if l.len() == self.mesh.coarse_exponents.len() && l.len() > 1 => {
                vec![l[index]]
            }
            EllSpec::Layers(l) => l.clone(),
        }
    }
}

/// Recursively merges `over` into `base`; tables merge key by key, any
/// other value replaces.
fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
