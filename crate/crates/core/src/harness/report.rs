//! Run reports and their CSV files.
//!
//! `<name>.csv` holds one row per recorded state with the fixed columns of
//! [`COLUMNS`], preceded by `#` comment lines carrying the effective
//! configuration. `<name>_summary.csv` lists derived quantities (observed
//! orders, ratios, speedups) as `name,value` pairs, and every density
//! snapshot goes to its own two-column `x,density` file.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::invariants::InvariantRecord;

use super::config::ExperimentConfig;
use super::HarnessError;

pub const COLUMNS: [&str; 14] = [
    "experiment",
    "H",
    "ell",
    "tau",
    "t",
    "mass",
    "energy",
    "energy_lod",
    "momentum",
    "xc",
    "err_l2",
    "err_h1",
    "iters",
    "wall_ms",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportRow {
    pub experiment: String,
    pub coarse_h: Option<f64>,
    pub ell: Option<usize>,
    pub tau: Option<f64>,
    pub t: Option<f64>,
    pub mass: Option<f64>,
    pub energy: Option<f64>,
    pub energy_lod: Option<f64>,
    pub momentum: Option<f64>,
    pub xc: Option<f64>,
    pub err_l2: Option<f64>,
    pub err_h1: Option<f64>,
    pub iters: Option<usize>,
    pub wall_ms: Option<f64>,
}

impl ReportRow {
    pub fn new(experiment: &str) -> Self {
        Self {
            experiment: experiment.to_string(),
            ..Self::default()
        }
    }

    pub fn with_invariants(mut self, r: &InvariantRecord) -> Self {
        self.t = Some(r.t);
        self.mass = Some(r.mass);
        self.energy = Some(r.energy);
        self.energy_lod = r.energy_lod;
        self.momentum = Some(r.momentum);
        self.xc = Some(r.center_of_mass);
        self
    }

    fn fields(&self) -> Vec<String> {
        let f = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        let u = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
        vec![
            self.experiment.clone(),
            f(self.coarse_h),
            u(self.ell),
            f(self.tau),
            f(self.t),
            f(self.mass),
            f(self.energy),
            f(self.energy_lod),
            f(self.momentum),
            f(self.xc),
            f(self.err_l2),
            f(self.err_h1),
            u(self.iters),
            f(self.wall_ms),
        ]
    }
}

/// Wall-clock milliseconds per phase, summed over all runs of a report.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTimings {
    pub basis_ms: f64,
    pub omega_ms: f64,
    pub factorization_ms: f64,
    pub stepping_ms: f64,
}

/// Outcome of one built-in check of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// `|u|²` at the fine nodes at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub label: String,
    pub t: f64,
    pub x: Vec<f64>,
    pub density: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub name: String,
    pub config: ExperimentConfig,
    pub rows: Vec<ReportRow>,
    pub summary: Vec<(String, f64)>,
    /// Iteration count of every time step, in run order.
    pub iterations: Vec<usize>,
    pub timings: PhaseTimings,
    pub checks: Vec<Check>,
    pub snapshots: Vec<Snapshot>,
    /// Sweep points that failed without stopping the sweep.
    pub failures: Vec<String>,
    /// Some failure was a time step whose iteration did not converge.
    pub non_convergence: bool,
}

impl RunReport {
    pub fn new(name: &str, config: &ExperimentConfig) -> Self {
        Self {
            name: name.to_string(),
            config: config.clone(),
            rows: Vec::new(),
            summary: Vec::new(),
            iterations: Vec::new(),
            timings: PhaseTimings::default(),
            checks: Vec::new(),
            snapshots: Vec::new(),
            failures: Vec::new(),
            non_convergence: false,
        }
    }

    pub fn summary_value(&self, name: &str) -> Option<f64> {
        self.summary
            .iter()
            .find(|(n, _)| n == name)
            .map(|&(_, v)| v)
    }

    pub fn push_summary(&mut self, name: impl Into<String>, value: f64) {
        self.summary.push((name.into(), value));
    }

    pub fn check(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(Check {
            name: name.to_string(),
            passed,
            detail,
        });
    }

    pub fn all_checks_pass(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Writes the row, summary and snapshot files into `dir` and returns
    /// their paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();

        let path = dir.join(format!("{}.csv", self.name));
        let mut file = BufWriter::new(File::create(&path)?);
        for line in self.config.to_toml().lines() {
            writeln!(file, "# {line}")?;
        }
        let mut w = csv::Writer::from_writer(file);
        w.write_record(COLUMNS)?;
        for row in &self.rows {
            w.write_record(row.fields())?;
        }
        w.flush()?;
        written.push(path);

        let path = dir.join(format!("{}_summary.csv", self.name));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["name", "value"])?;
        for (name, value) in &self.summary {
            w.write_record([name.clone(), format!("{value:e}")])?;
        }
        let t = &self.timings;
        for (name, v) in [
            ("basis_ms", t.basis_ms),
            ("omega_ms", t.omega_ms),
            ("factorization_ms", t.factorization_ms),
            ("stepping_ms", t.stepping_ms),
        ] {
            w.write_record([name.to_string(), format!("{v:e}")])?;
        }
        for c in &self.checks {
            w.write_record([format!("check:{}", c.name), u8::from(c.passed).to_string()])?;
        }
        w.flush()?;
        written.push(path);

        for s in &self.snapshots {
            let path = dir.join(format!("{}_density_{}_t{:.3}.csv", self.name, s.label, s.t));
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(["x", "density"])?;
            for (x, d) in s.x.iter().zip(&s.density) {
                w.write_record([format!("{x:e}"), format!("{d:e}")])?;
            }
            w.flush()?;
            written.push(path);
        }
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::Experiment;

    #[test]
    fn csv_has_config_header_and_empty_fields() {
        let cfg = ExperimentConfig::defaults(Experiment::Invariants);
        let mut r = RunReport::new("invariants", &cfg);
        let mut row = ReportRow::new("invariants");
        row.coarse_h = Some(1.25);
        row.iters = Some(4);
        r.rows.push(row);
        r.push_summary("order_energy", 5.9);
        let dir = tempfile::tempdir().unwrap();
        let files = r.write(dir.path()).unwrap();
        let text = fs::read_to_string(&files[0]).unwrap();
        assert!(text.starts_with("# seed = 42"));
        let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(body[0], COLUMNS.join(","));
        assert_eq!(body[1], "invariants,1.25e0,,,,,,,,,,,4,");
        let summary = fs::read_to_string(&files[1]).unwrap();
        assert!(summary.contains("order_energy,5.9e0"));
    }
}
