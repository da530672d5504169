//! Experiment configuration files.
//!
//! Each subcommand reads one TOML file whose keys are the fields of its
//! config struct below. Unknown keys are rejected, and every field has a
//! default, so an empty file (or no file) runs the default experiment.
//! Output path and worker count may go in an optional `[run]` table.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nfl_core::continuum_checks::QuadratureSpec;
use nfl_core::finite_enum::ScanMode;
use nfl_core::mc_lab::ZOO_NAMES;
use nfl_core::process_models::{ProcessKind, ProcessSpec};
use nfl_core::trace_core::PerformanceMeasure;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Run options that may appear in a config file as well as on the command
/// line. They are not echoed in reports, since they do not change results.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

/// Command-line overrides; a flag wins over the file value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub alpha: Option<f64>,
}

pub trait Experiment: DeserializeOwned + Serialize + Default {
    /// Applies flag overrides; flags that have no meaning here are errors.
    fn apply(&mut self, o: &Overrides) -> Result<(), CliError>;
    fn validate(&self) -> Result<(), CliError>;
    fn seed(&self) -> u64;
}

/// Reads `path` (or defaults), applies overrides and validates.
pub fn load<C: Experiment>(path: Option<&Path>, o: &Overrides) -> Result<(C, RunOptions), CliError> {
    let (mut config, run) = match path {
        None => (C::default(), RunOptions::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            let bad = |e: toml::de::Error| CliError::Config(format!("{}: {e}", p.display()));
            let mut table: toml::Table = toml::from_str(&text).map_err(bad)?;
            let run = match table.remove("run") {
                Some(v) => RunOptions::deserialize(v).map_err(bad)?,
                None => RunOptions::default(),
            };
            (C::deserialize(toml::Value::Table(table)).map_err(bad)?, run)
        }
    };
    config.apply(o)?;
    config.validate()?;
    Ok((config, run))
}

fn no_flag<T>(flag: &str, value: &Option<T>, command: &str) -> Result<(), CliError> {
    if value.is_some() {
        return Err(CliError::Config(format!("--{flag} does not apply to {command}")));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<(), CliError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(CliError::Config(format!("alpha {alpha} must lie in (0, 1)")))
    }
}

fn check_samples(samples: usize, min: usize) -> Result<(), CliError> {
    if samples < min {
        return Err(CliError::Config(format!("samples must be at least {min}")));
    }
    Ok(())
}

fn check_pairs(pairs: &[[f64; 2]], what: &str) -> Result<(), CliError> {
    for p in pairs {
        if p.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(CliError::Config(format!("{what} pair {p:?} leaves [0, 1]")));
        }
    }
    Ok(())
}

/// Measure on `Y^X` for the exact experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FiniteMeasureConfig {
    UniformOnAll,
    /// Uniform on the listed function indices (mixed radix, first point most
    /// significant).
    UniformOnSubset { functions: Vec<u64> },
    /// Integer weights per orbit, keyed by sorted value multiset such as
    /// `"0,1,1"`; when `weights` is absent, weights in `0..=9` are drawn from
    /// `seed`.
    OrbitUniform {
        #[serde(default)]
        weights: Option<BTreeMap<String, u64>>,
        #[serde(default)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyWmConfig {
    pub seed: u64,
    pub points: usize,
    pub values: usize,
    /// Defaults to `points`.
    pub steps: Option<usize>,
    pub measures: Vec<FiniteMeasureConfig>,
    pub max_points: usize,
    pub max_values: usize,
}

impl Default for VerifyWmConfig {
    fn default() -> Self {
        VerifyWmConfig {
            seed: 0,
            points: 3,
            values: 2,
            steps: None,
            measures: vec![FiniteMeasureConfig::UniformOnAll],
            max_points: 4,
            max_values: 3,
        }
    }
}

impl Experiment for VerifyWmConfig {
    fn apply(&mut self, o: &Overrides) -> Result<(), CliError> {
        no_flag("samples", &o.samples, "verify-wm")?;
        no_flag("alpha", &o.alpha, "verify-wm")?;
        if let Some(s) = o.seed {
            self.seed = s;
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.points == 0 || self.values == 0 {
            return Err(CliError::Config("points and values must be positive".into()));
        }
        if self.measures.is_empty() {
            return Err(CliError::Config("need at least one measure".into()));
        }
        Ok(())
    }

    fn seed(&self) -> u64 {
        self.seed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CupScanConfig {
    pub seed: u64,
    pub points: usize,
    pub values: usize,
    pub steps: Option<usize>,
    /// `auto` scans every subset when `|Y|^|X| <= 16`.
    pub mode: ScanModeConfig,
    pub samples: usize,
    /// Function index lists, used by `explicit` mode.
    pub subsets: Vec<Vec<u64>>,
    pub max_points: usize,
    pub max_values: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScanModeConfig {
    Auto,
    Exhaustive,
    Sampled,
    Explicit,
}

impl Default for CupScanConfig {
    fn default() -> Self {
        CupScanConfig {
            seed: 0,
            points: 2,
            values: 2,
            steps: None,
            mode: ScanModeConfig::Auto,
            samples: 200,
            subsets: Vec::new(),
            max_points: 4,
            max_values: 3,
        }
    }
}

impl CupScanConfig {
    pub fn scan_mode(&self) -> ScanMode {
        match self.mode {
            ScanModeConfig::Auto => ScanMode::Auto {
                samples: self.samples,
                seed: self.seed,
            },
            ScanModeConfig::Exhaustive => ScanMode::Exhaustive,
            ScanModeConfig::Sampled => ScanMode::Sampled {
                samples: self.samples,
                seed: self.seed,
            },
            ScanModeConfig::Explicit => ScanMode::Explicit {
                subsets: self.subsets.clone(),
            },
        }
    }
}

impl Experiment for CupScanConfig {
    fn apply(&mut self, o: &Overrides) -> Result<(), CliError> {
        no_flag("alpha", &o.alpha, "cup-scan")?;
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(n) = o.samples {
            self.samples = n;
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.points == 0 || self.values == 0 {
            return Err(CliError::Config("points and values must be positive".into()));
        }
        match self.mode {
            ScanModeConfig::Explicit if self.subsets.is_empty() => {
                Err(CliError::Config("explicit mode needs `subsets`".into()))
            }
            ScanModeConfig::Explicit => Ok(()),
            _ if !self.subsets.is_empty() => Err(CliError::Config("`subsets` needs mode = \"explicit\"".into())),
            _ => Ok(()),
        }
    }

    fn seed(&self) -> u64 {
        self.seed
    }
}

/// A measure given by name (`min`, `max`, `identity`) or as a table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MeasureConfig {
    Name(String),
    Full(PerformanceMeasure),
}

impl MeasureConfig {
    pub fn resolve(&self) -> Result<PerformanceMeasure, CliError> {
        match self {
            MeasureConfig::Full(m) => Ok(*m),
            MeasureConfig::Name(n) => match n.as_str() {
                "min" => Ok(PerformanceMeasure::Min),
                "max" => Ok(PerformanceMeasure::Max),
                "identity" => Ok(PerformanceMeasure::IdentityVector),
                other => Err(CliError::Config(format!(
                    "unknown measure `{other}` (use min, max, identity or a table)"
                ))),
            },
        }
    }
}

fn zoo() -> Vec<String> {
    ZOO_NAMES.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NecessaryConfig {
    pub seed: u64,
    pub samples: usize,
    pub alpha: f64,
    pub grid_points: usize,
    pub process: ProcessSpec,
    /// Point pairs `[t, s]` whose marginals are compared.
    pub marginal_pairs: Vec<[f64; 2]>,
    /// Point pairs whose covariances must agree.
    pub covariance_pairs: Vec<[f64; 2]>,
    pub covariance_tolerance: f64,
    /// Rank-based policy for the standardization check; empty skips it.
    pub standardization_policy: String,
    pub standardization_steps: usize,
}

impl Default for NecessaryConfig {
    fn default() -> Self {
        NecessaryConfig {
            seed: 0,
            samples: 10_000,
            alpha: 0.01,
            grid_points: 101,
            process: ProcessSpec::standard(ProcessKind::Equicorrelated { rho: 0.5 }),
            marginal_pairs: vec![[0.1, 1.0]],
            covariance_pairs: vec![[0.0, 0.1], [0.0, 0.9]],
            covariance_tolerance: 0.0,
            standardization_policy: "bisection".into(),
            standardization_steps: 5,
        }
    }
}

impl NecessaryConfig {
    fn validate_fields(&self) -> Result<(), CliError> {
        check_alpha(self.alpha)?;
        check_samples(self.samples, 3)?;
        if self.grid_points < 2 {
            return Err(CliError::Config("grid needs at least two points".into()));
        }
        check_pairs(&self.marginal_pairs, "marginal")?;
        check_pairs(&self.covariance_pairs, "covariance")?;
        if !(self.covariance_tolerance >= 0.0) {
            return Err(CliError::Config("covariance tolerance must be non-negative".into()));
        }
        self.process.validate_for(self.grid_points)?;
        Ok(())
    }
}

impl Experiment for NecessaryConfig {
    fn apply(&mut self, o: &Overrides) -> Result<(), CliError> {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(n) = o.samples {
            self.samples = n;
        }
        if let Some(a) = o.alpha {
            self.alpha = a;
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), CliError> {
        self.validate_fields()
    }

    fn seed(&self) -> u64 {
        self.seed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McNflConfig {
    pub seed: u64,
    pub samples: usize,
    pub alpha: f64,
    pub grid_points: usize,
    pub steps: usize,
    pub process: ProcessSpec,
    /// Zoo names, policy descriptors, or `at(t)` for the single grid point `t`.
    pub policies: Vec<String>,
    pub measures: Vec<MeasureConfig>,
    /// Necessary-condition checks run alongside; empty lists skip them.
    pub marginal_pairs: Vec<[f64; 2]>,
    pub covariance_pairs: Vec<[f64; 2]>,
    pub covariance_tolerance: f64,
}

impl Default for McNflConfig {
    fn default() -> Self {
        McNflConfig {
            seed: 0,
            samples: 10_000,
            alpha: 0.01,
            grid_points: 101,
            steps: 5,
            process: ProcessSpec::standard(ProcessKind::Equicorrelated { rho: 0.5 }),
            policies: zoo(),
            measures: vec![MeasureConfig::Name("min".into())],
            marginal_pairs: Vec::new(),
            covariance_pairs: Vec::new(),
            covariance_tolerance: 0.0,
        }
    }
}

impl Experiment for McNflConfig {
    fn apply(&mut self, o: &Overrides) -> Result<(), CliError> {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(n) = o.samples {
            self.samples = n;
        }
        if let Some(a) = o.alpha {
            self.alpha = a;
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), CliError> {
        check_alpha(self.alpha)?;
        check_samples(self.samples, 3)?;
        if self.grid_points < 2 {
            return Err(CliError::Config("grid needs at least two points".into()));
        }
        if self.steps == 0 || self.steps > self.grid_points {
            return Err(CliError::Config(format!(
                "steps must lie in 1..={} for this grid",
                self.grid_points
            )));
        }
        if self.policies.len() < 2 {
            return Err(CliError::Config("need at least two policies".into()));
        }
        if self.measures.is_empty() {
            return Err(CliError::Config("need at least one measure".into()));
        }
        for m in &self.measures {
            m.resolve()?;
        }
        check_pairs(&self.marginal_pairs, "marginal")?;
        check_pairs(&self.covariance_pairs, "covariance")?;
        self.process.validate_for(self.grid_points)?;
        Ok(())
    }

    fn seed(&self) -> u64 {
        self.seed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    pub meshes: Vec<f64>,
    pub samples: usize,
    pub t: f64,
    pub process: ProcessSpec,
    /// Also runs the constant process as a control.
    pub control: bool,
}

impl Default for MeshConfig {
    fn default() -> Self {
        MeshConfig {
            meshes: vec![1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0],
            samples: 10_000,
            t: 1.0,
            process: ProcessSpec::standard(ProcessKind::Iid),
            control: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinuumConfig {
    pub seed: u64,
    pub samples: usize,
    /// Must be stationary with zero mean and unit variance.
    pub process: ProcessSpec,
    pub quadrature: QuadratureSpec,
    /// Shifts for the identity check; empty skips it.
    pub identity_t: Vec<f64>,
    /// Strictly decreasing shifts for the K probe; empty skips it.
    pub k_probe_t: Vec<f64>,
    /// Mesh refinement study; absent skips it.
    pub mesh: Option<MeshConfig>,
}

impl Default for ContinuumConfig {
    fn default() -> Self {
        ContinuumConfig {
            seed: 0,
            samples: 20_000,
            process: ProcessSpec::standard(ProcessKind::OrnsteinUhlenbeck { theta: 1.0 }),
            quadrature: QuadratureSpec::default(),
            identity_t: vec![0.25, 0.5, 1.0],
            k_probe_t: vec![0.4, 0.2, 0.1, 0.05],
            mesh: None,
        }
    }
}

impl Experiment for ContinuumConfig {
    fn apply(&mut self, o: &Overrides) -> Result<(), CliError> {
        no_flag("alpha", &o.alpha, "continuum")?;
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(n) = o.samples {
            self.samples = n;
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), CliError> {
        check_samples(self.samples, 2)?;
        self.quadrature.validate()?;
        if self.identity_t.is_empty() && self.k_probe_t.is_empty() && self.mesh.is_none() {
            return Err(CliError::Config("nothing to run: set identity_t, k_probe_t or [mesh]".into()));
        }
        if self.identity_t.iter().chain(&self.k_probe_t).any(|t| !(0.0..=2.0).contains(t)) {
            return Err(CliError::Config("shifts must lie in [0, 2]".into()));
        }
        if self.k_probe_t.windows(2).any(|w| w[1] >= w[0]) || self.k_probe_t.iter().any(|&t| t <= 0.0) {
            return Err(CliError::Config("k_probe_t must be positive and strictly decreasing".into()));
        }
        if self.k_probe_t.len() == 1 {
            return Err(CliError::Config("k_probe_t needs at least two shifts".into()));
        }
        if let Some(m) = &self.mesh {
            check_samples(m.samples, 1000)?;
            if m.meshes.len() < 2 || m.meshes.windows(2).any(|w| w[1] >= w[0]) {
                return Err(CliError::Config("mesh sizes must be at least two, strictly decreasing".into()));
            }
        }
        Ok(())
    }

    fn seed(&self) -> u64 {
        self.seed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplePathsConfig {
    pub seed: u64,
    pub grid_points: usize,
    pub count: usize,
    pub process: ProcessSpec,
}

impl Default for SamplePathsConfig {
    fn default() -> Self {
        SamplePathsConfig {
            seed: 0,
            grid_points: 101,
            count: 10,
            process: ProcessSpec::standard(ProcessKind::Brownian),
        }
    }
}

impl Experiment for SamplePathsConfig {
    fn apply(&mut self, o: &Overrides) -> Result<(), CliError> {
        no_flag("alpha", &o.alpha, "sample-paths")?;
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(n) = o.samples {
            self.count = n;
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.grid_points < 2 || self.count == 0 {
            return Err(CliError::Config("need a grid of two or more points and a positive count".into()));
        }
        self.process.validate_for(self.grid_points)?;
        Ok(())
    }

    fn seed(&self) -> u64 {
        self.seed
    }
}
