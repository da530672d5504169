//! Random functions on grids in `[0, 1]`.
//!
//! A [`ProcessSpec`] pairs a correlation structure ([`ProcessKind`]) with a
//! one-dimensional [`Marginal`]. Gaussian families (equicorrelated, Brownian,
//! Ornstein-Uhlenbeck, squared-exponential) need a normal marginal; the
//! constant and i.i.d. processes accept any marginal.

mod sampler;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use sampler::{sample_batch, sample_path, write_paths_csv, PathSample, PathSampler};

/// Relative eigenvalue tolerance for positive semidefiniteness.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// Strictly increasing points in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    points: Vec<f64>,
}

impl Grid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::config("grid needs at least one point"));
        }
        if points.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::config("grid points must lie in [0, 1]"));
        }
        if points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("grid points must be strictly increasing"));
        }
        Ok(Self { points })
    }

    /// `n` equispaced points including both endpoints (`[0.0]` for `n = 1`).
    pub fn equispaced(n: usize) -> Result<Self> {
        match n {
            0 => Err(Error::config("grid needs at least one point")),
            1 => Self::new(vec![0.0]),
            _ => Self::new((0..n).map(|i| i as f64 / (n - 1) as f64).collect()),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Index of the grid point equal to `t` (within `1e-9`).
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let i = self.points.partition_point(|&p| p < t - 1e-9);
        match self.points.get(i) {
            Some(&p) if (p - t).abs() <= 1e-9 => Ok(i),
            _ => Err(Error::config(format!("t = {t} is not a grid point"))),
        }
    }
}

/// One-dimensional law of a single coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Marginal {
    Normal { mean: f64, variance: f64 },
    Uniform { low: f64, high: f64 },
    /// `high` with probability `p`, else `low`.
    Bernoulli {
        p: f64,
        #[serde(default = "minus_one")]
        low: f64,
        #[serde(default = "plus_one")]
        high: f64,
    },
}

fn minus_one() -> f64 {
    -1.0
}

fn plus_one() -> f64 {
    1.0
}

impl Default for Marginal {
    fn default() -> Self {
        Marginal::standard_normal()
    }
}

impl Marginal {
    pub fn standard_normal() -> Self {
        Marginal::Normal {
            mean: 0.0,
            variance: 1.0,
        }
    }

    /// Bernoulli draw mapped to `±1`.
    pub fn bernoulli(p: f64) -> Self {
        Marginal::Bernoulli {
            p,
            low: -1.0,
            high: 1.0,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Marginal::Normal { mean, .. } => mean,
            Marginal::Uniform { low, high } => (low + high) / 2.0,
            Marginal::Bernoulli { p, low, high } => low + p * (high - low),
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Marginal::Normal { variance, .. } => variance,
            Marginal::Uniform { low, high } => (high - low).powi(2) / 12.0,
            Marginal::Bernoulli { p, low, high } => p * (1.0 - p) * (high - low).powi(2),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Marginal::Normal { mean, variance } => mean.is_finite() && variance.is_finite() && variance >= 0.0,
            Marginal::Uniform { low, high } => low.is_finite() && high.is_finite() && low <= high,
            Marginal::Bernoulli { p, low, high } => {
                (0.0..=1.0).contains(&p) && low.is_finite() && high.is_finite() && low <= high
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid marginal {self:?}")))
        }
    }

    /// Law of `(X - mean) / sd`.
    pub fn standardized(&self) -> Result<Self> {
        let (mu, var) = (self.mean(), self.variance());
        if var <= 0.0 {
            return Err(Error::Degenerate(format!(
                "marginal {self:?} has zero variance"
            )));
        }
        let sd = var.sqrt();
        Ok(match *self {
            Marginal::Normal { .. } => Marginal::standard_normal(),
            Marginal::Uniform { .. } => Marginal::Uniform {
                low: -(3f64.sqrt()),
                high: 3f64.sqrt(),
            },
            Marginal::Bernoulli { p, low, high } => Marginal::Bernoulli {
                p,
                low: (low - mu) / sd,
                high: (high - mu) / sd,
            },
        })
    }

    fn is_normal(&self) -> bool {
        matches!(self, Marginal::Normal { .. })
    }
}

/// Correlation structure of a process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProcessKind {
    /// `f(t) = X` for a single draw `X`.
    Constant,
    Iid,
    /// Common correlation `rho` between any two distinct points.
    Equicorrelated { rho: f64 },
    Brownian,
    /// Stationary, covariance `e^{-theta |t - s|}`.
    OrnsteinUhlenbeck { theta: f64 },
    /// Stationary, covariance `e^{-(t - s)^2 / (2 length_scale^2)}`.
    SquaredExponential { length_scale: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessSpec {
    #[serde(flatten)]
    pub kind: ProcessKind,
    #[serde(default)]
    pub marginal: Marginal,
}

impl ProcessSpec {
    pub fn new(kind: ProcessKind, marginal: Marginal) -> Self {
        Self { kind, marginal }
    }

    pub fn standard(kind: ProcessKind) -> Self {
        Self::new(kind, Marginal::standard_normal())
    }

    pub fn is_gaussian_family(&self) -> bool {
        !matches!(self.kind, ProcessKind::Constant | ProcessKind::Iid)
    }

    pub fn name(&self) -> String {
        match self.kind {
            ProcessKind::Constant => "constant".into(),
            ProcessKind::Iid => "iid".into(),
            ProcessKind::Equicorrelated { rho } => format!("equicorrelated(rho={rho})"),
            ProcessKind::Brownian => "brownian".into(),
            ProcessKind::OrnsteinUhlenbeck { theta } => format!("ornstein-uhlenbeck(theta={theta})"),
            ProcessKind::SquaredExponential { length_scale } => {
                format!("squared-exponential(length_scale={length_scale})")
            }
        }
    }

    /// Checks parameters, including the equicorrelation bound for `n` points.
    pub fn validate_for(&self, n: usize) -> Result<()> {
        self.marginal.validate()?;
        if self.is_gaussian_family() && !self.marginal.is_normal() {
            return Err(Error::model(format!(
                "{} needs a normal marginal",
                self.name()
            )));
        }
        match self.kind {
            ProcessKind::Equicorrelated { rho } => {
                let v = self.marginal.variance();
                if !(rho <= 1.0) {
                    return Err(Error::model(format!("correlation {rho} exceeds 1")));
                }
                if n >= 2 && v > 0.0 && !validate_equicorrelation(rho * v, n, v) {
                    return Err(Error::model(format!(
                        "equicorrelation {rho} on {n} points is not positive semidefinite: \
                         the common covariance must be at least -V/(n-1) = {}",
                        -1.0 / (n - 1) as f64
                    )));
                }
            }
            ProcessKind::OrnsteinUhlenbeck { theta } if !(theta > 0.0) => {
                return Err(Error::model("Ornstein-Uhlenbeck rate must be positive"));
            }
            ProcessKind::SquaredExponential { length_scale } if !(length_scale > 0.0) => {
                return Err(Error::model("squared-exponential length scale must be positive"));
            }
            _ => {}
        }
        Ok(())
    }

    /// Covariance of the coordinates at `s` and `t`.
    pub fn covariance(&self, s: f64, t: f64) -> f64 {
        let v = self.marginal.variance();
        let same = s == t;
        match self.kind {
            ProcessKind::Constant => v,
            ProcessKind::Iid => {
                if same {
                    v
                } else {
                    0.0
                }
            }
            ProcessKind::Equicorrelated { rho } => {
                if same {
                    v
                } else {
                    v * rho
                }
            }
            ProcessKind::Brownian => v * s.min(t),
            ProcessKind::OrnsteinUhlenbeck { theta } => v * (-theta * (s - t).abs()).exp(),
            ProcessKind::SquaredExponential { length_scale } => {
                v * (-(s - t).powi(2) / (2.0 * length_scale * length_scale)).exp()
            }
        }
    }
}

/// `true` iff a common covariance `rho` between `n` variables whose variances
/// are at most `max_variance` satisfies `rho >= -max_variance / (n - 1)`.
///
/// For an equicorrelated family with common variance `V` this is exactly the
/// positive-semidefiniteness condition: the eigenvalues are `V + (n-1) rho`
/// and `V - rho`. With fewer than two variables there is no constraint.
pub fn validate_equicorrelation(rho: f64, n: usize, max_variance: f64) -> bool {
    if n < 2 {
        return true;
    }
    rho >= -max_variance / (n - 1) as f64
}

/// Smallest eigenvalue and trace of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = SymmetricEigen::new(m.clone());
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    (min, m.trace())
}

/// `true` iff the smallest eigenvalue is at least `-PSD_TOLERANCE * trace`.
pub fn is_psd(m: &DMatrix<f64>) -> bool {
    let (min, trace) = min_eigenvalue(m);
    min >= -PSD_TOLERANCE * trace.abs().max(f64::MIN_POSITIVE)
}

/// `Cov(f(t_i), f(t_j))` over the grid.
pub fn covariance_matrix(spec: &ProcessSpec, grid: &Grid) -> Result<DMatrix<f64>> {
    spec.validate_for(grid.len())?;
    let pts = grid.points();
    let cov = DMatrix::from_fn(pts.len(), pts.len(), |i, j| spec.covariance(pts[i], pts[j]));
    if !is_psd(&cov) {
        let (min, _) = min_eigenvalue(&cov);
        return Err(Error::model(format!(
            "covariance of {} is not positive semidefinite (min eigenvalue {min:e})",
            spec.name()
        )));
    }
    Ok(cov)
}

/// Stationary covariance function `K(t) = E[f(s+t) f(s)]` of a standardized process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StationaryKernel {
    One,
    Delta,
    Equicorrelated { rho: f64 },
    Exponential { theta: f64 },
    Gaussian { length_scale: f64 },
}

impl StationaryKernel {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            StationaryKernel::One => 1.0,
            StationaryKernel::Delta => {
                if t == 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            StationaryKernel::Equicorrelated { rho } => {
                if t == 0.0 {
                    1.0
                } else {
                    rho
                }
            }
            StationaryKernel::Exponential { theta } => (-theta * t.abs()).exp(),
            StationaryKernel::Gaussian { length_scale } => {
                (-t * t / (2.0 * length_scale * length_scale)).exp()
            }
        }
    }
}

pub fn stationary_covariance_fn(spec: &ProcessSpec) -> Result<StationaryKernel> {
    Ok(match spec.kind {
        ProcessKind::Constant => StationaryKernel::One,
        ProcessKind::Iid => StationaryKernel::Delta,
        ProcessKind::Equicorrelated { rho } => StationaryKernel::Equicorrelated { rho },
        ProcessKind::OrnsteinUhlenbeck { theta } => StationaryKernel::Exponential { theta },
        ProcessKind::SquaredExponential { length_scale } => {
            StationaryKernel::Gaussian { length_scale }
        }
        ProcessKind::Brownian => {
            return Err(Error::Unsupported(
                "Brownian motion is not stationary; it has no covariance function K(t)".into(),
            ))
        }
    })
}

/// The spec whose paths are `(f - mu) / sigma`.
pub fn standardize(spec: &ProcessSpec) -> Result<ProcessSpec> {
    Ok(ProcessSpec {
        kind: spec.kind,
        marginal: spec.marginal.standardized()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new(vec![0.0, 0.5, 0.5]).is_err());
        assert!(Grid::new(vec![0.0, 1.5]).is_err());
        assert!(Grid::equispaced(0).is_err());
        let g = Grid::equispaced(101).unwrap();
        assert_eq!(g.index_of(0.1).unwrap(), 10);
        assert_eq!(g.index_of(1.0).unwrap(), 100);
        assert!(g.index_of(0.105).is_err());
    }

    #[test]
    fn closed_form_covariances() {
        let g3 = Grid::equispaced(3).unwrap();
        let c = covariance_matrix(&ProcessSpec::standard(ProcessKind::Constant), &g3).unwrap();
        assert!(c.iter().all(|&x| x == 1.0));
        let c = covariance_matrix(&ProcessSpec::standard(ProcessKind::Iid), &g3).unwrap();
        assert_eq!(c, DMatrix::identity(3, 3));
        let g2 = Grid::equispaced(2).unwrap();
        let c = covariance_matrix(
            &ProcessSpec::standard(ProcessKind::Equicorrelated { rho: 0.5 }),
            &g2,
        )
        .unwrap();
        assert_eq!(c, DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]));
        let c = covariance_matrix(&ProcessSpec::standard(ProcessKind::Brownian), &g3).unwrap();
        assert_eq!(c[(1, 2)], 0.5);
        assert_eq!(c[(0, 0)], 0.0);
    }

    #[test]
    fn equicorrelation_bound() {
        assert!(validate_equicorrelation(-1.0, 2, 1.0));
        assert!(!validate_equicorrelation(-1.0 - 1e-12, 2, 1.0));
        assert!(validate_equicorrelation(-0.5, 3, 1.0));
        assert!(!validate_equicorrelation(-0.6, 3, 1.0));
        let g3 = Grid::equispaced(3).unwrap();
        let bad = ProcessSpec::standard(ProcessKind::Equicorrelated { rho: -0.6 });
        let err = covariance_matrix(&bad, &g3).unwrap_err();
        assert!(matches!(err, Error::Model(ref m) if m.contains("-V/(n-1)")));
        // the offending eigenvalue is 1 + 2 rho
        let raw = DMatrix::from_fn(3, 3, |i, j| if i == j { 1.0 } else { -0.6 });
        let (min, _) = min_eigenvalue(&raw);
        assert!(approx(min, -0.2, 1e-12));
        let boundary = ProcessSpec::standard(ProcessKind::Equicorrelated { rho: -0.5 });
        assert!(covariance_matrix(&boundary, &g3).is_ok());
    }

    #[test]
    fn gaussian_families_need_normal_marginals() {
        let spec = ProcessSpec::new(ProcessKind::Brownian, Marginal::bernoulli(0.5));
        assert!(matches!(spec.validate_for(3), Err(Error::Model(_))));
        let spec = ProcessSpec::new(ProcessKind::Iid, Marginal::bernoulli(0.5));
        assert!(spec.validate_for(3).is_ok());
    }

    #[test]
    fn stationary_kernels() {
        let k = stationary_covariance_fn(&ProcessSpec::standard(ProcessKind::Constant)).unwrap();
        assert_eq!(k.at(0.37), 1.0);
        let k = stationary_covariance_fn(&ProcessSpec::standard(ProcessKind::OrnsteinUhlenbeck {
            theta: 1.0,
        }))
        .unwrap();
        assert!(approx(k.at(0.5), 0.606_530_659_712_633_4, 1e-15));
        let k = stationary_covariance_fn(&ProcessSpec::standard(ProcessKind::Equicorrelated {
            rho: 0.3,
        }))
        .unwrap();
        assert_eq!(k.at(0.2), 0.3);
        assert_eq!(k.at(0.0), 1.0);
        let k = stationary_covariance_fn(&ProcessSpec::standard(ProcessKind::Iid)).unwrap();
        assert_eq!((k.at(0.0), k.at(1e-3)), (1.0, 0.0));
        assert!(matches!(
            stationary_covariance_fn(&ProcessSpec::standard(ProcessKind::Brownian)),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn standardization() {
        let spec = ProcessSpec::new(
            ProcessKind::Iid,
            Marginal::Normal {
                mean: 3.0,
                variance: 4.0,
            },
        );
        assert_eq!(standardize(&spec).unwrap(), ProcessSpec::standard(ProcessKind::Iid));

        let eq = ProcessSpec::new(
            ProcessKind::Equicorrelated { rho: 0.4 },
            Marginal::Normal {
                mean: -1.0,
                variance: 9.0,
            },
        );
        let s = standardize(&eq).unwrap();
        assert_eq!(s.kind, ProcessKind::Equicorrelated { rho: 0.4 });
        assert_eq!(standardize(&s).unwrap(), s);

        let uni = ProcessSpec::new(ProcessKind::Constant, Marginal::Uniform { low: 0.0, high: 2.0 });
        let s = standardize(&uni).unwrap();
        match s.marginal {
            Marginal::Uniform { low, high } => {
                assert!(approx(low, -(3f64.sqrt()), 1e-15));
                assert!(approx(high, 3f64.sqrt(), 1e-15));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(approx(s.marginal.mean(), 0.0, 1e-15));
        assert!(approx(s.marginal.variance(), 1.0, 1e-15));

        let b = standardize(&ProcessSpec::new(ProcessKind::Iid, Marginal::bernoulli(0.5))).unwrap();
        assert_eq!(b.marginal, Marginal::bernoulli(0.5));

        let degenerate = ProcessSpec::new(
            ProcessKind::Constant,
            Marginal::Normal {
                mean: 1.0,
                variance: 0.0,
            },
        );
        assert!(matches!(standardize(&degenerate), Err(Error::Degenerate(_))));
    }

    #[test]
    fn spec_serde_uses_named_kinds() {
        let spec = ProcessSpec::new(
            ProcessKind::OrnsteinUhlenbeck { theta: 2.0 },
            Marginal::standard_normal(),
        );
        let json = serde_json::to_string(&spec).unwrap();
        assert!(json.contains("\"kind\":\"ornstein-uhlenbeck\""));
        assert_eq!(serde_json::from_str::<ProcessSpec>(&json).unwrap(), spec);
    }
}
