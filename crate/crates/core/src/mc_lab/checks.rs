//! Necessary conditions for law-equality on a grid process: identical
//! marginals, one common covariance, and invariance under standardization.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ks::{ks_two_sample, TestReport};
use crate::process_models::{standardize, Grid, PathSampler, ProcessSpec};
use crate::seed::{derive_seed, task_rng};
use crate::trace_core::{apply_measure, run_policy, value_projection, PerformanceMeasure, Policy};
use crate::{Error, Result};

/// Draws `n` paths from `sampler` and keeps the columns `cols`, in path order.
fn draw_columns(sampler: &PathSampler, cols: &[usize], n: usize, seed: u64) -> Vec<Vec<f64>> {
    let rows: Vec<Vec<f64>> = (0..n as u64)
        .into_par_iter()
        .map_init(
            || vec![0.0; sampler.len()],
            |buf, j| {
                sampler.sample_into(&mut task_rng(seed, j), buf);
                cols.iter().map(|&c| buf[c]).collect()
            },
        )
        .collect();
    (0..cols.len())
        .map(|k| rows.iter().map(|r| r[k]).collect())
        .collect()
}

fn unique_columns(grid: &Grid, ts: impl Iterator<Item = f64>) -> Result<Vec<usize>> {
    let mut cols: Vec<usize> = ts.map(|t| grid.index_of(t)).collect::<Result<_>>()?;
    cols.sort_unstable();
    cols.dedup();
    Ok(cols)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalPairReport {
    pub t: f64,
    pub s: f64,
    pub report: TestReport,
}

/// Two-sample test of the laws of `f(t)` and `f(s)` for each pair.
///
/// The two sides of a pair come from independent path batches, so the test
/// sees two independent samples even though `f(t)` and `f(s)` are dependent
/// on a single path.
pub fn check_identical_marginals(
    spec: &ProcessSpec,
    grid: &Grid,
    pairs: &[(f64, f64)],
    samples: usize,
    alpha: f64,
    seed: u64,
) -> Result<Vec<MarginalPairReport>> {
    if pairs.is_empty() {
        return Err(Error::config("need at least one point pair"));
    }
    let cols = unique_columns(grid, pairs.iter().flat_map(|&(t, s)| [t, s]))?;
    let sampler = PathSampler::for_grid(spec, grid)?;
    let left = draw_columns(&sampler, &cols, samples, derive_seed(seed, 0));
    let right = draw_columns(&sampler, &cols, samples, derive_seed(seed, 1));
    let slot = |t: f64| {
        let i = grid.index_of(t).expect("checked above");
        cols.binary_search(&i).expect("collected above")
    };
    pairs
        .iter()
        .map(|&(t, s)| {
            Ok(MarginalPairReport {
                t,
                s,
                report: ks_two_sample(&left[slot(t)], &right[slot(s)], alpha)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEntry {
    pub t: f64,
    pub s: f64,
    pub covariance: f64,
    pub standard_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceReport {
    pub samples: usize,
    pub seed: u64,
    pub entries: Vec<CovarianceEntry>,
    /// Largest minus smallest sample covariance.
    pub spread: f64,
    /// Standard error of the spread, `sqrt(se_max^2 + se_min^2)`.
    pub spread_standard_error: f64,
    pub tolerance: f64,
    /// `spread > tolerance + 4 * spread_standard_error`: the covariance is
    /// not constant across the pairs.
    pub violation: bool,
}

fn sample_covariance(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let prods: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).collect();
    let cov = prods.iter().sum::<f64>() / (n - 1.0);
    let var = prods.iter().map(|p| (p - cov).powi(2)).sum::<f64>() / (n - 1.0);
    (cov, (var / n).sqrt())
}

/// Sample `Cov(f(t), f(s))` for each pair, all from one batch of paths.
pub fn check_constant_covariance(
    spec: &ProcessSpec,
    grid: &Grid,
    pairs: &[(f64, f64)],
    samples: usize,
    tolerance: f64,
    seed: u64,
) -> Result<CovarianceReport> {
    let mut distinct: Vec<(usize, usize)> = Vec::new();
    for &(t, s) in pairs {
        let (i, j) = (grid.index_of(t)?, grid.index_of(s)?);
        if i == j {
            return Err(Error::config(format!("pair ({t}, {s}) needs two distinct points")));
        }
        let key = (i.min(j), i.max(j));
        if !distinct.contains(&key) {
            distinct.push(key);
        }
    }
    if distinct.len() < 2 {
        return Err(Error::config("need at least two distinct point pairs"));
    }
    if samples < 3 {
        return Err(Error::config("need at least three samples"));
    }
    if !(tolerance >= 0.0) {
        return Err(Error::config("tolerance must be non-negative"));
    }
    let cols = unique_columns(grid, pairs.iter().flat_map(|&(t, s)| [t, s]))?;
    let sampler = PathSampler::for_grid(spec, grid)?;
    let data = draw_columns(&sampler, &cols, samples, seed);
    let column = |t: f64| &data[cols.binary_search(&grid.index_of(t).expect("checked")).expect("collected")];
    let entries: Vec<CovarianceEntry> = pairs
        .iter()
        .map(|&(t, s)| {
            let (covariance, standard_error) = sample_covariance(column(t), column(s));
            CovarianceEntry {
                t,
                s,
                covariance,
                standard_error,
            }
        })
        .collect();
    let hi = entries
        .iter()
        .max_by(|a, b| a.covariance.total_cmp(&b.covariance))
        .expect("non-empty");
    let lo = entries
        .iter()
        .min_by(|a, b| a.covariance.total_cmp(&b.covariance))
        .expect("non-empty");
    let spread = hi.covariance - lo.covariance;
    let spread_standard_error = hi.standard_error.hypot(lo.standard_error);
    Ok(CovarianceReport {
        samples,
        seed,
        spread,
        spread_standard_error,
        tolerance,
        violation: spread > tolerance + 4.0 * spread_standard_error,
        entries,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationReport {
    pub spec: ProcessSpec,
    pub standardized: ProcessSpec,
    pub policy: String,
    pub steps: usize,
    pub samples: usize,
    pub seed: u64,
    /// Paths whose trace on `(f - mu) / sigma` visited a different point
    /// sequence than on `f`.
    pub trace_mismatches: usize,
    /// Paths where `min` over the standardized trace differs from the mapped
    /// original `min`; compared for exact floating-point equality.
    pub min_mismatches: usize,
    /// Largest `|g - (f - mu) / sigma|` between paths of the standardized
    /// spec and mapped paths of the original spec under the same seed.
    pub resampled_max_deviation: f64,
    pub identity_holds: bool,
}

/// Tolerance on paths of the standardized spec against mapped originals.
pub const RESAMPLE_TOLERANCE: f64 = 1e-12;

/// Checks that a rank-based policy sees the same trace on `f` and on
/// `(f - mu) / sigma`, and that the minimum over the trace maps accordingly.
pub fn standardization_invariance_test(
    spec: &ProcessSpec,
    grid: &Grid,
    policy: &Policy,
    m: usize,
    samples: usize,
    seed: u64,
) -> Result<StandardizationReport> {
    if !policy.is_rank_based() {
        return Err(Error::Unsupported(
            "standardization invariance is a pathwise identity only for rank-based policies".into(),
        ));
    }
    if m == 0 || m > grid.len() {
        return Err(Error::Capacity {
            requested: m,
            available: grid.len(),
        });
    }
    policy.check_domain(grid.len())?;
    let standardized = standardize(spec)?;
    let (mu, sigma) = (spec.marginal.mean(), spec.marginal.variance().sqrt());
    let sampler = PathSampler::for_grid(spec, grid)?;
    let std_sampler = PathSampler::for_grid(&standardized, grid)?;
    let per_path: Vec<(bool, bool, f64)> = (0..samples as u64)
        .into_par_iter()
        .map(|j| {
            let f = sampler.sample(&mut task_rng(seed, j));
            let g: Vec<f64> = f.iter().map(|v| (v - mu) / sigma).collect();
            let tf = run_policy(policy, &f, m)?;
            let tg = run_policy(policy, &g, m)?;
            let same_trace = tf.points().eq(tg.points());
            let min_f = apply_measure(&PerformanceMeasure::Min, &value_projection(&tf))?
                .as_scalar(m)
                .expect("scalar");
            let min_g = apply_measure(&PerformanceMeasure::Min, &value_projection(&tg))?
                .as_scalar(m)
                .expect("scalar");
            let same_min = min_g == (min_f - mu) / sigma;
            let fresh = std_sampler.sample(&mut task_rng(seed, j));
            let dev = fresh
                .iter()
                .zip(&g)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            Ok((same_trace, same_min, dev))
        })
        .collect::<Result<_>>()?;
    let trace_mismatches = per_path.iter().filter(|r| !r.0).count();
    let min_mismatches = per_path.iter().filter(|r| !r.1).count();
    let resampled_max_deviation = per_path.iter().map(|r| r.2).fold(0.0, f64::max);
    Ok(StandardizationReport {
        spec: *spec,
        standardized,
        policy: policy.to_string(),
        steps: m,
        samples,
        seed,
        trace_mismatches,
        min_mismatches,
        resampled_max_deviation,
        identity_holds: trace_mismatches == 0
            && min_mismatches == 0
            && resampled_max_deviation <= RESAMPLE_TOLERANCE,
    })
}
