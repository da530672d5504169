use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Grid, Marginal, ProcessKind, ProcessSpec, PSD_TOLERANCE};
use crate::seed::task_rng;
use crate::{Error, Result};

/// One sampled path with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub spec: ProcessSpec,
    pub seed: u64,
    pub stream: u64,
}

/// Square-root factor `L` with `L L^T = covariance` (unit variance).
///
/// Except for the dense route, these are the exact Cholesky factors of the
/// respective covariance matrices written in closed form, so they consume
/// standard normals in the same way a dense Cholesky would.
#[derive(Debug, Clone)]
enum Factor {
    Constant,
    Iid,
    /// Lower triangle with a constant value `col[j]` below the diagonal of column `j`.
    Compound { diag: Vec<f64>, col: Vec<f64> },
    /// `x_i = coef[i] x_{i-1} + innov[i] z_i`.
    Markov { coef: Vec<f64>, innov: Vec<f64> },
    /// Pivoted Cholesky: `x[perm[i]] = sum_j l[(i, j)] z_j`.
    Dense { l: DMatrix<f64>, perm: Vec<usize> },
}

/// Reusable sampler for one spec at fixed points.
#[derive(Debug, Clone)]
pub struct PathSampler {
    spec: ProcessSpec,
    n: usize,
    factor: Factor,
    sd: f64,
    mean: f64,
}

/// Largest point set the dense factorization accepts.
pub const DENSE_FACTOR_CAP: usize = 4096;

impl PathSampler {
    pub fn for_grid(spec: &ProcessSpec, grid: &Grid) -> Result<Self> {
        Self::for_points(spec, grid.points())
    }

    /// Sampler at arbitrary strictly increasing `points` (negative points are
    /// allowed for stationary kinds).
    pub fn for_points(spec: &ProcessSpec, points: &[f64]) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(Error::config("need at least one sample point"));
        }
        if points.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::config("sample points must be strictly increasing"));
        }
        spec.validate_for(n)?;
        let factor = match spec.kind {
            ProcessKind::Constant => Factor::Constant,
            ProcessKind::Iid => Factor::Iid,
            ProcessKind::Equicorrelated { rho } => compound_factor(rho, n)?,
            ProcessKind::Brownian => {
                if points[0] < 0.0 {
                    return Err(Error::config("Brownian motion is defined for t >= 0"));
                }
                let mut coef = vec![1.0; n];
                coef[0] = 0.0;
                let innov = (0..n)
                    .map(|i| if i == 0 { points[0].sqrt() } else { (points[i] - points[i - 1]).sqrt() })
                    .collect();
                Factor::Markov { coef, innov }
            }
            ProcessKind::OrnsteinUhlenbeck { theta } => {
                let coef: Vec<f64> = (0..n)
                    .map(|i| if i == 0 { 0.0 } else { (-theta * (points[i] - points[i - 1])).exp() })
                    .collect();
                let innov = coef.iter().map(|a| (1.0 - a * a).max(0.0).sqrt()).collect();
                Factor::Markov { coef, innov }
            }
            ProcessKind::SquaredExponential { .. } => {
                if n > DENSE_FACTOR_CAP {
                    return Err(Error::size(
                        "squared-exponential point count (dense factorization)",
                        n as u128,
                        DENSE_FACTOR_CAP as u128,
                    ));
                }
                let unit = ProcessSpec::standard(spec.kind);
                let cov = DMatrix::from_fn(n, n, |i, j| unit.covariance(points[i], points[j]));
                let (l, perm) = pivoted_cholesky(&cov)?;
                Factor::Dense { l, perm }
            }
        };
        Ok(Self {
            spec: *spec,
            n,
            factor,
            sd: spec.marginal.variance().sqrt(),
            mean: spec.marginal.mean(),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn spec(&self) -> &ProcessSpec {
        &self.spec
    }

    /// Fills `out` (length `len()`) with one path.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        assert_eq!(out.len(), self.n, "output length must match the sampler");
        match &self.factor {
            Factor::Constant => {
                let x = draw_marginal(&self.spec.marginal, rng);
                out.fill(x);
            }
            Factor::Iid => {
                for v in out.iter_mut() {
                    *v = draw_marginal(&self.spec.marginal, rng);
                }
            }
            Factor::Compound { diag, col } => {
                let mut running = 0.0;
                for i in 0..self.n {
                    let z: f64 = StandardNormal.sample(rng);
                    out[i] = self.mean + self.sd * (running + diag[i] * z);
                    running += col[i] * z;
                }
            }
            Factor::Markov { coef, innov } => {
                let mut prev = 0.0;
                for i in 0..self.n {
                    let z: f64 = StandardNormal.sample(rng);
                    prev = coef[i] * prev + innov[i] * z;
                    out[i] = self.mean + self.sd * prev;
                }
            }
            Factor::Dense { l, perm } => {
                let z: Vec<f64> = (0..l.ncols()).map(|_| StandardNormal.sample(rng)).collect();
                for (row, &target) in perm.iter().enumerate() {
                    let x: f64 = (0..l.ncols()).map(|j| l[(row, j)] * z[j]).sum();
                    out[target] = self.mean + self.sd * x;
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.sample_into(rng, &mut out);
        out
    }
}

fn draw_marginal<R: Rng + ?Sized>(m: &Marginal, rng: &mut R) -> f64 {
    match *m {
        Marginal::Normal { mean, variance } => {
            let z: f64 = StandardNormal.sample(rng);
            mean + variance.sqrt() * z
        }
        Marginal::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
        Marginal::Bernoulli { p, low, high } => {
            if rng.random::<f64>() < p {
                high
            } else {
                low
            }
        }
    }
}

/// Cholesky factor of `(1 - rho) I + rho 11^T` in closed form.
///
/// Column `j` holds `d_j` on the diagonal and `c_j` below it, with
/// `d_j^2 = 1 - S_j`, `c_j = (rho - S_j) / d_j` and `S_j = sum_{k<j} c_k^2`.
/// A vanishing `d_j` (semidefinite case) zeroes its column.
fn compound_factor(rho: f64, n: usize) -> Result<Factor> {
    let tol = PSD_TOLERANCE * n as f64;
    let mut diag = Vec::with_capacity(n);
    let mut col = Vec::with_capacity(n);
    let mut s = 0.0;
    for j in 0..n {
        let d2 = 1.0 - s;
        if d2 < -tol {
            return Err(Error::model(format!(
                "equicorrelation {rho} is not positive semidefinite on {n} points"
            )));
        }
        if d2 <= tol {
            // rows below a vanishing pivot must vanish too
            if j + 1 < n && (rho - s).abs() > tol.sqrt() {
                return Err(Error::model(format!(
                    "equicorrelation {rho} is not positive semidefinite on {n} points"
                )));
            }
            diag.push(0.0);
            col.push(0.0);
        } else {
            let d = d2.sqrt();
            let c = (rho - s) / d;
            diag.push(d);
            col.push(c);
            s += c * c;
        }
    }
    Ok(Factor::Compound { diag, col })
}

/// Pivoted Cholesky for positive semidefinite matrices.
///
/// Returns `(l, perm)` with `(P A P^T) ≈ l l^T`, where row `i` of `l`
/// corresponds to original index `perm[i]`. Stops once the largest remaining
/// pivot is below `PSD_TOLERANCE * trace`; the residual must then be
/// negligible, otherwise the matrix is not PSD.
pub(crate) fn pivoted_cholesky(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<usize>)> {
    let n = a.nrows();
    let tol = PSD_TOLERANCE * a.trace().abs().max(f64::MIN_POSITIVE);
    let mut work = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut l = DMatrix::<f64>::zeros(n, n);
    let mut rank = 0;
    for k in 0..n {
        let (mut piv, mut best) = (k, work[(k, k)]);
        for i in k + 1..n {
            if work[(i, i)] > best {
                best = work[(i, i)];
                piv = i;
            }
        }
        if best <= tol {
            for i in k..n {
                for j in k..n {
                    if work[(i, j)].abs() > tol.sqrt().max(10.0 * tol) || work[(i, i)] < -tol {
                        return Err(Error::model(
                            "covariance is not positive semidefinite (pivoted Cholesky residual)",
                        ));
                    }
                }
            }
            break;
        }
        work.swap_rows(k, piv);
        work.swap_columns(k, piv);
        l.swap_rows(k, piv);
        perm.swap(k, piv);
        let d = best.sqrt();
        l[(k, k)] = d;
        for i in k + 1..n {
            l[(i, k)] = work[(i, k)] / d;
        }
        for i in k + 1..n {
            for j in k + 1..=i {
                let v = work[(i, j)] - l[(i, k)] * l[(j, k)];
                work[(i, j)] = v;
                work[(j, i)] = v;
            }
        }
        rank += 1;
    }
    Ok((l.columns(0, rank).into_owned(), perm))
}

/// One path from stream 0 of `seed`.
pub fn sample_path(spec: &ProcessSpec, grid: &Grid, seed: u64) -> Result<PathSample> {
    let sampler = PathSampler::for_grid(spec, grid)?;
    Ok(PathSample {
        grid: grid.clone(),
        values: sampler.sample(&mut task_rng(seed, 0)),
        spec: *spec,
        seed,
        stream: 0,
    })
}

/// `count` paths; path `i` uses stream `i` of `master`.
pub fn sample_batch(
    spec: &ProcessSpec,
    grid: &Grid,
    master: u64,
    count: usize,
) -> Result<Vec<PathSample>> {
    let sampler = PathSampler::for_grid(spec, grid)?;
    Ok((0..count as u64)
        .into_par_iter()
        .map(|i| PathSample {
            grid: grid.clone(),
            values: sampler.sample(&mut task_rng(master, i)),
            spec: *spec,
            seed: master,
            stream: i,
        })
        .collect())
}

/// CSV with a header row of grid points and one row per path.
pub fn write_paths_csv<W: Write>(paths: &[PathSample], mut out: W) -> std::io::Result<()> {
    let Some(first) = paths.first() else {
        return Ok(());
    };
    let header: Vec<String> = first.grid.points().iter().map(|t| format!("t={t}")).collect();
    writeln!(out, "seed,stream,{}", header.join(","))?;
    for p in paths {
        let row: Vec<String> = p.values.iter().map(|v| format!("{v}")).collect();
        writeln!(out, "{},{},{}", p.seed, p.stream, row.join(","))?;
    }
    Ok(())
}
