//! Variance of `g(1) = ∫_0^1 f` as the mesh is refined.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{windowed_integral, IntegrationRule};
use crate::process_models::{Grid, PathSampler, ProcessKind, ProcessSpec};
use crate::seed::task_rng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshRow {
    pub mesh: f64,
    pub variance: f64,
    pub standard_error: f64,
    /// `Δ σ²` for iid cells, `σ²` for the constant process.
    pub expected: Option<f64>,
    pub within_4se: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshStudy {
    pub spec: ProcessSpec,
    pub rule: IntegrationRule,
    pub t: f64,
    pub samples: usize,
    pub seed: u64,
    pub rows: Vec<MeshRow>,
    /// Least-squares slope of `ln Var` against `ln Δ`.
    pub slope: f64,
    pub slope_standard_error: f64,
}

/// Sample variance with the standard error `sqrt((m4 - s⁴) / N)`.
fn variance_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    (var, ((m4 - var * var).max(0.0) / n).sqrt())
}

/// Estimates `Var[g(t)]` for each mesh `Δ` (strictly decreasing, each `1/Δ`
/// an integer). Iid paths use the left-point rule, so each cell carries one
/// independent value; other kinds use the trapezoid rule.
///
/// Path `j` draws from stream `j` at every mesh (common random numbers), so
/// a path-independent `g`, as for the constant process, gives the same
/// estimate at every mesh.
pub fn mesh_variance_study(
    spec: &ProcessSpec,
    meshes: &[f64],
    t: f64,
    samples: usize,
    seed: u64,
) -> Result<MeshStudy> {
    if meshes.len() < 2 {
        return Err(Error::config("need at least two mesh sizes"));
    }
    if meshes.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::config("mesh sizes must be strictly decreasing"));
    }
    if samples < 1000 {
        return Err(Error::config("mesh study needs at least 1000 samples"));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::domain(format!("t = {t} lies outside [0, 1]")));
    }
    let rule = if matches!(spec.kind, ProcessKind::Iid) {
        IntegrationRule::LeftPoint
    } else {
        IntegrationRule::Trapezoid
    };
    let sigma2 = spec.marginal.variance();
    let mut rows = Vec::with_capacity(meshes.len());
    for &mesh in meshes {
        let cells = 1.0 / mesh;
        if !(mesh > 0.0) || (cells - cells.round()).abs() > 1e-9 {
            return Err(Error::config(format!("mesh {mesh} does not divide [0, 1]")));
        }
        let grid = Grid::equispaced(cells.round() as usize + 1)?;
        let sampler = PathSampler::for_grid(spec, &grid)?;
        let gs: Vec<f64> = (0..samples as u64)
            .into_par_iter()
            .map_init(
                || vec![0.0; grid.len()],
                |buf, j| {
                    sampler.sample_into(&mut task_rng(seed, j), buf);
                    windowed_integral(&grid, buf, t, rule)
                },
            )
            .collect::<Result<_>>()?;
        let (variance, standard_error) = variance_and_se(&gs);
        let expected = match spec.kind {
            ProcessKind::Iid if t == 1.0 => Some(mesh * sigma2),
            ProcessKind::Constant => Some(t * t * sigma2),
            _ => None,
        };
        rows.push(MeshRow {
            mesh,
            variance,
            standard_error,
            within_4se: expected.map(|e| (variance - e).abs() <= 4.0 * standard_error),
            expected,
        });
    }
    if rows.iter().any(|r| !(r.variance > 0.0)) {
        return Err(Error::Degenerate("zero variance at some mesh; slope undefined".into()));
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.mesh.ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.variance.ln()).collect();
    let se_ln: Vec<f64> = rows.iter().map(|r| r.standard_error / r.variance).collect();
    let xbar = xs.iter().sum::<f64>() / xs.len() as f64;
    let ybar = ys.iter().sum::<f64>() / ys.len() as f64;
    let sxx: f64 = xs.iter().map(|x| (x - xbar).powi(2)).sum();
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - xbar) * (y - ybar)).sum::<f64>() / sxx;
    let slope_standard_error = xs
        .iter()
        .zip(&se_ln)
        .map(|(x, s)| ((x - xbar) * s).powi(2))
        .sum::<f64>()
        .sqrt()
        / sxx;
    Ok(MeshStudy {
        spec: *spec,
        rule,
        t,
        samples,
        seed,
        rows,
        slope,
        slope_standard_error,
    })
}
