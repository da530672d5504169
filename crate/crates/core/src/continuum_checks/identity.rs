//! Monte Carlo check of `E[G(t)] = sqrt(2π) (1 - e^{-t²/2} K(t))` and its
//! inversion into estimates of `K(t)`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{expected_g_closed_form, mean_and_se, periodic_position, QuadratureSpec, NODE_TOLERANCE};
use crate::process_models::{stationary_covariance_fn, PathSampler, ProcessKind, ProcessSpec};
use crate::seed::{derive_seed, task_rng};
use crate::{Error, Result};

/// Relative gate on the Monte Carlo mean.
pub const RELATIVE_TOLERANCE: f64 = 0.02;

/// Added to the `3 SE` gate so that rows with no sampling noise (the constant
/// process after the control, `t = 0`) are judged on quadrature error alone.
pub const ROUNDING_FLOOR: f64 = 1e-10;

/// How paths on the quadrature window are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LatticeSampling {
    /// A path on `[0, 1]` extended periodically.
    PeriodicExtension,
    /// The stationary process sampled directly at the window's nodes.
    Direct,
}

/// Evaluation nodes `s_i` and `s_i + t`, merged into one sorted point set.
struct Layout {
    points: Vec<f64>,
    a: Vec<usize>,
    b: Vec<usize>,
    wa: Vec<f64>,
    wb: Vec<f64>,
}

impl Layout {
    fn new(quad: &QuadratureSpec, t: f64) -> Self {
        let nodes = quad.nodes();
        let shifted: Vec<f64> = nodes.iter().map(|s| s + t).collect();
        let mut points = Vec::with_capacity(2 * nodes.len());
        let (mut a, mut b) = (Vec::with_capacity(nodes.len()), Vec::with_capacity(nodes.len()));
        let (mut i, mut j) = (0, 0);
        while i < nodes.len() || j < shifted.len() {
            let next = match (nodes.get(i), shifted.get(j)) {
                (Some(&x), Some(&y)) => x.min(y),
                (Some(&x), None) => x,
                (None, Some(&y)) => y,
                (None, None) => unreachable!(),
            };
            let slot = points.len();
            points.push(next);
            while i < nodes.len() && (nodes[i] - next).abs() <= NODE_TOLERANCE {
                a.push(slot);
                i += 1;
            }
            while j < shifted.len() && (shifted[j] - next).abs() <= NODE_TOLERANCE {
                b.push(slot);
                j += 1;
            }
        }
        let weight = |s: f64| (-s * s).exp();
        Layout {
            wa: nodes.iter().map(|&s| weight(s)).collect(),
            wb: shifted.iter().map(|&s| weight(s)).collect(),
            points,
            a,
            b,
        }
    }

    /// `G` and the control `∫ e^{-2s²} f(s)² + e^{-2(s+t)²} f(s+t)²`.
    fn g_and_control(&self, quad: &QuadratureSpec, values: &[f64]) -> (f64, f64) {
        let g = quad.integrate((0..self.a.len()).map(|i| {
            let d = self.wa[i] * values[self.a[i]] - self.wb[i] * values[self.b[i]];
            d * d
        }));
        let c = quad.integrate((0..self.a.len()).map(|i| {
            let (x, y) = (self.wa[i] * values[self.a[i]], self.wb[i] * values[self.b[i]]);
            x * x + y * y
        }));
        (g, c)
    }

    /// Exact expectation of the control under unit variance.
    fn control_mean(&self, quad: &QuadratureSpec) -> f64 {
        quad.integrate((0..self.a.len()).map(|i| self.wa[i] * self.wa[i] + self.wb[i] * self.wb[i]))
    }
}

/// Draws values at `layout.points`, either directly or through the periodic
/// extension of a path sampled at the needed base positions.
enum Source {
    Direct(PathSampler),
    Periodic { sampler: PathSampler, map: Vec<usize> },
}

impl Source {
    fn new(spec: &ProcessSpec, layout: &Layout, sampling: LatticeSampling) -> Result<Self> {
        match sampling {
            LatticeSampling::Direct => Ok(Source::Direct(PathSampler::for_points(spec, &layout.points)?)),
            LatticeSampling::PeriodicExtension => {
                let pos: Vec<f64> = layout.points.iter().map(|&s| periodic_position(s)).collect();
                let mut base = pos.clone();
                base.sort_by(f64::total_cmp);
                base.dedup_by(|x, y| (*x - *y).abs() <= NODE_TOLERANCE);
                let map = pos
                    .iter()
                    .map(|&p| {
                        let k = base.partition_point(|&q| q < p - NODE_TOLERANCE);
                        debug_assert!((base[k] - p).abs() <= NODE_TOLERANCE);
                        k
                    })
                    .collect();
                Ok(Source::Periodic {
                    sampler: PathSampler::for_points(spec, &base)?,
                    map,
                })
            }
        }
    }

    fn buffers(&self, n: usize) -> (Vec<f64>, Vec<f64>) {
        match self {
            Source::Direct(_) => (vec![0.0; n], Vec::new()),
            Source::Periodic { sampler, .. } => (vec![0.0; n], vec![0.0; sampler.len()]),
        }
    }

    fn fill(&self, seed: u64, j: u64, out: &mut [f64], scratch: &mut [f64]) {
        let mut rng = task_rng(seed, j);
        match self {
            Source::Direct(s) => s.sample_into(&mut rng, out),
            Source::Periodic { sampler, map } => {
                sampler.sample_into(&mut rng, scratch);
                for (o, &k) in out.iter_mut().zip(map) {
                    *o = scratch[k];
                }
            }
        }
    }
}

fn sampling_for(spec: &ProcessSpec) -> LatticeSampling {
    match spec.kind {
        ProcessKind::Constant | ProcessKind::Brownian => LatticeSampling::PeriodicExtension,
        _ => LatticeSampling::Direct,
    }
}

fn check_standardized(spec: &ProcessSpec) -> Result<()> {
    stationary_covariance_fn(spec)?;
    let (mu, v) = (spec.marginal.mean(), spec.marginal.variance());
    if mu.abs() > 1e-12 || (v - 1.0).abs() > 1e-12 {
        return Err(Error::config(format!(
            "identity needs zero mean and unit variance (got mean {mu}, variance {v}); standardize first"
        )));
    }
    Ok(())
}

struct GEstimate {
    plain_mean: f64,
    plain_se: f64,
    mean: f64,
    se: f64,
    beta: f64,
}

/// Plain and control-variate estimates of `E[G(t)]` over `samples` paths.
///
/// The control has known mean because `E[f(s)²] = 1`; regressing it out
/// removes the `X²` scale factor of the constant process entirely and most
/// of the path-energy noise elsewhere.
fn g_moments(
    spec: &ProcessSpec,
    t: f64,
    quad: &QuadratureSpec,
    samples: usize,
    seed: u64,
) -> Result<(GEstimate, LatticeSampling)> {
    if !(0.0..=2.0).contains(&t) {
        return Err(Error::domain(format!("shift t = {t} lies outside [0, 2]")));
    }
    let layout = Layout::new(quad, t);
    let sampling = sampling_for(spec);
    let source = Source::new(spec, &layout, sampling)?;
    let draws: Vec<(f64, f64)> = (0..samples as u64)
        .into_par_iter()
        .map_init(
            || source.buffers(layout.points.len()),
            |(out, scratch), j| {
                source.fill(seed, j, out, scratch);
                layout.g_and_control(quad, out)
            },
        )
        .collect();
    let gs: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let cs: Vec<f64> = draws.iter().map(|d| d.1).collect();
    let (plain_mean, plain_se) = mean_and_se(&gs);
    let c_mean = cs.iter().sum::<f64>() / cs.len() as f64;
    let (mut sgc, mut scc) = (0.0, 0.0);
    for (g, c) in gs.iter().zip(&cs) {
        sgc += (g - plain_mean) * (c - c_mean);
        scc += (c - c_mean) * (c - c_mean);
    }
    let beta = if scc > 0.0 { sgc / scc } else { 0.0 };
    let known = layout.control_mean(quad);
    let adjusted: Vec<f64> = gs.iter().zip(&cs).map(|(g, c)| g - beta * (c - known)).collect();
    let (mean, se) = mean_and_se(&adjusted);
    Ok((
        GEstimate {
            plain_mean,
            plain_se,
            mean,
            se,
            beta,
        },
        sampling,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityRow {
    pub t: f64,
    pub kernel: f64,
    /// Control-variate estimate of `E[G(t)]`; the gates apply to this one.
    pub mc_mean: f64,
    pub plain_mean: f64,
    pub plain_standard_error: f64,
    pub control_coefficient: f64,
    pub closed_form: f64,
    pub abs_deviation: f64,
    pub rel_deviation: f64,
    pub standard_error: f64,
    pub within_3se: bool,
    pub within_relative: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub spec: ProcessSpec,
    pub quadrature: QuadratureSpec,
    pub sampling: LatticeSampling,
    pub samples: usize,
    pub seed: u64,
    pub rows: Vec<IdentityRow>,
    pub note: Option<String>,
    pub all_pass: bool,
}

fn lattice_note(spec: &ProcessSpec) -> Option<String> {
    match spec.kind {
        ProcessKind::Iid => Some(
            "iid values on the quadrature lattice: K(t) is the lattice Kronecker delta, zero for every t != 0".into(),
        ),
        ProcessKind::Equicorrelated { rho } => Some(format!(
            "equicorrelated values on the quadrature lattice: K(t) = {rho} for every t != 0"
        )),
        _ => None,
    }
}

/// Compares the Monte Carlo mean of `G(t)` with its closed form for each `t`.
/// Row `k` uses master seed `derive_seed(seed, k)`, path `j` its stream `j`.
pub fn expected_g_identity_check(
    spec: &ProcessSpec,
    ts: &[f64],
    samples: usize,
    quad: &QuadratureSpec,
    seed: u64,
) -> Result<IdentityReport> {
    check_standardized(spec)?;
    quad.validate()?;
    if samples < 2 {
        return Err(Error::config("need at least two samples"));
    }
    if ts.is_empty() {
        return Err(Error::config("need at least one shift t"));
    }
    let kernel = stationary_covariance_fn(spec)?;
    let mut rows = Vec::with_capacity(ts.len());
    let mut sampling = sampling_for(spec);
    for (k, &t) in ts.iter().enumerate() {
        let (est, s) = g_moments(spec, t, quad, samples, derive_seed(seed, k as u64))?;
        sampling = s;
        let (mc_mean, standard_error) = (est.mean, est.se);
        let kt = kernel.at(t);
        let closed_form = expected_g_closed_form(t, kt);
        let abs_deviation = (mc_mean - closed_form).abs();
        let rel_deviation = if closed_form == 0.0 {
            if abs_deviation == 0.0 { 0.0 } else { f64::INFINITY }
        } else {
            abs_deviation / closed_form.abs()
        };
        let within_3se = abs_deviation <= 3.0 * standard_error + ROUNDING_FLOOR;
        let within_relative = abs_deviation <= RELATIVE_TOLERANCE * closed_form.abs();
        rows.push(IdentityRow {
            t,
            kernel: kt,
            mc_mean,
            plain_mean: est.plain_mean,
            plain_standard_error: est.plain_se,
            control_coefficient: est.beta,
            closed_form,
            abs_deviation,
            rel_deviation,
            standard_error,
            within_3se,
            within_relative,
            pass: within_3se && within_relative,
        });
    }
    Ok(IdentityReport {
        spec: *spec,
        quadrature: *quad,
        sampling,
        samples,
        seed,
        all_pass: rows.iter().all(|r| r.pass),
        rows,
        note: lattice_note(spec),
    })
}

/// CSV side table `t,mc_mean,closed_form,standard_error`.
pub fn write_identity_csv<W: Write>(report: &IdentityReport, mut out: W) -> std::io::Result<()> {
    writeln!(out, "t,mc_mean,closed_form,standard_error")?;
    for r in &report.rows {
        writeln!(out, "{},{},{},{}", r.t, r.mc_mean, r.closed_form, r.standard_error)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KProbeRow {
    pub t: f64,
    pub mc_mean_g: f64,
    /// `e^{t²/2} (1 - E[G] / sqrt(2π))`.
    pub estimate: f64,
    pub standard_error: f64,
    pub kernel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "trend", rename_all = "kebab-case")]
pub enum KTrend {
    ApproachingOne,
    BoundedAwayFromOne { level: f64 },
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KProbeReport {
    pub spec: ProcessSpec,
    pub quadrature: QuadratureSpec,
    pub samples: usize,
    pub seed: u64,
    pub rows: Vec<KProbeRow>,
    /// Each estimate is at least the previous one minus three combined
    /// standard errors, as `t` decreases.
    pub monotone_within_se: bool,
    pub trend: KTrend,
    pub verdict: String,
}

/// Inverts the identity to estimate `K(t)` along a decreasing sequence `t → 0`.
///
/// The trend is `approaching-one` when the estimates are monotone within
/// their standard errors and the final gap `1 - K` is either within three
/// standard errors of zero or at most half the initial gap. Otherwise, a
/// final gap beyond three standard errors is `bounded-away-from-one` at the
/// mean estimate.
pub fn k_limit_probe(
    spec: &ProcessSpec,
    ts: &[f64],
    samples: usize,
    quad: &QuadratureSpec,
    seed: u64,
) -> Result<KProbeReport> {
    if ts.len() < 2 || ts.windows(2).any(|w| w[1] >= w[0]) || ts.iter().any(|&t| t <= 0.0) {
        return Err(Error::config("K probe needs a strictly decreasing positive t sequence"));
    }
    let identity = expected_g_identity_check(spec, ts, samples, quad, seed)?;
    let root = (2.0 * std::f64::consts::PI).sqrt();
    let rows: Vec<KProbeRow> = identity
        .rows
        .iter()
        .map(|r| {
            let scale = (r.t * r.t / 2.0).exp();
            KProbeRow {
                t: r.t,
                mc_mean_g: r.mc_mean,
                estimate: scale * (1.0 - r.mc_mean / root),
                standard_error: scale * r.standard_error / root,
                kernel: r.kernel,
            }
        })
        .collect();
    let monotone_within_se = rows
        .windows(2)
        .all(|w| w[1].estimate >= w[0].estimate - 3.0 * w[0].standard_error.hypot(w[1].standard_error));
    let (first, last) = (&rows[0], &rows[rows.len() - 1]);
    let (gap0, gap) = (1.0 - first.estimate, 1.0 - last.estimate);
    let trend = if monotone_within_se && (gap.abs() <= 3.0 * last.standard_error || gap <= 0.5 * gap0) {
        KTrend::ApproachingOne
    } else if gap > 3.0 * last.standard_error {
        KTrend::BoundedAwayFromOne {
            level: rows.iter().map(|r| r.estimate).sum::<f64>() / rows.len() as f64,
        }
    } else {
        KTrend::Inconclusive
    };
    let verdict = match (&trend, spec.kind) {
        (KTrend::ApproachingOne, _) => "K approaches 1 as t -> 0".to_string(),
        (KTrend::BoundedAwayFromOne { .. }, ProcessKind::Equicorrelated { rho }) => {
            format!("K bounded away from 1 (rho={rho})")
        }
        (KTrend::BoundedAwayFromOne { level }, _) => format!("K bounded away from 1 (level {level:.4})"),
        (KTrend::Inconclusive, _) => "inconclusive".to_string(),
    };
    Ok(KProbeReport {
        spec: *spec,
        quadrature: *quad,
        samples,
        seed,
        rows,
        monotone_within_se,
        trend,
        verdict,
    })
}
