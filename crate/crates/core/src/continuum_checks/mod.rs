//! Numerical checks of the continuum identities: windowed integrals under
//! mesh refinement, the periodic extension of a path on `[0, 1]`, and the
//! Gaussian-windowed functional
//!
//! ```text
//! G(t) = ∫ (e^{-s²} f(s) - e^{-(s+t)²} f(s+t))² ds
//! E[G(t)] = sqrt(2π) (1 - e^{-t²/2} K(t))
//! ```
//!
//! for stationary, standardized processes with covariance function `K`.

mod identity;
mod mesh;

use serde::{Deserialize, Serialize};

use crate::process_models::{Grid, PathSample};
use crate::{Error, Result};

pub use identity::{
    expected_g_identity_check, k_limit_probe, write_identity_csv, IdentityReport, IdentityRow,
    KProbeReport, KProbeRow, KTrend, LatticeSampling, RELATIVE_TOLERANCE, ROUNDING_FLOOR,
};
pub use mesh::{mesh_variance_study, MeshRow, MeshStudy};

/// Points closer than this are treated as the same lattice node.
pub(crate) const NODE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureRule {
    Trapezoid,
}

/// Truncated trapezoid quadrature on `[-L, L]` with step `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureSpec {
    pub half_width: f64,
    pub step: f64,
    pub rule: QuadratureRule,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            half_width: 6.0,
            step: 1.0 / 512.0,
            rule: QuadratureRule::Trapezoid,
        }
    }
}

impl QuadratureSpec {
    pub fn new(half_width: f64, step: f64) -> Result<Self> {
        let q = QuadratureSpec {
            half_width,
            step,
            rule: QuadratureRule::Trapezoid,
        };
        q.validate()?;
        Ok(q)
    }

    /// `L` must be a positive integer and `h` must divide it.
    pub fn validate(&self) -> Result<()> {
        let l = self.half_width;
        if !(l >= 1.0) || l.fract() != 0.0 || !l.is_finite() {
            return Err(Error::config(format!("half width {l} must be an integer >= 1")));
        }
        if !(self.step > 0.0) || self.step > 1.0 {
            return Err(Error::config(format!("quadrature step {} must lie in (0, 1]", self.step)));
        }
        let cells = 2.0 * l / self.step;
        if (cells - cells.round()).abs() > 1e-9 {
            return Err(Error::config(format!(
                "quadrature step {} does not divide [-{l}, {l}]",
                self.step
            )));
        }
        if cells > 1e8 {
            return Err(Error::size("quadrature nodes", cells as u128, 100_000_000));
        }
        Ok(())
    }

    pub fn n_nodes(&self) -> usize {
        (2.0 * self.half_width / self.step).round() as usize + 1
    }

    /// Nodes `-L + i h`.
    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_nodes())
            .map(|i| -self.half_width + i as f64 * self.step)
            .collect()
    }

    /// Trapezoid sum of values given at [`Self::nodes`].
    pub fn integrate(&self, values: impl ExactSizeIterator<Item = f64>) -> f64 {
        let n = values.len();
        let mut sum = 0.0;
        for (i, v) in values.enumerate() {
            sum += if i == 0 || i + 1 == n { 0.5 * v } else { v };
        }
        sum * self.step
    }

    /// Mass of `e^{-2s²}` outside the window, `sqrt(π/2) erfc(sqrt(2) L)`,
    /// bounded here by `e^{-2L²}`.
    pub fn tail_bound(&self) -> f64 {
        (-2.0 * self.half_width * self.half_width).exp()
    }
}

/// Position in `[0, 1]` that supplies `f(s)` under the periodic extension:
/// `f(k + t) = f(t)` with `t ∈ (0, 1]` for `k ≥ 1` and `t ∈ [0, 1)` for `k ≤ -1`.
pub fn periodic_position(s: f64) -> f64 {
    if (0.0..=1.0).contains(&s) {
        s
    } else if s > 1.0 {
        s - (s.ceil() - 1.0)
    } else {
        s - s.floor()
    }
}

/// A path on `[0, 1]` extended periodically to the real line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtendedPath {
    pub base: Grid,
    pub values: Vec<f64>,
    /// Declared truncation window `[-L, L]`.
    pub half_width: f64,
}

impl ExtendedPath {
    pub fn new(path: &PathSample, half_width: f64) -> Result<Self> {
        Self::from_values(path.grid.clone(), path.values.clone(), half_width)
    }

    pub fn from_values(base: Grid, values: Vec<f64>, half_width: f64) -> Result<Self> {
        if base.len() != values.len() {
            return Err(Error::config("path values do not match the grid"));
        }
        let pts = base.points();
        if pts.first().is_none_or(|&p| p.abs() > 1e-9) || pts.last().is_none_or(|&p| (p - 1.0).abs() > 1e-9) {
            return Err(Error::domain("periodic extension needs a base grid spanning [0, 1]"));
        }
        if !(half_width >= 1.0) || half_width.fract() != 0.0 {
            return Err(Error::config(format!("half width {half_width} must be an integer >= 1")));
        }
        Ok(ExtendedPath {
            base,
            values,
            half_width,
        })
    }

    /// `f(s)`; the periodic position of `s` must be a base grid point.
    pub fn at(&self, s: f64) -> Result<f64> {
        if !s.is_finite() {
            return Err(Error::domain("non-finite evaluation point"));
        }
        let i = self
            .base
            .index_of(periodic_position(s))
            .map_err(|_| Error::domain(format!("s = {s} does not map onto the base grid")))?;
        Ok(self.values[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntegrationRule {
    Trapezoid,
    /// Piecewise-constant cells `[s_i, s_{i+1})` valued `f(s_i)`.
    LeftPoint,
}

/// `∫_0^t f(s) ds` on the path's grid. A `t` between nodes is handled by a
/// partial last cell (linear interpolation for the trapezoid rule).
pub fn windowed_integral(grid: &Grid, values: &[f64], t: f64, rule: IntegrationRule) -> Result<f64> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::domain(format!("t = {t} lies outside [0, 1]")));
    }
    if grid.len() != values.len() {
        return Err(Error::config("path values do not match the grid"));
    }
    let pts = grid.points();
    if pts.first().is_none_or(|&p| p > 1e-12) {
        return Err(Error::domain("grid must start at 0"));
    }
    if pts.last().is_some_and(|&p| p < t - 1e-9) {
        return Err(Error::domain(format!("grid does not reach t = {t}")));
    }
    let mut total = 0.0;
    for i in 0..pts.len() - 1 {
        let (a, b) = (pts[i], pts[i + 1]);
        if a >= t - 1e-12 {
            break;
        }
        let end = b.min(t);
        let width = end - a;
        total += match rule {
            IntegrationRule::LeftPoint => values[i] * width,
            IntegrationRule::Trapezoid => {
                let f_end = values[i] + (values[i + 1] - values[i]) * width / (b - a);
                0.5 * (values[i] + f_end) * width
            }
        };
    }
    Ok(total)
}

/// Squared windowed difference `(e^{-s²} a - e^{-(s+t)²} b)²` integrated over
/// the quadrature nodes, where `a[i] = f(s_i)` and `b[i] = f(s_i + t)`.
pub(crate) fn g_from_values(quad: &QuadratureSpec, t: f64, a: &[f64], b: &[f64]) -> f64 {
    let nodes = quad.nodes();
    quad.integrate(nodes.iter().zip(a.iter().zip(b)).map(|(&s, (&x, &y))| {
        let d = (-s * s).exp() * x - (-(s + t) * (s + t)).exp() * y;
        d * d
    }))
}

/// `G(t)` for one extended path.
pub fn g_functional(ext: &ExtendedPath, t: f64, quad: &QuadratureSpec) -> Result<f64> {
    quad.validate()?;
    if !(0.0..=2.0).contains(&t) {
        return Err(Error::domain(format!("shift t = {t} lies outside [0, 2]")));
    }
    let nodes = quad.nodes();
    let a: Vec<f64> = nodes.iter().map(|&s| ext.at(s)).collect::<Result<_>>()?;
    let b: Vec<f64> = nodes.iter().map(|&s| ext.at(s + t)).collect::<Result<_>>()?;
    Ok(g_from_values(quad, t, &a, &b))
}

/// `sqrt(2π) (1 - e^{-t²/2} K(t))`.
pub fn expected_g_closed_form(t: f64, k: f64) -> f64 {
    (2.0 * std::f64::consts::PI).sqrt() * (1.0 - (-t * t / 2.0).exp() * k)
}

/// Sample mean and its standard error, summed in index order.
pub(crate) fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn constant_path(c: f64, n: usize) -> ExtendedPath {
        ExtendedPath::from_values(Grid::equispaced(n).unwrap(), vec![c; n], 6.0).unwrap()
    }

    // Composite Simpson on a fine grid, independent of the trapezoid code.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn default_quadrature() {
        let q = QuadratureSpec::default();
        q.validate().unwrap();
        assert_eq!(q.n_nodes(), 6145);
        assert!(q.tail_bound() <= 1e-15);
        assert!(QuadratureSpec::new(6.5, 0.01).is_err());
        assert!(QuadratureSpec::new(6.0, 0.7).is_err());
    }

    #[test]
    fn periodic_rule() {
        assert_eq!(periodic_position(0.25), 0.25);
        assert_eq!(periodic_position(1.0), 1.0);
        assert_eq!(periodic_position(2.0), 1.0);
        assert_eq!(periodic_position(1.5), 0.5);
        assert_eq!(periodic_position(-1.0), 0.0);
        assert_eq!(periodic_position(-0.25), 0.75);
        assert_eq!(periodic_position(-3.0), 0.0);
    }

    #[test]
    fn extension_repeats_values() {
        let g = Grid::equispaced(5).unwrap();
        let ext = ExtendedPath::from_values(g, vec![0.0, 1.0, 2.0, 3.0, 4.0], 6.0).unwrap();
        assert_eq!(ext.at(1.25).unwrap(), 1.0);
        assert_eq!(ext.at(2.0).unwrap(), 4.0);
        assert_eq!(ext.at(-1.0).unwrap(), 0.0);
        assert_eq!(ext.at(-0.75).unwrap(), 1.0);
        assert!(ext.at(0.1).is_err());
    }

    #[test]
    fn windowed_integrals() {
        let g = Grid::equispaced(65).unwrap();
        let c = vec![2.5; 65];
        assert_eq!(windowed_integral(&g, &c, 0.0, IntegrationRule::Trapezoid).unwrap(), 0.0);
        assert!((windowed_integral(&g, &c, 0.4, IntegrationRule::Trapezoid).unwrap() - 1.0).abs() < 1e-14);
        assert!((windowed_integral(&g, &c, 0.4, IntegrationRule::LeftPoint).unwrap() - 1.0).abs() < 1e-14);
        let lin: Vec<f64> = g.points().to_vec();
        assert!((windowed_integral(&g, &lin, 1.0, IntegrationRule::Trapezoid).unwrap() - 0.5).abs() < 1e-14);
        assert!(matches!(
            windowed_integral(&g, &lin, 1.5, IntegrationRule::Trapezoid),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn g_of_constant_path() {
        let q = QuadratureSpec::default();
        let ext = constant_path(1.0, 513);
        assert_eq!(g_functional(&ext, 0.0, &q).unwrap(), 0.0);
        let oracle = simpson(
            |s| ((-s * s).exp() - (-(s + 1.0) * (s + 1.0)).exp()).powi(2),
            -6.0,
            6.0,
            20_000,
        );
        let g1 = g_functional(&ext, 1.0, &q).unwrap();
        assert!((g1 - oracle).abs() < 1e-12, "{g1} vs {oracle}");
        assert!((g1 - 0.986_28).abs() < 1e-5);
        assert!((g1 - expected_g_closed_form(1.0, 1.0)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn g_is_nonnegative_and_zero_at_no_shift(vals in proptest::collection::vec(-5.0f64..5.0, 9), k in 0usize..17) {
            let ext = ExtendedPath::from_values(Grid::equispaced(9).unwrap(), vals, 2.0).unwrap();
            let q = QuadratureSpec::new(2.0, 0.125).unwrap();
            prop_assert_eq!(g_functional(&ext, 0.0, &q).unwrap(), 0.0);
            prop_assert!(g_functional(&ext, k as f64 * 0.125, &q).unwrap() >= 0.0);
        }
    }
}
