//! Search formalism: domains, traces, policies and performance measures.
//!
//! Points of a domain are addressed by index `0..n`. Observed values are any
//! [`Observation`]: finite labels (`u32`, indices into a codomain) on the
//! exhaustive side and reals (`f64`) on the sampled side.

mod descriptor;
mod measure;
mod policy;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use measure::{apply_measure, Outcome, PerformanceMeasure};
pub use policy::{
    count_policies, enumerate_policies, run_policy, EnumerationCaps, Policy, RankRule, RuleTable,
};

/// Value observed at a visited point.
pub trait Observation: Copy + PartialOrd + fmt::Debug + Send + Sync {
    fn as_real(self) -> f64;
    /// Codomain label, when the value is one.
    fn as_label(self) -> Option<u32>;
}

impl Observation for u32 {
    fn as_real(self) -> f64 {
        f64::from(self)
    }

    fn as_label(self) -> Option<u32> {
        Some(self)
    }
}

impl Observation for f64 {
    fn as_real(self) -> f64 {
        self
    }

    fn as_label(self) -> Option<u32> {
        None
    }
}

/// Finite search space `X` with finite codomain `Y`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiniteDomain {
    points: Vec<String>,
    codomain: Vec<String>,
}

impl FiniteDomain {
    pub fn new(points: Vec<String>, codomain: Vec<String>) -> Result<Self> {
        if points.is_empty() || codomain.is_empty() {
            return Err(Error::config("domain and codomain must be nonempty"));
        }
        for (what, list) in [("point", &points), ("value", &codomain)] {
            let mut sorted: Vec<&String> = list.iter().collect();
            sorted.sort();
            if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
                return Err(Error::config(format!("duplicate {what} identifier {:?}", w[0])));
            }
        }
        Ok(Self { points, codomain })
    }

    /// Domain `x1..xn` with codomain labels `0..k-1`.
    pub fn with_sizes(n_points: usize, n_values: usize) -> Result<Self> {
        Self::new(
            (1..=n_points).map(|i| format!("x{i}")).collect(),
            (0..n_values).map(|v| v.to_string()).collect(),
        )
    }

    pub fn n_points(&self) -> usize {
        self.points.len()
    }

    pub fn n_values(&self) -> usize {
        self.codomain.len()
    }

    pub fn points(&self) -> &[String] {
        &self.points
    }

    pub fn codomain(&self) -> &[String] {
        &self.codomain
    }
}

/// Ordered record of `(point, value)` pairs with pairwise-distinct points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace<V> {
    steps: Vec<(usize, V)>,
}

impl<V: Observation> Trace<V> {
    pub fn empty() -> Self {
        Self { steps: Vec::new() }
    }

    pub fn with_capacity(m: usize) -> Self {
        Self {
            steps: Vec::with_capacity(m),
        }
    }

    /// Builds a trace from explicit steps, rejecting repeated points.
    pub fn from_steps(steps: Vec<(usize, V)>) -> Result<Self> {
        let mut trace = Self::with_capacity(steps.len());
        for (p, v) in steps {
            trace.push(p, v)?;
        }
        Ok(trace)
    }

    pub(crate) fn push(&mut self, point: usize, value: V) -> Result<()> {
        if self.contains(point) {
            return Err(Error::PolicyIntegrity(format!(
                "point {point} visited twice"
            )));
        }
        self.steps.push((point, value));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn steps(&self) -> &[(usize, V)] {
        &self.steps
    }

    pub fn contains(&self, point: usize) -> bool {
        self.steps.iter().any(|&(p, _)| p == point)
    }

    pub fn points(&self) -> impl Iterator<Item = usize> + '_ {
        self.steps.iter().map(|&(p, _)| p)
    }

    /// Index into `steps` of the smallest value; ties go to the earliest step.
    pub(crate) fn best_step(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, &(_, v)) in self.steps.iter().enumerate() {
            match best {
                Some(b) if !(v < self.steps[b].1) => {}
                _ => best = Some(i),
            }
        }
        best
    }
}

/// The value sequence `(y_1, ..., y_m)` of a trace, in step order.
pub fn value_projection<V: Observation>(trace: &Trace<V>) -> Vec<V> {
    trace.steps.iter().map(|&(_, v)| v).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_keeps_step_order() {
        let t = Trace::from_steps(vec![(0, 0u32), (1, 1)]).unwrap();
        assert_eq!(value_projection(&t), vec![0, 1]);
        let t = Trace::from_steps(vec![(2, 5u32), (0, 5)]).unwrap();
        assert_eq!(value_projection(&t), vec![5, 5]);
        assert!(value_projection(&Trace::<u32>::empty()).is_empty());
    }

    #[test]
    fn traces_reject_revisits() {
        let err = Trace::from_steps(vec![(0, 1.0), (0, 2.0)]).unwrap_err();
        assert!(matches!(err, Error::PolicyIntegrity(_)));
    }

    #[test]
    fn domain_validation() {
        assert!(FiniteDomain::with_sizes(0, 2).is_err());
        assert!(FiniteDomain::with_sizes(2, 0).is_err());
        let dup = FiniteDomain::new(vec!["a".into(), "a".into()], vec!["0".into()]);
        assert!(matches!(dup, Err(Error::Config(_))));
        let d = FiniteDomain::with_sizes(3, 2).unwrap();
        assert_eq!((d.n_points(), d.n_values()), (3, 2));
    }

    #[test]
    fn best_step_prefers_earliest_tie() {
        let t = Trace::from_steps(vec![(3, 2.0), (1, 1.0), (0, 1.0)]).unwrap();
        assert_eq!(t.best_step(), Some(1));
    }
}
