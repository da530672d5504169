use serde::{Deserialize, Serialize};

use super::Observation;
use crate::{Error, Result};

/// Performance measure `C` applied to an observed value sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PerformanceMeasure {
    Min,
    Max,
    IdentityVector,
    /// Best (minimal) value among the first `step` observations.
    BestSoFar { step: usize },
    /// 1-based index of the first observation `<= threshold`.
    ThresholdHit { threshold: f64 },
}

impl PerformanceMeasure {
    pub fn is_scalar(&self) -> bool {
        !matches!(self, PerformanceMeasure::IdentityVector)
    }

    pub fn name(&self) -> String {
        match self {
            Self::Min => "min".into(),
            Self::Max => "max".into(),
            Self::IdentityVector => "identity".into(),
            Self::BestSoFar { step } => format!("best-so-far@{step}"),
            Self::ThresholdHit { threshold } => format!("hit<={threshold}"),
        }
    }
}

/// Result of applying a measure.
#[derive(Debug, Clone, PartialEq, PartialOrd, Serialize, Deserialize)]
pub enum Outcome<V> {
    Value(V),
    Vector(Vec<V>),
    /// First hitting step, `None` if never hit.
    HitStep(Option<usize>),
}

impl<V: Observation> Outcome<V> {
    /// Scalar reading for statistical tests; a miss maps to `len + 1`.
    pub fn as_scalar(&self, len: usize) -> Option<f64> {
        match self {
            Outcome::Value(v) => Some(v.as_real()),
            Outcome::HitStep(Some(k)) => Some(*k as f64),
            Outcome::HitStep(None) => Some((len + 1) as f64),
            Outcome::Vector(_) => None,
        }
    }
}

// Label outcomes are totally ordered, which lets exact law tables key on them.
impl Eq for Outcome<u32> {}

impl Ord for Outcome<u32> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.partial_cmp(other).expect("label outcomes are totally ordered")
    }
}

fn extremum<V: Observation>(values: &[V], want_less: bool) -> V {
    let mut best = values[0];
    for &v in &values[1..] {
        if (want_less && v < best) || (!want_less && v > best) {
            best = v;
        }
    }
    best
}

pub fn apply_measure<V: Observation>(c: &PerformanceMeasure, values: &[V]) -> Result<Outcome<V>> {
    if values.is_empty() && c.is_scalar() {
        return Err(Error::domain(format!(
            "measure {} needs a nonempty value sequence",
            c.name()
        )));
    }
    Ok(match *c {
        PerformanceMeasure::Min => Outcome::Value(extremum(values, true)),
        PerformanceMeasure::Max => Outcome::Value(extremum(values, false)),
        PerformanceMeasure::IdentityVector => Outcome::Vector(values.to_vec()),
        PerformanceMeasure::BestSoFar { step } => {
            if step == 0 || step > values.len() {
                return Err(Error::domain(format!(
                    "best-so-far at step {step} on a sequence of length {}",
                    values.len()
                )));
            }
            Outcome::Value(extremum(&values[..step], true))
        }
        PerformanceMeasure::ThresholdHit { threshold } => Outcome::HitStep(
            values
                .iter()
                .position(|v| v.as_real() <= threshold)
                .map(|i| i + 1),
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_measures() {
        let ys = [3u32, 1, 2];
        assert_eq!(apply_measure(&PerformanceMeasure::Min, &ys).unwrap(), Outcome::Value(1));
        assert_eq!(apply_measure(&PerformanceMeasure::Max, &ys).unwrap(), Outcome::Value(3));
        assert_eq!(
            apply_measure(&PerformanceMeasure::BestSoFar { step: 2 }, &ys).unwrap(),
            Outcome::Value(1)
        );
        assert_eq!(
            apply_measure(&PerformanceMeasure::BestSoFar { step: 1 }, &ys).unwrap(),
            Outcome::Value(3)
        );
        assert_eq!(
            apply_measure(&PerformanceMeasure::ThresholdHit { threshold: 2.0 }, &ys).unwrap(),
            Outcome::HitStep(Some(2))
        );
        assert_eq!(
            apply_measure(&PerformanceMeasure::ThresholdHit { threshold: 0.5 }, &ys).unwrap(),
            Outcome::HitStep(None)
        );
    }

    #[test]
    fn identity_returns_sequence() {
        let ys = [3.0, 1.0, 2.0];
        assert_eq!(
            apply_measure(&PerformanceMeasure::IdentityVector, &ys).unwrap(),
            Outcome::Vector(vec![3.0, 1.0, 2.0])
        );
        assert_eq!(
            apply_measure::<f64>(&PerformanceMeasure::IdentityVector, &[]).unwrap(),
            Outcome::Vector(vec![])
        );
    }

    #[test]
    fn empty_scalar_is_domain_error() {
        let err = apply_measure::<u32>(&PerformanceMeasure::Min, &[]).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
        assert!(apply_measure(&PerformanceMeasure::BestSoFar { step: 4 }, &[1u32]).is_err());
    }

    #[test]
    fn miss_maps_past_the_end() {
        let o: Outcome<f64> = Outcome::HitStep(None);
        assert_eq!(o.as_scalar(3), Some(4.0));
    }
}
