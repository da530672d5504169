use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FunctionMeasure, FunctionSpace, Weights};
use crate::trace_core::{
    apply_measure, enumerate_policies, run_policy, value_projection, EnumerationCaps, Outcome,
    PerformanceMeasure, Policy,
};
use crate::{Error, Result};

/// Functions per parallel chunk when enumerating a space.
const CHUNK: u64 = 4096;

/// Exact probability of each outcome.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LawTable<K: Ord> {
    outcomes: BTreeMap<K, BigRational>,
}

impl<K: Ord + Clone> LawTable<K> {
    fn from_map(outcomes: BTreeMap<K, BigRational>) -> Self {
        Self { outcomes }
    }

    pub fn probability(&self, outcome: &K) -> BigRational {
        self.outcomes.get(outcome).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn outcomes(&self) -> impl Iterator<Item = (&K, &BigRational)> {
        self.outcomes.iter()
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn total(&self) -> BigRational {
        self.outcomes.values().cloned().sum()
    }

    /// Law of `f(outcome)`.
    pub fn push_forward<J: Ord + Clone>(&self, f: impl Fn(&K) -> J) -> LawTable<J> {
        let mut out: BTreeMap<J, BigRational> = BTreeMap::new();
        for (k, p) in &self.outcomes {
            *out.entry(f(k)).or_insert_with(BigRational::zero) += p;
        }
        LawTable::from_map(out)
    }

    /// Largest `|P(k) - Q(k)|` and the first outcome (in key order) where the
    /// laws differ.
    pub fn compare(&self, other: &Self) -> (BigRational, Option<K>) {
        let mut keys: Vec<&K> = self.outcomes.keys().chain(other.outcomes.keys()).collect();
        keys.sort();
        keys.dedup();
        let mut max = BigRational::zero();
        let mut witness = None;
        for k in keys {
            let d = (self.probability(k) - other.probability(k)).abs();
            if !d.is_zero() && witness.is_none() {
                witness = Some(k.clone());
            }
            if d > max {
                max = d;
            }
        }
        (max, witness)
    }
}

/// Text row of a law table, for reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LawRow {
    pub outcome: String,
    pub probability: String,
}

impl LawTable<Vec<u32>> {
    pub fn rows(&self) -> Vec<LawRow> {
        self.outcomes
            .iter()
            .map(|(k, p)| LawRow {
                outcome: format_values(k),
                probability: p.to_string(),
            })
            .collect()
    }
}

pub(crate) fn format_values(values: &[u32]) -> String {
    let parts: Vec<String> = values.iter().map(|v| v.to_string()).collect();
    format!("({})", parts.join(","))
}

/// Unnormalized law: integer counts over a common denominator for uniform
/// weights, exact rationals otherwise. Equal measures give equal variants, so
/// `==` decides law equality exactly.
#[derive(Debug, PartialEq, Eq)]
enum RawLaw<K: Ord> {
    Counts(BTreeMap<K, u64>, u64),
    Exact(BTreeMap<K, BigRational>),
}

impl<K: Ord> RawLaw<K> {
    fn into_map(self) -> BTreeMap<K, BigRational> {
        match self {
            RawLaw::Counts(counts, total) => {
                let denom = BigInt::from(total);
                counts
                    .into_iter()
                    .map(|(k, c)| (k, BigRational::new(BigInt::from(c), denom.clone())))
                    .collect()
            }
            RawLaw::Exact(map) => map,
        }
    }
}

fn accumulate_raw<K: Ord + Clone + Send>(
    space: &FunctionSpace,
    weights: &Weights,
    outcome_of: impl Fn(&[u32]) -> Result<K> + Sync,
) -> Result<RawLaw<K>> {
    match weights {
        Weights::Uniform(members) => {
            let counts = members
                .par_chunks(CHUNK as usize)
                .map(|chunk| {
                    let mut buf = vec![0u32; space.n_points()];
                    let mut local: BTreeMap<K, u64> = BTreeMap::new();
                    for &h in chunk {
                        space.decode_into(h, &mut buf);
                        *local.entry(outcome_of(&buf)?).or_insert(0) += 1;
                    }
                    Ok(local)
                })
                .try_reduce(BTreeMap::new, |mut a, b| {
                    for (k, c) in b {
                        *a.entry(k).or_insert(0) += c;
                    }
                    Ok(a)
                })?;
            Ok(RawLaw::Counts(counts, members.len() as u64))
        }
        Weights::Explicit(list) => list
            .par_chunks(CHUNK as usize)
            .map(|chunk| {
                let mut buf = vec![0u32; space.n_points()];
                let mut local: BTreeMap<K, BigRational> = BTreeMap::new();
                for (h, w) in chunk {
                    space.decode_into(*h, &mut buf);
                    *local.entry(outcome_of(&buf)?).or_insert_with(BigRational::zero) += w;
                }
                Ok(local)
            })
            .try_reduce(BTreeMap::new, |mut a, b| {
                for (k, p) in b {
                    *a.entry(k).or_insert_with(BigRational::zero) += p;
                }
                Ok(a)
            })
            .map(RawLaw::Exact),
    }
}

fn accumulate<K: Ord + Clone + Send>(
    space: &FunctionSpace,
    weights: &Weights,
    outcome_of: impl Fn(&[u32]) -> Result<K> + Sync,
) -> Result<BTreeMap<K, BigRational>> {
    Ok(accumulate_raw(space, weights, outcome_of)?.into_map())
}

fn check_steps(space: &FunctionSpace, m: usize) -> Result<()> {
    if m > space.n_points() {
        return Err(Error::Capacity {
            requested: m,
            available: space.n_points(),
        });
    }
    Ok(())
}

/// Law of the sampled value sequence `(y_1, ..., y_m)` under `measure`.
pub fn exact_value_law(
    space: &FunctionSpace,
    measure: &FunctionMeasure,
    policy: &Policy,
    m: usize,
) -> Result<LawTable<Vec<u32>>> {
    check_steps(space, m)?;
    let weights = measure.weights(space)?;
    let map = accumulate(space, &weights, |h| {
        Ok(value_projection(&run_policy(policy, h, m)?))
    })?;
    Ok(LawTable::from_map(map))
}

/// Law of `C(y_1, ..., y_m)` under `measure`.
pub fn exact_measure_law(
    space: &FunctionSpace,
    measure: &FunctionMeasure,
    policy: &Policy,
    m: usize,
    c: &PerformanceMeasure,
) -> Result<LawTable<Outcome<u32>>> {
    check_steps(space, m)?;
    let weights = measure.weights(space)?;
    let map = accumulate(space, &weights, |h| {
        apply_measure(c, &value_projection(&run_policy(policy, h, m)?))
    })?;
    Ok(LawTable::from_map(map))
}

/// Exact comparison of two policies' value laws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub equal: bool,
    /// Exact rational, as text.
    pub max_discrepancy: String,
    pub max_discrepancy_f64: f64,
    pub witness: Option<Vec<u32>>,
    pub probability_a: Option<String>,
    pub probability_b: Option<String>,
}

fn report_from(a: &LawTable<Vec<u32>>, b: &LawTable<Vec<u32>>) -> VerificationReport {
    let (max, witness) = a.compare(b);
    report_with(a, b, &max, witness)
}

fn report_with(
    a: &LawTable<Vec<u32>>,
    b: &LawTable<Vec<u32>>,
    max: &BigRational,
    witness: Option<Vec<u32>>,
) -> VerificationReport {
    VerificationReport {
        equal: witness.is_none(),
        max_discrepancy_f64: max.to_f64().unwrap_or(f64::NAN),
        max_discrepancy: max.to_string(),
        probability_a: witness.as_ref().map(|w| a.probability(w).to_string()),
        probability_b: witness.as_ref().map(|w| b.probability(w).to_string()),
        witness,
    }
}

pub fn check_nfl_pair(
    space: &FunctionSpace,
    measure: &FunctionMeasure,
    policy_a: &Policy,
    policy_b: &Policy,
    m: usize,
) -> Result<VerificationReport> {
    let a = exact_value_law(space, measure, policy_a, m)?;
    let b = exact_value_law(space, measure, policy_b, m)?;
    Ok(report_from(&a, &b))
}

/// Law equality across every enumerated policy pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllPairsReport {
    pub n_points: usize,
    pub n_values: usize,
    pub steps: usize,
    pub measure: String,
    pub policies: usize,
    pub pairs: u128,
    pub all_equal: bool,
    pub max_discrepancy: String,
    /// First policy whose law differs from the first policy's, with the comparison.
    pub counterexample: Option<(String, String, VerificationReport)>,
}

/// Checks every pair of enumerated policies. Laws are computed once per
/// policy; since equality is transitive, comparing each law against the first
/// decides all `k (k - 1) / 2` pairs.
pub fn check_all_pairs(
    space: &FunctionSpace,
    measure: &FunctionMeasure,
    m: usize,
    caps: EnumerationCaps,
) -> Result<AllPairsReport> {
    check_steps(space, m)?;
    let policies = enumerate_policies(space.domain(), m, caps)?;
    let weights = measure.weights(space)?;
    let raw = |p: &Policy| {
        accumulate_raw(space, &weights, |h| Ok(value_projection(&run_policy(p, h, m)?)))
    };
    let reference = raw(&policies[0])?;
    let differing: Vec<usize> = policies
        .par_iter()
        .enumerate()
        .skip(1)
        .map(|(i, p)| Ok((raw(p)? != reference).then_some(i)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let reference = LawTable::from_map(reference.into_map());
    debug_assert!(reference.total().is_one());
    let mut max = BigRational::zero();
    let mut counterexample = None;
    for &i in &differing {
        let law = LawTable::from_map(raw(&policies[i])?.into_map());
        let (d, witness) = reference.compare(&law);
        if counterexample.is_none() {
            let report = report_with(&reference, &law, &d, witness);
            counterexample = Some((policies[0].to_string(), policies[i].to_string(), report));
        }
        if d > max {
            max = d;
        }
    }
    let k = policies.len() as u128;
    Ok(AllPairsReport {
        n_points: space.n_points(),
        n_values: space.n_values(),
        steps: m,
        measure: measure.name().into(),
        policies: policies.len(),
        pairs: k * (k - 1) / 2,
        all_equal: counterexample.is_none(),
        max_discrepancy: max.to_string(),
        counterexample,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{FunctionSet, OrbitKey};
    use super::*;
    use crate::trace_core::RuleTable;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn uniform_two_points_gives_quarter_each() {
        let space = FunctionSpace::with_sizes(2, 2).unwrap();
        for p in [Policy::FixedSequence(vec![0, 1]), Policy::FixedSequence(vec![1, 0])] {
            let law = exact_value_law(&space, &FunctionMeasure::UniformAll, &p, 2).unwrap();
            assert_eq!(law.len(), 4);
            for y in [[0, 0], [0, 1], [1, 0], [1, 1]] {
                assert_eq!(law.probability(&y.to_vec()), q(1, 4));
            }
        }
    }

    #[test]
    fn constants_force_repeats() {
        let space = FunctionSpace::with_sizes(2, 2).unwrap();
        let consts = FunctionSet::from_indices(&space, [0, 3]).unwrap();
        let law = exact_value_law(
            &space,
            &FunctionMeasure::UniformSubset(consts),
            &Policy::FixedSequence(vec![1, 0]),
            2,
        )
        .unwrap();
        assert_eq!(law.len(), 2);
        assert_eq!(law.probability(&vec![0, 0]), q(1, 2));
        assert_eq!(law.probability(&vec![1, 1]), q(1, 2));
    }

    #[test]
    fn fixed_and_adaptive_agree_on_three_points() {
        let space = FunctionSpace::with_sizes(3, 2).unwrap();
        let fixed = Policy::FixedSequence(vec![0, 1, 2]);
        // start at x2; after 0 go to x1 then x3, after 1 go to x3 then x1
        let adaptive = Policy::RuleTable(RuleTable::new(3, 2, 3, vec![1, 0, 2, 2, 2, 0, 0]).unwrap());
        let a = exact_value_law(&space, &FunctionMeasure::UniformAll, &fixed, 3).unwrap();
        let b = exact_value_law(&space, &FunctionMeasure::UniformAll, &adaptive, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.total(), q(1, 1));
    }

    #[test]
    fn restricted_subset_breaks_equality() {
        // F = {h : h(x1) = 0} = {00, 01}
        let space = FunctionSpace::with_sizes(2, 2).unwrap();
        let f = FunctionSet::from_indices(&space, [0, 1]).unwrap();
        let r = check_nfl_pair(
            &space,
            &FunctionMeasure::UniformSubset(f),
            &Policy::FixedSequence(vec![0]),
            &Policy::FixedSequence(vec![1]),
            1,
        )
        .unwrap();
        assert!(!r.equal);
        assert_eq!(r.witness, Some(vec![0]));
        assert_eq!(r.probability_a.as_deref(), Some("1"));
        assert_eq!(r.probability_b.as_deref(), Some("1/2"));
        assert_eq!(r.max_discrepancy, "1/2");
    }

    #[test]
    fn point_mass_distinguishes_visit_orders() {
        let space = FunctionSpace::with_sizes(2, 2).unwrap();
        let single = FunctionSet::from_indices(&space, [1]).unwrap();
        let r = check_nfl_pair(
            &space,
            &FunctionMeasure::UniformSubset(single),
            &Policy::FixedSequence(vec![0, 1]),
            &Policy::FixedSequence(vec![1, 0]),
            2,
        )
        .unwrap();
        assert!(!r.equal);
        assert_eq!(r.max_discrepancy, "1");
    }

    #[test]
    fn uniform_all_pairs_equal() {
        for (n, k) in [(2, 2), (3, 2), (3, 3)] {
            let space = FunctionSpace::with_sizes(n, k).unwrap();
            for m in 0..=n {
                let r = check_all_pairs(&space, &FunctionMeasure::UniformAll, m, EnumerationCaps::default())
                    .unwrap();
                assert!(r.all_equal, "{n} {k} {m}");
                assert_eq!(r.max_discrepancy, "0");
            }
        }
    }

    #[test]
    fn min_law_is_push_forward_of_value_law() {
        let space = FunctionSpace::with_sizes(3, 3).unwrap();
        let measure = FunctionMeasure::random_orbit_uniform(&space, 4).unwrap();
        for p in enumerate_policies(space.domain(), 2, EnumerationCaps::default()).unwrap().iter().take(6) {
            let values = exact_value_law(&space, &measure, p, 2).unwrap();
            let via = values.push_forward(|ys| Outcome::Value(*ys.iter().min().unwrap()));
            let direct = exact_measure_law(&space, &measure, p, 2, &PerformanceMeasure::Min).unwrap();
            assert_eq!(via.outcomes().collect::<Vec<_>>(), direct.outcomes().collect::<Vec<_>>());
        }
    }

    #[test]
    fn orbit_uniform_measures_give_equal_laws() {
        let space = FunctionSpace::with_sizes(3, 2).unwrap();
        let mut w = BTreeMap::new();
        w.insert(OrbitKey(vec![0, 0, 1]), 3);
        w.insert(OrbitKey(vec![1, 1, 1]), 1);
        let measure = FunctionMeasure::orbit_from_integer_weights(w).unwrap();
        let r = check_all_pairs(&space, &measure, 3, EnumerationCaps::default()).unwrap();
        assert!(r.all_equal);
    }

    #[test]
    fn too_many_steps() {
        let space = FunctionSpace::with_sizes(2, 2).unwrap();
        let err = exact_value_law(&space, &FunctionMeasure::UniformAll, &Policy::Rank(crate::trace_core::RankRule::BisectBest), 3);
        assert!(matches!(err, Err(Error::Capacity { .. })));
    }

    #[test]
    fn chunked_accumulation_matches_sequential() {
        // 3^8 functions span two chunks
        let space = FunctionSpace::with_sizes(8, 3).unwrap();
        let p = Policy::Rank(crate::trace_core::RankRule::GreedyNeighbor { start: 3 });
        let law = exact_value_law(&space, &FunctionMeasure::UniformAll, &p, 3).unwrap();
        let mut counts: BTreeMap<Vec<u32>, i64> = BTreeMap::new();
        for h in 0..space.size() {
            let ys = value_projection(&run_policy(&p, &space.decode(h), 3).unwrap());
            *counts.entry(ys).or_insert(0) += 1;
        }
        for (k, c) in counts {
            assert_eq!(law.probability(&k), q(c, 6561));
        }
        assert!(law.total().is_one());
    }
}
