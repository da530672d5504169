//! Exact verification over finite function spaces.
//!
//! A function `h: X -> Y` is addressed by its mixed-radix index: the value at
//! the first domain point is the most significant digit, so with `Y = {0, 1}`
//! the index of `h = (h(x1), h(x2)) = (0, 1)` is `1`. All probabilities are
//! exact rationals.

mod law;
mod orbit;
mod scan;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seed::task_rng;
use crate::trace_core::FiniteDomain;
use crate::{Error, Result};

pub use law::{
    check_all_pairs, check_nfl_pair, exact_measure_law, exact_value_law, AllPairsReport,
    LawTable, VerificationReport,
};
pub use orbit::{is_cup, orbit_partition, permutation_closure, MAX_CUP_POINTS};
pub use scan::{schumacher_scan, ScanEntry, ScanMode, ScanReport};

/// Default cap on `|Y|^|X|`.
pub const DEFAULT_SPACE_CAP: u64 = 1_000_000;

/// The space `Y^X` of total maps, enumerated by index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionSpace {
    domain: FiniteDomain,
    size: u64,
}

impl FunctionSpace {
    pub fn new(domain: FiniteDomain) -> Result<Self> {
        Self::with_cap(domain, DEFAULT_SPACE_CAP)
    }

    pub fn with_cap(domain: FiniteDomain, cap: u64) -> Result<Self> {
        let size = (domain.n_values() as u128).checked_pow(domain.n_points() as u32);
        match size {
            Some(s) if s <= cap as u128 => Ok(Self {
                domain,
                size: s as u64,
            }),
            _ => Err(Error::size(
                format!("|Y|^|X| = {}^{}", domain.n_values(), domain.n_points()),
                size.unwrap_or(u128::MAX),
                cap as u128,
            )),
        }
    }

    pub fn with_sizes(n_points: usize, n_values: usize) -> Result<Self> {
        Self::new(FiniteDomain::with_sizes(n_points, n_values)?)
    }

    pub fn domain(&self) -> &FiniteDomain {
        &self.domain
    }

    pub fn n_points(&self) -> usize {
        self.domain.n_points()
    }

    pub fn n_values(&self) -> usize {
        self.domain.n_values()
    }

    /// Number of functions, `|Y|^|X|`.
    pub fn size(&self) -> u64 {
        self.size
    }

    /// Values of function `index` at each domain point.
    pub fn decode(&self, index: u64) -> Vec<u32> {
        let mut out = vec![0u32; self.n_points()];
        self.decode_into(index, &mut out);
        out
    }

    pub fn decode_into(&self, mut index: u64, out: &mut [u32]) {
        let k = self.n_values() as u64;
        for slot in out.iter_mut().rev() {
            *slot = (index % k) as u32;
            index /= k;
        }
    }

    pub fn encode(&self, values: &[u32]) -> u64 {
        let k = self.n_values() as u64;
        values.iter().fold(0, |acc, &v| acc * k + u64::from(v))
    }

    /// Digit string of a function, e.g. `"01"`.
    pub fn label(&self, index: u64) -> String {
        self.decode(index)
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(if self.n_values() > 10 { "," } else { "" })
    }
}

/// Set of function indices: a bitset for spaces of at most 64 functions,
/// otherwise a sorted index list.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum FunctionSet {
    Bits(u64),
    List(Vec<u64>),
}

impl FunctionSet {
    pub fn from_indices(space: &FunctionSpace, indices: impl IntoIterator<Item = u64>) -> Result<Self> {
        let mut list: Vec<u64> = indices.into_iter().collect();
        if let Some(&bad) = list.iter().find(|&&i| i >= space.size()) {
            return Err(Error::config(format!(
                "function index {bad} outside a space of {} functions",
                space.size()
            )));
        }
        list.sort_unstable();
        list.dedup();
        Ok(if space.size() <= 64 {
            FunctionSet::Bits(list.iter().fold(0u64, |b, &i| b | (1 << i)))
        } else {
            FunctionSet::List(list)
        })
    }

    pub fn all(space: &FunctionSpace) -> Self {
        Self::from_indices(space, 0..space.size()).expect("in range")
    }

    pub fn contains(&self, index: u64) -> bool {
        match self {
            FunctionSet::Bits(b) => index < 64 && b & (1 << index) != 0,
            FunctionSet::List(l) => l.binary_search(&index).is_ok(),
        }
    }

    pub fn indices(&self) -> Vec<u64> {
        match self {
            FunctionSet::Bits(b) => (0..64).filter(|i| b & (1 << i) != 0).collect(),
            FunctionSet::List(l) => l.clone(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            FunctionSet::Bits(b) => b.count_ones() as usize,
            FunctionSet::List(l) => l.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Multiset of values of a function, as its sorted value list. Two functions
/// share an orbit under domain permutations iff their keys agree.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OrbitKey(pub Vec<u32>);

impl OrbitKey {
    pub fn of(values: &[u32]) -> Self {
        let mut v = values.to_vec();
        v.sort_unstable();
        OrbitKey(v)
    }
}

impl fmt::Display for OrbitKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", parts.join(","))
    }
}

impl FromStr for OrbitKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut values = s
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<u32>()
                    .map_err(|_| Error::config(format!("bad orbit key {s:?}")))
            })
            .collect::<Result<Vec<u32>>>()?;
        values.sort_unstable();
        Ok(OrbitKey(values))
    }
}

/// Probability measure on `Y^X`.
#[derive(Debug, Clone, PartialEq)]
pub enum FunctionMeasure {
    UniformAll,
    UniformSubset(FunctionSet),
    /// Total mass per orbit, spread evenly over the orbit's members.
    OrbitUniform(BTreeMap<OrbitKey, BigRational>),
}

/// Weight per function: either equal weights on a member set, or explicit.
pub(crate) enum Weights {
    Uniform(Vec<u64>),
    Explicit(Vec<(u64, BigRational)>),
}

impl FunctionMeasure {
    /// Orbit masses from nonnegative integer weights, normalized exactly.
    pub fn orbit_from_integer_weights(weights: BTreeMap<OrbitKey, u64>) -> Result<Self> {
        let total: u64 = weights.values().sum();
        if total == 0 {
            return Err(Error::config("orbit weights sum to zero"));
        }
        Ok(FunctionMeasure::OrbitUniform(
            weights
                .into_iter()
                .map(|(k, w)| (k, BigRational::new(BigInt::from(w), BigInt::from(total))))
                .collect(),
        ))
    }

    /// Random orbit-uniform measure with integer orbit weights in `0..=9`.
    pub fn random_orbit_uniform(space: &FunctionSpace, seed: u64) -> Result<Self> {
        let orbits = orbit_partition(space)?;
        let mut rng = task_rng(seed, 0);
        loop {
            let weights: BTreeMap<OrbitKey, u64> = orbits
                .keys()
                .map(|k| (k.clone(), rng.random_range(0..=9)))
                .collect();
            if weights.values().any(|&w| w > 0) {
                return Self::orbit_from_integer_weights(weights);
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FunctionMeasure::UniformAll => "uniform-on-all",
            FunctionMeasure::UniformSubset(_) => "uniform-on-subset",
            FunctionMeasure::OrbitUniform(_) => "orbit-uniform",
        }
    }

    /// Functions with positive weight, after checking normalization.
    pub(crate) fn weights(&self, space: &FunctionSpace) -> Result<Weights> {
        match self {
            FunctionMeasure::UniformAll => Ok(Weights::Uniform((0..space.size()).collect())),
            FunctionMeasure::UniformSubset(set) => {
                let members = set.indices();
                if members.is_empty() {
                    return Err(Error::config("uniform measure on an empty subset"));
                }
                if let Some(&bad) = members.iter().find(|&&i| i >= space.size()) {
                    return Err(Error::config(format!("function index {bad} outside the space")));
                }
                Ok(Weights::Uniform(members))
            }
            FunctionMeasure::OrbitUniform(masses) => {
                if masses.values().any(|w| w.is_negative()) {
                    return Err(Error::config("negative orbit weight"));
                }
                let total: BigRational = masses.values().cloned().sum();
                if !total.is_one() {
                    return Err(Error::config(format!("orbit weights sum to {total}, not 1")));
                }
                let orbits = orbit_partition(space)?;
                let mut out = Vec::new();
                for (key, mass) in masses {
                    let members = orbits.get(key).ok_or_else(|| {
                        Error::config(format!("orbit key {key} does not occur in this space"))
                    })?;
                    if mass.is_zero() {
                        continue;
                    }
                    let each = mass / BigRational::from_integer(BigInt::from(members.len()));
                    out.extend(members.iter().map(|&h| (h, each.clone())));
                }
                out.sort_by_key(|(h, _)| *h);
                Ok(Weights::Explicit(out))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_round_trips() {
        let space = FunctionSpace::with_sizes(3, 2).unwrap();
        assert_eq!(space.size(), 8);
        assert_eq!(space.decode(1), vec![0, 0, 1]);
        assert_eq!(space.label(6), "110");
        for i in 0..8 {
            assert_eq!(space.encode(&space.decode(i)), i);
        }
    }

    #[test]
    fn space_cap() {
        let d = FiniteDomain::with_sizes(21, 2).unwrap();
        assert!(matches!(FunctionSpace::new(d), Err(Error::Size { .. })));
    }

    #[test]
    fn sets_switch_representation() {
        let small = FunctionSpace::with_sizes(2, 2).unwrap();
        let s = FunctionSet::from_indices(&small, [3, 0, 3]).unwrap();
        assert!(matches!(s, FunctionSet::Bits(0b1001)));
        assert_eq!(s.indices(), vec![0, 3]);
        let big = FunctionSpace::with_sizes(4, 3).unwrap();
        let s = FunctionSet::from_indices(&big, [70, 5]).unwrap();
        assert_eq!(s, FunctionSet::List(vec![5, 70]));
        assert!(s.contains(70) && !s.contains(6));
        assert!(FunctionSet::from_indices(&small, [4]).is_err());
    }

    #[test]
    fn orbit_keys_parse() {
        let k: OrbitKey = "1,0, 1".parse().unwrap();
        assert_eq!(k, OrbitKey(vec![0, 1, 1]));
        assert_eq!(k.to_string(), "0,1,1");
    }

    #[test]
    fn measures_must_normalize() {
        let space = FunctionSpace::with_sizes(2, 2).unwrap();
        let empty = FunctionMeasure::UniformSubset(FunctionSet::from_indices(&space, []).unwrap());
        assert!(matches!(empty.weights(&space), Err(Error::Config(_))));
        let mut masses = BTreeMap::new();
        masses.insert(OrbitKey(vec![0, 0]), BigRational::new(1.into(), 2.into()));
        let half = FunctionMeasure::OrbitUniform(masses);
        assert!(matches!(half.weights(&space), Err(Error::Config(_))));
    }

    #[test]
    fn random_orbit_measures_are_normalized() {
        let space = FunctionSpace::with_sizes(3, 2).unwrap();
        for seed in 0..5 {
            let m = FunctionMeasure::random_orbit_uniform(&space, seed).unwrap();
            assert!(m.weights(&space).is_ok());
        }
    }
}
