use std::collections::BTreeSet;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::law::{exact_value_law, format_values};
use super::{is_cup, orbit_partition, FunctionMeasure, FunctionSet, FunctionSpace};
use crate::seed::task_rng;
use crate::trace_core::{enumerate_policies, EnumerationCaps, Policy};
use crate::{Error, Result};

/// Largest space scanned exhaustively by default.
pub const EXHAUSTIVE_SPACE_LIMIT: u64 = 16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum ScanMode {
    /// Exhaustive when `|Y|^|X| <= 16`, else sampled with the given settings.
    Auto { samples: usize, seed: u64 },
    Exhaustive,
    /// Seeded random subsets: half unions of orbits (closed under permutation),
    /// half arbitrary subsets.
    Sampled { samples: usize, seed: u64 },
    /// Explicit subsets given as function index lists.
    Explicit { subsets: Vec<Vec<u64>> },
}

impl Default for ScanMode {
    fn default() -> Self {
        ScanMode::Auto {
            samples: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanEntry {
    /// Members, as digit strings.
    pub subset: Vec<String>,
    pub cup: bool,
    pub nfl: bool,
    /// Empty subsets carry no measure; both verdicts hold vacuously.
    pub vacuous: bool,
    /// Two policies with different laws and the first outcome where they differ.
    pub witness: Option<Witness>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub policy_a: String,
    pub policy_b: String,
    pub outcome: String,
    pub probability_a: String,
    pub probability_b: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanReport {
    pub n_points: usize,
    pub n_values: usize,
    pub steps: usize,
    pub exhaustive: bool,
    pub policies: usize,
    pub scanned: usize,
    pub cup_subsets: usize,
    pub nfl_subsets: usize,
    /// Subsets where closure under permutation and law-equality disagree.
    pub disagreements: usize,
    pub entries: Vec<ScanEntry>,
}

impl ScanReport {
    pub fn characterization_holds(&self) -> bool {
        self.disagreements == 0
    }
}

fn sampled_subsets(space: &FunctionSpace, samples: usize, seed: u64) -> Result<Vec<FunctionSet>> {
    let orbits: Vec<Vec<u64>> = orbit_partition(space)?.into_values().collect();
    let mut rng = task_rng(seed, 0);
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(samples);
    let mut attempts = 0;
    while out.len() < samples && attempts < samples * 20 {
        attempts += 1;
        let members: Vec<u64> = if out.len() % 2 == 0 {
            orbits
                .iter()
                .filter(|_| rng.random_bool(0.5))
                .flatten()
                .copied()
                .collect()
        } else {
            let density: f64 = rng.random_range(0.05..0.95);
            (0..space.size()).filter(|_| rng.random_bool(density)).collect()
        };
        if seen.insert(members.clone()) {
            out.push(FunctionSet::from_indices(space, members)?);
        }
    }
    Ok(out)
}

fn scan_subset(space: &FunctionSpace, policies: &[Policy], set: &FunctionSet, m: usize) -> Result<ScanEntry> {
    let subset: Vec<String> = set.indices().into_iter().map(|h| space.label(h)).collect();
    let cup = is_cup(space, set)?;
    if set.is_empty() {
        return Ok(ScanEntry {
            subset,
            cup,
            nfl: true,
            vacuous: true,
            witness: None,
        });
    }
    let measure = FunctionMeasure::UniformSubset(set.clone());
    let reference = exact_value_law(space, &measure, &policies[0], m)?;
    let mut witness = None;
    for p in &policies[1..] {
        let law = exact_value_law(space, &measure, p, m)?;
        let (_, diff) = reference.compare(&law);
        if let Some(y) = diff {
            witness = Some(Witness {
                policy_a: policies[0].to_string(),
                policy_b: p.to_string(),
                outcome: format_values(&y),
                probability_a: reference.probability(&y).to_string(),
                probability_b: law.probability(&y).to_string(),
            });
            break;
        }
    }
    Ok(ScanEntry {
        subset,
        cup,
        nfl: witness.is_none(),
        vacuous: false,
        witness,
    })
}

/// For each scanned subset `F`, compares closure under permutation with
/// law-equality of every enumerated policy under the uniform measure on `F`.
pub fn schumacher_scan(
    space: &FunctionSpace,
    m: usize,
    mode: &ScanMode,
    caps: EnumerationCaps,
) -> Result<ScanReport> {
    let policies = enumerate_policies(space.domain(), m, caps)?;
    let size = space.size();
    let (subsets, exhaustive) = match mode {
        ScanMode::Exhaustive | ScanMode::Auto { .. } if size <= EXHAUSTIVE_SPACE_LIMIT => {
            ((0..1u64 << size).map(FunctionSet::Bits).collect::<Vec<_>>(), true)
        }
        ScanMode::Exhaustive => {
            return Err(Error::size(
                format!("exhaustive subset scan over 2^{size} subsets; use sampled mode"),
                size as u128,
                EXHAUSTIVE_SPACE_LIMIT as u128,
            ))
        }
        ScanMode::Auto { samples, seed } | ScanMode::Sampled { samples, seed } => {
            (sampled_subsets(space, *samples, *seed)?, false)
        }
        ScanMode::Explicit { subsets } => (
            subsets
                .iter()
                .map(|s| FunctionSet::from_indices(space, s.iter().copied()))
                .collect::<Result<Vec<_>>>()?,
            false,
        ),
    };
    let entries = subsets
        .par_iter()
        .map(|set| scan_subset(space, &policies, set, m))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScanReport {
        n_points: space.n_points(),
        n_values: space.n_values(),
        steps: m,
        exhaustive,
        policies: policies.len(),
        scanned: entries.len(),
        cup_subsets: entries.iter().filter(|e| e.cup).count(),
        nfl_subsets: entries.iter().filter(|e| e.nfl).count(),
        disagreements: entries.iter().filter(|e| e.cup != e.nfl).count(),
        entries,
    })
}
