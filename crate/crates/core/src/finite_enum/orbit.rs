use std::collections::{BTreeMap, BTreeSet};

use super::{FunctionSet, FunctionSpace, OrbitKey};
use crate::{Error, Result};

/// Largest domain for which permutation closure is checked (`6! = 720`).
pub const MAX_CUP_POINTS: usize = 6;

/// `h ∘ σ` for the permutation that swaps positions `i` and `i + 1`.
fn swap_adjacent(space: &FunctionSpace, h: u64, i: usize, buf: &mut [u32]) -> u64 {
    space.decode_into(h, buf);
    buf.swap(i, i + 1);
    space.encode(buf)
}

/// `true` iff `subset` is closed under every permutation of the domain.
///
/// Adjacent transpositions generate the symmetric group, so closure under
/// them is closure under all permutations.
pub fn is_cup(space: &FunctionSpace, subset: &FunctionSet) -> Result<bool> {
    let n = space.n_points();
    if n > MAX_CUP_POINTS {
        return Err(Error::size("domain size for permutation closure", n as u128, MAX_CUP_POINTS as u128));
    }
    let mut buf = vec![0u32; n];
    for h in subset.indices() {
        if h >= space.size() {
            return Err(Error::config(format!("function index {h} outside the space")));
        }
        for i in 0..n.saturating_sub(1) {
            if !subset.contains(swap_adjacent(space, h, i, &mut buf)) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Orbit of `h` under all domain permutations, by breadth-first closure.
pub fn permutation_closure(space: &FunctionSpace, h: u64) -> BTreeSet<u64> {
    let n = space.n_points();
    let mut buf = vec![0u32; n];
    let mut seen = BTreeSet::from([h]);
    let mut frontier = vec![h];
    while let Some(g) = frontier.pop() {
        for i in 0..n.saturating_sub(1) {
            let next = swap_adjacent(space, g, i, &mut buf);
            if seen.insert(next) {
                frontier.push(next);
            }
        }
    }
    seen
}

/// Partition of `Y^X` into permutation orbits, keyed by value multiset.
pub fn orbit_partition(space: &FunctionSpace) -> Result<BTreeMap<OrbitKey, Vec<u64>>> {
    let mut orbits: BTreeMap<OrbitKey, Vec<u64>> = BTreeMap::new();
    let mut buf = vec![0u32; space.n_points()];
    for h in 0..space.size() {
        space.decode_into(h, &mut buf);
        orbits.entry(OrbitKey::of(&buf)).or_default().push(h);
    }
    Ok(orbits)
}
