use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{FiniteDomain, Observation, Trace};
use crate::seed::task_rng;
use crate::{Error, Result};

/// Deterministic non-revisiting search rule over points `0..n`.
///
/// Randomized search is modeled by [`Policy::SeededRandom`]: a deterministic
/// function of the trace and its seed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Policy {
    /// Visits the listed points in order, ignoring observed values.
    FixedSequence(Vec<usize>),
    /// Next point looked up from the observed value sequence.
    RuleTable(RuleTable),
    /// Decisions depend only on the ordering of observed values.
    Rank(RankRule),
    /// Visits points in a seed-determined random order.
    SeededRandom { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RankRule {
    /// Start at `start`, then always take the unvisited point nearest to the
    /// current best (lowest index on distance ties).
    GreedyNeighbor { start: usize },
    /// Probe both ends, then bisect the wider unexplored interval next to the
    /// current best; fall back to the widest interval anywhere.
    BisectBest,
}

/// Complete decision tree for labelled values.
///
/// `choices[offset(l) + s]` is the point visited after observing the value
/// sequence with mixed-radix index `s` (first value most significant) of
/// length `l`. Every sequence of length `< depth` has an entry.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RuleTable {
    n_points: usize,
    arity: usize,
    depth: usize,
    choices: Vec<u16>,
}

fn level_offsets(arity: usize, depth: usize) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(depth + 1);
    let (mut off, mut width) = (0usize, 1usize);
    for _ in 0..=depth {
        offsets.push(off);
        off += width;
        width *= arity;
    }
    offsets
}

impl RuleTable {
    /// Validates totality and the no-revisit property along every branch.
    pub fn new(n_points: usize, arity: usize, depth: usize, choices: Vec<usize>) -> Result<Self> {
        if arity == 0 || depth == 0 {
            return Err(Error::config("rule table needs arity >= 1 and depth >= 1"));
        }
        if depth > n_points {
            return Err(Error::Capacity {
                requested: depth,
                available: n_points,
            });
        }
        let offsets = level_offsets(arity, depth);
        if choices.len() != offsets[depth] {
            return Err(Error::config(format!(
                "rule table of depth {depth} over {arity} values needs {} entries, got {}",
                offsets[depth],
                choices.len()
            )));
        }
        if n_points > u16::MAX as usize {
            return Err(Error::size("rule table domain", n_points as u128, u16::MAX as u128));
        }
        let table = Self {
            n_points,
            arity,
            depth,
            choices: choices.iter().map(|&c| c as u16).collect(),
        };
        for level in 0..depth {
            for s in 0..offsets[level + 1] - offsets[level] {
                let here = table.choices[offsets[level] + s] as usize;
                if here >= n_points {
                    return Err(Error::PolicyIntegrity(format!(
                        "rule table points at {here}, outside a domain of {n_points}"
                    )));
                }
                let (mut lvl, mut idx) = (level, s);
                while lvl > 0 {
                    lvl -= 1;
                    idx /= arity;
                    if table.choices[offsets[lvl] + idx] as usize == here {
                        return Err(Error::PolicyIntegrity(format!(
                            "rule table revisits point {here} at depth {level}"
                        )));
                    }
                }
            }
        }
        Ok(table)
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Point chosen after observing `labels`.
    pub fn choice(&self, labels: &[u32]) -> Result<usize> {
        if labels.len() >= self.depth {
            return Err(Error::Capacity {
                requested: labels.len() + 1,
                available: self.depth,
            });
        }
        let mut idx = 0usize;
        for &y in labels {
            if y as usize >= self.arity {
                return Err(Error::config(format!(
                    "value label {y} outside a rule table over {} values",
                    self.arity
                )));
            }
            idx = idx * self.arity + y as usize;
        }
        let offsets = level_offsets(self.arity, labels.len());
        Ok(self.choices[offsets[labels.len()] + idx] as usize)
    }

    pub(crate) fn raw_choices(&self) -> impl Iterator<Item = usize> + '_ {
        self.choices.iter().map(|&c| c as usize)
    }
}

impl Policy {
    /// Most steps this policy can serve on a domain of `n_points`.
    pub fn capacity(&self, n_points: usize) -> usize {
        match self {
            Policy::FixedSequence(seq) => seq.len().min(n_points),
            Policy::RuleTable(t) => t.depth.min(n_points),
            Policy::Rank(_) | Policy::SeededRandom { .. } => n_points,
        }
    }

    /// Checks that the policy is well formed for a domain of `n_points`.
    pub fn check_domain(&self, n_points: usize) -> Result<()> {
        match self {
            Policy::FixedSequence(seq) => {
                if let Some(&p) = seq.iter().find(|&&p| p >= n_points) {
                    return Err(Error::config(format!(
                        "fixed sequence visits point {p} outside a domain of {n_points}"
                    )));
                }
            }
            Policy::RuleTable(t) => {
                if t.n_points != n_points {
                    return Err(Error::config(format!(
                        "rule table built for {} points used on a domain of {n_points}",
                        t.n_points
                    )));
                }
            }
            Policy::Rank(RankRule::GreedyNeighbor { start }) => {
                if *start >= n_points {
                    return Err(Error::config(format!(
                        "greedy start {start} outside a domain of {n_points}"
                    )));
                }
            }
            Policy::Rank(RankRule::BisectBest) | Policy::SeededRandom { .. } => {}
        }
        Ok(())
    }

    pub fn is_rank_based(&self) -> bool {
        matches!(self, Policy::Rank(_) | Policy::FixedSequence(_) | Policy::SeededRandom { .. })
    }

    /// Next point to visit given the trace so far.
    pub fn next_point<V: Observation>(&self, trace: &Trace<V>, n_points: usize) -> Result<usize> {
        let step = trace.len();
        if step >= n_points {
            return Err(Error::Capacity {
                requested: step + 1,
                available: n_points,
            });
        }
        match self {
            Policy::FixedSequence(seq) => seq.get(step).copied().ok_or(Error::Capacity {
                requested: step + 1,
                available: seq.len(),
            }),
            Policy::RuleTable(table) => {
                let labels = trace
                    .steps()
                    .iter()
                    .map(|&(_, v)| {
                        v.as_label().ok_or_else(|| {
                            Error::config("rule-table policies need labelled (finite) values")
                        })
                    })
                    .collect::<Result<Vec<u32>>>()?;
                table.choice(&labels)
            }
            Policy::Rank(rule) => Ok(rank_next(*rule, trace, n_points)),
            Policy::SeededRandom { seed } => {
                let order = random_order(*seed, n_points);
                Ok(order
                    .into_iter()
                    .find(|&p| !trace.contains(p))
                    .expect("an unvisited point remains"))
            }
        }
    }
}

/// Seed-determined visiting order of `n_points`.
pub(crate) fn random_order(seed: u64, n_points: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n_points).collect();
    order.shuffle(&mut task_rng(seed, n_points as u64));
    order
}

fn rank_next<V: Observation>(rule: RankRule, trace: &Trace<V>, n: usize) -> usize {
    let mut visited = vec![false; n];
    for p in trace.points() {
        visited[p] = true;
    }
    match rule {
        RankRule::GreedyNeighbor { start } => {
            let Some(b) = trace.best_step() else {
                return start;
            };
            let best = trace.steps()[b].0;
            for d in 1..n {
                if best >= d && !visited[best - d] {
                    return best - d;
                }
                if best + d < n && !visited[best + d] {
                    return best + d;
                }
            }
            unreachable!("an unvisited point remains")
        }
        RankRule::BisectBest => {
            if !visited[0] {
                return 0;
            }
            if !visited[n - 1] {
                return n - 1;
            }
            let best = trace.steps()[trace.best_step().expect("nonempty")].0;
            let left = (0..best).rev().find(|&p| visited[p]);
            let right = (best + 1..n).find(|&p| visited[p]);
            let gap_left = left.map(|a| (a, best)).filter(|(a, b)| b - a >= 2);
            let gap_right = right.map(|c| (best, c)).filter(|(a, b)| b - a >= 2);
            let gap = match (gap_left, gap_right) {
                (Some(l), Some(r)) => Some(if r.1 - r.0 > l.1 - l.0 { r } else { l }),
                (l, r) => l.or(r),
            };
            let (a, b) = gap.unwrap_or_else(|| {
                // widest unexplored interval anywhere, leftmost on ties
                let marks: Vec<usize> = (0..n).filter(|&p| visited[p]).collect();
                let mut widest = (0, 0);
                for w in marks.windows(2) {
                    if w[1] - w[0] > widest.1 - widest.0 {
                        widest = (w[0], w[1]);
                    }
                }
                widest
            });
            a + (b - a) / 2
        }
    }
}

/// Runs `policy` for `m` steps against `oracle` (value of every domain point).
pub fn run_policy<V: Observation>(policy: &Policy, oracle: &[V], m: usize) -> Result<Trace<V>> {
    let n = oracle.len();
    if m > n {
        return Err(Error::Capacity {
            requested: m,
            available: n,
        });
    }
    if m > policy.capacity(n) {
        return Err(Error::Capacity {
            requested: m,
            available: policy.capacity(n),
        });
    }
    policy.check_domain(n)?;
    if matches!(policy, Policy::RuleTable(_)) && oracle.iter().any(|v| v.as_label().is_none()) {
        return Err(Error::config("rule-table policies need labelled (finite) values"));
    }
    let mut trace = Trace::with_capacity(m);
    for _ in 0..m {
        let p = policy.next_point(&trace, n)?;
        if p >= n {
            return Err(Error::PolicyIntegrity(format!(
                "proposed point {p} outside a domain of {n}"
            )));
        }
        trace.push(p, oracle[p])?;
    }
    Ok(trace)
}

/// Limits on exhaustive policy enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnumerationCaps {
    pub max_points: usize,
    pub max_values: usize,
}

impl Default for EnumerationCaps {
    fn default() -> Self {
        Self {
            max_points: 4,
            max_values: 3,
        }
    }
}

/// Number of complete decision trees: the product over levels `l < m` of
/// `(n - l)^(k^l)`.
pub fn count_policies(n_points: usize, n_values: usize, m: usize) -> u128 {
    let mut count: u128 = 1;
    let mut width: u32 = 1;
    for level in 0..m {
        count = count.saturating_mul(((n_points - level) as u128).saturating_pow(width));
        width = width.saturating_mul(n_values as u32);
    }
    count
}

/// Every deterministic non-revisiting policy for `m` steps on `domain`, as
/// rule tables. Ordered lexicographically by their choice vectors.
pub fn enumerate_policies(
    domain: &FiniteDomain,
    m: usize,
    caps: EnumerationCaps,
) -> Result<Vec<Policy>> {
    let (n, k) = (domain.n_points(), domain.n_values());
    if n > caps.max_points {
        return Err(Error::size(
            format!("domain size (policy count would be {})", count_policies(n, k, m.min(n))),
            n as u128,
            caps.max_points as u128,
        ));
    }
    if k > caps.max_values {
        return Err(Error::size(
            format!("codomain size (policy count would be {})", count_policies(n, k, m.min(n))),
            k as u128,
            caps.max_values as u128,
        ));
    }
    if m > n {
        return Err(Error::Capacity {
            requested: m,
            available: n,
        });
    }
    if m == 0 {
        return Ok(vec![Policy::FixedSequence(Vec::new())]);
    }
    let offsets = level_offsets(k, m);
    let nodes = offsets[m];
    // level and within-level index of each node in breadth-first order
    let node_pos: Vec<(usize, usize)> = (0..m)
        .flat_map(|l| (0..offsets[l + 1] - offsets[l]).map(move |s| (l, s)))
        .collect();

    let mut out = Vec::with_capacity(count_policies(n, k, m) as usize);
    let mut choices = vec![0usize; nodes];
    fn fill(
        node: usize,
        choices: &mut Vec<usize>,
        node_pos: &[(usize, usize)],
        offsets: &[usize],
        n: usize,
        k: usize,
        m: usize,
        out: &mut Vec<Policy>,
    ) {
        if node == choices.len() {
            let table = RuleTable {
                n_points: n,
                arity: k,
                depth: m,
                choices: choices.iter().map(|&c| c as u16).collect(),
            };
            out.push(Policy::RuleTable(table));
            return;
        }
        let (level, s) = node_pos[node];
        let mut used = vec![false; n];
        let (mut lvl, mut idx) = (level, s);
        while lvl > 0 {
            lvl -= 1;
            idx /= k;
            used[choices[offsets[lvl] + idx]] = true;
        }
        for p in 0..n {
            if !used[p] {
                choices[node] = p;
                fill(node + 1, choices, node_pos, offsets, n, k, m, out);
            }
        }
    }
    fill(0, &mut choices, &node_pos, &offsets, n, k, m, &mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn fixed_sequence_lookup() {
        let p = Policy::FixedSequence(vec![0, 1]);
        let t = run_policy(&p, &[0u32, 1], 2).unwrap();
        assert_eq!(t.steps(), &[(0, 0), (1, 1)]);
    }

    #[test]
    fn value_adaptive_rule_table() {
        // start at x1; after 0 go to x2, after 1 go to x3
        let table = RuleTable::new(3, 2, 2, vec![0, 1, 2]).unwrap();
        let p = Policy::RuleTable(table);
        let t = run_policy(&p, &[1u32, 0, 0], 2).unwrap();
        assert_eq!(t.steps(), &[(0, 1), (2, 0)]);
    }

    #[test]
    fn zero_steps_is_empty() {
        for p in [
            Policy::FixedSequence(vec![]),
            Policy::Rank(RankRule::BisectBest),
            Policy::SeededRandom { seed: 3 },
        ] {
            assert!(run_policy(&p, &[1.0, 2.0], 0).unwrap().is_empty());
        }
    }

    #[test]
    fn capacity_and_integrity_errors() {
        let p = Policy::Rank(RankRule::BisectBest);
        assert!(matches!(
            run_policy(&p, &[1.0, 2.0], 3),
            Err(Error::Capacity { .. })
        ));
        let p = Policy::FixedSequence(vec![0, 0]);
        assert!(matches!(
            run_policy(&p, &[1u32, 2], 2),
            Err(Error::PolicyIntegrity(_))
        ));
        assert!(matches!(
            RuleTable::new(3, 2, 2, vec![0, 0, 2]),
            Err(Error::PolicyIntegrity(_))
        ));
        let table = RuleTable::new(2, 2, 2, vec![0, 1, 1]).unwrap();
        assert!(matches!(
            run_policy(&Policy::RuleTable(table), &[0.5, 0.1], 1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn policy_counts_match_hand_counts() {
        let caps = EnumerationCaps::default();
        let d22 = FiniteDomain::with_sizes(2, 2).unwrap();
        assert_eq!(enumerate_policies(&d22, 2, caps).unwrap().len(), 2);
        let d32 = FiniteDomain::with_sizes(3, 2).unwrap();
        assert_eq!(enumerate_policies(&d32, 3, caps).unwrap().len(), 12);
        for k in 1..=3 {
            let d1 = FiniteDomain::with_sizes(1, k).unwrap();
            assert_eq!(enumerate_policies(&d1, 1, caps).unwrap().len(), 1);
        }
        assert_eq!(count_policies(4, 3, 4), 4 * 27 * 512);
        let d43 = FiniteDomain::with_sizes(4, 3).unwrap();
        assert_eq!(
            enumerate_policies(&d43, 4, caps).unwrap().len() as u128,
            count_policies(4, 3, 4)
        );
    }

    #[test]
    fn caps_are_enforced() {
        let caps = EnumerationCaps::default();
        let d = FiniteDomain::with_sizes(5, 2).unwrap();
        assert!(matches!(enumerate_policies(&d, 5, caps), Err(Error::Size { .. })));
        let d = FiniteDomain::with_sizes(2, 4).unwrap();
        assert!(matches!(enumerate_policies(&d, 2, caps), Err(Error::Size { .. })));
    }

    fn all_oracles(n: usize, k: usize) -> Vec<Vec<u32>> {
        let total = (k as u32).pow(n as u32);
        (0..total)
            .map(|mut idx| {
                let mut v = vec![0u32; n];
                for slot in v.iter_mut().rev() {
                    *slot = idx % k as u32;
                    idx /= k as u32;
                }
                v
            })
            .collect()
    }

    #[test]
    fn enumerated_policies_are_distinct_and_never_revisit() {
        let caps = EnumerationCaps::default();
        for (n, k) in [(2, 2), (3, 2), (3, 3), (4, 2)] {
            let d = FiniteDomain::with_sizes(n, k).unwrap();
            let policies = enumerate_policies(&d, n, caps).unwrap();
            let mut uniq = policies.clone();
            uniq.sort_by_key(|p| format!("{p}"));
            uniq.dedup();
            assert_eq!(uniq.len(), policies.len());
            for p in &policies {
                for oracle in all_oracles(n, k) {
                    let t = run_policy(p, &oracle, n).unwrap();
                    let mut pts: Vec<usize> = t.points().collect();
                    pts.sort();
                    pts.dedup();
                    assert_eq!(pts.len(), n);
                }
            }
        }
    }

    #[test]
    fn bisection_and_greedy_behave() {
        let ys = [5.0, 4.0, 3.0, 2.0, 1.0, 0.5, 3.0, 4.0, 6.0];
        let t = run_policy(&Policy::Rank(RankRule::BisectBest), &ys, 4).unwrap();
        // ends, midpoint, then the left interval on a width tie next to the best
        assert_eq!(t.points().collect::<Vec<_>>(), vec![0, 8, 4, 2]);
        let t = run_policy(&Policy::Rank(RankRule::GreedyNeighbor { start: 2 }), &ys, 4).unwrap();
        assert_eq!(t.points().collect::<Vec<_>>(), vec![2, 1, 3, 4]);
    }

    fn zoo() -> Vec<Policy> {
        vec![
            Policy::Rank(RankRule::GreedyNeighbor { start: 3 }),
            Policy::Rank(RankRule::BisectBest),
            Policy::SeededRandom { seed: 11 },
            Policy::FixedSequence((0..9).rev().collect()),
        ]
    }

    proptest! {
        #[test]
        fn no_revisit_on_random_oracles(ys in proptest::collection::vec(-10.0f64..10.0, 9)) {
            for p in zoo() {
                let t = run_policy(&p, &ys, 9).unwrap();
                let mut pts: Vec<usize> = t.points().collect();
                pts.sort();
                prop_assert_eq!(pts, (0..9).collect::<Vec<_>>());
            }
        }

        #[test]
        fn runs_are_deterministic(ys in proptest::collection::vec(-10.0f64..10.0, 9), m in 0usize..=9) {
            for p in zoo() {
                prop_assert_eq!(run_policy(&p, &ys, m).unwrap(), run_policy(&p, &ys, m).unwrap());
            }
        }

        #[test]
        fn unvisited_values_do_not_matter(ys in proptest::collection::vec(-10.0f64..10.0, 9), m in 1usize..9, seed: u64) {
            for p in zoo() {
                let t = run_policy(&p, &ys, m).unwrap();
                let mut other = ys.clone();
                let mut rng = crate::seed::task_rng(seed, 0);
                for (i, v) in other.iter_mut().enumerate() {
                    if !t.contains(i) {
                        *v = rng.random_range(-10.0..10.0);
                    }
                }
                prop_assert_eq!(run_policy(&p, &other, m).unwrap(), t);
            }
        }

        #[test]
        fn rank_rules_ignore_increasing_maps(ys in proptest::collection::vec(-10.0f64..10.0, 9), a in 0.1f64..5.0, b in -3.0f64..3.0) {
            let mapped: Vec<f64> = ys.iter().map(|y| a * y + b).collect();
            for p in zoo() {
                let t1: Vec<usize> = run_policy(&p, &ys, 9).unwrap().points().collect();
                let t2: Vec<usize> = run_policy(&p, &mapped, 9).unwrap().points().collect();
                prop_assert_eq!(t1, t2);
            }
        }
    }
}
