//! Built-in policies for grid domains.

use serde::{Deserialize, Serialize};

use crate::trace_core::{Policy, RankRule};
use crate::Result;

/// Zoo entry names accepted wherever a policy descriptor is.
pub const ZOO_NAMES: [&str; 5] = [
    "fixed-grid-sweep",
    "fixed-arbitrary-order",
    "rank-greedy",
    "bisection",
    "seeded-random",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedPolicy {
    pub name: String,
    pub policy: Policy,
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Visits `i * stride mod n` for a stride near `0.618 n` coprime to `n`.
fn scrambled_order(n: usize) -> Vec<usize> {
    if n <= 2 {
        return (0..n).rev().collect();
    }
    let mut stride = ((n as f64) * 0.618).round() as usize;
    while gcd(stride, n) != 1 {
        stride += 1;
    }
    (0..n).map(|i| (i * stride + n / 3) % n).collect()
}

/// Resolves a zoo name or a policy descriptor for a domain of `n` points.
pub fn resolve_policy(name: &str, n: usize, seed: u64) -> Result<NamedPolicy> {
    let policy = match name.trim() {
        "fixed-grid-sweep" => Policy::FixedSequence((0..n).collect()),
        "fixed-arbitrary-order" => Policy::FixedSequence(scrambled_order(n)),
        "rank-greedy" => Policy::Rank(RankRule::GreedyNeighbor { start: n / 2 }),
        "bisection" => Policy::Rank(RankRule::BisectBest),
        "seeded-random" => Policy::SeededRandom { seed },
        other => other.parse()?,
    };
    policy.check_domain(n)?;
    Ok(NamedPolicy {
        name: name.trim().to_string(),
        policy,
    })
}

/// The five-policy zoo: two non-adaptive orders, two rank-adaptive rules and
/// a seeded random order.
pub fn policy_zoo(n: usize, seed: u64) -> Vec<NamedPolicy> {
    ZOO_NAMES
        .iter()
        .map(|name| resolve_policy(name, n, seed).expect("zoo policies fit any domain"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace_core::run_policy;

    #[test]
    fn zoo_policies_are_distinct_on_a_grid() {
        let zoo = policy_zoo(101, 3);
        let ys: Vec<f64> = (0..101).map(|i| ((i * 37 % 101) as f64).cos()).collect();
        let traces: Vec<Vec<usize>> = zoo
            .iter()
            .map(|p| run_policy(&p.policy, &ys, 5).unwrap().points().collect())
            .collect();
        for i in 0..traces.len() {
            for j in i + 1..traces.len() {
                assert_ne!(traces[i], traces[j], "{} vs {}", zoo[i].name, zoo[j].name);
            }
        }
    }

    #[test]
    fn scrambled_order_is_a_permutation() {
        for n in [1, 2, 3, 10, 101] {
            let mut o = scrambled_order(n);
            o.sort();
            assert_eq!(o, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn descriptors_resolve() {
        let p = resolve_policy("fixed[10]", 101, 0).unwrap();
        assert_eq!(p.policy, Policy::FixedSequence(vec![10]));
        assert!(resolve_policy("fixed[200]", 101, 0).is_err());
        assert!(resolve_policy("nonsense", 101, 0).is_err());
    }
}
