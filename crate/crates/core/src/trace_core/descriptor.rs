//! Canonical text form of policies.
//!
//! ```text
//! policy := "fixed[" [int ("," int)*] "]"
//!         | "rank-greedy(start=" int ")"
//!         | "bisect-best"
//!         | "random(seed=" int ")"
//!         | "tree(n=" int ",values=" int ":" node ")"
//! node   := int [ "{" int ":" node ("," int ":" node)* "}" ]
//! ```
//!
//! In a `tree`, a node names the point to visit next and its braces map each
//! observed value label to the subtree used after that value. Every internal
//! node lists all labels `0..values`, and all leaves sit at the same depth.
//! Whitespace is ignored when parsing; [`Policy`]'s `Display` emits none.

use std::fmt;
use std::str::FromStr;

use super::policy::{Policy, RankRule, RuleTable};
use crate::{Error, Result};

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::FixedSequence(seq) => {
                let items: Vec<String> = seq.iter().map(|p| p.to_string()).collect();
                write!(f, "fixed[{}]", items.join(","))
            }
            Policy::Rank(RankRule::GreedyNeighbor { start }) => write!(f, "rank-greedy(start={start})"),
            Policy::Rank(RankRule::BisectBest) => write!(f, "bisect-best"),
            Policy::SeededRandom { seed } => write!(f, "random(seed={seed})"),
            Policy::RuleTable(t) => {
                write!(f, "tree(n={},values={}:", t.n_points(), t.arity())?;
                let choices: Vec<usize> = t.raw_choices().collect();
                write_node(f, &choices, t.arity(), t.depth(), 0, 0)?;
                write!(f, ")")
            }
        }
    }
}

fn write_node(
    f: &mut fmt::Formatter<'_>,
    choices: &[usize],
    arity: usize,
    depth: usize,
    level: usize,
    idx: usize,
) -> fmt::Result {
    let offset: usize = (0..level).map(|l| arity.pow(l as u32)).sum();
    write!(f, "{}", choices[offset + idx])?;
    if level + 1 < depth {
        write!(f, "{{")?;
        for y in 0..arity {
            if y > 0 {
                write!(f, ",")?;
            }
            write!(f, "{y}:")?;
            write_node(f, choices, arity, depth, level + 1, idx * arity + y)?;
        }
        write!(f, "}}")?;
    }
    Ok(())
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

struct Node {
    point: usize,
    children: Vec<Node>,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            pos: self.pos,
            msg: msg.into(),
        })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn eat(&mut self, token: &str) -> bool {
        self.skip_ws();
        if self.src[self.pos..].starts_with(token.as_bytes()) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, token: &str) -> Result<()> {
        if self.eat(token) {
            Ok(())
        } else {
            self.err(format!("expected `{token}`"))
        }
    }

    fn int(&mut self) -> Result<u64> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return self.err("expected an integer");
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .expect("ascii digits")
            .parse()
            .or_else(|_| self.err("integer out of range"))
    }

    fn node(&mut self, arity: usize) -> Result<Node> {
        let point = self.int()? as usize;
        let mut children = Vec::new();
        if self.eat("{") {
            let mut slots: Vec<Option<Node>> = (0..arity).map(|_| None).collect();
            loop {
                let label = self.int()? as usize;
                if label >= arity {
                    return self.err(format!("value label {label} outside 0..{arity}"));
                }
                self.expect(":")?;
                let child = self.node(arity)?;
                if slots[label].replace(child).is_some() {
                    return self.err(format!("value label {label} listed twice"));
                }
                if self.eat("}") {
                    break;
                }
                self.expect(",")?;
            }
            if slots.iter().any(Option::is_none) {
                return self.err("internal tree node must map every value label");
            }
            children = slots.into_iter().map(Option::unwrap).collect();
        }
        Ok(Node { point, children })
    }

    fn policy(&mut self) -> Result<Policy> {
        let policy = if self.eat("fixed[") {
            let mut seq = Vec::new();
            if !self.eat("]") {
                loop {
                    seq.push(self.int()? as usize);
                    if self.eat("]") {
                        break;
                    }
                    self.expect(",")?;
                }
            }
            Policy::FixedSequence(seq)
        } else if self.eat("rank-greedy(") {
            self.expect("start=")?;
            let start = self.int()? as usize;
            self.expect(")")?;
            Policy::Rank(RankRule::GreedyNeighbor { start })
        } else if self.eat("bisect-best") {
            Policy::Rank(RankRule::BisectBest)
        } else if self.eat("random(") {
            self.expect("seed=")?;
            let seed = self.int()?;
            self.expect(")")?;
            Policy::SeededRandom { seed }
        } else if self.eat("tree(") {
            self.expect("n=")?;
            let n = self.int()? as usize;
            self.expect(",")?;
            self.expect("values=")?;
            let arity = self.int()? as usize;
            if arity == 0 {
                return self.err("values must be positive");
            }
            self.expect(":")?;
            let root = self.node(arity)?;
            self.expect(")")?;
            let depth = tree_depth(&root).ok_or(Error::Parse {
                pos: self.pos,
                msg: "tree leaves must all sit at the same depth".into(),
            })?;
            let mut levels: Vec<Vec<usize>> = vec![Vec::new(); depth];
            flatten(&root, 0, &mut levels);
            Policy::RuleTable(RuleTable::new(n, arity, depth, levels.concat())?)
        } else {
            return self.err("unknown policy kind");
        };
        self.skip_ws();
        if self.pos != self.src.len() {
            return self.err("trailing input");
        }
        Ok(policy)
    }
}

fn tree_depth(node: &Node) -> Option<usize> {
    if node.children.is_empty() {
        return Some(1);
    }
    let depths: Vec<Option<usize>> = node.children.iter().map(tree_depth).collect();
    let first = depths[0]?;
    depths.iter().all(|d| *d == Some(first)).then_some(first + 1)
}

// Breadth-first by level; within a level, children in label order keep the
// mixed-radix index order of value sequences.
fn flatten(node: &Node, level: usize, levels: &mut [Vec<usize>]) {
    levels[level].push(node.point);
    for child in &node.children {
        flatten(child, level + 1, levels);
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Parser {
            src: s.as_bytes(),
            pos: 0,
        }
        .policy()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace_core::{enumerate_policies, EnumerationCaps, FiniteDomain};
    use proptest::prelude::*;

    #[test]
    fn parses_each_kind() {
        assert_eq!("fixed[0, 2,1]".parse::<Policy>().unwrap(), Policy::FixedSequence(vec![0, 2, 1]));
        assert_eq!("fixed[]".parse::<Policy>().unwrap(), Policy::FixedSequence(vec![]));
        assert_eq!(
            "rank-greedy(start=4)".parse::<Policy>().unwrap(),
            Policy::Rank(RankRule::GreedyNeighbor { start: 4 })
        );
        assert_eq!("bisect-best".parse::<Policy>().unwrap(), Policy::Rank(RankRule::BisectBest));
        assert_eq!(
            "random(seed=9)".parse::<Policy>().unwrap(),
            Policy::SeededRandom { seed: 9 }
        );
        let tree: Policy = "tree(n=3, values=2: 0{0:1, 1:2})".parse().unwrap();
        assert_eq!(
            tree,
            Policy::RuleTable(RuleTable::new(3, 2, 2, vec![0, 1, 2]).unwrap())
        );
        assert_eq!(tree.to_string(), "tree(n=3,values=2:0{0:1,1:2})");
    }

    #[test]
    fn rejects_malformed_trees() {
        for bad in [
            "tree(n=3,values=2:0{0:1})",
            "tree(n=3,values=2:0{0:1,1:2{0:1,1:0}})",
            "tree(n=3,values=2:0{0:0,1:2})",
            "tree(n=3,values=2:0{0:1,0:2})",
            "fixed[1,",
            "greedy",
            "bisect-best extra",
        ] {
            assert!(bad.parse::<Policy>().is_err(), "{bad}");
        }
    }

    #[test]
    fn enumerated_trees_round_trip() {
        let d = FiniteDomain::with_sizes(3, 2).unwrap();
        for p in enumerate_policies(&d, 3, EnumerationCaps::default()).unwrap() {
            assert_eq!(p.to_string().parse::<Policy>().unwrap(), p);
        }
    }

    proptest! {
        #[test]
        fn display_parse_round_trip(seq in proptest::collection::vec(0usize..1000, 0..8), seed: u64, start in 0usize..100) {
            for p in [
                Policy::FixedSequence(seq.clone()),
                Policy::SeededRandom { seed },
                Policy::Rank(RankRule::GreedyNeighbor { start }),
                Policy::Rank(RankRule::BisectBest),
            ] {
                prop_assert_eq!(p.to_string().parse::<Policy>().unwrap(), p);
            }
        }
    }
}
