//! Finite binary and ternary relations over nodes, and the transitive
//! closure used to reason about multi-hop reachability.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index of a node within its [`NodeUniverse`](crate::state::NodeUniverse).
///
/// Ordering follows declaration order in the universe, which is what makes
/// relation iteration (and therefore traces) canonical.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RelationError {
    #[error("self-link {0} -> {0} is not allowed in a symmetric link relation")]
    SelfLink(NodeId),
}

/// A finite set of ordered node pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BinRel {
    pairs: BTreeSet<(NodeId, NodeId)>,
}

impl BinRel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn contains(&self, a: NodeId, b: NodeId) -> bool {
        self.pairs.contains(&(a, b))
    }

    pub fn insert(&mut self, a: NodeId, b: NodeId) -> bool {
        self.pairs.insert((a, b))
    }

    pub fn remove(&mut self, a: NodeId, b: NodeId) -> bool {
        self.pairs.remove(&(a, b))
    }

    /// Pairs in canonical (lexicographic) order.
    pub fn iter(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.pairs.iter().copied()
    }

    /// Nodes appearing as the first component of some pair.
    pub fn domain(&self) -> BTreeSet<NodeId> {
        self.pairs.iter().map(|&(a, _)| a).collect()
    }

    /// Nodes appearing in either component.
    pub fn field(&self) -> BTreeSet<NodeId> {
        self.pairs.iter().flat_map(|&(a, b)| [a, b]).collect()
    }

    pub fn inverse(&self) -> BinRel {
        self.pairs.iter().map(|&(a, b)| (b, a)).collect()
    }

    pub fn is_symmetric(&self) -> bool {
        self.pairs.iter().all(|&(a, b)| self.contains(b, a))
    }

    pub fn is_subset(&self, other: &BinRel) -> bool {
        self.pairs.is_subset(&other.pairs)
    }

    pub fn intersection(&self, other: &BinRel) -> BinRel {
        self.pairs.intersection(&other.pairs).copied().collect()
    }

    /// Relational composition `self ; other`.
    pub fn compose(&self, other: &BinRel) -> BinRel {
        let mut out = BinRel::new();
        for (a, b) in self.iter() {
            for c in other.image(b) {
                out.insert(a, c);
            }
        }
        out
    }

    /// `{ m | (n, m) ∈ self }`.
    pub fn image(&self, n: NodeId) -> BTreeSet<NodeId> {
        self.pairs
            .range((n, NodeId(0))..=(n, NodeId(u32::MAX)))
            .map(|&(_, m)| m)
            .collect()
    }

    /// `self ∪ {(n, m), (m, n)}`; rejects `n = m`.
    pub fn symmetric_insert(&self, n: NodeId, m: NodeId) -> Result<BinRel, RelationError> {
        if n == m {
            return Err(RelationError::SelfLink(n));
        }
        let mut out = self.clone();
        out.insert(n, m);
        out.insert(m, n);
        Ok(out)
    }

    /// Removes every pair incident to `n` (domain and range subtraction).
    pub fn domain_range_subtract(&self, n: NodeId) -> BinRel {
        self.pairs
            .iter()
            .filter(|&&(a, b)| a != n && b != n)
            .copied()
            .collect()
    }

    /// Transitive (not reflexive) closure.
    ///
    /// Warshall's algorithm over the subgraph induced by nodes incident to
    /// some pair; nodes outside that set cannot appear in the result.
    pub fn closure(&self) -> BinRel {
        let nodes: Vec<NodeId> = self.field().into_iter().collect();
        let n = nodes.len();
        if n == 0 {
            return BinRel::new();
        }
        let index: BTreeMap<NodeId, usize> =
            nodes.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut reach = vec![false; n * n];
        for (a, b) in self.iter() {
            reach[index[&a] * n + index[&b]] = true;
        }
        for k in 0..n {
            for i in 0..n {
                if !reach[i * n + k] {
                    continue;
                }
                for j in 0..n {
                    if reach[k * n + j] {
                        reach[i * n + j] = true;
                    }
                }
            }
        }
        let mut out = BinRel::new();
        for i in 0..n {
            for j in 0..n {
                if reach[i * n + j] {
                    out.insert(nodes[i], nodes[j]);
                }
            }
        }
        out
    }
}

impl FromIterator<(NodeId, NodeId)> for BinRel {
    fn from_iter<I: IntoIterator<Item = (NodeId, NodeId)>>(iter: I) -> Self {
        BinRel {
            pairs: iter.into_iter().collect(),
        }
    }
}

/// Breadth-first reachability: is there a path of length >= 1 from `from`
/// to `to` along pairs of `r`?
///
/// Deliberately independent of [`BinRel::closure`]; the two must agree.
pub fn reachable_oracle(r: &BinRel, from: NodeId, to: NodeId) -> bool {
    reachable_from_oracle(r, from).contains(&to)
}

/// Every node reachable from `from` by a path of length >= 1.
pub fn reachable_from_oracle(r: &BinRel, from: NodeId) -> BTreeSet<NodeId> {
    let mut adjacency: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    for (a, b) in r.iter() {
        adjacency.entry(a).or_default().push(b);
    }
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::from([from]);
    while let Some(v) = queue.pop_front() {
        for &next in adjacency.get(&v).into_iter().flatten() {
            if seen.insert(next) {
                queue.push_back(next);
            }
        }
    }
    seen
}

/// A finite set of `(a, b, via)` triples.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TriRel {
    triples: BTreeSet<(NodeId, NodeId, NodeId)>,
}

impl TriRel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn contains(&self, a: NodeId, b: NodeId, via: NodeId) -> bool {
        self.triples.contains(&(a, b, via))
    }

    pub fn insert(&mut self, a: NodeId, b: NodeId, via: NodeId) -> bool {
        self.triples.insert((a, b, via))
    }

    pub fn remove(&mut self, a: NodeId, b: NodeId, via: NodeId) -> bool {
        self.triples.remove(&(a, b, via))
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, NodeId, NodeId)> + '_ {
        self.triples.iter().copied()
    }

    /// Triples whose first component is `a`.
    pub fn from_node(&self, a: NodeId) -> impl Iterator<Item = (NodeId, NodeId, NodeId)> + '_ {
        let lo = (a, NodeId(0), NodeId(0));
        let hi = (a, NodeId(u32::MAX), NodeId(u32::MAX));
        self.triples.range(lo..=hi).copied()
    }

    /// Via-nodes recorded for the pair `(a, b)`.
    pub fn vias(&self, a: NodeId, b: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        let lo = (a, b, NodeId(0));
        let hi = (a, b, NodeId(u32::MAX));
        self.triples.range(lo..=hi).map(|&(_, _, v)| v)
    }

    /// Is `(a, b)` in the domain (the pair projection) of this relation?
    pub fn has_pair(&self, a: NodeId, b: NodeId) -> bool {
        self.vias(a, b).next().is_some()
    }

    pub fn is_subset(&self, other: &TriRel) -> bool {
        self.triples.is_subset(&other.triples)
    }

    pub fn retain(&mut self, mut keep: impl FnMut(NodeId, NodeId, NodeId) -> bool) {
        self.triples.retain(|&(a, b, v)| keep(a, b, v));
    }

    pub fn extend(&mut self, triples: impl IntoIterator<Item = (NodeId, NodeId, NodeId)>) {
        self.triples.extend(triples);
    }
}

impl FromIterator<(NodeId, NodeId, NodeId)> for TriRel {
    fn from_iter<I: IntoIterator<Item = (NodeId, NodeId, NodeId)>>(iter: I) -> Self {
        TriRel {
            triples: iter.into_iter().collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const A: NodeId = NodeId(0);
    const B: NodeId = NodeId(1);
    const C: NodeId = NodeId(2);

    fn rel(pairs: &[(NodeId, NodeId)]) -> BinRel {
        pairs.iter().copied().collect()
    }

    #[test]
    fn closure_examples() {
        assert!(BinRel::new().closure().is_empty());
        assert_eq!(
            rel(&[(A, B), (B, A)]).closure(),
            rel(&[(A, B), (B, A), (A, A), (B, B)])
        );
        assert_eq!(
            rel(&[(A, B), (B, C)]).closure(),
            rel(&[(A, B), (B, C), (A, C)])
        );
    }

    #[test]
    fn oracle_examples() {
        assert!(!reachable_oracle(&BinRel::new(), A, B));
        assert!(reachable_oracle(&rel(&[(A, B), (B, A)]), A, A));
        assert!(!reachable_oracle(&rel(&[(A, B), (B, C)]), C, A));
    }

    #[test]
    fn symmetric_insert_examples() {
        assert_eq!(
            BinRel::new().symmetric_insert(A, B).unwrap(),
            rel(&[(A, B), (B, A)])
        );
        let ab = rel(&[(A, B), (B, A)]);
        assert_eq!(ab.symmetric_insert(A, B).unwrap(), ab);
        assert_eq!(ab.symmetric_insert(A, A), Err(RelationError::SelfLink(A)));
    }

    #[test]
    fn domain_range_subtract_examples() {
        let r = rel(&[(A, B), (B, A), (B, C), (C, B)]);
        assert_eq!(r.domain_range_subtract(A), rel(&[(B, C), (C, B)]));
        assert!(BinRel::new().domain_range_subtract(A).is_empty());
        let ab = rel(&[(A, B), (B, A)]);
        assert_eq!(ab.domain_range_subtract(C), ab);
    }

    #[test]
    fn image_examples() {
        let r = rel(&[(A, B), (B, A), (A, C), (C, A)]);
        assert_eq!(r.image(A), BTreeSet::from([B, C]));
        assert!(BinRel::new().image(A).is_empty());
        assert_eq!(rel(&[(A, B), (B, A)]).image(B), BTreeSet::from([A]));
    }

    #[test]
    fn tri_rel_pair_queries() {
        let t: TriRel = [(A, B, C), (A, B, B), (B, A, A)].into_iter().collect();
        assert!(t.has_pair(A, B));
        assert!(!t.has_pair(A, C));
        assert_eq!(t.vias(A, B).collect::<Vec<_>>(), vec![B, C]);
        assert_eq!(t.from_node(B).count(), 1);
    }

    /// Every relation over three nodes, checked against the oracle.
    #[test]
    fn closure_matches_oracle_exhaustively_up_to_four_nodes() {
        for size in 1u32..=4 {
            let all: Vec<_> = (0..size)
                .flat_map(|a| (0..size).map(move |b| (NodeId(a), NodeId(b))))
                .collect();
            for mask in 0u32..(1 << all.len()) {
                let r: BinRel = all
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask & (1 << i) != 0)
                    .map(|(_, &p)| p)
                    .collect();
                let cl = r.closure();
                for &(a, b) in &all {
                    assert_eq!(cl.contains(a, b), reachable_oracle(&r, a, b), "{r:?}");
                }
            }
        }
    }

    fn arb_rel(max_nodes: u32) -> impl Strategy<Value = BinRel> {
        prop::collection::vec((0..max_nodes, 0..max_nodes), 0..60)
            .prop_map(|v| v.into_iter().map(|(a, b)| (NodeId(a), NodeId(b))).collect())
    }

    fn arb_sym_rel(max_nodes: u32) -> impl Strategy<Value = BinRel> {
        prop::collection::vec((0..max_nodes, 0..max_nodes), 0..30).prop_map(|v| {
            v.into_iter()
                .filter(|(a, b)| a != b)
                .flat_map(|(a, b)| [(NodeId(a), NodeId(b)), (NodeId(b), NodeId(a))])
                .collect()
        })
    }

    proptest! {
        #[test]
        fn closure_agrees_with_oracle(r in arb_rel(12)) {
            let cl = r.closure();
            for a in 0..12 {
                for b in 0..12 {
                    prop_assert_eq!(cl.contains(NodeId(a), NodeId(b)), reachable_oracle(&r, NodeId(a), NodeId(b)));
                }
            }
        }

        #[test]
        fn closure_axioms(r in arb_rel(10)) {
            let cl = r.closure();
            prop_assert!(r.is_subset(&cl));
            prop_assert!(cl.compose(&r).is_subset(&cl));
            prop_assert_eq!(cl.closure(), cl);
        }

        #[test]
        fn symmetric_closure_is_symmetric_with_loops(r in arb_sym_rel(10)) {
            let cl = r.closure();
            prop_assert!(cl.is_symmetric());
            for n in r.field() {
                prop_assert!(cl.contains(n, n));
            }
        }

        #[test]
        fn symmetric_ops_preserve_symmetry(r in arb_sym_rel(8), a in 0u32..8, b in 0u32..8) {
            prop_assert!(r.domain_range_subtract(NodeId(a)).is_symmetric());
            if a != b {
                prop_assert!(r.symmetric_insert(NodeId(a), NodeId(b)).unwrap().is_symmetric());
            }
        }
    }
}
