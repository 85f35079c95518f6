//! Influence graphs, live-edge graphs and realized reachability.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;

use fixedbitset::FixedBitSet;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, ParseErrorKind, Result};

/// Dense 0-based node index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<u32> for NodeId {
    fn from(v: u32) -> Self {
        NodeId(v)
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub source: NodeId,
    pub target: NodeId,
    pub prob: f64,
}

/// Directed graph with an activation probability on every edge.
///
/// Immutable once built. Edges keep their insertion order, which is the
/// bit order of every [`LiveEdgeGraph`] over this graph.
#[derive(Clone, Debug, PartialEq)]
pub struct InfluenceGraph {
    n: usize,
    edges: Vec<Edge>,
    // CSR index: edge ids out of node u are out_ids[out_start[u]..out_start[u + 1]],
    // sorted by target.
    out_start: Vec<usize>,
    out_ids: Vec<usize>,
}

impl InfluenceGraph {
    /// Builds a validated graph. Errors carry line 0 since there is no file.
    pub fn new(n: usize, edges: Vec<Edge>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(edges.len());
        for e in &edges {
            if let Err(kind) = check_edge(n, e, &mut seen) {
                return Err(Error::Parse { line: 0, kind });
            }
        }
        Ok(Self::build(n, edges))
    }

    /// Convenience constructor from `(u, v, p)` triples.
    pub fn from_triples(n: usize, triples: &[(u32, u32, f64)]) -> Result<Self> {
        Self::new(
            n,
            triples
                .iter()
                .map(|&(u, v, p)| Edge {
                    source: NodeId(u),
                    target: NodeId(v),
                    prob: p,
                })
                .collect(),
        )
    }

    fn build(n: usize, edges: Vec<Edge>) -> Self {
        let mut out_start = vec![0usize; n + 1];
        for e in &edges {
            out_start[e.source.index() + 1] += 1;
        }
        for u in 0..n {
            out_start[u + 1] += out_start[u];
        }
        let mut fill = out_start.clone();
        let mut out_ids = vec![0usize; edges.len()];
        for (id, e) in edges.iter().enumerate() {
            let slot = &mut fill[e.source.index()];
            out_ids[*slot] = id;
            *slot += 1;
        }
        for u in 0..n {
            out_ids[out_start[u]..out_start[u + 1]].sort_by_key(|&id| edges[id].target);
        }
        InfluenceGraph {
            n,
            edges,
            out_start,
            out_ids,
        }
    }

    /// Parses the edge-list text format.
    ///
    /// The first non-blank, non-comment line holds `n`; each following line
    /// is `u v p`. Lines starting with `#` are comments.
    pub fn parse(text: &str) -> Result<Self> {
        let mut n: Option<usize> = None;
        let mut edges = Vec::new();
        let mut seen = HashSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |kind| Error::Parse { line: line_no, kind };
            let Some(n) = n else {
                let parsed = line
                    .parse::<usize>()
                    .map_err(|_| err(ParseErrorKind::Malformed(line.to_string())))?;
                if parsed > u32::MAX as usize {
                    return Err(err(ParseErrorKind::Malformed(line.to_string())));
                }
                n = Some(parsed);
                continue;
            };
            let mut toks = line.split_whitespace();
            let (Some(a), Some(b), Some(c), None) = (toks.next(), toks.next(), toks.next(), toks.next()) else {
                return Err(err(ParseErrorKind::Malformed(line.to_string())));
            };
            let parse_node = |s: &str| -> Result<u32> {
                let v = s
                    .parse::<u64>()
                    .map_err(|_| err(ParseErrorKind::Malformed(line.to_string())))?;
                if v >= n as u64 {
                    return Err(err(ParseErrorKind::NodeOutOfRange { node: v, n }));
                }
                Ok(v as u32)
            };
            let u = parse_node(a)?;
            let v = parse_node(b)?;
            let p = c
                .parse::<f64>()
                .map_err(|_| err(ParseErrorKind::Malformed(line.to_string())))?;
            let edge = Edge {
                source: NodeId(u),
                target: NodeId(v),
                prob: p,
            };
            check_edge(n, &edge, &mut seen).map_err(err)?;
            edges.push(edge);
        }
        let n = n.ok_or(Error::Parse {
            line: 1,
            kind: ParseErrorKind::MissingHeader,
        })?;
        Ok(Self::build(n, edges))
    }

    /// Serializes to the edge-list format; `parse` inverts this exactly.
    pub fn to_edge_list(&self) -> String {
        let mut s = format!("{}\n", self.n);
        for e in &self.edges {
            let _ = writeln!(s, "{} {} {}", e.source, e.target, e.prob);
        }
        s
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    #[inline]
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    #[inline]
    pub fn edge(&self, id: usize) -> &Edge {
        &self.edges[id]
    }

    /// Edge ids leaving `u`, ordered by target.
    #[inline]
    pub fn out_edge_ids(&self, u: NodeId) -> &[usize] {
        &self.out_ids[self.out_start[u.index()]..self.out_start[u.index() + 1]]
    }

    #[inline]
    pub fn out_degree(&self, u: NodeId) -> usize {
        self.out_edge_ids(u).len()
    }

    pub fn max_out_degree(&self) -> usize {
        (0..self.n)
            .map(|u| self.out_start[u + 1] - self.out_start[u])
            .max()
            .unwrap_or(0)
    }

    pub fn out_neighbors(&self, u: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.out_edge_ids(u).iter().map(|&id| self.edges[id].target)
    }

    #[inline]
    pub fn contains_node(&self, v: NodeId) -> bool {
        v.index() < self.n
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.n as u32).map(NodeId)
    }

    /// Edges whose outcome is random, i.e. `0 < p < 1`.
    pub fn fractional_edge_count(&self) -> usize {
        self.edges.iter().filter(|e| e.prob > 0.0 && e.prob < 1.0).count()
    }
}

fn check_edge(n: usize, e: &Edge, seen: &mut HashSet<(u32, u32)>) -> std::result::Result<(), ParseErrorKind> {
    for node in [e.source, e.target] {
        if node.index() >= n {
            return Err(ParseErrorKind::NodeOutOfRange { node: node.0 as u64, n });
        }
    }
    if !(0.0..=1.0).contains(&e.prob) {
        return Err(ParseErrorKind::ProbabilityOutOfRange(e.prob.to_string()));
    }
    if e.source == e.target {
        return Err(ParseErrorKind::SelfLoop(e.source.0));
    }
    if !seen.insert((e.source.0, e.target.0)) {
        return Err(ParseErrorKind::DuplicateEdge(e.source.0, e.target.0));
    }
    Ok(())
}

/// A set of seed nodes, kept sorted.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SeedSet(BTreeSet<NodeId>);

impl SeedSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a seed set and checks every member against `g`.
    pub fn for_graph(g: &InfluenceGraph, members: impl IntoIterator<Item = NodeId>) -> Result<Self> {
        let s: SeedSet = members.into_iter().collect();
        s.validate(g)?;
        Ok(s)
    }

    pub fn validate(&self, g: &InfluenceGraph) -> Result<()> {
        match self.0.iter().find(|v| !g.contains_node(**v)) {
            Some(v) => Err(Error::invalid(format!(
                "seed {v} is not a node of a graph with {} nodes",
                g.node_count()
            ))),
            None => Ok(()),
        }
    }

    pub fn insert(&mut self, v: NodeId) -> bool {
        self.0.insert(v)
    }

    pub fn contains(&self, v: NodeId) -> bool {
        self.0.contains(&v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.0.iter().copied()
    }

    pub fn with(&self, v: NodeId) -> SeedSet {
        let mut s = self.clone();
        s.insert(v);
        s
    }

    pub fn union(&self, other: &SeedSet) -> SeedSet {
        SeedSet(self.0.union(&other.0).copied().collect())
    }

    pub fn is_subset(&self, other: &SeedSet) -> bool {
        self.0.is_subset(&other.0)
    }

    pub(crate) fn mask(&self) -> u64 {
        self.iter().fold(0u64, |m, v| m | (1u64 << v.0))
    }

    pub(crate) fn from_mask(mask: u64) -> SeedSet {
        let mut s = SeedSet::new();
        let mut m = mask;
        while m != 0 {
            s.insert(NodeId(m.trailing_zeros()));
            m &= m - 1;
        }
        s
    }
}

impl FromIterator<NodeId> for SeedSet {
    fn from_iter<I: IntoIterator<Item = NodeId>>(iter: I) -> Self {
        SeedSet(iter.into_iter().collect())
    }
}

impl<const N: usize> From<[u32; N]> for SeedSet {
    fn from(ids: [u32; N]) -> Self {
        ids.into_iter().map(NodeId).collect()
    }
}

/// One realisation of the random live-edge graph over a parent graph.
#[derive(Clone, Debug, PartialEq)]
pub struct LiveEdgeGraph<'g> {
    parent: &'g InfluenceGraph,
    present: FixedBitSet,
}

impl<'g> LiveEdgeGraph<'g> {
    pub fn new(parent: &'g InfluenceGraph, present: FixedBitSet) -> Self {
        assert_eq!(
            present.len(),
            parent.edge_count(),
            "live-edge bitset length must equal the edge count"
        );
        LiveEdgeGraph { parent, present }
    }

    pub fn empty(parent: &'g InfluenceGraph) -> Self {
        Self::new(parent, FixedBitSet::with_capacity(parent.edge_count()))
    }

    pub fn full(parent: &'g InfluenceGraph) -> Self {
        let mut bits = FixedBitSet::with_capacity(parent.edge_count());
        bits.insert_range(..);
        Self::new(parent, bits)
    }

    /// Live-edge graph whose edge `e` is present iff bit `e` of `mask` is set.
    pub fn from_mask(parent: &'g InfluenceGraph, mask: u64) -> Self {
        let mut bits = FixedBitSet::with_capacity(parent.edge_count());
        for e in 0..parent.edge_count().min(64) {
            bits.set(e, mask >> e & 1 == 1);
        }
        Self::new(parent, bits)
    }

    #[inline]
    pub fn parent(&self) -> &'g InfluenceGraph {
        self.parent
    }

    #[inline]
    pub fn is_live(&self, edge: usize) -> bool {
        self.present.contains(edge)
    }

    pub fn present(&self) -> &FixedBitSet {
        &self.present
    }

    /// Membership bitset of R_L(S) indexed by node.
    pub fn reach_bits(&self, seeds: &SeedSet) -> FixedBitSet {
        let g = self.parent;
        let mut seen = FixedBitSet::with_capacity(g.node_count());
        let mut queue: Vec<NodeId> = Vec::with_capacity(g.node_count());
        for s in seeds.iter() {
            if !seen.put(s.index()) {
                queue.push(s);
            }
        }
        let mut head = 0;
        while head < queue.len() {
            let u = queue[head];
            head += 1;
            for &id in g.out_edge_ids(u) {
                if self.present.contains(id) {
                    let t = g.edges[id].target;
                    if !seen.put(t.index()) {
                        queue.push(t);
                    }
                }
            }
        }
        seen
    }

    /// R_L(S): nodes reachable from the seeds through live edges.
    pub fn realized_reach(&self, seeds: &SeedSet) -> BTreeSet<NodeId> {
        self.reach_bits(seeds).ones().map(|i| NodeId(i as u32)).collect()
    }

    /// σ_L(S) = |R_L(S)|.
    pub fn realized_spread(&self, seeds: &SeedSet) -> usize {
        self.reach_bits(seeds).count_ones(..)
    }
}

/// Draws a live-edge graph: each edge independently present with its probability.
pub fn sample_live_edge<'g, R: Rng + ?Sized>(g: &'g InfluenceGraph, rng: &mut R) -> LiveEdgeGraph<'g> {
    let mut bits = FixedBitSet::with_capacity(g.edge_count());
    for (id, e) in g.edges.iter().enumerate() {
        if rng.gen::<f64>() < e.prob {
            bits.insert(id);
        }
    }
    LiveEdgeGraph::new(g, bits)
}

/// A base live-edge graph L with an independent shadow copy L̂.
#[derive(Clone, Debug)]
pub struct LivePair<'g> {
    pub base: LiveEdgeGraph<'g>,
    pub shadow: LiveEdgeGraph<'g>,
}

impl<'g> LivePair<'g> {
    pub fn new(base: LiveEdgeGraph<'g>, shadow: LiveEdgeGraph<'g>) -> Self {
        assert!(
            std::ptr::eq(base.parent, shadow.parent),
            "base and shadow must share a parent graph"
        );
        LivePair { base, shadow }
    }
}

/// L²(S): the base graph plus shadow edges leaving a seed.
pub fn two_level_graph<'g>(pair: &LivePair<'g>, seeds: &SeedSet) -> LiveEdgeGraph<'g> {
    let g = pair.base.parent;
    let mut bits = pair.base.present.clone();
    for s in seeds.iter() {
        for &id in g.out_edge_ids(s) {
            if pair.shadow.present.contains(id) {
                bits.insert(id);
            }
        }
    }
    LiveEdgeGraph::new(g, bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn chain3() -> InfluenceGraph {
        InfluenceGraph::from_triples(3, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap()
    }

    #[test]
    fn parse_basic() {
        let g = InfluenceGraph::parse("2\n0 1 0.5\n").unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(
            g.edges(),
            &[Edge {
                source: NodeId(0),
                target: NodeId(1),
                prob: 0.5
            }]
        );
        let g = InfluenceGraph::parse("1\n").unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (1, 0));
    }

    #[test]
    fn parse_comments_and_crlf() {
        let g = InfluenceGraph::parse("# header\r\n3\r\n\r\n0 1 0.25\r\n# x\r\n1 2 1\r\n").unwrap();
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.edge(1).prob, 1.0);
    }

    #[test]
    fn parse_errors_carry_lines() {
        type Case = (&'static str, usize, fn(&ParseErrorKind) -> bool);
        let cases: [Case; 6] = [
            ("2\n0 0 0.5\n", 2, |k| matches!(k, ParseErrorKind::SelfLoop(0))),
            ("2\n0 1 1.5\n", 2, |k| {
                matches!(k, ParseErrorKind::ProbabilityOutOfRange(_))
            }),
            ("2\n0 1 0.5\n0 1 0.2\n", 3, |k| {
                matches!(k, ParseErrorKind::DuplicateEdge(0, 1))
            }),
            ("2\n\n0 2 0.5\n", 3, |k| {
                matches!(k, ParseErrorKind::NodeOutOfRange { node: 2, n: 2 })
            }),
            ("2\n0 1\n", 2, |k| matches!(k, ParseErrorKind::Malformed(_))),
            ("x\n", 1, |k| matches!(k, ParseErrorKind::Malformed(_))),
        ];
        for (text, line, pred) in cases {
            match InfluenceGraph::parse(text) {
                Err(Error::Parse { line: l, kind }) => {
                    assert_eq!(l, line, "{text:?}");
                    assert!(pred(&kind), "{text:?}: {kind:?}");
                }
                other => panic!("{text:?}: {other:?}"),
            }
        }
        assert!(InfluenceGraph::parse("# only\n").is_err());
        assert!(InfluenceGraph::parse("2\n0 1 NaN\n").is_err());
    }

    #[test]
    fn edge_list_round_trip() {
        let g = InfluenceGraph::from_triples(4, &[(3, 0, 0.1), (0, 2, 1.0 / 3.0), (0, 1, 0.0)]).unwrap();
        assert_eq!(InfluenceGraph::parse(&g.to_edge_list()).unwrap(), g);
        let targets: Vec<_> = g.out_neighbors(NodeId(0)).collect();
        assert_eq!(targets, vec![NodeId(1), NodeId(2)]);
    }

    #[test]
    fn reach_examples() {
        let g = chain3();
        let all = LiveEdgeGraph::full(&g);
        assert!(all.realized_reach(&SeedSet::new()).is_empty());
        assert_eq!(all.realized_spread(&SeedSet::from([0])), 3);
        let broken = LiveEdgeGraph::from_mask(&g, 0b01);
        let r: Vec<_> = broken.realized_reach(&SeedSet::from([0])).into_iter().collect();
        assert_eq!(r, vec![NodeId(0), NodeId(1)]);
        let iso = InfluenceGraph::from_triples(1, &[]).unwrap();
        assert_eq!(LiveEdgeGraph::empty(&iso).realized_spread(&SeedSet::from([0])), 1);
    }

    #[test]
    fn sampling_extremes_and_determinism() {
        let g = InfluenceGraph::from_triples(3, &[(0, 1, 1.0), (1, 2, 0.0), (2, 0, 0.5)]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut hits = 0;
        for _ in 0..1000 {
            let l = sample_live_edge(&g, &mut rng);
            assert!(l.is_live(0));
            assert!(!l.is_live(1));
            hits += l.is_live(2) as u32;
        }
        assert!((400..600).contains(&hits));
        let a = sample_live_edge(&g, &mut rand_chacha::ChaCha8Rng::seed_from_u64(9));
        let b = sample_live_edge(&g, &mut rand_chacha::ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn bernoulli_presence_rate() {
        let g = InfluenceGraph::from_triples(2, &[(0, 1, 0.5)]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let live = (0..100_000)
            .filter(|_| sample_live_edge(&g, &mut rng).is_live(0))
            .count();
        assert!((live as f64 / 1e5 - 0.5).abs() <= 0.01);
    }

    #[test]
    fn two_level_graph_examples() {
        let g = InfluenceGraph::from_triples(3, &[(0, 1, 0.5), (1, 2, 0.5)]).unwrap();
        let base = LiveEdgeGraph::from_mask(&g, 0b01);
        let shadow = LiveEdgeGraph::from_mask(&g, 0b10);
        let pair = LivePair::new(base.clone(), shadow);
        assert_eq!(two_level_graph(&pair, &SeedSet::new()), base);
        assert_eq!(two_level_graph(&pair, &SeedSet::from([0])), base);
        assert_eq!(two_level_graph(&pair, &SeedSet::from([1])), LiveEdgeGraph::full(&g));
        let pair = LivePair::new(LiveEdgeGraph::empty(&g), LiveEdgeGraph::full(&g));
        assert_eq!(
            two_level_graph(&pair, &SeedSet::from([0, 1, 2])),
            LiveEdgeGraph::full(&g)
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn small_graph() -> impl Strategy<Value = InfluenceGraph> {
            (1usize..=4).prop_flat_map(|n| {
                let pairs: Vec<(u32, u32)> = (0..n as u32)
                    .flat_map(|u| (0..n as u32).filter(move |&v| v != u).map(move |v| (u, v)))
                    .collect();
                proptest::collection::vec(any::<bool>(), pairs.len()).prop_map(move |keep| {
                    let triples: Vec<_> = pairs
                        .iter()
                        .zip(keep)
                        .filter(|(_, k)| *k)
                        .map(|(&(u, v), _)| (u, v, 0.5))
                        .collect();
                    InfluenceGraph::from_triples(n, &triples).unwrap()
                })
            })
        }

        proptest! {
            #[test]
            fn reach_is_monotone_and_submodular(g in small_graph(), live in any::<u64>(), u in any::<u8>(), y in any::<u8>(), z in any::<u8>()) {
                let n = g.node_count() as u32;
                let l = LiveEdgeGraph::from_mask(&g, live);
                let set = |m: u8| SeedSet::from_mask(m as u64 & ((1u64 << n) - 1));
                let (u, z) = (set(u), set(z));
                let y = u.union(&set(y));
                let ru = l.realized_reach(&u);
                prop_assert!(ru.is_subset(&l.realized_reach(&y)));
                let lhs = l.realized_spread(&u.union(&z)) as i64 - ru.len() as i64;
                let rhs = l.realized_spread(&y.union(&z)) as i64 - l.realized_spread(&y) as i64;
                prop_assert!(lhs >= rhs);
            }
        }
    }
}
