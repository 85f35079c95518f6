use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{InfluenceGraph, LiveEdgeGraph, NodeId, SeedSet};

/// Myopic observations accumulated so far: each chosen seed maps to the set
/// of nodes it activated directly, the seed itself included.
///
/// Stored as a sorted map, so equality, ordering and hashing are canonical.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PartialRealisation {
    entries: BTreeMap<NodeId, BTreeSet<NodeId>>,
}

impl PartialRealisation {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an observation for `seed`; `observed` gets `seed` added if missing.
    pub fn insert(&mut self, seed: NodeId, observed: impl IntoIterator<Item = NodeId>) {
        let mut set: BTreeSet<NodeId> = observed.into_iter().collect();
        set.insert(seed);
        self.entries.insert(seed, set);
    }

    pub fn with(&self, seed: NodeId, observed: impl IntoIterator<Item = NodeId>) -> Self {
        let mut p = self.clone();
        p.insert(seed, observed);
        p
    }

    pub fn get(&self, seed: NodeId) -> Option<&BTreeSet<NodeId>> {
        self.entries.get(&seed)
    }

    pub fn contains(&self, seed: NodeId) -> bool {
        self.entries.contains_key(&seed)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (NodeId, &BTreeSet<NodeId>)> {
        self.entries.iter().map(|(k, v)| (*k, v))
    }

    /// dom(ψ).
    pub fn dom(&self) -> SeedSet {
        self.entries.keys().copied().collect()
    }

    /// Im(ψ).
    pub fn image(&self) -> BTreeSet<NodeId> {
        self.entries.values().flatten().copied().collect()
    }

    /// ψ ⊆ ψ': every entry of `self` appears unchanged in `other`.
    pub fn is_sub_realisation_of(&self, other: &PartialRealisation) -> bool {
        self.entries.iter().all(|(k, v)| other.entries.get(k) == Some(v))
    }

    /// Restriction of ψ to the seeds in `keep`.
    pub fn restrict(&self, keep: &SeedSet) -> PartialRealisation {
        PartialRealisation {
            entries: self
                .entries
                .iter()
                .filter(|(k, _)| keep.contains(**k))
                .map(|(k, v)| (*k, v.clone()))
                .collect(),
        }
    }

    /// Checks each entry against the graph: seed valid, seed observed,
    /// and everything else an out-neighbour.
    pub fn validate(&self, g: &InfluenceGraph) -> Result<()> {
        for (&v, obs) in &self.entries {
            if !g.contains_node(v) {
                return Err(Error::InconsistentRealisation(format!("seed {v} is not a node")));
            }
            if !obs.contains(&v) {
                return Err(Error::InconsistentRealisation(format!(
                    "observation of {v} does not contain the seed"
                )));
            }
            for &w in obs {
                if w != v && !g.out_neighbors(v).any(|t| t == w) {
                    return Err(Error::InconsistentRealisation(format!(
                        "{w} is not an out-neighbour of {v}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Whether edge `(u, w)` with `u ∈ dom(ψ)` was observed live.
    /// `None` when `u` has not been observed.
    #[inline]
    pub fn edge_observation(&self, u: NodeId, w: NodeId) -> Option<bool> {
        self.entries.get(&u).map(|o| o.contains(&w))
    }

    /// P[ψ ⊆ Φ] under the graph's edge probabilities.
    pub fn probability(&self, g: &InfluenceGraph) -> f64 {
        let mut p = 1.0;
        for (&v, obs) in &self.entries {
            for &id in g.out_edge_ids(v) {
                let e = g.edge(id);
                p *= if obs.contains(&e.target) { e.prob } else { 1.0 - e.prob };
            }
        }
        p
    }

    /// Whether `live` agrees with every observation in ψ.
    pub fn consistent_with(&self, live: &LiveEdgeGraph<'_>) -> bool {
        self.entries.iter().all(|(&v, obs)| observe(live, v) == *obs)
    }
}

/// φ_L(v): the seed together with the out-neighbours its live edges reach.
pub fn observe(live: &LiveEdgeGraph<'_>, v: NodeId) -> BTreeSet<NodeId> {
    let g = live.parent();
    let mut out: BTreeSet<NodeId> = g
        .out_edge_ids(v)
        .iter()
        .filter(|&&id| live.is_live(id))
        .map(|&id| g.edge(id).target)
        .collect();
    out.insert(v);
    out
}

/// All observation outcomes of seeding `v`, with their probabilities, in
/// increasing bitmask order over `v`'s out-edges (sorted by target).
/// Outcomes of probability zero are included.
pub fn observation_outcomes(g: &InfluenceGraph, v: NodeId) -> Vec<(BTreeSet<NodeId>, f64)> {
    let ids = g.out_edge_ids(v);
    let d = ids.len();
    assert!(d < 32, "out-degree too large to enumerate outcomes");
    (0u32..1 << d)
        .map(|mask| {
            let mut obs = BTreeSet::from([v]);
            let mut p = 1.0;
            for (j, &id) in ids.iter().enumerate() {
                let e = g.edge(id);
                if mask >> j & 1 == 1 {
                    obs.insert(e.target);
                    p *= e.prob;
                } else {
                    p *= 1.0 - e.prob;
                }
            }
            (obs, p)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn observe_examples() {
        let g = InfluenceGraph::from_triples(3, &[(0, 1, 0.5), (0, 2, 0.5)]).unwrap();
        let none = LiveEdgeGraph::empty(&g);
        let all = LiveEdgeGraph::full(&g);
        assert_eq!(observe(&none, NodeId(0)), BTreeSet::from([NodeId(0)]));
        assert_eq!(
            observe(&all, NodeId(0)),
            BTreeSet::from([NodeId(0), NodeId(1), NodeId(2)])
        );
        assert_eq!(observe(&all, NodeId(2)), BTreeSet::from([NodeId(2)]));
    }

    #[test]
    fn validation_and_order() {
        let g = InfluenceGraph::from_triples(3, &[(0, 1, 0.5)]).unwrap();
        let mut a = PartialRealisation::new();
        a.insert(NodeId(2), []);
        a.insert(NodeId(0), [NodeId(1)]);
        let mut b = PartialRealisation::new();
        b.insert(NodeId(0), [NodeId(0), NodeId(1)]);
        b.insert(NodeId(2), [NodeId(2)]);
        assert_eq!(a, b);
        assert!(a.validate(&g).is_ok());
        assert!((a.probability(&g) - 0.5).abs() < 1e-15);
        let bad = PartialRealisation::new().with(NodeId(1), [NodeId(0)]);
        assert!(matches!(bad.validate(&g), Err(Error::InconsistentRealisation(_))));
        let sub = a.restrict(&SeedSet::from([0]));
        assert!(sub.is_sub_realisation_of(&a));
        assert!(!a.is_sub_realisation_of(&sub));
    }

    #[test]
    fn outcomes_cover_all_masks() {
        let g = InfluenceGraph::from_triples(3, &[(0, 2, 0.25), (0, 1, 1.0)]).unwrap();
        let outs = observation_outcomes(&g, NodeId(0));
        assert_eq!(outs.len(), 4);
        let total: f64 = outs.iter().map(|o| o.1).sum();
        assert!((total - 1.0).abs() < 1e-15);
        // bit 0 is the edge to node 1 (targets sorted)
        assert_eq!(outs[1].0, BTreeSet::from([NodeId(0), NodeId(1)]));
        assert!((outs[1].1 - 0.75).abs() < 1e-15);
        assert_eq!(outs[2].1, 0.0);
    }
}
