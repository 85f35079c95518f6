//! Exact enumeration over the random edge bits of a graph.
//!
//! Nodes are packed into `u64` masks, so exact paths need `n <= 64`. Each
//! edge carries an effective probability `q`; edges with `q` equal to 0 or 1
//! are fixed and only the fractional ones are branched on. An optional
//! shadow channel adds edges that are live in the boosted adjacency only,
//! which is how joint (L, L̂) enumeration is expressed.

use crate::error::{Error, Resource, Result};
use crate::graph::InfluenceGraph;

pub(crate) const MAX_EXACT_NODES: usize = 64;

/// Default number of binary choices an exact computation may enumerate.
pub const DEFAULT_ENUMERATION_CAP: u32 = 20;

#[derive(Clone, Copy, Debug)]
struct Choice {
    src: usize,
    dst_bit: u64,
    q: f64,
    shadow: bool,
}

pub(crate) struct Enumeration {
    n: usize,
    base: [u64; MAX_EXACT_NODES],
    boost: [u64; MAX_EXACT_NODES],
    choices: Vec<Choice>,
}

pub(crate) fn check_nodes(g: &InfluenceGraph) -> Result<()> {
    if g.node_count() > MAX_EXACT_NODES {
        return Err(Error::too_large(
            Resource::Nodes,
            g.node_count() as u64,
            MAX_EXACT_NODES as u64,
        ));
    }
    Ok(())
}

/// Probability that at least one of two independent chances fires.
#[inline]
pub(crate) fn boosted(p: f64) -> f64 {
    p * (2.0 - p)
}

impl Enumeration {
    pub(crate) fn new(n: usize) -> Self {
        debug_assert!(n <= MAX_EXACT_NODES);
        Enumeration {
            n,
            base: [0; MAX_EXACT_NODES],
            boost: [0; MAX_EXACT_NODES],
            choices: Vec::new(),
        }
    }

    /// Builds the single-channel enumeration where edge `id` is live with
    /// probability `law(id)`.
    pub(crate) fn from_law(g: &InfluenceGraph, mut law: impl FnMut(usize) -> f64) -> Result<Self> {
        check_nodes(g)?;
        let mut en = Enumeration::new(g.node_count());
        for (id, e) in g.edges().iter().enumerate() {
            en.add_edge(e.source.index(), e.target.index(), law(id));
        }
        Ok(en)
    }

    /// Edge live in both adjacencies with probability `q`.
    pub(crate) fn add_edge(&mut self, src: usize, dst: usize, q: f64) {
        self.add(src, dst, q, false);
    }

    /// Edge live only in the boosted adjacency with probability `q`.
    pub(crate) fn add_shadow(&mut self, src: usize, dst: usize, q: f64) {
        self.add(src, dst, q, true);
    }

    fn add(&mut self, src: usize, dst: usize, q: f64, shadow: bool) {
        let bit = 1u64 << dst;
        if q >= 1.0 {
            if !shadow {
                self.base[src] |= bit;
            }
            self.boost[src] |= bit;
        } else if q > 0.0 {
            self.choices.push(Choice {
                src,
                dst_bit: bit,
                q,
                shadow,
            });
        }
    }

    pub(crate) fn bits(&self) -> u32 {
        self.choices.len() as u32
    }

    pub(crate) fn check_cap(&self, cap: u32) -> Result<()> {
        if self.bits() > cap.min(63) {
            return Err(Error::too_large(Resource::Bits, self.bits() as u64, cap.min(63) as u64));
        }
        Ok(())
    }

    /// Calls `f(prob, choice_bits, base_adj, boosted_adj)` once per outcome
    /// of the fractional choices. Bit `i` of `choice_bits` is choice `i`.
    pub(crate) fn for_each<F>(&self, mut f: F)
    where
        F: FnMut(f64, u64, &[u64], &[u64]),
    {
        let mut base = self.base;
        let mut boost = self.boost;
        self.rec(0, 1.0, 0, &mut base, &mut boost, &mut f);
    }

    fn rec<F>(
        &self,
        i: usize,
        prob: f64,
        live: u64,
        base: &mut [u64; MAX_EXACT_NODES],
        boost: &mut [u64; MAX_EXACT_NODES],
        f: &mut F,
    ) where
        F: FnMut(f64, u64, &[u64], &[u64]),
    {
        if i == self.choices.len() {
            f(prob, live, &base[..self.n], &boost[..self.n]);
            return;
        }
        let c = self.choices[i];
        self.rec(i + 1, prob * (1.0 - c.q), live, base, boost, f);
        let (b0, s0) = (base[c.src], boost[c.src]);
        if !c.shadow {
            base[c.src] |= c.dst_bit;
        }
        boost[c.src] |= c.dst_bit;
        self.rec(i + 1, prob * c.q, live | 1 << i, base, boost, f);
        base[c.src] = b0;
        boost[c.src] = s0;
    }

    /// Σ P · |reach(seeds)| over the single channel.
    pub(crate) fn expected_reach(&self, seeds: u64) -> f64 {
        let mut total = 0.0;
        self.for_each(|p, _, adj, _| total += p * closure(adj, seeds).count_ones() as f64);
        total
    }

    /// Σ P · |reach(seeds)| in the boosted adjacency.
    pub(crate) fn expected_boosted_reach(&self, seeds: u64) -> f64 {
        let mut total = 0.0;
        self.for_each(|p, _, _, adj| total += p * closure(adj, seeds).count_ones() as f64);
        total
    }
}

/// Nodes reachable from `seeds` given per-node out-neighbour masks.
#[inline]
pub(crate) fn closure(adj: &[u64], seeds: u64) -> u64 {
    let mut reached = seeds;
    let mut frontier = seeds;
    while frontier != 0 {
        let mut next = 0u64;
        let mut f = frontier;
        while f != 0 {
            next |= adj[f.trailing_zeros() as usize];
            f &= f - 1;
        }
        frontier = next & !reached;
        reached |= frontier;
    }
    reached
}

/// Reach of `seeds`, skipping nodes already in `blocked` (which must be
/// closed under `adj`). Returns only the newly reached nodes.
#[inline]
pub(crate) fn closure_beyond(adj: &[u64], seeds: u64, blocked: u64) -> u64 {
    let start = seeds & !blocked;
    let mut reached = start | blocked;
    let mut frontier = start;
    while frontier != 0 {
        let mut next = 0u64;
        let mut f = frontier;
        while f != 0 {
            next |= adj[f.trailing_zeros() as usize];
            f &= f - 1;
        }
        frontier = next & !reached;
        reached |= frontier;
    }
    reached & !blocked
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closure_walks_paths() {
        let adj = [0b010, 0b100, 0];
        assert_eq!(closure(&adj, 0b001), 0b111);
        assert_eq!(closure(&adj, 0), 0);
        assert_eq!(closure_beyond(&adj, 0b001, 0b110), 0b001);
    }

    #[test]
    fn fixed_edges_are_not_branched() {
        let mut en = Enumeration::new(3);
        en.add_edge(0, 1, 1.0);
        en.add_edge(1, 2, 0.0);
        en.add_edge(2, 0, 0.5);
        assert_eq!(en.bits(), 1);
        let mut total = 0.0;
        en.for_each(|p, _, _, _| total += p);
        assert_eq!(total, 1.0);
        assert!((en.expected_reach(0b001) - 2.0).abs() < 1e-15);
        assert!((en.expected_reach(0b100) - 2.0).abs() < 1e-15);
        assert!(en.check_cap(0).is_err());
    }

    #[test]
    fn shadow_only_in_boosted() {
        let mut en = Enumeration::new(2);
        en.add_edge(0, 1, 0.5);
        en.add_shadow(0, 1, 0.5);
        assert!((en.expected_reach(1) - 1.5).abs() < 1e-15);
        assert!((en.expected_boosted_reach(1) - 1.75).abs() < 1e-15);
    }
}
