//! Per-realisation reach table for small instances.
//!
//! One row per outcome of the fractional edges: its probability, its live
//! edge mask and the reach mask of every single node. Reach of a set is the
//! union of its members' rows, so every spread query is a few word ops.

use crate::diffusion::engine::{check_nodes, closure, Enumeration};
use crate::error::{Error, Resource, Result};
use crate::graph::InfluenceGraph;

pub(crate) struct LiveTable {
    pub n: usize,
    pub prob: Vec<f64>,
    pub live: Vec<u64>,
    reach: Vec<u64>,
    /// Edge mask of all out-edges of each node.
    pub out_mask: Vec<u64>,
}

impl LiveTable {
    pub fn build(g: &InfluenceGraph, max_bits: u32) -> Result<Self> {
        check_nodes(g)?;
        if g.edge_count() > 64 {
            return Err(Error::too_large(Resource::Edges, g.edge_count() as u64, 64));
        }
        let n = g.node_count();
        let mut en = Enumeration::new(n);
        let mut choice_edge = Vec::new();
        let mut fixed_live = 0u64;
        let mut out_mask = vec![0u64; n];
        for (id, e) in g.edges().iter().enumerate() {
            out_mask[e.source.index()] |= 1 << id;
            if e.prob >= 1.0 {
                fixed_live |= 1 << id;
            } else if e.prob > 0.0 {
                choice_edge.push(id);
            }
            en.add_edge(e.source.index(), e.target.index(), e.prob);
        }
        en.check_cap(max_bits)?;
        let rows = 1usize << en.bits();
        let mut t = LiveTable {
            n,
            prob: Vec::with_capacity(rows),
            live: Vec::with_capacity(rows),
            reach: Vec::with_capacity(rows * n),
            out_mask,
        };
        en.for_each(|p, bits, adj, _| {
            let mut live = fixed_live;
            let mut b = bits;
            while b != 0 {
                live |= 1 << choice_edge[b.trailing_zeros() as usize];
                b &= b - 1;
            }
            t.prob.push(p);
            t.live.push(live);
            for v in 0..n {
                t.reach.push(closure(adj, 1 << v));
            }
        });
        Ok(t)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.prob.len()
    }

    /// Reach mask of node set `set` in row `i`.
    #[inline]
    pub fn reach_of(&self, i: usize, set: u64) -> u64 {
        let row = &self.reach[i * self.n..(i + 1) * self.n];
        let mut r = 0u64;
        let mut s = set;
        while s != 0 {
            r |= row[s.trailing_zeros() as usize];
            s &= s - 1;
        }
        r
    }

    /// Σ P · |reach(set)| over the rows in `idx`.
    pub fn mass_spread(&self, idx: &[u32], set: u64) -> f64 {
        idx.iter()
            .map(|&i| self.prob[i as usize] * self.reach_of(i as usize, set).count_ones() as f64)
            .sum()
    }

    /// σ(set) over all rows.
    pub fn spread(&self, set: u64) -> f64 {
        (0..self.rows())
            .map(|i| self.prob[i] * self.reach_of(i, set).count_ones() as f64)
            .sum()
    }

    pub fn all_rows(&self) -> Vec<u32> {
        (0..self.rows() as u32).collect()
    }

    /// Splits `idx` by the outcome of `v`'s out-edges into `out`, returning
    /// `(outcome edge mask, start, end)` ranges into `out`. Outcomes without
    /// rows are omitted.
    pub fn partition(&self, idx: &[u32], v: usize, out: &mut Vec<u32>, groups: &mut Vec<(u64, usize, usize)>) {
        out.clear();
        groups.clear();
        let m = self.out_mask[v];
        out.extend_from_slice(idx);
        out.sort_by_key(|&i| self.live[i as usize] & m);
        let mut start = 0;
        while start < out.len() {
            let key = self.live[out[start] as usize] & m;
            let mut end = start + 1;
            while end < out.len() && self.live[out[end] as usize] & m == key {
                end += 1;
            }
            groups.push((key, start, end));
            start = end;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_spreads_match_enumeration() {
        let g = InfluenceGraph::from_triples(3, &[(0, 1, 0.5), (1, 2, 0.5), (2, 0, 1.0)]).unwrap();
        let t = LiveTable::build(&g, 20).unwrap();
        assert_eq!(t.rows(), 4);
        assert!((t.spread(0b001) - 1.75).abs() < 1e-15);
        assert!((t.spread(0b100) - 2.5).abs() < 1e-15);
        let mut out = Vec::new();
        let mut groups = Vec::new();
        t.partition(&t.all_rows(), 0, &mut out, &mut groups);
        assert_eq!(groups.len(), 2);
        let mass: f64 = out[groups[1].1..groups[1].2].iter().map(|&i| t.prob[i as usize]).sum();
        assert!((mass - 0.5).abs() < 1e-15);
    }
}
