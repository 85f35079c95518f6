//! Expected spread under the ordinary, 2-level and strong 2-level models.
//!
//! Exact routines enumerate the fractional edge bits (see [`engine`]);
//! Monte Carlo routines average realized spreads over reproducible streams.

pub(crate) mod engine;
pub mod montecarlo;

use fixedbitset::FixedBitSet;

pub use engine::DEFAULT_ENUMERATION_CAP;
pub use montecarlo::{derive_seed, sample_rng, SpreadEstimate};

use crate::error::{Error, Result};
use crate::graph::{sample_live_edge, InfluenceGraph, LiveEdgeGraph, NodeId, SeedSet};
use crate::policy::PartialRealisation;
use engine::{boosted, closure, closure_beyond, Enumeration};

/// How spreads are evaluated by greedy procedures and marginal gains.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Evaluator {
    /// Exact enumeration, refusing more than `cap` fractional bits.
    Exact { cap: u32 },
    /// Average over `samples` live-edge graphs drawn from `seed`.
    MonteCarlo { samples: u64, seed: u64 },
}

impl Evaluator {
    pub fn exact() -> Self {
        Evaluator::Exact {
            cap: DEFAULT_ENUMERATION_CAP,
        }
    }

    pub fn monte_carlo(samples: u64, seed: u64) -> Self {
        Evaluator::MonteCarlo { samples, seed }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        match self {
            Evaluator::MonteCarlo { samples: 0, .. } => {
                Err(Error::invalid("Monte Carlo mode needs at least one sample"))
            }
            _ => Ok(()),
        }
    }
}

fn check_node(g: &InfluenceGraph, v: NodeId) -> Result<()> {
    if g.contains_node(v) {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "node {v} is not in a graph with {} nodes",
            g.node_count()
        )))
    }
}

fn law_enumeration(g: &InfluenceGraph, cap: u32, law: impl FnMut(usize) -> f64) -> Result<Enumeration> {
    let en = Enumeration::from_law(g, law)?;
    en.check_cap(cap)?;
    Ok(en)
}

/// σ(S) by exact enumeration with the default cap.
pub fn exact_spread(g: &InfluenceGraph, seeds: &SeedSet) -> Result<f64> {
    exact_spread_capped(g, seeds, DEFAULT_ENUMERATION_CAP)
}

pub fn exact_spread_capped(g: &InfluenceGraph, seeds: &SeedSet, cap: u32) -> Result<f64> {
    seeds.validate(g)?;
    let en = law_enumeration(g, cap, |id| g.edge(id).prob)?;
    Ok(en.expected_reach(seeds.mask()))
}

/// Monte Carlo estimate of σ(S).
pub fn estimate_spread(g: &InfluenceGraph, seeds: &SeedSet, samples: u64, seed: u64) -> Result<SpreadEstimate> {
    Evaluator::monte_carlo(samples, seed).validate()?;
    seeds.validate(g)?;
    if seeds.is_empty() {
        return Ok(SpreadEstimate {
            mean: 0.0,
            samples,
            half_width: 0.0,
        });
    }
    let (sum, sq) = montecarlo::sum_samples(samples, |i| {
        let live = sample_live_edge(g, &mut sample_rng(seed, i));
        live.realized_spread(seeds) as i64
    });
    Ok(SpreadEstimate::from_sums(sum, sq, samples))
}

/// σ²(S): seed-out edges live with probability 1 − (1 − p)².
pub fn exact_two_level_spread(g: &InfluenceGraph, seeds: &SeedSet) -> Result<f64> {
    exact_two_level_spread_capped(g, seeds, DEFAULT_ENUMERATION_CAP)
}

pub fn exact_two_level_spread_capped(g: &InfluenceGraph, seeds: &SeedSet, cap: u32) -> Result<f64> {
    seeds.validate(g)?;
    let en = law_enumeration(g, cap, |id| {
        let e = g.edge(id);
        if seeds.contains(e.source) {
            boosted(e.prob)
        } else {
            e.prob
        }
    })?;
    Ok(en.expected_reach(seeds.mask()))
}

/// σ²(S) by joint enumeration of L and the shadow bits of seed-out edges.
/// Kept as the cross-check for [`exact_two_level_spread`].
pub fn exact_two_level_spread_joint(g: &InfluenceGraph, seeds: &SeedSet, cap: u32) -> Result<f64> {
    seeds.validate(g)?;
    engine::check_nodes(g)?;
    let mut en = Enumeration::new(g.node_count());
    for e in g.edges() {
        en.add_edge(e.source.index(), e.target.index(), e.prob);
        if seeds.contains(e.source) {
            en.add_shadow(e.source.index(), e.target.index(), e.prob);
        }
    }
    en.check_cap(cap)?;
    Ok(en.expected_boosted_reach(seeds.mask()))
}

/// Δ_S(v) = σ(S ∪ {v}) − σ(S).
pub fn marginal_gain(g: &InfluenceGraph, seeds: &SeedSet, v: NodeId, ev: Evaluator) -> Result<f64> {
    ev.validate()?;
    seeds.validate(g)?;
    check_node(g, v)?;
    if seeds.contains(v) {
        return Ok(0.0);
    }
    match ev {
        Evaluator::Exact { cap } => {
            let en = law_enumeration(g, cap, |id| g.edge(id).prob)?;
            Ok(exact_marginals(&en, seeds.mask(), 1 << v.0)[v.index()])
        }
        Evaluator::MonteCarlo { samples, seed } => {
            let with = seeds.with(v);
            let (sum, _) = montecarlo::sum_samples(samples, |i| {
                let live = sample_live_edge(g, &mut sample_rng(seed, i));
                live.realized_spread(&with) as i64 - live.realized_spread(seeds) as i64
            });
            Ok(sum as f64 / samples as f64)
        }
    }
}

/// Exact Σ P·|R(base ∪ {c}) \ R(base)| for every candidate bit `c`.
/// Entries for non-candidates are 0.
pub(crate) fn exact_marginals(en: &Enumeration, base: u64, candidates: u64) -> Vec<f64> {
    let n = 64 - candidates.leading_zeros() as usize;
    let mut out = vec![0.0; n.max(1)];
    en.for_each(|p, _, adj, _| {
        let r = closure(adj, base);
        let mut c = candidates;
        while c != 0 {
            let v = c.trailing_zeros() as usize;
            c &= c - 1;
            out[v] += p * closure_beyond(adj, 1 << v, r).count_ones() as f64;
        }
    });
    out
}

/// Δ²_S(v): v alone gets a second chance on its out-edges. Zero when v ∈ S.
pub fn two_level_marginal(g: &InfluenceGraph, seeds: &SeedSet, v: NodeId) -> Result<f64> {
    two_level_conditional_marginal(g, seeds, v, &PartialRealisation::new())
}

/// E[σ_L(dom ψ ∪ extra) | ψ ⊆ Φ].
pub fn conditional_spread(g: &InfluenceGraph, psi: &PartialRealisation, extra: &SeedSet) -> Result<f64> {
    conditional_spread_capped(g, psi, extra, DEFAULT_ENUMERATION_CAP)
}

pub fn conditional_spread_capped(
    g: &InfluenceGraph,
    psi: &PartialRealisation,
    extra: &SeedSet,
    cap: u32,
) -> Result<f64> {
    psi.validate(g)?;
    extra.validate(g)?;
    let en = law_enumeration(g, cap, |id| conditioned(g, psi, id))?;
    Ok(en.expected_reach(psi.dom().mask() | extra.mask()))
}

/// Δ_ψ(v) for every v ∉ dom ψ (entries for dom ψ are 0), from one pass.
pub fn conditional_marginals(g: &InfluenceGraph, psi: &PartialRealisation, cap: u32) -> Result<Vec<f64>> {
    psi.validate(g)?;
    let en = law_enumeration(g, cap, |id| conditioned(g, psi, id))?;
    let dom = psi.dom().mask();
    let all = if g.node_count() == 64 {
        u64::MAX
    } else {
        (1u64 << g.node_count()) - 1
    };
    let mut out = exact_marginals(&en, dom, all & !dom);
    out.resize(g.node_count(), 0.0);
    Ok(out)
}

// Effective probability of edge `id` given ψ on L.
#[inline]
fn conditioned(g: &InfluenceGraph, psi: &PartialRealisation, id: usize) -> f64 {
    let e = g.edge(id);
    match psi.edge_observation(e.source, e.target) {
        Some(true) => 1.0,
        Some(false) => 0.0,
        None => e.prob,
    }
}

// Effective probability of an L²-edge whose L̂ copy is conditioned on ψ̂.
#[inline]
fn shadow_conditioned(g: &InfluenceGraph, psi_hat: &PartialRealisation, id: usize) -> f64 {
    let e = g.edge(id);
    match psi_hat.edge_observation(e.source, e.target) {
        Some(true) => 1.0,
        _ => e.prob,
    }
}

/// σ²_ψ(dom ψ ∪ extra): nodes of extra \ dom ψ get two chances, edges out
/// of dom ψ are fixed by ψ.
pub fn strong_two_level_conditional_spread(
    g: &InfluenceGraph,
    psi: &PartialRealisation,
    extra: &SeedSet,
) -> Result<f64> {
    psi.validate(g)?;
    extra.validate(g)?;
    let en = law_enumeration(g, DEFAULT_ENUMERATION_CAP, |id| {
        let e = g.edge(id);
        if psi.contains(e.source) {
            conditioned(g, psi, id)
        } else if extra.contains(e.source) {
            boosted(e.prob)
        } else {
            e.prob
        }
    })?;
    Ok(en.expected_reach(psi.dom().mask() | extra.mask()))
}

/// Δ²_S(v | ψ̂): increment of adding v to S ∪ dom ψ̂ in the 2-level model
/// where exactly the nodes of ({v} ∪ dom ψ̂) \ S get two chances and L̂ is
/// conditioned on ψ̂. Zero when v ∈ S ∪ dom ψ̂.
pub fn two_level_conditional_marginal(
    g: &InfluenceGraph,
    seeds: &SeedSet,
    v: NodeId,
    psi_hat: &PartialRealisation,
) -> Result<f64> {
    seeds.validate(g)?;
    psi_hat.validate(g)?;
    check_node(g, v)?;
    engine::check_nodes(g)?;
    if seeds.contains(v) || psi_hat.contains(v) {
        return Ok(0.0);
    }
    let mut en = Enumeration::new(g.node_count());
    for (id, e) in g.edges().iter().enumerate() {
        let (s, t) = (e.source.index(), e.target.index());
        if psi_hat.contains(e.source) && !seeds.contains(e.source) {
            en.add_edge(s, t, shadow_conditioned(g, psi_hat, id));
        } else {
            en.add_edge(s, t, e.prob);
            if e.source == v {
                en.add_shadow(s, t, e.prob);
            }
        }
    }
    en.check_cap(DEFAULT_ENUMERATION_CAP)?;
    let a0 = seeds.mask() | psi_hat.dom().mask();
    Ok(boosted_increment(&en, a0, v))
}

/// Δ²_ψ(v | ψ̂) in the strong 2-level model: L conditioned on ψ, L̂ on ψ̂,
/// second chances for ({v} ∪ dom ψ̂) \ dom ψ. Zero when v ∈ dom ψ ∪ dom ψ̂.
pub fn strong_two_level_conditional_marginal(
    g: &InfluenceGraph,
    psi: &PartialRealisation,
    v: NodeId,
    psi_hat: &PartialRealisation,
) -> Result<f64> {
    psi.validate(g)?;
    psi_hat.validate(g)?;
    check_node(g, v)?;
    engine::check_nodes(g)?;
    if psi.contains(v) || psi_hat.contains(v) {
        return Ok(0.0);
    }
    let mut en = Enumeration::new(g.node_count());
    for (id, e) in g.edges().iter().enumerate() {
        let (s, t) = (e.source.index(), e.target.index());
        if psi.contains(e.source) {
            en.add_edge(s, t, conditioned(g, psi, id));
        } else if psi_hat.contains(e.source) {
            en.add_edge(s, t, shadow_conditioned(g, psi_hat, id));
        } else {
            en.add_edge(s, t, e.prob);
            if e.source == v {
                en.add_shadow(s, t, e.prob);
            }
        }
    }
    en.check_cap(DEFAULT_ENUMERATION_CAP)?;
    let a0 = psi.dom().mask() | psi_hat.dom().mask();
    Ok(boosted_increment(&en, a0, v))
}

/// Δ²_ψ(v) = Δ²_ψ(v | ∅).
pub fn strong_two_level_marginal(g: &InfluenceGraph, psi: &PartialRealisation, v: NodeId) -> Result<f64> {
    strong_two_level_conditional_marginal(g, psi, v, &PartialRealisation::new())
}

// Σ P·(|R_boost(a0 ∪ {v})| − |R_base(a0)|).
fn boosted_increment(en: &Enumeration, a0: u64, v: NodeId) -> f64 {
    let a1 = a0 | 1 << v.0;
    let mut total = 0.0;
    en.for_each(|p, _, base, boost| {
        let d = closure(boost, a1).count_ones() - closure(base, a0).count_ones();
        total += p * d as f64;
    });
    total
}

// Reach of `from` that avoids `blocked`, counted without revisiting it.
pub(crate) fn extension_count(
    live: &LiveEdgeGraph<'_>,
    blocked: &FixedBitSet,
    from: NodeId,
    seen: &mut FixedBitSet,
    queue: &mut Vec<NodeId>,
) -> usize {
    if blocked.contains(from.index()) {
        return 0;
    }
    let g = live.parent();
    seen.clear();
    queue.clear();
    seen.insert(from.index());
    queue.push(from);
    let mut head = 0;
    while head < queue.len() {
        let u = queue[head];
        head += 1;
        for &id in g.out_edge_ids(u) {
            if live.is_live(id) {
                let t = g.edge(id).target;
                if !blocked.contains(t.index()) && !seen.put(t.index()) {
                    queue.push(t);
                }
            }
        }
    }
    queue.len()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    fn g(n: usize, t: &[(u32, u32, f64)]) -> InfluenceGraph {
        InfluenceGraph::from_triples(n, t).unwrap()
    }

    #[test]
    fn exact_spread_examples() {
        assert!(close(
            exact_spread(&g(2, &[(0, 1, 0.5)]), &SeedSet::from([0])).unwrap(),
            1.5
        ));
        let chain = g(3, &[(0, 1, 0.5), (1, 2, 0.5)]);
        assert!(close(exact_spread(&chain, &SeedSet::from([0])).unwrap(), 1.75));
        let join = g(3, &[(0, 2, 0.5), (1, 2, 0.5)]);
        assert!(close(exact_spread(&join, &SeedSet::from([0, 1])).unwrap(), 2.75));
        assert_eq!(exact_spread(&join, &SeedSet::new()).unwrap(), 0.0);
    }

    #[test]
    fn cap_is_enforced_on_fractional_edges() {
        let triples: Vec<_> = (1..=21).map(|v| (0, v, 0.5)).collect();
        let star = g(22, &triples);
        match exact_spread(&star, &SeedSet::from([0])) {
            Err(Error::EnumerationTooLarge {
                required: 21,
                limit: 20,
                ..
            }) => {}
            other => panic!("{other:?}"),
        }
        // certain edges are free
        let triples: Vec<_> = (1..=30).map(|v| (0, v, 1.0)).collect();
        assert!(close(
            exact_spread(&g(31, &triples), &SeedSet::from([0])).unwrap(),
            31.0
        ));
    }

    #[test]
    fn two_level_examples() {
        let one = g(2, &[(0, 1, 0.5)]);
        assert!(close(exact_two_level_spread(&one, &SeedSet::from([0])).unwrap(), 1.75));
        assert_eq!(exact_two_level_spread(&one, &SeedSet::new()).unwrap(), 0.0);
        let chain = g(3, &[(0, 1, 0.5), (1, 2, 0.5)]);
        assert!(close(
            exact_two_level_spread(&chain, &SeedSet::from([0])).unwrap(),
            2.125
        ));
        assert!(close(
            exact_two_level_spread_joint(&chain, &SeedSet::from([0]), 20).unwrap(),
            2.125
        ));
    }

    #[test]
    fn marginal_examples() {
        let one = g(2, &[(0, 1, 0.5)]);
        let ex = Evaluator::exact();
        assert_eq!(marginal_gain(&one, &SeedSet::from([0]), NodeId(0), ex).unwrap(), 0.0);
        assert!(close(marginal_gain(&one, &SeedSet::new(), NodeId(0), ex).unwrap(), 1.5));
        let iso = g(3, &[(0, 1, 0.5)]);
        assert!(close(
            marginal_gain(&iso, &SeedSet::from([0]), NodeId(2), ex).unwrap(),
            1.0
        ));
        assert!(close(
            two_level_marginal(&one, &SeedSet::new(), NodeId(0)).unwrap(),
            1.75
        ));
        assert!(close(
            two_level_marginal(&iso, &SeedSet::from([0]), NodeId(2)).unwrap(),
            1.0
        ));
        assert_eq!(two_level_marginal(&one, &SeedSet::from([0]), NodeId(0)).unwrap(), 0.0);
    }

    #[test]
    fn mc_marginal_close_to_exact() {
        let chain = g(3, &[(0, 1, 0.5), (1, 2, 0.5)]);
        let m = marginal_gain(
            &chain,
            &SeedSet::from([1]),
            NodeId(0),
            Evaluator::monte_carlo(40_000, 5),
        )
        .unwrap();
        assert!((m - 1.0).abs() < 0.02, "{m}");
    }

    // The literal Δ² lets v reuse its second chance even when v is already
    // active through S, which Δ cannot credit.
    #[test]
    fn two_level_marginal_can_exceed_twice_marginal() {
        let gr = g(3, &[(0, 1, 1.0), (1, 2, 0.3)]);
        let s = SeedSet::from([0]);
        let d = marginal_gain(&gr, &s, NodeId(1), Evaluator::exact()).unwrap();
        let d2 = two_level_marginal(&gr, &s, NodeId(1)).unwrap();
        assert_eq!(d, 0.0);
        assert!(close(d2, 0.21));
    }

    #[test]
    fn conditional_examples() {
        let one = g(2, &[(0, 1, 0.5)]);
        let live = PartialRealisation::new().with(NodeId(0), [NodeId(1)]);
        let dead = PartialRealisation::new().with(NodeId(0), []);
        let none = SeedSet::new();
        assert!(close(conditional_spread(&one, &live, &none).unwrap(), 2.0));
        assert!(close(conditional_spread(&one, &dead, &none).unwrap(), 1.0));
        assert!(close(
            conditional_spread(&one, &PartialRealisation::new(), &SeedSet::from([0])).unwrap(),
            1.5
        ));
        let bad = PartialRealisation::new().with(NodeId(1), [NodeId(0)]);
        assert!(matches!(
            conditional_spread(&one, &bad, &none),
            Err(Error::InconsistentRealisation(_))
        ));
        assert!(close(
            strong_two_level_conditional_spread(&one, &dead, &SeedSet::from([1])).unwrap(),
            2.0
        ));
        assert!(close(
            strong_two_level_conditional_spread(&one, &PartialRealisation::new(), &SeedSet::from([0])).unwrap(),
            1.75
        ));
    }

    #[test]
    fn estimate_examples() {
        let one = g(2, &[(0, 1, 0.5)]);
        let e = estimate_spread(&one, &SeedSet::new(), 10, 1).unwrap();
        assert_eq!((e.mean, e.half_width), (0.0, 0.0));
        let e = estimate_spread(&one, &SeedSet::from([0]), 100_000, 1).unwrap();
        assert!((e.mean - 1.5).abs() <= 0.02);
        let fork = g(3, &[(0, 1, 0.5), (0, 2, 0.5)]);
        let e = estimate_spread(&fork, &SeedSet::from([0]), 100_000, 2).unwrap();
        assert!((e.mean - 2.0).abs() <= 0.02);
        assert_eq!(e, estimate_spread(&fork, &SeedSet::from([0]), 100_000, 2).unwrap());
        assert!(estimate_spread(&fork, &SeedSet::from([0]), 0, 2).is_err());
    }
}
