//! Adaptive policies under myopic feedback, their execution and evaluation.

mod greedy;
mod hybrid;
mod realisation;

use std::collections::HashMap;

use fixedbitset::FixedBitSet;

pub(crate) use greedy::check_budget;
pub use greedy::{adaptive_greedy, nonadaptive_greedy, AdaptiveGreedy, GreedyTrace};
pub use hybrid::{hybrid_two_level_value, rand_t_value, strong_hybrid_value};
pub use realisation::{observation_outcomes, observe, PartialRealisation};

use crate::diffusion::{derive_seed, sample_rng, Evaluator, SpreadEstimate};
use crate::error::{Error, Resource, Result};
use crate::graph::{sample_live_edge, InfluenceGraph, LiveEdgeGraph, NodeId};

/// Relative tolerance under which two objective values count as tied.
pub(crate) const TIE_TOL: f64 = 1e-12;

/// What a policy does next.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Decision {
    Pick(NodeId),
    Stop,
}

/// A rule mapping the observations so far to the next seed.
///
/// Implementations must be pure: the same `psi` always yields the same
/// decision, which is what makes evaluation caches and replays exact.
pub trait AdaptivePolicy: Sync {
    fn budget(&self) -> usize;
    fn decide(&self, psi: &PartialRealisation) -> Result<Decision>;
}

impl<P: AdaptivePolicy + ?Sized> AdaptivePolicy for &P {
    fn budget(&self) -> usize {
        (**self).budget()
    }
    fn decide(&self, psi: &PartialRealisation) -> Result<Decision> {
        (**self).decide(psi)
    }
}

/// Non-adaptive policy: seeds a fixed sequence and ignores feedback.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConstantPolicy {
    seeds: Vec<NodeId>,
}

impl ConstantPolicy {
    pub fn new(seeds: impl IntoIterator<Item = NodeId>) -> Self {
        ConstantPolicy {
            seeds: seeds.into_iter().collect(),
        }
    }
}

impl AdaptivePolicy for ConstantPolicy {
    fn budget(&self) -> usize {
        self.seeds.len()
    }

    fn decide(&self, psi: &PartialRealisation) -> Result<Decision> {
        Ok(match self.seeds.iter().find(|v| !psi.contains(**v)) {
            Some(&v) if psi.len() < self.seeds.len() => Decision::Pick(v),
            _ => Decision::Stop,
        })
    }
}

/// Picks the smallest id whose value is within tolerance of the maximum.
/// Whether more than one candidate is within tolerance of the maximum.
pub(crate) fn is_tied(values: &[(NodeId, f64)]) -> bool {
    let best = values.iter().map(|&(_, x)| x).fold(f64::NEG_INFINITY, f64::max);
    let tol = TIE_TOL * best.abs().max(1.0);
    values.iter().filter(|&&(_, x)| x >= best - tol).count() > 1
}

pub(crate) fn argmax_smallest(values: &[(NodeId, f64)]) -> Option<NodeId> {
    let best = values.iter().map(|&(_, x)| x).fold(f64::NEG_INFINITY, f64::max);
    if best == f64::NEG_INFINITY {
        return None;
    }
    let tol = TIE_TOL * best.abs().max(1.0);
    values.iter().filter(|&&(_, x)| x >= best - tol).map(|&(v, _)| v).min()
}

fn checked_decision(g: &InfluenceGraph, budget: usize, psi: &PartialRealisation, d: Decision) -> Result<Decision> {
    match d {
        Decision::Stop if psi.len() < budget => Err(Error::PolicyViolation(format!(
            "stopped after {} of {budget} seeds",
            psi.len()
        ))),
        Decision::Pick(v) if psi.len() >= budget => Err(Error::PolicyViolation(format!(
            "picked {v} beyond the budget of {budget}"
        ))),
        Decision::Pick(v) if !g.contains_node(v) => Err(Error::PolicyViolation(format!("picked unknown node {v}"))),
        Decision::Pick(v) if psi.contains(v) => Err(Error::PolicyViolation(format!("picked {v} twice"))),
        d => Ok(d),
    }
}

type DecisionCache = HashMap<PartialRealisation, Decision>;

fn run_cached<P: AdaptivePolicy + ?Sized>(
    pi: &P,
    live: &LiveEdgeGraph<'_>,
    cache: &mut DecisionCache,
) -> Result<PartialRealisation> {
    let g = live.parent();
    let mut psi = PartialRealisation::new();
    loop {
        let d = match cache.get(&psi) {
            Some(d) => *d,
            None => {
                let d = checked_decision(g, pi.budget(), &psi, pi.decide(&psi)?)?;
                cache.insert(psi.clone(), d);
                d
            }
        };
        match d {
            Decision::Stop => return Ok(psi),
            Decision::Pick(v) => {
                let obs = observe(live, v);
                psi.insert(v, obs);
            }
        }
    }
}

/// Runs π on a fixed live-edge graph: start empty, observe each pick, stop on STOP.
pub fn run_policy<P: AdaptivePolicy + ?Sized>(pi: &P, live: &LiveEdgeGraph<'_>) -> Result<PartialRealisation> {
    run_cached(pi, live, &mut DecisionCache::new())
}

/// Calls `f(prob, live)` for every live-edge graph of positive probability.
/// Only fractional edges are enumerated.
pub fn for_each_live_graph<'g>(
    g: &'g InfluenceGraph,
    cap: u32,
    mut f: impl FnMut(f64, &LiveEdgeGraph<'g>) -> Result<()>,
) -> Result<()> {
    let mut fixed = FixedBitSet::with_capacity(g.edge_count());
    let mut frac = Vec::new();
    for (id, e) in g.edges().iter().enumerate() {
        if e.prob >= 1.0 {
            fixed.insert(id);
        } else if e.prob > 0.0 {
            frac.push((id, e.prob));
        }
    }
    let bits = frac.len() as u32;
    if bits > cap.min(63) {
        return Err(Error::too_large(Resource::Bits, bits as u64, cap.min(63) as u64));
    }
    // Edge j is bit `bits - 1 - j`, matching the exact spread enumeration
    // term for term so both sum in the same order.
    for mask in 0u64..1 << bits {
        let mut present = fixed.clone();
        let mut p = 1.0;
        for (j, &(id, q)) in frac.iter().enumerate() {
            if mask >> (bits as usize - 1 - j) & 1 == 1 {
                present.insert(id);
                p *= q;
            } else {
                p *= 1.0 - q;
            }
        }
        f(p, &LiveEdgeGraph::new(g, present))?;
    }
    Ok(())
}

/// σ(π) = E_L[σ_L(dom Ψ_π)].
///
/// Exact mode enumerates every live-edge graph and runs π on each; Monte
/// Carlo mode returns the mean of [`estimate_policy`].
pub fn evaluate_policy<P: AdaptivePolicy + ?Sized>(g: &InfluenceGraph, pi: &P, mode: Evaluator) -> Result<f64> {
    mode.validate()?;
    match mode {
        Evaluator::Exact { cap } => {
            let mut cache = DecisionCache::new();
            let mut total = 0.0;
            for_each_live_graph(g, cap, |p, live| {
                let psi = run_cached(pi, live, &mut cache)?;
                total += p * live.realized_spread(&psi.dom()) as f64;
                Ok(())
            })?;
            Ok(total)
        }
        Evaluator::MonteCarlo { samples, seed } => Ok(estimate_policy(g, pi, samples, seed)?.mean),
    }
}

const POLICY_EVAL_TAG: u64 = 0x5eed_0001;

/// Monte Carlo estimate of σ(π) over `samples` live-edge graphs. Streams
/// are derived from `seed` apart from any streams the policy itself uses.
pub fn estimate_policy<P: AdaptivePolicy + ?Sized>(
    g: &InfluenceGraph,
    pi: &P,
    samples: u64,
    seed: u64,
) -> Result<SpreadEstimate> {
    Evaluator::monte_carlo(samples, seed).validate()?;
    let master = derive_seed(seed, POLICY_EVAL_TAG);
    let mut cache = DecisionCache::new();
    let (mut sum, mut sq) = (0i128, 0i128);
    for i in 0..samples {
        let live = sample_live_edge(g, &mut sample_rng(master, i));
        let psi = run_cached(pi, &live, &mut cache)?;
        let s = live.realized_spread(&psi.dom()) as i128;
        sum += s;
        sq += s * s;
    }
    Ok(SpreadEstimate::from_sums(sum, sq, samples))
}

/// x_v: probability that π selects v.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectionProbabilities {
    pub x: Vec<f64>,
}

impl SelectionProbabilities {
    pub fn sum(&self) -> f64 {
        self.x.iter().sum()
    }

    /// All mass on the nodes of a fixed set.
    pub fn indicator(n: usize, seeds: impl IntoIterator<Item = NodeId>) -> Self {
        let mut x = vec![0.0; n];
        for v in seeds {
            x[v.index()] = 1.0;
        }
        SelectionProbabilities { x }
    }
}

/// Exact selection probabilities over all live-edge graphs.
pub fn selection_probabilities<P: AdaptivePolicy + ?Sized>(
    g: &InfluenceGraph,
    pi: &P,
    cap: u32,
) -> Result<SelectionProbabilities> {
    let mut x = vec![0.0; g.node_count()];
    let mut cache = DecisionCache::new();
    for_each_live_graph(g, cap, |p, live| {
        let psi = run_cached(pi, live, &mut cache)?;
        for v in psi.dom().iter() {
            x[v.index()] += p;
        }
        Ok(())
    })?;
    Ok(SelectionProbabilities { x })
}

/// Walks the tree of observation outcomes that π can produce, calling
/// `visit(psi, prob)` at every reached realisation (including the empty
/// one and the final ones). Zero-probability branches are pruned.
pub fn walk_policy<P: AdaptivePolicy + ?Sized>(
    g: &InfluenceGraph,
    pi: &P,
    mut visit: impl FnMut(&PartialRealisation, f64, Decision) -> Result<()>,
) -> Result<()> {
    fn rec<P: AdaptivePolicy + ?Sized>(
        g: &InfluenceGraph,
        pi: &P,
        psi: &mut PartialRealisation,
        prob: f64,
        visit: &mut dyn FnMut(&PartialRealisation, f64, Decision) -> Result<()>,
    ) -> Result<()> {
        let d = checked_decision(g, pi.budget(), psi, pi.decide(psi)?)?;
        visit(psi, prob, d)?;
        if let Decision::Pick(v) = d {
            for (obs, p) in observation_outcomes(g, v) {
                if p > 0.0 {
                    let mut child = psi.with(v, obs);
                    rec(g, pi, &mut child, prob * p, visit)?;
                }
            }
        }
        Ok(())
    }
    rec(g, pi, &mut PartialRealisation::new(), 1.0, &mut visit)
}

/// Final realisations of π with their probabilities.
pub fn policy_leaves<P: AdaptivePolicy + ?Sized>(g: &InfluenceGraph, pi: &P) -> Result<Vec<(PartialRealisation, f64)>> {
    let mut out = Vec::new();
    walk_policy(g, pi, |psi, p, d| {
        if d == Decision::Stop {
            out.push((psi.clone(), p));
        }
        Ok(())
    })?;
    Ok(out)
}

/// E[σ_L(S_t)] for t = 0..=k along π's run, by conditional spreads over
/// the policy's outcome tree.
pub fn policy_prefix_values<P: AdaptivePolicy + ?Sized>(g: &InfluenceGraph, pi: &P) -> Result<Vec<f64>> {
    let mut values = vec![0.0; pi.budget() + 1];
    let none = crate::graph::SeedSet::new();
    walk_policy(g, pi, |psi, p, _| {
        values[psi.len()] += p * crate::diffusion::conditional_spread(g, psi, &none)?;
        Ok(())
    })?;
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::exact_spread;
    use crate::graph::SeedSet;

    fn uvw() -> InfluenceGraph {
        InfluenceGraph::from_triples(3, &[(0, 1, 0.5)]).unwrap()
    }

    struct Repeat;
    impl AdaptivePolicy for Repeat {
        fn budget(&self) -> usize {
            2
        }
        fn decide(&self, _: &PartialRealisation) -> Result<Decision> {
            Ok(Decision::Pick(NodeId(0)))
        }
    }

    #[test]
    fn constant_policy_matches_spread() {
        let g = InfluenceGraph::from_triples(3, &[(0, 1, 0.3), (1, 2, 0.6), (2, 0, 1.0)]).unwrap();
        let pi = ConstantPolicy::new([NodeId(1), NodeId(0)]);
        let v = evaluate_policy(&g, &pi, Evaluator::exact()).unwrap();
        assert!((v - exact_spread(&g, &SeedSet::from([0, 1])).unwrap()).abs() < 1e-12);
        let x = selection_probabilities(&g, &pi, 20).unwrap();
        assert_eq!(x.x, vec![1.0, 1.0, 0.0]);
        let live = LiveEdgeGraph::empty(&g);
        assert_eq!(run_policy(&pi, &live).unwrap().dom(), SeedSet::from([0, 1]));
    }

    #[test]
    fn pick_u_then_w() {
        let g = uvw();
        let pi = ConstantPolicy::new([NodeId(0), NodeId(2)]);
        assert!((evaluate_policy(&g, &pi, Evaluator::exact()).unwrap() - 2.5).abs() < 1e-12);
        let full = ConstantPolicy::new(g.nodes());
        assert!((evaluate_policy(&g, &full, Evaluator::exact()).unwrap() - 3.0).abs() < 1e-12);
        let x = selection_probabilities(&g, &full, 20).unwrap();
        assert_eq!(x.x, vec![1.0; 3]);
    }

    #[test]
    fn violations_are_reported() {
        let g = uvw();
        let live = LiveEdgeGraph::full(&g);
        assert!(matches!(run_policy(&Repeat, &live), Err(Error::PolicyViolation(_))));
        let short = ConstantPolicy::new([NodeId(0), NodeId(0)]);
        assert!(matches!(run_policy(&short, &live), Err(Error::PolicyViolation(_))));
    }

    #[test]
    fn walk_and_leaves() {
        let g = uvw();
        let pi = ConstantPolicy::new([NodeId(0), NodeId(2)]);
        let leaves = policy_leaves(&g, &pi).unwrap();
        assert_eq!(leaves.len(), 2);
        assert!((leaves.iter().map(|l| l.1).sum::<f64>() - 1.0).abs() < 1e-15);
        let vals = policy_prefix_values(&g, &pi).unwrap();
        assert_eq!(vals.len(), 3);
        assert!((vals[1] - 1.5).abs() < 1e-12 && (vals[2] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn mc_policy_estimate() {
        let g = uvw();
        let pi = ConstantPolicy::new([NodeId(0), NodeId(2)]);
        let e = estimate_policy(&g, &pi, 20_000, 4).unwrap();
        assert!((e.mean - 2.5).abs() < 3.0 * e.half_width.max(0.01));
        assert_eq!(
            evaluate_policy(&g, &pi, Evaluator::monte_carlo(20_000, 4)).unwrap(),
            e.mean
        );
    }

    #[test]
    fn argmax_ties_to_smallest() {
        let v = [(NodeId(3), 1.0), (NodeId(1), 1.0 - 1e-14), (NodeId(2), 0.5)];
        assert_eq!(argmax_smallest(&v), Some(NodeId(1)));
        assert_eq!(argmax_smallest(&[]), None);
    }
}
