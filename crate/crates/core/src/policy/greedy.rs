use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};

use super::{argmax_smallest, AdaptivePolicy, Decision, PartialRealisation};
use crate::diffusion::engine::Enumeration;
use crate::diffusion::{
    conditional_marginals, derive_seed, exact_marginals, extension_count, montecarlo, sample_rng, Evaluator,
};
use crate::error::{Error, Result};
use crate::graph::{sample_live_edge, InfluenceGraph, LiveEdgeGraph, NodeId, SeedSet};

/// Output of non-adaptive greedy: the pick order and σ after each prefix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreedyTrace {
    pub seeds: Vec<NodeId>,
    pub values: Vec<f64>,
    /// Confidence half-widths per prefix; empty in exact mode.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub half_widths: Vec<f64>,
}

impl GreedyTrace {
    pub fn seed_set(&self) -> SeedSet {
        self.seeds.iter().copied().collect()
    }

    pub fn final_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }
}

pub(crate) fn check_budget(g: &InfluenceGraph, k: usize) -> Result<()> {
    if k == 0 || k > g.node_count() {
        return Err(Error::invalid(format!(
            "budget k = {k} must be between 1 and n = {}",
            g.node_count()
        )));
    }
    Ok(())
}

/// Kempe-style greedy: k times, add the node with the largest marginal gain.
///
/// Monte Carlo mode reuses one batch of live-edge graphs (streams keyed by
/// sample index) for every candidate and every iteration, so per-sample
/// spreads and therefore prefix values are non-decreasing.
pub fn nonadaptive_greedy(g: &InfluenceGraph, k: usize, ev: Evaluator) -> Result<GreedyTrace> {
    check_budget(g, k)?;
    ev.validate()?;
    match ev {
        Evaluator::Exact { cap } => exact_greedy(g, k, cap),
        Evaluator::MonteCarlo { samples, seed } => mc_greedy(g, k, samples, seed),
    }
}

fn exact_greedy(g: &InfluenceGraph, k: usize, cap: u32) -> Result<GreedyTrace> {
    let en = Enumeration::from_law(g, |id| g.edge(id).prob)?;
    en.check_cap(cap)?;
    let n = g.node_count();
    let mut chosen = 0u64;
    let mut trace = GreedyTrace {
        seeds: Vec::with_capacity(k),
        values: Vec::with_capacity(k),
        half_widths: Vec::new(),
    };
    for _ in 0..k {
        let free = (0..n as u32).filter(|v| chosen >> v & 1 == 0);
        let cand = free.clone().fold(0u64, |m, v| m | 1 << v);
        let gains = exact_marginals(&en, chosen, cand);
        let vals: Vec<_> = free.map(|v| (NodeId(v), gains[v as usize])).collect();
        let v = argmax_smallest(&vals).expect("k <= n");
        chosen |= 1 << v.0;
        trace.seeds.push(v);
        trace.values.push(en.expected_reach(chosen));
    }
    Ok(trace)
}

fn mc_greedy(g: &InfluenceGraph, k: usize, samples: u64, seed: u64) -> Result<GreedyTrace> {
    let n = g.node_count();
    let mut seeds = SeedSet::new();
    let mut trace = GreedyTrace {
        seeds: Vec::with_capacity(k),
        values: Vec::with_capacity(k),
        half_widths: Vec::with_capacity(k),
    };
    for _ in 0..k {
        // layout: [0, n) extension counts, [n, 2n) squared totals, 2n base spread
        let acc = montecarlo::sum_sample_vectors(samples, 2 * n + 1, |i, acc| {
            let live = sample_live_edge(g, &mut sample_rng(seed, i));
            let reach = live.reach_bits(&seeds);
            let base = reach.count_ones(..) as i64;
            acc[2 * n] += base;
            let mut seen = FixedBitSet::with_capacity(n);
            let mut queue = Vec::new();
            for v in g.nodes() {
                if seeds.contains(v) {
                    continue;
                }
                let ext = extension_count(&live, &reach, v, &mut seen, &mut queue) as i64;
                acc[v.index()] += ext;
                acc[n + v.index()] += (base + ext) * (base + ext);
            }
        });
        let v = g
            .nodes()
            .filter(|v| !seeds.contains(*v))
            .max_by(|a, b| acc[a.index()].cmp(&acc[b.index()]).then(b.cmp(a)))
            .expect("k <= n");
        seeds.insert(v);
        let est = montecarlo::SpreadEstimate::from_sums(
            (acc[2 * n] + acc[v.index()]) as i128,
            acc[n + v.index()] as i128,
            samples,
        );
        trace.seeds.push(v);
        trace.values.push(est.mean);
        trace.half_widths.push(est.half_width);
    }
    Ok(trace)
}

/// π^GR_k: at each step pick the node with the largest conditional
/// marginal gain given the observations so far.
#[derive(Clone, Debug)]
pub struct AdaptiveGreedy<'g> {
    graph: &'g InfluenceGraph,
    k: usize,
    evaluator: Evaluator,
}

/// Builds the adaptive greedy policy for budget `k`.
pub fn adaptive_greedy(g: &InfluenceGraph, k: usize, ev: Evaluator) -> Result<AdaptiveGreedy<'_>> {
    check_budget(g, k)?;
    ev.validate()?;
    Ok(AdaptiveGreedy {
        graph: g,
        k,
        evaluator: ev,
    })
}

impl AdaptiveGreedy<'_> {
    /// Conditional gains Δ_ψ(v) for v ∉ dom ψ (others are `None`). Monte
    /// Carlo gains are averages over the batch for this depth.
    pub fn gains(&self, psi: &PartialRealisation) -> Result<Vec<Option<f64>>> {
        let g = self.graph;
        let raw: Vec<f64> = match self.evaluator {
            Evaluator::Exact { cap } => conditional_marginals(g, psi, cap)?,
            Evaluator::MonteCarlo { samples, seed } => {
                psi.validate(g)?;
                mc_conditional_gains(g, psi, samples, derive_seed(seed, psi.len() as u64))
                    .into_iter()
                    .map(|s| s as f64 / samples as f64)
                    .collect()
            }
        };
        Ok(g.nodes().map(|v| (!psi.contains(v)).then(|| raw[v.index()])).collect())
    }
}

impl AdaptivePolicy for AdaptiveGreedy<'_> {
    fn budget(&self) -> usize {
        self.k
    }

    fn decide(&self, psi: &PartialRealisation) -> Result<Decision> {
        if psi.len() >= self.k {
            return Ok(Decision::Stop);
        }
        let g = self.graph;
        let pick = match self.evaluator {
            Evaluator::Exact { cap } => {
                let gains = conditional_marginals(g, psi, cap)?;
                let vals: Vec<_> = g
                    .nodes()
                    .filter(|v| !psi.contains(*v))
                    .map(|v| (v, gains[v.index()]))
                    .collect();
                argmax_smallest(&vals)
            }
            Evaluator::MonteCarlo { samples, seed } => {
                psi.validate(g)?;
                let sums = mc_conditional_gains(g, psi, samples, derive_seed(seed, psi.len() as u64));
                g.nodes()
                    .filter(|v| !psi.contains(*v))
                    .max_by(|a, b| sums[a.index()].cmp(&sums[b.index()]).then(b.cmp(a)))
            }
        };
        Ok(pick.map_or(Decision::Stop, Decision::Pick))
    }
}

// Integer sums of extension counts per candidate, with edges out of dom ψ
// fixed by ψ and every other edge drawn from the stream of its sample.
fn mc_conditional_gains(g: &InfluenceGraph, psi: &PartialRealisation, samples: u64, seed: u64) -> Vec<i64> {
    let n = g.node_count();
    let dom = psi.dom();
    montecarlo::sum_sample_vectors(samples, n, |i, acc| {
        let drawn = sample_live_edge(g, &mut sample_rng(seed, i));
        let mut bits = drawn.present().clone();
        for (u, obs) in psi.entries() {
            for &id in g.out_edge_ids(u) {
                bits.set(id, obs.contains(&g.edge(id).target));
            }
        }
        let live = LiveEdgeGraph::new(g, bits);
        let reach = live.reach_bits(&dom);
        let mut seen = FixedBitSet::with_capacity(n);
        let mut queue = Vec::new();
        for v in g.nodes() {
            if !dom.contains(v) {
                acc[v.index()] += extension_count(&live, &reach, v, &mut seen, &mut queue) as i64;
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{evaluate_policy, run_policy, selection_probabilities};

    fn g(n: usize, t: &[(u32, u32, f64)]) -> InfluenceGraph {
        InfluenceGraph::from_triples(n, t).unwrap()
    }

    #[test]
    fn greedy_examples() {
        let t = nonadaptive_greedy(&g(3, &[(0, 1, 1.0)]), 1, Evaluator::exact()).unwrap();
        assert_eq!((t.seeds.clone(), t.values.clone()), (vec![NodeId(0)], vec![2.0]));
        let gr = g(3, &[(0, 1, 0.9)]);
        let t = nonadaptive_greedy(&gr, 2, Evaluator::exact()).unwrap();
        assert_eq!(t.seeds, vec![NodeId(0), NodeId(2)]);
        assert!((t.values[0] - 1.9).abs() < 1e-12 && (t.values[1] - 2.9).abs() < 1e-12);
        let t = nonadaptive_greedy(&gr, 3, Evaluator::exact()).unwrap();
        assert_eq!(t.final_value(), 3.0);
        assert!(nonadaptive_greedy(&gr, 4, Evaluator::exact()).is_err());
        assert!(nonadaptive_greedy(&gr, 0, Evaluator::exact()).is_err());
    }

    #[test]
    fn mc_greedy_is_reproducible_and_monotone() {
        let gr = g(5, &[(0, 1, 0.4), (1, 2, 0.7), (3, 2, 0.5), (2, 4, 0.5), (4, 0, 0.2)]);
        let a = nonadaptive_greedy(&gr, 3, Evaluator::monte_carlo(5000, 9)).unwrap();
        let b = nonadaptive_greedy(&gr, 3, Evaluator::monte_carlo(5000, 9)).unwrap();
        assert_eq!(a, b);
        assert!(a.values.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(a.half_widths.len(), 3);
        let ex = nonadaptive_greedy(&gr, 3, Evaluator::exact()).unwrap();
        for (m, (e, h)) in a.values.iter().zip(ex.values.iter().zip(&a.half_widths)) {
            assert!((m - e).abs() < 4.0 * h + 0.05, "{m} vs {e}");
        }
    }

    #[test]
    fn adaptive_greedy_examples() {
        let gr = g(3, &[(0, 1, 0.5)]);
        let pi = adaptive_greedy(&gr, 2, Evaluator::exact()).unwrap();
        assert_eq!(
            pi.decide(&PartialRealisation::new()).unwrap(),
            Decision::Pick(NodeId(0))
        );
        let hit = PartialRealisation::new().with(NodeId(0), [NodeId(1)]);
        let miss = PartialRealisation::new().with(NodeId(0), []);
        assert_eq!(pi.decide(&hit).unwrap(), Decision::Pick(NodeId(2)));
        assert_eq!(pi.decide(&miss).unwrap(), Decision::Pick(NodeId(1)));
        assert_eq!(pi.decide(&hit.with(NodeId(2), [])).unwrap(), Decision::Stop);
        assert!((evaluate_policy(&gr, &pi, Evaluator::exact()).unwrap() - 2.5).abs() < 1e-12);
        let x = selection_probabilities(&gr, &pi, 20).unwrap();
        assert_eq!(x.x[0], 1.0);
        assert!((x.x[1] + x.x[2] - 1.0).abs() < 1e-12);
        let gains = pi.gains(&miss).unwrap();
        assert_eq!(gains[0], None);
        assert!((gains[1].unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn k1_matches_nonadaptive_first_pick() {
        let gr = g(4, &[(0, 1, 0.3), (2, 1, 0.6), (2, 3, 0.6), (3, 0, 0.1)]);
        let pi = adaptive_greedy(&gr, 1, Evaluator::exact()).unwrap();
        let t = nonadaptive_greedy(&gr, 1, Evaluator::exact()).unwrap();
        assert_eq!(
            pi.decide(&PartialRealisation::new()).unwrap(),
            Decision::Pick(t.seeds[0])
        );
    }

    #[test]
    fn mc_adaptive_greedy_replays() {
        let gr = g(3, &[(0, 1, 0.5)]);
        let pi = adaptive_greedy(&gr, 2, Evaluator::monte_carlo(4000, 1)).unwrap();
        let live = LiveEdgeGraph::full(&gr);
        let a = run_policy(&pi, &live).unwrap();
        assert_eq!(a, run_policy(&pi, &live).unwrap());
        assert_eq!(a.dom(), SeedSet::from([0, 2]));
    }
}
