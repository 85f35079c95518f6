//! Instance-level checks of the 2-level model inequalities. Every quantity
//! comes from the exact evaluators of the library, so a violation points
//! at either the inequality or the evaluator, never at sampling noise.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde_json::json;

use super::family::{Instance, InstanceFamily};
use super::report::CheckReport;
use crate::diffusion::{
    conditional_spread, exact_spread, exact_two_level_spread, marginal_gain, sample_rng,
    strong_two_level_conditional_marginal, strong_two_level_marginal, two_level_conditional_marginal,
    two_level_marginal, Evaluator, DEFAULT_ENUMERATION_CAP,
};
use crate::error::{Error, Resource, Result};
use crate::graph::{InfluenceGraph, NodeId, SeedSet};
use crate::oracle::{opt_adaptive_with, Branch, DecisionTree, OracleLimits, TreeNode, TreePolicy};
use crate::policy::{
    adaptive_greedy, hybrid_two_level_value, observation_outcomes, rand_t_value, selection_probabilities,
    strong_hybrid_value, walk_policy, PartialRealisation, SelectionProbabilities,
};

// Instances handed to the thread pool at a time; results merge in order.
const CHUNK: usize = 256;
// Largest n for which checks enumerate all 2^n seed sets.
const MAX_SUBSET_NODES: usize = 12;
// Largest number of positive-probability partial realisations enumerated.
const MAX_REALISATIONS: usize = 1 << 14;

/// Which policy π supplies x and Ψ̂_π in the policy-based checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolicyChoice {
    /// The witness of the exact adaptive oracle.
    Optimal,
    /// A uniformly random depth-k decision tree, seeded per instance.
    RandomTree { seed: u64 },
}

/// Runs `f` on every instance, instance-parallel, merging in family order.
/// Resource-guard refusals count as skipped.
pub(crate) fn for_instances<F>(family: &InstanceFamily, name: &str, f: F) -> Result<CheckReport>
where
    F: Fn(&Instance, &mut CheckReport) -> Result<()> + Sync,
{
    family.validate()?;
    let mut total = CheckReport::new(name);
    let mut it = family.instances();
    loop {
        let chunk: Vec<Instance> = it.by_ref().take(CHUNK).collect();
        if chunk.is_empty() {
            return Ok(total);
        }
        let parts: Vec<Result<CheckReport>> = chunk
            .par_iter()
            .map(|inst| {
                let mut r = CheckReport::new(name);
                match f(inst, &mut r) {
                    Ok(()) => Ok(r),
                    Err(e) if e.is_resource_guard() => {
                        let mut s = CheckReport::new(name);
                        s.skipped = 1;
                        Ok(s)
                    }
                    Err(e) => Err(e),
                }
            })
            .collect();
        for p in parts {
            total.merge(p?);
        }
    }
}

fn check_subset_nodes(g: &InfluenceGraph) -> Result<()> {
    if g.node_count() > MAX_SUBSET_NODES {
        return Err(Error::too_large(
            Resource::Nodes,
            g.node_count() as u64,
            MAX_SUBSET_NODES as u64,
        ));
    }
    Ok(())
}

fn all_subsets(g: &InfluenceGraph) -> Result<impl Iterator<Item = SeedSet>> {
    check_subset_nodes(g)?;
    Ok((0..1u64 << g.node_count()).map(SeedSet::from_mask))
}

fn set_json(s: &SeedSet) -> serde_json::Value {
    json!(s.iter().map(|v| v.0).collect::<Vec<_>>())
}

/// σ²(S) ≤ 2σ(S) for every S.
pub fn check_two_level_upper(family: &InstanceFamily) -> Result<CheckReport> {
    for_instances(family, "two_level_upper", |inst, r| {
        let g = &inst.graph;
        for s in all_subsets(g)? {
            let lhs = exact_two_level_spread(g, &s)?;
            let rhs = 2.0 * exact_spread(g, &s)?;
            r.record(
                &inst.label,
                || g.to_edge_list(),
                || json!({ "S": set_json(&s) }),
                lhs,
                rhs,
            );
        }
        Ok(())
    })
}

/// Δ²_S(v) ≤ 2Δ_S(v) for every S and v.
pub fn check_marginal_upper(family: &InstanceFamily) -> Result<CheckReport> {
    for_instances(family, "marginal_upper", |inst, r| {
        let g = &inst.graph;
        for s in all_subsets(g)? {
            for v in g.nodes() {
                let lhs = two_level_marginal(g, &s, v)?;
                let rhs = 2.0 * marginal_gain(g, &s, v, Evaluator::exact())?;
                r.record(
                    &inst.label,
                    || g.to_edge_list(),
                    || json!({ "S": set_json(&s), "v": v.0 }),
                    lhs,
                    rhs,
                );
            }
        }
        Ok(())
    })
}

// Positive-probability partial realisations of a graph, keyed by
// (dom mask, mask of live edges out of dom).
struct Realisations {
    list: Vec<PartialRealisation>,
    keys: Vec<(u64, u64)>,
    index: FxHashMap<(u64, u64), usize>,
    out_mask: Vec<u64>,
}

impl Realisations {
    fn new(g: &InfluenceGraph) -> Result<Self> {
        check_subset_nodes(g)?;
        let n = g.node_count();
        let mut out_mask = vec![0u64; n];
        let mut outcomes = Vec::with_capacity(n);
        let mut count = 1usize;
        for v in g.nodes() {
            let ids = g.out_edge_ids(v);
            for &id in ids {
                out_mask[v.index()] |= 1 << id;
            }
            let opts: Vec<_> = observation_outcomes(g, v)
                .into_iter()
                .filter(|(_, p)| *p > 0.0)
                .map(|(obs, _)| {
                    let live = ids
                        .iter()
                        .filter(|&&id| obs.contains(&g.edge(id).target))
                        .fold(0u64, |m, &id| m | 1 << id);
                    (obs, live)
                })
                .collect();
            count = count.saturating_mul(opts.len() + 1);
            outcomes.push(opts);
        }
        if count > MAX_REALISATIONS {
            return Err(Error::too_large(
                Resource::States,
                count as u64,
                MAX_REALISATIONS as u64,
            ));
        }
        let mut list = vec![PartialRealisation::new()];
        let mut keys = vec![(0u64, 0u64)];
        for v in g.nodes() {
            let len = list.len();
            for i in 0..len {
                for (obs, live) in &outcomes[v.index()] {
                    list.push(list[i].with(v, obs.iter().copied()));
                    keys.push((keys[i].0 | 1 << v.0, keys[i].1 | live));
                }
            }
        }
        let index = keys.iter().enumerate().map(|(i, &k)| (k, i)).collect();
        Ok(Realisations {
            list,
            keys,
            index,
            out_mask,
        })
    }

    fn restrict(&self, key: (u64, u64), keep: u64) -> (u64, u64) {
        let dom = key.0 & keep;
        let mut edges = 0u64;
        let mut d = dom;
        while d != 0 {
            edges |= self.out_mask[d.trailing_zeros() as usize];
            d &= d - 1;
        }
        (dom, key.1 & edges)
    }

    fn get(&self, key: (u64, u64)) -> &PartialRealisation {
        &self.list[self.index[&key]]
    }
}

// Checks gain(ψ̂') ≤ gain(ψ̂) over all nested positive-probability pairs,
// where `gain` depends on ψ̂ only through its restriction to `free`.
fn nested_pairs(
    reals: &Realisations,
    free: u64,
    r: &mut CheckReport,
    inst: &Instance,
    params: &dyn Fn(&PartialRealisation, &PartialRealisation) -> serde_json::Value,
    mut gain: impl FnMut(&PartialRealisation) -> Result<f64>,
) -> Result<()> {
    let mut memo: FxHashMap<(u64, u64), f64> = FxHashMap::default();
    let mut value = |key: (u64, u64)| -> Result<f64> {
        let k = reals.restrict(key, free);
        if let Some(&x) = memo.get(&k) {
            return Ok(x);
        }
        let x = gain(reals.get(k))?;
        memo.insert(k, x);
        Ok(x)
    };
    for &big in &reals.keys {
        let lhs = value(big)?;
        // every sub-realisation: restrict the domain to a submask
        let mut sub = big.0;
        loop {
            let small = reals.restrict(big, sub);
            let rhs = value(small)?;
            r.record(
                &inst.label,
                || inst.graph.to_edge_list(),
                || params(reals.get(small), reals.get(big)),
                lhs,
                rhs,
            );
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & big.0;
        }
    }
    Ok(())
}

/// Δ²_S(v | ψ̂') ≤ Δ²_S(v | ψ̂) for all positive-probability ψ̂ ⊆ ψ̂', all S
/// and all v.
pub fn check_adaptive_submodularity(family: &InstanceFamily) -> Result<CheckReport> {
    for_instances(family, "adaptive_submodularity", |inst, r| {
        let g = &inst.graph;
        let reals = Realisations::new(g)?;
        let all = (1u64 << g.node_count()) - 1;
        for s in all_subsets(g)? {
            for v in g.nodes() {
                // v ∈ dom ψ̂ gives 0, so v stays in the restriction
                let free = all & !s.mask();
                let params = |a: &PartialRealisation, b: &PartialRealisation| json!({ "S": set_json(&s), "v": v.0, "psi_hat": a, "psi_hat_prime": b });
                nested_pairs(&reals, free, r, inst, &params, |ph| {
                    two_level_conditional_marginal(g, &s, v, ph)
                })?;
            }
        }
        Ok(())
    })
}

/// Δ²_ψ(v | ψ̂') ≤ Δ²_ψ(v | ψ̂) for all positive-probability ψ̂ ⊆ ψ̂', all
/// positive-probability ψ and all v.
pub fn check_strong_adaptive_submodularity(family: &InstanceFamily) -> Result<CheckReport> {
    for_instances(family, "strong_adaptive_submodularity", |inst, r| {
        let g = &inst.graph;
        let reals = Realisations::new(g)?;
        let all = (1u64 << g.node_count()) - 1;
        for (psi, key) in reals.list.iter().zip(&reals.keys) {
            for v in g.nodes() {
                let free = all & !key.0;
                let params = |a: &PartialRealisation, b: &PartialRealisation| json!({ "psi": psi, "v": v.0, "psi_hat": a, "psi_hat_prime": b });
                nested_pairs(&reals, free, r, inst, &params, |ph| {
                    strong_two_level_conditional_marginal(g, psi, v, ph)
                })?;
            }
        }
        Ok(())
    })
}

/// A depth-k tree whose every pick is uniform over the unpicked nodes.
pub fn random_tree(g: &InfluenceGraph, k: usize, seed: u64) -> Result<DecisionTree> {
    crate::policy::check_budget(g, k)?;
    fn build(g: &InfluenceGraph, k: usize, path: &mut Vec<u32>, rng: &mut impl rand::Rng) -> TreeNode {
        let free: Vec<u32> = (0..g.node_count() as u32).filter(|v| !path.contains(v)).collect();
        let pick = *free.choose(rng).expect("k <= n");
        let v = NodeId(pick);
        let d = g.out_degree(v) as u32;
        path.push(pick);
        let branches = (0..1u32 << d)
            .map(|m| Branch {
                observed: crate::oracle::outcome_targets(g, v, m),
                child: (path.len() < k).then(|| Box::new(build(g, k, path, rng))),
            })
            .collect();
        path.pop();
        TreeNode { pick, branches }
    }
    let mut rng = sample_rng(seed, 0);
    Ok(DecisionTree {
        k,
        root: build(g, k, &mut Vec::new(), &mut rng),
    })
}

fn instance_seed(seed: u64, label: &str) -> u64 {
    label.bytes().fold(seed ^ 0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x100_0000_01b3)
    })
}

// π and x for the policy-based checks, or a skip when k > n.
fn policy_for(
    inst: &Instance,
    k: usize,
    choice: PolicyChoice,
    limits: &OracleLimits,
) -> Result<Option<(DecisionTree, SelectionProbabilities)>> {
    let g = &inst.graph;
    if k > g.node_count() {
        return Ok(None);
    }
    let tree = match choice {
        PolicyChoice::Optimal => opt_adaptive_with(g, k, limits)?.witness,
        PolicyChoice::RandomTree { seed } => random_tree(g, k, instance_seed(seed, &inst.label))?,
    };
    let x = selection_probabilities(g, &TreePolicy { tree: &tree, graph: g }, DEFAULT_ENUMERATION_CAP)?;
    Ok(Some((tree, x)))
}

/// k·(E_ρ[σ(S ∪ {ρ})] − σ(S)) ≥ Σ_{v∉S} x_v Δ_S(v) for every S. Counts
/// under `equality` how often both sides agree within tolerance.
pub fn check_rand_lower(
    family: &InstanceFamily,
    k: usize,
    choice: PolicyChoice,
    limits: &OracleLimits,
) -> Result<CheckReport> {
    for_instances(family, "rand_lower", |inst, r| {
        let g = &inst.graph;
        let Some((_, x)) = policy_for(inst, k, choice, limits)? else {
            r.skipped += 1;
            return Ok(());
        };
        for s in all_subsets(g)? {
            let mut lhs = 0.0;
            for v in g.nodes().filter(|v| !s.contains(*v)) {
                lhs += x.x[v.index()] * marginal_gain(g, &s, v, Evaluator::exact())?;
            }
            let rhs = k as f64 * (rand_t_value(g, &s, &x, k)? - exact_spread(g, &s)?);
            if (lhs - rhs).abs() <= r.tolerance {
                r.count("equality", 1);
            }
            r.record(
                &inst.label,
                || g.to_edge_list(),
                || json!({ "k": k, "S": set_json(&s), "x": x.x }),
                lhs,
                rhs,
            );
        }
        Ok(())
    })
}

/// Realisations of positive probability that exact adaptive greedy
/// reaches after t = 0..k−1 picks.
pub fn greedy_prefixes(g: &InfluenceGraph, k: usize) -> Result<Vec<PartialRealisation>> {
    let pi = adaptive_greedy(g, k, Evaluator::exact())?;
    let mut out = Vec::new();
    walk_policy(g, &pi, |psi, _, _| {
        if psi.len() < k {
            out.push(psi.clone());
        }
        Ok(())
    })?;
    Ok(out)
}

/// Weak: Hyb²_S ≤ σ²(S) + Σ_{v∉S} x_v Δ²_S(v) for every S. Strong:
/// Hyb²_ψ ≤ E[σ(dom ψ) | ψ] + Σ_{v∉dom ψ} x_v Δ²_ψ(v) for every ψ reached
/// by adaptive greedy before its last pick.
pub fn check_hybrid_bound(
    family: &InstanceFamily,
    k: usize,
    strong: bool,
    choice: PolicyChoice,
    limits: &OracleLimits,
) -> Result<CheckReport> {
    let name = if strong { "hybrid_bound_strong" } else { "hybrid_bound" };
    for_instances(family, name, |inst, r| {
        let g = &inst.graph;
        let Some((tree, x)) = policy_for(inst, k, choice, limits)? else {
            r.skipped += 1;
            return Ok(());
        };
        let pi = TreePolicy { tree: &tree, graph: g };
        if strong {
            for psi in greedy_prefixes(g, k)? {
                let lhs = strong_hybrid_value(g, &psi, &pi)?;
                let mut rhs = conditional_spread(g, &psi, &SeedSet::new())?;
                for v in g.nodes().filter(|v| !psi.contains(*v)) {
                    rhs += x.x[v.index()] * strong_two_level_marginal(g, &psi, v)?;
                }
                r.record(
                    &inst.label,
                    || g.to_edge_list(),
                    || json!({ "k": k, "psi": psi }),
                    lhs,
                    rhs,
                );
            }
        } else {
            for s in all_subsets(g)? {
                let lhs = hybrid_two_level_value(g, &s, &pi)?;
                let mut rhs = exact_two_level_spread(g, &s)?;
                for v in g.nodes().filter(|v| !s.contains(*v)) {
                    rhs += x.x[v.index()] * two_level_marginal(g, &s, v)?;
                }
                r.record(
                    &inst.label,
                    || g.to_edge_list(),
                    || json!({ "k": k, "S": set_json(&s) }),
                    lhs,
                    rhs,
                );
            }
        }
        Ok(())
    })
}

/// OPT_A ≤ Hyb²_S for every S (weak), or OPT_A ≤ Hyb²_ψ for every ψ reached
/// by adaptive greedy before its last pick (strong); π is the oracle's
/// optimal policy.
pub fn check_opt_bound(family: &InstanceFamily, k: usize, strong: bool, limits: &OracleLimits) -> Result<CheckReport> {
    let name = if strong { "opt_bound_strong" } else { "opt_bound" };
    for_instances(family, name, |inst, r| {
        let g = &inst.graph;
        if k > g.node_count() {
            r.skipped += 1;
            return Ok(());
        }
        let opt = opt_adaptive_with(g, k, limits)?;
        let pi = TreePolicy {
            tree: &opt.witness,
            graph: g,
        };
        if strong {
            for psi in greedy_prefixes(g, k)? {
                let rhs = strong_hybrid_value(g, &psi, &pi)?;
                r.record(
                    &inst.label,
                    || g.to_edge_list(),
                    || json!({ "k": k, "psi": psi }),
                    opt.value,
                    rhs,
                );
            }
        } else {
            for s in all_subsets(g)? {
                let rhs = hybrid_two_level_value(g, &s, &pi)?;
                r.record(
                    &inst.label,
                    || g.to_edge_list(),
                    || json!({ "k": k, "S": set_json(&s) }),
                    opt.value,
                    rhs,
                );
            }
        }
        Ok(())
    })
}
