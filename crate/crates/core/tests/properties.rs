//! Property tests of cross-module invariants on random small instances.

use adaptive_im::diffusion::{
    derive_seed, exact_spread, exact_two_level_spread, exact_two_level_spread_joint, sample_rng, Evaluator,
    DEFAULT_ENUMERATION_CAP,
};
use adaptive_im::graph::sample_live_edge;
use adaptive_im::oracle::{
    evaluate_decision_tree, opt_adaptive, opt_adaptive_ordered, opt_nonadaptive, OracleLimits, TreePolicy,
};
use adaptive_im::policy::{
    adaptive_greedy, evaluate_policy, nonadaptive_greedy, selection_probabilities, ConstantPolicy,
};
use adaptive_im::smsm::{
    check_lattice, random_instance, smsm_expected_value, smsm_greedy, smsm_opt_adaptive, smsm_opt_nonadaptive,
    ObjectiveKind, SmsmInstance,
};
use adaptive_im::verify::DEFAULT_GRID;
use adaptive_im::{InfluenceGraph, NodeId, SeedSet};
use proptest::prelude::*;

const TOL: f64 = 1e-9;

// Graphs on 1..=4 nodes with grid probabilities; at most 8 edges so
// every exact evaluator stays cheap.
fn small_graph() -> impl Strategy<Value = InfluenceGraph> {
    (1usize..=4).prop_flat_map(|n| {
        let pairs: Vec<(u32, u32)> = (0..n as u32)
            .flat_map(|u| (0..n as u32).filter(move |&v| v != u).map(move |v| (u, v)))
            .collect();
        let m = pairs.len();
        proptest::collection::vec(proptest::option::weighted(0.5, 0..DEFAULT_GRID.len()), m).prop_map(move |pick| {
            let triples: Vec<_> = pairs
                .iter()
                .zip(pick)
                .filter_map(|(&(u, v), p)| p.map(|i| (u, v, DEFAULT_GRID[i])))
                .take(8)
                .collect();
            InfluenceGraph::from_triples(n, &triples).unwrap()
        })
    })
}

fn mask_set(g: &InfluenceGraph, mask: u64) -> SeedSet {
    SeedSet::for_graph(g, (0..g.node_count() as u32).filter(|v| mask >> v & 1 == 1).map(NodeId)).unwrap()
}

fn graph_and_set() -> impl Strategy<Value = (InfluenceGraph, SeedSet, SeedSet)> {
    small_graph().prop_flat_map(|g| {
        let n = g.node_count();
        (Just(g), 0u64..1 << n, 0u64..1 << n)
            .prop_map(|(g, a, b)| (mask_set(&g, a), mask_set(&g, a | b), g))
            .prop_map(|(s, t, g)| (g, s, t))
    })
}

fn graph_and_k() -> impl Strategy<Value = (InfluenceGraph, usize)> {
    small_graph().prop_flat_map(|g| {
        let n = g.node_count();
        (Just(g), 1..=n.min(3))
    })
}

fn smsm_instance() -> impl Strategy<Value = SmsmInstance> {
    (any::<u64>(), 0usize..3, 2usize..=3, 0usize..=2).prop_map(|(seed, kind, k, extra)| {
        let mut rng = sample_rng(seed, 0);
        random_instance(&mut rng, k + extra, k, ObjectiveKind::ALL[kind])
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn spread_is_monotone((g, s, t) in graph_and_set()) {
        prop_assert!(exact_spread(&g, &s).unwrap() <= exact_spread(&g, &t).unwrap() + TOL);
    }

    #[test]
    fn spread_is_submodular((g, s, t) in graph_and_set(), v in 0u32..4) {
        let v = NodeId(v % g.node_count() as u32);
        let gain = |x: &SeedSet| exact_spread(&g, &x.with(v)).unwrap() - exact_spread(&g, x).unwrap();
        prop_assert!(gain(&s) + TOL >= gain(&t));
    }

    #[test]
    fn two_level_forms_agree_and_at_most_double((g, s, _) in graph_and_set()) {
        let boosted = exact_two_level_spread(&g, &s).unwrap();
        let joint = exact_two_level_spread_joint(&g, &s, DEFAULT_ENUMERATION_CAP).unwrap();
        prop_assert!((boosted - joint).abs() <= 1e-12);
        prop_assert!(boosted <= 2.0 * exact_spread(&g, &s).unwrap() + TOL);
    }

    #[test]
    fn sampling_is_reproducible(g in small_graph(), seed in any::<u64>()) {
        let a = sample_live_edge(&g, &mut sample_rng(seed, 3));
        let b = sample_live_edge(&g, &mut sample_rng(seed, 3));
        prop_assert_eq!(a.present(), b.present());
    }

    #[test]
    fn greedy_gains_do_not_increase((g, k) in graph_and_k()) {
        let t = nonadaptive_greedy(&g, k, Evaluator::exact()).unwrap();
        let mut prev = f64::INFINITY;
        let mut last = 0.0;
        for &v in &t.values {
            prop_assert!(v - last <= prev + TOL);
            prev = v - last;
            last = v;
        }
    }

    #[test]
    fn greedy_beats_kempe_bound((g, k) in graph_and_k()) {
        let gr = nonadaptive_greedy(&g, k, Evaluator::exact()).unwrap().final_value();
        let optn = opt_nonadaptive(&g, k).unwrap().value;
        prop_assert!(gr >= (1.0 - (-1.0f64).exp()) * optn - TOL);
    }

    #[test]
    fn mc_greedy_is_deterministic((g, k) in graph_and_k(), seed in any::<u64>()) {
        let a = nonadaptive_greedy(&g, k, Evaluator::monte_carlo(200, seed)).unwrap();
        let b = nonadaptive_greedy(&g, k, Evaluator::monte_carlo(200, seed)).unwrap();
        prop_assert_eq!(a.seeds, b.seeds);
    }

    #[test]
    fn constant_policy_matches_spread((g, s, _) in graph_and_set()) {
        let pi = ConstantPolicy::new(s.iter());
        prop_assert_eq!(evaluate_policy(&g, &pi, Evaluator::exact()).unwrap(), exact_spread(&g, &s).unwrap());
    }

    #[test]
    fn selection_probabilities_sum_to_k((g, k) in graph_and_k()) {
        let pi = adaptive_greedy(&g, k, Evaluator::exact()).unwrap();
        let x = selection_probabilities(&g, &pi, DEFAULT_ENUMERATION_CAP).unwrap();
        prop_assert!((x.sum() - k as f64).abs() <= TOL);
    }

    #[test]
    fn oracle_dominance_and_witness((g, k) in graph_and_k()) {
        let a = opt_adaptive(&g, k).unwrap();
        let n = opt_nonadaptive(&g, k).unwrap();
        prop_assert!(a.value >= n.value - TOL);
        prop_assert!((evaluate_decision_tree(&g, &a.witness).unwrap() - a.value).abs() <= 1e-12);
        let pi = TreePolicy { tree: &a.witness, graph: &g };
        prop_assert!((evaluate_policy(&g, &pi, Evaluator::exact()).unwrap() - a.value).abs() <= 1e-12);
        let ordered = opt_adaptive_ordered(&g, k, &OracleLimits::ADAPTIVE).unwrap();
        prop_assert!((ordered - a.value).abs() <= 1e-12);
        let n_spread = exact_spread(&g, &n.witness).unwrap();
        prop_assert!((n_spread - n.value).abs() <= 1e-12);
    }

    #[test]
    fn oracle_monotone_in_k((g, k) in graph_and_k()) {
        if k == g.node_count() {
            return Ok(());
        }
        prop_assert!(opt_adaptive(&g, k + 1).unwrap().value >= opt_adaptive(&g, k).unwrap().value - TOL);
        prop_assert!(opt_nonadaptive(&g, k + 1).unwrap().value >= opt_nonadaptive(&g, k).unwrap().value - TOL);
    }

    #[test]
    fn witness_json_round_trips((g, k) in graph_and_k()) {
        let a = opt_adaptive(&g, k).unwrap();
        let back = adaptive_im::oracle::DecisionTree::from_json(&a.witness.to_json()).unwrap();
        prop_assert_eq!(&back, &a.witness);
        let g2 = InfluenceGraph::parse(&g.to_edge_list()).unwrap();
        prop_assert!((evaluate_decision_tree(&g2, &back).unwrap() - a.value).abs() <= 1e-12);
    }

    #[test]
    fn smsm_adaptive_dominates_nonadaptive(inst in smsm_instance()) {
        let a = smsm_opt_adaptive(&inst).unwrap().value;
        let n = smsm_opt_nonadaptive(&inst).unwrap();
        prop_assert!((smsm_expected_value(&inst, &n.witness).unwrap() - n.value).abs() <= TOL);
        prop_assert!(a >= n.value - TOL);
        prop_assert!(n.value >= smsm_greedy(&inst).unwrap().final_value() - TOL);
    }

    #[test]
    fn smsm_greedy_trace_shape(inst in smsm_instance()) {
        let t = smsm_greedy(&inst).unwrap();
        prop_assert_eq!(t.items.len(), inst.k);
        prop_assert!(t.values.windows(2).all(|w| w[1] >= w[0] - TOL));
        for (i, set) in t.prefixes().enumerate().skip(1) {
            prop_assert!((smsm_expected_value(&inst, set).unwrap() - t.values[i - 1]).abs() <= TOL);
        }
    }

    #[test]
    fn smsm_objectives_are_lattice_submodular(inst in smsm_instance()) {
        let r = check_lattice(&inst).unwrap();
        prop_assert!(r.passed(), "{:?}", r.violations.first());
    }

    #[test]
    fn smsm_json_round_trips(inst in smsm_instance()) {
        prop_assert_eq!(SmsmInstance::from_json(&inst.to_json()).unwrap(), inst);
    }
}

#[test]
fn derived_seeds_differ_by_tag() {
    assert_ne!(derive_seed(7, 0), derive_seed(7, 1));
    assert_eq!(derive_seed(7, 1), derive_seed(7, 1));
}
