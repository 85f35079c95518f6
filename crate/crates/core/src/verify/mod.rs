//! Exhaustive, instance-level verification of the lemma and theorem
//! inequalities, plus a random search for large adaptivity gaps.
//!
//! Only exact evaluators are used here. Reports carry the full graph of
//! every violation so each one reproduces from the report alone.

pub mod family;
pub mod lemmas;
pub mod report;
pub mod theorems;

pub use family::{Generator, Instance, InstanceFamily, Orbit, DEFAULT_GRID};
pub use lemmas::{
    check_adaptive_submodularity, check_hybrid_bound, check_marginal_upper, check_opt_bound, check_rand_lower,
    check_strong_adaptive_submodularity, check_two_level_upper, greedy_prefixes, random_tree, PolicyChoice,
};
pub use report::{CheckReport, Violation, CHECK_TOL};
pub use theorems::{
    check_theorem_ratios, search_gap_witness, sweep_theorems, GapSearch, GapWitness, TheoremSweep, TREE_TOL,
};

use std::f64::consts::E;

/// Guarantee of non-adaptive greedy against OPT_A: ½(1 − (1 − 1/k)^k).
pub fn nonadaptive_ratio(k: usize) -> f64 {
    0.5 * (1.0 - (1.0 - 1.0 / k as f64).powi(k as i32))
}

/// Guarantee of adaptive greedy against OPT_A: 1 − (1 − 1/(2k))^k.
pub fn adaptive_ratio(k: usize) -> f64 {
    1.0 - (1.0 - 0.5 / k as f64).powi(k as i32)
}

/// Per-k bound on the adaptivity gap: 2 / (1 − (1 − 1/k)^k).
pub fn gap_ceiling(k: usize) -> f64 {
    2.0 / (1.0 - (1.0 - 1.0 / k as f64).powi(k as i32))
}

/// Limit of [`gap_ceiling`]: 2e / (e − 1).
pub const GAP_CEILING_LIMIT: f64 = 2.0 * E / (E - 1.0);

/// Non-adaptive greedy against OPT_N: 1 − 1/e.
pub const KEMPE_RATIO: f64 = 1.0 - 1.0 / E;

/// Guarantee of the SMSM greedy against the adaptive optimum, k ≥ 2:
/// ½(1 − (1 − 2/k)^k).
pub fn smsm_ratio(k: usize) -> f64 {
    0.5 * (1.0 - (1.0 - 2.0 / k as f64).powi(k as i32))
}
