//! Stochastic monotone submodular maximization over independent item
//! states with finite discrete laws: exact expectations, non-adaptive
//! greedy, the adaptive optimum by backward induction, and instance-level
//! checks of the Rand_t / Hyb_t inequalities.

mod checks;
mod oracle;
mod random;

use std::collections::BTreeSet;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use checks::{check_lattice, smsm_check_section2};
pub use oracle::{
    hybrid_value, selection_probabilities, smsm_opt_adaptive, smsm_opt_adaptive_with, smsm_opt_nonadaptive,
    smsm_tree_value, SmsmBranch, SmsmTree,
};
pub use random::{random_instance, random_suite, ObjectiveKind};

use crate::error::{Error, Resource, Result};
use crate::graph::NodeId;
use crate::policy::argmax_smallest;

/// Default cap on enumerated joint states, for expectations and for the
/// backward induction.
pub const DEFAULT_JOINT_CAP: u64 = 1 << 20;

const PROB_TOL: f64 = 1e-12;

/// One state of an item and its probability.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateOutcome {
    pub value: f64,
    pub prob: f64,
}

/// Built-in monotone submodular value functions on ℝ≥0ⁿ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Objective {
    /// Σ w_i x_i.
    Modular { weights: Vec<f64> },
    /// min(cap, Σ w_i x_i); weights default to 1.
    CappedSum {
        cap: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
    /// Σ_j min(caps[j], max_i weights[i][j]·x_i), one row per item.
    Coverage { weights: Vec<Vec<f64>>, caps: Vec<f64> },
}

impl Objective {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Objective::Modular { weights } => weights.iter().zip(x).map(|(w, v)| w * v).sum(),
            Objective::CappedSum { cap, weights } => {
                let s: f64 = match weights {
                    Some(w) => w.iter().zip(x).map(|(w, v)| w * v).sum(),
                    None => x.iter().sum(),
                };
                s.min(*cap)
            }
            Objective::Coverage { weights, caps } => caps
                .iter()
                .enumerate()
                .map(|(j, &c)| {
                    let cover = weights.iter().zip(x).map(|(row, v)| row[j] * v).fold(0.0, f64::max);
                    cover.min(c)
                })
                .sum(),
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInstance(m));
        let nonneg = |v: &[f64]| v.iter().all(|&w| w.is_finite() && w >= 0.0);
        match self {
            Objective::Modular { weights } => {
                if weights.len() != n || !nonneg(weights) {
                    return bad(format!("modular needs {n} non-negative weights"));
                }
            }
            Objective::CappedSum { cap, weights } => {
                if !(cap.is_finite() && *cap >= 0.0) {
                    return bad(format!("cap {cap} must be finite and non-negative"));
                }
                if let Some(w) = weights {
                    if w.len() != n || !nonneg(w) {
                        return bad(format!("capped_sum needs {n} non-negative weights"));
                    }
                }
            }
            Objective::Coverage { weights, caps } => {
                if weights.len() != n || !nonneg(caps) {
                    return bad(format!("coverage needs {n} weight rows and non-negative caps"));
                }
                if weights.iter().any(|r| r.len() != caps.len() || !nonneg(r)) {
                    return bad(format!("coverage rows need {} non-negative weights", caps.len()));
                }
            }
        }
        Ok(())
    }
}

/// n items with independent state laws, an objective and a budget k.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmsmInstance {
    pub n: usize,
    pub k: usize,
    pub objective: Objective,
    pub items: Vec<Vec<StateOutcome>>,
}

impl SmsmInstance {
    pub fn new(k: usize, objective: Objective, items: Vec<Vec<StateOutcome>>) -> Result<Self> {
        let inst = SmsmInstance {
            n: items.len(),
            k,
            objective,
            items,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInstance(m));
        if self.items.len() != self.n {
            return bad(format!("n = {} but {} items given", self.n, self.items.len()));
        }
        if self.n > 64 {
            return bad(format!("n = {} exceeds 64 items", self.n));
        }
        if self.k == 0 || self.k > self.n {
            return bad(format!("budget k = {} must be between 1 and n = {}", self.k, self.n));
        }
        for (i, law) in self.items.iter().enumerate() {
            if law.is_empty() {
                return bad(format!("item {i} has no states"));
            }
            if law.iter().any(|s| !(s.value.is_finite() && s.value >= 0.0)) {
                return bad(format!("item {i} has a negative or non-finite state"));
            }
            if law.iter().any(|s| !(0.0..=1.0).contains(&s.prob)) {
                return bad(format!("item {i} has a probability outside [0, 1]"));
            }
            let total: f64 = law.iter().map(|s| s.prob).sum();
            if (total - 1.0).abs() > PROB_TOL {
                return bad(format!("item {i} probabilities sum to {total}"));
            }
        }
        self.objective.validate(self.n)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let inst: SmsmInstance = serde_json::from_str(s)?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("instance serializes")
    }

    pub fn with_k(&self, k: usize) -> Result<Self> {
        let inst = SmsmInstance { k, ..self.clone() };
        inst.validate()?;
        Ok(inst)
    }

    fn check_item(&self, i: usize) -> Result<()> {
        if i >= self.n {
            return Err(Error::invalid(format!("item {i} is out of range for n = {}", self.n)));
        }
        Ok(())
    }

    // Joint states of `items`, refusing more than `cap`.
    fn joint_count(&self, items: &[usize], cap: u64) -> Result<u64> {
        let mut count = 1u64;
        for &i in items {
            count = count.saturating_mul(self.items[i].len() as u64);
        }
        if count > cap {
            return Err(Error::too_large(Resource::JointStates, count, cap));
        }
        Ok(count)
    }
}

impl FromStr for SmsmInstance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SmsmInstance::from_json(s)
    }
}

/// θ(S): realised states on `support`, zero elsewhere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartialState {
    pub values: Vec<f64>,
    pub support: BTreeSet<usize>,
}

impl PartialState {
    pub fn empty(n: usize) -> Self {
        PartialState {
            values: vec![0.0; n],
            support: BTreeSet::new(),
        }
    }

    pub fn new(values: Vec<f64>, support: BTreeSet<usize>) -> Result<Self> {
        if support.iter().any(|&i| i >= values.len()) {
            return Err(Error::invalid("support item out of range"));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("partial state values must be finite and non-negative"));
        }
        if (0..values.len()).any(|i| !support.contains(&i) && values[i] != 0.0) {
            return Err(Error::invalid("partial state is non-zero outside its support"));
        }
        Ok(PartialState { values, support })
    }

    /// This state with item `i` observed at `value`.
    pub fn with(&self, i: usize, value: f64) -> Result<Self> {
        if self.support.contains(&i) {
            return Err(Error::ItemAlreadySelected(i));
        }
        let mut next = self.clone();
        next.values[i] = value;
        next.support.insert(i);
        Ok(next)
    }
}

// Calls `f(prob, x)` for every joint state of `items` with positive
// probability, where x is `base` overwritten on `items`.
fn for_each_joint(inst: &SmsmInstance, items: &[usize], base: &[f64], mut f: impl FnMut(f64, &[f64])) {
    let laws: Vec<&[StateOutcome]> = items.iter().map(|&i| inst.items[i].as_slice()).collect();
    for_each_law(&laws, items, base, &mut f);
}

fn for_each_law(laws: &[&[StateOutcome]], items: &[usize], base: &[f64], f: &mut impl FnMut(f64, &[f64])) {
    fn rec(
        d: usize,
        p: f64,
        laws: &[&[StateOutcome]],
        items: &[usize],
        x: &mut [f64],
        f: &mut impl FnMut(f64, &[f64]),
    ) {
        if d == items.len() {
            f(p, x);
            return;
        }
        for s in laws[d] {
            if s.prob > 0.0 {
                x[items[d]] = s.value;
                rec(d + 1, p * s.prob, laws, items, x, f);
            }
        }
    }
    let mut x = base.to_vec();
    rec(0, 1.0, laws, items, &mut x, f);
}

fn distinct_items(inst: &SmsmInstance, set: &[usize]) -> Result<()> {
    let mut seen = 0u64;
    for &i in set {
        inst.check_item(i)?;
        if seen >> i & 1 == 1 {
            return Err(Error::invalid(format!("item {i} listed twice")));
        }
        seen |= 1 << i;
    }
    Ok(())
}

/// E_θ[f(θ(S))] by enumerating the joint states of S.
pub fn smsm_expected_value(inst: &SmsmInstance, set: &[usize]) -> Result<f64> {
    smsm_expected_value_with(inst, set, DEFAULT_JOINT_CAP)
}

pub fn smsm_expected_value_with(inst: &SmsmInstance, set: &[usize], cap: u64) -> Result<f64> {
    distinct_items(inst, set)?;
    inst.joint_count(set, cap)?;
    let mut total = 0.0;
    for_each_joint(inst, set, &vec![0.0; inst.n], |p, x| {
        total += p * inst.objective.eval(x)
    });
    Ok(total)
}

/// Δ(i | ξ) = E_{e^i}[f(ξ ∨ e^i) − f(ξ)].
pub fn smsm_marginal(inst: &SmsmInstance, xi: &PartialState, i: usize) -> Result<f64> {
    inst.check_item(i)?;
    if xi.values.len() != inst.n {
        return Err(Error::invalid(format!(
            "partial state has {} entries, n = {}",
            xi.values.len(),
            inst.n
        )));
    }
    if xi.support.contains(&i) {
        return Err(Error::ItemAlreadySelected(i));
    }
    let base = inst.objective.eval(&xi.values);
    let mut total = 0.0;
    for_each_joint(inst, &[i], &xi.values, |p, x| {
        total += p * (inst.objective.eval(x) - base)
    });
    Ok(total)
}

/// Pick order of non-adaptive greedy and E[f(θ(S_t))] after each pick.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmsmTrace {
    pub items: Vec<usize>,
    pub values: Vec<f64>,
}

impl SmsmTrace {
    pub fn final_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    /// S_0, …, S_k.
    pub fn prefixes(&self) -> impl Iterator<Item = &[usize]> + '_ {
        (0..=self.items.len()).map(|t| &self.items[..t])
    }
}

/// k times, add the item maximizing E[f(θ(S ∪ {i}))]; ties go to the
/// smallest item id.
pub fn smsm_greedy(inst: &SmsmInstance) -> Result<SmsmTrace> {
    inst.validate()?;
    let mut items: Vec<usize> = Vec::with_capacity(inst.k);
    let mut values = Vec::with_capacity(inst.k);
    for _ in 0..inst.k {
        let mut vals = Vec::new();
        for i in (0..inst.n).filter(|i| !items.contains(i)) {
            let mut s = items.clone();
            s.push(i);
            vals.push((NodeId(i as u32), smsm_expected_value(inst, &s)?));
        }
        let best = argmax_smallest(&vals).expect("k <= n");
        items.push(best.index());
        values.push(vals.iter().find(|v| v.0 == best).expect("picked from vals").1);
    }
    Ok(SmsmTrace { items, values })
}
