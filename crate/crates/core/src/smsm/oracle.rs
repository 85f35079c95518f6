//! Exact adaptive optimum by backward induction over (selected set,
//! observed states), and evaluation of the hybrid policy.

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use super::{distinct_items, for_each_law, smsm_expected_value, SmsmInstance, StateOutcome, DEFAULT_JOINT_CAP};
use crate::error::{Error, Resource, Result};
use crate::graph::NodeId;
use crate::oracle::OracleResult;
use crate::policy::argmax_smallest;

/// A depth-k adaptive policy: pick an item, then branch on its state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmsmTree {
    pub pick: usize,
    pub branches: Vec<SmsmBranch>,
}

/// One positive-probability state of the picked item.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmsmBranch {
    pub value: f64,
    pub prob: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub child: Option<Box<SmsmTree>>,
}

/// Interior states of the induction: Σ_{t<k} Σ_{|S|=t} Π_{i∈S} |law_i|.
fn state_count(inst: &SmsmInstance) -> u64 {
    // elementary symmetric polynomials of the law sizes, saturating
    let mut e = vec![0u64; inst.k];
    e[0] = 1;
    for law in &inst.items {
        let m = law.iter().filter(|s| s.prob > 0.0).count() as u64;
        for t in (1..inst.k).rev() {
            e[t] = e[t].saturating_add(e[t - 1].saturating_mul(m));
        }
    }
    e.iter().fold(0u64, |a, &b| a.saturating_add(b))
}

struct Dp<'a> {
    inst: &'a SmsmInstance,
    laws: Vec<Vec<StateOutcome>>,
    memo: FxHashMap<(u64, Vec<u16>), (f64, usize)>,
}

impl Dp<'_> {
    // (value, best pick) given the states observed on `mask`.
    fn solve(&mut self, mask: u64, depth: usize, obs: &mut Vec<u16>, x: &mut [f64]) -> (f64, usize) {
        if depth == self.inst.k {
            return (self.inst.objective.eval(x), usize::MAX);
        }
        let mut canon = obs.clone();
        canon.sort_unstable();
        let key = (mask, canon);
        if let Some(&hit) = self.memo.get(&key) {
            return hit;
        }
        let mut vals = Vec::new();
        for i in (0..self.inst.n).filter(|i| mask >> i & 1 == 0) {
            let mut total = 0.0;
            for s in 0..self.laws[i].len() {
                let StateOutcome { value, prob } = self.laws[i][s];
                x[i] = value;
                obs.push((i * 256 + s) as u16);
                total += prob * self.solve(mask | 1 << i, depth + 1, obs, x).0;
                obs.pop();
            }
            x[i] = 0.0;
            vals.push((NodeId(i as u32), total));
        }
        let best = argmax_smallest(&vals).expect("k <= n");
        let out = (vals.iter().find(|v| v.0 == best).expect("picked").1, best.index());
        self.memo.insert(key, out);
        out
    }

    fn tree(&mut self, mask: u64, depth: usize, obs: &mut Vec<u16>, x: &mut [f64]) -> SmsmTree {
        let pick = self.solve(mask, depth, obs, x).1;
        let mut branches = Vec::new();
        for s in 0..self.laws[pick].len() {
            let StateOutcome { value, prob } = self.laws[pick][s];
            x[pick] = value;
            obs.push((pick * 256 + s) as u16);
            let child = (depth + 1 < self.inst.k).then(|| Box::new(self.tree(mask | 1 << pick, depth + 1, obs, x)));
            obs.pop();
            branches.push(SmsmBranch { value, prob, child });
        }
        x[pick] = 0.0;
        SmsmTree { pick, branches }
    }
}

/// OPT_A(k) with the default cap of 2·10⁶ induction states.
pub fn smsm_opt_adaptive(inst: &SmsmInstance) -> Result<OracleResult<SmsmTree>> {
    smsm_opt_adaptive_with(inst, 2_000_000)
}

/// Backward induction: f(ξ) at depth k, and at depth t the best item's
/// expected child value. Ties go to the smallest item id.
pub fn smsm_opt_adaptive_with(inst: &SmsmInstance, max_states: u64) -> Result<OracleResult<SmsmTree>> {
    inst.validate()?;
    if inst.items.iter().any(|l| l.len() > 256) {
        return Err(Error::too_large(Resource::JointStates, 256, 256));
    }
    let states = state_count(inst);
    if states > max_states {
        return Err(Error::too_large(Resource::JointStates, states, max_states));
    }
    let laws = inst
        .items
        .iter()
        .map(|l| l.iter().copied().filter(|s| s.prob > 0.0).collect())
        .collect();
    let mut dp = Dp {
        inst,
        laws,
        memo: FxHashMap::default(),
    };
    let mut x = vec![0.0; inst.n];
    let value = dp.solve(0, 0, &mut Vec::new(), &mut x).0;
    let witness = dp.tree(0, 0, &mut Vec::new(), &mut x);
    Ok(OracleResult { value, witness })
}

/// Best size-k set for E[f(θ(S))], lexicographically smallest on ties.
pub fn smsm_opt_nonadaptive(inst: &SmsmInstance) -> Result<OracleResult<Vec<usize>>> {
    inst.validate()?;
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut set = Vec::with_capacity(inst.k);
    fn rec(inst: &SmsmInstance, from: usize, set: &mut Vec<usize>, best: &mut Option<(f64, Vec<usize>)>) -> Result<()> {
        if set.len() == inst.k {
            let v = smsm_expected_value(inst, set)?;
            let tol = 1e-12 * v.abs().max(1.0);
            if best.as_ref().is_none_or(|b| v > b.0 + tol) {
                *best = Some((v, set.clone()));
            }
            return Ok(());
        }
        for i in from..inst.n {
            set.push(i);
            rec(inst, i + 1, set, best)?;
            set.pop();
        }
        Ok(())
    }
    rec(inst, 0, &mut set, &mut best)?;
    let (value, witness) = best.expect("k <= n");
    Ok(OracleResult { value, witness })
}

// Calls `f(prob, picked mask, x)` per leaf, x holding the observed states.
fn for_each_leaf(n: usize, tree: &SmsmTree, mut f: impl FnMut(f64, u64, &[f64])) {
    fn rec(t: &SmsmTree, p: f64, mask: u64, x: &mut [f64], f: &mut impl FnMut(f64, u64, &[f64])) {
        for b in &t.branches {
            x[t.pick] = b.value;
            match &b.child {
                Some(c) => rec(c, p * b.prob, mask | 1 << t.pick, x, f),
                None => f(p * b.prob, mask | 1 << t.pick, x),
            }
        }
        x[t.pick] = 0.0;
    }
    let mut x = vec![0.0; n];
    rec(tree, 1.0, 0, &mut x, &mut f);
}

fn check_tree(inst: &SmsmInstance, tree: &SmsmTree) -> Result<()> {
    fn rec(inst: &SmsmInstance, t: &SmsmTree, depth: usize, mask: u64) -> Result<()> {
        let bad = |m: String| Err(Error::MalformedTree(m));
        if t.pick >= inst.n || mask >> t.pick & 1 == 1 {
            return bad(format!("pick {} is out of range or repeated", t.pick));
        }
        let total: f64 = t.branches.iter().map(|b| b.prob).sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("branches of item {} carry mass {total}", t.pick));
        }
        for b in &t.branches {
            match (&b.child, depth + 1 < inst.k) {
                (Some(c), true) => rec(inst, c, depth + 1, mask | 1 << t.pick)?,
                (None, false) => {}
                _ => return bad(format!("tree depth differs from k = {}", inst.k)),
            }
        }
        Ok(())
    }
    rec(inst, tree, 0, 0)
}

/// E[f(θ(U_{θ,k}(π)))] of a policy tree.
pub fn smsm_tree_value(inst: &SmsmInstance, tree: &SmsmTree) -> Result<f64> {
    check_tree(inst, tree)?;
    let mut total = 0.0;
    for_each_leaf(inst.n, tree, |p, _, x| total += p * inst.objective.eval(x));
    Ok(total)
}

/// x_i = P[π selects item i].
pub fn selection_probabilities(inst: &SmsmInstance, tree: &SmsmTree) -> Result<Vec<f64>> {
    check_tree(inst, tree)?;
    let mut x = vec![0.0; inst.n];
    for_each_leaf(inst.n, tree, |p, mask, _| {
        for (i, xi) in x.iter_mut().enumerate() {
            if mask >> i & 1 == 1 {
                *xi += p;
            }
        }
    });
    Ok(x)
}

// Law of max(a, b) for independent a ~ `a`, b ~ `b`.
fn max_law(a: &[StateOutcome], b: &[StateOutcome]) -> Vec<StateOutcome> {
    a.iter()
        .flat_map(|s| {
            b.iter().map(move |t| StateOutcome {
                value: s.value.max(t.value),
                prob: s.prob * t.prob,
            })
        })
        .filter(|s| s.prob > 0.0)
        .collect()
}

/// E_{θ,θ̂}[f(θ(S) ∨ θ̂(U ∪ S))], U the items π picks when observing θ̂.
/// With `tree = None`, U is empty: E[f(θ(S) ∨ θ̂(S))].
pub fn hybrid_value(inst: &SmsmInstance, set: &[usize], tree: Option<&SmsmTree>) -> Result<f64> {
    distinct_items(inst, set)?;
    if let Some(t) = tree {
        check_tree(inst, t)?;
    }
    let doubled = (set.iter().map(|&i| (inst.items[i].len() as u64).pow(2))).fold(1u64, |a, b| a.saturating_mul(b));
    if doubled > DEFAULT_JOINT_CAP {
        return Err(Error::too_large(Resource::JointStates, doubled, DEFAULT_JOINT_CAP));
    }
    let mut total = 0.0;
    let mut leaf = |q: f64, u: u64, xhat: &[f64]| {
        let laws: Vec<Vec<StateOutcome>> = set
            .iter()
            .map(|&i| {
                if u >> i & 1 == 1 {
                    let fixed = [StateOutcome {
                        value: xhat[i],
                        prob: 1.0,
                    }];
                    max_law(&inst.items[i], &fixed)
                } else {
                    max_law(&inst.items[i], &inst.items[i])
                }
            })
            .collect();
        let refs: Vec<&[StateOutcome]> = laws.iter().map(Vec::as_slice).collect();
        for_each_law(&refs, set, xhat, &mut |p, x| total += q * p * inst.objective.eval(x));
    };
    match tree {
        Some(t) => for_each_leaf(inst.n, t, &mut leaf),
        None => leaf(1.0, 0, &vec![0.0; inst.n]),
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::super::tests::{capped, coin};
    use super::super::{smsm_greedy, Objective};
    use super::*;

    #[test]
    fn capped_sum_example() {
        let inst = capped(3, 2.0, 2);
        let opt = smsm_opt_adaptive(&inst).unwrap();
        // pick 0; on 2 any second item adds nothing, on 0 the next coin adds 1
        assert!((opt.value - 1.5).abs() < 1e-15);
        assert!((smsm_tree_value(&inst, &opt.witness).unwrap() - opt.value).abs() < 1e-15);
        let gr = smsm_greedy(&inst).unwrap().final_value();
        assert!(gr / opt.value >= crate::verify::smsm_ratio(2) - 1e-9);
        let x = selection_probabilities(&inst, &opt.witness).unwrap();
        assert!((x.iter().sum::<f64>() - 2.0).abs() < 1e-15);
        assert_eq!(x, vec![1.0, 1.0, 0.0]);
    }

    #[test]
    fn cap_example() {
        // cap 1: once item 0 shows 1 the cap is reached, after 0 the sure
        // item 2 is best
        let items = vec![coin(1.0), coin(1.0), vec![StateOutcome { value: 0.6, prob: 1.0 }]];
        let inst = SmsmInstance::new(
            2,
            Objective::CappedSum {
                cap: 1.0,
                weights: None,
            },
            items,
        )
        .unwrap();
        let a = smsm_opt_adaptive(&inst).unwrap().value;
        let n = smsm_opt_nonadaptive(&inst).unwrap().value;
        // both 0.5·1 + 0.5·0.6; the set {0, 1} only reaches 0.75
        assert!((a - 0.8).abs() < 1e-15);
        assert!((n - 0.8).abs() < 1e-15);
    }

    #[test]
    fn modular_adaptive_equals_nonadaptive() {
        let items = vec![coin(1.0), coin(3.0), vec![StateOutcome { value: 1.2, prob: 1.0 }]];
        let inst = SmsmInstance::new(
            2,
            Objective::Modular {
                weights: vec![1.0, 1.0, 2.0],
            },
            items,
        )
        .unwrap();
        let a = smsm_opt_adaptive(&inst).unwrap().value;
        let n = smsm_opt_nonadaptive(&inst);
        assert!((a - n.unwrap().value).abs() < 1e-12);
        let full = inst.with_k(3).unwrap();
        let all = smsm_expected_value(&full, &[0, 1, 2]).unwrap();
        assert!((smsm_opt_adaptive(&full).unwrap().value - all).abs() < 1e-12);
    }

    #[test]
    fn hybrid_value_bounds() {
        let inst = capped(3, 2.0, 2);
        let opt = smsm_opt_adaptive(&inst).unwrap();
        // U = {0, 1} always: E[f(θ̂_0, θ̂_1, 0)] = 1.5 when S is empty
        assert!((hybrid_value(&inst, &[], Some(&opt.witness)).unwrap() - 1.5).abs() < 1e-15);
        // two draws on item 0: max is 2 w.p. 3/4
        assert!((hybrid_value(&inst, &[0], None).unwrap() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn state_guard() {
        let inst = capped(5, 2.0, 3);
        // 1 + 5·2 + 10·4 interior states
        assert_eq!(state_count(&inst), 51);
        assert!(matches!(
            smsm_opt_adaptive_with(&inst, 50),
            Err(Error::EnumerationTooLarge {
                resource: Resource::JointStates,
                ..
            })
        ));
    }
}
