use serde::{Deserialize, Serialize};

use crate::diffusion::engine::{check_nodes, Enumeration};
use crate::diffusion::DEFAULT_ENUMERATION_CAP;
use crate::error::{Error, Result};
use crate::graph::{InfluenceGraph, NodeId};
use crate::policy::{AdaptivePolicy, Decision, PartialRealisation};

/// A materialized adaptive policy: pick a node, then branch on what it
/// activated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub k: usize,
    pub root: TreeNode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub pick: u32,
    pub branches: Vec<Branch>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    /// Activated out-neighbours of the pick, ascending, pick excluded.
    pub observed: Vec<u32>,
    pub child: Option<Box<TreeNode>>,
}

/// Outcome masks of `v` in the order trees list them: bit j is the j-th
/// out-edge of `v` by target, and the list is in increasing mask order.
pub(crate) fn outcome_targets(g: &InfluenceGraph, v: NodeId, mask: u32) -> Vec<u32> {
    g.out_edge_ids(v)
        .iter()
        .enumerate()
        .filter(|(j, _)| mask >> j & 1 == 1)
        .map(|(_, &id)| g.edge(id).target.0)
        .collect()
}

impl DecisionTree {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tree serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::MalformedTree(e.to_string()))
    }

    /// Checks the tree against `g`: picks are nodes, never repeated along
    /// a path, every pick lists each outcome of its out-edges exactly once,
    /// and every path has exactly `k` picks.
    pub fn validate(&self, g: &InfluenceGraph) -> Result<()> {
        if self.k == 0 || self.k > g.node_count() {
            return Err(Error::MalformedTree(format!(
                "k = {} is not in 1..={}",
                self.k,
                g.node_count()
            )));
        }
        let mut path = Vec::with_capacity(self.k);
        validate_node(g, &self.root, self.k, &mut path)
    }

    /// The branch index for `observed` at `node`, if any.
    fn branch_for<'a>(node: &'a TreeNode, observed: &[u32]) -> Option<&'a Branch> {
        node.branches.iter().find(|b| b.observed == observed)
    }
}

fn validate_node(g: &InfluenceGraph, node: &TreeNode, k: usize, path: &mut Vec<u32>) -> Result<()> {
    let bad = |m: String| Err(Error::MalformedTree(m));
    let v = node.pick;
    if v as usize >= g.node_count() {
        return bad(format!("pick {v} is not a node"));
    }
    if path.contains(&v) {
        return bad(format!("pick {v} repeats along a path"));
    }
    let depth = path.len() + 1;
    let d = g.out_degree(NodeId(v));
    if d >= 32 || node.branches.len() != 1usize << d {
        return bad(format!("pick {v} has {} branches, expected 2^{d}", node.branches.len()));
    }
    let targets: Vec<u32> = g.out_neighbors(NodeId(v)).map(|t| t.0).collect();
    let mut seen = vec![false; node.branches.len()];
    path.push(v);
    for b in &node.branches {
        let mut mask = 0usize;
        for (pos, &w) in b.observed.iter().enumerate() {
            if pos > 0 && b.observed[pos - 1] >= w {
                return bad(format!("observed list of pick {v} is not strictly ascending"));
            }
            match targets.iter().position(|&t| t == w) {
                Some(j) => mask |= 1 << j,
                None => return bad(format!("{w} is not an out-neighbour of {v}")),
            }
        }
        if std::mem::replace(&mut seen[mask], true) {
            return bad(format!("pick {v} lists an outcome twice"));
        }
        match (&b.child, depth == k) {
            (None, true) => {}
            (Some(c), false) => validate_node(g, c, k, path)?,
            (None, false) => return bad(format!("path ends after {depth} of {k} picks")),
            (Some(_), true) => return bad(format!("path continues past {k} picks")),
        }
    }
    path.pop();
    Ok(())
}

/// Exact σ(π) of a tree-encoded policy: branch probabilities come from the
/// pick's edge probabilities and each leaf adds its conditional spread.
pub fn evaluate_decision_tree(g: &InfluenceGraph, tree: &DecisionTree) -> Result<f64> {
    tree.validate(g)?;
    check_nodes(g)?;
    let mut law: Vec<f64> = g.edges().iter().map(|e| e.prob).collect();
    eval_node(g, &tree.root, 0, 1.0, &mut law)
}

fn eval_node(g: &InfluenceGraph, node: &TreeNode, dom: u64, prob: f64, law: &mut [f64]) -> Result<f64> {
    let v = NodeId(node.pick);
    let ids = g.out_edge_ids(v);
    let dom = dom | 1 << v.0;
    let saved: Vec<f64> = ids.iter().map(|&id| law[id]).collect();
    let mut total = 0.0;
    for b in &node.branches {
        let mut p = prob;
        for &id in ids {
            let e = g.edge(id);
            let live = b.observed.binary_search(&e.target.0).is_ok();
            p *= if live { e.prob } else { 1.0 - e.prob };
            law[id] = if live { 1.0 } else { 0.0 };
        }
        if p == 0.0 {
            continue;
        }
        total += match &b.child {
            Some(c) => eval_node(g, c, dom, p, law)?,
            None => {
                let en = Enumeration::from_law(g, |id| law[id])?;
                en.check_cap(DEFAULT_ENUMERATION_CAP)?;
                p * en.expected_reach(dom)
            }
        };
    }
    for (&id, &q) in ids.iter().zip(&saved) {
        law[id] = q;
    }
    Ok(total)
}

/// A tree paired with its graph, usable wherever a policy is expected.
pub struct TreePolicy<'a> {
    pub tree: &'a DecisionTree,
    pub graph: &'a InfluenceGraph,
}

impl AdaptivePolicy for TreePolicy<'_> {
    fn budget(&self) -> usize {
        self.tree.k
    }

    fn decide(&self, psi: &PartialRealisation) -> Result<Decision> {
        let mut node = &self.tree.root;
        let mut depth = 0;
        loop {
            let v = NodeId(node.pick);
            let Some(obs) = psi.get(v) else {
                if depth != psi.len() {
                    return Err(Error::PolicyViolation(
                        "realisation is not on a path of the tree".into(),
                    ));
                }
                return Ok(Decision::Pick(v));
            };
            let observed: Vec<u32> = obs.iter().filter(|w| **w != v).map(|w| w.0).collect();
            let branch = DecisionTree::branch_for(node, &observed)
                .ok_or_else(|| Error::PolicyViolation(format!("tree has no branch for what {v} activated")))?;
            depth += 1;
            match &branch.child {
                Some(c) => node = c,
                None if depth == psi.len() => return Ok(Decision::Stop),
                None => {
                    return Err(Error::PolicyViolation(
                        "realisation is not on a path of the tree".into(),
                    ))
                }
            }
        }
    }
}

/// Tree that seeds `order` regardless of observations.
pub fn constant_tree(g: &InfluenceGraph, order: &[NodeId]) -> DecisionTree {
    fn build(g: &InfluenceGraph, order: &[NodeId]) -> TreeNode {
        let v = order[0];
        let d = g.out_degree(v) as u32;
        TreeNode {
            pick: v.0,
            branches: (0..1u32 << d)
                .map(|m| Branch {
                    observed: outcome_targets(g, v, m),
                    child: (order.len() > 1).then(|| Box::new(build(g, &order[1..]))),
                })
                .collect(),
        }
    }
    DecisionTree {
        k: order.len(),
        root: build(g, order),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::exact_spread;
    use crate::diffusion::Evaluator;
    use crate::graph::SeedSet;
    use crate::policy::{evaluate_policy, ConstantPolicy};

    #[test]
    fn single_pick_tree() {
        let g = InfluenceGraph::from_triples(2, &[(0, 1, 1.0)]).unwrap();
        let t = constant_tree(&g, &[NodeId(0)]);
        assert_eq!(t.root.branches.len(), 2);
        assert_eq!(evaluate_decision_tree(&g, &t).unwrap(), 2.0);
    }

    #[test]
    fn constant_tree_equals_spread() {
        let g = InfluenceGraph::from_triples(4, &[(0, 1, 0.3), (1, 2, 0.7), (2, 3, 0.5), (3, 0, 0.2), (0, 2, 1.0)])
            .unwrap();
        let order = [NodeId(2), NodeId(0)];
        let t = constant_tree(&g, &order);
        let v = evaluate_decision_tree(&g, &t).unwrap();
        assert!((v - exact_spread(&g, &SeedSet::from([0, 2])).unwrap()).abs() < 1e-12);
        let pol = TreePolicy { tree: &t, graph: &g };
        let e = evaluate_policy(&g, &pol, Evaluator::exact()).unwrap();
        assert!((e - evaluate_policy(&g, &ConstantPolicy::new(order), Evaluator::exact()).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip_and_rejections() {
        let g = InfluenceGraph::from_triples(3, &[(0, 1, 0.5)]).unwrap();
        let t = constant_tree(&g, &[NodeId(0), NodeId(2)]);
        let back = DecisionTree::from_json(&t.to_json()).unwrap();
        assert_eq!(back, t);
        let mut short = t.clone();
        short.root.branches[0].child = None;
        assert!(matches!(
            evaluate_decision_tree(&g, &short),
            Err(Error::MalformedTree(_))
        ));
        let mut dup = t.clone();
        dup.root.branches[1].observed = vec![];
        assert!(dup.validate(&g).is_err());
        let mut rep = t.clone();
        rep.root.branches[0].child.as_mut().unwrap().pick = 0;
        assert!(rep.validate(&g).is_err());
        let mut deep = t;
        deep.k = 1;
        assert!(deep.validate(&g).is_err());
        assert!(DecisionTree::from_json("{\"k\": 1}").is_err());
        let text =
            r#"{"k":1,"root":{"pick":0,"branches":[{"observed":[],"child":null},{"observed":[1],"child":null}]}}"#;
        let t = DecisionTree::from_json(text).unwrap();
        assert!((evaluate_decision_tree(&g, &t).unwrap() - 1.5).abs() < 1e-15);
    }
}
