//! Exact greedy under arbitrary tie-break orders on one graph.
//!
//! Relabelling a graph only changes which maximiser greedy takes on a tie,
//! so greedy on a relabelled copy equals greedy on the original with ties
//! broken by the relabelled ids. Gains are computed once per decision
//! point and shared by every order.

use rustc_hash::FxHashMap;

use super::table::LiveTable;
use super::GreedyValues;
use crate::graph::NodeId;
use crate::policy::TIE_TOL;

/// Greedy values of one graph for any tie-break ranking of its nodes.
pub struct RankedGreedy {
    t: LiveTable,
    k: usize,
    steps: FxHashMap<u64, Step>,
    root: Node,
}

// A greedy decision: the maximisers of the score, each with a payload.
struct Step {
    best: Vec<(NodeId, f64)>,
}

impl Step {
    // `values` holds (node, score, payload); ties use the same rule as
    // `argmax_smallest`.
    fn new(values: &[(NodeId, f64, f64)]) -> Self {
        let top = values.iter().map(|&(_, x, _)| x).fold(f64::NEG_INFINITY, f64::max);
        assert!(top > f64::NEG_INFINITY, "k <= n");
        let tol = TIE_TOL * top.abs().max(1.0);
        Step {
            best: values
                .iter()
                .filter(|&&(_, x, _)| x >= top - tol)
                .map(|&(v, _, y)| (v, y))
                .collect(),
        }
    }

    fn pick(&self, rank: &[u32], tied: &mut bool) -> (usize, f64) {
        *tied |= self.best.len() > 1;
        let &(v, x) = self
            .best
            .iter()
            .min_by_key(|(v, _)| rank[v.index()])
            .expect("non-empty");
        (v.index(), x)
    }
}

struct Node {
    dom: u64,
    rows: Vec<u32>,
    step: Option<Step>,
    kids: Vec<Option<Vec<Node>>>,
}

impl Node {
    fn new(t: &LiveTable, dom: u64, rows: Vec<u32>) -> Self {
        Node {
            dom,
            rows,
            step: None,
            kids: (0..t.n).map(|_| None).collect(),
        }
    }
}

impl RankedGreedy {
    pub(crate) fn new(t: LiveTable, k: usize) -> Self {
        let root = Node::new(&t, 0, t.all_rows());
        RankedGreedy {
            t,
            k,
            steps: FxHashMap::default(),
            root,
        }
    }

    /// GR_N and GR_A when a tie goes to the node of smallest `rank`;
    /// `tied` reports whether this order met a tie.
    pub fn values(&mut self, rank: &[u32]) -> GreedyValues {
        assert_eq!(rank.len(), self.t.n, "one rank per node");
        let (gr_n, tied_n) = self.nonadaptive(rank);
        let mut tied_a = false;
        let gr_a = walk(&self.t, self.k, &mut self.root, 0, rank, &mut tied_a);
        GreedyValues {
            gr_n,
            gr_a,
            tied: tied_n || tied_a,
        }
    }

    fn nonadaptive(&mut self, rank: &[u32]) -> (f64, bool) {
        let t = &self.t;
        let mut chosen = 0u64;
        let mut value = 0.0;
        let mut tied = false;
        for _ in 0..self.k {
            let step = self.steps.entry(chosen).or_insert_with(|| {
                let vals: Vec<(NodeId, f64, f64)> = (0..t.n as u32)
                    .filter(|v| chosen >> v & 1 == 0)
                    .map(|v| {
                        let x = t.spread(chosen | 1 << v);
                        (NodeId(v), x, x)
                    })
                    .collect();
                Step::new(&vals)
            });
            let (v, x) = step.pick(rank, &mut tied);
            value = x;
            chosen |= 1 << v;
        }
        (value, tied)
    }
}

// Σ over leaves of P · |reach| after k picks, expanding only the branches
// this ranking visits. The last pick is summed without a split. Scores are
// conditional expected gains, as in exact adaptive greedy.
fn walk(t: &LiveTable, k: usize, node: &mut Node, depth: usize, rank: &[u32], tied: &mut bool) -> f64 {
    let step = node.step.get_or_insert_with(|| {
        let mass: f64 = node.rows.iter().map(|&i| t.prob[i as usize]).sum();
        let here = t.mass_spread(&node.rows, node.dom);
        let vals: Vec<(NodeId, f64, f64)> = (0..t.n as u32)
            .filter(|v| node.dom >> v & 1 == 0)
            .map(|v| {
                let after = t.mass_spread(&node.rows, node.dom | 1 << v);
                (NodeId(v), (after - here) / mass, after)
            })
            .collect();
        Step::new(&vals)
    });
    let (v, x) = step.pick(rank, tied);
    if depth + 1 == k {
        return x;
    }
    let dom = node.dom | 1 << v;
    let kids = node.kids[v].get_or_insert_with(|| {
        let mut buf = Vec::new();
        let mut groups = Vec::new();
        t.partition(&node.rows, v, &mut buf, &mut groups);
        groups
            .iter()
            .map(|&(_, s, e)| Node::new(t, dom, buf[s..e].to_vec()))
            .collect()
    });
    kids.iter_mut().map(|c| walk(t, k, c, depth + 1, rank, tied)).sum()
}
