use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::sample_rng;
use crate::error::{Error, Result};
use crate::graph::{Edge, InfluenceGraph, NodeId};

/// Probability grid of the exhaustive sweeps.
pub const DEFAULT_GRID: [f64; 4] = [0.0, 0.3, 0.7, 1.0];

/// How a family produces graphs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    /// Each ordered pair is an edge with probability `edge_prob`; its weight
    /// is drawn uniformly from `weights`.
    ErdosRenyi {
        n: usize,
        edge_prob: f64,
        weights: Vec<f64>,
    },
    /// Node 0 points at `leaves` leaves.
    Star { leaves: usize, p: f64 },
    /// 0 → 1 → … → n−1.
    Chain { n: usize, p: f64 },
    /// Every left node points at every right node.
    Bipartite { a: usize, b: usize, p: f64 },
    /// Every graph on 1..=n_max nodes whose ordered pairs are each absent or
    /// carry a grid probability. With `zero_as_absent`, a grid value of 0 is
    /// folded into "absent", which leaves every spread unchanged.
    ExhaustiveSmall {
        n_max: usize,
        grid: Vec<f64>,
        zero_as_absent: bool,
    },
}

/// A generator plus the master seed of its random choices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceFamily {
    pub generator: Generator,
    pub seed: u64,
    /// Number of draws of a random generator; ignored by the others.
    pub trials: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub label: String,
    pub graph: InfluenceGraph,
}

impl InstanceFamily {
    pub fn new(generator: Generator) -> Self {
        InstanceFamily {
            generator,
            seed: 0,
            trials: 1,
        }
    }

    pub fn erdos_renyi(n: usize, edge_prob: f64, weights: &[f64], trials: usize, seed: u64) -> Self {
        InstanceFamily {
            generator: Generator::ErdosRenyi {
                n,
                edge_prob,
                weights: weights.to_vec(),
            },
            seed,
            trials,
        }
    }

    pub fn star(leaves: usize, p: f64) -> Self {
        Self::new(Generator::Star { leaves, p })
    }

    pub fn chain(n: usize, p: f64) -> Self {
        Self::new(Generator::Chain { n, p })
    }

    pub fn bipartite(a: usize, b: usize, p: f64) -> Self {
        Self::new(Generator::Bipartite { a, b, p })
    }

    pub fn exhaustive_small(n_max: usize, grid: &[f64]) -> Self {
        Self::new(Generator::ExhaustiveSmall {
            n_max,
            grid: grid.to_vec(),
            zero_as_absent: false,
        })
    }

    /// [`Self::exhaustive_small`] with p = 0 edges treated as absent.
    pub fn exhaustive_small_merged(n_max: usize, grid: &[f64]) -> Self {
        Self::new(Generator::ExhaustiveSmall {
            n_max,
            grid: grid.to_vec(),
            zero_as_absent: true,
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_trials(mut self, trials: usize) -> Self {
        self.trials = trials;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::invalid(format!("probability {p} is outside [0, 1]")))
            }
        };
        match &self.generator {
            Generator::ErdosRenyi { n, edge_prob, weights } => {
                prob(*edge_prob)?;
                if weights.is_empty() {
                    return Err(Error::invalid("weight law needs at least one value"));
                }
                weights.iter().try_for_each(|&w| prob(w))?;
                if *n == 0 || *n > 64 {
                    return Err(Error::invalid("erdos_renyi needs 1 ≤ n ≤ 64"));
                }
            }
            Generator::Star { leaves, p } => {
                prob(*p)?;
                if *leaves >= 64 {
                    return Err(Error::invalid("star needs fewer than 64 leaves"));
                }
            }
            Generator::Chain { n, p } => {
                prob(*p)?;
                if *n == 0 || *n > 64 {
                    return Err(Error::invalid("chain needs 1 ≤ n ≤ 64"));
                }
            }
            Generator::Bipartite { a, b, p } => {
                prob(*p)?;
                if a + b == 0 || a + b > 64 {
                    return Err(Error::invalid("bipartite needs 1 ≤ a + b ≤ 64"));
                }
            }
            Generator::ExhaustiveSmall { n_max, grid, .. } => {
                grid.iter().try_for_each(|&p| prob(p))?;
                if *n_max > 5 {
                    return Err(Error::invalid("exhaustive_small is limited to n_max ≤ 5"));
                }
            }
        }
        Ok(())
    }

    /// Lazily generated instances, in a fixed order.
    pub fn instances(&self) -> Box<dyn Iterator<Item = Instance> + '_> {
        match &self.generator {
            Generator::ErdosRenyi { n, edge_prob, weights } => {
                let (n, q) = (*n, *edge_prob);
                Box::new((0..self.trials as u64).map(move |t| {
                    let mut rng = sample_rng(self.seed, t);
                    let mut edges = Vec::new();
                    for u in 0..n as u32 {
                        for v in 0..n as u32 {
                            if u != v && rng.gen::<f64>() < q {
                                let p = *weights.choose(&mut rng).expect("non-empty");
                                edges.push(edge(u, v, p));
                            }
                        }
                    }
                    Instance {
                        label: format!("erdos_renyi#{t}"),
                        graph: InfluenceGraph::new(n, edges).expect("valid by construction"),
                    }
                }))
            }
            Generator::Star { leaves, p } => {
                let edges = (1..=*leaves as u32).map(|v| edge(0, v, *p)).collect();
                single("star", *leaves + 1, edges)
            }
            Generator::Chain { n, p } => {
                let edges = (1..*n as u32).map(|v| edge(v - 1, v, *p)).collect();
                single("chain", *n, edges)
            }
            Generator::Bipartite { a, b, p } => {
                let (a, b) = (*a as u32, *b as u32);
                let edges = (0..a).flat_map(|u| (a..a + b).map(move |v| edge(u, v, *p))).collect();
                single("bipartite", (a + b) as usize, edges)
            }
            Generator::ExhaustiveSmall {
                n_max,
                grid,
                zero_as_absent,
            } => {
                let options = options(grid, *zero_as_absent);
                Box::new((1..=*n_max).flat_map(move |n| {
                    let space = Space::new(n, options.clone());
                    (0..space.count()).map(move |code| space.instance(code))
                }))
            }
        }
    }

    /// Isomorphism classes of an exhaustive family, or `None` for the
    /// other generators. Together the orbits cover every labelled graph
    /// of [`Self::instances`] exactly once.
    pub fn orbits(&self) -> Option<Box<dyn Iterator<Item = Orbit> + '_>> {
        let Generator::ExhaustiveSmall {
            n_max,
            grid,
            zero_as_absent,
        } = &self.generator
        else {
            return None;
        };
        let options = options(grid, *zero_as_absent);
        Some(Box::new((1..=*n_max).flat_map(move |n| {
            let space = Space::new(n, options.clone());
            let perms = permutations(n);
            (0..space.count()).filter_map(move |code| space.orbit(code, &perms))
        })))
    }
}

fn edge(u: u32, v: u32, p: f64) -> Edge {
    Edge {
        source: NodeId(u),
        target: NodeId(v),
        prob: p,
    }
}

fn single(name: &str, n: usize, edges: Vec<Edge>) -> Box<dyn Iterator<Item = Instance>> {
    let graph = InfluenceGraph::new(n, edges).expect("valid by construction");
    Box::new(std::iter::once(Instance {
        label: name.to_string(),
        graph,
    }))
}

fn options(grid: &[f64], zero_as_absent: bool) -> Vec<Option<f64>> {
    let mut out = vec![None];
    for &p in grid {
        if !(zero_as_absent && p == 0.0) && !out.contains(&Some(p)) {
            out.push(Some(p));
        }
    }
    out
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, n: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        for v in 0..n {
            if !prefix.contains(&v) {
                prefix.push(v);
                rec(prefix, n, out);
                prefix.pop();
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(n), n, &mut out);
    out
}

/// An isomorphism class: its smallest-code member and every distinct
/// labelled member, `rep` included.
#[derive(Clone, Debug)]
pub struct Orbit {
    pub rep: Instance,
    // (member code, perm) with rep node u renamed perm[u] in the member
    codes: Vec<(u64, Vec<u32>)>,
    options: Vec<Option<f64>>,
}

impl Orbit {
    pub fn size(&self) -> usize {
        self.codes.len()
    }

    pub fn members(&self) -> impl Iterator<Item = Instance> + '_ {
        let space = self.space();
        self.codes.iter().map(move |(c, _)| space.instance(*c))
    }

    /// Every member as (code, renaming of rep nodes), without building
    /// its graph.
    pub fn relabellings(&self) -> impl Iterator<Item = (u64, &[u32])> + '_ {
        self.codes.iter().map(|(c, p)| (*c, p.as_slice()))
    }

    /// Label of the member with `code`.
    pub fn label(&self, code: u64) -> String {
        label(self.rep.graph.node_count(), code)
    }

    /// The member with renaming `perm` of the rep's nodes.
    pub fn relabelled(&self, perm: &[u32]) -> Instance {
        let space = self.space();
        let perm: Vec<usize> = perm.iter().map(|&v| v as usize).collect();
        space.instance(space.permuted(&space.digits(self.codes[0].0), &perm))
    }

    fn space(&self) -> Space {
        Space::new(self.rep.graph.node_count(), self.options.clone())
    }
}

fn label(n: usize, code: u64) -> String {
    format!("n{n}#{code}")
}

// All graphs on n nodes, encoded in base |options| with one digit per
// ordered pair (pair 0 least significant).
struct Space {
    n: usize,
    pairs: Vec<(u32, u32)>,
    options: Vec<Option<f64>>,
}

impl Space {
    fn new(n: usize, options: Vec<Option<f64>>) -> Self {
        let pairs = (0..n as u32)
            .flat_map(|u| (0..n as u32).filter(move |&v| v != u).map(move |v| (u, v)))
            .collect();
        Space { n, pairs, options }
    }

    fn count(&self) -> u64 {
        (self.options.len() as u64).pow(self.pairs.len() as u32)
    }

    fn digits(&self, code: u64) -> Vec<usize> {
        let b = self.options.len() as u64;
        let mut c = code;
        self.pairs
            .iter()
            .map(|_| {
                let d = (c % b) as usize;
                c /= b;
                d
            })
            .collect()
    }

    fn pair_index(&self, u: usize, v: usize) -> usize {
        // pairs are (u, v≠u) in row order
        u * (self.n - 1) + if v > u { v - 1 } else { v }
    }

    fn instance(&self, code: u64) -> Instance {
        let edges = self
            .digits(code)
            .iter()
            .zip(&self.pairs)
            .filter_map(|(&d, &(u, v))| self.options[d].map(|p| edge(u, v, p)))
            .collect();
        Instance {
            label: label(self.n, code),
            graph: InfluenceGraph::new(self.n, edges).expect("valid by construction"),
        }
    }

    fn permuted(&self, digits: &[usize], perm: &[usize]) -> u64 {
        let mut out = vec![0usize; digits.len()];
        for (i, &(u, v)) in self.pairs.iter().enumerate() {
            out[self.pair_index(perm[u as usize], perm[v as usize])] = digits[i];
        }
        let b = self.options.len() as u64;
        out.iter().rev().fold(0u64, |acc, &d| acc * b + d as u64)
    }

    // The orbit of `code` if `code` is its smallest member.
    fn orbit(&self, code: u64, perms: &[Vec<usize>]) -> Option<Orbit> {
        let digits = self.digits(code);
        let mut members = Vec::with_capacity(perms.len());
        for perm in perms {
            let c = self.permuted(&digits, perm);
            if c < code {
                return None;
            }
            members.push((c, perm.iter().map(|&v| v as u32).collect::<Vec<u32>>()));
        }
        members.sort_unstable();
        members.dedup_by_key(|m| m.0);
        Some(Orbit {
            rep: self.instance(code),
            codes: members,
            options: self.options.clone(),
        })
    }
}

impl FromStr for Generator {
    type Err = Error;

    /// Parses `name(arg, …)`, e.g. `erdos_renyi(5,0.5)`, `star(4,0.5)`,
    /// `chain(3,0.5)`, `bipartite(2,3,0.5)`, `exhaustive_small(3)` or
    /// `exhaustive_small(4,0|0.3|0.7|1,merge_zero)`. Lists use `|`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("cannot parse generator spec {s:?}"));
        let s = s.trim();
        let open = s.find('(').ok_or_else(bad)?;
        let inner = s[open + 1..].strip_suffix(')').ok_or_else(bad)?;
        let name = s[..open].trim();
        let args: Vec<&str> = if inner.trim().is_empty() {
            Vec::new()
        } else {
            inner.split(',').map(str::trim).collect()
        };
        let int = |i: usize| -> Result<usize> { args.get(i).ok_or_else(bad)?.parse().map_err(|_| bad()) };
        let real = |i: usize| -> Result<f64> { args.get(i).ok_or_else(bad)?.parse().map_err(|_| bad()) };
        let list = |i: usize| -> Result<Option<Vec<f64>>> {
            args.get(i)
                .map(|a| a.split('|').map(|x| x.trim().parse().map_err(|_| bad())).collect())
                .transpose()
        };
        let arity = |lo: usize, hi: usize| {
            if (lo..=hi).contains(&args.len()) {
                Ok(())
            } else {
                Err(bad())
            }
        };
        let gen = match name {
            "erdos_renyi" => {
                arity(2, 3)?;
                Generator::ErdosRenyi {
                    n: int(0)?,
                    edge_prob: real(1)?,
                    weights: list(2)?.unwrap_or_else(|| DEFAULT_GRID.to_vec()),
                }
            }
            "star" => {
                arity(2, 2)?;
                Generator::Star {
                    leaves: int(0)?,
                    p: real(1)?,
                }
            }
            "chain" => {
                arity(2, 2)?;
                Generator::Chain {
                    n: int(0)?,
                    p: real(1)?,
                }
            }
            "bipartite" => {
                arity(3, 3)?;
                Generator::Bipartite {
                    a: int(0)?,
                    b: int(1)?,
                    p: real(2)?,
                }
            }
            "exhaustive_small" => {
                arity(1, 3)?;
                let zero_as_absent = match args.get(2) {
                    None => false,
                    Some(&"merge_zero") => true,
                    Some(_) => return Err(bad()),
                };
                Generator::ExhaustiveSmall {
                    n_max: int(0)?,
                    grid: list(1)?.unwrap_or_else(|| DEFAULT_GRID.to_vec()),
                    zero_as_absent,
                }
            }
            _ => return Err(bad()),
        };
        Ok(gen)
    }
}
