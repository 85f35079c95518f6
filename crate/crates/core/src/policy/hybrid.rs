use super::{policy_leaves, AdaptivePolicy, PartialRealisation, SelectionProbabilities};
use crate::diffusion::engine::{boosted, Enumeration};
use crate::diffusion::{exact_spread, DEFAULT_ENUMERATION_CAP};
use crate::error::{Error, Result};
use crate::graph::{InfluenceGraph, NodeId, SeedSet};

/// E_ρ[σ(base ∪ {ρ})] with P[ρ = i] = x_i / k.
pub fn rand_t_value(g: &InfluenceGraph, base: &SeedSet, x: &SelectionProbabilities, k: usize) -> Result<f64> {
    if x.x.len() != g.node_count() {
        return Err(Error::invalid("selection probabilities have the wrong length"));
    }
    if k == 0 || (x.sum() - k as f64).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "selection probabilities sum to {}, expected k = {k}",
            x.sum()
        )));
    }
    let mut total = 0.0;
    for (i, &xi) in x.x.iter().enumerate() {
        if xi != 0.0 {
            total += xi / k as f64 * exact_spread(g, &base.with(NodeId(i as u32)))?;
        }
    }
    Ok(total)
}

/// Hyb²_t: π runs on L̂ from the empty realisation, then dom(Ψ̂_π) ∪ base
/// is evaluated in the 2-level model where all of it gets two chances.
/// The L̂ copies of edges leaving dom(Ψ̂_π) are the ones π observed.
pub fn hybrid_two_level_value<P: AdaptivePolicy + ?Sized>(g: &InfluenceGraph, base: &SeedSet, pi: &P) -> Result<f64> {
    base.validate(g)?;
    let mut total = 0.0;
    for (psi_hat, p) in policy_leaves(g, pi)? {
        let en = Enumeration::from_law(g, |id| {
            let e = g.edge(id);
            match psi_hat.edge_observation(e.source, e.target) {
                Some(true) => 1.0,
                Some(false) => e.prob,
                None if base.contains(e.source) => boosted(e.prob),
                None => e.prob,
            }
        })?;
        en.check_cap(DEFAULT_ENUMERATION_CAP)?;
        total += p * en.expected_reach(base.mask() | psi_hat.dom().mask());
    }
    Ok(total)
}

/// Hyb²_ψ: like Hyb²_t on top of the observed ψ, where only the nodes of
/// dom(Ψ̂_π) \ dom(ψ) get a second chance and L is conditioned on ψ.
pub fn strong_hybrid_value<P: AdaptivePolicy + ?Sized>(
    g: &InfluenceGraph,
    psi: &PartialRealisation,
    pi: &P,
) -> Result<f64> {
    psi.validate(g)?;
    let dom = psi.dom().mask();
    let mut total = 0.0;
    for (psi_hat, p) in policy_leaves(g, pi)? {
        let en = Enumeration::from_law(g, |id| {
            let e = g.edge(id);
            if let Some(live) = psi.edge_observation(e.source, e.target) {
                return if live { 1.0 } else { 0.0 };
            }
            match psi_hat.edge_observation(e.source, e.target) {
                Some(true) => 1.0,
                _ => e.prob,
            }
        })?;
        en.check_cap(DEFAULT_ENUMERATION_CAP)?;
        total += p * en.expected_reach(dom | psi_hat.dom().mask());
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{conditional_spread, exact_two_level_spread};
    use crate::policy::ConstantPolicy;

    fn g() -> InfluenceGraph {
        InfluenceGraph::from_triples(3, &[(0, 1, 0.5), (1, 2, 0.3), (2, 0, 0.7)]).unwrap()
    }

    #[test]
    fn rand_t_examples() {
        let g = g();
        let x = SelectionProbabilities { x: vec![0.0, 2.0, 0.0] };
        let base = SeedSet::from([0]);
        let v = rand_t_value(&g, &base, &x, 2).unwrap();
        assert_eq!(v, exact_spread(&g, &SeedSet::from([0, 1])).unwrap());
        let all = SeedSet::from([0, 1, 2]);
        let x = SelectionProbabilities { x: vec![1.0, 0.5, 0.5] };
        assert!((rand_t_value(&g, &all, &x, 2).unwrap() - 3.0).abs() < 1e-12);
        assert!(rand_t_value(&g, &all, &x, 3).is_err());
    }

    #[test]
    fn hybrid_with_constant_policy() {
        let g = g();
        let pi = ConstantPolicy::new([NodeId(0), NodeId(2)]);
        let t = SeedSet::from([0, 2]);
        let h = hybrid_two_level_value(&g, &SeedSet::new(), &pi).unwrap();
        assert!((h - exact_two_level_spread(&g, &t).unwrap()).abs() < 1e-12);
        let s = strong_hybrid_value(&g, &PartialRealisation::new(), &pi).unwrap();
        assert!((s - exact_two_level_spread(&g, &t).unwrap()).abs() < 1e-12);
        let all = SeedSet::from([0, 1, 2]);
        assert!((hybrid_two_level_value(&g, &all, &pi).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn strong_hybrid_full_domain() {
        let g = g();
        let psi = PartialRealisation::new()
            .with(NodeId(0), [NodeId(1)])
            .with(NodeId(1), [])
            .with(NodeId(2), [NodeId(0)]);
        let pi = ConstantPolicy::new([NodeId(1), NodeId(0)]);
        let expect = conditional_spread(&g, &psi, &SeedSet::new()).unwrap();
        assert!((strong_hybrid_value(&g, &psi, &pi).unwrap() - expect).abs() < 1e-12);
    }
}
