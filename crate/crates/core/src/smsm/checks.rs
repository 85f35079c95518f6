//! Instance-level checks of the SMSM analysis and of the objective's
//! lattice properties.

use serde_json::json;

use super::oracle::{hybrid_value, selection_probabilities, smsm_opt_adaptive, smsm_opt_nonadaptive, smsm_tree_value};
use super::{smsm_expected_value, smsm_greedy, SmsmInstance};
use crate::error::{Error, Resource, Result};
use crate::verify::{smsm_ratio, CheckReport, TREE_TOL};

/// Tolerance of the Rand_t identity.
pub const RAND_TOL: f64 = 1e-9;
/// Tolerance of the lattice checks.
pub const LATTICE_TOL: f64 = 1e-12;
const MAX_LATTICE_POINTS: u64 = 1 << 12;

/// On S_0, …, S_{k−1} of the greedy trace, with π optimal and x its
/// selection probabilities:
///
/// - `rand_identity`: k·(E[f(θ(S ∪ {ρ}))] − E[f(θ(S))]) = Σ_{i∉S} x_i E[Δ(i|θ(S))]
///   within 1e-9, P[ρ = i] = x_i/k;
/// - `hybrid_upper`: Hyb_t ≤ E[f(θ(S) ∨ θ̂(S))] + Σ_{i∉S} x_i E[Δ(i|θ(S))];
/// - `opt_upper`: OPT_A ≤ Hyb_t;
///
/// and once per instance `ratio` (k ≥ 2): GR_N(k) ≥ ½(1 − (1 − 2/k)^k)·OPT_A,
/// `opt_order`: OPT_N ≤ OPT_A, and `tree` agreement with the induction.
pub fn smsm_check_section2(inst: &SmsmInstance) -> Result<CheckReport> {
    inst.validate()?;
    let k = inst.k;
    let text = || inst.to_json();
    let mut r = CheckReport::new("smsm_section2");
    let opt = smsm_opt_adaptive(inst)?;
    let x = selection_probabilities(inst, &opt.witness)?;
    let trace = smsm_greedy(inst)?;
    let mut rand_r = CheckReport::with_tolerance("smsm_section2", RAND_TOL);
    for (t, set) in trace.prefixes().take(k).enumerate() {
        let base = smsm_expected_value(inst, set)?;
        let mut rand = 0.0;
        let mut gains = 0.0;
        for (i, &xi) in x.iter().enumerate() {
            if set.contains(&i) {
                rand += xi / k as f64 * base;
                continue;
            }
            let mut s = set.to_vec();
            s.push(i);
            let with = smsm_expected_value(inst, &s)?;
            rand += xi / k as f64 * with;
            gains += xi * (with - base);
        }
        let lhs = k as f64 * (rand - base);
        let p = |lemma: &str| json!({ "lemma": lemma, "t": t, "S": set, "x": x });
        rand_r.record("rand_identity", text, || p("rand_identity"), (lhs - gains).abs(), 0.0);
        rand_r.count("rand_identity", 1);
        let hyb = hybrid_value(inst, set, Some(&opt.witness))?;
        let doubled = hybrid_value(inst, set, None)?;
        r.record("hybrid_upper", text, || p("hybrid_upper"), hyb, doubled + gains);
        r.count("hybrid_upper", 1);
        r.record("opt_upper", text, || p("opt_upper"), opt.value, hyb);
        r.count("opt_upper", 1);
    }
    let gr = trace.final_value();
    if k >= 2 {
        r.record(
            "ratio",
            text,
            || json!({ "lemma": "ratio", "k": k }),
            smsm_ratio(k) * opt.value,
            gr,
        );
        r.count("ratio", 1);
        if opt.value > 0.0 {
            r.note_min("worst_ratio", gr / opt.value);
        }
    } else {
        r.count("ratio_skipped_k1", 1);
    }
    let optn = smsm_opt_nonadaptive(inst)?.value;
    r.record("opt_order", text, || json!({ "lemma": "opt_order" }), optn, opt.value);
    r.count("opt_order", 1);
    let tree = smsm_tree_value(inst, &opt.witness)?;
    let mut tree_r = CheckReport::with_tolerance("smsm_section2", 0.0);
    tree_r.record(
        "tree",
        text,
        || json!({ "lemma": "tree" }),
        (tree - opt.value).abs(),
        TREE_TOL,
    );
    tree_r.count("tree", 1);
    r.merge(rand_r);
    r.merge(tree_r);
    Ok(r)
}

/// f(x ∨ y) + f(x ∧ y) ≤ f(x) + f(y) and f(x ∧ y) ≤ f(x) on all pairs of
/// lattice points whose coordinates are 0 or a state value of the item.
pub fn check_lattice(inst: &SmsmInstance) -> Result<CheckReport> {
    inst.validate()?;
    let mut coords: Vec<Vec<f64>> = Vec::with_capacity(inst.n);
    for law in &inst.items {
        let mut c: Vec<f64> = std::iter::once(0.0).chain(law.iter().map(|s| s.value)).collect();
        c.sort_by(f64::total_cmp);
        c.dedup();
        coords.push(c);
    }
    let count = coords.iter().fold(1u64, |a, c| a.saturating_mul(c.len() as u64));
    if count > MAX_LATTICE_POINTS {
        return Err(Error::too_large(Resource::JointStates, count, MAX_LATTICE_POINTS));
    }
    let points: Vec<Vec<f64>> = (0..count)
        .map(|mut code| {
            coords
                .iter()
                .map(|c| {
                    let v = c[(code % c.len() as u64) as usize];
                    code /= c.len() as u64;
                    v
                })
                .collect()
        })
        .collect();
    let f = |x: &[f64]| inst.objective.eval(x);
    let values: Vec<f64> = points.iter().map(|x| f(x)).collect();
    let mut r = CheckReport::with_tolerance("lattice", LATTICE_TOL);
    let text = || inst.to_json();
    for (a, x) in points.iter().enumerate() {
        for (b, y) in points.iter().enumerate().skip(a) {
            let join: Vec<f64> = x.iter().zip(y).map(|(p, q)| p.max(*q)).collect();
            let meet: Vec<f64> = x.iter().zip(y).map(|(p, q)| p.min(*q)).collect();
            let (fj, fm) = (f(&join), f(&meet));
            let p = || json!({ "x": x, "y": y });
            r.record("submodular", text, p, fj + fm, values[a] + values[b]);
            r.record("monotone", text, p, fm, values[a].min(values[b]));
            r.record("monotone", text, p, values[a].max(values[b]), fj);
        }
    }
    Ok(r)
}
