//! C ABI over `adaptive-im`.
//!
//! Graphs and SMSM instances live behind opaque handles. Every call
//! returns an [`ImStatus`]; on failure the message is kept per thread and
//! read back with [`im_last_error`]. Panics are caught at the boundary and
//! reported as `IM_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use adaptive_im::diffusion::{estimate_spread, exact_spread, Evaluator};
use adaptive_im::oracle::{adaptivity_gap, opt_adaptive};
use adaptive_im::policy::{adaptive_greedy, evaluate_policy, nonadaptive_greedy};
use adaptive_im::smsm::{smsm_greedy, smsm_opt_adaptive, SmsmInstance};
use adaptive_im::{Error, InfluenceGraph, NodeId, SeedSet};

/// Result code of every call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ImStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// Malformed text, bad UTF-8 or an argument out of range.
    InvalidInput = 2,
    /// The exact computation was refused by a size guard.
    TooLarge = 3,
    /// An I/O or serialization failure.
    Internal = 4,
    /// A Rust panic was caught at the boundary.
    Panic = 5,
}

/// Opaque influence graph.
pub struct ImGraph(InfluenceGraph);

/// Opaque SMSM instance.
pub struct ImSmsm(SmsmInstance);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

enum Failure {
    Status(ImStatus, String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn status_of(e: &Error) -> ImStatus {
    match e {
        _ if e.is_resource_guard() => ImStatus::TooLarge,
        Error::Io(_) | Error::Json(_) => ImStatus::Internal,
        _ => ImStatus::InvalidInput,
    }
}

// Runs `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ImStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            ImStatus::Ok
        }
        Ok(Err(Failure::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            ImStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure::Status(ImStatus::NullPointer, format!("{what} is null"))
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Status(ImStatus::InvalidInput, format!("{what} is not UTF-8")))
}

unsafe fn seed_set(g: &InfluenceGraph, seeds: *const u32, len: usize) -> Result<SeedSet, Failure> {
    if len == 0 {
        return Ok(SeedSet::new());
    }
    if seeds.is_null() {
        return Err(null("seeds"));
    }
    let ids = std::slice::from_raw_parts(seeds, len);
    Ok(SeedSet::for_graph(g, ids.iter().map(|&v| NodeId(v)))?)
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure::Status(ImStatus::Internal, "string contains nul".into()))
}

/// Message of the last failed call on this thread, or null after a
/// success. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn im_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Parses an edge list: a node-count line, then `u v p` per edge.
///
/// # Safety
/// `text_ptr` must be a nul-terminated string and `out_graph` a valid pointer.
/// On success `*out_graph` owns a graph to release with [`im_graph_free`].
#[no_mangle]
pub unsafe extern "C" fn im_graph_parse(text_ptr: *const c_char, out_graph: *mut *mut ImGraph) -> ImStatus {
    guard(|| {
        let slot = out(out_graph, "out_graph")?;
        *slot = ptr::null_mut();
        let g = InfluenceGraph::parse(text(text_ptr, "text")?)?;
        *slot = Box::into_raw(Box::new(ImGraph(g)));
        Ok(())
    })
}

/// Releases a graph. Null is ignored.
///
/// # Safety
/// `g` must come from [`im_graph_parse`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn im_graph_free(g: *mut ImGraph) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Number of nodes, or 0 for a null handle.
///
/// # Safety
/// `g` must be null or a live graph handle.
#[no_mangle]
pub unsafe extern "C" fn im_graph_node_count(g: *const ImGraph) -> usize {
    g.as_ref().map_or(0, |g| g.0.node_count())
}

/// Number of edges, or 0 for a null handle.
///
/// # Safety
/// `g` must be null or a live graph handle.
#[no_mangle]
pub unsafe extern "C" fn im_graph_edge_count(g: *const ImGraph) -> usize {
    g.as_ref().map_or(0, |g| g.0.edge_count())
}

/// Exact expected spread of `seeds[0..len]`.
///
/// # Safety
/// `g` must be a live handle, `seeds` must point to `len` ids (or be null
/// when `len` is 0) and `out_value` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn im_exact_spread(
    g: *const ImGraph,
    seeds: *const u32,
    len: usize,
    out_value: *mut f64,
) -> ImStatus {
    guard(|| {
        let g = &borrow(g, "graph")?.0;
        let s = seed_set(g, seeds, len)?;
        *out(out_value, "out_value")? = exact_spread(g, &s)?;
        Ok(())
    })
}

/// Monte Carlo spread of `seeds[0..len]` with a 95% half-width.
///
/// # Safety
/// As [`im_exact_spread`]; `out_half_width` may be null.
#[no_mangle]
pub unsafe extern "C" fn im_estimate_spread(
    g: *const ImGraph,
    seeds: *const u32,
    len: usize,
    samples: u64,
    seed: u64,
    out_mean: *mut f64,
    out_half_width: *mut f64,
) -> ImStatus {
    guard(|| {
        let g = &borrow(g, "graph")?.0;
        let s = seed_set(g, seeds, len)?;
        let mean = out(out_mean, "out_mean")?;
        let est = estimate_spread(g, &s, samples, seed)?;
        *mean = est.mean;
        if let Some(h) = out_half_width.as_mut() {
            *h = est.half_width;
        }
        Ok(())
    })
}

/// Exact non-adaptive greedy: writes `k` seeds in pick order and the
/// spread of the final set.
///
/// # Safety
/// `out_seeds` must have room for `k` ids; `out_value` may be null.
#[no_mangle]
pub unsafe extern "C" fn im_greedy(g: *const ImGraph, k: usize, out_seeds: *mut u32, out_value: *mut f64) -> ImStatus {
    guard(|| {
        let g = &borrow(g, "graph")?.0;
        if out_seeds.is_null() && k > 0 {
            return Err(null("out_seeds"));
        }
        let trace = nonadaptive_greedy(g, k, Evaluator::exact())?;
        for (i, v) in trace.seeds.iter().enumerate() {
            *out_seeds.add(i) = v.0;
        }
        if let Some(o) = out_value.as_mut() {
            *o = trace.final_value();
        }
        Ok(())
    })
}

/// Exact expected spread of the adaptive greedy policy with budget `k`.
///
/// # Safety
/// `g` must be a live handle and `out_value` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn im_adaptive_greedy_value(g: *const ImGraph, k: usize, out_value: *mut f64) -> ImStatus {
    guard(|| {
        let g = &borrow(g, "graph")?.0;
        let o = out(out_value, "out_value")?;
        let pi = adaptive_greedy(g, k, Evaluator::exact())?;
        *o = evaluate_policy(g, &pi, Evaluator::exact())?;
        Ok(())
    })
}

/// Exact OPT_N, OPT_A and their ratio. Any output pointer may be null.
///
/// # Safety
/// `g` must be a live handle; non-null outputs must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn im_adaptivity_gap(
    g: *const ImGraph,
    k: usize,
    out_opt_n: *mut f64,
    out_opt_a: *mut f64,
    out_gap: *mut f64,
) -> ImStatus {
    guard(|| {
        let g = &borrow(g, "graph")?.0;
        let r = adaptivity_gap(g, k)?;
        for (p, v) in [(out_opt_n, r.opt_n), (out_opt_a, r.opt_a), (out_gap, r.gap)] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Optimal adaptive policy as a JSON decision tree.
///
/// # Safety
/// `g` must be a live handle and `out_json` valid for writes. On success
/// `*out_json` must be released with [`im_string_free`].
#[no_mangle]
pub unsafe extern "C" fn im_opt_adaptive_witness(g: *const ImGraph, k: usize, out_json: *mut *mut c_char) -> ImStatus {
    guard(|| {
        let g = &borrow(g, "graph")?.0;
        let slot = out(out_json, "out_json")?;
        *slot = ptr::null_mut();
        *slot = into_c_string(opt_adaptive(g, k)?.witness.to_json())?;
        Ok(())
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn im_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses an SMSM instance from JSON.
///
/// # Safety
/// `json` must be a nul-terminated string and `out_instance` valid for
/// writes. Release the result with [`im_smsm_free`].
#[no_mangle]
pub unsafe extern "C" fn im_smsm_parse(json: *const c_char, out_instance: *mut *mut ImSmsm) -> ImStatus {
    guard(|| {
        let slot = out(out_instance, "out_instance")?;
        *slot = ptr::null_mut();
        let inst = SmsmInstance::from_json(text(json, "json")?)?;
        *slot = Box::into_raw(Box::new(ImSmsm(inst)));
        Ok(())
    })
}

/// Releases an SMSM instance. Null is ignored.
///
/// # Safety
/// `s` must come from [`im_smsm_parse`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn im_smsm_free(s: *mut ImSmsm) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Expected value of the SMSM greedy set.
///
/// # Safety
/// `s` must be a live handle and `out_value` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn im_smsm_greedy_value(s: *const ImSmsm, out_value: *mut f64) -> ImStatus {
    guard(|| {
        let inst = &borrow(s, "instance")?.0;
        let o = out(out_value, "out_value")?;
        *o = smsm_greedy(inst)?.final_value();
        Ok(())
    })
}

/// Value of the optimal adaptive SMSM policy.
///
/// # Safety
/// `s` must be a live handle and `out_value` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn im_smsm_opt_adaptive(s: *const ImSmsm, out_value: *mut f64) -> ImStatus {
    guard(|| {
        let inst = &borrow(s, "instance")?.0;
        let o = out(out_value, "out_value")?;
        *o = smsm_opt_adaptive(inst)?.value;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(t: &str) -> *mut ImGraph {
        let c = CString::new(t).unwrap();
        let mut g = ptr::null_mut();
        assert_eq!(unsafe { im_graph_parse(c.as_ptr(), &mut g) }, ImStatus::Ok);
        g
    }

    fn last_error() -> String {
        unsafe { CStr::from_ptr(im_last_error()) }
            .to_string_lossy()
            .into_owned()
    }

    #[test]
    fn chain_values() {
        let g = graph("3\n0 1 0.5\n");
        unsafe {
            assert_eq!(im_graph_node_count(g), 3);
            assert_eq!(im_graph_edge_count(g), 1);
            let mut v = 0.0;
            assert_eq!(im_exact_spread(g, [0u32].as_ptr(), 1, &mut v), ImStatus::Ok);
            assert_eq!(v, 1.5);
            assert_eq!(im_adaptive_greedy_value(g, 2, &mut v), ImStatus::Ok);
            assert_eq!(v, 2.5);
            let mut seeds = [9u32; 2];
            assert_eq!(im_greedy(g, 2, seeds.as_mut_ptr(), &mut v), ImStatus::Ok);
            assert_eq!((seeds, v), ([0, 2], 2.5));
            let (mut n, mut a, mut gap) = (0.0, 0.0, 0.0);
            assert_eq!(im_adaptivity_gap(g, 2, &mut n, &mut a, &mut gap), ImStatus::Ok);
            assert_eq!((n, a, gap), (2.5, 2.5, 1.0));
            assert!(im_last_error().is_null());
            im_graph_free(g);
        }
    }

    #[test]
    fn errors_set_status_and_message() {
        let bad = CString::new("2\n0 5 0.5\n").unwrap();
        let mut g = ptr::null_mut();
        unsafe {
            assert_eq!(im_graph_parse(bad.as_ptr(), &mut g), ImStatus::InvalidInput);
            assert!(g.is_null());
            assert!(last_error().contains("line 2"), "{}", last_error());
            assert_eq!(im_graph_parse(ptr::null(), &mut g), ImStatus::NullPointer);
            let mut v = 0.0;
            assert_eq!(
                im_exact_spread(ptr::null(), ptr::null(), 0, &mut v),
                ImStatus::NullPointer
            );
            let g = graph("2\n0 1 0.5\n");
            assert_eq!(im_exact_spread(g, [7u32].as_ptr(), 1, &mut v), ImStatus::InvalidInput);
            assert_eq!(
                im_estimate_spread(g, [0u32].as_ptr(), 1, 0, 1, &mut v, ptr::null_mut()),
                ImStatus::InvalidInput
            );
            im_graph_free(g);
        }
    }

    #[test]
    fn guard_refusal_is_too_large() {
        let mut t = String::from("30\n");
        for i in 0..29 {
            t += &format!("{i} {} 0.5\n", i + 1);
        }
        let g = graph(&t);
        let mut v = 0.0;
        unsafe {
            assert_eq!(
                im_adaptivity_gap(g, 2, &mut v, ptr::null_mut(), ptr::null_mut()),
                ImStatus::TooLarge
            );
            im_graph_free(g);
        }
    }

    #[test]
    fn witness_round_trips() {
        let g = graph("3\n0 1 0.5\n1 2 0.5\n");
        let mut s = ptr::null_mut();
        unsafe {
            assert_eq!(im_opt_adaptive_witness(g, 2, &mut s), ImStatus::Ok);
            let json = CStr::from_ptr(s).to_str().unwrap().to_owned();
            let tree = adaptive_im::oracle::DecisionTree::from_json(&json).unwrap();
            tree.validate(&(*g).0).unwrap();
            im_string_free(s);
            im_graph_free(g);
        }
    }

    #[test]
    fn smsm_handles() {
        let json = r#"{"n":2,"k":1,"objective":{"kind":"modular","weights":[1.0,1.0]},
            "items":[[{"value":1.0,"prob":0.5},{"value":0.0,"prob":0.5}],[{"value":0.25,"prob":1.0}]]}"#;
        let c = CString::new(json).unwrap();
        let mut s = ptr::null_mut();
        unsafe {
            assert_eq!(im_smsm_parse(c.as_ptr(), &mut s), ImStatus::Ok, "{}", last_error());
            let mut v = 0.0;
            assert_eq!(im_smsm_greedy_value(s, &mut v), ImStatus::Ok);
            assert_eq!(v, 0.5);
            assert_eq!(im_smsm_opt_adaptive(s, &mut v), ImStatus::Ok);
            assert_eq!(v, 0.5);
            im_smsm_free(s);
        }
    }
}
