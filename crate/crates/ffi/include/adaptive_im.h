#ifndef ADAPTIVE_IM_H
#define ADAPTIVE_IM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every call.
typedef enum ImStatus {
  IM_STATUS_OK = 0,
  // A required pointer argument was null.
  IM_STATUS_NULL_POINTER = 1,
  // Malformed text, bad UTF-8 or an argument out of range.
  IM_STATUS_INVALID_INPUT = 2,
  // The exact computation was refused by a size guard.
  IM_STATUS_TOO_LARGE = 3,
  // An I/O or serialization failure.
  IM_STATUS_INTERNAL = 4,
  // A Rust panic was caught at the boundary.
  IM_STATUS_PANIC = 5,
} ImStatus;

// Opaque influence graph.
typedef struct ImGraph ImGraph;

// Opaque SMSM instance.
typedef struct ImSmsm ImSmsm;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null after a
// success. Valid until the next call on the same thread.
const char *im_last_error(void);

// Parses an edge list: a node-count line, then `u v p` per edge.
//
// # Safety
// `text_ptr` must be a nul-terminated string and `out_graph` a valid pointer.
// On success `*out_graph` owns a graph to release with [`im_graph_free`].
enum ImStatus im_graph_parse(const char *text_ptr, struct ImGraph **out_graph);

// Releases a graph. Null is ignored.
//
// # Safety
// `g` must come from [`im_graph_parse`] and not be used afterwards.
void im_graph_free(struct ImGraph *g);

// Number of nodes, or 0 for a null handle.
//
// # Safety
// `g` must be null or a live graph handle.
uintptr_t im_graph_node_count(const struct ImGraph *g);

// Number of edges, or 0 for a null handle.
//
// # Safety
// `g` must be null or a live graph handle.
uintptr_t im_graph_edge_count(const struct ImGraph *g);

// Exact expected spread of `seeds[0..len]`.
//
// # Safety
// `g` must be a live handle, `seeds` must point to `len` ids (or be null
// when `len` is 0) and `out_value` must be valid for writes.
enum ImStatus im_exact_spread(const struct ImGraph *g,
                              const uint32_t *seeds,
                              uintptr_t len,
                              double *out_value);

// Monte Carlo spread of `seeds[0..len]` with a 95% half-width.
//
// # Safety
// As [`im_exact_spread`]; `out_half_width` may be null.
enum ImStatus im_estimate_spread(const struct ImGraph *g,
                                 const uint32_t *seeds,
                                 uintptr_t len,
                                 uint64_t samples,
                                 uint64_t seed,
                                 double *out_mean,
                                 double *out_half_width);

// Exact non-adaptive greedy: writes `k` seeds in pick order and the
// spread of the final set.
//
// # Safety
// `out_seeds` must have room for `k` ids; `out_value` may be null.
enum ImStatus im_greedy(const struct ImGraph *g,
                        uintptr_t k,
                        uint32_t *out_seeds,
                        double *out_value);

// Exact expected spread of the adaptive greedy policy with budget `k`.
//
// # Safety
// `g` must be a live handle and `out_value` valid for writes.
enum ImStatus im_adaptive_greedy_value(const struct ImGraph *g, uintptr_t k, double *out_value);

// Exact OPT_N, OPT_A and their ratio. Any output pointer may be null.
//
// # Safety
// `g` must be a live handle; non-null outputs must be valid for writes.
enum ImStatus im_adaptivity_gap(const struct ImGraph *g,
                                uintptr_t k,
                                double *out_opt_n,
                                double *out_opt_a,
                                double *out_gap);

// Optimal adaptive policy as a JSON decision tree.
//
// # Safety
// `g` must be a live handle and `out_json` valid for writes. On success
// `*out_json` must be released with [`im_string_free`].
enum ImStatus im_opt_adaptive_witness(const struct ImGraph *g, uintptr_t k, char **out_json);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not be used afterwards.
void im_string_free(char *s);

// Parses an SMSM instance from JSON.
//
// # Safety
// `json` must be a nul-terminated string and `out_instance` valid for
// writes. Release the result with [`im_smsm_free`].
enum ImStatus im_smsm_parse(const char *json, struct ImSmsm **out_instance);

// Releases an SMSM instance. Null is ignored.
//
// # Safety
// `s` must come from [`im_smsm_parse`] and not be used afterwards.
void im_smsm_free(struct ImSmsm *s);

// Expected value of the SMSM greedy set.
//
// # Safety
// `s` must be a live handle and `out_value` valid for writes.
enum ImStatus im_smsm_greedy_value(const struct ImSmsm *s, double *out_value);

// Value of the optimal adaptive SMSM policy.
//
// # Safety
// `s` must be a live handle and `out_value` valid for writes.
enum ImStatus im_smsm_opt_adaptive(const struct ImSmsm *s, double *out_value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ADAPTIVE_IM_H */
