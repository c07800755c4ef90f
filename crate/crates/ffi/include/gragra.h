#ifndef GRAGRA_H
#define GRAGRA_H

#pragma once

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible call.
typedef enum GragraStatus {
  GRAGRA_STATUS_OK = 0,
  GRAGRA_STATUS_NULL_ARGUMENT = 1,
  GRAGRA_STATUS_INVALID_UTF8 = 2,
  GRAGRA_STATUS_PARSE = 3,
  GRAGRA_STATUS_CONFIG = 4,
  GRAGRA_STATUS_RUNTIME = 5,
  GRAGRA_STATUS_OUT_OF_RANGE = 6,
  GRAGRA_STATUS_PANIC = 7,
} GragraStatus;

typedef enum GragraVariant {
  GRAGRA_VARIANT_TEST = 0,
  GRAGRA_VARIANT_BIC = 1,
} GragraVariant;

// Mining options; starts from the library defaults.
typedef struct GragraConfig GragraConfig;

// A parsed graph-group dataset.
typedef struct GragraDataset GragraDataset;

// A finished mining run.
typedef struct GragraResult GragraResult;

// One edge of a pattern.
typedef struct GragraEdge {
  uint32_t src;
  uint32_t dst;
  uint16_t weight;
} GragraEdge;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *gragra_version(void);

// Message of the last failed call on this thread, or null. The pointer
// stays valid until the next call on this thread.
const char *gragra_last_error(void);

// Parses a dataset in text or JSON form. `bins` of 0 keeps the header's
// bin count.
//
// # Safety
// `text` must be a valid NUL-terminated string and `out` a valid pointer.
enum GragraStatus gragra_dataset_parse(const char *text, uint16_t bins, struct GragraDataset **out);

// Generates a dataset from a named synthetic preset.
//
// # Safety
// `preset` must be a valid NUL-terminated string and `out` a valid pointer.
enum GragraStatus gragra_dataset_synth(const char *preset,
                                       uint64_t seed,
                                       struct GragraDataset **out);

// # Safety
// `ds` must be null or a handle from this library that was not yet freed.
void gragra_dataset_free(struct GragraDataset *ds);

// # Safety
// `ds` must be a live dataset handle and `out` a valid pointer.
enum GragraStatus gragra_dataset_group_count(const struct GragraDataset *ds, size_t *out);

// # Safety
// `ds` must be a live dataset handle and `out` a valid pointer.
enum GragraStatus gragra_dataset_graph_count(const struct GragraDataset *ds, size_t *out);

// Default options: test variant, alpha 1e-7 (1e-5 below 50 graphs),
// minimum support 2, at most 16 patterns per factor.
struct GragraConfig *gragra_config_new(void);

// # Safety
// `cfg` must be null or a handle from this library that was not yet freed.
void gragra_config_free(struct GragraConfig *cfg);

// # Safety
// `cfg` must be a live config handle.
enum GragraStatus gragra_config_set_variant(struct GragraConfig *cfg, enum GragraVariant variant);

// Sets the significance levels and the small-sample cutoff.
//
// # Safety
// `cfg` must be a live config handle.
enum GragraStatus gragra_config_set_significance(struct GragraConfig *cfg,
                                                 double alpha,
                                                 double alpha_small,
                                                 size_t small_cutoff);

// # Safety
// `cfg` must be a live config handle.
enum GragraStatus gragra_config_set_min_support(struct GragraConfig *cfg, uint32_t support);

// # Safety
// `cfg` must be a live config handle.
enum GragraStatus gragra_config_set_adaptive_frac(struct GragraConfig *cfg, double frac);

// `threads` of 0 uses the global pool.
//
// # Safety
// `cfg` must be a live config handle.
enum GragraStatus gragra_config_set_threads(struct GragraConfig *cfg, size_t threads);

// # Safety
// `cfg` must be a live config handle.
enum GragraStatus gragra_config_set_max_factor_patterns(struct GragraConfig *cfg, size_t cap);

// `max` of 0 removes the limit.
//
// # Safety
// `cfg` must be a live config handle.
enum GragraStatus gragra_config_set_max_patterns(struct GragraConfig *cfg, size_t max);

// # Safety
// `cfg` must be a live config handle.
enum GragraStatus gragra_config_set_seed(struct GragraConfig *cfg, uint64_t seed);

// Sparsifies a copy of the dataset and mines it. A null `cfg` uses the
// defaults.
//
// # Safety
// `ds` must be a live dataset handle, `cfg` null or a live config handle,
// and `out` a valid pointer.
enum GragraStatus gragra_mine(const struct GragraDataset *ds,
                              const struct GragraConfig *cfg,
                              struct GragraResult **out);

// # Safety
// `res` must be null or a handle from this library that was not yet freed.
void gragra_result_free(struct GragraResult *res);

// # Safety
// `res` must be a live result handle and `out` a valid pointer.
enum GragraStatus gragra_result_pattern_count(const struct GragraResult *res, size_t *out);

// Copies up to `cap` edges of pattern `index` into `edges` and stores the
// pattern's full length in `len`. Pass `cap = 0` to query the length.
//
// # Safety
// `res` must be a live result handle, `len` a valid pointer and `edges`
// valid for `cap` writes (may be null when `cap` is 0).
enum GragraStatus gragra_result_pattern_edges(const struct GragraResult *res,
                                              size_t index,
                                              struct GragraEdge *edges,
                                              size_t cap,
                                              size_t *len);

// Whether pattern `index` is associated with group `group`.
//
// # Safety
// `res` must be a live result handle and `out` a valid pointer.
enum GragraStatus gragra_result_association(const struct GragraResult *res,
                                            size_t group,
                                            size_t index,
                                            bool *out);

// Serializes the result document as JSON. Free the string with
// [`gragra_string_free`].
//
// # Safety
// `res` must be a live result handle and `out` a valid pointer.
enum GragraStatus gragra_result_to_json(const struct GragraResult *res, char **out);

// # Safety
// `s` must be null or a string returned by this library that was not yet freed.
void gragra_string_free(char *s);

// Upper tail probability of the chi-squared distribution.
//
// # Safety
// `out` must be a valid pointer.
enum GragraStatus gragra_chi2_sf(double x, uint32_t df, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GRAGRA_H */
