#ifndef PPTO_H
#define PPTO_H

#pragma once

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum PptoStatus {
  PPTO_STATUS_OK = 0,
  PPTO_STATUS_NULL_POINTER = 1,
  PPTO_STATUS_INVALID_PARAMETER = 2,
  /**
   * The density is zero, so no finite optimum exists.
   */
  PPTO_STATUS_INTERFERENCE_FREE = 3,
  PPTO_STATUS_SOLVER_FAILURE = 4,
  PPTO_STATUS_WINDOW_TOO_SMALL = 5,
  /**
   * A Rust panic was caught at the boundary.
   */
  PPTO_STATUS_INTERNAL = 99,
} PptoStatus;

/**
 * Logarithm base of the spectral efficiency `log(1 + beta)`.
 */
typedef enum PptoLogBase {
  PPTO_LOG_BASE_NATURAL = 0,
  PPTO_LOG_BASE_BINARY = 1,
} PptoLogBase;

/**
 * Opaque channel handle.
 */
typedef struct PptoChannel PptoChannel;

/**
 * Optimal operating point. `m_star` is meaningful only when `has_m_star`.
 */
typedef struct PptoOptimum {
  double beta_star;
  bool has_m_star;
  uint32_t m_star;
  double throughput_star;
  double p_out;
  double mean_attempts;
  /**
   * NaN for the unconstrained optimum.
   */
  double drop_rate;
  bool at_search_ceiling;
} PptoOptimum;

/**
 * Monte Carlo settings; see [`ppto_sim_config_default`].
 */
typedef struct PptoSimConfig {
  double window_radius_factor;
  uint64_t n_messages;
  uint64_t seed;
  double power_ratio;
  /**
   * Worker threads; results do not depend on it.
   */
  uint32_t threads;
} PptoSimConfig;

typedef struct PptoEstimate {
  double mean;
  double std_error;
  uint64_t n;
} PptoEstimate;

typedef struct PptoProtocolReport {
  struct PptoEstimate throughput;
  struct PptoEstimate drop_rate;
  struct PptoEstimate mean_attempts;
  struct PptoEstimate p_out;
} PptoProtocolReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failed call on this thread, or an empty
 * string. The pointer stays valid until the next call on the same thread.
 */
const char *ppto_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ppto_version(void);

/**
 * Creates a channel with path-loss exponent `alpha > 2`, link distance
 * `r0 > 0` and interferer density `lambda >= 0`.
 *
 * # Safety
 *
 * `out` must be null or valid for writing one pointer.
 */
enum PptoStatus ppto_channel_new(double alpha,
                                 double r0,
                                 double lambda,
                                 enum PptoLogBase log_base,
                                 struct PptoChannel **out);

/**
 * Releases a channel. Null is ignored.
 *
 * # Safety
 *
 * `channel` must be null or a handle from [`ppto_channel_new`] that has not
 * been freed.
 */
void ppto_channel_free(struct PptoChannel *channel);

/**
 * Per-attempt outage probability at threshold `beta`.
 *
 * # Safety
 *
 * `channel` must be null or a live handle; `out` null or writable.
 */
enum PptoStatus ppto_outage_probability(const struct PptoChannel *channel,
                                        double beta,
                                        double *out);

/**
 * Throughput of threshold `beta` with at most `m` retransmissions.
 *
 * # Safety
 *
 * `channel` must be null or a live handle; `out` null or writable.
 */
enum PptoStatus ppto_throughput(const struct PptoChannel *channel,
                                double beta,
                                uint32_t m,
                                double *out);

/**
 * Probability that all `1 + m` attempts fail.
 *
 * # Safety
 *
 * `channel` must be null or a live handle; `out` null or writable.
 */
enum PptoStatus ppto_drop_rate(const struct PptoChannel *channel,
                               double beta,
                               uint32_t m,
                               double *out);

/**
 * Threshold at which `1 + m` attempts drop exactly a fraction `epsilon`.
 *
 * # Safety
 *
 * `channel` must be null or a live handle; `out` null or writable.
 */
enum PptoStatus ppto_beta_star(const struct PptoChannel *channel,
                               double epsilon,
                               uint32_t m,
                               double *out);

/**
 * Best threshold and cap subject to drop rate `<= epsilon`. When `capped`
 * is true the cap may not exceed `m_cap`.
 *
 * # Safety
 *
 * `channel` must be null or a live handle; `out` null or writable.
 */
enum PptoStatus ppto_optimize_constrained(const struct PptoChannel *channel,
                                          double epsilon,
                                          bool capped,
                                          uint32_t m_cap,
                                          struct PptoOptimum *out);

/**
 * Threshold maximizing throughput without a drop-rate constraint.
 *
 * # Safety
 *
 * `channel` must be null or a live handle; `out` null or writable.
 */
enum PptoStatus ppto_optimize_unconstrained(const struct PptoChannel *channel,
                                            struct PptoOptimum *out);

/**
 * Default Monte Carlo settings for `seed`.
 */
struct PptoSimConfig ppto_sim_config_default(uint64_t seed);

/**
 * Monte Carlo estimate of the outage probability at threshold `beta`.
 *
 * # Safety
 *
 * `channel` and `config` must be null or valid; `out` null or writable.
 */
enum PptoStatus ppto_estimate_outage(const struct PptoChannel *channel,
                                     double beta,
                                     const struct PptoSimConfig *config,
                                     struct PptoEstimate *out);

/**
 * Simulates the retransmission protocol for `config.n_messages` messages.
 *
 * # Safety
 *
 * `channel` and `config` must be null or valid; `out` null or writable.
 */
enum PptoStatus ppto_simulate_protocol(const struct PptoChannel *channel,
                                       double beta,
                                       uint32_t m,
                                       const struct PptoSimConfig *config,
                                       struct PptoProtocolReport *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PPTO_H */
