#ifndef BIKENET_H
#define BIKENET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum BikenetStatus {
  BIKENET_STATUS_OK = 0,
  BIKENET_STATUS_NULL_POINTER = 1,
  BIKENET_STATUS_INVALID_UTF8 = 2,
  BIKENET_STATUS_CONFIG_ERROR = 3,
  BIKENET_STATUS_INVALID_PARAMS = 4,
  BIKENET_STATUS_RESOURCE_LIMIT = 5,
  BIKENET_STATUS_NON_CONVERGENCE = 6,
  BIKENET_STATUS_NUMERICAL_ERROR = 7,
  BIKENET_STATUS_IO_ERROR = 8,
  BIKENET_STATUS_INDEX_ERROR = 9,
  BIKENET_STATUS_BUFFER_TOO_SMALL = 10,
  BIKENET_STATUS_PANIC = 11,
} BikenetStatus;

typedef enum BikenetConvention {
  BIKENET_CONVENTION_LITERAL = 0,
  BIKENET_CONVENTION_STANDARD = 1,
} BikenetConvention;

/**
 * A probability vector over a model's state space.
 */
typedef struct BikenetDistribution BikenetDistribution;

/**
 * A validated model with its enumerated state space.
 */
typedef struct BikenetModel BikenetModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Parses a TOML config, validates it and enumerates its state space.
 *
 * # Safety
 * `config` must be a NUL-terminated string; `out` must be writable.
 */
enum BikenetStatus bikenet_model_from_toml(const char *config, struct BikenetModel **out);

/**
 * # Safety
 * `model` must come from [`bikenet_model_from_toml`] or be null.
 */
void bikenet_model_free(struct BikenetModel *model);

/**
 * Number of states and length of each state vector.
 *
 * # Safety
 * Pointers must be valid.
 */
enum BikenetStatus bikenet_model_shape(const struct BikenetModel *model,
                                       size_t *states,
                                       size_t *dim,
                                       size_t *stations);

/**
 * Writes 1 to `full_reachable` when some station can become full (`NC >= K`).
 *
 * # Safety
 * Pointers must be valid.
 */
enum BikenetStatus bikenet_model_regime(const struct BikenetModel *model, int32_t *full_reachable);

/**
 * Copies the component vector of state `rank` into `buf` (length `len >= dim`).
 *
 * # Safety
 * `buf` must hold `len` elements.
 */
enum BikenetStatus bikenet_model_state(const struct BikenetModel *model,
                                       size_t rank,
                                       uint32_t *buf,
                                       size_t len);

/**
 * Rank of a component vector.
 *
 * # Safety
 * `comps` must hold `len` elements.
 */
enum BikenetStatus bikenet_model_rank(const struct BikenetModel *model,
                                      const uint32_t *comps,
                                      size_t len,
                                      size_t *out);

/**
 * Exact stationary distribution from the CTMC.
 *
 * # Safety
 * `out` must be writable.
 */
enum BikenetStatus bikenet_solve_ctmc(const struct BikenetModel *model,
                                      struct BikenetDistribution **out);

/**
 * Product form with fixed redirect probabilities `beta` (one per station).
 * A null `beta` means all zeros.
 *
 * # Safety
 * `beta` must hold `beta_len` elements when non-null; `out` must be writable.
 */
enum BikenetStatus bikenet_solve_product_form(const struct BikenetModel *model,
                                              enum BikenetConvention convention,
                                              const double *beta,
                                              size_t beta_len,
                                              struct BikenetDistribution **out);

/**
 * Product form with self-consistent redirect probabilities. `converged`
 * receives 1 on convergence, 0 otherwise (the result is still returned).
 *
 * # Safety
 * Pointers must be valid.
 */
enum BikenetStatus bikenet_solve_product_form_fixed_point(const struct BikenetModel *model,
                                                          enum BikenetConvention convention,
                                                          int32_t *converged,
                                                          struct BikenetDistribution **out);

/**
 * Simulated occupancy distribution (mean over replications).
 *
 * # Safety
 * `out` must be writable.
 */
enum BikenetStatus bikenet_simulate(const struct BikenetModel *model,
                                    double horizon,
                                    double warmup,
                                    size_t replications,
                                    uint64_t seed,
                                    struct BikenetDistribution **out);

/**
 * # Safety
 * `dist` must come from a `bikenet_solve_*` call or be null.
 */
void bikenet_distribution_free(struct BikenetDistribution *dist);

/**
 * Copies the probabilities (rank order) into `buf`, which must hold at
 * least the state count.
 *
 * # Safety
 * `buf` must hold `len` elements.
 */
enum BikenetStatus bikenet_distribution_probabilities(const struct BikenetDistribution *dist,
                                                      double *buf,
                                                      size_t len);

/**
 * Empty, full and problematic probability of one station.
 *
 * # Safety
 * Pointers must be valid.
 */
enum BikenetStatus bikenet_problematic(const struct BikenetModel *model,
                                       const struct BikenetDistribution *dist,
                                       size_t station,
                                       double *empty,
                                       double *full,
                                       double *problematic);

/**
 * Mean occupancy per station into `stations_buf` (length `len >= N`), and
 * mean bikes on roads into `q0`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum BikenetStatus bikenet_mean_queues(const struct BikenetModel *model,
                                       const struct BikenetDistribution *dist,
                                       double *stations_buf,
                                       size_t len,
                                       double *q0);

/**
 * Total-variation distance between two distributions over the same space.
 *
 * # Safety
 * Pointers must be valid.
 */
enum BikenetStatus bikenet_total_variation(const struct BikenetDistribution *a,
                                           const struct BikenetDistribution *b,
                                           double *out);

/**
 * Copies the calling thread's last error message (NUL-terminated,
 * truncated to fit) into `buf` and returns the full message length in
 * bytes, excluding the terminator. Pass a null `buf` to query the length.
 *
 * # Safety
 * `buf` must hold `len` bytes when non-null.
 */
size_t bikenet_last_error_message(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *bikenet_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BIKENET_H */
