#ifndef ROBUSTEXP_H
#define ROBUSTEXP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Status codes returned by every function.
 */
typedef enum RxStatus {
  RX_STATUS_OK = 0,
  RX_STATUS_NULL_POINTER = 1,
  RX_STATUS_INVALID_UTF8 = 2,
  RX_STATUS_PARSE = 3,
  RX_STATUS_DIMENSION = 4,
  RX_STATUS_DOMAIN = 5,
  RX_STATUS_ARGUMENT = 6,
  RX_STATUS_PRECONDITION = 7,
  RX_STATUS_NUMERIC = 8,
  RX_STATUS_CONSISTENCY = 9,
  RX_STATUS_CAPACITY = 10,
  RX_STATUS_PANIC = 11,
} RxStatus;

/**
 * A nonlinear Markov chain on a finite state space.
 */
typedef struct RxChain RxChain;

/**
 * An expectation model.
 */
typedef struct RxModel RxModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *rx_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *rx_version(void);

/**
 * Builds a model from a JSON model document.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out_model` a valid pointer.
 */
enum RxStatus rx_model_from_json(const char *json, struct RxModel **out_model);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `model` must come from [`rx_model_from_json`] and not be freed twice.
 */
void rx_model_free(struct RxModel *model);

/**
 * Number of states of the model's space.
 *
 * # Safety
 * Pointers must be valid.
 */
enum RxStatus rx_model_state_count(const struct RxModel *model, size_t *out_len);

/**
 * `E(X)` for `x` of length `len`.
 *
 * # Safety
 * `x` must point to `len` doubles; other pointers must be valid.
 */
enum RxStatus rx_evaluate(const struct RxModel *model,
                          const double *x,
                          size_t len,
                          double *out_value);

/**
 * Penalty-form evaluation returning the value and the smallest maximizing
 * scenario index.
 *
 * # Safety
 * `x` must point to `len` doubles; other pointers must be valid.
 */
enum RxStatus rx_dual_eval(const struct RxModel *model,
                           const double *x,
                           size_t len,
                           double *out_value,
                           size_t *out_argmax);

/**
 * Convex conjugate at `mu`. `out_value` receives the exact value for penalty
 * models (possibly `+inf`) and the sup over the ball `|X| <= radius` otherwise.
 *
 * # Safety
 * `mu` must point to `len` doubles; other pointers must be valid.
 */
enum RxStatus rx_conjugate(const struct RxModel *model,
                           const double *mu,
                           size_t len,
                           double radius,
                           double *out_value);

/**
 * Whether `mu` lies in the convex hull of a sublinear model's scenarios.
 * `out_separation` is `mu f - max_k mu_k f` for a separating `f` in
 * `[-1, 1]^n` (0 for members).
 *
 * # Safety
 * `mu` must point to `len` doubles; other pointers must be valid.
 */
enum RxStatus rx_membership(const struct RxModel *model,
                            const double *mu,
                            size_t len,
                            bool *out_member,
                            double *out_separation);

/**
 * Runs the continuity-gap construction on `{0,1}` with the Dirac path family
 * at `path` (`full == false`) or the full-simplex family (`full == true`).
 *
 * # Safety
 * `path` must point to `path_len` values; other pointers must be valid.
 */
enum RxStatus rx_gap_demo(const size_t *path,
                          size_t path_len,
                          size_t depth,
                          bool full,
                          double *out_hat,
                          double *out_bar_limit);

/**
 * Robust expectation of a registered function (`one`, `last`,
 * `square_last`, `cos_last`) over a drift/volatility box.
 *
 * # Safety
 * `times` must point to `n_times` doubles; `function` must be a
 * NUL-terminated string; other pointers must be valid.
 */
enum RxStatus rx_gaussian_robust_eval(const double *times,
                                      size_t n_times,
                                      double mu_lo,
                                      double mu_hi,
                                      double sigma_lo,
                                      double sigma_hi,
                                      const char *function,
                                      size_t order,
                                      size_t grid_per_axis,
                                      bool refine,
                                      double *out_value);

/**
 * Builds a chain from `{"base", "operator", "mu0", "horizon"}`.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out_chain` a valid pointer.
 */
enum RxStatus rx_chain_from_json(const char *json, struct RxChain **out_chain);

/**
 * Releases a chain. Null is ignored.
 *
 * # Safety
 * `chain` must come from [`rx_chain_from_json`] and not be freed twice.
 */
void rx_chain_free(struct RxChain *chain);

/**
 * Number of states per coordinate.
 *
 * # Safety
 * Pointers must be valid.
 */
enum RxStatus rx_chain_state_count(const struct RxChain *chain, size_t *out_len);

/**
 * Last time index of the chain.
 *
 * # Safety
 * Pointers must be valid.
 */
enum RxStatus rx_chain_horizon(const struct RxChain *chain, size_t *out_horizon);

/**
 * `E_J(f)` for the time set `j` (strictly increasing) and `f` tabulated over
 * `S^|J|` with the last coordinate fastest.
 *
 * # Safety
 * `j` must point to `j_len` values and `f` to `f_len` doubles; other
 * pointers must be valid.
 */
enum RxStatus rx_chain_evaluate(const struct RxChain *chain,
                                const uint32_t *j,
                                size_t j_len,
                                const double *f,
                                size_t f_len,
                                double *out_value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ROBUSTEXP_H */
