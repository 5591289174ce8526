#ifndef RISKSHARE_H
#define RISKSHARE_H

/* Generated by cbindgen from the riskshare-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status code returned by every fallible function in this API.
typedef enum {
  // Success; `out` parameters hold the results.
  RS_STATUS_OK = 0,
  // A required pointer argument was null.
  RS_STATUS_NULL_POINTER = 1,
  // A string argument was not valid UTF-8.
  RS_STATUS_INVALID_UTF8 = 2,
  // Invalid argument, configuration, or input file content.
  RS_STATUS_DOMAIN = 3,
  // A model pair or triple violates the integrability assumptions.
  RS_STATUS_INFEASIBLE = 4,
  // A numerical routine failed to converge, or the sample was degenerate.
  RS_STATUS_NUMERICAL = 5,
  // An I/O failure.
  RS_STATUS_IO = 6,
  // An internal invariant was violated (a bug; please report it).
  RS_STATUS_PANIC = 7,
} RsStatus;

// Opaque handle to an immutable model ensemble (candidates plus counterparty).
typedef struct RsEnsemble RsEnsemble;

// Opaque handle to immutable market parameters.
typedef struct RsMarket RsMarket;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Returns the library version as a static nul-terminated string.
const char *rs_version(void);

// Returns the message for the most recent failure on this thread, or an
// empty string when the last call succeeded. The pointer is valid until the
// next call into this library on the same thread.
const char *rs_last_error_message(void);

// Parses an ensemble from its JSON document (fields `models`, `counterparty`,
// `weights`, `weight_counterparty`). On success writes a handle the caller
// must release with `rs_ensemble_free`.
//
// # Safety
// `json` must be a valid nul-terminated C string; `out` must be a valid
// pointer.
RsStatus rs_ensemble_parse_json(const char *json, RsEnsemble **out);

// Releases an ensemble handle. Null is accepted and ignored.
//
// # Safety
// `handle` must be null or a pointer produced by `rs_ensemble_parse_json`
// that has not been freed yet.
void rs_ensemble_free(RsEnsemble *handle);

// Writes the number of candidate models (the counterparty is not counted).
//
// # Safety
// `handle` must be a live ensemble handle; `out` must be a valid pointer.
RsStatus rs_ensemble_n_models(const RsEnsemble *handle, size_t *out);

// Writes the state-vector length expected by `rs_alpha_star` and
// `rs_value_function`: candidates plus the counterparty.
//
// # Safety
// `handle` must be a live ensemble handle; `out` must be a valid pointer.
RsStatus rs_ensemble_n_entries(const RsEnsemble *handle, size_t *out);

// Writes true when every (counterparty, entry) pair and entry pair satisfies
// the second- and third-order integrability assumptions.
//
// # Safety
// `handle` must be a live ensemble handle; `out_feasible` must be a valid
// pointer.
RsStatus rs_ensemble_feasible(const RsEnsemble *handle, bool *out_feasible);

// Parses market parameters from their JSON document (keys `c`, `eta`,
// `theta`, `x0`, `y0`, `T`). On success writes a handle the caller must
// release with `rs_market_free`.
//
// # Safety
// `json` must be a valid nul-terminated C string; `out` must be a valid
// pointer.
RsStatus rs_market_parse_json(const char *json, RsMarket **out);

// Releases a market handle. Null is accepted and ignored.
//
// # Safety
// `handle` must be null or a pointer produced by `rs_market_parse_json`
// that has not been freed yet.
void rs_market_free(RsMarket *handle);

// Second-order cross integral of the counterparty density against a model
// density, for Gamma compensators given as (rate, shape, scale).
//
// # Safety
// `out` must be a valid pointer.
RsStatus rs_cross_integral_2(double rate_c,
                             double shape_c,
                             double scale_c,
                             double rate_k,
                             double shape_k,
                             double scale_k,
                             double *out);

// Principal branch of the Lambert W function.
//
// # Safety
// `out` must be a valid pointer.
RsStatus rs_lambert_w0(double x, double *out);

// Closed-form optimal safety loading when the counterparty model given as
// (rate, shape, scale) is the only model.
//
// # Safety
// `market` must be a live market handle; `out` must be a valid pointer.
RsStatus rs_eta_star_one_model(double rate,
                               double shape,
                               double scale,
                               const RsMarket *market,
                               double *out);

// Mean of the optimally-shared wealth at time `t` under `measure`
// ("qstar", "pc", or "pk:IDX" with 1-based IDX).
//
// # Safety
// `ensemble` and `market` must be live handles; `measure` must be a valid
// nul-terminated C string; `out` must be a valid pointer.
RsStatus rs_mean_x(const RsEnsemble *ensemble,
                   const RsMarket *market,
                   const char *measure,
                   double t,
                   double *out);

// Variance of the optimally-shared wealth at time `t` under the optimal
// measure Q*.
//
// # Safety
// `ensemble` and `market` must be live handles; `out` must be a valid
// pointer.
RsStatus rs_var_x_qstar(const RsEnsemble *ensemble, const RsMarket *market, double t, double *out);

// Counterparty-measure mean of the counterparty's wealth at time `t` when it
// charges safety loading `eta` (which may differ from the market's).
//
// # Safety
// `ensemble` and `market` must be live handles; `out` must be a valid
// pointer.
RsStatus rs_mean_y(const RsEnsemble *ensemble,
                   const RsMarket *market,
                   double t,
                   double eta,
                   double *out);

// Optimal ceded amount at time `t` for a claim of size `xi`, given the
// state vector `z` of length `z_len` (candidates then counterparty;
// `z_len` must equal the value from `rs_ensemble_n_entries`).
//
// # Safety
// `ensemble` and `market` must be live handles; `z` must be valid for reads
// of `z_len` doubles; `out` must be a valid pointer.
RsStatus rs_alpha_star(const RsEnsemble *ensemble,
                       const RsMarket *market,
                       double t,
                       double xi,
                       const double *z,
                       size_t z_len,
                       double *out);

// Optimal counterparty density distortion at claim size `xi`:
// (1 + eta) times the counterparty severity-times-rate density.
//
// # Safety
// `ensemble` and `market` must be live handles; `out` must be a valid
// pointer.
RsStatus rs_beta_star(const RsEnsemble *ensemble, const RsMarket *market, double xi, double *out);

// Insurer's value function at (t, x, z); `z_len` must equal the value from
// `rs_ensemble_n_entries`.
//
// # Safety
// `ensemble` and `market` must be live handles; `z` must be valid for reads
// of `z_len` doubles; `out` must be a valid pointer.
RsStatus rs_value_function(const RsEnsemble *ensemble,
                           const RsMarket *market,
                           double t,
                           double x,
                           const double *z,
                           size_t z_len,
                           double *out);

// Numerically maximizes the counterparty's expected terminal wealth over the
// safety loading in (0, `eta_max`]. Writes the optimizer and the achieved
// expectation.
//
// # Safety
// `ensemble` and `market` must be live handles; `out_eta_star` and
// `out_expected_wealth` must be valid pointers.
RsStatus rs_optimize_eta(const RsEnsemble *ensemble,
                         const RsMarket *market,
                         double eta_max,
                         double *out_eta_star,
                         double *out_expected_wealth);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RISKSHARE_H */
