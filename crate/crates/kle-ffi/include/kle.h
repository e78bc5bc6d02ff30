/* Generated by cbindgen from crates/kle-ffi; do not edit. */

#ifndef KLE_H
#define KLE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum KleStatus {
  KLE_STATUS_OK = 0,
  KLE_STATUS_INVALID_ARGUMENT = 1,
  KLE_STATUS_NUMERIC_ERROR = 2,
  KLE_STATUS_INADMISSIBLE_KERNEL = 3,
  KLE_STATUS_DEGENERATE_MODE = 4,
  KLE_STATUS_INSUFFICIENT_SPECTRUM = 5,
  KLE_STATUS_OUT_OF_DOMAIN = 6,
  KLE_STATUS_NULL_POINTER = 7,
  KLE_STATUS_BUFFER_TOO_SMALL = 8,
  KLE_STATUS_PANIC = 9,
} KleStatus;

typedef enum KleRuleKind {
  KLE_RULE_KIND_TRAPEZOID = 0,
  KLE_RULE_KIND_GAUSS_LEGENDRE = 1,
} KleRuleKind;

typedef enum KleKernelKind {
  // `sigma^2 exp(-|x - y| / ell)`.
  KLE_KERNEL_KIND_EXPONENTIAL = 0,
  // `sigma^2`.
  KLE_KERNEL_KIND_CONSTANT = 1,
  // `min(x, y)`; `sigma` and `ell` are ignored.
  KLE_KERNEL_KIND_BROWNIAN_MIN = 2,
} KleKernelKind;

// Eigenpairs of a discretized covariance operator.
typedef struct KleDecomposition KleDecomposition;

// Sampled realizations.
typedef struct KleEnsemble KleEnsemble;

// Quadrature rule handle.
typedef struct KleRule KleRule;

// Truncated expansion ready for sampling.
typedef struct KleTruncated KleTruncated;

// Covariance kernel description passed by value.
typedef struct KleKernel {
  enum KleKernelKind kind;
  double sigma;
  // Correlation length, used by `Exponential` only.
  double ell;
} KleKernel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the calling thread's last error message into `buf` (NUL-terminated,
// truncated to `len - 1` bytes) and returns the full message length in bytes
// excluding the terminator. Returns 0 when the last call succeeded.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t kle_last_error_message(char *buf, size_t len);

// Static, NUL-terminated name of a status code.
const char *kle_status_name(enum KleStatus status);

// Creates an `n`-point rule on `[a, b]`.
//
// # Safety
// `out` must be a valid pointer to a handle slot.
enum KleStatus kle_rule_new(enum KleRuleKind kind,
                            double a,
                            double b,
                            size_t n,
                            struct KleRule **out);

// Number of nodes; 0 for a null handle.
//
// # Safety
// `rule` must be null or a live handle.
size_t kle_rule_len(const struct KleRule *rule);

// # Safety
// `rule` must be a live handle; `out` must hold `len` doubles.
enum KleStatus kle_rule_nodes(const struct KleRule *rule, double *out, size_t len);

// # Safety
// `rule` must be a live handle; `out` must hold `len` doubles.
enum KleStatus kle_rule_weights(const struct KleRule *rule, double *out, size_t len);

// # Safety
// `rule` must be null or a handle from `kle_rule_new` not yet freed.
void kle_rule_free(struct KleRule *rule);

// Leading `m` eigenpairs of the Nystrom-discretized covariance operator.
//
// # Safety
// `kernel` and `rule` must be valid; `out` must be a valid handle slot.
enum KleStatus kle_nystrom_eigen(const struct KleKernel *kernel,
                                 const struct KleRule *rule,
                                 size_t m,
                                 struct KleDecomposition **out);

// # Safety
// `dec` must be null or a live handle.
size_t kle_decomposition_num_modes(const struct KleDecomposition *dec);

// Eigenvalues in descending order.
//
// # Safety
// `dec` must be a live handle; `out` must hold `len` doubles.
enum KleStatus kle_decomposition_lambdas(const struct KleDecomposition *dec,
                                         double *out,
                                         size_t len);

// Nystrom extension of eigenfunction `mode` (0-based) at `x`.
//
// # Safety
// `dec` must be a live handle; `out` must point to one double.
enum KleStatus kle_decomposition_extend(const struct KleDecomposition *dec,
                                        size_t mode,
                                        double x,
                                        double *out);

// # Safety
// `dec` must be null or a handle from `kle_nystrom_eigen` not yet freed.
void kle_decomposition_free(struct KleDecomposition *dec);

// Smallest rank whose cumulative eigenvalue sum reaches
// `threshold * total_variance`.
//
// # Safety
// `lambdas` must point to `len` doubles; `out` to one `size_t`.
enum KleStatus kle_select_rank(const double *lambdas,
                               size_t len,
                               double total_variance,
                               double threshold,
                               size_t *out);

// Rank-`rank` expansion with constant mean `mean`.
//
// # Safety
// `kernel` and `rule` must be valid; `out` must be a valid handle slot.
enum KleStatus kle_truncated_with_rank(const struct KleKernel *kernel,
                                       const struct KleRule *rule,
                                       double mean,
                                       size_t rank,
                                       struct KleTruncated **out);

// Expansion keeping the fewest modes that capture `threshold` of the
// total variance.
//
// # Safety
// `kernel` and `rule` must be valid; `out` must be a valid handle slot.
enum KleStatus kle_truncated_with_threshold(const struct KleKernel *kernel,
                                            const struct KleRule *rule,
                                            double mean,
                                            double threshold,
                                            struct KleTruncated **out);

// # Safety
// `kle` must be null or a live handle.
size_t kle_truncated_rank(const struct KleTruncated *kle);

// Captured variance fraction; NaN for a null handle.
//
// # Safety
// `kle` must be null or a live handle.
double kle_truncated_rho(const struct KleTruncated *kle);

// # Safety
// `kle` must be null or a handle not yet freed. Ensembles drawn from it stay
// valid after this call.
void kle_truncated_free(struct KleTruncated *kle);

// Draws `count` realizations; identical `seed` gives identical draws.
//
// # Safety
// `kle` must be a live handle; `out` must be a valid handle slot.
enum KleStatus kle_sample(const struct KleTruncated *kle,
                          size_t count,
                          uint64_t seed,
                          struct KleEnsemble **out);

// # Safety
// `ens` must be null or a live handle.
size_t kle_ensemble_len(const struct KleEnsemble *ens);

// Realization `index` at `x`.
//
// # Safety
// `ens` must be a live handle; `out` must point to one double.
enum KleStatus kle_ensemble_evaluate(const struct KleEnsemble *ens,
                                     size_t index,
                                     double x,
                                     double *out);

// Realization `index` at every quadrature node.
//
// # Safety
// `ens` must be a live handle; `out` must hold `len` doubles.
enum KleStatus kle_ensemble_nodal(const struct KleEnsemble *ens,
                                  size_t index,
                                  double *out,
                                  size_t len);

// # Safety
// `ens` must be null or a handle from `kle_sample` not yet freed.
void kle_ensemble_free(struct KleEnsemble *ens);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KLE_H */
