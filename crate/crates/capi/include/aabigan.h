#ifndef AABIGAN_H
#define AABIGAN_H

/* Generated by cbindgen from aabigan-capi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every C-ABI call.
 */
typedef enum AabiganStatus {
  AABIGAN_STATUS_OK = 0,
  /**
   * A pointer argument was null.
   */
  AABIGAN_STATUS_NULL_POINTER = 1,
  /**
   * Arguments violate a precondition (shape, emptiness, degenerate
   * scheme, ...).
   */
  AABIGAN_STATUS_INVALID_INPUT = 2,
  /**
   * The metric is undefined on this input (e.g. single-class AUROC).
   */
  AABIGAN_STATUS_UNDEFINED_METRIC = 3,
  /**
   * File system problem.
   */
  AABIGAN_STATUS_IO = 4,
  /**
   * Stored data failed validation.
   */
  AABIGAN_STATUS_CORRUPT_DATA = 5,
  /**
   * Anything else.
   */
  AABIGAN_STATUS_INTERNAL = 6,
} AabiganStatus;

/**
 * Opaque handle to a loaded model.
 */
typedef struct AabiganModel AabiganModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the last error message (UTF-8, NUL-terminated) into `buf`.
 * Returns the full message length in bytes, excluding the NUL; a return
 * value >= `len` means the message was truncated.
 *
 * # Safety
 * `buf` must point to at least `len` writable bytes (or be null, in
 * which case only the length is reported).
 */
size_t aabigan_last_error_message(char *buf, size_t len);

/**
 * Discriminator loss with targets (a, (a+b)/2, b) over the three score
 * populations. `neg_scores` may be null/empty. If `grad_*` pointers are
 * non-null they receive per-score gradients (same lengths as inputs).
 *
 * # Safety
 * Pointers must reference arrays of the stated lengths.
 */
enum AabiganStatus aabigan_aa_discriminator_loss(const double *pos_scores,
                                                 size_t n_pos,
                                                 const double *neg_scores,
                                                 size_t n_neg,
                                                 const double *gen_scores,
                                                 size_t n_gen,
                                                 double a,
                                                 double b,
                                                 double c,
                                                 double *out_loss,
                                                 double *grad_pos,
                                                 double *grad_neg,
                                                 double *grad_gen);

/**
 * Generator/encoder loss: every population regresses to `c`.
 *
 * # Safety
 * Pointers must reference arrays of the stated lengths.
 */
enum AabiganStatus aabigan_aa_generator_encoder_loss(const double *pos_scores,
                                                     size_t n_pos,
                                                     const double *neg_scores,
                                                     size_t n_neg,
                                                     const double *gen_scores,
                                                     size_t n_gen,
                                                     double a,
                                                     double b,
                                                     double c,
                                                     double *out_loss,
                                                     double *grad_pos,
                                                     double *grad_neg,
                                                     double *grad_gen);

/**
 * Pair-discriminator augmentation loss with targets (a, (a+b)/2, b) on
 * (x,x), (x-,x-) and (x, x̂) scores. `real_neg` may be null/empty;
 * `real_pos` and `recon` must be equally long.
 *
 * # Safety
 * Pointers must reference arrays of the stated lengths.
 */
enum AabiganStatus aabigan_recon_discriminator_loss(const double *real_pos,
                                                    size_t n_real_pos,
                                                    const double *real_neg,
                                                    size_t n_real_neg,
                                                    const double *recon,
                                                    size_t n_recon,
                                                    double a,
                                                    double b,
                                                    double c,
                                                    double *out_loss);

/**
 * Pair-discriminator generator/encoder loss: all pair populations
 * regress to `c`.
 *
 * # Safety
 * Pointers must reference arrays of the stated lengths.
 */
enum AabiganStatus aabigan_recon_generator_encoder_loss(const double *real_pos,
                                                        size_t n_real_pos,
                                                        const double *real_neg,
                                                        size_t n_real_neg,
                                                        const double *recon,
                                                        size_t n_recon,
                                                        double a,
                                                        double b,
                                                        double c,
                                                        double *out_loss);

/**
 * Tie-aware AUROC; `labels` are 0 (normal) / 1 (anomaly).
 *
 * # Safety
 * `scores` and `labels` must hold `n` elements; `out` must be writable.
 */
enum AabiganStatus aabigan_auroc(const double *scores,
                                 const uint8_t *labels,
                                 size_t n,
                                 double *out);

/**
 * Frechet distance between Gaussian fits of two row-major feature
 * matrices (`n_* x dim`).
 *
 * # Safety
 * Matrices must hold `n_real * dim` and `n_gen * dim` doubles.
 */
enum AabiganStatus aabigan_fid(const double *features_real,
                               size_t n_real,
                               const double *features_gen,
                               size_t n_gen,
                               size_t dim,
                               double *out);

/**
 * Closed-form optimal discriminator per cell over a flat grid of
 * `n_cells` masses. `p_minus` may be null. Cells with zero total mass
 * come back as NaN.
 *
 * # Safety
 * Mass arrays must hold `n_cells` doubles; `out` must be writable for
 * `n_cells` doubles.
 */
enum AabiganStatus aabigan_optimal_discriminator(const double *p_plus,
                                                 const double *p_minus,
                                                 const double *p_g,
                                                 size_t n_cells,
                                                 double a,
                                                 double b,
                                                 double c,
                                                 double *out);

/**
 * Pearson chi-square divergence `sum (p - q)^2 / q` over raw
 * non-negative measures.
 *
 * # Safety
 * `p` and `q` must hold `n` doubles; `out` must be writable.
 */
enum AabiganStatus aabigan_pearson_chi2(const double *p, const double *q, size_t n, double *out);

/**
 * Run the full theory verification suite; `out_all_passed` receives 1 if
 * every check passed.
 *
 * # Safety
 * `out_all_passed` must be writable.
 */
enum AabiganStatus aabigan_verify(uint64_t seed, uint8_t *out_all_passed);

/**
 * Load a model from a checkpoint directory written by the trainer.
 *
 * # Safety
 * `path` must be a NUL-terminated UTF-8 string; `out` must be writable.
 */
enum AabiganStatus aabigan_model_load(const char *path, struct AabiganModel **out);

/**
 * Release a model handle. Null is a no-op.
 *
 * # Safety
 * `model` must be a pointer previously returned by `aabigan_model_load`.
 */
void aabigan_model_free(struct AabiganModel *model);

/**
 * Flattened per-sample input dimension the model expects.
 *
 * # Safety
 * `model` must be a live handle.
 */
size_t aabigan_model_input_dim(const struct AabiganModel *model);

/**
 * Latent-code dimension.
 *
 * # Safety
 * `model` must be a live handle.
 */
size_t aabigan_model_latent_dim(const struct AabiganModel *model);

/**
 * Squared reconstruction error per sample; `x` is `n x input_dim`
 * row-major, `out` receives `n` doubles.
 *
 * # Safety
 * Buffers must match the stated sizes.
 */
enum AabiganStatus aabigan_model_recon_error(const struct AabiganModel *model,
                                             const float *x,
                                             size_t n,
                                             double *out);

/**
 * Latent-code norm per sample.
 *
 * # Safety
 * Buffers must match the stated sizes.
 */
enum AabiganStatus aabigan_model_latent_norm(const struct AabiganModel *model,
                                             const float *x,
                                             size_t n,
                                             double *out);

/**
 * Reconstruct a batch: `out` receives `n x input_dim` floats.
 *
 * # Safety
 * Buffers must match the stated sizes.
 */
enum AabiganStatus aabigan_model_reconstruct(const struct AabiganModel *model,
                                             const float *x,
                                             size_t n,
                                             float *out);

/**
 * Encode a batch into latent codes: `out` receives `n x latent_dim`
 * floats.
 *
 * # Safety
 * Buffers must match the stated sizes.
 */
enum AabiganStatus aabigan_model_encode(const struct AabiganModel *model,
                                        const float *x,
                                        size_t n,
                                        float *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AABIGAN_H */
