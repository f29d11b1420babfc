#ifndef HOLOCLASS_H
#define HOLOCLASS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HcKind {
  HcKind_Cosine = 0,
  HcKind_Holomorphic = 1,
} HcKind;

typedef enum HcStatus {
  HcStatus_Ok = 0,
  HcStatus_NullPointer = 1,
  HcStatus_InvalidArgument = 2,
  HcStatus_Io = 3,
  HcStatus_Model = 4,
  HcStatus_Panic = 5,
} HcStatus;

/**
 * Feature bank handle.
 */
typedef struct HcBank HcBank;

/**
 * Classifier handle.
 */
typedef struct HcClassifier HcClassifier;

/**
 * PGD settings; a negative `target` means untargeted.
 */
typedef struct HcAttackConfig {
  double radius;
  size_t steps;
  double step_size;
  int64_t target;
  bool aware_extra;
  uint64_t seed;
} HcAttackConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *hc_last_error(void);

/**
 * Builds the built-in template bank for a `rows` x `cols` image.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum HcStatus hc_bank_default(size_t rows, size_t cols, enum HcKind kind, struct HcBank **out);

/**
 * Builds a bank from a template config file.
 *
 * # Safety
 * `path` must be a nul-terminated string and `out` valid for writes.
 */
enum HcStatus hc_bank_from_template_file(const char *template_path,
                                         size_t rows,
                                         size_t cols,
                                         struct HcBank **out);

/**
 * Number of features, or 0 for a null handle.
 *
 * # Safety
 * `bank` must be null or a live handle.
 */
size_t hc_bank_len(const struct HcBank *bank);

/**
 * # Safety
 * `bank` must be null or a handle not yet freed.
 */
void hc_bank_free(struct HcBank *bank);

/**
 * Loads a checkpoint written for `bank`. The classifier keeps its own
 * reference to the bank, so the bank handle may be freed afterwards.
 *
 * # Safety
 * `bank` must be a live handle, `path` nul-terminated, `out` writable.
 */
enum HcStatus hc_classifier_load(const struct HcBank *bank,
                                 const char *checkpoint_path,
                                 struct HcClassifier **out);

/**
 * # Safety
 * `c` must be a live handle and `path` nul-terminated.
 */
enum HcStatus hc_classifier_save(const struct HcClassifier *c, const char *checkpoint_path);

/**
 * Number of true labels (the zero-class excluded), or 0 for null.
 *
 * # Safety
 * `c` must be null or a live handle.
 */
size_t hc_classifier_num_labels(const struct HcClassifier *c);

/**
 * # Safety
 * `c` must be null or a live handle.
 */
bool hc_classifier_has_zero_class(const struct HcClassifier *c);

/**
 * # Safety
 * `c` must be null or a handle not yet freed.
 */
void hc_classifier_free(struct HcClassifier *c);

/**
 * Writes the logits (zero-class last, if attached) into `logits`.
 * `written` receives the logit count even when `capacity` is too small, in
 * which case nothing is written and `InvalidArgument` is returned.
 *
 * # Safety
 * `pixels` must hold `len` values, `logits` `capacity` slots; `written`
 * must be writable.
 */
enum HcStatus hc_classifier_forward(const struct HcClassifier *c,
                                    const double *pixels,
                                    size_t len,
                                    double *logits,
                                    size_t capacity,
                                    size_t *written);

/**
 * Predicted label; equals the label count when the zero-class wins.
 *
 * # Safety
 * `pixels` must hold `len` values and `label` be writable.
 */
enum HcStatus hc_classifier_predict(const struct HcClassifier *c,
                                    const double *pixels,
                                    size_t len,
                                    size_t *label);

/**
 * Whether every class magnitude is below 1 (holomorphic classifiers with a
 * zero-class only).
 *
 * # Safety
 * `pixels` must hold `len` values and `inside` be writable.
 */
enum HcStatus hc_in_polyhedron(const struct HcClassifier *c,
                               const double *pixels,
                               size_t len,
                               bool *inside);

/**
 * Mirrors `x` back into `[0, 1]` (triangle wave).
 */
double hc_reflect_project(double x);

/**
 * Default PGD settings: radius 0.3, 40 steps of 0.01, untargeted,
 * zero-class in the loss, seed 0.
 */
struct HcAttackConfig hc_attack_config_default(void);

/**
 * Runs PGD from `pixels` (true label `label`) and writes the adversarial
 * example into `out`, which must hold `len` values.
 *
 * # Safety
 * `pixels` and `out` must hold `len` values; `cfg` must be readable.
 */
enum HcStatus hc_pgd(const struct HcClassifier *c,
                     const double *pixels,
                     size_t len,
                     size_t label,
                     const struct HcAttackConfig *cfg,
                     double *out);

/**
 * Student-t quantile with `nu` degrees of freedom.
 *
 * # Safety
 * `out` must be writable.
 */
enum HcStatus hc_t_inverse_cdf(uint32_t nu, double p, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HOLOCLASS_H */
