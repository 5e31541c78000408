#ifndef AFFIRM_H
#define AFFIRM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum AffirmStatus {
  AFFIRM_STATUS_OK = 0,
  AFFIRM_STATUS_NULL_POINTER = 1,
  AFFIRM_STATUS_INVALID_UTF8 = 2,
  AFFIRM_STATUS_INVALID_ARGUMENT = 3,
  AFFIRM_STATUS_UNSUPPORTED_LANGUAGE = 4,
  AFFIRM_STATUS_IO = 5,
  AFFIRM_STATUS_MODEL = 6,
  AFFIRM_STATUS_BUFFER_TOO_SMALL = 7,
  AFFIRM_STATUS_PANIC = 8,
  AFFIRM_STATUS_INTERNAL = 9,
} AffirmStatus;

/**
 * Opaque cue detector handle.
 */
typedef struct AffirmDetector AffirmDetector;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer stays
 * valid until the next affirm call on the same thread.
 */
const char *affirm_last_error(void);

/**
 * Rule detector over the bundled lexicons. Never NULL.
 */
struct AffirmDetector *affirm_detector_new_rules(void);

/**
 * Loads a trained model file into a new detector stored in `*out`.
 *
 * # Safety
 * `model_path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum AffirmStatus affirm_detector_new_crf(const char *model_path, struct AffirmDetector **out);

/**
 * # Safety
 * `detector` must be NULL or a handle not yet freed.
 */
void affirm_detector_free(struct AffirmDetector *detector);

/**
 * # Safety
 * String arguments must be NUL-terminated; `out` must be writable.
 */
enum AffirmStatus affirm_has_negation(const struct AffirmDetector *detector,
                                      const char *sentence,
                                      const char *lang,
                                      bool *out);

/**
 * Tags `sentence` and writes the tagged sentence as JSON to `*out_json`.
 * Free the string with [`affirm_string_free`].
 *
 * # Safety
 * String arguments must be NUL-terminated; `out_json` must be writable.
 */
enum AffirmStatus affirm_tag_json(const struct AffirmDetector *detector,
                                  const char *sentence,
                                  const char *lang,
                                  char **out_json);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library, not yet freed.
 */
void affirm_string_free(char *s);

/**
 * # Safety
 * String arguments must be NUL-terminated; `out` must be writable.
 */
enum AffirmStatus affirm_token_count(const char *sentence, const char *lang, size_t *out);

/**
 * Corpus BLEU-2 over `n` aligned candidate/reference strings.
 *
 * # Safety
 * Both arrays must hold `n` NUL-terminated strings; `out` must be writable.
 */
enum AffirmStatus affirm_bleu2(const char *const *candidates,
                               const char *const *references,
                               size_t n,
                               double *out);

/**
 * Corpus chrF++ over `n` aligned candidate/reference strings.
 *
 * # Safety
 * Both arrays must hold `n` NUL-terminated strings; `out` must be writable.
 */
enum AffirmStatus affirm_chrfpp(const char *const *candidates,
                                const char *const *references,
                                size_t n,
                                double *out);

/**
 * Writes the per-epoch auxiliary counts of a blend plan into `out`, which has
 * room for `capacity` values. `*written` receives the number of epochs
 * (`m + n + k`) even when the buffer is too small.
 *
 * # Safety
 * `out` must point to `capacity` writable values (or be NULL when
 * `capacity` is 0); `written` must be writable.
 */
enum AffirmStatus affirm_blend_counts(size_t m,
                                      size_t n,
                                      size_t k,
                                      double factor,
                                      size_t n_ours,
                                      size_t *out,
                                      size_t capacity,
                                      size_t *written);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AFFIRM_H */
