#ifndef SPARSESCENE_H
#define SPARSESCENE_H

/* Generated by cbindgen from the sparsescene-ffi crate; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result of every fallible call.
 */
typedef enum SsStatus {
  SS_STATUS_OK = 0,
  SS_STATUS_NULL_ARGUMENT = 1,
  SS_STATUS_INVALID_UTF8 = 2,
  SS_STATUS_IO = 3,
  SS_STATUS_DATA = 4,
  SS_STATUS_NUMERICAL = 5,
  SS_STATUS_INVALID_ARGUMENT = 6,
  SS_STATUS_BUFFER_TOO_SMALL = 7,
  SS_STATUS_PANIC = 8,
} SsStatus;

/*
 Opaque handle to a loaded dictionary bank.
 */
typedef struct SsBank SsBank;

/*
 Decisions for a recording: one or two noise regions with their speaker.
 Indices are `-1` where a region or a decision is absent.
 */
typedef struct SsClassification {
  /*
   Start of the second region in seconds; the signal length when only one noise was found.
   */
  double transition_s;
  size_t segment_count;
  int64_t noise_index[2];
  int64_t speaker_index[2];
  /*
   Non-zero when the speaker decision of the region is weak.
   */
  int32_t low_confidence[2];
} SsClassification;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *ss_version(void);

/*
 Message of the last failed call on this thread, or null. Valid until the next call on this thread.
 */
const char *ss_last_error(void);

/*
 Load a bank file. On success `*out` owns a handle released with [`ss_bank_free`].

 # Safety
 `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum SsStatus ss_bank_load(const char *path, struct SsBank **out);

/*
 Release a handle from [`ss_bank_load`]; null is ignored.

 # Safety
 `bank` must come from [`ss_bank_load`] and not be used afterwards.
 */
void ss_bank_free(struct SsBank *bank);

/*
 Number of noise dictionaries, or 0 for a null handle.

 # Safety
 `bank` must be null or a live handle.
 */
size_t ss_bank_noise_count(const struct SsBank *bank);

/*
 Number of speaker dictionaries, or 0 for a null handle.

 # Safety
 `bank` must be null or a live handle.
 */
size_t ss_bank_speaker_count(const struct SsBank *bank);

/*
 Spectral dimension of every atom, or 0 for a null handle.

 # Safety
 `bank` must be null or a live handle.
 */
size_t ss_bank_dim(const struct SsBank *bank);

/*
 Label of noise dictionary `index`; see [`ss_bank_speaker_label`] for the buffer contract.

 # Safety
 As [`ss_bank_speaker_label`].
 */
enum SsStatus ss_bank_noise_label(const struct SsBank *bank,
                                  size_t index,
                                  char *buf,
                                  size_t cap,
                                  size_t *needed);

/*
 Copy the label of speaker dictionary `index` into `buf` as a NUL-terminated
 string. `*needed`, when non-null, receives the required size even when
 `cap` is too small.

 # Safety
 `bank` must be a live handle, `buf` must hold `cap` bytes, `needed` may be null.
 */
enum SsStatus ss_bank_speaker_label(const struct SsBank *bank,
                                    size_t index,
                                    char *buf,
                                    size_t cap,
                                    size_t *needed);

/*
 Segment the noise of a 16 kHz recording and identify the speaker of each region.

 # Safety
 `bank` must be a live handle, `samples` must hold `len` doubles, `out` must be writable.
 */
enum SsStatus ss_classify(const struct SsBank *bank,
                          const double *samples,
                          size_t len,
                          struct SsClassification *out);

/*
 Classify, then separate a 16 kHz recording into speech and noise, each
 written as `len` samples. `classification` may be null.

 # Safety
 `bank` must be a live handle; `samples`, `speech_out` and `noise_out` must each hold `len` doubles.
 */
enum SsStatus ss_separate(const struct SsBank *bank,
                          const double *samples,
                          size_t len,
                          double *speech_out,
                          double *noise_out,
                          struct SsClassification *classification);

/*
 Minimise the KL divergence between `y` (length `rows`) and `D x` over
 `x >= 0`, where `D` is `rows x cols` in column-major order. Writes `cols`
 weights and, when non-null, the final objective. `tol <= 0` or
 `max_iters == 0` select the defaults.

 # Safety
 `dictionary` must hold `rows * cols` doubles, `y` `rows`, `weights_out` `cols`; `objective_out` may be null.
 */
enum SsStatus ss_solve_asna(const double *dictionary,
                            size_t rows,
                            size_t cols,
                            const double *y,
                            double tol,
                            size_t max_iters,
                            double *weights_out,
                            double *objective_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPARSESCENE_H */
