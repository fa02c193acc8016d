#ifndef SUBALIGN_H
#define SUBALIGN_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

/**
 * Result codes. Values 2 to 4 match the command-line exit codes.
 */
typedef enum SaStatus {
  SA_STATUS_OK = 0,
  SA_STATUS_CONFIG_ERROR = 2,
  SA_STATUS_DATA_ERROR = 3,
  SA_STATUS_NUMERICAL_ERROR = 4,
  SA_STATUS_NULL_ARGUMENT = 5,
  SA_STATUS_INVALID_UTF8 = 6,
  SA_STATUS_PANIC = 7,
} SaStatus;

/**
 * Opaque re-tokenization policy.
 */
typedef struct SaPolicy SaPolicy;

/**
 * Opaque subword vocabulary.
 */
typedef struct SaVocab SaVocab;

/**
 * Solver summary filled by [`sa_solve_dense`].
 */
typedef struct SaSolveInfo {
  size_t iterations;
  double marginal_error;
  /**
   * 1 when the tolerance was reached.
   */
  int32_t converged;
  /**
   * 1 when the log-domain iteration was used.
   */
  int32_t log_domain;
} SaSolveInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failure on this thread, or NULL. The pointer stays
 * valid until the next call into this library on the same thread.
 */
const char *sa_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sa_version(void);

/**
 * Releases a string returned by this library. NULL is ignored.
 */
void sa_string_free(char *s);

/**
 * Parses a vocabulary: one token per line, `##` marks continuation pieces.
 * `unk_token` may be NULL for `[UNK]`.
 */
enum SaStatus sa_vocab_from_text(const char *text, const char *unk_token, struct SaVocab **out);

void sa_vocab_free(struct SaVocab *vocab);

/**
 * Default (greedy longest-match) tokenization, pieces joined by spaces.
 */
enum SaStatus sa_tokenize(const struct SaVocab *vocab, const char *word, char **out);

/**
 * Up to `cap` segmentations of `word`, one per line, pieces separated by
 * spaces, ordered by piece count and then lexicographically.
 */
enum SaStatus sa_enumerate(const struct SaVocab *vocab, const char *word, size_t cap, char **out);

/**
 * Entropic OT on a dense row-major cost matrix; `INFINITY` marks a
 * forbidden cell. `plan_out` receives `rows * cols` values. `info` may be
 * NULL. Returns `NumericalError` if the tolerance is not reached, with the
 * last iterate still written.
 */
enum SaStatus sa_solve_dense(size_t rows,
                             size_t cols,
                             const double *row_mass,
                             const double *col_mass,
                             const double *cost,
                             double gamma,
                             double tolerance,
                             size_t max_iters,
                             double *plan_out,
                             struct SaSolveInfo *info);

/**
 * Loads a policy from its JSONL text.
 */
enum SaStatus sa_policy_from_jsonl(const char *text, struct SaPolicy **out);

void sa_policy_free(struct SaPolicy *policy);

/**
 * Number of (word, category) entries; 0 for NULL.
 */
size_t sa_policy_len(const struct SaPolicy *policy);

/**
 * Re-tokenizes a CoNLL corpus with the policy. `labels` is a
 * comma-separated list of entity types. The result is a subword-level
 * CoNLL corpus.
 */
enum SaStatus sa_retokenize_conll(const struct SaPolicy *policy,
                                  const struct SaVocab *vocab,
                                  const char *conll,
                                  const char *labels,
                                  uint64_t seed,
                                  char **out);

/**
 * Runs a pipeline command (`annotate`, `solve`, `retokenize` or
 * `diagnose`) with a TOML config file and `SUBALIGN_*` environment
 * overrides. `config_path` may be NULL to use defaults and environment
 * only.
 */
enum SaStatus sa_run_command(const char *command, const char *config_path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SUBALIGN_H */
