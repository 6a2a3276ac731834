#ifndef GOGAR_H
#define GOGAR_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Outcome of an applied GOGAR move.
 */
typedef enum {
  GOGAR_OUTCOME_OK = 0,
  GOGAR_OUTCOME_FLAGGED = 1,
  GOGAR_OUTCOME_DEFENDED = 2,
  GOGAR_OUTCOME_RETRACTED = 3,
  GOGAR_OUTCOME_ASSERTED_TRUE = 4,
  GOGAR_OUTCOME_ASSERTED_FALSE = 5,
} GogarOutcome;

/**
 * Result codes shared by every exported function.
 */
typedef enum {
  GOGAR_STATUS_OK = 0,
  GOGAR_STATUS_NULL_POINTER = 1,
  GOGAR_STATUS_INVALID_UTF8 = 2,
  GOGAR_STATUS_BUFFER_TOO_SMALL = 3,
  GOGAR_STATUS_PARSE = 4,
  GOGAR_STATUS_VALIDATION = 5,
  GOGAR_STATUS_INVALID_ARGUMENT = 6,
  GOGAR_STATUS_GOGAR = 7,
  GOGAR_STATUS_BRIDGE = 8,
  GOGAR_STATUS_PANIC = 9,
} GogarStatus;

/**
 * Opaque GOGAR game handle.
 */
typedef struct GogarGame GogarGame;

/**
 * Opaque MDP handle.
 */
typedef struct GogarMdp GogarMdp;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *gogar_last_error(void);

/**
 * Parses an MDP from its text form.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a writable pointer.
 */
GogarStatus gogar_mdp_parse(const char *text, GogarMdp **out);

/**
 * # Safety
 * `mdp` must come from [`gogar_mdp_parse`] and not be used afterwards.
 */
void gogar_mdp_free(GogarMdp *mdp);

/**
 * Writes the state and action counts.
 *
 * # Safety
 * `mdp` must be a live handle; the out pointers must be writable.
 */
GogarStatus gogar_mdp_shape(const GogarMdp *mdp, size_t *n_states, size_t *n_actions);

/**
 * Value iteration to tolerance `tol`. Fills `values` and `actions` (one
 * entry per state; `-1` at terminal states).
 *
 * # Safety
 * `values` and `actions` must point to at least `len` writable entries.
 */
GogarStatus gogar_value_iteration(const GogarMdp *mdp,
                                  double tol,
                                  double *values,
                                  int64_t *actions,
                                  size_t len);

/**
 * Tabular Q-learning; writes the greedy policy into `actions` (`-1` at
 * terminal states).
 *
 * # Safety
 * `actions` must point to at least `len` writable entries.
 */
GogarStatus gogar_train_q(const GogarMdp *mdp,
                          size_t episodes,
                          double alpha,
                          double epsilon,
                          uint64_t seed,
                          int64_t *actions,
                          size_t len);

/**
 * Builds the token graph of a deterministic policy (`-1` at terminal
 * states) and checks it against its GOGAR universe. Writes the edge count
 * and the verdict.
 *
 * # Safety
 * `policy` must point to `len` readable entries; the out pointers must be
 * writable.
 */
GogarStatus gogar_bridge_check(const GogarMdp *mdp,
                               const int64_t *policy,
                               size_t len,
                               size_t *n_edges,
                               bool *equivalent);

/**
 * Starts a game over a universe in its text form. `direct` selects
 * direct-consequence commitment instead of the transitive closure.
 *
 * # Safety
 * `universe` must be a NUL-terminated string and `out` writable.
 */
GogarStatus gogar_game_new(const char *universe, bool direct, GogarGame **out);

/**
 * # Safety
 * `game` must come from [`gogar_game_new`] and not be used afterwards.
 */
void gogar_game_free(GogarGame *game);

/**
 * Applies one move written as a script line, e.g. `commit ann rain` or
 * `challenge bo ann wet`. A rejected move leaves the game unchanged.
 *
 * # Safety
 * `game` must be a live handle, `line` NUL-terminated, `outcome` writable.
 */
GogarStatus gogar_game_apply(GogarGame *game, const char *line, GogarOutcome *outcome);

/**
 * Copies the move log as NUL-terminated text into `buf`. `needed` receives
 * the required size including the NUL, also when the buffer is too small.
 *
 * # Safety
 * `buf` must point to `cap` writable bytes (or be NULL with `cap` 0);
 * `needed` must be writable.
 */
GogarStatus gogar_game_log(const GogarGame *game, char *buf, size_t cap, size_t *needed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GOGAR_H */
