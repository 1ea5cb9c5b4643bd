#ifndef HEXCOMMAND_H
#define HEXCOMMAND_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Number of nominal actions; action indices run from 0 to `HC_NUM_ACTIONS - 1`.
#define HC_NUM_ACTIONS 13

typedef enum HcStatus {
  HC_STATUS_OK = 0,
  HC_STATUS_NULL_POINTER = 1,
  HC_STATUS_INVALID_ARGUMENT = 2,
  HC_STATUS_SCENARIO = 3,
  HC_STATUS_ILLEGAL_ACTION = 4,
  HC_STATUS_GAME_OVER = 5,
  HC_STATUS_MODEL_FAULT = 6,
  HC_STATUS_FORMAT = 7,
  HC_STATUS_BUFFER_TOO_SMALL = 8,
  HC_STATUS_INTERNAL = 9,
} HcStatus;

typedef enum HcFaction {
  HC_FACTION_BLUE = 0,
  HC_FACTION_RED = 1,
} HcFaction;

// A game in progress.
typedef struct HcGame HcGame;

// A behavior model bound to one faction.
typedef struct HcPolicy HcPolicy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *hc_version(void);

// Copy of the last error message on this thread, or NULL if there is none.
// Release with `hc_string_free`.
char *hc_last_error_message(void);

// # Safety
// `s` must be NULL or a string returned by this library and not yet freed.
void hc_string_free(char *s);

// Creates a game from a scenario JSON document.
//
// # Safety
// `scenario_json` must be a NUL-terminated string; `out_game` must be writable.
enum HcStatus hc_game_new(const char *scenario_json, uint64_t seed, struct HcGame **out_game);

// # Safety
// `game` must be NULL or a handle from `hc_game_new` not yet freed.
void hc_game_free(struct HcGame *game);

// Unit that must act next. Returns `GameOver` once the episode has ended.
//
// # Safety
// `game` must be a live handle; `out_unit` must be writable.
enum HcStatus hc_game_unit_on_move(const struct HcGame *game, uint32_t *out_unit);

// Legal actions of `unit` as a bit mask: bit `i` is set when action index `i` is legal.
//
// # Safety
// `game` must be a live handle; `out_mask` must be writable.
enum HcStatus hc_game_legal_actions(const struct HcGame *game, uint32_t unit, uint32_t *out_mask);

// Applies one action. The blue-positive reward is written to `out_reward` if it is not NULL.
// The game is left unchanged on failure.
//
// # Safety
// `game` must be a live handle; `out_reward` must be NULL or writable.
enum HcStatus hc_game_step(struct HcGame *game,
                           uint32_t unit,
                           uint32_t action_index,
                           int64_t *out_reward);

// Cumulative blue-positive score.
//
// # Safety
// `game` must be a live handle; `out_score` must be writable.
enum HcStatus hc_game_score(const struct HcGame *game, int64_t *out_score);

// Whether the episode has ended.
//
// # Safety
// `game` must be a live handle; `out_terminal` must be writable.
enum HcStatus hc_game_is_terminal(const struct HcGame *game, bool *out_terminal);

// Dynamic state (turn, phase, score, units) as JSON. Release with `hc_string_free`.
//
// # Safety
// `game` must be a live handle; `out_json` must be writable.
enum HcStatus hc_game_state_json(const struct HcGame *game, char **out_json);

// Length of the local observation vector for window radius `radius`.
//
// # Safety
// `out_len` must be writable.
enum HcStatus hc_observation_len(uint32_t radius, uint32_t horizon, size_t *out_len);

// Local observation of `unit`. `out_written` receives the required length; if
// `capacity` is smaller nothing is copied and `BufferTooSmall` is returned.
//
// # Safety
// `game` must be a live handle; `buf` must hold `capacity` doubles (may be NULL
// when `capacity` is 0); `out_written` must be writable.
enum HcStatus hc_game_encode_local(const struct HcGame *game,
                                   uint32_t unit,
                                   uint32_t radius,
                                   uint32_t horizon,
                                   double *buf,
                                   size_t capacity,
                                   size_t *out_written);

// Creates a policy from a spec: a scripted name (`pass`, `random`, `greedy`,
// `hold`, `goal`), `hierarchy`, or a model or manifest file path.
//
// # Safety
// `spec` must be a NUL-terminated string; `out_policy` must be writable.
enum HcStatus hc_policy_new(const char *spec,
                            enum HcFaction faction,
                            uint64_t seed,
                            struct HcPolicy **out_policy);

// # Safety
// `policy` must be NULL or a handle from `hc_policy_new` not yet freed.
void hc_policy_free(struct HcPolicy *policy);

// Chooses an action index for `unit`, which must belong to the policy's faction.
//
// # Safety
// `policy` and `game` must be live handles; `out_action` must be writable.
enum HcStatus hc_policy_act(struct HcPolicy *policy,
                            const struct HcGame *game,
                            uint32_t unit,
                            uint32_t *out_action);

// Plays one episode between two policies. The final score goes to
// `out_final_score`; if `out_log` is not NULL it receives the NDJSON episode
// log, released with `hc_string_free`.
//
// # Safety
// `scenario_json` must be a NUL-terminated string; `blue` and `red` must be
// live, distinct handles; `out_final_score` must be writable; `out_log` must be
// NULL or writable.
enum HcStatus hc_run_episode(const char *scenario_json,
                             struct HcPolicy *blue,
                             struct HcPolicy *red,
                             uint64_t seed,
                             int64_t *out_final_score,
                             char **out_log);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HEXCOMMAND_H */
