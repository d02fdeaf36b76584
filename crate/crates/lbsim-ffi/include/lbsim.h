/* C interface for the lbsim load-balancing simulator. */

#pragma once

/* Generated with cbindgen:0.27.0 */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Status code returned by every fallible call.
 */
typedef enum LbStatus {
  LB_STATUS_OK = 0,
  /*
   A required pointer argument was NULL.
   */
  LB_STATUS_NULL_ARGUMENT = 1,
  /*
   A string argument was not valid UTF-8.
   */
  LB_STATUS_INVALID_UTF8 = 2,
  /*
   Scenario text failed to parse or validate.
   */
  LB_STATUS_PARSE_FAILED = 3,
  /*
   The run aborted (audit violation or internal error).
   */
  LB_STATUS_RUN_FAILED = 4,
  /*
   An enum argument was out of range.
   */
  LB_STATUS_INVALID_ARGUMENT = 5,
} LbStatus;

/*
 Placement strategy selector for [`lbsim_run`].
 */
typedef enum LbStrategy {
  /*
   Two-tier capability routing with rebalancing.
   */
  LB_STRATEGY_TWO_TIER = 0,
  /*
   Global round-robin baseline.
   */
  LB_STRATEGY_ROUND_ROBIN = 1,
  /*
   Seeded uniform-random baseline.
   */
  LB_STRATEGY_RANDOM = 2,
} LbStrategy;

/*
 An opaque finished run: final state, metrics and trace.
 */
typedef struct LbRun LbRun;

/*
 An opaque parsed scenario.
 */
typedef struct LbScenario LbScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Returns the library version as a static NUL-terminated string.
 */
const char *lbsim_version(void);

/*
 Returns the message for the most recent error on this thread. The
 pointer is valid until the next failing call on the same thread.
 */
const char *lbsim_last_error_message(void);

/*
 Parses scenario text into a handle.

 # Safety
 `text` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum LbStatus lbsim_scenario_parse(const char *text, struct LbScenario **out);

/*
 Releases a scenario handle. NULL is a no-op.

 # Safety
 `scenario` must have come from `lbsim_scenario_parse` and not yet freed.
 */
void lbsim_scenario_free(struct LbScenario *scenario);

/*
 Runs a scenario. `override_seed` replaces the scenario's seed when
 `has_seed` is true. `audit` enables the per-tick invariant check.

 # Safety
 `scenario` must be a live handle and `out` a valid pointer.
 */
enum LbStatus lbsim_run(const struct LbScenario *scenario,
                        enum LbStrategy strategy,
                        bool has_seed,
                        uint64_t override_seed,
                        bool audit,
                        struct LbRun **out);

/*
 Releases a run handle. NULL is a no-op.

 # Safety
 `run` must have come from `lbsim_run` and not yet freed.
 */
void lbsim_run_free(struct LbRun *run);

/*
 Renders the final per-cluster review-matrix tables.

 # Safety
 `run` must be a live handle and `out` a valid pointer; free the result
 with `lbsim_string_free`.
 */
enum LbStatus lbsim_run_tables(const struct LbRun *run, char **out);

/*
 Renders the run's trace, one event per line.

 # Safety
 As for `lbsim_run_tables`.
 */
enum LbStatus lbsim_run_trace(const struct LbRun *run, char **out);

/*
 Renders the run's metrics summary.

 # Safety
 As for `lbsim_run_tables`.
 */
enum LbStatus lbsim_run_metrics(const struct LbRun *run, char **out);

/*
 Number of jobs still in the pending queue at the end of the run.

 # Safety
 `run` must be a live handle and `out` a valid pointer.
 */
enum LbStatus lbsim_run_pending_count(const struct LbRun *run, uint64_t *out);

/*
 Number of job relocations (balancing moves plus migrations).

 # Safety
 `run` must be a live handle and `out` a valid pointer.
 */
enum LbStatus lbsim_run_move_count(const struct LbRun *run, uint64_t *out);

/*
 Servers over-committed (UNEVEN) at the end of the run.

 # Safety
 `run` must be a live handle and `out` a valid pointer.
 */
enum LbStatus lbsim_run_uneven_count(const struct LbRun *run, uint64_t *out);

/*
 Releases a string returned by this library. NULL is a no-op.

 # Safety
 `text` must have been returned through a `char **out` parameter of this
 library and not yet freed.
 */
void lbsim_string_free(char *text);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus
