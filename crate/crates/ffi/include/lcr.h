#ifndef LCR_H
#define LCR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum LcrStatus {
  LCR_STATUS_OK = 0,
  LCR_STATUS_NULL_POINTER = 1,
  LCR_STATUS_INVALID_UTF8 = 2,
  LCR_STATUS_INVALID_SCENARIO = 3,
  LCR_STATUS_SIMULATION_FAILED = 4,
  // The handle was already finished and can only be freed.
  LCR_STATUS_FINISHED = 5,
  LCR_STATUS_NO_OPEN_WINDOW = 6,
  LCR_STATUS_INVALID_ARGUMENT = 7,
  // No live node is leader at the moment.
  LCR_STATUS_NO_LEADER = 8,
  LCR_STATUS_PANIC = 99,
} LcrStatus;

// Opaque simulation handle.
typedef struct LcrSimulation LcrSimulation;

// Figures from a finished run.
typedef struct LcrRunSummary {
  double tps;
  uint64_t committed;
  double tx_mean_us;
  double ntx_mean_us;
  double leader_bytes_per_request;
  double follower_bytes_per_request;
  // 1 when every trace check passed.
  uint8_t verified;
} LcrRunSummary;

// An allocation window as seen from C.
typedef struct LcrWindow {
  uint64_t generation;
  uint64_t start;
  uint64_t end;
  // Nonzero when the window still accepts allocations.
  uint8_t open;
} LcrWindow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or NULL. The pointer
// stays valid until the next failing call on the same thread.
const char *lcr_last_error_message(void);

// Build a simulation from scenario text in TOML form.
//
// # Safety
// `scenario_toml` must be a NUL-terminated string and `out` a valid place
// to store the handle.
enum LcrStatus lcr_simulation_new(const char *scenario_toml, struct LcrSimulation **out);

// Advance simulated time to `t_us`, processing every event up to it.
//
// # Safety
// `sim` must be a handle from [`lcr_simulation_new`] that was not freed.
enum LcrStatus lcr_simulation_run_until(struct LcrSimulation *sim, uint64_t t_us);

// Current simulated time in microseconds, or 0 for a NULL or finished
// handle.
//
// # Safety
// `sim` must be NULL or a live handle.
uint64_t lcr_simulation_now(const struct LcrSimulation *sim);

// Store the id of the current leader in `out`.
//
// # Safety
// `sim` must be a live handle and `out` a valid place to write.
enum LcrStatus lcr_simulation_leader(struct LcrSimulation *sim, uint64_t *out);

// Store the commit index of `node` in `out`.
//
// # Safety
// `sim` must be a live handle and `out` a valid place to write.
enum LcrStatus lcr_simulation_commit_index(struct LcrSimulation *sim, uint64_t node, uint64_t *out);

// Run to the configured end, verify the trace and fill `out`. The handle
// can afterwards only be queried with [`lcr_simulation_trace`] and freed.
//
// # Safety
// `sim` must be a live handle and `out` a valid place to write.
enum LcrStatus lcr_simulation_finish(struct LcrSimulation *sim, struct LcrRunSummary *out);

// Trace text of a finished simulation, or NULL before
// [`lcr_simulation_finish`]. Owned by the handle.
//
// # Safety
// `sim` must be NULL or a handle that was not freed.
const char *lcr_simulation_trace(const struct LcrSimulation *sim);

// Release a handle. NULL is ignored.
//
// # Safety
// `sim` must be NULL or a handle from [`lcr_simulation_new`] not yet freed.
void lcr_simulation_free(struct LcrSimulation *sim);

// Run a whole scenario and report whether its trace verifies.
//
// # Safety
// `scenario_toml` must be a NUL-terminated string and `passed` a valid
// place to write.
enum LcrStatus lcr_run_and_verify(const char *scenario_toml, uint8_t *passed);

// Server that owns `index` under `generation`.
uint64_t lcr_owner_of(uint64_t index, uint64_t generation);

// Next future index for `self_id` above `future_last` that falls in one of
// the open `windows`.
//
// # Safety
// `windows` must point to `window_count` readable elements (or be NULL when
// the count is 0) and `out` must be a valid place to write.
enum LcrStatus lcr_allocate_future_index(uint64_t self_id,
                                         uint64_t generation,
                                         uint64_t future_last,
                                         const struct LcrWindow *windows,
                                         uintptr_t window_count,
                                         uint64_t *out);

// Move `index`, owned by `self_id` under generation `old`, onto the grid of
// generation `new`.
//
// # Safety
// `out` must be a valid place to write.
enum LcrStatus lcr_reallocate_index(uint64_t index,
                                    uint64_t old,
                                    uint64_t new_,
                                    uint64_t self_id,
                                    uint64_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LCR_H */
