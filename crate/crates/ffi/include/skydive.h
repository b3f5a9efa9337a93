#ifndef SKYDIVE_H
#define SKYDIVE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Posture degrees of freedom in a frame.
#define SKYDIVE_DOF_COUNT 45

enum SkydiveStatus
#if defined(__cplusplus) || __STDC_VERSION__ >= 202311L
  : int32_t
#endif // defined(__cplusplus) || __STDC_VERSION__ >= 202311L
 {
  SKYDIVE_STATUS_OK = 0,
  // The episode has ended; no frame was produced.
  SKYDIVE_STATUS_FINISHED = 1,
  SKYDIVE_STATUS_NULL_POINTER = -1,
  SKYDIVE_STATUS_INVALID_ARGUMENT = -2,
  SKYDIVE_STATUS_INVALID_CONFIG = -3,
  SKYDIVE_STATUS_IO = -4,
  SKYDIVE_STATUS_CORRUPT_LOG = -5,
  // The call does not fit the simulation's state or input mode.
  SKYDIVE_STATUS_WRONG_STATE = -6,
  SKYDIVE_STATUS_PANIC = -99,
};
#ifndef __cplusplus
#if __STDC_VERSION__ >= 202311L
typedef enum SkydiveStatus SkydiveStatus;
#else
typedef int32_t SkydiveStatus;
#endif // __STDC_VERSION__ >= 202311L
#endif // __cplusplus

enum SkydiveOutcome
#if defined(__cplusplus) || __STDC_VERSION__ >= 202311L
  : int32_t
#endif // defined(__cplusplus) || __STDC_VERSION__ >= 202311L
 {
  SKYDIVE_OUTCOME_RUNNING = 0,
  SKYDIVE_OUTCOME_COMPLETED = 1,
  SKYDIVE_OUTCOME_TIMEOUT = 2,
  SKYDIVE_OUTCOME_DIVERGED = 3,
  SKYDIVE_OUTCOME_STREAM_LOST = 4,
};
#ifndef __cplusplus
#if __STDC_VERSION__ >= 202311L
typedef enum SkydiveOutcome SkydiveOutcome;
#else
typedef int32_t SkydiveOutcome;
#endif // __STDC_VERSION__ >= 202311L
#endif // __cplusplus

// Opaque simulation handle.
typedef struct SkydiveSim SkydiveSim;

// One tick, flattened. Inertial NED frame; quaternion is body to inertial.
typedef struct {
  uint64_t tick;
  double time;
  double position[3];
  double velocity[3];
  // `w, x, y, z`.
  double orientation[4];
  double angular_rate[3];
  double omega_com;
  double v_com;
  double omega_meas;
  double v_meas;
  // Controller outputs `[arms, legs]`, rad.
  double u_cmd[2];
  // Pattern angles of the executed posture, rad.
  double u_exec[2];
  double cross_track;
  double progress;
  bool inside_corridor;
  double desired_posture[SKYDIVE_DOF_COUNT];
  double executed_posture[SKYDIVE_DOF_COUNT];
} SkydiveFrame;

typedef struct {
  // Negative when the target was not reached.
  double completion_time;
  double max_abs_u_arms;
  double max_abs_u_legs;
  double max_abs_omega_com;
  double yaw_rate_rms;
  double corridor_violation_time;
  double path_progress;
} SkydiveMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *skydive_version(void);

// Copies the calling thread's last error message into `buf` (NUL-terminated,
// truncated to `len`). Returns the full message length in bytes.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t skydive_last_error(char *buf, size_t len);

// Creates a simulation from TOML texts; null selects the shipped defaults.
// The settled initial state is computed here.
//
// # Safety
// `config_toml` and `scenario_toml` must be null or NUL-terminated strings;
// `out` must point to writable storage for one pointer.
SkydiveStatus skydive_sim_new(const char *config_toml, const char *scenario_toml, SkydiveSim **out);

// Releases a simulation. Null is ignored.
//
// # Safety
// `sim` must be null or a handle from [`skydive_sim_new`] not yet freed.
void skydive_sim_free(SkydiveSim *sim);

// Advances one tick and fills `out` (optional). Returns `Finished` once the
// episode has ended.
//
// # Safety
// `sim` must be a live handle; `out` must be null or writable.
SkydiveStatus skydive_sim_tick(SkydiveSim *sim, SkydiveFrame *out);

// Sets the externally driven pattern angles, rad, applied from the next
// tick. Only valid when the scenario's input is `external`.
//
// # Safety
// `sim` must be a live handle.
SkydiveStatus skydive_sim_set_input(SkydiveSim *sim, double u_arms, double u_legs);

// Writes the episode outcome, `Running` while it lasts.
//
// # Safety
// `sim` must be a live handle; `out` must be writable.
SkydiveStatus skydive_sim_outcome(SkydiveSim *sim, SkydiveOutcome *out);

// Episode metrics; the episode must have ended.
//
// # Safety
// `sim` must be a live handle; `out` must be writable.
SkydiveStatus skydive_sim_metrics(SkydiveSim *sim, SkydiveMetrics *out);

// Saves the finished episode as a JSON-lines log.
//
// # Safety
// `sim` must be a live handle; `path` a NUL-terminated UTF-8 string.
SkydiveStatus skydive_sim_save_log(SkydiveSim *sim, const char *path);

// Steady descent speed of the neutral posture under a configuration, m/s.
//
// # Safety
// `config_toml` must be null or a NUL-terminated string; `out` writable.
SkydiveStatus skydive_terminal_speed(const char *config_toml, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SKYDIVE_H */
