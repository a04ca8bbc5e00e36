#ifndef FNLSE_H
#define FNLSE_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Run mode requested when parsing a configuration.
typedef enum FnlseMode {
  // Take the mode from the document's `mode` key, defaulting to ground.
  FNLSE_MODE_FROM_DOCUMENT = 0,
  FNLSE_MODE_GROUND = 1,
  FNLSE_MODE_DYNAMICS = 2,
  FNLSE_MODE_SWEEP = 3,
} FnlseMode;

// Result code of every fallible call.
typedef enum FnlseStatus {
  FNLSE_STATUS_OK = 0,
  FNLSE_STATUS_INVALID_ARGUMENT = 1,
  FNLSE_STATUS_CONFIG = 2,
  FNLSE_STATUS_NUMERICAL = 3,
  FNLSE_STATUS_NONEXISTENCE = 4,
  FNLSE_STATUS_IO = 5,
  FNLSE_STATUS_PANIC = 6,
} FnlseStatus;

// Parsed and validated run configuration.
typedef struct FnlseConfig FnlseConfig;

// Field snapshot read from disk.
typedef struct FnlseSnapshot FnlseSnapshot;

typedef struct FnlseGroundSummary {
  size_t steps;
  bool converged;
  double total_energy;
  double kinetic;
  double potential;
  double rotation;
  double interaction;
  double nonlocal;
  double mass;
  double max_abs;
  double lz;
} FnlseGroundSummary;

typedef struct FnlseDynamicsSummary {
  double t_final;
  size_t steps;
  size_t diagnostics_rows;
  size_t snapshots;
  double max_mass_drift;
  double max_energy_drift;
  // NaN when the law residual was not computed.
  double max_law_residual;
} FnlseDynamicsSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *fnlse_version(void);

// Message of the last failed call on this thread, or NULL.
//
// The pointer stays valid until the next call into this library on the same thread.
const char *fnlse_last_error(void);

// Parses a TOML configuration.
//
// # Safety
// `text` must be a NUL-terminated string, `mode_hint` one of the [`FnlseMode`]
// values, and `out` a writable pointer.
enum FnlseStatus fnlse_config_parse(const char *text,
                                    enum FnlseMode mode_hint,
                                    struct FnlseConfig **out);

// Reads and parses a TOML configuration file.
//
// # Safety
// Same contract as [`fnlse_config_parse`], with `path` naming the file.
enum FnlseStatus fnlse_config_load(const char *path,
                                   enum FnlseMode mode_hint,
                                   struct FnlseConfig **out);

// Serializes a configuration to TOML; free the result with [`fnlse_string_free`].
//
// # Safety
// `config` must come from [`fnlse_config_parse`] or [`fnlse_config_load`]; `out` must be writable.
enum FnlseStatus fnlse_config_to_toml(const struct FnlseConfig *config, char **out);

// # Safety
// `config` must be NULL or a handle not yet freed.
void fnlse_config_free(struct FnlseConfig *config);

// # Safety
// `s` must be NULL or a string returned by this library and not yet freed.
void fnlse_string_free(char *s);

// Computes a ground state, writing artifacts under `out_dir`.
//
// Artifacts are written even when the run ends in [`FnlseStatus::Nonexistence`].
//
// # Safety
// `config` must be a live handle, `out_dir` a NUL-terminated string, and
// `summary` NULL or writable.
enum FnlseStatus fnlse_ground_run(const struct FnlseConfig *config,
                                  const char *out_dir,
                                  struct FnlseGroundSummary *summary);

// Propagates the configured initial field, writing artifacts under `out_dir`.
//
// # Safety
// Same contract as [`fnlse_ground_run`].
enum FnlseStatus fnlse_dynamics_run(const struct FnlseConfig *config,
                                    const char *out_dir,
                                    struct FnlseDynamicsSummary *summary);

// Reads a snapshot file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a writable pointer.
enum FnlseStatus fnlse_snapshot_read(const char *path, struct FnlseSnapshot **out);

// Spatial dimension, or 0 for a NULL handle.
//
// # Safety
// `snap` must be NULL or a live handle.
size_t fnlse_snapshot_dim(const struct FnlseSnapshot *snap);

// Number of complex values, or 0 for a NULL handle.
//
// # Safety
// `snap` must be NULL or a live handle.
size_t fnlse_snapshot_len(const struct FnlseSnapshot *snap);

// Simulation time, rotating-frame flag and grid description.
//
// `points`, `lo` and `hi` must each hold `dim` entries; any of them may be NULL.
//
// # Safety
// `snap` must be a live handle; non-NULL outputs must be writable for the sizes above.
enum FnlseStatus fnlse_snapshot_info(const struct FnlseSnapshot *snap,
                                     double *t,
                                     bool *rotating,
                                     size_t *points,
                                     double *lo,
                                     double *hi);

// Copies the field as interleaved (re, im) pairs in row-major order.
//
// `len` is the capacity of `buf` in doubles and must be at least twice [`fnlse_snapshot_len`].
//
// # Safety
// `snap` must be a live handle and `buf` writable for `len` doubles.
enum FnlseStatus fnlse_snapshot_values(const struct FnlseSnapshot *snap, double *buf, size_t len);

// Discrete mass of the stored field.
//
// # Safety
// `snap` must be a live handle and `mass` writable.
enum FnlseStatus fnlse_snapshot_mass(const struct FnlseSnapshot *snap, double *mass);

// # Safety
// `snap` must be NULL or a handle not yet freed.
void fnlse_snapshot_free(struct FnlseSnapshot *snap);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FNLSE_H */
