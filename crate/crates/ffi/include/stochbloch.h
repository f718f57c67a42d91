#ifndef STOCHBLOCH_H
#define STOCHBLOCH_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum SbStatus {
  SB_STATUS_OK = 0,
  SB_STATUS_NULL_POINTER = 1,
  SB_STATUS_INVALID_ARGUMENT = 2,
  SB_STATUS_CONFIG = 3,
  SB_STATUS_NUMERICAL = 4,
  SB_STATUS_IO = 5,
  SB_STATUS_PANIC = 6,
} SbStatus;

// Energy and time units of a model.
typedef enum SbUnits {
  // μeV and ps.
  SB_UNITS_PHYSICAL = 0,
  // ħ = 1.
  SB_UNITS_NATURAL = 1,
} SbUnits;

// Route used for the two-time correlation.
typedef enum SbMethod {
  SB_METHOD_STO = 0,
  SB_METHOD_QRT = 1,
  SB_METHOD_GRN = 2,
} SbMethod;

// Opaque parsed experiment configuration.
typedef struct SbExperiment SbExperiment;

// Opaque steady-state model of one parameter set.
typedef struct SbModel SbModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *sb_version(void);

// Copies the calling thread's last error message into `buf` (truncated,
// always NUL-terminated when `len > 0`). Returns the untruncated length
// including the terminator.
//
// # Safety
// `buf` must be null or valid for `len` bytes.
size_t sb_last_error_message(char *buf, size_t len);

// Rabi energy ħΩ_R in μeV for an excitation power in watts.
//
// # Safety
// `out` must be valid for one write.
enum SbStatus sb_power_to_rabi(double power_w, double eta_r, double *out);

// Builds the steady state, drift and noise model of one parameter set.
//
// # Safety
// `out` must be valid for one write. On success `*out` owns a model that
// must be released with [`sb_model_free`].
enum SbStatus sb_model_new(double rabi_energy,
                           double detuning_energy,
                           double t1,
                           double t2,
                           enum SbUnits units,
                           struct SbModel **out);

// Releases a model. Null is ignored.
//
// # Safety
// `model` must come from [`sb_model_new`] and not be used afterwards.
void sb_model_free(struct SbModel *model);

// Steady-state excited-state population ρ_ee.
//
// # Safety
// `model` must be a live handle and `out` valid for one write.
enum SbStatus sb_model_excited_population(const struct SbModel *model, double *out);

// Fixed point of the Bloch drift as interleaved (re, im) pairs for
// ⟨σ₊⟩, ⟨σ₋⟩, ⟨σ_z⟩.
//
// # Safety
// `model` must be a live handle and `out` valid for 6 writes.
enum SbStatus sb_model_fixed_point(const struct SbModel *model, double *out);

// Residual of the noise factorization, max |B₁B₂ᵀ − D|.
//
// # Safety
// `model` must be a live handle and `out` valid for one write.
enum SbStatus sb_model_factorization_residual(const struct SbModel *model, double *out);

// Incoherent spectrum S(ω) on the `n` energies in `omega`, written to `out`.
// `n_walkers` and `seed` are used by `SB_METHOD_STO` only.
//
// # Safety
// `model` must be a live handle; `omega` and `out` must be valid for `n`
// elements.
enum SbStatus sb_model_spectrum(const struct SbModel *model,
                                enum SbMethod method,
                                size_t n_walkers,
                                uint64_t seed,
                                const double *omega,
                                size_t n,
                                double *out);

// Parses a TOML experiment. `seed` overrides the file when `has_seed` is
// non-zero.
//
// # Safety
// `toml` must be a NUL-terminated string and `out` valid for one write. On
// success `*out` must be released with [`sb_experiment_free`].
enum SbStatus sb_experiment_from_toml(const char *toml,
                                      int32_t has_seed,
                                      uint64_t seed,
                                      struct SbExperiment **out);

// Releases an experiment. Null is ignored.
//
// # Safety
// `exp` must come from [`sb_experiment_from_toml`] and not be used afterwards.
void sb_experiment_free(struct SbExperiment *exp);

// Runs `task` (`steady`, `correlate`, `spectrum`, `sweep` or `fdtd`) on
// `workers` threads and writes its outputs and manifest into `out_dir`, or
// into the configured directory when `out_dir` is null.
//
// # Safety
// `exp` must be a live handle; `task` and `out_dir` (if non-null) must be
// NUL-terminated strings.
enum SbStatus sb_experiment_run(const struct SbExperiment *exp,
                                const char *task,
                                size_t workers,
                                const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STOCHBLOCH_H */
