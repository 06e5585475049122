/* C interface of the distobs hybrid distributed-observer toolkit. */

#ifndef DISTOBS_H
#define DISTOBS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible entry point.
 */
typedef enum DistobsStatus {
  DistobsStatus_Ok = 0,
  /**
   * Some other failure (I/O, numerics).
   */
  DistobsStatus_Internal = 1,
  /**
   * Malformed configuration or arguments.
   */
  DistobsStatus_Config = 2,
  /**
   * A standing assumption of the design does not hold.
   */
  DistobsStatus_Assumption = 3,
  /**
   * A reproduce-run acceptance check failed.
   */
  DistobsStatus_Acceptance = 4,
  /**
   * A required pointer argument was null.
   */
  DistobsStatus_NullArgument = 5,
  /**
   * A string argument was not valid UTF-8.
   */
  DistobsStatus_InvalidUtf8 = 6,
} DistobsStatus;

/**
 * Opaque handle: a validated scenario (system, designs, schedule,
 * certification) ready to simulate.
 */
typedef struct DistobsScenario DistobsScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Parse and validate a scenario configuration (JSON text).
 *
 * # Safety
 * `json` must point to a NUL-terminated string and `out` to writable
 * pointer storage.
 */
enum DistobsStatus distobs_scenario_from_json(const char *json, struct DistobsScenario **out);

/**
 * Load one of the bundled scenarios: "paper-example", "paper-noise"
 * or "resilience4".
 *
 * # Safety
 * `name` must point to a NUL-terminated string and `out` to writable
 * pointer storage.
 */
enum DistobsStatus distobs_scenario_preset(const char *name, struct DistobsScenario **out);

/**
 * Release a scenario handle. Passing null is a no-op.
 *
 * # Safety
 * `scenario` must be a pointer returned by a constructor of this
 * library that has not been freed yet.
 */
void distobs_scenario_free(struct DistobsScenario *scenario);

/**
 * Serialize the design/certification report of a scenario as JSON.
 *
 * # Safety
 * `scenario` must be a live handle; `out_json` must point to writable
 * pointer storage. The returned string must be freed with
 * `distobs_string_free`.
 */
enum DistobsStatus distobs_design_report_json(const struct DistobsScenario *scenario,
                                              char **out_json);

/**
 * Simulate the scenario; the fixed-key run summary is returned as
 * JSON. When `csv_path` is non-null the sampled trace is also written
 * there.
 *
 * # Safety
 * `scenario` must be a live handle; `csv_path` may be null or a
 * NUL-terminated path; `out_summary_json` must point to writable
 * pointer storage. The returned string must be freed with
 * `distobs_string_free`.
 */
enum DistobsStatus distobs_simulate_json(const struct DistobsScenario *scenario,
                                         const char *csv_path,
                                         char **out_summary_json);

/**
 * Run a bundled scenario end to end, writing its artifacts into
 * `outdir`, and return the acceptance summary as JSON. Returns
 * `Acceptance` (4) when a check fails; the summary is still written.
 *
 * # Safety
 * `preset` and `outdir` must be NUL-terminated strings;
 * `out_summary_json` must point to writable pointer storage. The
 * returned string must be freed with `distobs_string_free`.
 */
enum DistobsStatus distobs_reproduce_json(const char *preset,
                                          const char *outdir,
                                          char **out_summary_json);

/**
 * Release a string returned by this library. Passing null is a no-op.
 *
 * # Safety
 * `s` must be a pointer returned by this library that has not been
 * freed yet.
 */
void distobs_string_free(char *s);

/**
 * Message of the last error raised on this thread. Owned by the
 * library; valid until the next failing call on the same thread.
 */
const char *distobs_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *distobs_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DISTOBS_H */
