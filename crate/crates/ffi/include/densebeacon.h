#ifndef DENSEBEACON_H
#define DENSEBEACON_H

#include <stddef.h>
#include <stdint.h>

typedef enum DbStatus {
  DB_STATUS_OK = 0,
  DB_STATUS_NULL_POINTER = 1,
  DB_STATUS_INVALID_ARGUMENT = 2,
  DB_STATUS_CONFIG = 3,
  DB_STATUS_IO = 4,
  DB_STATUS_OUT_OF_DOMAIN = 5,
  DB_STATUS_PANIC = 6,
} DbStatus;

/**
 * Hostile-AP counts over the STA grid of one apartment.
 */
typedef struct DbHostileMap DbHostileMap;

/**
 * A parsed and validated scenario.
 */
typedef struct DbScenario DbScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *db_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *db_version(void);

/**
 * Path loss in dB. Fails with `OutOfDomain` unless `distance_m > 1`.
 *
 * # Safety
 * `out_db` must be NULL or point to writable memory for one double.
 */
enum DbStatus db_path_loss_db(double distance_m,
                              double carrier_ghz,
                              uint32_t floors,
                              uint32_t walls,
                              double *out_db);

/**
 * Per-interval time-condition probability for one alien beacon.
 *
 * # Safety
 * `out_p` must be NULL or point to writable memory for one double.
 */
enum DbStatus db_time_condition_probability(double beacon_duration_us,
                                            double preamble_us,
                                            double beacon_interval_ms,
                                            double *out_p);

/**
 * Probability that two random primary channels out of `n_channels` match.
 *
 * # Safety
 * `out_p` must be NULL or point to writable memory for one double.
 */
enum DbStatus db_channel_condition_probability(uint32_t n_channels, double *out_p);

/**
 * Collision persistence and recurrence in seconds for a relative drift.
 * Both are `+inf` at zero drift.
 *
 * # Safety
 * `out_persistence_s` and `out_recurrence_s` must be NULL or point to
 * writable memory for one double each.
 */
enum DbStatus db_drift_spans(double beacon_duration_us,
                             double preamble_us,
                             double beacon_interval_ms,
                             double relative_drift_ppm,
                             double *out_persistence_s,
                             double *out_recurrence_s);

/**
 * Loads and validates a scenario file.
 *
 * # Safety
 * `path` must be NULL or a NUL-terminated string; `out_scenario` must be
 * NULL or point to writable memory for one pointer.
 */
enum DbStatus db_scenario_load(const char *path, struct DbScenario **out_scenario);

/**
 * Parses and validates a scenario from JSON text.
 *
 * # Safety
 * As for [`db_scenario_load`], with `json` in place of `path`.
 */
enum DbStatus db_scenario_parse(const char *json, struct DbScenario **out_scenario);

/**
 * # Safety
 * `scenario` must be NULL or a handle from this library not yet freed.
 */
void db_scenario_free(struct DbScenario *scenario);

/**
 * Replaces the scenario's detection margin.
 *
 * # Safety
 * `scenario` must be NULL or a live handle.
 */
enum DbStatus db_scenario_set_delta_p(struct DbScenario *scenario, double delta_p_db);

/**
 * Computes the hostile map of apartment (floor, row, column).
 *
 * # Safety
 * `scenario` must be NULL or a live handle; `out_map` must be NULL or point
 * to writable memory for one pointer.
 */
enum DbStatus db_hostile_map_new(const struct DbScenario *scenario,
                                 uint32_t floor,
                                 uint32_t row,
                                 uint32_t column,
                                 struct DbHostileMap **out_map);

/**
 * # Safety
 * `map` must be NULL or a handle from this library not yet freed.
 */
void db_hostile_map_free(struct DbHostileMap *map);

/**
 * Grid shape as (points across y, points along x).
 *
 * # Safety
 * `map` must be NULL or a live handle; the out-pointers must be NULL or
 * writable.
 */
enum DbStatus db_hostile_map_shape(const struct DbHostileMap *map,
                                   size_t *out_rows,
                                   size_t *out_cols);

/**
 * Count at grid point (`iy`, `ix`).
 *
 * # Safety
 * `map` must be NULL or a live handle; `out_count` must be NULL or writable.
 */
enum DbStatus db_hostile_map_get(const struct DbHostileMap *map,
                                 size_t iy,
                                 size_t ix,
                                 uint32_t *out_count);

/**
 * Maximum count and its first row-major position.
 *
 * # Safety
 * `map` must be NULL or a live handle; the out-pointers must be NULL or
 * writable.
 */
enum DbStatus db_hostile_map_max(const struct DbHostileMap *map,
                                 uint32_t *out_max,
                                 size_t *out_iy,
                                 size_t *out_ix);

/**
 * Copies the counts row-major into `buf`, which must hold rows × cols values.
 *
 * # Safety
 * `map` must be NULL or a live handle; `buf` must be NULL or valid for
 * `len` writes.
 */
enum DbStatus db_hostile_map_copy(const struct DbHostileMap *map, uint32_t *buf, size_t len);

/**
 * Runs the scenario's Monte Carlo simulation and returns the summary as a
 * JSON string, freed with [`db_string_free`]. `runs` of 0 keeps the
 * scenario's run count.
 *
 * # Safety
 * `scenario` must be NULL or a live handle; `out_json` must be NULL or
 * writable.
 */
enum DbStatus db_simulate_json(const struct DbScenario *scenario,
                               uint32_t runs,
                               uint64_t seed,
                               char **out_json);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library not yet freed.
 */
void db_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DENSEBEACON_H */
