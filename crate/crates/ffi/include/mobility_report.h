#ifndef MOBILITY_REPORT_H
#define MOBILITY_REPORT_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes shared by all fallible functions.
 */
typedef enum MrStatus {
  MR_STATUS_OK = 0,
  MR_STATUS_NULL_ARGUMENT = 1,
  MR_STATUS_INVALID_UTF8 = 2,
  /**
   * Bad configuration: flags, budget, bins, unbounded sensitivity.
   */
  MR_STATUS_CONFIG_ERROR = 3,
  /**
   * Unusable input data.
   */
  MR_STATUS_DATA_ERROR = 4,
  MR_STATUS_IO_ERROR = 5,
  /**
   * A Rust panic was caught at the boundary.
   */
  MR_STATUS_INTERNAL_ERROR = 6,
} MrStatus;

/**
 * Parsed trips.
 */
typedef struct MrDataset MrDataset;

/**
 * A finished report.
 */
typedef struct MrReport MrReport;

/**
 * Loaded tiles.
 */
typedef struct MrTessellation MrTessellation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failure on this thread, or null. The pointer is
 * valid until the next call into the library from this thread.
 */
const char *mr_last_error(void);

/**
 * Releases a string returned by the library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed already.
 */
void mr_string_free(char *s);

/**
 * Reads a trip CSV with the default column names and a comma delimiter.
 * Invalid rows are skipped; `skipped` (may be null) receives their count.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum MrStatus mr_dataset_load_csv(const char *path, size_t *skipped, struct MrDataset **out);

/**
 * Same as [`mr_dataset_load_csv`] for CSV text held in memory.
 *
 * # Safety
 * `data` must point to `len` readable bytes and `out` be writable.
 */
enum MrStatus mr_dataset_from_csv_bytes(const uint8_t *data,
                                        size_t len,
                                        size_t *skipped,
                                        struct MrDataset **out);

/**
 * Number of trips, or 0 for a null handle.
 *
 * # Safety
 * `ds` must be null or a live dataset handle.
 */
size_t mr_dataset_trip_count(const struct MrDataset *ds);

/**
 * Number of distinct users, or 0 for a null handle.
 *
 * # Safety
 * `ds` must be null or a live dataset handle.
 */
size_t mr_dataset_user_count(const struct MrDataset *ds);

/**
 * # Safety
 * `ds` must be null or a handle not yet freed.
 */
void mr_dataset_free(struct MrDataset *ds);

/**
 * Reads a GeoJSON FeatureCollection of tiles. Invalid features are
 * skipped; `skipped` (may be null) receives their count.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum MrStatus mr_tessellation_load_geojson(const char *path,
                                           size_t *skipped,
                                           struct MrTessellation **out);

/**
 * Same as [`mr_tessellation_load_geojson`] for a GeoJSON string.
 *
 * # Safety
 * `geojson` must be a NUL-terminated string and `out` a writable pointer.
 */
enum MrStatus mr_tessellation_from_geojson(const char *geojson,
                                           size_t *skipped,
                                           struct MrTessellation **out);

/**
 * Number of tiles, or 0 for a null handle.
 *
 * # Safety
 * `t` must be null or a live tessellation handle.
 */
size_t mr_tessellation_tile_count(const struct MrTessellation *t);

/**
 * # Safety
 * `t` must be null or a handle not yet freed.
 */
void mr_tessellation_free(struct MrTessellation *t);

/**
 * Builds a report. `config_json` holds the report configuration object
 * (`epsilon`, `privacy_mode`, `max_trips_per_user`, `seed`, `measures`,
 * ...); null means all defaults.
 *
 * # Safety
 * `ds` and `tess` must be live handles, `config_json` null or a
 * NUL-terminated string, and `out` writable.
 */
enum MrStatus mr_report_generate(const struct MrDataset *ds,
                                 const struct MrTessellation *tess,
                                 const char *config_json,
                                 struct MrReport **out);

/**
 * Canonical JSON of the report. Free the result with [`mr_string_free`].
 *
 * # Safety
 * `report` must be a live handle and `out` writable.
 */
enum MrStatus mr_report_to_json(const struct MrReport *report, char **out);

/**
 * Self-contained HTML page. Free the result with [`mr_string_free`].
 *
 * # Safety
 * `report` must be a live handle and `out` writable.
 */
enum MrStatus mr_report_to_html(const struct MrReport *report, char **out);

/**
 * # Safety
 * `report` must be null or a handle not yet freed.
 */
void mr_report_free(struct MrReport *report);

/**
 * Great-circle distance in meters between two points in degrees.
 */
double mr_haversine_distance(double lat1, double lng1, double lat2, double lng2);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MOBILITY_REPORT_H */
