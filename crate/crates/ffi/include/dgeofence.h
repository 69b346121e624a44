#ifndef DGEOFENCE_H
#define DGEOFENCE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DgSolver {
  DG_SOLVER_EXACT = 0,
  DG_SOLVER_ANNEAL = 1,
} DgSolver;

typedef enum DgStatus {
  DG_STATUS_OK = 0,
  DG_STATUS_NULL_POINTER = 1,
  DG_STATUS_INVALID_UTF8 = 2,
  DG_STATUS_INVALID_ARGUMENT = 3,
  DG_STATUS_PARSE = 4,
  DG_STATUS_IO = 5,
  DG_STATUS_EMPTY_INPUT = 6,
  DG_STATUS_INFEASIBLE = 7,
  DG_STATUS_TOO_MANY_VARIABLES = 8,
  DG_STATUS_JSON = 9,
  DG_STATUS_PANIC = 10,
  DG_STATUS_OTHER = 11,
} DgStatus;

/*
 Trajectories in source units.
 */
typedef struct DgDataset DgDataset;

/*
 A compiled quadratic model.
 */
typedef struct DgModel DgModel;

/*
 A solved geofence.
 */
typedef struct DgResult DgResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *dg_version(void);

/*
 Message of the last failed call on this thread, or null. Valid until
 the next failing call on the same thread.
 */
const char *dg_last_error_message(void);

/*
 Releases a string returned by this library. Null is ignored.

 # Safety
 `s` must come from this library and not have been freed.
 */
void dg_string_free(char *s);

/*
 Parses `uid,t,x,y` CSV text.

 # Safety
 `csv` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DgStatus dg_dataset_from_csv(const char *csv, bool has_header, struct DgDataset **out);

/*
 Builds a synthetic preset (`"data1"` or `"data2"`).

 # Safety
 `name` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DgStatus dg_dataset_from_preset(const char *name, struct DgDataset **out);

/*
 Number of users, or 0 for null.

 # Safety
 `ds` must be null or a live dataset handle.
 */
size_t dg_dataset_user_count(const struct DgDataset *ds);

/*
 Number of points, or 0 for null.

 # Safety
 `ds` must be null or a live dataset handle.
 */
size_t dg_dataset_point_count(const struct DgDataset *ds);

/*
 Number of POIs shipped with the dataset (synthetic presets only).

 # Safety
 `ds` must be null or a live dataset handle.
 */
size_t dg_dataset_poi_count(const struct DgDataset *ds);

/*
 Writes POI `index` as `(x, y)` in source units.

 # Safety
 `ds` must be a live dataset handle; `x` and `y` valid pointers.
 */
enum DgStatus dg_dataset_poi(const struct DgDataset *ds, size_t index, double *x, double *y);

/*
 # Safety
 `ds` must be null or a handle not yet freed.
 */
void dg_dataset_free(struct DgDataset *ds);

/*
 Compiles the model described by a JSON solve request.

 # Safety
 `ds` must be a live dataset, `request_json` NUL-terminated, `out` valid.
 */
enum DgStatus dg_model_build(const struct DgDataset *ds,
                             const char *request_json,
                             struct DgModel **out);

/*
 Number of binary variables (grid cells), or 0 for null.

 # Safety
 `m` must be null or a live model handle.
 */
size_t dg_model_variable_count(const struct DgModel *m);

/*
 Variables left free after fixed assignments, or 0 for null.

 # Safety
 `m` must be null or a live model handle.
 */
size_t dg_model_free_count(const struct DgModel *m);

/*
 Objective of a row-major 0/1 assignment of `len` cells.

 # Safety
 `m` must be a live model, `bits` point to `len` bytes, `out` be valid.
 */
enum DgStatus dg_model_energy(const struct DgModel *m,
                              const uint8_t *bits,
                              size_t len,
                              double *out);

/*
 Linear, pairwise, constant, window and fixed terms as JSON.

 # Safety
 `m` must be a live model and `out` valid.
 */
enum DgStatus dg_model_to_json(const struct DgModel *m, char **out);

/*
 Solves a compiled model.

 # Safety
 `m` must be a live model and `out` valid.
 */
enum DgStatus dg_model_solve(const struct DgModel *m,
                             enum DgSolver solver,
                             uint64_t seed,
                             struct DgResult **out);

/*
 # Safety
 `m` must be null or a handle not yet freed.
 */
void dg_model_free(struct DgModel *m);

/*
 Runs a full JSON solve request, including the hierarchical solver.

 # Safety
 `ds` must be a live dataset, `request_json` NUL-terminated, `out` valid.
 */
enum DgStatus dg_solve_discrete(const struct DgDataset *ds,
                                const char *request_json,
                                struct DgResult **out);

/*
 Cells per grid side, or 0 for null.

 # Safety
 `r` must be null or a live result handle.
 */
size_t dg_result_side(const struct DgResult *r);

/*
 Number of selected cells, or 0 for null.

 # Safety
 `r` must be null or a live result handle.
 */
size_t dg_result_selected_count(const struct DgResult *r);

/*
 Whether the selection satisfies the window and fixed cells.

 # Safety
 `r` must be null or a live result handle.
 */
bool dg_result_feasible(const struct DgResult *r);

/*
 Objective value, or NaN for null.

 # Safety
 `r` must be null or a live result handle.
 */
double dg_result_objective(const struct DgResult *r);

/*
 Copies the row-major 0/1 selection into `buf`, which must hold
 `side * side` bytes.

 # Safety
 `r` must be a live result and `buf` point to `len` writable bytes.
 */
enum DgStatus dg_result_selection(const struct DgResult *r, uint8_t *buf, size_t len);

/*
 The result in the same JSON form the CLI prints.

 # Safety
 `r` must be a live result and `out` valid.
 */
enum DgStatus dg_result_to_json(const struct DgResult *r, char **out);

/*
 # Safety
 `r` must be null or a handle not yet freed.
 */
void dg_result_free(struct DgResult *r);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DGEOFENCE_H */
