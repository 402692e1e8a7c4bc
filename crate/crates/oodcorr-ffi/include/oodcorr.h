/* C API for the oodcorr partial OOD correlation library.
 *
 * Handles are opaque and owned by the library; release them with the
 * matching *_free function. Fallible calls return an OodcorrStatus code and
 * set a per-thread message retrievable via oodcorr_last_error().
 *
 * Maintained by hand; the Rust test `header_sync` checks that every exported
 * symbol is declared here.
 */

#ifndef OODCORR_H
#define OODCORR_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef struct OodcorrRunSet OodcorrRunSet;
typedef struct OodcorrResult OodcorrResult;

typedef enum OodcorrStatus {
  OODCORR_OK = 0,
  OODCORR_ERR_USAGE = 1,         /* bad flag/enum/config value */
  OODCORR_ERR_INPUT = 2,         /* unparsable or invalid input data */
  OODCORR_ERR_NUMERIC = 3,       /* fit failure (singular/degenerate) */
  OODCORR_ERR_NULL_ARGUMENT = 4,
  OODCORR_ERR_UTF8 = 5,
  OODCORR_ERR_INDEX = 6,
  OODCORR_UNDEFINED = 7,         /* requested value is undefined, not an error */
  OODCORR_ERR_IO = 8,
  OODCORR_ERR_PANIC = 9
} OodcorrStatus;

typedef enum OodcorrRegressor {
  OODCORR_REGRESSOR_LINEAR = 0,
  OODCORR_REGRESSOR_RIDGE = 1,
  OODCORR_REGRESSOR_GAM = 2
} OodcorrRegressor;

typedef enum OodcorrAlign {
  OODCORR_ALIGN_STRICT = 0,
  OODCORR_ALIGN_INTERSECT = 1
} OodcorrAlign;

/* Message for the most recent failure on this thread; valid until the next
 * failing call on the same thread. */
const char *oodcorr_last_error(void);

/* Static version string. */
const char *oodcorr_version(void);

/* Parses a trace CSV (header run,step,dataset,accuracy), aligns checkpoints
 * under the given policy and validates the result. */
int oodcorr_runset_parse_csv(const char *path, const char *in_domain,
                             int align, OodcorrRunSet **out);

/* Number of traces (runs); 0 for NULL. */
size_t oodcorr_runset_n_traces(const OodcorrRunSet *handle);

void oodcorr_runset_free(OodcorrRunSet *handle);

/* Partial correlations with the chosen regressor. ridge_lambda is read for
 * the ridge regressor, n_basis for the spline smoother. per_run != 0
 * selects the per-run Fisher-z variant. */
int oodcorr_analyze(const OodcorrRunSet *handle, int regressor,
                    double ridge_lambda, size_t n_basis, int per_run,
                    OodcorrResult **out);

/* Number of OOD datasets in the matrix; 0 for NULL. */
size_t oodcorr_result_n_datasets(const OodcorrResult *handle);

/* Copies dataset name `index` into buf (NUL-terminated, truncating) and
 * returns the required size including the terminator, or 0 on error. Call
 * with buf == NULL, len == 0 to query the size. */
size_t oodcorr_result_dataset_name(const OodcorrResult *handle, size_t index,
                                   char *buf, size_t len);

/* Matrix entry (i, j). OODCORR_OK writes *out; OODCORR_UNDEFINED leaves it
 * untouched. */
int oodcorr_result_entry(const OodcorrResult *handle, size_t i, size_t j,
                         double *out);

/* Mean of the defined off-diagonal pairs; OODCORR_UNDEFINED when none. */
int oodcorr_result_average(const OodcorrResult *handle, double *out);

int oodcorr_result_write_json(const OodcorrResult *handle, const char *path);
int oodcorr_result_write_csv(const OodcorrResult *handle, const char *path);
int oodcorr_result_render_heatmap_svg(const OodcorrResult *handle,
                                      const char *path);
int oodcorr_result_render_graph_dot(const OodcorrResult *handle,
                                    const char *path);

void oodcorr_result_free(OodcorrResult *handle);

/* Generates synthetic traces from a JSON config string; writes the trace CSV
 * and its .meta.json sidecar. */
int oodcorr_simulate_to_csv(const char *config_json, const char *output_path);

#ifdef __cplusplus
}
#endif

#endif /* OODCORR_H */
