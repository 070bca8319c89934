/* tgv — time-gated video transformer, C API.
 *
 * Every function returns a tgv_status; out-parameters are written only on
 * TGV_OK (the two check suites also write their table on TGV_CHECK_FAILED,
 * so callers can print what failed). On any non-OK status,
 * tgv_last_error() holds a human-readable message for the current thread.
 *
 * Strings returned through char** out-parameters are heap-allocated and
 * must be released with tgv_string_free(). Handles are released with their
 * matching *_free(), which tolerates NULL. Handles are not thread-safe;
 * share nothing or guard externally.
 */
#ifndef TGV_H
#define TGV_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum tgv_status {
  TGV_OK = 0,
  TGV_CHECK_FAILED = 1,  /* a check suite ran to completion and found failures */
  TGV_ERR_CONFIG = 2,    /* invalid configuration value, key, or file */
  TGV_ERR_USAGE = 3,     /* API misuse: bad handle, bad argument, bad shape */
  TGV_ERR_IO = 4,        /* filesystem or serialization failure */
  TGV_ERR_NUMERIC = 5,   /* non-finite values encountered while training */
  TGV_ERR_INTERNAL = 6   /* unexpected failure; report a bug */
} tgv_status;

/* Message for the most recent failing call on this thread. Never NULL;
 * empty after a successful call. The buffer is owned by the library and
 * valid until the next API call on the same thread. */
const char* tgv_last_error(void);

/* Frees a string the library returned through a char** out-parameter. */
void tgv_string_free(char* s);

/* Static version string, e.g. "0.1.0". Do not free. */
const char* tgv_version(void);

/* The name of a status code, e.g. "TGV_ERR_CONFIG". Do not free. */
const char* tgv_status_name(tgv_status status);

/* ---------------------------------------------------------------- config */

/* A full run configuration: model topology, synthetic-data recipe, and
 * optimization settings, with the same defaults as an empty JSON file. */
typedef struct tgv_config tgv_config;

tgv_status tgv_config_create(tgv_config** out);
tgv_status tgv_config_load(const char* path, tgv_config** out);
/* `origin` names the source in error messages; NULL means "<string>". */
tgv_status tgv_config_parse(const char* json_text, const char* origin,
                            tgv_config** out);
/* One dotted assignment, e.g. "train.lr=0.002" or "model.tg.num_layers=4",
 * with the same strict value parsing as the file form. */
tgv_status tgv_config_set(tgv_config* cfg, const char* assignment);
tgv_status tgv_config_validate(const tgv_config* cfg);
/* Fully-resolved nested JSON (2-space indent, trailing newline). */
tgv_status tgv_config_json(const tgv_config* cfg, char** out_json);
/* Canonical string value of one dotted key, e.g. "train.seed" -> "1".
 * Unknown keys fail with TGV_ERR_CONFIG. */
tgv_status tgv_config_get(const tgv_config* cfg, const char* key,
                          char** out_value);
void tgv_config_free(tgv_config* cfg);

/* ------------------------------------------------------------------ data */

/* Deterministic synthetic train/test splits generated from the config's
 * data section. Identical configs give bitwise-identical datasets. */
typedef struct tgv_dataset tgv_dataset;

tgv_status tgv_dataset_create(const tgv_config* cfg, tgv_dataset** out);
tgv_status tgv_dataset_sizes(const tgv_dataset* data, int64_t* out_train,
                             int64_t* out_test);
void tgv_dataset_free(tgv_dataset* data);

/* ---------------------------------------------------------------- models */

typedef struct tgv_model tgv_model;

/* Fresh model from the config's model section; `seed` fixes every
 * initial weight. */
tgv_status tgv_model_create(const tgv_config* cfg, uint64_t seed,
                            tgv_model** out);
tgv_status tgv_model_load(const char* checkpoint_path, tgv_model** out);
tgv_status tgv_model_save(const tgv_model* model, const char* checkpoint_path);
void tgv_model_free(tgv_model* model);

/* ------------------------------------------------------------- workflows */

/* Analytic-vs-numeric gradient comparison over every parameter of the
 * built-in tiny model. Writes the verdict table (also on TGV_CHECK_FAILED).
 * `out_table` may be NULL if only the status is wanted. */
tgv_status tgv_grad_check(uint64_t seed, char** out_table);

/* The library's internal consistency suite (attention reference, gate
 * identities, locality, optimizer, checkpoint round-trip). Same out-table
 * contract as tgv_grad_check. */
tgv_status tgv_oracle_check(uint64_t seed, char** out_table);

/* Trains `model` in place on `data` with the config's train section. When
 * `out_dir` is non-NULL and non-empty, writes <label>.ckpt and
 * <label>.report.json there. `label` NULL means "run"; `out_report_json`
 * may be NULL. */
tgv_status tgv_train(tgv_model* model, const tgv_dataset* data,
                     const tgv_config* cfg, const char* out_dir,
                     const char* label, char** out_report_json);

/* Accuracy of `model` on the dataset's test split. */
tgv_status tgv_evaluate(const tgv_model* model, const tgv_dataset* data,
                        double* out_accuracy);

/* Trains the standard variant grid (component toggles plus the layer-count
 * sweep) on one shared dataset. Per-variant checkpoints and reports land in
 * `out_dir` (required); the CSV table is written to <out_dir>/ablation.csv
 * and returned via `out_csv` when non-NULL. `workers` >= 1 is the number
 * of concurrent training threads. Individual variant failures are recorded
 * in the CSV error column; the call still returns TGV_OK. */
tgv_status tgv_ablate(const tgv_dataset* data, const tgv_config* cfg,
                      const char* out_dir, int64_t workers, char** out_csv);

/* Runs `model` on one test-split sample, captures the sigmoid gates of the
 * requested layer and submodule ("spatial", "temporal", or "mlp"), pools
 * them over channels, and writes the heatmap to `path` in `format` ("csv"
 * or "pgm"). Fails with TGV_ERR_USAGE when gating is disabled, overridden,
 * or the submodule/layer/sample is out of range. */
tgv_status tgv_export_gates(const tgv_model* model, const tgv_dataset* data,
                            int64_t sample_index, int64_t layer,
                            const char* submodule, const char* format,
                            const char* path);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* TGV_H */
