/* C interface to the multifidelity GP library. Every call returns a status;
 * on failure mfgp_last_error() holds a message for the calling thread.
 * Strings returned through char** must be released with mfgp_string_free. */
#ifndef MFGP_MFGP_H
#define MFGP_MFGP_H

#include <stddef.h>
#include <stdint.h>

#if defined(MFGP_BUILDING_LIBRARY)
#define MFGP_API __attribute__((visibility("default")))
#else
#define MFGP_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mfgp_status {
  MFGP_OK = 0,
  MFGP_ERR_INVALID_ARGUMENT = 1,
  MFGP_ERR_NUMERICAL = 2,
  MFGP_ERR_DOMAIN = 3,
  MFGP_ERR_PARSE = 4,
  MFGP_ERR_SCHEMA = 5,
  MFGP_ERR_IO = 6,
  MFGP_ERR_STATE = 7,
  MFGP_ERR_INTERNAL = 8
} mfgp_status;

typedef struct mfgp_model mfgp_model;

MFGP_API const char* mfgp_version(void);
MFGP_API const char* mfgp_last_error(void);
MFGP_API const char* mfgp_status_name(mfgp_status s);
/* 0 ok, 3 numerical or domain failures, 2 for everything else. */
MFGP_API int mfgp_exit_code(mfgp_status s);
MFGP_API void mfgp_string_free(char* s);

/* Writes a CSV (fidelity,x1..xd,y[,g1..gd]) for a data source such as
 * "branin:medium". with_gradients = 0 drops the gradient columns. */
MFGP_API mfgp_status mfgp_gen_data(const char* source, uint64_t seed, int with_gradients,
                                   const char* path);

/* Builds the model described by a JSON run config, untrained. */
MFGP_API mfgp_status mfgp_model_create(const char* config_json, mfgp_model** out);
MFGP_API mfgp_status mfgp_model_train(mfgp_model* model);
MFGP_API mfgp_status mfgp_model_load(const char* path, mfgp_model** out);
MFGP_API mfgp_status mfgp_model_save(const mfgp_model* model, const char* path);
MFGP_API void mfgp_model_free(mfgp_model* model);
MFGP_API mfgp_status mfgp_model_dim(const mfgp_model* model, int* dim);
MFGP_API mfgp_status mfgp_model_is_trained(const mfgp_model* model, int* trained);
/* x is n*d row-major; mean and std receive n values in original units. */
MFGP_API mfgp_status mfgp_model_predict(const mfgp_model* model, const double* x, size_t n,
                                        size_t d, double* mean, double* std);
/* Loss trace as JSON [[iteration, stage, rate, loss], ...]. */
MFGP_API mfgp_status mfgp_model_loss_json(const mfgp_model* model, char** out);

/* Train command: writes model.json, loss.csv, metrics.json, manifest.json
 * to the config's output_dir. metrics_json may be NULL. */
MFGP_API mfgp_status mfgp_train(const char* config_json, char** metrics_json);

/* Predicts at the x1..xd columns of points_csv and writes predictions.csv. */
MFGP_API mfgp_status mfgp_predict_file(const char* model_path, const char* points_csv,
                                       const char* out_csv);

/* options_json: {"config": {...}, "models": "lmc,dgp-grad-elbo", "seeds": 5, "jobs": 1,
 * "grad_dgp_beta": 2}. grad_dgp_beta defaults to 2 for csv sources; null turns it off.
 * Writes metrics.json, metrics.csv and manifest.json; table_json may be NULL. */
MFGP_API mfgp_status mfgp_benchmark(const char* options_json, char** table_json);

/* options_json: {"sweep": "x2", "fix": ["x1=2.5"], "lo": a, "hi": b, "points": 200}. */
MFGP_API mfgp_status mfgp_slice(const char* model_path, const char* options_json,
                                const char* out_csv);

#ifdef __cplusplus
}
#endif

#endif
