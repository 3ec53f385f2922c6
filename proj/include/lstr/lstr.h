/* lstr: sparse latent-reasoning laboratory, C interface.
 *
 * All entry points return lstr_status; any non-LSTR_OK result leaves a
 * human-readable message in lstr_last_error() (thread-local). Handles are
 * opaque and must be released with the matching *_free function. Every
 * randomized operation is fully determined by the seed it is given.
 */
#ifndef LSTR_H
#define LSTR_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#define LSTR_VERSION_MAJOR 1
#define LSTR_VERSION_MINOR 0
#define LSTR_VERSION_PATCH 0

const char* lstr_version(void);

typedef enum lstr_status {
  LSTR_OK = 0,
  LSTR_ERR_INVALID_ARGUMENT = 1, /* bad handle, key, value, range, or shape */
  LSTR_ERR_FORMAT = 2,           /* unreadable or corrupt file contents */
  LSTR_ERR_RUNTIME = 3           /* I/O failures and internal errors */
} lstr_status;

const char* lstr_status_name(lstr_status status);

/* Message describing the most recent failure on this thread. */
const char* lstr_last_error(void);

typedef struct lstr_config lstr_config;
typedef struct lstr_dataset lstr_dataset;
typedef struct lstr_model lstr_model;

/* ---- run configuration ---------------------------------------------- */

/* Fresh configuration with default hyperparameters. */
lstr_status lstr_config_create(lstr_config** out);
/* Parse a "key = value" file; unknown keys are rejected. */
lstr_status lstr_config_load(const char* path, lstr_config** out);
lstr_status lstr_config_set(lstr_config* cfg, const char* key, const char* value);
/* Copies the value into buf (NUL-terminated); fails if buf_size is too small. */
lstr_status lstr_config_get(const lstr_config* cfg, const char* key, char* buf, size_t buf_size);
lstr_status lstr_config_save(const lstr_config* cfg, const char* path);
void lstr_config_free(lstr_config* cfg);

/* ---- datasets -------------------------------------------------------- */

/* steps_spec: comma-separated "steps:count" pairs, e.g. "2:100,3:200". */
lstr_status lstr_dataset_generate(const char* steps_spec, uint64_t seed, lstr_dataset** out);
lstr_status lstr_dataset_load(const char* jsonl_path, lstr_dataset** out);
lstr_status lstr_dataset_save(const lstr_dataset* ds, const char* jsonl_path);
size_t lstr_dataset_size(const lstr_dataset* ds);
void lstr_dataset_free(lstr_dataset* ds);

/* ---- training --------------------------------------------------------- */

typedef struct lstr_epoch_stats {
  int epoch;
  double train_loss;
  double fvu;
  double token_ce;
  double val_accuracy;
  double val_mean_latent_steps;
  long dead_features;
} lstr_epoch_stats;

typedef void (*lstr_epoch_callback)(const lstr_epoch_stats* stats, void* user_data);

/* Supervised fine-tuning per the configuration. When val_set is NULL a
 * validation split is carved from train_set (config val_fraction). The
 * returned model is the best-validation snapshot. */
lstr_status lstr_train(const lstr_config* cfg, const lstr_dataset* train_set,
                       const lstr_dataset* val_set, lstr_epoch_callback cb, void* user_data,
                       lstr_model** out);

/* ---- model checkpoints ------------------------------------------------- */

lstr_status lstr_model_save(const lstr_model* model, const char* path);
lstr_status lstr_model_load(const char* path, lstr_model** out);
void lstr_model_free(lstr_model* model);

int lstr_model_sparsity_budget(const lstr_model* model); /* trained k */
int lstr_model_dict_size(const lstr_model* model);       /* d_feat */
int lstr_model_compression_ratio(const lstr_model* model);

/* ---- evaluation and sweeps ---------------------------------------------- */

typedef struct lstr_eval_result {
  double accuracy;
  double mean_latent_steps;
} lstr_eval_result;

/* k_override < 0 evaluates at the trained sparsity budget. */
lstr_status lstr_evaluate(const lstr_model* model, const lstr_dataset* ds, int k_override,
                          int threads, lstr_eval_result* out);

/* Writes "k,accuracy,mean_L" rows, one per entry of ks. */
lstr_status lstr_sweep_k(const lstr_model* model, const lstr_dataset* ds, const int* ks,
                         size_t n_ks, int threads, const char* out_csv);

/* Trains one model per entry of rs (base config with r overridden) and
 * writes "r,accuracy,mean_L" rows evaluated on test_set. */
lstr_status lstr_sweep_r(const lstr_config* base_cfg, const lstr_dataset* train_set,
                         const lstr_dataset* test_set, const int* rs, size_t n_rs,
                         lstr_epoch_callback cb, void* user_data, const char* out_csv);

/* ---- mechanistic analysis ------------------------------------------------ */

/* Rolls the model over the dataset and writes, under out_dir:
 *   traces.jsonl, step_metrics.csv, step_metrics_correct.csv,
 *   step_metrics_incorrect.csv, rank_frequency.csv, feature_tokens.csv,
 *   cosine_matrix.csv, summary.json */
lstr_status lstr_analyze(const lstr_model* model, const lstr_dataset* ds, int k_override,
                         int threads, const char* out_dir);

/* mode: "amplify" (value = gamma > 0), "set" (value), or "ablate".
 * Writes a JSON report comparing the original and intervened rollouts. */
lstr_status lstr_intervene(const lstr_model* model, const lstr_dataset* ds, size_t problem_index,
                           int step_index, int feature_id, const char* mode, double value,
                           const char* out_json_path);

/* Step-wise sparse-path ablation over correctly solved problems; writes
 * ablation_records.csv and necessity.csv under out_dir. max_problems == 0
 * means no cap. */
lstr_status lstr_ablate_steps(const lstr_model* model, const lstr_dataset* ds, int n_bins,
                              size_t max_problems, int threads, const char* out_dir);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* LSTR_H */
