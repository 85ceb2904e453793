#ifndef LAZYREG_H
#define LAZYREG_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum LrAlgo {
  LR_ALGO_SGD = 0,
  LR_ALGO_FOBOS = 1,
} LrAlgo;

typedef enum LrSchedule {
  LR_SCHEDULE_CONSTANT = 0,
  LR_SCHEDULE_INVERSE_T = 1,
  LR_SCHEDULE_INVERSE_SQRT_T = 2,
} LrSchedule;

typedef enum LrStatus {
  LR_STATUS_OK = 0,
  // Null pointer, bad enum value, or a violated precondition.
  LR_STATUS_INVALID_ARGUMENT = 1,
  LR_STATUS_INVALID_CONFIG = 2,
  // SGD with `eta * l2 >= 1`.
  LR_STATUS_INVALID_RATE = 3,
  LR_STATUS_OUT_OF_RANGE = 4,
  LR_STATUS_TABLE_NOT_MAINTAINED = 5,
  LR_STATUS_PARSE = 6,
  LR_STATUS_DIMENSION_MISMATCH = 7,
  LR_STATUS_NON_FINITE = 8,
  LR_STATUS_IO = 9,
  // A Rust panic was caught at the boundary.
  LR_STATUS_INTERNAL = 10,
} LrStatus;

typedef enum LrTable {
  LR_TABLE_S = 0,
  LR_TABLE_P = 1,
  LR_TABLE_B = 2,
  LR_TABLE_PHI = 3,
  LR_TABLE_BETA = 4,
} LrTable;

typedef struct LrCache LrCache;

typedef struct LrDataset LrDataset;

typedef struct LrModel LrModel;

typedef struct LrTrainConfig {
  enum LrAlgo algo;
  double lambda1;
  double lambda2;
  double eta0;
  enum LrSchedule schedule;
  uint64_t epochs;
  // Maximum steps between flushes; 0 means one epoch.
  uint64_t flush_budget;
  uint64_t seed;
} LrTrainConfig;

typedef struct LrTrainReport {
  uint64_t epochs_run;
  double final_loss;
  uint64_t nonzero_weights;
  double per_example_seconds;
  uint64_t flush_count;
  uint64_t steps;
} LrTrainReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or an empty string.
// The pointer stays valid until the next `lr_` call on the same thread.
const char *lr_last_error_message(void);

// SGD, no regularization, eta0 = 0.1, 1/sqrt(1+t) schedule, one epoch,
// per-epoch flushes, seed 0.
struct LrTrainConfig lr_train_config_default(void);

// Reads a libsvm file. `dims` = 0 infers the dimensionality.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a writable pointer.
enum LrStatus lr_dataset_read_libsvm(const char *path,
                                     uint32_t index_base,
                                     uintptr_t dims,
                                     struct LrDataset **out);

// Parses libsvm text from a buffer of `len` bytes.
//
// # Safety
// `text` must point to `len` readable bytes; `out` must be writable.
enum LrStatus lr_dataset_parse_libsvm(const uint8_t *text,
                                      uintptr_t len,
                                      uint32_t index_base,
                                      uintptr_t dims,
                                      struct LrDataset **out);

// Synthetic data: `n` examples over `d` features with exactly `p` nonzeros
// each. When `true_weights` is non-null it receives the `d` generating weights.
//
// # Safety
// `out` must be writable; `true_weights`, if non-null, must hold `d` doubles.
enum LrStatus lr_dataset_generate(uintptr_t n,
                                  uintptr_t d,
                                  uintptr_t p,
                                  double weight_sparsity,
                                  uint64_t seed,
                                  double *true_weights,
                                  struct LrDataset **out);

// Appends one example; `label` > 0 is positive. Indices must be strictly
// increasing and below the dataset's dimensionality.
//
// # Safety
// `data` must be a live handle; `indices` and `values` must hold `nnz` items.
enum LrStatus lr_dataset_push(struct LrDataset *data,
                              const uint32_t *indices,
                              const double *values,
                              uintptr_t nnz,
                              int32_t label);

// An empty dataset over `dims` features, to be filled with [`lr_dataset_push`].
//
// # Safety
// `out` must be writable.
enum LrStatus lr_dataset_new(uintptr_t dims, struct LrDataset **out);

// # Safety
// `data` must be a live handle; `n` and `d` must be writable.
enum LrStatus lr_dataset_shape(const struct LrDataset *data, uintptr_t *n, uintptr_t *d);

// # Safety
// `data` must be null or a handle not yet freed.
void lr_dataset_free(struct LrDataset *data);

// Trains with lazy regularization. `out_report` may be null.
//
// # Safety
// `data` and `config` must be valid; `out_model` writable.
enum LrStatus lr_train(const struct LrDataset *data,
                       const struct LrTrainConfig *config,
                       struct LrModel **out_model,
                       struct LrTrainReport *out_report);

// Trains the dense reference, regularizing every weight on every step.
//
// # Safety
// As [`lr_train`].
enum LrStatus lr_train_dense(const struct LrDataset *data,
                             const struct LrTrainConfig *config,
                             bool sparse_predictions,
                             struct LrModel **out_model,
                             struct LrTrainReport *out_report);

// Positive-class probability for one sparse example.
//
// # Safety
// `model` must be live; `indices`/`values` must hold `nnz` items; `out` writable.
enum LrStatus lr_model_predict(const struct LrModel *model,
                               const uint32_t *indices,
                               const double *values,
                               uintptr_t nnz,
                               double *out);

// # Safety
// `model` must be live; `out` writable.
enum LrStatus lr_model_dims(const struct LrModel *model, uintptr_t *out);

// Copies the weights into `buf`, which must hold `len` >= dims doubles.
//
// # Safety
// `model` must be live; `buf` must hold `len` doubles.
enum LrStatus lr_model_weights(const struct LrModel *model, double *buf, uintptr_t len);

// # Safety
// `path` must be a NUL-terminated string; `out` writable.
enum LrStatus lr_model_read(const char *path, struct LrModel **out);

// # Safety
// `model` must be live; `path` a NUL-terminated string.
enum LrStatus lr_model_write(const struct LrModel *model, const char *path);

// # Safety
// `model` must be null or a handle not yet freed.
void lr_model_free(struct LrModel *model);

// A schedule cache. Full caches require `eta0 * lambda2 < 1`; with
// `proximal_only` the P and B tables are not kept and that limit is lifted.
//
// # Safety
// `out` must be writable.
enum LrStatus lr_cache_new(enum LrSchedule schedule,
                           double eta0,
                           double lambda2,
                           bool proximal_only,
                           struct LrCache **out);

// Fills rows through step `t`.
//
// # Safety
// `cache` must be live.
enum LrStatus lr_cache_extend(struct LrCache *cache, int64_t t);

// Drops all rows and restarts the tables at `new_base`.
//
// # Safety
// `cache` must be live.
enum LrStatus lr_cache_rebase(struct LrCache *cache, uint64_t new_base);

// # Safety
// `cache` must be live; `out` writable.
enum LrStatus lr_cache_lookup(const struct LrCache *cache,
                              enum LrTable table,
                              int64_t t,
                              double *out);

// Brings a weight last made current at step `psi` up to step `k`, reading
// `cache`, which must have been built with the same `lambda2`.
//
// # Safety
// `cache` must be live; `out` writable.
enum LrStatus lr_lazy_update(double w,
                             uint64_t psi,
                             uint64_t k,
                             enum LrAlgo algo,
                             double lambda1,
                             double lambda2,
                             const struct LrCache *cache,
                             double *out);

// # Safety
// `cache` must be null or a handle not yet freed.
void lr_cache_free(struct LrCache *cache);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LAZYREG_H */
