#ifndef FUSION_GCN_H
#define FUSION_GCN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FgStatus {
  FG_STATUS_OK = 0,
  FG_STATUS_OTHER = 1,
  FG_STATUS_CONFIG = 2,
  FG_STATUS_DATA = 3,
  FG_STATUS_NUMERIC = 4,
  FG_STATUS_NULL_ARGUMENT = 5,
  FG_STATUS_BUFFER_TOO_SMALL = 6,
  FG_STATUS_PANIC = 7,
} FgStatus;

// Opaque multi-view dataset.
typedef struct FgDataset FgDataset;

// Opaque trained model.
typedef struct FgModel FgModel;

// Training hyperparameters. Obtain defaults from [`fg_train_config_default`].
typedef struct FgTrainConfig {
  size_t fusion_dim;
  size_t h1;
  size_t h2;
  size_t k;
  size_t epochs;
  double learning_rate;
  double beta;
  double lambda1;
  double lambda2;
  double lambda3;
  double epsilon;
  uint64_t seed;
  bool detach_fused_kernel;
  // 0 baseline, 1 +UGA, 2 +UGA+SMAL, 3 +UGA+SMAL+FRAL, 4 full.
  uint32_t ablation_row;
} FgTrainConfig;

typedef struct FgMetrics {
  double acc;
  double nmi;
  double ari;
  double f1;
} FgMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread, or null. The pointer
// stays valid until the next failing call on the same thread.
const char *fg_last_error(void);

// Library version as a static NUL-terminated string.
const char *fg_version(void);

struct FgTrainConfig fg_train_config_default(void);

// Loads a dataset from its manifest file.
//
// # Safety
// `manifest_path` must be a NUL-terminated string and `out` a valid pointer.
enum FgStatus fg_dataset_load(const char *manifest_path, struct FgDataset **out);

// Builds a dataset from row-major view buffers. `views[v]` holds
// `n_samples * view_cols[v]` doubles. `labels` may be null; otherwise it
// holds `n_samples` values in `[0, n_clusters)`.
//
// # Safety
// Every pointer must be valid for the lengths described above.
enum FgStatus fg_dataset_from_views(size_t n_views,
                                    const double *const *views,
                                    const size_t *view_cols,
                                    size_t n_samples,
                                    const size_t *labels,
                                    size_t n_clusters,
                                    struct FgDataset **out);

// Generates a synthetic dataset with a shared noise level.
//
// # Safety
// `view_dims` must hold `n_views` values and `out` must be valid.
enum FgStatus fg_dataset_synthetic(size_t n_samples,
                                   size_t n_clusters,
                                   size_t n_views,
                                   const size_t *view_dims,
                                   double separation,
                                   double noise,
                                   double noise_fraction,
                                   uint64_t seed,
                                   struct FgDataset **out);

// Reports sample, view, and cluster counts; any output pointer may be null.
//
// # Safety
// `dataset` must come from this library and not have been freed.
enum FgStatus fg_dataset_shape(const struct FgDataset *dataset,
                               size_t *n_samples,
                               size_t *n_views,
                               size_t *n_clusters);

// Copies the ground-truth labels into `out` (`n_samples` entries). Returns
// `Data` when the dataset is unlabeled.
//
// # Safety
// `out` must hold `capacity` writable entries.
enum FgStatus fg_dataset_labels(const struct FgDataset *dataset, size_t *out, size_t capacity);

// # Safety
// `dataset` must be null or come from this library and not have been freed.
void fg_dataset_free(struct FgDataset *dataset);

// Trains on `dataset`. A null `config` uses the defaults.
//
// # Safety
// Pointers must be valid; `dataset` must come from this library.
enum FgStatus fg_train(const struct FgDataset *dataset,
                       const struct FgTrainConfig *config,
                       struct FgModel **out);

// # Safety
// `model` must be null or come from this library and not have been freed.
void fg_model_free(struct FgModel *model);

// Total loss after the last epoch (NaN when trained for zero epochs).
//
// # Safety
// `model` and `out` must be valid.
enum FgStatus fg_model_final_loss(const struct FgModel *model, double *out);

// Writes the row-major `[H1, H2, H]` embedding. With a null `out` only the
// shape is reported.
//
// # Safety
// `out` must be null or hold `capacity` writable doubles.
enum FgStatus fg_model_embedding(const struct FgModel *model,
                                 double *out,
                                 size_t capacity,
                                 size_t *rows,
                                 size_t *cols);

// Writes the row-major consensus adjacency `A_f`. With a null `out` only
// the shape is reported.
//
// # Safety
// `out` must be null or hold `capacity` writable doubles.
enum FgStatus fg_model_adjacency(const struct FgModel *model,
                                 double *out,
                                 size_t capacity,
                                 size_t *rows,
                                 size_t *cols);

// k-means on the model embedding into `n_clusters` groups; writes one label
// per sample.
//
// # Safety
// `labels` must hold `capacity` writable entries.
enum FgStatus fg_model_cluster(const struct FgModel *model,
                               size_t n_clusters,
                               size_t restarts,
                               uint64_t seed,
                               size_t *labels,
                               size_t capacity);

// ACC, NMI, ARI and F1 (pairwise, or macro when `macro_f1`).
//
// # Safety
// `truth` and `predicted` must hold `n` entries; `out` must be valid.
enum FgStatus fg_evaluate(const size_t *truth,
                          const size_t *predicted,
                          size_t n,
                          bool macro_f1,
                          struct FgMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FUSION_GCN_H */
