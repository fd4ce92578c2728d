/*
 * strataclip C API.
 *
 * Every fallible call returns an sc_status; on failure the message is
 * available from sc_last_error() on the calling thread until the next call
 * that fails. Objects are opaque handles released with their *_free function;
 * passing NULL to a *_free function is a no-op.
 */
#ifndef STRATACLIP_STRATACLIP_H
#define STRATACLIP_STRATACLIP_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(STRATACLIP_BUILDING_LIBRARY)
#    define SC_API __declspec(dllexport)
#  else
#    define SC_API __declspec(dllimport)
#  endif
#else
#  define SC_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sc_status {
  SC_OK = 0,
  SC_ERR_INVALID_ARGUMENT = 1,
  SC_ERR_PARSE = 2,
  SC_ERR_RUNTIME = 3,
  SC_ERR_BUFFER_TOO_SMALL = 4,
  SC_ERR_INTERNAL = 5
} sc_status;

SC_API const char* sc_last_error(void);
SC_API const char* sc_version(void);
/* Releases strings returned through char** out-parameters. */
SC_API void sc_string_free(char* s);

/* ---- sequence data ------------------------------------------------------ */

typedef struct sc_distribution sc_distribution;
typedef struct sc_corpus sc_corpus;

/* Wikipedia-like four-bin histogram, max length 512. */
SC_API sc_status sc_distribution_default(sc_distribution** out);
SC_API sc_status sc_distribution_create(const int32_t* boundaries, const double* probs, size_t bins,
                                        int32_t max_seq_len, sc_distribution** out);
/* JSON object or `key = [..]` lines with bin_boundaries / bin_probs. */
SC_API sc_status sc_distribution_load(const char* path, sc_distribution** out);
SC_API int32_t sc_distribution_max_seq_len(const sc_distribution* dist);
SC_API void sc_distribution_free(sc_distribution* dist);

SC_API sc_status sc_corpus_generate(const sc_distribution* dist, uint64_t n, uint64_t seed,
                                    sc_corpus** out);
/* Newline-delimited lengths; parse errors name the line. */
SC_API sc_status sc_corpus_load(const char* path, int32_t max_seq_len, sc_corpus** out);
SC_API sc_status sc_corpus_from_lengths(const int32_t* lengths, size_t n, int32_t max_seq_len,
                                        sc_corpus** out);
SC_API size_t sc_corpus_size(const sc_corpus* corpus);
/* Copies lengths in id order; fails with SC_ERR_BUFFER_TOO_SMALL if cap < size. */
SC_API sc_status sc_corpus_lengths(const sc_corpus* corpus, int32_t* out, size_t cap);
/* Writes the length-list format; path NULL or "-" writes to stdout. */
SC_API sc_status sc_corpus_write(const sc_corpus* corpus, const char* path);
SC_API void sc_corpus_free(sc_corpus* corpus);

/* ---- strata ------------------------------------------------------------- */

/* Largest-remainder apportionment of local_batch over probs[0..n). */
SC_API sc_status sc_allocate_counts(const double* probs, size_t n, int32_t local_batch,
                                    int32_t* counts_out);

/* ---- batch balancing ---------------------------------------------------- */

typedef enum sc_strategy {
  SC_STRATEGY_NONE = 0,
  SC_STRATEGY_STRATIFIED = 1,
  SC_STRATEGY_GLOBAL_PRESORT = 2,
  SC_STRATEGY_PACKING = 3,
  SC_STRATEGY_LOCAL_PRESORT = 4
} sc_strategy;

typedef enum sc_scan { SC_SCAN_RASTER = 0, SC_SCAN_SNAKE = 1 } sc_scan;

SC_API sc_status sc_strategy_from_name(const char* name, sc_strategy* out);
SC_API sc_status sc_scan_from_name(const char* name, sc_scan* out);

typedef struct sc_balance_config {
  sc_strategy strategy;
  sc_scan scan;
  int32_t num_nodes;
  int32_t gpus_per_node;
  int32_t local_batch;
  int64_t trials;
  uint64_t seed;
  int32_t pack_limit;
  uint32_t threads; /* 0 = hardware concurrency; never changes results */
} sc_balance_config;

/* local_presort + snake, 8 nodes x 8 GPUs, local batch 16, 10^4 trials. */
SC_API void sc_balance_config_init(sc_balance_config* cfg);

#define SC_LABEL_CAPACITY 32
#define SC_ABLATION_ROWS 5

typedef struct sc_balance_stats {
  char label[SC_LABEL_CAPACITY];
  int32_t gpus;
  int32_t local_batch;
  int64_t trials;
  double avg_min;
  double avg_max;
  double avg_range;
  double stderr_min;
  double stderr_max;
  double stderr_range;
} sc_balance_stats;

/* A corpus prepared for balance experiments (stratified and packed once). */
typedef struct sc_balance_corpus sc_balance_corpus;

/* boundaries NULL selects 128/256/384/512. */
SC_API sc_status sc_balance_corpus_create(const sc_corpus* corpus, const int32_t* boundaries,
                                          size_t n_boundaries, int32_t pack_limit,
                                          int32_t max_seq_len, sc_balance_corpus** out);
SC_API double sc_balance_corpus_packing_ratio(const sc_balance_corpus* bc);
SC_API void sc_balance_corpus_free(sc_balance_corpus* bc);

SC_API sc_status sc_balance_run(const sc_balance_corpus* bc, const sc_balance_config* cfg,
                                sc_balance_stats* out);
/* Fills SC_ABLATION_ROWS rows: none, stratified, local presort raster,
 * local presort snake, global presort raster. */
SC_API sc_status sc_balance_ablation(const sc_balance_corpus* bc, const sc_balance_config* cfg,
                                     sc_balance_stats* rows);

/* Assigns one batch (lengths, ids = positions) and returns the per-GPU id
 * lists and token counts as a JSON document. For SC_STRATEGY_LOCAL_PRESORT
 * and SC_STRATEGY_STRATIFIED the batch is read as consecutive equal-size
 * per-GPU draws; for SC_STRATEGY_PACKING it is packed first (pack_limit 2). */
SC_API sc_status sc_assign_batch(sc_strategy strategy, sc_scan scan, const int32_t* lengths,
                                 size_t n, int32_t num_nodes, int32_t gpus_per_node,
                                 char** json_out);

/* ---- gradient synchronization ------------------------------------------ */

typedef enum sc_clip_mode {
  SC_CLIP_AFTER_ALLREDUCE = 0,
  SC_CLIP_BEFORE_ALLREDUCE = 1,
  SC_CLIP_BUCKET_WISE = 2
} sc_clip_mode;

SC_API sc_status sc_clip_mode_from_name(const char* name, sc_clip_mode* out);
SC_API const char* sc_clip_mode_name(sc_clip_mode mode);

SC_API sc_status sc_clip_by_norm(double* g, size_t n, double limit);

/* workers: row-major K x D. bucket_bounds: B+1 ascending offsets from 0 to D,
 * or NULL for B equal contiguous buckets. out: D values. */
SC_API sc_status sc_sync_gradients(const double* workers, size_t num_workers, size_t dim,
                                   const size_t* bucket_bounds, size_t num_buckets,
                                   double threshold, sc_clip_mode mode, double* out);

/* ---- timeline ----------------------------------------------------------- */

typedef struct sc_timeline_plan sc_timeline_plan;

/* clip may be NULL (zeros). */
SC_API sc_status sc_timeline_plan_create(const double* compute, const double* comm,
                                         const double* clip, size_t buckets, double global_clip,
                                         double norm_reduce, sc_timeline_plan** out);
SC_API sc_status sc_timeline_plan_load(const char* path, sc_timeline_plan** out);
SC_API size_t sc_timeline_plan_buckets(const sc_timeline_plan* plan);
SC_API void sc_timeline_plan_free(sc_timeline_plan* plan);

typedef struct sc_schedule_summary {
  double total_latency;
  double compute_busy;
  double comm_busy;
} sc_schedule_summary;

SC_API sc_status sc_timeline_schedule(const sc_timeline_plan* plan, sc_clip_mode mode,
                                      sc_schedule_summary* out);

typedef struct sc_sweep_row {
  sc_clip_mode mode;
  size_t buckets;
  double comm_scale;
  double total_latency;
  double compute_busy;
  double comm_busy;
} sc_sweep_row;

/* bucket_counts may be NULL/0 to keep the plan's bucketing. Writes at most
 * cap rows; *n_rows receives the full count (SC_ERR_BUFFER_TOO_SMALL if > cap). */
SC_API sc_status sc_timeline_sweep(const sc_timeline_plan* plan, const sc_clip_mode* modes,
                                   size_t n_modes, const size_t* bucket_counts, size_t n_counts,
                                   const double* comm_scales, size_t n_scales,
                                   double per_bucket_comm_overhead, sc_sweep_row* rows,
                                   size_t cap, size_t* n_rows);

/* ---- toy training ------------------------------------------------------- */

typedef struct sc_train_config {
  /* task */
  uint32_t dim;
  uint32_t batch_per_worker;
  double noise;
  double outlier_rate;
  double outlier_scale;
  uint32_t holdout;
  uint64_t seed;
  /* synchronization and optimizer */
  sc_clip_mode mode;
  int32_t workers;
  int32_t buckets;
  int32_t steps;
  double threshold;
  double lr;
  double beta1;
  double beta2;
  double eps;
  double weight_decay;
  int64_t warmup_steps;
  double warmup_init_ratio;
  int32_t lr_decay;
  double end_lr_ratio;
} sc_train_config;

SC_API void sc_train_config_init(sc_train_config* cfg);

/* losses receives cfg->steps values (held-out loss after each step).
 * *diverged is set when the loss became non-finite; the run then stops and
 * the call returns SC_ERR_RUNTIME. */
SC_API sc_status sc_train_run(const sc_train_config* cfg, double* initial_loss, double* losses,
                              size_t cap, int32_t* diverged);

typedef struct sc_mode_summary {
  sc_clip_mode mode;
  double mean_final_loss;
  double stderr_final_loss;
} sc_mode_summary;

/* Runs every mode on seeds cfg->seed .. cfg->seed+seeds-1. final_losses may
 * be NULL, else receives n_modes*seeds values, mode-major. */
SC_API sc_status sc_train_compare(const sc_train_config* cfg, const sc_clip_mode* modes,
                                  size_t n_modes, int32_t seeds, uint32_t threads,
                                  sc_mode_summary* out, double* final_losses);

#ifdef __cplusplus
}
#endif

#endif /* STRATACLIP_STRATACLIP_H */
