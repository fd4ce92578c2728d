#include "strataclip/strataclip.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iostream>
#include <new>
#include <string>

#include <nlohmann/json.hpp>

#include "strataclip/balance.hpp"
#include "strataclip/error.hpp"
#include "strataclip/gradsync.hpp"
#include "strataclip/mcsim.hpp"
#include "strataclip/seqdata.hpp"
#include "strataclip/strata.hpp"
#include "strataclip/timeline.hpp"
#include "strataclip/toytrain.hpp"

struct sc_distribution {
  strataclip::LengthDistribution dist;
};

struct sc_corpus {
  std::vector<strataclip::Sample> samples;
};

struct sc_balance_corpus {
  strataclip::BalanceCorpus corpus;
};

struct sc_timeline_plan {
  strataclip::TimelinePlan plan;
};

namespace {

using namespace strataclip;

thread_local std::string g_last_error;

sc_status fail(sc_status status, std::string message) {
  g_last_error = std::move(message);
  return status;
}

// Runs `fn` and maps exceptions onto status codes.
template <typename Fn>
sc_status guarded(Fn&& fn) noexcept {
  try {
    return fn();
  } catch (const Error& e) {
    switch (e.code()) {
      case ErrorCode::invalid_argument: return fail(SC_ERR_INVALID_ARGUMENT, e.what());
      case ErrorCode::parse: return fail(SC_ERR_PARSE, e.what());
      case ErrorCode::runtime: return fail(SC_ERR_RUNTIME, e.what());
    }
    return fail(SC_ERR_INTERNAL, e.what());
  } catch (const std::bad_alloc&) {
    return fail(SC_ERR_RUNTIME, "out of memory");
  } catch (const std::exception& e) {
    return fail(SC_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(SC_ERR_INTERNAL, "unknown error");
  }
}

#define SC_REQUIRE(cond, msg) \
  do {                        \
    if (!(cond)) return fail(SC_ERR_INVALID_ARGUMENT, msg); \
  } while (0)

Strategy to_strategy(sc_strategy s) {
  switch (s) {
    case SC_STRATEGY_NONE: return Strategy::none;
    case SC_STRATEGY_STRATIFIED: return Strategy::stratified;
    case SC_STRATEGY_GLOBAL_PRESORT: return Strategy::global_presort;
    case SC_STRATEGY_PACKING: return Strategy::packing;
    case SC_STRATEGY_LOCAL_PRESORT: return Strategy::local_presort;
  }
  throw ValidationError("unknown strategy value");
}

ScanPattern to_scan(sc_scan s) {
  switch (s) {
    case SC_SCAN_RASTER: return ScanPattern::raster;
    case SC_SCAN_SNAKE: return ScanPattern::snake;
  }
  throw ValidationError("unknown scan value");
}

ClipMode to_mode(sc_clip_mode m) {
  switch (m) {
    case SC_CLIP_AFTER_ALLREDUCE: return ClipMode::after_allreduce;
    case SC_CLIP_BEFORE_ALLREDUCE: return ClipMode::before_allreduce;
    case SC_CLIP_BUCKET_WISE: return ClipMode::bucket_wise;
  }
  throw ValidationError("unknown clip mode value");
}

sc_clip_mode from_mode(ClipMode m) {
  switch (m) {
    case ClipMode::after_allreduce: return SC_CLIP_AFTER_ALLREDUCE;
    case ClipMode::before_allreduce: return SC_CLIP_BEFORE_ALLREDUCE;
    case ClipMode::bucket_wise: return SC_CLIP_BUCKET_WISE;
  }
  return SC_CLIP_AFTER_ALLREDUCE;
}

BalanceExperiment to_experiment(const sc_balance_config& c) {
  BalanceExperiment exp;
  exp.strategy = to_strategy(c.strategy);
  exp.scan = to_scan(c.scan);
  exp.topo = {c.num_nodes, c.gpus_per_node};
  exp.local_batch = c.local_batch;
  exp.trials = c.trials;
  exp.seed = c.seed;
  exp.pack_limit = c.pack_limit;
  exp.threads = c.threads;
  return exp;
}

void copy_stats(const BalanceStats& s, sc_balance_stats* out) {
  std::memset(out->label, 0, SC_LABEL_CAPACITY);
  std::strncpy(out->label, s.label.c_str(), SC_LABEL_CAPACITY - 1);
  out->gpus = s.gpus;
  out->local_batch = s.local_batch;
  out->trials = s.trials;
  out->avg_min = s.avg_min;
  out->avg_max = s.avg_max;
  out->avg_range = s.avg_range;
  out->stderr_min = s.stderr_min;
  out->stderr_max = s.stderr_max;
  out->stderr_range = s.stderr_range;
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::vector<Sample> samples_from(const int32_t* lengths, size_t n, int32_t max_seq_len) {
  std::vector<Sample> out;
  out.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    if (lengths[i] < 1 || lengths[i] > max_seq_len)
      throw ValidationError("length " + std::to_string(lengths[i]) + " at index " + std::to_string(i) +
                            " outside [1, " + std::to_string(max_seq_len) + "]");
    out.push_back({i, lengths[i]});
  }
  return out;
}

std::pair<ToyTask, TrainConfig> to_train(const sc_train_config& c) {
  ToyTask task;
  task.dim = c.dim;
  task.batch_per_worker = c.batch_per_worker;
  task.noise = c.noise;
  task.outlier_rate = c.outlier_rate;
  task.outlier_scale = c.outlier_scale;
  task.holdout = c.holdout;
  task.seed = c.seed;
  TrainConfig cfg;
  cfg.mode = to_mode(c.mode);
  cfg.workers = c.workers;
  cfg.buckets = c.buckets;
  cfg.steps = c.steps;
  cfg.threshold = c.threshold;
  cfg.adam = {c.lr, c.beta1, c.beta2, c.eps, c.weight_decay};
  cfg.schedule = {c.warmup_steps, c.warmup_init_ratio, c.lr_decay != 0, c.end_lr_ratio};
  return {task, cfg};
}

}  // namespace

extern "C" {

const char* sc_last_error(void) { return g_last_error.c_str(); }

const char* sc_version(void) { return "0.1.0"; }

void sc_string_free(char* s) { std::free(s); }

sc_status sc_distribution_default(sc_distribution** out) {
  SC_REQUIRE(out, "out must not be NULL");
  return guarded([&] {
    *out = new sc_distribution{LengthDistribution::wikipedia_like()};
    return SC_OK;
  });
}

sc_status sc_distribution_create(const int32_t* boundaries, const double* probs, size_t bins,
                                 int32_t max_seq_len, sc_distribution** out) {
  SC_REQUIRE(out && boundaries && probs, "arguments must not be NULL");
  return guarded([&] {
    LengthDistribution d;
    d.bin_boundaries.assign(boundaries, boundaries + bins);
    d.bin_probs.assign(probs, probs + bins);
    d.max_seq_len = max_seq_len;
    d.validate();
    *out = new sc_distribution{std::move(d)};
    return SC_OK;
  });
}

sc_status sc_distribution_load(const char* path, sc_distribution** out) {
  SC_REQUIRE(out && path, "arguments must not be NULL");
  return guarded([&] {
    *out = new sc_distribution{load_distribution(path)};
    return SC_OK;
  });
}

int32_t sc_distribution_max_seq_len(const sc_distribution* dist) {
  return dist ? dist->dist.max_seq_len : 0;
}

void sc_distribution_free(sc_distribution* dist) { delete dist; }

sc_status sc_corpus_generate(const sc_distribution* dist, uint64_t n, uint64_t seed, sc_corpus** out) {
  SC_REQUIRE(out && dist, "arguments must not be NULL");
  return guarded([&] {
    *out = new sc_corpus{generate_corpus(dist->dist, n, seed)};
    return SC_OK;
  });
}

sc_status sc_corpus_load(const char* path, int32_t max_seq_len, sc_corpus** out) {
  SC_REQUIRE(out && path, "arguments must not be NULL");
  return guarded([&] {
    *out = new sc_corpus{ingest_lengths(std::filesystem::path(path), max_seq_len)};
    return SC_OK;
  });
}

sc_status sc_corpus_from_lengths(const int32_t* lengths, size_t n, int32_t max_seq_len, sc_corpus** out) {
  SC_REQUIRE(out && (lengths || n == 0), "arguments must not be NULL");
  return guarded([&] {
    *out = new sc_corpus{samples_from(lengths, n, max_seq_len)};
    return SC_OK;
  });
}

size_t sc_corpus_size(const sc_corpus* corpus) { return corpus ? corpus->samples.size() : 0; }

sc_status sc_corpus_lengths(const sc_corpus* corpus, int32_t* out, size_t cap) {
  SC_REQUIRE(corpus && (out || cap == 0), "arguments must not be NULL");
  if (cap < corpus->samples.size()) return fail(SC_ERR_BUFFER_TOO_SMALL, "length buffer too small");
  for (size_t i = 0; i < corpus->samples.size(); ++i) out[i] = corpus->samples[i].length;
  return SC_OK;
}

sc_status sc_corpus_write(const sc_corpus* corpus, const char* path) {
  SC_REQUIRE(corpus, "corpus must not be NULL");
  return guarded([&] {
    if (!path || std::strcmp(path, "-") == 0) {
      write_lengths(std::cout, corpus->samples);
      std::cout.flush();
      return SC_OK;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw RuntimeError(std::string("cannot write '") + path + "'");
    write_lengths(f, corpus->samples);
    if (!f) throw RuntimeError(std::string("write failed for '") + path + "'");
    return SC_OK;
  });
}

void sc_corpus_free(sc_corpus* corpus) { delete corpus; }

sc_status sc_allocate_counts(const double* probs, size_t n, int32_t local_batch, int32_t* counts_out) {
  SC_REQUIRE(probs && counts_out, "arguments must not be NULL");
  return guarded([&] {
    const StratumAllocation a = allocate_counts(std::span<const double>(probs, n), local_batch);
    for (size_t k = 0; k < n; ++k) counts_out[k] = a.counts[k];
    return SC_OK;
  });
}

sc_status sc_strategy_from_name(const char* name, sc_strategy* out) {
  SC_REQUIRE(name && out, "arguments must not be NULL");
  return guarded([&] {
    switch (parse_strategy(name)) {
      case Strategy::none: *out = SC_STRATEGY_NONE; break;
      case Strategy::stratified: *out = SC_STRATEGY_STRATIFIED; break;
      case Strategy::global_presort: *out = SC_STRATEGY_GLOBAL_PRESORT; break;
      case Strategy::packing: *out = SC_STRATEGY_PACKING; break;
      case Strategy::local_presort: *out = SC_STRATEGY_LOCAL_PRESORT; break;
    }
    return SC_OK;
  });
}

sc_status sc_scan_from_name(const char* name, sc_scan* out) {
  SC_REQUIRE(name && out, "arguments must not be NULL");
  return guarded([&] {
    *out = parse_scan(name) == ScanPattern::raster ? SC_SCAN_RASTER : SC_SCAN_SNAKE;
    return SC_OK;
  });
}

void sc_balance_config_init(sc_balance_config* cfg) {
  if (!cfg) return;
  cfg->strategy = SC_STRATEGY_LOCAL_PRESORT;
  cfg->scan = SC_SCAN_SNAKE;
  cfg->num_nodes = 8;
  cfg->gpus_per_node = 8;
  cfg->local_batch = 16;
  cfg->trials = 10000;
  cfg->seed = 0;
  cfg->pack_limit = 2;
  cfg->threads = 0;
}

sc_status sc_balance_corpus_create(const sc_corpus* corpus, const int32_t* boundaries, size_t n_boundaries,
                                   int32_t pack_limit, int32_t max_seq_len, sc_balance_corpus** out) {
  SC_REQUIRE(corpus && out, "arguments must not be NULL");
  return guarded([&] {
    std::vector<int> b = boundaries ? std::vector<int>(boundaries, boundaries + n_boundaries)
                                    : std::vector<int>{128, 256, 384, 512};
    *out = new sc_balance_corpus{BalanceCorpus(corpus->samples, std::move(b), pack_limit, max_seq_len)};
    return SC_OK;
  });
}

double sc_balance_corpus_packing_ratio(const sc_balance_corpus* bc) {
  return bc ? bc->corpus.packing_ratio() : 0.0;
}

void sc_balance_corpus_free(sc_balance_corpus* bc) { delete bc; }

sc_status sc_balance_run(const sc_balance_corpus* bc, const sc_balance_config* cfg, sc_balance_stats* out) {
  SC_REQUIRE(bc && cfg && out, "arguments must not be NULL");
  return guarded([&] {
    copy_stats(run_balance_experiment(bc->corpus, to_experiment(*cfg)), out);
    return SC_OK;
  });
}

sc_status sc_balance_ablation(const sc_balance_corpus* bc, const sc_balance_config* cfg, sc_balance_stats* rows) {
  SC_REQUIRE(bc && cfg && rows, "arguments must not be NULL");
  return guarded([&] {
    const auto stats = run_ablation(bc->corpus, to_experiment(*cfg));
    for (size_t i = 0; i < stats.size(); ++i) copy_stats(stats[i], &rows[i]);
    return SC_OK;
  });
}

sc_status sc_assign_batch(sc_strategy strategy, sc_scan scan, const int32_t* lengths, size_t n,
                          int32_t num_nodes, int32_t gpus_per_node, char** json_out) {
  SC_REQUIRE(lengths && json_out, "arguments must not be NULL");
  return guarded([&] {
    const Topology topo{num_nodes, gpus_per_node};
    topo.validate();
    const std::vector<Sample> batch = samples_from(lengths, n, kDefaultMaxSeqLen);
    const auto gpus = static_cast<size_t>(topo.total_gpus());
    auto per_gpu_draws = [&] {
      if (batch.size() % gpus != 0)
        throw ValidationError(std::to_string(batch.size()) + " samples not divisible by " +
                              std::to_string(gpus) + " GPUs");
      const size_t each = batch.size() / gpus;
      std::vector<std::vector<Sample>> draws(gpus);
      for (size_t g = 0; g < gpus; ++g)
        draws[g].assign(batch.begin() + static_cast<std::ptrdiff_t>(g * each),
                        batch.begin() + static_cast<std::ptrdiff_t>((g + 1) * each));
      return draws;
    };

    Assignment a;
    switch (to_strategy(strategy)) {
      case Strategy::none: a = assign_none(batch, topo); break;
      case Strategy::global_presort: a = assign_global_presort(batch, topo, to_scan(scan)); break;
      case Strategy::packing: a = assign_packing(pack_corpus(batch), topo); break;
      case Strategy::local_presort: a = assign_local_presort(per_gpu_draws(), topo, to_scan(scan)); break;
      case Strategy::stratified: {
        auto draws = per_gpu_draws();
        for (auto& d : draws) {
          a.token_counts.push_back(total_tokens(d));
          a.per_gpu.push_back(std::move(d));
        }
        break;
      }
    }
    *json_out = dup_string(to_json(a).dump());
    return SC_OK;
  });
}

sc_status sc_clip_mode_from_name(const char* name, sc_clip_mode* out) {
  SC_REQUIRE(name && out, "arguments must not be NULL");
  return guarded([&] {
    *out = from_mode(parse_clip_mode(name));
    return SC_OK;
  });
}

const char* sc_clip_mode_name(sc_clip_mode mode) {
  switch (mode) {
    case SC_CLIP_AFTER_ALLREDUCE: return "after_allreduce";
    case SC_CLIP_BEFORE_ALLREDUCE: return "before_allreduce";
    case SC_CLIP_BUCKET_WISE: return "bucket_wise";
  }
  return "unknown";
}

sc_status sc_clip_by_norm(double* g, size_t n, double limit) {
  SC_REQUIRE(g || n == 0, "gradient must not be NULL");
  return guarded([&] {
    clip_by_norm_inplace(std::span<double>(g, n), limit);
    return SC_OK;
  });
}

sc_status sc_sync_gradients(const double* workers, size_t num_workers, size_t dim, const size_t* bucket_bounds,
                            size_t num_buckets, double threshold, sc_clip_mode mode, double* out) {
  SC_REQUIRE(workers && out, "arguments must not be NULL");
  return guarded([&] {
    GradientState state;
    state.workers.resize(num_workers);
    for (size_t k = 0; k < num_workers; ++k) state.workers[k].assign(workers + k * dim, workers + (k + 1) * dim);
    if (bucket_bounds) {
      for (size_t b = 0; b < num_buckets; ++b) state.buckets.push_back({bucket_bounds[b], bucket_bounds[b + 1]});
    } else {
      state.buckets = contiguous_buckets(dim, num_buckets);
    }
    const std::vector<double> r = synchronize(state, ClipConfig{threshold, to_mode(mode)});
    std::copy(r.begin(), r.end(), out);
    return SC_OK;
  });
}

sc_status sc_timeline_plan_create(const double* compute, const double* comm, const double* clip, size_t buckets,
                                  double global_clip, double norm_reduce, sc_timeline_plan** out) {
  SC_REQUIRE(compute && comm && out, "arguments must not be NULL");
  return guarded([&] {
    TimelinePlan p;
    p.compute.assign(compute, compute + buckets);
    p.comm.assign(comm, comm + buckets);
    p.clip = clip ? std::vector<double>(clip, clip + buckets) : std::vector<double>(buckets, 0.0);
    p.global_clip = global_clip;
    p.norm_reduce = norm_reduce;
    p.validate();
    *out = new sc_timeline_plan{std::move(p)};
    return SC_OK;
  });
}

sc_status sc_timeline_plan_load(const char* path, sc_timeline_plan** out) {
  SC_REQUIRE(path && out, "arguments must not be NULL");
  return guarded([&] {
    *out = new sc_timeline_plan{load_plan(path)};
    return SC_OK;
  });
}

size_t sc_timeline_plan_buckets(const sc_timeline_plan* plan) { return plan ? plan->plan.num_buckets() : 0; }

void sc_timeline_plan_free(sc_timeline_plan* plan) { delete plan; }

sc_status sc_timeline_schedule(const sc_timeline_plan* plan, sc_clip_mode mode, sc_schedule_summary* out) {
  SC_REQUIRE(plan && out, "arguments must not be NULL");
  return guarded([&] {
    const Schedule s = schedule(plan->plan, to_mode(mode));
    *out = {s.total, s.compute_busy, s.comm_busy};
    return SC_OK;
  });
}

sc_status sc_timeline_sweep(const sc_timeline_plan* plan, const sc_clip_mode* modes, size_t n_modes,
                            const size_t* bucket_counts, size_t n_counts, const double* comm_scales,
                            size_t n_scales, double per_bucket_comm_overhead, sc_sweep_row* rows, size_t cap,
                            size_t* n_rows) {
  SC_REQUIRE(plan && modes && comm_scales && n_rows && (rows || cap == 0), "arguments must not be NULL");
  return guarded([&] {
    SweepAxes axes;
    axes.modes.clear();
    for (size_t i = 0; i < n_modes; ++i) axes.modes.push_back(to_mode(modes[i]));
    if (bucket_counts) axes.bucket_counts.assign(bucket_counts, bucket_counts + n_counts);
    axes.comm_scales.assign(comm_scales, comm_scales + n_scales);
    axes.per_bucket_comm_overhead = per_bucket_comm_overhead;
    const auto result = sweep(plan->plan, axes);
    *n_rows = result.size();
    if (result.size() > cap) return fail(SC_ERR_BUFFER_TOO_SMALL, "sweep row buffer too small");
    for (size_t i = 0; i < result.size(); ++i) {
      const SweepRow& r = result[i];
      rows[i] = {from_mode(r.mode), r.buckets, r.comm_scale, r.total_latency, r.compute_busy, r.comm_busy};
    }
    return SC_OK;
  });
}

void sc_train_config_init(sc_train_config* cfg) {
  if (!cfg) return;
  const ToyTask task;
  const TrainConfig tc;
  cfg->dim = static_cast<uint32_t>(task.dim);
  cfg->batch_per_worker = static_cast<uint32_t>(task.batch_per_worker);
  cfg->noise = task.noise;
  cfg->outlier_rate = task.outlier_rate;
  cfg->outlier_scale = task.outlier_scale;
  cfg->holdout = static_cast<uint32_t>(task.holdout);
  cfg->seed = task.seed;
  cfg->mode = from_mode(tc.mode);
  cfg->workers = tc.workers;
  cfg->buckets = tc.buckets;
  cfg->steps = tc.steps;
  cfg->threshold = tc.threshold;
  cfg->lr = tc.adam.lr;
  cfg->beta1 = tc.adam.beta1;
  cfg->beta2 = tc.adam.beta2;
  cfg->eps = tc.adam.eps;
  cfg->weight_decay = tc.adam.weight_decay;
  cfg->warmup_steps = tc.schedule.warmup_steps;
  cfg->warmup_init_ratio = tc.schedule.init_ratio;
  cfg->lr_decay = tc.schedule.decay ? 1 : 0;
  cfg->end_lr_ratio = tc.schedule.end_ratio;
}

sc_status sc_train_run(const sc_train_config* cfg, double* initial_loss, double* losses, size_t cap,
                       int32_t* diverged) {
  SC_REQUIRE(cfg && (losses || cap == 0), "arguments must not be NULL");
  return guarded([&] {
    const auto [task, tc] = to_train(*cfg);
    if (tc.steps >= 0 && static_cast<size_t>(tc.steps) > cap)
      return fail(SC_ERR_BUFFER_TOO_SMALL, "loss buffer smaller than step count");
    const TrainResult r = train(task, tc);
    if (initial_loss) *initial_loss = r.initial_loss;
    std::copy(r.losses.begin(), r.losses.end(), losses);
    if (diverged) *diverged = r.diverged ? 1 : 0;
    if (r.diverged)
      return fail(SC_ERR_RUNTIME, "training diverged at step " + std::to_string(r.losses.size()));
    return SC_OK;
  });
}

sc_status sc_train_compare(const sc_train_config* cfg, const sc_clip_mode* modes, size_t n_modes, int32_t seeds,
                           uint32_t threads, sc_mode_summary* out, double* final_losses) {
  SC_REQUIRE(cfg && modes && out, "arguments must not be NULL");
  return guarded([&] {
    const auto [task, tc] = to_train(*cfg);
    std::vector<ClipMode> ms;
    for (size_t i = 0; i < n_modes; ++i) ms.push_back(to_mode(modes[i]));
    const auto rows = compare_modes(task, tc, ms, seeds, threads);
    for (size_t i = 0; i < rows.size(); ++i) {
      out[i] = {from_mode(rows[i].mode), rows[i].mean_final_loss, rows[i].stderr_final_loss};
      if (final_losses)
        std::copy(rows[i].final_losses.begin(), rows[i].final_losses.end(),
                  final_losses + i * static_cast<size_t>(seeds));
    }
    return SC_OK;
  });
}

}  // extern "C"
