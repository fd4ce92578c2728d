#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "strataclip/gradsync.hpp"

namespace strataclip {

struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled (AdamW-style)

  void validate() const;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;
  AdamConfig config;

  explicit AdamState(std::size_t dim, AdamConfig cfg = {});
};

/// One bias-corrected Adam update of `params` in place; `lr` overrides
/// config.lr when positive (used by learning-rate schedules).
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grad,
               double lr = -1.0);

/// Constant learning rate unless warmup_steps or decay is enabled:
/// linear warmup from lr*init_ratio to lr, then linear decay to lr*end_ratio
/// at total_steps.
struct LrSchedule {
  std::int64_t warmup_steps = 0;
  double init_ratio = 0.0;
  bool decay = false;
  double end_ratio = 1.0;

  double at(std::int64_t step, std::int64_t total_steps, double base_lr) const noexcept;
};

/// Linear regression y = w*.x + noise with Gaussian features. A worker's
/// mini-batch gradient is multiplied by outlier_scale with probability
/// outlier_rate.
struct ToyTask {
  std::size_t dim = 32;
  std::size_t batch_per_worker = 8;
  double noise = 0.5;
  double outlier_rate = 0.05;
  double outlier_scale = 100.0;
  std::size_t holdout = 512;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainConfig {
  ClipMode mode = ClipMode::bucket_wise;
  int workers = 16;
  int buckets = 8;
  int steps = 500;
  double threshold = 1.0;
  AdamConfig adam;
  LrSchedule schedule;

  void validate(const ToyTask& task) const;
};

struct TrainResult {
  double initial_loss = 0.0;
  /// Held-out loss after each completed step.
  std::vector<double> losses;
  bool diverged = false;

  double final_loss() const noexcept { return losses.empty() ? initial_loss : losses.back(); }
};

/// Held-out loss is 0.5 * mean((x.(theta - w*))^2) over a fixed noise-free set.
/// Mini-batches and outlier draws depend only on (seed, step, worker), so every
/// clip mode sees the same data.
TrainResult train(const ToyTask& task, const TrainConfig& cfg);

struct ModeSummary {
  ClipMode mode = ClipMode::after_allreduce;
  double mean_final_loss = 0.0;
  double stderr_final_loss = 0.0;
  std::vector<double> final_losses;  // one per seed, in seed order
};

/// Trains every mode on seeds task.seed, task.seed+1, ...; throws RuntimeError
/// if any run diverges. Rows follow `modes` order.
std::vector<ModeSummary> compare_modes(const ToyTask& task, const TrainConfig& base,
                                       std::span<const ClipMode> modes, int seeds,
                                       unsigned threads = 0);

}  // namespace strataclip
