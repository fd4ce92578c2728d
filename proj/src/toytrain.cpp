#include "strataclip/toytrain.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include <fmt/format.h>

#include "strataclip/error.hpp"
#include "strataclip/random.hpp"

namespace strataclip {

namespace {

enum Stream : std::uint64_t { kTarget = 1, kInit = 2, kHoldout = 3, kBatch = 4 };

void require_finite(std::span<const double> xs, const char* what) {
  for (double x : xs)
    if (!std::isfinite(x)) throw ValidationError(fmt::format("{} has non-finite components", what));
}

std::vector<double> gaussian_vector(Rng& rng, std::size_t n, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  std::vector<double> out(n);
  for (double& x : out) x = normal(rng);
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

void AdamConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ValidationError("learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ValidationError("beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ValidationError("beta2 must lie in [0, 1)");
  if (!(eps >= 0.0)) throw ValidationError("eps must be >= 0");
  if (!(weight_decay >= 0.0)) throw ValidationError("weight decay must be >= 0");
}

AdamState::AdamState(std::size_t dim, AdamConfig cfg) : m(dim, 0.0), v(dim, 0.0), config(cfg) {
  config.validate();
}

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grad, double lr) {
  if (params.size() != state.m.size() || grad.size() != state.m.size())
    throw ValidationError(fmt::format("adam_step dimension mismatch: state {}, params {}, grad {}",
                                      state.m.size(), params.size(), grad.size()));
  require_finite(params, "parameters");
  require_finite(grad, "gradient");
  const AdamConfig& c = state.config;
  const double rate = lr > 0.0 ? lr : c.lr;

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(c.beta1, t);
  const double bias2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * grad[i];
    state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * grad[i] * grad[i];
    const double m_hat = state.m[i] / bias1;
    const double v_hat = state.v[i] / bias2;
    params[i] -= rate * (m_hat / (std::sqrt(v_hat) + c.eps) + c.weight_decay * params[i]);
  }
}

double LrSchedule::at(std::int64_t step, std::int64_t total_steps, double base_lr) const noexcept {
  if (warmup_steps > 0 && step < warmup_steps) {
    const double frac = static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
    return base_lr * (init_ratio + (1.0 - init_ratio) * frac);
  }
  if (decay && total_steps > warmup_steps) {
    const double frac = static_cast<double>(step - warmup_steps) /
                        static_cast<double>(std::max<std::int64_t>(1, total_steps - warmup_steps));
    return base_lr * (1.0 - (1.0 - end_ratio) * std::clamp(frac, 0.0, 1.0));
  }
  return base_lr;
}

void ToyTask::validate() const {
  if (dim == 0) throw ValidationError("task dimension must be >= 1");
  if (batch_per_worker == 0) throw ValidationError("batch_per_worker must be >= 1");
  if (holdout == 0) throw ValidationError("holdout set must not be empty");
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw ValidationError("noise must be >= 0");
  if (!(outlier_rate >= 0.0 && outlier_rate <= 1.0)) throw ValidationError("outlier_rate must lie in [0, 1]");
  if (!(outlier_scale >= 1.0) || !std::isfinite(outlier_scale)) throw ValidationError("outlier_scale must be >= 1");
}

void TrainConfig::validate(const ToyTask& task) const {
  if (workers < 1) throw ValidationError("workers must be >= 1");
  if (buckets < 1) throw ValidationError("buckets must be >= 1");
  if (static_cast<std::size_t>(buckets) > task.dim)
    throw ValidationError(fmt::format("{} buckets exceed parameter dimension {}", buckets, task.dim));
  if (steps < 0) throw ValidationError("steps must be >= 0");
  ClipConfig{threshold, mode}.validate();
  adam.validate();
}

TrainResult train(const ToyTask& task, const TrainConfig& cfg) {
  task.validate();
  cfg.validate(task);
  const std::size_t d = task.dim;

  Rng target_rng = make_rng(task.seed, kTarget);
  const std::vector<double> w_star = gaussian_vector(target_rng, d);
  Rng init_rng = make_rng(task.seed, kInit);
  std::vector<double> theta = gaussian_vector(init_rng, d, 0.1);

  Rng holdout_rng = make_rng(task.seed, kHoldout);
  std::vector<std::vector<double>> holdout(task.holdout);
  for (auto& x : holdout) x = gaussian_vector(holdout_rng, d);

  std::vector<double> delta(d);
  auto holdout_loss = [&] {
    for (std::size_t i = 0; i < d; ++i) delta[i] = theta[i] - w_star[i];
    double s = 0.0;
    for (const auto& x : holdout) {
      const double r = dot(x, delta);
      s += 0.5 * r * r;
    }
    return s / static_cast<double>(holdout.size());
  };

  GradientState state;
  state.workers.assign(static_cast<std::size_t>(cfg.workers), std::vector<double>(d));
  state.buckets = contiguous_buckets(d, static_cast<std::size_t>(cfg.buckets));
  const ClipConfig clip{cfg.threshold, cfg.mode};
  AdamState adam(d, cfg.adam);

  TrainResult result;
  result.initial_loss = holdout_loss();
  result.losses.reserve(static_cast<std::size_t>(cfg.steps));

  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> x(d);
  for (int step = 0; step < cfg.steps; ++step) {
    for (std::size_t k = 0; k < state.workers.size(); ++k) {
      Rng rng = make_rng(task.seed, kBatch,
                         static_cast<std::uint64_t>(step) * state.workers.size() + k);
      std::vector<double>& g = state.workers[k];
      std::fill(g.begin(), g.end(), 0.0);
      for (std::size_t j = 0; j < task.batch_per_worker; ++j) {
        for (double& xi : x) xi = normal(rng);
        const double y = dot(x, w_star) + task.noise * normal(rng);
        const double r = dot(x, theta) - y;
        for (std::size_t i = 0; i < d; ++i) g[i] += r * x[i];
      }
      double scale = 1.0 / static_cast<double>(task.batch_per_worker);
      if (unit(rng) < task.outlier_rate) scale *= task.outlier_scale;
      for (double& gi : g) gi *= scale;
    }

    const std::vector<double> synced = synchronize(state, clip);
    adam_step(adam, theta, synced, cfg.schedule.at(step, cfg.steps, cfg.adam.lr));

    const double loss = holdout_loss();
    result.losses.push_back(loss);
    if (!std::isfinite(loss)) {
      result.diverged = true;
      break;
    }
  }
  return result;
}

std::vector<ModeSummary> compare_modes(const ToyTask& task, const TrainConfig& base,
                                       std::span<const ClipMode> modes, int seeds, unsigned threads) {
  if (modes.empty()) throw ValidationError("compare_modes needs at least one mode");
  if (seeds < 1) throw ValidationError("compare_modes needs at least one seed");
  task.validate();
  for (ClipMode mode : modes) {
    TrainConfig cfg = base;
    cfg.mode = mode;
    cfg.validate(task);
  }

  const std::size_t jobs = modes.size() * static_cast<std::size_t>(seeds);
  std::vector<TrainResult> results(jobs);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t j = next++; j < jobs; j = next++) {
      ToyTask t = task;
      t.seed = task.seed + j % static_cast<std::size_t>(seeds);
      TrainConfig cfg = base;
      cfg.mode = modes[j / static_cast<std::size_t>(seeds)];
      results[j] = train(t, cfg);
    }
  };
  unsigned n = threads != 0 ? threads : std::max(1u, std::thread::hardware_concurrency());
  n = static_cast<unsigned>(std::min<std::size_t>(n, jobs));
  if (n == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned i = 0; i < n; ++i) pool.emplace_back(work);
  }

  std::vector<ModeSummary> out;
  for (std::size_t m = 0; m < modes.size(); ++m) {
    ModeSummary row;
    row.mode = modes[m];
    for (int s = 0; s < seeds; ++s) {
      const TrainResult& r = results[m * static_cast<std::size_t>(seeds) + static_cast<std::size_t>(s)];
      if (r.diverged)
        throw RuntimeError(fmt::format("{} diverged on seed {} at step {}", to_string(modes[m]),
                                       task.seed + static_cast<std::uint64_t>(s), r.losses.size()));
      row.final_losses.push_back(r.final_loss());
    }
    double sum = 0.0;
    for (double f : row.final_losses) sum += f;
    row.mean_final_loss = sum / seeds;
    if (seeds > 1) {
      double sq = 0.0;
      for (double f : row.final_losses) sq += (f - row.mean_final_loss) * (f - row.mean_final_loss);
      row.stderr_final_loss = std::sqrt(sq / (seeds - 1) / seeds);
    }
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace strataclip
