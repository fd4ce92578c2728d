#include "strataclip/gradsync.hpp"

#include <cmath>
#include <fstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "strataclip/error.hpp"

namespace strataclip {

std::string_view to_string(ClipMode mode) noexcept {
  switch (mode) {
    case ClipMode::after_allreduce: return "after_allreduce";
    case ClipMode::before_allreduce: return "before_allreduce";
    case ClipMode::bucket_wise: return "bucket_wise";
  }
  return "?";
}

ClipMode parse_clip_mode(std::string_view name) {
  if (name == "after_allreduce" || name == "after") return ClipMode::after_allreduce;
  if (name == "before_allreduce" || name == "before") return ClipMode::before_allreduce;
  if (name == "bucket_wise" || name == "bucketwise") return ClipMode::bucket_wise;
  throw ValidationError(
      fmt::format("unknown clip mode '{}' (valid: after_allreduce, before_allreduce, bucket_wise)", name));
}

std::vector<BucketRange> contiguous_buckets(std::size_t dim, std::size_t buckets) {
  if (buckets == 0) throw ValidationError("bucket count must be >= 1");
  if (buckets > dim) throw ValidationError(fmt::format("{} buckets exceed dimension {}", buckets, dim));
  const std::size_t width = dim / buckets;
  std::vector<BucketRange> out;
  out.reserve(buckets);
  for (std::size_t b = 0; b < buckets; ++b)
    out.push_back({b * width, b + 1 == buckets ? dim : (b + 1) * width});
  return out;
}

void GradientState::validate() const {
  if (workers.empty()) throw ValidationError("gradient state needs at least one worker");
  const std::size_t d = dim();
  for (std::size_t k = 0; k < workers.size(); ++k)
    if (workers[k].size() != d)
      throw ValidationError(fmt::format("worker {} has dimension {}, worker 0 has {}", k, workers[k].size(), d));
  if (buckets.empty()) throw ValidationError("bucket layout must not be empty");
  std::size_t next = 0;
  for (std::size_t b = 0; b < buckets.size(); ++b) {
    if (buckets[b].begin != next || buckets[b].end <= buckets[b].begin)
      throw ValidationError(fmt::format("bucket {} [{}, {}) does not continue the layout at {}", b,
                                        buckets[b].begin, buckets[b].end, next));
    next = buckets[b].end;
  }
  if (next != d) throw ValidationError(fmt::format("buckets cover [0, {}) but dimension is {}", next, d));
}

void ClipConfig::validate() const {
  if (!(threshold > 0.0) || !std::isfinite(threshold))
    throw ValidationError(fmt::format("clip threshold must be positive, got {}", threshold));
}

double l2_norm(std::span<const double> g) {
  double sq = 0.0;
  for (double x : g) sq += x * x;
  return std::sqrt(sq);
}

void clip_by_norm_inplace(std::span<double> g, double limit) {
  if (!(limit > 0.0)) throw ValidationError(fmt::format("clip limit must be positive, got {}", limit));
  for (double x : g)
    if (!std::isfinite(x)) throw ValidationError("gradient has non-finite components");
  const double norm = l2_norm(g);
  if (norm < limit) return;
  for (double& x : g) x = x * limit / norm;
}

std::vector<double> clip_by_norm(std::span<const double> g, double limit) {
  std::vector<double> out(g.begin(), g.end());
  clip_by_norm_inplace(out, limit);
  return out;
}

namespace {

// Sum of workers[lo, hi) at element i as a balanced binary tree.
double tree_sum(std::span<const std::span<const double>> workers, std::size_t lo, std::size_t hi,
                std::size_t i) {
  if (hi - lo == 1) return workers[lo][i];
  const std::size_t mid = lo + (hi - lo) / 2;
  return tree_sum(workers, lo, mid, i) + tree_sum(workers, mid, hi, i);
}

std::vector<std::span<const double>> as_spans(const std::vector<std::vector<double>>& v) {
  return {v.begin(), v.end()};
}

std::vector<double> clipped_then_reduced(const GradientState& state, double limit) {
  std::vector<std::vector<double>> slices(state.workers.size());
  std::vector<double> out(state.dim());
  // Buckets become ready last-to-first during the backward pass.
  for (std::size_t b = state.buckets.size(); b-- > 0;) {
    const BucketRange r = state.buckets[b];
    for (std::size_t k = 0; k < state.workers.size(); ++k) {
      slices[k].assign(state.workers[k].begin() + static_cast<std::ptrdiff_t>(r.begin),
                       state.workers[k].begin() + static_cast<std::ptrdiff_t>(r.end));
      clip_by_norm_inplace(slices[k], limit);
    }
    const std::vector<double> reduced = allreduce_mean(slices);
    std::copy(reduced.begin(), reduced.end(), out.begin() + static_cast<std::ptrdiff_t>(r.begin));
  }
  return out;
}

}  // namespace

std::vector<double> allreduce_mean(std::span<const std::span<const double>> workers) {
  if (workers.empty()) throw ValidationError("allreduce needs at least one worker");
  const std::size_t d = workers.front().size();
  for (std::size_t k = 0; k < workers.size(); ++k)
    if (workers[k].size() != d)
      throw ValidationError(fmt::format("worker {} has dimension {}, worker 0 has {}", k, workers[k].size(), d));
  const double count = static_cast<double>(workers.size());
  std::vector<double> out(d);
  for (std::size_t i = 0; i < d; ++i) out[i] = tree_sum(workers, 0, workers.size(), i) / count;
  return out;
}

std::vector<double> allreduce_mean(const std::vector<std::vector<double>>& workers) {
  const auto spans = as_spans(workers);
  return allreduce_mean(std::span<const std::span<const double>>(spans));
}

std::vector<double> sync_after(const GradientState& state, const ClipConfig& cfg) {
  state.validate();
  cfg.validate();
  for (const auto& w : state.workers)
    for (double x : w)
      if (!std::isfinite(x)) throw ValidationError("gradient has non-finite components");
  std::vector<double> out = allreduce_mean(state.workers);
  clip_by_norm_inplace(out, cfg.threshold);
  return out;
}

std::vector<double> sync_before(const GradientState& state, const ClipConfig& cfg) {
  state.validate();
  cfg.validate();
  GradientState whole{state.workers, {BucketRange{0, state.dim()}}};
  return clipped_then_reduced(whole, cfg.threshold);
}

std::vector<double> sync_bucketwise(const GradientState& state, const ClipConfig& cfg) {
  state.validate();
  cfg.validate();
  const double limit = cfg.threshold / std::sqrt(static_cast<double>(state.buckets.size()));
  return clipped_then_reduced(state, limit);
}

std::vector<double> synchronize(const GradientState& state, const ClipConfig& cfg) {
  switch (cfg.mode) {
    case ClipMode::after_allreduce: return sync_after(state, cfg);
    case ClipMode::before_allreduce: return sync_before(state, cfg);
    case ClipMode::bucket_wise: return sync_bucketwise(state, cfg);
  }
  throw ValidationError("unknown clip mode");
}

GradientState gradient_state_from_json(const nlohmann::json& doc) {
  GradientState state;
  try {
    state.workers = doc.at("workers").get<std::vector<std::vector<double>>>();
    if (doc.contains("buckets")) {
      for (const auto& r : doc.at("buckets")) {
        const auto pair = r.get<std::vector<std::size_t>>();
        if (pair.size() != 2) throw ValidationError("each bucket must be [begin, end]");
        state.buckets.push_back({pair[0], pair[1]});
      }
    } else {
      const std::size_t b = doc.value("num_buckets", std::size_t{1});
      state.buckets = contiguous_buckets(state.dim(), b);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(1, fmt::format("gradient state: {}", e.what()));
  }
  state.validate();
  return state;
}

GradientState load_gradient_state(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw RuntimeError(fmt::format("cannot open gradient state '{}'", path.string()));
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(1, e.what());
  }
  return gradient_state_from_json(doc);
}

}  // namespace strataclip
