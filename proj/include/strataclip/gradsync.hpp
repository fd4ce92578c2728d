#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace strataclip {

enum class ClipMode { after_allreduce, before_allreduce, bucket_wise };

std::string_view to_string(ClipMode mode) noexcept;
/// Accepts the full names and the short forms `after` / `before`.
ClipMode parse_clip_mode(std::string_view name);

/// Half-open index range [begin, end) of the flat gradient.
struct BucketRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const noexcept { return end - begin; }
  friend bool operator==(const BucketRange&, const BucketRange&) = default;
};

/// `buckets` equal contiguous ranges over [0, dim); the last absorbs the remainder.
std::vector<BucketRange> contiguous_buckets(std::size_t dim, std::size_t buckets);

struct GradientState {
  std::vector<std::vector<double>> workers;
  std::vector<BucketRange> buckets;

  std::size_t dim() const noexcept { return workers.empty() ? 0 : workers.front().size(); }
  /// Workers share one dimension and buckets tile [0, dim) in order.
  void validate() const;
};

struct ClipConfig {
  double threshold = 1.0;
  ClipMode mode = ClipMode::bucket_wise;

  void validate() const;
};

double l2_norm(std::span<const double> g);

/// If ||g|| >= limit, rescales g in place to norm limit.
void clip_by_norm_inplace(std::span<double> g, double limit);
std::vector<double> clip_by_norm(std::span<const double> g, double limit);

/// Elementwise mean over workers, summed as a fixed pairwise tree in worker order.
std::vector<double> allreduce_mean(std::span<const std::span<const double>> workers);
std::vector<double> allreduce_mean(const std::vector<std::vector<double>>& workers);

std::vector<double> sync_after(const GradientState& state, const ClipConfig& cfg);
std::vector<double> sync_before(const GradientState& state, const ClipConfig& cfg);
std::vector<double> sync_bucketwise(const GradientState& state, const ClipConfig& cfg);
/// Dispatches on cfg.mode.
std::vector<double> synchronize(const GradientState& state, const ClipConfig& cfg);

/// {"workers": [[...], ...], "buckets": [[begin, end], ...]} or
/// {"workers": ..., "num_buckets": B}. Without either, one bucket.
GradientState gradient_state_from_json(const nlohmann::json& doc);
GradientState load_gradient_state(const std::filesystem::path& path);

}  // namespace strataclip
