#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "strataclip/gradsync.hpp"

namespace strataclip {

/// Per-bucket costs in abstract time units. Index b is bucket b+1; the
/// backward pass produces buckets last-to-first.
struct TimelinePlan {
  std::vector<double> compute;
  std::vector<double> comm;
  std::vector<double> clip;   // per-bucket clip, bucket-wise mode only
  double global_clip = 0.0;   // whole-gradient clip, after/before modes
  double norm_reduce = 0.0;   // extra collective before allreduce, before mode only

  std::size_t num_buckets() const noexcept { return compute.size(); }
  void validate() const;
};

struct Interval {
  double start = 0.0;
  double end = 0.0;

  double length() const noexcept { return end - start; }
};

struct BucketTimes {
  Interval compute;
  Interval clip;
  Interval comm;
  double ready = 0.0;  // earliest time the bucket may be communicated
};

/// Two-stream schedule: compute stream (backward + clipping) and one
/// communication stream, buckets strictly in order on each.
struct Schedule {
  ClipMode mode = ClipMode::after_allreduce;
  std::vector<BucketTimes> buckets;
  Interval global_clip;
  Interval norm_reduce;
  double total = 0.0;
  double compute_busy = 0.0;
  double comm_busy = 0.0;
};

Schedule schedule(const TimelinePlan& plan, ClipMode mode);

/// Line format, '#' starts a comment:
///   compute <t_1> ... <t_B>
///   comm    <t_1> ... <t_B>
///   clip    <t_1> ... <t_B>     (optional, defaults to zeros)
///   global_clip <t>             (optional)
///   norm_reduce <t>             (optional)
TimelinePlan parse_plan(std::istream& in);
TimelinePlan load_plan(const std::filesystem::path& path);

struct SweepAxes {
  std::vector<ClipMode> modes{ClipMode::after_allreduce, ClipMode::before_allreduce,
                              ClipMode::bucket_wise};
  /// Empty keeps the template's own bucketing.
  std::vector<std::size_t> bucket_counts;
  std::vector<double> comm_scales{1.0};
  /// Fixed cost added to every bucket's allreduce after rebucketing.
  double per_bucket_comm_overhead = 0.0;
};

struct SweepRow {
  ClipMode mode = ClipMode::after_allreduce;
  std::size_t buckets = 0;
  double comm_scale = 1.0;
  double total_latency = 0.0;
  double compute_busy = 0.0;
  double comm_busy = 0.0;
};

/// Spreads the template's totals evenly over `buckets` buckets.
TimelinePlan rebucket(const TimelinePlan& plan, std::size_t buckets, double per_bucket_comm_overhead = 0.0);

/// Rows ordered comm scale, then bucket count, then mode, each in axis order.
std::vector<SweepRow> sweep(const TimelinePlan& tmpl, const SweepAxes& axes);

}  // namespace strataclip
