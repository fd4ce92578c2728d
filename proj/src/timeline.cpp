#include "strataclip/timeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

#include <fmt/format.h>

#include "strataclip/error.hpp"

namespace strataclip {

void TimelinePlan::validate() const {
  const std::size_t b = compute.size();
  if (b == 0) throw ValidationError("timeline plan needs at least one bucket");
  if (comm.size() != b)
    throw ValidationError(fmt::format("plan has {} compute entries but {} comm entries", b, comm.size()));
  if (clip.size() != b)
    throw ValidationError(fmt::format("plan has {} compute entries but {} clip entries", b, clip.size()));
  auto check = [](double t, const char* what) {
    if (!std::isfinite(t) || t < 0.0) throw ValidationError(fmt::format("{} durations must be finite and >= 0", what));
  };
  for (double t : compute) check(t, "compute");
  for (double t : comm) check(t, "comm");
  for (double t : clip) check(t, "clip");
  check(global_clip, "global_clip");
  check(norm_reduce, "norm_reduce");
}

Schedule schedule(const TimelinePlan& plan, ClipMode mode) {
  plan.validate();
  const std::size_t nb = plan.num_buckets();
  Schedule s;
  s.mode = mode;
  s.buckets.resize(nb);

  double compute_free = 0.0;
  for (std::size_t b = nb; b-- > 0;) {
    BucketTimes& t = s.buckets[b];
    t.compute = {compute_free, compute_free + plan.compute[b]};
    compute_free = t.compute.end;
    t.clip = {compute_free, compute_free};
    if (mode == ClipMode::bucket_wise) {
      t.clip.end = compute_free + plan.clip[b];
      compute_free = t.clip.end;
    }
    t.ready = compute_free;
  }

  double comm_free = 0.0;
  switch (mode) {
    case ClipMode::after_allreduce:
    case ClipMode::bucket_wise:
      for (std::size_t b = nb; b-- > 0;) {
        BucketTimes& t = s.buckets[b];
        const double start = std::max(t.ready, comm_free);
        t.comm = {start, start + plan.comm[b]};
        comm_free = t.comm.end;
      }
      break;
    case ClipMode::before_allreduce: {
      // Nothing moves until the whole local gradient is clipped.
      s.norm_reduce = {compute_free, compute_free + plan.norm_reduce};
      s.global_clip = {s.norm_reduce.end, s.norm_reduce.end + plan.global_clip};
      compute_free = s.global_clip.end;
      comm_free = compute_free;
      for (std::size_t b = nb; b-- > 0;) {
        BucketTimes& t = s.buckets[b];
        t.ready = compute_free;
        t.comm = {comm_free, comm_free + plan.comm[b]};
        comm_free = t.comm.end;
      }
      break;
    }
  }

  double end = std::max(compute_free, comm_free);
  if (mode == ClipMode::after_allreduce) {
    s.global_clip = {end, end + plan.global_clip};
    end = s.global_clip.end;
  }
  s.total = end;

  const double comp_sum = std::accumulate(plan.compute.begin(), plan.compute.end(), 0.0);
  const double clip_sum = std::accumulate(plan.clip.begin(), plan.clip.end(), 0.0);
  s.comm_busy = std::accumulate(plan.comm.begin(), plan.comm.end(), 0.0);
  s.compute_busy = comp_sum + (mode == ClipMode::bucket_wise ? clip_sum : plan.global_clip);
  return s;
}

TimelinePlan parse_plan(std::istream& in) {
  TimelinePlan plan;
  bool have_compute = false, have_comm = false, have_clip = false;
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.resize(hash);
    std::istringstream line(raw);
    std::string key;
    if (!(line >> key)) continue;

    std::vector<double> values;
    std::string tok;
    while (line >> tok) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != tok.size()) throw ParseError(lineno, fmt::format("'{}' is not a number", tok));
      if (!std::isfinite(v) || v < 0.0) throw ParseError(lineno, fmt::format("duration {} must be >= 0", tok));
      values.push_back(v);
    }
    if (values.empty()) throw ParseError(lineno, fmt::format("'{}' has no values", key));

    auto scalar = [&](double& dst) {
      if (values.size() != 1) throw ParseError(lineno, fmt::format("'{}' takes exactly one value", key));
      dst = values.front();
    };
    if (key == "compute") {
      plan.compute = std::move(values);
      have_compute = true;
    } else if (key == "comm") {
      plan.comm = std::move(values);
      have_comm = true;
    } else if (key == "clip") {
      plan.clip = std::move(values);
      have_clip = true;
    } else if (key == "global_clip") {
      scalar(plan.global_clip);
    } else if (key == "norm_reduce") {
      scalar(plan.norm_reduce);
    } else {
      throw ParseError(lineno, fmt::format("unknown key '{}'", key));
    }
  }
  if (!have_compute) throw ParseError(lineno + 1, "missing 'compute' line");
  if (!have_comm) throw ParseError(lineno + 1, "missing 'comm' line");
  if (!have_clip) plan.clip.assign(plan.compute.size(), 0.0);
  try {
    plan.validate();
  } catch (const ValidationError& e) {
    throw ParseError(lineno + 1, e.what());
  }
  return plan;
}

TimelinePlan load_plan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw RuntimeError(fmt::format("cannot open plan '{}'", path.string()));
  return parse_plan(in);
}

TimelinePlan rebucket(const TimelinePlan& plan, std::size_t buckets, double per_bucket_comm_overhead) {
  plan.validate();
  if (buckets == 0) throw ValidationError("bucket count must be >= 1");
  if (!(per_bucket_comm_overhead >= 0.0)) throw ValidationError("per-bucket comm overhead must be >= 0");
  const double n = static_cast<double>(buckets);
  const double comp = std::accumulate(plan.compute.begin(), plan.compute.end(), 0.0);
  const double comm = std::accumulate(plan.comm.begin(), plan.comm.end(), 0.0);
  const double clip = std::accumulate(plan.clip.begin(), plan.clip.end(), 0.0);
  TimelinePlan out;
  out.compute.assign(buckets, comp / n);
  out.comm.assign(buckets, comm / n + per_bucket_comm_overhead);
  out.clip.assign(buckets, clip / n);
  out.global_clip = plan.global_clip;
  out.norm_reduce = plan.norm_reduce;
  return out;
}

std::vector<SweepRow> sweep(const TimelinePlan& tmpl, const SweepAxes& axes) {
  tmpl.validate();
  if (axes.modes.empty() || axes.comm_scales.empty()) throw ValidationError("sweep axes must not be empty");
  for (double s : axes.comm_scales)
    if (!std::isfinite(s) || s < 0.0) throw ValidationError("comm scales must be finite and >= 0");

  std::vector<std::size_t> counts = axes.bucket_counts;
  const bool keep_layout = counts.empty();
  if (keep_layout) counts.push_back(tmpl.num_buckets());

  std::vector<SweepRow> rows;
  for (double scale : axes.comm_scales) {
    for (std::size_t b : counts) {
      TimelinePlan plan = keep_layout && axes.per_bucket_comm_overhead == 0.0
                              ? tmpl
                              : rebucket(tmpl, b, axes.per_bucket_comm_overhead);
      for (double& t : plan.comm) t *= scale;
      for (ClipMode mode : axes.modes) {
        const Schedule s = schedule(plan, mode);
        rows.push_back({mode, b, scale, s.total, s.compute_busy, s.comm_busy});
      }
    }
  }
  return rows;
}

}  // namespace strataclip
