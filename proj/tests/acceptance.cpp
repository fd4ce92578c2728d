// Runs every acceptance criterion and prints one PASS/FAIL line for each.
// Exit status is the number of failed criteria.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <fmt/core.h>

#include "strataclip/gradsync.hpp"
#include "strataclip/mcsim.hpp"
#include "strataclip/strata.hpp"
#include "strataclip/timeline.hpp"
#include "strataclip/toytrain.hpp"

using namespace strataclip;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int g_failures = 0;

void criterion(int id, std::string_view name, double limit_s, const std::function<Outcome()>& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o = {false, fmt::format("exception: {}", e.what())};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (secs > limit_s) {
    o.pass = false;
    o.detail += fmt::format("; exceeded {:.0f} s budget", limit_s);
  }
  if (!o.pass) ++g_failures;
  std::printf("[%s] %2d %-28s %8.2f s  %s\n", o.pass ? "PASS" : "FAIL", id, std::string(name).c_str(), secs,
              o.detail.c_str());
  std::fflush(stdout);
}

double norm_of(const std::vector<double>& v) {
  long double s = 0;
  for (double x : v) s += static_cast<long double>(x) * x;
  return static_cast<double>(std::sqrt(s));
}

double log_uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::exp(std::uniform_real_distribution<double>(std::log(lo), std::log(hi))(rng));
}

GradientState random_state(std::mt19937_64& rng, std::size_t k, std::size_t b) {
  const std::size_t d = std::uniform_int_distribution<std::size_t>(b, 4096)(rng);
  GradientState s;
  for (std::size_t w = 0; w < k; ++w) {
    const double scale = log_uniform(rng, 1e-6, 1e3) * (rng() % 10 == 0 ? 1e4 : 1.0);
    std::normal_distribution<double> n(0.0, scale);
    std::vector<double> g(d);
    for (double& x : g) x = n(rng);
    s.workers.push_back(std::move(g));
  }
  s.buckets = contiguous_buckets(d, b);
  return s;
}

struct Moments {
  double mean = 0.0;
  double se = 0.0;
};

Moments moments(const std::vector<double>& x) {
  const double n = static_cast<double>(x.size());
  double m = 0.0;
  for (double v : x) m += v;
  m /= n;
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return {m, std::sqrt(ss / (n - 1.0) / n)};
}

double t_quantile(double p, std::size_t n) {
  boost::math::students_t dist(static_cast<double>(n - 1));
  return boost::math::quantile(dist, p);
}

Outcome bucket_norm_cap() {
  std::mt19937_64 rng(1001);
  const std::array<std::size_t, 3> ks{1, 4, 16}, bs{1, 4, 25};
  double worst = -INFINITY;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t k = ks[rng() % 3], b = bs[rng() % 3];
    const auto st = random_state(rng, k, b);
    const double c = log_uniform(rng, 1e-3, 1e2);
    const double n = norm_of(sync_bucketwise(st, ClipConfig{c, ClipMode::bucket_wise}));
    worst = std::max(worst, n - c);
    if (n > c + 1e-9) return {false, fmt::format("state {}: norm {} exceeds c = {}", i, n, c)};
  }
  return {true, fmt::format("1000 states, max(norm - c) = {:.3g}", worst)};
}

Outcome single_bucket_equivalence() {
  std::mt19937_64 rng(1002);
  const std::array<std::size_t, 3> ks{1, 4, 16};
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const auto st = random_state(rng, ks[rng() % 3], 1);
    const double c = log_uniform(rng, 1e-3, 1e2);
    const auto a = sync_bucketwise(st, ClipConfig{c, ClipMode::bucket_wise});
    const auto b = sync_before(st, ClipConfig{c, ClipMode::before_allreduce});
    for (std::size_t j = 0; j < a.size(); ++j) {
      const double scale = std::max(std::abs(a[j]), std::abs(b[j]));
      const double rel = scale == 0.0 ? 0.0 : std::abs(a[j] - b[j]) / scale;
      worst = std::max(worst, rel);
      if (rel > 1e-12) return {false, fmt::format("state {} index {}: {} vs {}", i, j, a[j], b[j])};
    }
  }
  return {true, fmt::format("1000 states, max relative difference {:.3g}", worst)};
}

Outcome clipping_formula() {
  const auto g = clip_by_norm(std::vector<double>{3.0, 4.0}, 1.0);
  const bool ok = std::abs(g[0] - 0.6) <= 1e-15 && std::abs(g[1] - 0.8) <= 1e-15;
  return {ok, fmt::format("[{}, {}]", g[0], g[1])};
}

Outcome apportionment() {
  const auto a = allocate_counts(std::vector<double>{5 / 16.0, 2 / 16.0, 3 / 16.0, 6 / 16.0}, 16);
  return {a.counts == std::vector<int>{5, 2, 3, 6},
          fmt::format("[{}, {}, {}, {}]", a.counts[0], a.counts[1], a.counts[2], a.counts[3])};
}

Outcome ablation_ordering() {
  const BalanceCorpus corpus(generate_corpus(LengthDistribution::wikipedia_like(), 500'000, 1));
  BalanceExperiment base;
  base.topo = {8, 8};
  base.local_batch = 16;
  base.trials = 10'000;
  base.seed = 1;
  const auto rows = run_ablation(corpus, base);
  // rows: none, stratified, local raster, local snake, global raster
  std::string detail;
  for (const auto& r : rows) detail += fmt::format("{}={:.1f}±{:.2f} ", r.label, r.avg_range, r.stderr_range);
  bool ok = true;
  for (std::size_t i = 0; i + 1 < 4; ++i) {
    const double z = z_score(rows[i].avg_range, rows[i].stderr_range, rows[i + 1].avg_range, rows[i + 1].stderr_range);
    if (!(z > 1.6448536269514722)) {
      ok = false;
      detail += fmt::format("[{} -> {} z={:.2f}] ", rows[i].label, rows[i + 1].label, z);
    }
  }
  const double ratio = rows[3].avg_range / rows[4].avg_range;
  if (!(ratio <= 1.05)) ok = false;
  detail += fmt::format("snake/global={:.3f}", ratio);
  return {ok, detail};
}

Outcome uniform_degeneracy() {
  std::vector<Sample> flat;
  for (std::uint64_t i = 0; i < 20'000; ++i) flat.push_back({i, 512});
  const BalanceCorpus corpus(flat);
  struct Case {
    Strategy strategy;
    ScanPattern scan;
  };
  const Case cases[] = {{Strategy::none, ScanPattern::raster},
                        {Strategy::stratified, ScanPattern::raster},
                        {Strategy::global_presort, ScanPattern::raster},
                        {Strategy::global_presort, ScanPattern::snake},
                        {Strategy::packing, ScanPattern::raster},
                        {Strategy::local_presort, ScanPattern::raster},
                        {Strategy::local_presort, ScanPattern::snake}};
  for (const Case& c : cases) {
    BalanceExperiment e;
    e.strategy = c.strategy;
    e.scan = c.scan;
    e.topo = {8, 8};
    e.local_batch = 16;
    e.trials = 10'000;
    e.seed = 6;
    const auto st = run_balance_experiment(corpus, e);
    if (st.avg_min != 8192.0 || st.avg_max != 8192.0)
      return {false, fmt::format("{}: min {} max {}", st.label, st.avg_min, st.avg_max)};
  }
  return {true, "7 strategy/scan combinations, 64 GPUs, 10^4 trials: all 8192"};
}

Outcome timeline_dominance() {
  std::mt19937_64 rng(1007);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double slack_before = INFINITY, worst_gap = -INFINITY;
  for (int i = 0; i < 1000; ++i) {
    TimelinePlan p;
    const std::size_t b = 1 + rng() % 32;
    double clip_sum = 0.0, comm_sum = 0.0;
    for (std::size_t j = 0; j < b; ++j) {
      p.compute.push_back(log_uniform(rng, 1e-2, 10.0));
      p.comm.push_back(rng() % 4 == 0 ? 0.0 : log_uniform(rng, 1e-2, 10.0));
      p.clip.push_back(u(rng) * 0.2 * p.compute.back());
      clip_sum += p.clip.back();
      comm_sum += p.comm.back();
    }
    if (comm_sum == 0.0) p.comm[0] = 1.0, comm_sum = 1.0;
    // a global clip processes the same elements as the per-bucket clips
    p.global_clip = clip_sum * (rng() % 2 ? 1.0 : 1.0 + u(rng));
    p.norm_reduce = rng() % 2 ? 0.0 : u(rng);
    const double after = schedule(p, ClipMode::after_allreduce).total;
    const double before = schedule(p, ClipMode::before_allreduce).total;
    const double bw = schedule(p, ClipMode::bucket_wise).total;
    slack_before = std::min(slack_before, before - bw);
    worst_gap = std::max(worst_gap, bw - after - (clip_sum + p.global_clip));
    if (!(bw <= before)) return {false, fmt::format("plan {}: bucket_wise {} > before {}", i, bw, before)};
    if (!(bw - after <= clip_sum + p.global_clip))
      return {false, fmt::format("plan {}: bucket_wise - after = {} > {}", i, bw - after, clip_sum + p.global_clip)};
  }
  return {true, fmt::format("1000 plans, min(before - bucket_wise) = {:.3g}, max excess over clip budget = {:.3g}",
                            slack_before, worst_gap)};
}

Outcome hand_pipeline() {
  const TimelinePlan p{{2, 2}, {3, 3}, {0, 0}, 0.0, 0.0};
  const double after = schedule(p, ClipMode::after_allreduce).total;
  const double before = schedule(p, ClipMode::before_allreduce).total;
  return {after == 8.0 && before == 10.0, fmt::format("after {}, before {}", after, before)};
}

Outcome toy_ordering() {
  ToyTask task;
  task.dim = 32;
  task.outlier_rate = 0.05;
  task.outlier_scale = 100.0;
  task.seed = 1;
  TrainConfig cfg;
  cfg.workers = 16;
  cfg.buckets = 8;
  cfg.steps = 500;
  cfg.threshold = 1.0;
  const ClipMode modes[] = {ClipMode::after_allreduce, ClipMode::before_allreduce, ClipMode::bucket_wise};
  const int seeds = 60;
  const auto rows = compare_modes(task, cfg, modes, seeds);
  const auto& after = rows[0].final_losses;
  const auto& before = rows[1].final_losses;
  const auto& bw = rows[2].final_losses;
  std::vector<double> d_after(seeds), d_bw(seeds);
  for (int i = 0; i < seeds; ++i) {
    d_after[i] = after[i] - before[i];
    d_bw[i] = bw[i] - before[i];
  }
  const Moments ma = moments(d_after), mb = moments(d_bw);
  const double mean_before = moments(before).mean;
  // paired one-sided test for after > before
  const double lower = ma.mean - t_quantile(0.95, seeds) * ma.se;
  // paired two-sided interval for bucket_wise - before, relative to before
  const double half = t_quantile(0.975, seeds) * mb.se;
  const double rel_lo = (mb.mean - half) / mean_before, rel_hi = (mb.mean + half) / mean_before;
  const bool ok = lower > 0.0 && rel_lo >= -0.05 && rel_hi <= 0.05;
  return {ok, fmt::format("{} seeds: after {:.5f}, before {:.5f}, bucket_wise {:.5f}; after-before 95% lower bound "
                          "{:.5f}; (bucket_wise-before)/before 95% CI [{:+.2f}%, {:+.2f}%]",
                          seeds, rows[0].mean_final_loss, rows[1].mean_final_loss, rows[2].mean_final_loss, lower,
                          100 * rel_lo, 100 * rel_hi)};
}

std::string capture(const std::string& args) {
  const std::string cmd = fmt::format("env -u STRATACLIP_OUTPUT_DIR '{}' {} 2>&1", STRATACLIP_CLI_PATH, args);
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) throw std::runtime_error("cannot start " + cmd);
  std::string out;
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) out.append(buf.data(), n);
  const int status = pclose(pipe);
  if (status != 0) throw std::runtime_error(fmt::format("'{}' exited with {}: {}", args, status, out));
  return out;
}

Outcome cli_determinism() {
  // each group must produce identical bytes on every run, whatever the thread count
  const std::vector<std::vector<std::string>> groups{
      {"gen-corpus --n 1000 --seed 7"},
      {"gen-corpus --n 5000 --seed 9 --dist " STRATACLIP_SOURCE_DIR "/tests/data/two_bins.toml"},
      {"balance --strategy local_presort --scan snake --gpus 64 --nodes 8 --trials 2000 --seed 1 --corpus-size 100000 --threads 1",
       "balance --strategy local_presort --scan snake --gpus 64 --nodes 8 --trials 2000 --seed 1 --corpus-size 100000 --threads 4"},
      {"balance --strategy packing --trials 1000 --seed 2 --corpus-size 50000 --format json --threads 1",
       "balance --strategy packing --trials 1000 --seed 2 --corpus-size 50000 --format json --threads 3"},
      {"balance --ablation --trials 1000 --seed 3 --corpus-size 50000 --threads 1",
       "balance --ablation --trials 1000 --seed 3 --corpus-size 50000 --threads 2"},
      {"timeline"},
      {"timeline --plan " STRATACLIP_SOURCE_DIR "/tests/data/plan.txt --buckets 1 2 4 8 --comm-scale 0 1 10 --format json"},
      {"train --mode bucket_wise --buckets 8 --workers 16 --steps 500 --seed 3"},
      {"train --compare --seeds 6 --steps 200 --seed 1 --threads 1",
       "train --compare --seeds 6 --steps 200 --seed 1 --threads 3"},
  };
  std::size_t runs = 0;
  for (const auto& group : groups) {
    std::string reference;
    for (std::size_t v = 0; v < group.size(); ++v) {
      for (int rep = 0; rep < 2; ++rep) {
        const std::string out = capture(group[v]);
        ++runs;
        if (v == 0 && rep == 0) {
          if (out.empty()) return {false, fmt::format("'{}' produced no output", group[v])};
          reference = out;
        } else if (out != reference) {
          return {false, fmt::format("'{}' output differs from '{}'", group[v], group[0])};
        }
      }
    }
  }
  return {true, fmt::format("{} command groups, {} runs, byte-identical", groups.size(), runs)};
}

}  // namespace

int main() {
  criterion(1, "bucket-norm cap", 10, bucket_norm_cap);
  criterion(2, "single-bucket equivalence", 10, single_bucket_equivalence);
  criterion(3, "clipping formula", 1, clipping_formula);
  criterion(4, "apportionment", 1, apportionment);
  criterion(5, "balance ablation ordering", 300, ablation_ordering);
  criterion(6, "uniform-corpus degeneracy", 30, uniform_degeneracy);
  criterion(7, "timeline dominance", 10, timeline_dominance);
  criterion(8, "hand-scheduled pipeline", 1, hand_pipeline);
  criterion(9, "toy-scale clipping ordering", 300, toy_ordering);
  criterion(10, "CLI determinism", 120, cli_determinism);
  std::printf("%d of 10 criteria failed\n", g_failures);
  return g_failures;
}
