#include "strataclip/mcsim.hpp"

#include <algorithm>
#include <cmath>
#include <thread>
#include <utility>

#include <fmt/format.h>

#include "strataclip/error.hpp"
#include "strataclip/random.hpp"
#include "strataclip/strata.hpp"

namespace strataclip {

std::string_view to_string(Strategy s) noexcept {
  switch (s) {
    case Strategy::none: return "none";
    case Strategy::stratified: return "stratified";
    case Strategy::global_presort: return "global_presort";
    case Strategy::packing: return "packing";
    case Strategy::local_presort: return "local_presort";
  }
  return "?";
}

std::string valid_strategies() { return "none, stratified, global_presort, packing, local_presort"; }

Strategy parse_strategy(std::string_view name) {
  for (Strategy s : {Strategy::none, Strategy::stratified, Strategy::global_presort,
                     Strategy::packing, Strategy::local_presort})
    if (to_string(s) == name) return s;
  throw ValidationError(fmt::format("unknown strategy '{}' (valid: {})", name, valid_strategies()));
}

void BalanceExperiment::validate() const {
  topo.validate();
  if (trials < 1) throw ValidationError("trials must be >= 1");
  if (local_batch < 1) throw ValidationError("local_batch must be >= 1");
  if (pack_limit < 1) throw ValidationError("pack_limit must be >= 1");
}

BalanceCorpus::BalanceCorpus(std::vector<Sample> samples, std::vector<int> strata_boundaries,
                             int pack_limit, int max_seq_len)
    : samples_(std::move(samples)),
      boundaries_(std::move(strata_boundaries)),
      pack_limit_(pack_limit),
      max_seq_len_(max_seq_len) {
  if (samples_.empty()) throw ValidationError("balance corpus must not be empty");
  Strata strata = stratify(samples_, boundaries_);
  strata_pools_ = std::move(strata.pools);
  strata_probs_ = std::move(strata.probs);
  packs_ = pack_corpus(samples_, pack_limit_, max_seq_len_);
}

double BalanceCorpus::packing_ratio() const noexcept {
  return static_cast<double>(samples_.size()) / static_cast<double>(packs_.size());
}

int BalanceCorpus::packs_per_gpu(int local_batch) const noexcept {
  return std::max(1, static_cast<int>(std::lround(local_batch / packing_ratio())));
}

double z_score(double mean_a, double se_a, double mean_b, double se_b) noexcept {
  const double se = std::sqrt(se_a * se_a + se_b * se_b);
  if (se == 0.0) return mean_a == mean_b ? 0.0 : (mean_a > mean_b ? INFINITY : -INFINITY);
  return (mean_a - mean_b) / se;
}

namespace {

using Undo = std::vector<std::pair<std::size_t, std::size_t>>;

struct TrialResult {
  std::int64_t min = 0;
  std::int64_t max = 0;
};

// Mutable per-thread view of the corpus; every trial restores it on exit.
class TrialRunner {
 public:
  TrialRunner(const BalanceCorpus& corpus, const BalanceExperiment& exp)
      : exp_(exp), gpus_(exp.topo.total_gpus()) {
    switch (exp.strategy) {
      case Strategy::none:
      case Strategy::global_presort:
        samples_.assign(corpus.samples().begin(), corpus.samples().end());
        if (samples_.size() < static_cast<std::size_t>(gpus_) * exp.local_batch)
          throw RuntimeError(fmt::format("corpus of {} samples cannot supply {} per trial", samples_.size(),
                                         static_cast<std::size_t>(gpus_) * exp.local_batch));
        break;
      case Strategy::packing:
        packs_.assign(corpus.packs().begin(), corpus.packs().end());
        packs_per_gpu_ = corpus.packs_per_gpu(exp.local_batch);
        if (packs_.size() < static_cast<std::size_t>(gpus_) * packs_per_gpu_)
          throw RuntimeError(fmt::format("packed corpus of {} packs cannot supply {} per trial", packs_.size(),
                                         static_cast<std::size_t>(gpus_) * packs_per_gpu_));
        break;
      case Strategy::stratified:
      case Strategy::local_presort: {
        pools_ = corpus.strata_pools();
        alloc_ = allocate_counts(corpus.strata_probs(), exp.local_batch).counts;
        for (std::size_t k = 0; k < pools_.size(); ++k) {
          const std::size_t need = static_cast<std::size_t>(gpus_) * alloc_[k];
          if (pools_[k].size() < need)
            throw RuntimeError(fmt::format("stratum {} holds {} samples but a trial needs {}", k + 1,
                                           pools_[k].size(), need));
        }
        break;
      }
    }
  }

  TrialResult run(std::int64_t trial) {
    Rng rng = make_rng(exp_.seed, /*stream=*/0xba1a, static_cast<std::uint64_t>(trial));
    Assignment a;
    switch (exp_.strategy) {
      case Strategy::none:
        a = assign_none(draw_uniform(rng), exp_.topo);
        break;
      case Strategy::global_presort:
        a = assign_global_presort(draw_uniform(rng), exp_.topo, exp_.scan);
        break;
      case Strategy::packing: {
        batch_packs_.clear();
        std::size_t live = packs_.size();
        detail::take_from_pool(packs_, live, static_cast<std::size_t>(gpus_) * packs_per_gpu_, rng,
                               batch_packs_, &undo_);
        detail::restore_pool(packs_, undo_);
        a = assign_packing(batch_packs_, exp_.topo);
        break;
      }
      case Strategy::stratified: {
        draw_stratified(rng);
        a.token_counts.reserve(per_gpu_.size());
        for (const auto& draws : per_gpu_) a.token_counts.push_back(total_tokens(draws));
        break;
      }
      case Strategy::local_presort:
        draw_stratified(rng);
        a = assign_local_presort(per_gpu_, exp_.topo, exp_.scan);
        break;
    }
    return {a.min_tokens(), a.max_tokens()};
  }

 private:
  std::span<const Sample> draw_uniform(Rng& rng) {
    batch_.clear();
    std::size_t live = samples_.size();
    detail::take_from_pool(samples_, live, static_cast<std::size_t>(gpus_) * exp_.local_batch, rng,
                           batch_, &undo_);
    detail::restore_pool(samples_, undo_);
    return batch_;
  }

  // Every GPU draws alloc_[k] samples from stratum k; draws are without
  // replacement across the whole trial.
  void draw_stratified(Rng& rng) {
    per_gpu_.resize(static_cast<std::size_t>(gpus_));
    std::vector<std::size_t> live(pools_.size());
    for (std::size_t k = 0; k < pools_.size(); ++k) live[k] = pools_[k].size();
    for (auto& draws : per_gpu_) {
      draws.clear();
      for (std::size_t k = 0; k < pools_.size(); ++k)
        detail::take_from_pool(pools_[k], live[k], static_cast<std::size_t>(alloc_[k]), rng, draws,
                               &stratum_undo(k));
    }
    for (std::size_t k = 0; k < pools_.size(); ++k) detail::restore_pool(pools_[k], stratum_undo(k));
  }

  Undo& stratum_undo(std::size_t k) {
    if (stratum_undo_.size() < pools_.size()) stratum_undo_.resize(pools_.size());
    return stratum_undo_[k];
  }

  const BalanceExperiment& exp_;
  int gpus_;
  std::vector<Sample> samples_;
  std::vector<Sample> batch_;
  std::vector<Pack> packs_;
  std::vector<Pack> batch_packs_;
  int packs_per_gpu_ = 0;
  std::vector<std::vector<Sample>> pools_;
  std::vector<int> alloc_;
  std::vector<std::vector<Sample>> per_gpu_;
  Undo undo_;
  std::vector<Undo> stratum_undo_;
};

__extension__ typedef __int128 Int128;

struct Moments {
  double mean = 0.0;
  double stderr_ = 0.0;
};

// Exact integer accumulation; only the final division happens in floating point.
Moments moments(std::span<const std::int64_t> xs) {
  Int128 sum = 0;
  Int128 sq = 0;
  for (std::int64_t x : xs) {
    sum += x;
    sq += static_cast<Int128>(x) * x;
  }
  const auto n = static_cast<Int128>(xs.size());
  Moments m;
  m.mean = static_cast<double>(sum) / static_cast<double>(n);
  if (n > 1) {
    const Int128 num = n * sq - sum * sum;  // n(n-1) * sample variance
    const double var = static_cast<double>(num) / static_cast<double>(n * (n - 1));
    m.stderr_ = std::sqrt(std::max(0.0, var) / static_cast<double>(n));
  }
  return m;
}

}  // namespace

BalanceStats run_balance_experiment(const BalanceCorpus& corpus, const BalanceExperiment& exp) {
  exp.validate();
  if (exp.strategy == Strategy::packing && exp.pack_limit != corpus.pack_limit())
    throw ValidationError(fmt::format("experiment pack_limit {} differs from corpus pack_limit {}",
                                      exp.pack_limit, corpus.pack_limit()));

  std::vector<TrialResult> results(static_cast<std::size_t>(exp.trials));
  unsigned threads = exp.threads != 0 ? exp.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::int64_t>(threads, exp.trials));

  // Construct runners up front so validation errors surface on the caller's thread.
  std::vector<TrialRunner> runners;
  runners.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) runners.emplace_back(corpus, exp);

  auto work = [&](unsigned t) {
    const std::int64_t lo = exp.trials * t / threads;
    const std::int64_t hi = exp.trials * (t + 1) / threads;
    for (std::int64_t i = lo; i < hi; ++i) results[static_cast<std::size_t>(i)] = runners[t].run(i);
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t);
  }

  std::vector<std::int64_t> mins, maxs, ranges;
  mins.reserve(results.size());
  maxs.reserve(results.size());
  ranges.reserve(results.size());
  for (const TrialResult& r : results) {
    mins.push_back(r.min);
    maxs.push_back(r.max);
    ranges.push_back(r.max - r.min);
  }
  const Moments lo = moments(mins);
  const Moments hi = moments(maxs);
  const Moments rg = moments(ranges);

  BalanceStats stats;
  stats.label = std::string(to_string(exp.strategy));
  if (exp.strategy == Strategy::global_presort || exp.strategy == Strategy::local_presort)
    stats.label += fmt::format("_{}", to_string(exp.scan));
  stats.gpus = exp.topo.total_gpus();
  stats.local_batch = exp.local_batch;
  stats.trials = exp.trials;
  stats.avg_min = lo.mean;
  stats.avg_max = hi.mean;
  stats.avg_range = rg.mean;
  stats.stderr_min = lo.stderr_;
  stats.stderr_max = hi.stderr_;
  stats.stderr_range = rg.stderr_;
  return stats;
}

std::vector<BalanceStats> run_ablation(const BalanceCorpus& corpus, const BalanceExperiment& base) {
  std::vector<BalanceStats> rows;
  auto add = [&](Strategy s, ScanPattern scan) {
    BalanceExperiment exp = base;
    exp.strategy = s;
    exp.scan = scan;
    rows.push_back(run_balance_experiment(corpus, exp));
  };
  add(Strategy::none, ScanPattern::raster);
  add(Strategy::stratified, ScanPattern::raster);
  add(Strategy::local_presort, ScanPattern::raster);
  add(Strategy::local_presort, ScanPattern::snake);
  add(Strategy::global_presort, ScanPattern::raster);
  return rows;
}

}  // namespace strataclip
