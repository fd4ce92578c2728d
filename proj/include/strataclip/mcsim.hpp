#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "strataclip/balance.hpp"
#include "strataclip/seqdata.hpp"

namespace strataclip {

enum class Strategy {
  none,            // uniform draws, round-robin
  stratified,      // stratified draws per GPU, no sorting
  global_presort,  // uniform draws, sort over the whole cluster
  packing,         // draws from a pre-packed corpus
  local_presort,   // stratified draws, sort within each node
};

std::string_view to_string(Strategy s) noexcept;
Strategy parse_strategy(std::string_view name);
/// "none, stratified, global_presort, packing, local_presort"
std::string valid_strategies();

struct BalanceExperiment {
  Strategy strategy = Strategy::local_presort;
  Topology topo{8, 8};
  int local_batch = 16;
  std::int64_t trials = 10'000;
  std::uint64_t seed = 0;
  ScanPattern scan = ScanPattern::snake;
  int pack_limit = 2;
  /// Worker threads; 0 picks hardware concurrency. Results do not depend on it.
  unsigned threads = 0;

  void validate() const;
};

struct BalanceStats {
  std::string label;
  int gpus = 0;
  int local_batch = 0;
  std::int64_t trials = 0;
  double avg_min = 0.0;
  double avg_max = 0.0;
  double avg_range = 0.0;
  double stderr_min = 0.0;
  double stderr_max = 0.0;
  double stderr_range = 0.0;
};

/// A corpus prepared once for many experiments: the raw samples, their
/// strata and the packed version used by the packing strategy.
class BalanceCorpus {
 public:
  BalanceCorpus(std::vector<Sample> samples, std::vector<int> strata_boundaries = {128, 256, 384, 512},
                int pack_limit = 2, int max_seq_len = kDefaultMaxSeqLen);

  std::span<const Sample> samples() const noexcept { return samples_; }
  const std::vector<int>& boundaries() const noexcept { return boundaries_; }
  const std::vector<std::vector<Sample>>& strata_pools() const noexcept { return strata_pools_; }
  const std::vector<double>& strata_probs() const noexcept { return strata_probs_; }
  std::span<const Pack> packs() const noexcept { return packs_; }
  int pack_limit() const noexcept { return pack_limit_; }
  int max_seq_len() const noexcept { return max_seq_len_; }

  /// Samples per pack achieved by packing this corpus.
  double packing_ratio() const noexcept;
  /// Packs each GPU draws so that it sees local_batch sequences on average.
  int packs_per_gpu(int local_batch) const noexcept;

 private:
  std::vector<Sample> samples_;
  std::vector<int> boundaries_;
  std::vector<std::vector<Sample>> strata_pools_;
  std::vector<double> strata_probs_;
  std::vector<Pack> packs_;
  int pack_limit_;
  int max_seq_len_;
};

/// Per-trial min/max token counts for one strategy. Trial t is seeded from
/// (exp.seed, t) alone, so the output is identical for any thread count.
BalanceStats run_balance_experiment(const BalanceCorpus& corpus, const BalanceExperiment& exp);

/// Step-by-step rows: none, +stratification, +local presorting (raster),
/// +snake, and global presorting (raster) as the reference.
std::vector<BalanceStats> run_ablation(const BalanceCorpus& corpus, const BalanceExperiment& base);

/// Separation of two means in units of their combined standard error.
double z_score(double mean_a, double se_a, double mean_b, double se_b) noexcept;

}  // namespace strataclip
