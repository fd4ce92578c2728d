#include "strataclip/strata.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "strataclip/error.hpp"

namespace strataclip {

std::size_t Strata::remaining() const noexcept {
  std::size_t n = 0;
  for (const auto& p : pools) n += p.size();
  return n;
}

std::size_t stratum_of(std::span<const int> boundaries, int length) noexcept {
  return static_cast<std::size_t>(
      std::lower_bound(boundaries.begin(), boundaries.end(), length) - boundaries.begin());
}

Strata stratify(std::span<const Sample> samples, std::span<const int> boundaries) {
  if (boundaries.empty()) throw ValidationError("stratum boundaries must not be empty");
  int prev = 0;
  for (int b : boundaries) {
    if (b <= prev) throw ValidationError("stratum boundaries must be positive and strictly ascending");
    prev = b;
  }

  Strata strata;
  strata.boundaries.assign(boundaries.begin(), boundaries.end());
  strata.pools.resize(boundaries.size());
  strata.probs.assign(boundaries.size(), 0.0);
  strata.total = samples.size();
  for (const Sample& s : samples) {
    const std::size_t k = stratum_of(boundaries, s.length);
    if (k == boundaries.size())
      throw ValidationError(fmt::format("sample {} has length {} beyond the last stratum boundary {}",
                                        s.id, s.length, boundaries.back()));
    strata.pools[k].push_back(s);
  }
  if (!samples.empty()) {
    for (std::size_t k = 0; k < strata.pools.size(); ++k)
      strata.probs[k] = static_cast<double>(strata.pools[k].size()) / static_cast<double>(samples.size());
  }
  return strata;
}

StratumAllocation allocate_counts(std::span<const double> probs, int local_batch) {
  if (probs.empty()) throw ValidationError("allocate_counts needs at least one stratum");
  if (local_batch < 0) throw ValidationError("local_batch must be >= 0");
  double sum = 0.0;
  for (double p : probs) {
    if (!std::isfinite(p) || p < 0.0) throw ValidationError("stratum probabilities must be non-negative");
    sum += p;
  }
  if (!(sum > 0.0)) throw ValidationError("stratum probabilities must not all be zero");

  StratumAllocation alloc{std::vector<int>(probs.size(), 0), local_batch};
  std::vector<double> remainder(probs.size());
  int assigned = 0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    const double quota = probs[k] * local_batch / sum;
    const double whole = std::floor(quota);
    alloc.counts[k] = static_cast<int>(whole);
    remainder[k] = quota - whole;
    assigned += alloc.counts[k];
  }

  std::vector<std::size_t> order(probs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  // Rounding in sum can leave `assigned` a hair off; clamp the loop to what is left.
  for (std::size_t i = 0; assigned < local_batch; i = (i + 1) % order.size()) {
    ++alloc.counts[order[i]];
    ++assigned;
  }
  return alloc;
}

namespace {

// Strata ordered by boundary distance from `k`, lower index first on ties.
std::vector<std::size_t> neighbours_by_distance(const Strata& strata, std::size_t k) {
  std::vector<std::size_t> order;
  for (std::size_t j = 0; j < strata.num_strata(); ++j)
    if (j != k) order.push_back(j);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(strata.boundaries[a] - strata.boundaries[k]) <
           std::abs(strata.boundaries[b] - strata.boundaries[k]);
  });
  return order;
}

}  // namespace

std::vector<Sample> draw_batch(Strata& strata, const StratumAllocation& alloc, std::uint64_t seed,
                               ShortfallPolicy policy) {
  if (alloc.counts.size() != strata.num_strata())
    throw ValidationError(fmt::format("allocation has {} strata, corpus has {}", alloc.counts.size(),
                                      strata.num_strata()));
  std::size_t wanted = 0;
  for (int c : alloc.counts) {
    if (c < 0) throw ValidationError("allocation counts must be non-negative");
    wanted += static_cast<std::size_t>(c);
  }

  // Resolve shortfalls before touching any pool so a failed draw leaves state intact.
  std::vector<std::size_t> take(strata.num_strata(), 0);
  std::vector<std::size_t> spare(strata.num_strata());
  for (std::size_t k = 0; k < strata.num_strata(); ++k) spare[k] = strata.pools[k].size();
  for (std::size_t k = 0; k < strata.num_strata(); ++k) {
    const auto want = static_cast<std::size_t>(alloc.counts[k]);
    const std::size_t own = std::min(want, spare[k]);
    take[k] += own;
    spare[k] -= own;
    std::size_t missing = want - own;
    if (missing == 0) continue;
    if (policy == ShortfallPolicy::fail)
      throw RuntimeError(fmt::format("stratum {} (<= {} tokens) exhausted: {} requested, {} left", k + 1,
                                     strata.boundaries[k], want, strata.pools[k].size()));
    for (std::size_t j : neighbours_by_distance(strata, k)) {
      const std::size_t borrowed = std::min(missing, spare[j]);
      take[j] += borrowed;
      spare[j] -= borrowed;
      missing -= borrowed;
      if (missing == 0) break;
    }
    if (missing != 0)
      throw RuntimeError(fmt::format("corpus exhausted: {} samples requested, {} left", wanted,
                                     strata.remaining()));
  }

  std::vector<Sample> out;
  out.reserve(wanted);
  Rng rng = make_rng(seed, /*stream=*/0xd4a3);
  for (std::size_t k = 0; k < strata.num_strata(); ++k) {
    auto& pool = strata.pools[k];
    std::size_t live = pool.size();
    detail::take_from_pool(pool, live, take[k], rng, out);
    pool.resize(live);
  }
  return out;
}

}  // namespace strataclip
