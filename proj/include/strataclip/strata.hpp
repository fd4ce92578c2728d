#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "strataclip/random.hpp"
#include "strataclip/seqdata.hpp"

namespace strataclip {

/// Length-based partition of a corpus. Stratum k holds samples with
/// boundaries[k-1] < length <= boundaries[k] (boundaries[-1] = 0), in input
/// order. `pools` shrink as batches are drawn; `probs` stay those of the
/// corpus at construction.
struct Strata {
  std::vector<int> boundaries;
  std::vector<std::vector<Sample>> pools;
  std::vector<double> probs;
  std::size_t total = 0;

  std::size_t num_strata() const noexcept { return boundaries.size(); }
  std::size_t remaining() const noexcept;
};

struct StratumAllocation {
  std::vector<int> counts;
  int local_batch = 0;
};

/// What draw_batch does when a stratum has fewer samples left than requested.
enum class ShortfallPolicy {
  borrow_adjacent,  // take the rest from the nearest non-empty stratum by boundary
  fail,             // throw RuntimeError naming the stratum
};

/// Index of the stratum a length falls into, or boundaries.size() if longer than all.
std::size_t stratum_of(std::span<const int> boundaries, int length) noexcept;

Strata stratify(std::span<const Sample> samples, std::span<const int> boundaries);

/// Largest-remainder (Hamilton) apportionment; ties go to the lower index.
/// probs are normalized by their sum, so published shares that round to
/// 1.001 are accepted as they are.
StratumAllocation allocate_counts(std::span<const double> probs, int local_batch);

/// Draws alloc.counts[k] samples without replacement from stratum k and
/// removes them from the pools. Output is grouped by stratum, ascending.
std::vector<Sample> draw_batch(Strata& strata, const StratumAllocation& alloc,
                               std::uint64_t seed,
                               ShortfallPolicy policy = ShortfallPolicy::borrow_adjacent);

namespace detail {

/// Moves `count` uniformly chosen elements of pool[0, live) to the tail of the
/// live range and shrinks `live` accordingly. Each swap is appended to `undo`
/// when given so the caller can restore the original order.
template <typename T>
void take_from_pool(std::vector<T>& pool, std::size_t& live, std::size_t count, Rng& rng,
                    std::vector<T>& out,
                    std::vector<std::pair<std::size_t, std::size_t>>* undo = nullptr) {
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(0, live - 1);
    const std::size_t j = pick(rng);
    --live;
    std::swap(pool[j], pool[live]);
    if (undo) undo->emplace_back(j, live);
    out.push_back(pool[live]);
  }
}

template <typename T>
void restore_pool(std::vector<T>& pool, std::vector<std::pair<std::size_t, std::size_t>>& undo) {
  for (auto it = undo.rbegin(); it != undo.rend(); ++it) std::swap(pool[it->first], pool[it->second]);
  undo.clear();
}

}  // namespace detail

}  // namespace strataclip
