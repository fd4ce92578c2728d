#include "strataclip/balance.hpp"

#include <algorithm>
#include <set>
#include <string>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "strataclip/error.hpp"

namespace strataclip {

std::string_view to_string(ScanPattern scan) noexcept {
  return scan == ScanPattern::raster ? "raster" : "snake";
}

ScanPattern parse_scan(std::string_view name) {
  if (name == "raster") return ScanPattern::raster;
  if (name == "snake") return ScanPattern::snake;
  throw ValidationError(fmt::format("unknown scan pattern '{}' (valid: raster, snake)", name));
}

std::int64_t Assignment::min_tokens() const {
  return token_counts.empty() ? 0 : *std::min_element(token_counts.begin(), token_counts.end());
}

std::int64_t Assignment::max_tokens() const {
  return token_counts.empty() ? 0 : *std::max_element(token_counts.begin(), token_counts.end());
}

int deal_target(std::size_t i, int gpus, ScanPattern scan) noexcept {
  const auto g = static_cast<std::size_t>(gpus);
  const std::size_t pass = i / g;
  const std::size_t pos = i % g;
  if (scan == ScanPattern::snake && (pass % 2) == 1) return static_cast<int>(g - 1 - pos);
  return static_cast<int>(pos);
}

namespace {

void check_divisible(std::size_t items, int gpus, const char* what) {
  if (items % static_cast<std::size_t>(gpus) != 0)
    throw ValidationError(fmt::format("{} {} not divisible by {} GPUs", items, what, gpus));
}

Assignment empty_assignment(int gpus, std::size_t per_gpu) {
  Assignment a;
  a.per_gpu.resize(static_cast<std::size_t>(gpus));
  for (auto& v : a.per_gpu) v.reserve(per_gpu);
  a.token_counts.assign(static_cast<std::size_t>(gpus), 0);
  return a;
}

void place(Assignment& a, std::size_t gpu, const Sample& s) {
  a.per_gpu[gpu].push_back(s);
  a.token_counts[gpu] += s.length;
}

}  // namespace

Assignment assign_none(std::span<const Sample> batch, const Topology& topo) {
  topo.validate();
  const int gpus = topo.total_gpus();
  check_divisible(batch.size(), gpus, "samples");
  Assignment a = empty_assignment(gpus, batch.size() / static_cast<std::size_t>(gpus));
  for (std::size_t i = 0; i < batch.size(); ++i)
    place(a, static_cast<std::size_t>(deal_target(i, gpus, ScanPattern::raster)), batch[i]);
  return a;
}

Assignment assign_global_presort(std::span<const Sample> batch, const Topology& topo,
                                 ScanPattern scan) {
  topo.validate();
  const int gpus = topo.total_gpus();
  check_divisible(batch.size(), gpus, "samples");
  std::vector<Sample> sorted(batch.begin(), batch.end());
  std::sort(sorted.begin(), sorted.end(), longer_first);
  Assignment a = empty_assignment(gpus, sorted.size() / static_cast<std::size_t>(gpus));
  for (std::size_t i = 0; i < sorted.size(); ++i)
    place(a, static_cast<std::size_t>(deal_target(i, gpus, scan)), sorted[i]);
  return a;
}

std::vector<Pack> pack_corpus(std::span<const Sample> samples, int pack_limit, int max_seq_len) {
  if (pack_limit < 1) throw ValidationError("pack_limit must be >= 1");
  for (const Sample& s : samples)
    if (s.length < 1 || s.length > max_seq_len)
      throw ValidationError(
          fmt::format("sample {} has length {} outside [1, {}]", s.id, s.length, max_seq_len));

  // Ascending by length, descending by id: the last element not above a
  // capacity is the longest fit with the smallest id.
  struct Order {
    bool operator()(const Sample& a, const Sample& b) const noexcept {
      return a.length != b.length ? a.length < b.length : a.id > b.id;
    }
  };
  std::multiset<Sample, Order> remaining(samples.begin(), samples.end());

  std::vector<Pack> packs;
  while (!remaining.empty()) {
    auto anchor = std::prev(remaining.end());
    Pack pack{{*anchor}, anchor->length};
    remaining.erase(anchor);
    while (static_cast<int>(pack.members.size()) < pack_limit && !remaining.empty()) {
      const int room = max_seq_len - pack.total_length;
      auto fit = remaining.upper_bound(Sample{0, room});
      if (fit == remaining.begin()) break;
      --fit;
      if (fit->length > room) break;
      pack.members.push_back(*fit);
      pack.total_length += fit->length;
      remaining.erase(fit);
    }
    packs.push_back(std::move(pack));
  }
  return packs;
}

Assignment assign_packing(std::span<const Pack> packs, const Topology& topo) {
  topo.validate();
  const int gpus = topo.total_gpus();
  check_divisible(packs.size(), gpus, "packs");
  Assignment a = empty_assignment(gpus, 2 * packs.size() / static_cast<std::size_t>(gpus));
  for (std::size_t i = 0; i < packs.size(); ++i) {
    const auto gpu = static_cast<std::size_t>(deal_target(i, gpus, ScanPattern::raster));
    for (const Sample& s : packs[i].members) place(a, gpu, s);
  }
  return a;
}

Assignment assign_local_presort(std::span<const std::vector<Sample>> per_gpu_draws,
                                const Topology& topo, ScanPattern scan) {
  topo.validate();
  const int gpus = topo.total_gpus();
  if (per_gpu_draws.size() != static_cast<std::size_t>(gpus))
    throw ValidationError(
        fmt::format("expected draws for {} GPUs, got {}", gpus, per_gpu_draws.size()));
  const std::size_t per_gpu = per_gpu_draws.front().size();
  for (std::size_t g = 0; g < per_gpu_draws.size(); ++g)
    if (per_gpu_draws[g].size() != per_gpu)
      throw ValidationError(fmt::format("GPU {} contributed {} samples, GPU 0 contributed {}", g,
                                        per_gpu_draws[g].size(), per_gpu));

  Assignment a = empty_assignment(gpus, per_gpu);
  const auto gpn = static_cast<std::size_t>(topo.gpus_per_node);
  std::vector<Sample> pool;
  pool.reserve(per_gpu * gpn);
  for (std::size_t node = 0; node < static_cast<std::size_t>(topo.num_nodes); ++node) {
    pool.clear();
    for (std::size_t g = node * gpn; g < (node + 1) * gpn; ++g)
      pool.insert(pool.end(), per_gpu_draws[g].begin(), per_gpu_draws[g].end());
    std::sort(pool.begin(), pool.end(), longer_first);
    for (std::size_t i = 0; i < pool.size(); ++i)
      place(a, node * gpn + static_cast<std::size_t>(deal_target(i, topo.gpus_per_node, scan)),
            pool[i]);
  }
  return a;
}

nlohmann::json to_json(const Assignment& assignment) {
  nlohmann::json gpus = nlohmann::json::array();
  for (std::size_t g = 0; g < assignment.per_gpu.size(); ++g) {
    std::vector<std::uint64_t> ids;
    ids.reserve(assignment.per_gpu[g].size());
    for (const Sample& s : assignment.per_gpu[g]) ids.push_back(s.id);
    gpus.push_back({{"gpu", g}, {"ids", ids}, {"token_count", assignment.token_counts[g]}});
  }
  return {{"gpus", gpus}};
}

}  // namespace strataclip
