#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "strataclip/seqdata.hpp"

namespace strataclip {

enum class ScanPattern { raster, snake };

std::string_view to_string(ScanPattern scan) noexcept;
ScanPattern parse_scan(std::string_view name);

/// Per-GPU sample lists for one global batch. token_counts[g] is the sum of
/// lengths on GPU g; for packing that is the sum over pack members.
struct Assignment {
  std::vector<std::vector<Sample>> per_gpu;
  std::vector<std::int64_t> token_counts;

  std::int64_t min_tokens() const;
  std::int64_t max_tokens() const;
};

/// One model input built from up to pack_limit concatenated samples.
struct Pack {
  std::vector<Sample> members;
  int total_length = 0;
};

/// GPU that receives position `i` of a list dealt over `gpus` GPUs.
int deal_target(std::size_t i, int gpus, ScanPattern scan) noexcept;

/// Round-robin in input order (the unbalanced baseline).
Assignment assign_none(std::span<const Sample> batch, const Topology& topo);

/// Sorts the whole batch longest-first and deals it over every GPU.
Assignment assign_global_presort(std::span<const Sample> batch, const Topology& topo,
                                 ScanPattern scan = ScanPattern::raster);

/// First-fit decreasing: each pack is anchored on the longest unpacked sample
/// and filled with the longest remaining samples that still fit.
std::vector<Pack> pack_corpus(std::span<const Sample> samples, int pack_limit = 2,
                              int max_seq_len = kDefaultMaxSeqLen);

Assignment assign_packing(std::span<const Pack> packs, const Topology& topo);

/// Per node: pool the node's draws, sort longest-first, deal over the node's
/// GPUs. per_gpu_draws is indexed by global GPU id (node-major).
Assignment assign_local_presort(std::span<const std::vector<Sample>> per_gpu_draws,
                                const Topology& topo, ScanPattern scan = ScanPattern::snake);

nlohmann::json to_json(const Assignment& assignment);

}  // namespace strataclip
