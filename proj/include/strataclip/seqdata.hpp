#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

namespace strataclip {

inline constexpr int kDefaultMaxSeqLen = 512;

/// One training sequence. Ordering helpers sort longest-first, ids ascending.
struct Sample {
  std::uint64_t id = 0;
  int length = 0;

  friend bool operator==(const Sample&, const Sample&) = default;
};

/// Longest first; equal lengths ordered by ascending id.
inline bool longer_first(const Sample& a, const Sample& b) noexcept {
  return a.length != b.length ? a.length > b.length : a.id < b.id;
}

struct Topology {
  int num_nodes = 1;
  int gpus_per_node = 8;

  int total_gpus() const noexcept { return num_nodes * gpus_per_node; }
  void validate() const;
};

enum class WithinBinRule {
  uniform,     // uniform integer over the bin's inclusive range
  upper_edge,  // every draw lands on the bin's upper boundary
};

/// Published Wikipedia bin shares (1-128, 129-256, 257-384, 385-512 tokens).
/// They add up to 1.001, so the default distribution renormalizes them.
inline constexpr double kWikipediaBinShares[4] = {0.373, 0.197, 0.117, 0.314};

struct LengthDistribution {
  std::vector<int> bin_boundaries{128, 256, 384, 512};
  std::vector<double> bin_probs{kWikipediaBinShares[0] / 1.001, kWikipediaBinShares[1] / 1.001,
                                kWikipediaBinShares[2] / 1.001, kWikipediaBinShares[3] / 1.001};
  WithinBinRule within_bin = WithinBinRule::uniform;
  int max_seq_len = kDefaultMaxSeqLen;

  /// Bi-modal Wikipedia-like histogram used as the default corpus.
  static LengthDistribution wikipedia_like() { return {}; }

  /// Throws ValidationError naming the offending field.
  void validate() const;
};

std::vector<Sample> generate_corpus(const LengthDistribution& dist,
                                    std::size_t n, std::uint64_t seed);

/// Newline-delimited positive integers, ids assigned in input order.
/// Blank lines are rejected except a single trailing newline.
std::vector<Sample> ingest_lengths(std::istream& in,
                                   int max_seq_len = kDefaultMaxSeqLen);
std::vector<Sample> ingest_lengths(const std::filesystem::path& path,
                                   int max_seq_len = kDefaultMaxSeqLen);

void write_lengths(std::ostream& out, std::span<const Sample> samples);

/// Accepts either a JSON object or `key = [v, ...]` lines (TOML subset)
/// with fields `bin_boundaries`, `bin_probs` and optional `max_seq_len`,
/// `within_bin`. The result is validated.
LengthDistribution parse_distribution(std::string_view text);
LengthDistribution load_distribution(const std::filesystem::path& path);

std::int64_t total_tokens(std::span<const Sample> samples) noexcept;

}  // namespace strataclip
