#include "strataclip/seqdata.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "strataclip/error.hpp"
#include "strataclip/random.hpp"

namespace strataclip {

void Topology::validate() const {
  if (num_nodes < 1) throw ValidationError(fmt::format("num_nodes must be >= 1, got {}", num_nodes));
  if (gpus_per_node < 1)
    throw ValidationError(fmt::format("gpus_per_node must be >= 1, got {}", gpus_per_node));
}

void LengthDistribution::validate() const {
  if (max_seq_len < 1) throw ValidationError("max_seq_len must be >= 1");
  if (bin_boundaries.empty()) throw ValidationError("bin_boundaries must not be empty");
  if (bin_probs.size() != bin_boundaries.size())
    throw ValidationError(fmt::format("bin_probs has {} entries but bin_boundaries has {}",
                                      bin_probs.size(), bin_boundaries.size()));
  int prev = 0;
  for (int b : bin_boundaries) {
    if (b <= prev) throw ValidationError("bin_boundaries must be positive and strictly ascending");
    prev = b;
  }
  if (bin_boundaries.back() != max_seq_len)
    throw ValidationError(fmt::format("bin_boundaries must end at max_seq_len {}, got {}",
                                      max_seq_len, bin_boundaries.back()));
  double sum = 0.0;
  for (double p : bin_probs) {
    if (!std::isfinite(p) || p < 0.0) throw ValidationError("bin_probs must be finite and non-negative");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw ValidationError(fmt::format("bin_probs must sum to 1, got {}", sum));
}

std::vector<Sample> generate_corpus(const LengthDistribution& dist, std::size_t n,
                                    std::uint64_t seed) {
  dist.validate();
  Rng rng = make_rng(seed, /*stream=*/0x5e9da7a);
  std::discrete_distribution<std::size_t> pick_bin(dist.bin_probs.begin(), dist.bin_probs.end());

  std::vector<std::uniform_int_distribution<int>> within;
  within.reserve(dist.bin_boundaries.size());
  int lo = 1;
  for (int hi : dist.bin_boundaries) {
    within.emplace_back(lo, hi);
    lo = hi + 1;
  }

  std::vector<Sample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t bin = pick_bin(rng);
    const int len = dist.within_bin == WithinBinRule::uniform ? within[bin](rng)
                                                              : dist.bin_boundaries[bin];
    out.push_back({i, len});
  }
  return out;
}

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

std::vector<Sample> ingest_lengths(std::istream& in, int max_seq_len) {
  std::vector<Sample> out;
  std::string line;
  std::size_t lineno = 0;
  std::size_t pending_blank = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view text = trim(line);
    if (text.empty()) {
      if (pending_blank == 0) pending_blank = lineno;
      continue;
    }
    if (pending_blank != 0) throw ParseError(pending_blank, "empty record");

    long long value = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size())
      throw ParseError(lineno, fmt::format("not an integer: '{}'", text));
    if (value < 1 || value > max_seq_len)
      throw ParseError(lineno, fmt::format("length {} outside [1, {}]", value, max_seq_len));
    out.push_back({out.size(), static_cast<int>(value)});
  }
  // A lone trailing newline never reaches here as a blank line; anything more is an
  // empty record at the end of the file.
  if (pending_blank != 0) throw ParseError(pending_blank, "empty record");
  return out;
}

std::vector<Sample> ingest_lengths(const std::filesystem::path& path, int max_seq_len) {
  std::ifstream in(path);
  if (!in) throw RuntimeError(fmt::format("cannot open length list '{}'", path.string()));
  return ingest_lengths(in, max_seq_len);
}

void write_lengths(std::ostream& out, std::span<const Sample> samples) {
  std::string buf;
  buf.reserve(samples.size() * 4);
  for (const Sample& s : samples) {
    buf += std::to_string(s.length);
    buf += '\n';
  }
  out << buf;
}

namespace {

LengthDistribution from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ParseError(1, "distribution document must be an object");
  LengthDistribution dist;
  try {
    if (!doc.contains("bin_boundaries")) throw ValidationError("missing field bin_boundaries");
    if (!doc.contains("bin_probs")) throw ValidationError("missing field bin_probs");
    dist.bin_boundaries = doc.at("bin_boundaries").get<std::vector<int>>();
    dist.bin_probs = doc.at("bin_probs").get<std::vector<double>>();
    if (doc.contains("max_seq_len")) dist.max_seq_len = doc.at("max_seq_len").get<int>();
    if (doc.contains("within_bin")) {
      const auto rule = doc.at("within_bin").get<std::string>();
      if (rule == "uniform") dist.within_bin = WithinBinRule::uniform;
      else if (rule == "upper_edge") dist.within_bin = WithinBinRule::upper_edge;
      else throw ValidationError("within_bin must be 'uniform' or 'upper_edge'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(fmt::format("distribution field has wrong type: {}", e.what()));
  }
  return dist;
}

// Converts `key = value` lines into a JSON object so both syntaxes share one
// validation path. Values: numbers, quoted strings, or single-line arrays.
nlohmann::json toml_subset_to_json(std::string_view text) {
  nlohmann::json doc = nlohmann::json::object();
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string_view line = raw;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(lineno, "expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) throw ParseError(lineno, "expected 'key = value'");
    try {
      doc[key] = nlohmann::json::parse(value);
    } catch (const nlohmann::json::parse_error&) {
      throw ParseError(lineno, fmt::format("cannot parse value of '{}'", key));
    }
  }
  return doc;
}

}  // namespace

LengthDistribution parse_distribution(std::string_view text) {
  const std::string_view body = trim(text);
  nlohmann::json doc;
  if (!body.empty() && body.front() == '{') {
    try {
      doc = nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(1, e.what());
    }
  } else {
    doc = toml_subset_to_json(text);
  }
  LengthDistribution dist = from_json(doc);
  dist.validate();
  return dist;
}

LengthDistribution load_distribution(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw RuntimeError(fmt::format("cannot open distribution '{}'", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_distribution(ss.str());
}

std::int64_t total_tokens(std::span<const Sample> samples) noexcept {
  std::int64_t sum = 0;
  for (const Sample& s : samples) sum += s.length;
  return sum;
}

}  // namespace strataclip
