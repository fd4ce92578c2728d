#include <doctest.h>

#include <array>
#include <cmath>
#include <sstream>

#include "strataclip/error.hpp"
#include "strataclip/seqdata.hpp"

using namespace strataclip;

TEST_SUITE("seqdata") {

TEST_CASE("single-bin corpus stays inside the bin") {
  LengthDistribution dist;
  dist.bin_boundaries = {512};
  dist.bin_probs = {1.0};
  for (std::uint64_t seed : {0ull, 1ull, 99ull}) {
    const auto samples = generate_corpus(dist, 3, seed);
    REQUIRE(samples.size() == 3);
    for (const Sample& s : samples) {
      CHECK(s.length >= 1);
      CHECK(s.length <= 512);
    }
  }
}

TEST_CASE("empty corpus") { CHECK(generate_corpus(LengthDistribution::wikipedia_like(), 0, 5).empty()); }

TEST_CASE("default distribution is the renormalized Wikipedia histogram") {
  const auto dist = LengthDistribution::wikipedia_like();
  CHECK(dist.bin_boundaries == std::vector<int>{128, 256, 384, 512});
  double sum = 0.0;
  for (double p : dist.bin_probs) sum += p;
  CHECK(std::abs(sum - 1.0) < 1e-12);
  for (std::size_t k = 0; k < 4; ++k) CHECK(std::abs(dist.bin_probs[k] - kWikipediaBinShares[k]) < 5e-4);
}

TEST_CASE("bin frequencies match the published shares and pass chi-square") {
  const auto dist = LengthDistribution::wikipedia_like();
  const std::size_t n = 100000;
  const auto samples = generate_corpus(dist, n, 2024);
  std::array<double, 4> counts{};
  for (const Sample& s : samples) {
    const int bin = (s.length - 1) / 128;
    counts[static_cast<std::size_t>(bin)] += 1.0;
  }
  double chi2 = 0.0;
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(std::abs(counts[k] / n - kWikipediaBinShares[k]) <= 0.01);
    const double expected = dist.bin_probs[k] * n;
    chi2 += (counts[k] - expected) * (counts[k] - expected) / expected;
  }
  // chi-square critical value, 3 degrees of freedom, significance 0.001
  CHECK(chi2 < 16.266);
}

TEST_CASE("generation is deterministic per seed") {
  const auto dist = LengthDistribution::wikipedia_like();
  CHECK(generate_corpus(dist, 1000, 11) == generate_corpus(dist, 1000, 11));
  CHECK_FALSE(generate_corpus(dist, 1000, 11) == generate_corpus(dist, 1000, 12));
}

TEST_CASE("upper-edge rule puts every sample on a boundary") {
  LengthDistribution dist;
  dist.within_bin = WithinBinRule::upper_edge;
  for (const Sample& s : generate_corpus(dist, 500, 3)) CHECK(s.length % 128 == 0);
}

TEST_CASE("distribution validation") {
  LengthDistribution d;
  d.bin_probs = {0.3, 0.2, 0.1, 0.3};
  CHECK_THROWS_AS(d.validate(), ValidationError);
  d = {};
  d.bin_boundaries = {128, 128, 384, 512};
  CHECK_THROWS_AS(d.validate(), ValidationError);
  d = {};
  d.bin_boundaries = {128, 256, 384, 500};
  CHECK_THROWS_AS(d.validate(), ValidationError);
  d = {};
  d.bin_probs = {0.5, -0.1, 0.3, 0.3};
  CHECK_THROWS_AS(d.validate(), ValidationError);
  CHECK_THROWS_AS(generate_corpus(LengthDistribution{{512}, {0.9}}, 3, 1), ValidationError);
}

TEST_CASE("ingest maps lines to samples in order") {
  std::istringstream in("512\n3\n128");
  const auto s = ingest_lengths(in);
  REQUIRE(s.size() == 3);
  CHECK(s[0] == Sample{0, 512});
  CHECK(s[1] == Sample{1, 3});
  CHECK(s[2] == Sample{2, 128});

  std::istringstream trailing("7\n9\n");
  CHECK(ingest_lengths(trailing).size() == 2);
}

TEST_CASE("ingest rejects bad records with the line number") {
  auto line_of = [](const std::string& text) -> std::size_t {
    std::istringstream in(text);
    try {
      ingest_lengths(in);
    } catch (const ParseError& e) {
      return e.line();
    }
    return 0;
  };
  CHECK(line_of("0") == 1);
  CHECK(line_of("5\n-3\n") == 2);
  CHECK(line_of("5\n6\n513\n") == 3);
  CHECK(line_of("5\n1.5\n") == 2);
  CHECK(line_of("5\nabc\n") == 2);
  CHECK(line_of("5\n\n6\n") == 2);
}

TEST_CASE("ingest preserves a million records") {
  std::string text;
  text.reserve(4'000'000);
  for (int i = 0; i < 1'000'000; ++i) {
    text += std::to_string(1 + i % 512);
    text += '\n';
  }
  std::istringstream in(text);
  const auto s = ingest_lengths(in);
  REQUIRE(s.size() == 1'000'000);
  CHECK(s.front().id == 0);
  CHECK(s.back().id == 999'999);
  CHECK(s.back().length == 1 + 999'999 % 512);
}

TEST_CASE("write then ingest reproduces lengths") {
  const auto corpus = generate_corpus(LengthDistribution::wikipedia_like(), 200, 4);
  std::stringstream buf;
  write_lengths(buf, corpus);
  CHECK(ingest_lengths(buf) == corpus);
}

TEST_CASE("distribution documents") {
  const auto toml = parse_distribution(
      "# two bins\nbin_boundaries = [256, 512]\nbin_probs = [0.25, 0.75]\n");
  CHECK(toml.bin_boundaries == std::vector<int>{256, 512});
  CHECK(toml.bin_probs == std::vector<double>{0.25, 0.75});

  const auto json = parse_distribution(
      R"({"bin_boundaries": [100, 200], "bin_probs": [0.5, 0.5], "max_seq_len": 200})");
  CHECK(json.max_seq_len == 200);

  try {
    parse_distribution("bin_boundaries = [256, 512]\nbin_probs = [0.5, 0.4]\n");
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("bin_probs") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_distribution("bin_boundaries [256, 512]\n"), ParseError);
  CHECK_THROWS_AS(parse_distribution("bin_probs = [1.0]\n"), ValidationError);
}

TEST_CASE("topology") {
  CHECK(Topology{8, 8}.total_gpus() == 64);
  CHECK_THROWS_AS(Topology({0, 8}).validate(), ValidationError);
  CHECK_THROWS_AS(Topology({1, 0}).validate(), ValidationError);
}

}
