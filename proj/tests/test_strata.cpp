#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "strataclip/error.hpp"
#include "strataclip/strata.hpp"

using namespace strataclip;

namespace {

std::vector<Sample> from_lengths(const std::vector<int>& lengths) {
  std::vector<Sample> out;
  for (std::size_t i = 0; i < lengths.size(); ++i) out.push_back({i, lengths[i]});
  return out;
}

// Hamilton apportionment by exhaustive search: among all ways to hand the
// leftover seats to distinct strata, keep the one with the largest total
// remainder, and among equals the lexicographically smallest index set.
std::vector<int> brute_force_apportion(const std::vector<double>& probs, int b) {
  const std::size_t n = probs.size();
  const double total = std::accumulate(probs.begin(), probs.end(), 0.0);
  std::vector<int> base(n);
  std::vector<double> rem(n);
  int given = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double q = probs[k] * b / total;
    base[k] = static_cast<int>(std::floor(q));
    rem[k] = q - base[k];
    given += base[k];
  }
  const int extra = b - given;
  std::vector<int> best;
  double best_sum = -1.0;
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    if (std::popcount(mask) != extra) continue;
    double sum = 0.0;
    for (std::size_t k = 0; k < n; ++k)
      if (mask & (1u << k)) sum += rem[k];
    std::vector<int> counts = base;
    for (std::size_t k = 0; k < n; ++k)
      if (mask & (1u << k)) ++counts[k];
    if (sum > best_sum + 1e-12 || (std::abs(sum - best_sum) <= 1e-12 && counts > best)) {
      best_sum = sum;
      best = counts;
    }
  }
  return best;
}

}  // namespace

TEST_SUITE("strata") {

TEST_CASE("one sample per bin") {
  const std::vector<int> bounds{128, 256, 384, 512};
  const auto s = stratify(from_lengths({100, 200, 300, 500}), bounds);
  REQUIRE(s.pools.size() == 4);
  for (const auto& pool : s.pools) CHECK(pool.size() == 1);
  for (double p : s.probs) CHECK(p == doctest::Approx(0.25));
}

TEST_CASE("degenerate concentration") {
  const std::vector<int> bounds{128, 256, 384, 512};
  const auto s = stratify(from_lengths(std::vector<int>(50, 64)), bounds);
  CHECK(s.probs == std::vector<double>{1.0, 0.0, 0.0, 0.0});
  CHECK(s.pools[0].size() == 50);
}

TEST_CASE("boundaries are inclusive upper edges and order is preserved") {
  const std::vector<int> bounds{128, 256, 384, 512};
  const auto s = stratify(from_lengths({128, 129, 1, 256, 512, 385, 2}), bounds);
  CHECK(s.pools[0] == std::vector<Sample>{{0, 128}, {2, 1}, {6, 2}});
  CHECK(s.pools[1] == std::vector<Sample>{{1, 129}, {3, 256}});
  CHECK(s.pools[2].empty());
  CHECK(s.pools[3] == std::vector<Sample>{{4, 512}, {5, 385}});
}

TEST_CASE("default corpus strata follow the published shares") {
  const auto corpus = generate_corpus(LengthDistribution::wikipedia_like(), 1000, 77);
  const std::vector<int> bounds{128, 256, 384, 512};
  const auto s = stratify(corpus, bounds);
  for (std::size_t k = 0; k < 4; ++k) CHECK(std::abs(s.probs[k] - kWikipediaBinShares[k]) <= 0.05);
}

TEST_CASE("sample longer than the last boundary is named") {
  const std::vector<int> bounds{128, 256};
  try {
    stratify(from_lengths({5, 300}), bounds);
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("1") != std::string::npos);
    CHECK(std::string(e.what()).find("300") != std::string::npos);
  }
}

TEST_CASE("apportionment examples") {
  CHECK(allocate_counts(std::vector<double>{5 / 16.0, 2 / 16.0, 3 / 16.0, 6 / 16.0}, 16).counts ==
        std::vector<int>{5, 2, 3, 6});
  CHECK(allocate_counts(std::vector<double>{0.373, 0.197, 0.117, 0.314}, 16).counts ==
        std::vector<int>{6, 3, 2, 5});
  CHECK(allocate_counts(std::vector<double>{0.2, 0.8}, 0).counts == std::vector<int>{0, 0});
  // exact ties go to the lower index
  CHECK(allocate_counts(std::vector<double>{0.25, 0.25, 0.25, 0.25}, 2).counts ==
        std::vector<int>{1, 1, 0, 0});
  CHECK_THROWS_AS(allocate_counts(std::vector<double>{1.2, -0.2}, 4), ValidationError);
  CHECK_THROWS_AS(allocate_counts(std::vector<double>{0.5, 0.5}, -1), ValidationError);
  CHECK_THROWS_AS(allocate_counts(std::vector<double>{0.0, 0.0}, 3), ValidationError);
  // unnormalized weights are apportioned by their share of the total
  CHECK(allocate_counts(std::vector<double>{5, 2, 3, 6}, 16).counts == std::vector<int>{5, 2, 3, 6});
}

TEST_CASE("apportionment matches exhaustive search and stays within one of the quota") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = 1 + rng() % 6;
    std::vector<double> w(n);
    for (double& x : w) x = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    for (double& x : w) x /= total;
    const int b = static_cast<int>(rng() % 200);
    const auto got = allocate_counts(w, b).counts;
    CHECK(std::accumulate(got.begin(), got.end(), 0) == b);
    for (std::size_t k = 0; k < n; ++k) CHECK(std::abs(got[k] - w[k] * b) < 1.0);
    CHECK(got == brute_force_apportion(w, b));
  }
}

TEST_CASE("exhaustive draw returns the whole corpus once") {
  std::vector<int> lengths;
  for (int i = 0; i < 5; ++i) lengths.push_back(10 + i);
  for (int i = 0; i < 2; ++i) lengths.push_back(200 + i);
  for (int i = 0; i < 3; ++i) lengths.push_back(300 + i);
  for (int i = 0; i < 6; ++i) lengths.push_back(400 + i);
  const auto corpus = from_lengths(lengths);
  const std::vector<int> bounds{128, 256, 384, 512};
  auto s = stratify(corpus, bounds);
  const StratumAllocation alloc{{5, 2, 3, 6}, 16};
  auto drawn = draw_batch(s, alloc, 3, ShortfallPolicy::fail);
  CHECK(s.remaining() == 0);
  std::sort(drawn.begin(), drawn.end(), [](auto& a, auto& b) { return a.id < b.id; });
  CHECK(drawn == corpus);
}

TEST_CASE("single-stratum draw") {
  const auto corpus = generate_corpus(LengthDistribution::wikipedia_like(), 200, 1);
  const std::vector<int> bounds{128, 256, 384, 512};
  auto s = stratify(corpus, bounds);
  const auto drawn = draw_batch(s, StratumAllocation{{1, 0, 0, 0}, 1}, 9);
  REQUIRE(drawn.size() == 1);
  CHECK(drawn[0].length <= 128);
}

TEST_CASE("draws are deterministic per seed") {
  const auto corpus = generate_corpus(LengthDistribution::wikipedia_like(), 500, 2);
  const std::vector<int> bounds{128, 256, 384, 512};
  auto a = stratify(corpus, bounds);
  auto b = stratify(corpus, bounds);
  const auto alloc = allocate_counts(a.probs, 16);
  for (std::uint64_t step = 0; step < 10; ++step) CHECK(draw_batch(a, alloc, step) == draw_batch(b, alloc, step));
}

TEST_CASE("epoch completeness") {
  const auto corpus = generate_corpus(LengthDistribution::wikipedia_like(), 1003, 8);
  const std::vector<int> bounds{128, 256, 384, 512};
  auto s = stratify(corpus, bounds);
  const auto alloc = allocate_counts(s.probs, 16);
  std::multiset<std::uint64_t> seen;
  std::size_t batches = 0;
  while (s.remaining() > 0) {
    StratumAllocation a = alloc;
    if (s.remaining() < 16) a = allocate_counts(s.probs, static_cast<int>(s.remaining()));
    for (const Sample& x : draw_batch(s, a, batches)) seen.insert(x.id);
    ++batches;
  }
  CHECK(batches == (corpus.size() + 15) / 16);
  CHECK(seen.size() == corpus.size());
  for (const Sample& x : corpus) CHECK(seen.count(x.id) == 1);
}

TEST_CASE("shortfall borrows from the nearest stratum or fails by name") {
  const std::vector<int> bounds{128, 256, 384, 512};
  const auto corpus = from_lengths({10, 20, 300, 400, 450, 500});
  {
    auto s = stratify(corpus, bounds);
    const auto drawn = draw_batch(s, StratumAllocation{{0, 0, 3, 0}, 3}, 1);
    CHECK(drawn.size() == 3);
    CHECK(std::count_if(drawn.begin(), drawn.end(), [](auto& x) { return x.length == 300; }) == 1);
    // stratum 2 is empty and stratum 4 (boundary 512) is closer to 384 than stratum 1
    CHECK(std::all_of(drawn.begin(), drawn.end(), [](auto& x) { return x.length >= 300; }));
  }
  {
    auto s = stratify(corpus, bounds);
    try {
      draw_batch(s, StratumAllocation{{0, 0, 3, 0}, 3}, 1, ShortfallPolicy::fail);
      FAIL("expected exhaustion");
    } catch (const RuntimeError& e) {
      CHECK(std::string(e.what()).find("stratum 3") != std::string::npos);
    }
  }
  {
    auto s = stratify(corpus, bounds);
    CHECK_THROWS_AS(draw_batch(s, StratumAllocation{{4, 4, 0, 0}, 8}, 1), RuntimeError);
  }
}

}
