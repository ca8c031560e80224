#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

#include "cbm/path_count.hpp"
#include "cbm/rng.hpp"
#include "doctest.h"

using cbm::RngStream;
using cbm::derive_stream;
using cbm::nn::expected_backprop_paths;

namespace {

// Independent oracle: draw every gate explicitly, then count the realized
// backward walks of each length by depth-first enumeration over the unrolled
// grid. Ports: 0 = a layer's merged output, 1 = its memory.
struct WalkCounter {
  int L, T;
  const std::vector<std::vector<bool>>& gate_open;  // [layer][step], layer >= 1 used
  std::map<int, long long> counts;

  void dfs(int port, int i, int t, int len) {
    if (len > 0) ++counts[len];
    if (port == 0) {
      if (i > 0) {
        dfs(0, i - 1, t, len + 1);                             // representation branch
        if (gate_open[static_cast<std::size_t>(i)][static_cast<std::size_t>(t)])
          dfs(0, i - 1, t, len + 1);                           // surviving gated temporal input
      }
      if (t > 0) dfs(1, i, t - 1, len + 1);                    // into the memory chain
    } else {
      if (t > 0) dfs(1, i, t - 1, len + 1);
      if (i > 0 && gate_open[static_cast<std::size_t>(i)][static_cast<std::size_t>(t)]) dfs(0, i - 1, t, len + 1);
    }
  }
};

std::map<int, double> monte_carlo_paths(int L, int T, double td_rate, int draws, std::uint64_t seed,
                                        std::map<int, double>* stderr_out = nullptr) {
  std::map<int, long long> totals;
  std::map<int, long long> totals_sq;
  RngStream rng = derive_stream(seed, "mc-paths", {static_cast<std::uint64_t>(L), static_cast<std::uint64_t>(T)});
  for (int d = 0; d < draws; ++d) {
    std::vector<std::vector<bool>> open(static_cast<std::size_t>(L), std::vector<bool>(static_cast<std::size_t>(T)));
    for (auto& row : open)
      for (std::size_t t = 0; t < row.size(); ++t) row[t] = !rng.bernoulli(td_rate);
    WalkCounter wc{L, T, open, {}};
    wc.dfs(0, L - 1, T - 1, 0);
    for (auto& [len, c] : wc.counts) {
      totals[len] += c;
      totals_sq[len] += c * c;
    }
  }
  std::map<int, double> mean;
  for (int len = 1; len <= (L - 1) + (T - 1); ++len) {
    const double m = static_cast<double>(totals[len]) / draws;
    mean[len] = m;
    if (stderr_out) {
      const double var = static_cast<double>(totals_sq[len]) / draws - m * m;
      (*stderr_out)[len] = std::sqrt(std::max(0.0, var) / draws);
    }
  }
  return mean;
}

}  // namespace

TEST_CASE("single layer: one walk per leftward depth, independent of the dropout rate") {
  for (double rate : {0.0, 0.5, 1.0}) {
    std::map<int, double> c = expected_backprop_paths(1, 3, rate);
    REQUIRE(c.size() == 2);
    CHECK(c[1] == 1.0);
    CHECK(c[2] == 1.0);
  }
}

TEST_CASE("single step column: (1+q)^depth walks straight down") {
  const double q = 0.7;
  std::map<int, double> c = expected_backprop_paths(3, 1, 1.0 - q);
  REQUIRE(c.size() == 2);
  CHECK(c[1] == doctest::Approx(1.0 + q).epsilon(1e-12));
  CHECK(c[2] == doctest::Approx((1.0 + q) * (1.0 + q)).epsilon(1e-12));
}

TEST_CASE("2x2 grid matches the hand-derived polynomial in q") {
  for (double q : {0.0, 0.25, 0.5, 1.0}) {
    std::map<int, double> c = expected_backprop_paths(2, 2, 1.0 - q);
    REQUIRE(c.size() == 2);
    CHECK(c[1] == doctest::Approx(2.0 + q).epsilon(1e-12));
    CHECK(c[2] == doctest::Approx(1.0 + 2.0 * q).epsilon(1e-12));
  }
}

TEST_CASE("fully open gates reduce to deterministic path counting") {
  // with q = 1 every edge exists; 2x3 counted by hand
  std::map<int, double> c = expected_backprop_paths(2, 3, 0.0);
  // length 1: down (2 parallel edges) + left = 3
  CHECK(c[1] == doctest::Approx(3.0));
  // by-hand DFS over the full graph gives 5 walks of length 2 and 4 of length 3
  std::map<int, double> mc = monte_carlo_paths(2, 3, 0.0, 1, 123);
  for (auto& [len, v] : mc) CHECK(c[len] == doctest::Approx(v).epsilon(1e-12));
}

TEST_CASE("fully blocked gates leave only ungated edges") {
  std::map<int, double> c = expected_backprop_paths(3, 3, 1.0);
  std::map<int, double> mc = monte_carlo_paths(3, 3, 1.0, 1, 321);
  for (auto& [len, v] : mc) CHECK(c[len] == doctest::Approx(v).epsilon(1e-12));
}

TEST_CASE("expected counts match Monte Carlo over realized gate draws") {
  const int draws = 20000;
  for (double rate : {0.3, 0.6}) {
    for (auto [L, T] : {std::pair<int, int>{2, 3}, {3, 2}, {4, 4}}) {
      std::map<int, double> se;
      std::map<int, double> mc = monte_carlo_paths(L, T, rate, draws, 55, &se);
      std::map<int, double> dp = expected_backprop_paths(L, T, rate);
      for (auto& [len, v] : dp) {
        const double tol = 4.0 * se[len] + 1e-9;  // wide band keeps the unit test robust
        CHECK(std::abs(mc[len] - v) <= tol);
      }
    }
  }
}

TEST_CASE("input validation and grid-size cap") {
  CHECK_THROWS_AS(expected_backprop_paths(0, 3, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(expected_backprop_paths(3, 0, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(expected_backprop_paths(2, 2, -0.1), std::invalid_argument);
  CHECK_THROWS_AS(expected_backprop_paths(2, 2, 1.1), std::invalid_argument);
  CHECK_THROWS_AS(expected_backprop_paths(3, 7, 0.5), std::invalid_argument);  // 21 cells
  CHECK_NOTHROW(expected_backprop_paths(4, 5, 0.5));  // exactly 20
}
