#include "cbm/path_count.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace cbm::nn {

std::map<int, double> expected_backprop_paths(int num_layers, int num_steps, double td_rate) {
  if (num_layers < 1 || num_steps < 1)
    throw std::invalid_argument("expected_backprop_paths: grid dims must be >= 1");
  if (td_rate < 0.0 || td_rate > 1.0)
    throw std::invalid_argument("expected_backprop_paths: td_rate must lie in [0,1]");
  if (static_cast<long long>(num_layers) * num_steps > 20)
    throw std::invalid_argument("expected_backprop_paths: grid " + std::to_string(num_layers) + "x" +
                                std::to_string(num_steps) + " exceeds the supported 20 cells");

  const double q = 1.0 - td_rate;  // survival probability of a gated edge
  const int L = num_layers, T = num_steps;
  const int max_len = (L - 1) + (T - 1);

  // dp[port][layer][step] = expected number of walks of the current length
  // ending there; port 0 = output, port 1 = memory.
  using Grid = std::vector<std::vector<std::vector<double>>>;
  auto grid = [&] {
    return Grid(2, std::vector<std::vector<double>>(static_cast<std::size_t>(L),
                                                    std::vector<double>(static_cast<std::size_t>(T), 0.0)));
  };
  auto cur = grid();
  cur[0][L - 1][T - 1] = 1.0;

  std::map<int, double> counts;
  for (int len = 1; len <= max_len; ++len) {
    auto next = grid();
    for (int i = 0; i < L; ++i) {
      for (int t = 0; t < T; ++t) {
        const double from_out = cur[0][i][t];
        const double from_mem = cur[1][i][t];
        if (from_out > 0.0) {
          if (i > 0) next[0][i - 1][t] += from_out * (1.0 + q);  // repr edge + gated temporal input
          if (t > 0) next[1][i][t - 1] += from_out;              // into the memory chain
        }
        if (from_mem > 0.0) {
          if (t > 0) next[1][i][t - 1] += from_mem;  // memory chain
          if (i > 0) next[0][i - 1][t] += from_mem * q;
        }
      }
    }
    double total = 0.0;
    for (int p = 0; p < 2; ++p)
      for (int i = 0; i < L; ++i)
        for (int t = 0; t < T; ++t) total += next[p][i][t];
    counts[len] = total;
    cur = std::move(next);
  }
  return counts;
}

}  // namespace cbm::nn
