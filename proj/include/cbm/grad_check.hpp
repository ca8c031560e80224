#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cbm/ops.hpp"
#include "cbm/tensor.hpp"

namespace cbm::ad {

struct ParamSpec {
  std::string name;
  std::vector<int> shape;
  std::vector<double> value;
};

// Builds a scalar loss on the given tape from leaf tensors (one per ParamSpec,
// same order). Must be deterministic: called repeatedly with perturbed values.
using GraphBuilder = std::function<Tensor(Tape&, const std::vector<Tensor>&)>;

struct GradCheckReport {
  struct Entry {
    std::string name;
    double max_rel_err = 0.0;
    int coords_checked = 0;
  };
  std::vector<Entry> entries;
  double epsilon = 0.0;
  double tolerance = 0.0;
  double max_rel_err = 0.0;
  bool passed = false;
};

// Compares reverse-mode gradients against central finite differences
// (f(x+eps) - f(x-eps)) / (2 eps). Relative error per coordinate is
// |a - n| / max(|a|, |n|, 1e-8). Large tensors are spot-checked on
// min_coords sampled coordinates; smaller ones exhaustively.
GradCheckReport grad_check(const GraphBuilder& f, std::vector<ParamSpec> params, double epsilon = 1e-5,
                           double tolerance = 1e-4, int min_coords = 32, std::uint64_t sample_seed = 0);

std::string format_report(const GradCheckReport& report);

}  // namespace cbm::ad
