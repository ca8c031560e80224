#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "cbm/rng.hpp"

namespace cbm {

struct ParamTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<double> value;

  std::int64_t numel() const;
};

struct ParamStore {
  std::vector<ParamTensor> items;

  int index_of(const std::string& name) const;  // -1 when absent
  ParamTensor& at(const std::string& name);
  const ParamTensor& at(const std::string& name) const;
};

}  // namespace cbm

namespace cbm::opt {

// Uniform(-b, b) with b = sqrt(6 / (fan_in + fan_out)). Rank-2 tensors use
// (D_in, D_out); rank-4 conv kernels use channels x kernel area.
std::vector<double> xavier_init(const std::vector<int>& shape, RngStream& rng);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-5;
};

struct AdamState {
  std::vector<std::vector<double>> m, v;
  std::int64_t step = 0;
};

AdamState make_adam_state(const ParamStore& params);

// One bias-corrected Adam update over every parameter. Decoupled weight decay
// is applied to the parameter values before the Adam delta. Non-finite
// gradients are rejected with the offending parameter's name.
void adam_step(ParamStore& params, const std::vector<std::vector<double>>& grads, AdamState& state,
               const AdamConfig& cfg, double lr);

// Halve-on-plateau learning-rate schedule: after `patience` consecutive
// epochs without improvement of the monitored value, multiply lr by factor.
struct PlateauSchedule {
  double lr = 1e-4;
  double factor = 0.5;
  int patience = 3;
  double best = std::numeric_limits<double>::infinity();
  int stall = 0;

  // feed one epoch's monitored value; returns the lr to use next
  double observe(double value);
};

}  // namespace cbm::opt
