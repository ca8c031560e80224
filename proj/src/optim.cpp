#include "cbm/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace cbm {

std::int64_t ParamTensor::numel() const {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

int ParamStore::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < items.size(); ++i)
    if (items[i].name == name) return static_cast<int>(i);
  return -1;
}

ParamTensor& ParamStore::at(const std::string& name) {
  const int i = index_of(name);
  if (i < 0) throw std::runtime_error("no parameter named '" + name + "'");
  return items[static_cast<std::size_t>(i)];
}

const ParamTensor& ParamStore::at(const std::string& name) const {
  return const_cast<ParamStore*>(this)->at(name);
}

}  // namespace cbm

namespace cbm::opt {

std::vector<double> xavier_init(const std::vector<int>& shape, RngStream& rng) {
  std::int64_t fan_in = 0, fan_out = 0;
  if (shape.size() == 2) {
    fan_out = shape[0];
    fan_in = shape[1];
  } else if (shape.size() == 4) {
    const std::int64_t area = static_cast<std::int64_t>(shape[2]) * shape[3];
    fan_out = shape[0] * area;
    fan_in = shape[1] * area;
  } else {
    throw std::invalid_argument("xavier_init: expected rank-2 or rank-4 shape, got rank " +
                                std::to_string(shape.size()));
  }
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  std::vector<double> out(static_cast<std::size_t>(n));
  for (double& v : out) v = rng.uniform(-bound, bound);
  return out;
}

AdamState make_adam_state(const ParamStore& params) {
  AdamState s;
  for (const auto& p : params.items) {
    s.m.emplace_back(p.value.size(), 0.0);
    s.v.emplace_back(p.value.size(), 0.0);
  }
  return s;
}

void adam_step(ParamStore& params, const std::vector<std::vector<double>>& grads, AdamState& state,
               const AdamConfig& cfg, double lr) {
  if (grads.size() != params.items.size() || state.m.size() != params.items.size())
    throw std::invalid_argument("adam_step: gradient/state count mismatch");
  for (std::size_t i = 0; i < params.items.size(); ++i) {
    if (grads[i].size() != params.items[i].value.size())
      throw std::invalid_argument("adam_step: gradient size mismatch for '" + params.items[i].name + "'");
    for (double g : grads[i])
      if (!std::isfinite(g))
        throw std::runtime_error("adam_step: non-finite gradient for parameter '" + params.items[i].name + "'");
  }

  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.items.size(); ++i) {
    auto& p = params.items[i].value;
    auto& m = state.m[i];
    auto& v = state.v[i];
    const auto& g = grads[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      // decoupled weight decay, applied before the Adam delta
      p[j] -= lr * cfg.weight_decay * p[j];
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p[j] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

double PlateauSchedule::observe(double value) {
  if (value < best) {
    best = value;
    stall = 0;
  } else {
    stall += 1;
    if (stall >= patience) {
      lr *= factor;
      stall = 0;
    }
  }
  return lr;
}

}  // namespace cbm::opt
