#include "cbm/model.hpp"

#include <stdexcept>

namespace cbm {

void ModelSpec::validate() const {
  stack.validate();
  if (image_h < 1 || image_w < 1) throw std::invalid_argument("model: image dims must be >= 1");
  if (head_outputs < 1) throw std::invalid_argument("model: head_outputs must be >= 1");
}

ParamStore init_params(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  ParamStore store;
  const int k = spec.stack.kernel;
  auto add = [&](const std::string& name, std::vector<int> shape, bool xavier) {
    ParamTensor p;
    p.name = name;
    p.shape = std::move(shape);
    if (xavier) {
      RngStream rng = derive_stream(seed, "init", {static_cast<std::uint64_t>(store.items.size())});
      p.value = opt::xavier_init(p.shape, rng);
    } else {
      p.value.assign(static_cast<std::size_t>(p.numel()), 0.0);
    }
    store.items.push_back(std::move(p));
  };
  for (int i = 0; i < spec.stack.num_layers(); ++i) {
    const int ci = spec.stack.in_channels(i);
    const int co = spec.stack.channels[i];
    const std::string prefix = "layer" + std::to_string(i) + ".";
    add(prefix + "psi.kernel", {co, ci, k, k}, true);
    add(prefix + "psi.bias", {co}, false);
    add(prefix + "phi.kernel", {co, co + ci, k, k}, true);
    add(prefix + "phi.bias", {co}, false);
  }
  add("head.weight", {spec.head_outputs, static_cast<int>(spec.head_inputs())}, true);
  add("head.bias", {spec.head_outputs}, false);
  return store;
}

TapeModel mount_params(ad::Tape& tape, const ParamStore& params, const ModelSpec& spec, bool requires_grad) {
  TapeModel model;
  for (const auto& p : params.items) model.flat.push_back(tape.leaf(p.shape, p.value, requires_grad));
  const int n = spec.stack.num_layers();
  if (static_cast<int>(params.items.size()) != 4 * n + 2)
    throw std::invalid_argument("mount_params: store does not match the model layout");
  for (int i = 0; i < n; ++i) {
    nn::CbmLayerParams lp;
    lp.psi_kernel = model.flat[static_cast<std::size_t>(4 * i)];
    lp.psi_bias = model.flat[static_cast<std::size_t>(4 * i + 1)];
    lp.phi_kernel = model.flat[static_cast<std::size_t>(4 * i + 2)];
    lp.phi_bias = model.flat[static_cast<std::size_t>(4 * i + 3)];
    model.layers.push_back(lp);
  }
  model.head_w = model.flat[static_cast<std::size_t>(4 * n)];
  model.head_b = model.flat[static_cast<std::size_t>(4 * n + 1)];
  return model;
}

std::vector<std::vector<double>> collect_grads(const TapeModel& model) {
  std::vector<std::vector<double>> grads;
  grads.reserve(model.flat.size());
  for (const auto& t : model.flat) grads.push_back(t.grad());
  return grads;
}

}  // namespace cbm
