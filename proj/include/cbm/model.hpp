#pragma once

#include <cstdint>
#include <vector>

#include "cbm/cell.hpp"
#include "cbm/optim.hpp"
#include "cbm/tensor.hpp"

namespace cbm {

// Full model: recurrent stack plus one affine head applied to the flattened
// top-layer features of a step.
struct ModelSpec {
  nn::StackConfig stack;
  int image_h = 16;
  int image_w = 16;
  int head_outputs = 1;

  std::int64_t head_inputs() const {
    return static_cast<std::int64_t>(stack.channels.back()) * image_h * image_w;
  }
  void validate() const;
};

// Fresh parameters: xavier-uniform kernels and head weight, zero biases.
// Names follow "layer<i>.psi.kernel", ..., "head.weight", "head.bias".
ParamStore init_params(const ModelSpec& spec, std::uint64_t seed);

// Parameters copied onto a tape as leaves. `flat` is aligned with
// ParamStore::items so gradients can be collected back in store order.
struct TapeModel {
  std::vector<nn::CbmLayerParams> layers;
  ad::Tensor head_w, head_b;
  std::vector<ad::Tensor> flat;
};

TapeModel mount_params(ad::Tape& tape, const ParamStore& params, const ModelSpec& spec, bool requires_grad);

// Per-parameter gradients in store order (call after tape.backward).
std::vector<std::vector<double>> collect_grads(const TapeModel& model);

}  // namespace cbm
