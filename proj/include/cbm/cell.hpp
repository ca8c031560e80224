#pragma once

#include <string>
#include <vector>

#include "cbm/ops.hpp"
#include "cbm/rng.hpp"
#include "cbm/tensor.hpp"

namespace cbm::nn {

enum class MergeKind { Production, Addition };

MergeKind parse_merge(const std::string& s);
std::string merge_name(MergeKind m);

// Stack layout. Layer i maps (i == 0 ? input_channels : channels[i-1])
// input channels to channels[i] output channels; spatial dims are preserved
// (odd kernel, padding (kernel-1)/2).
struct StackConfig {
  int input_channels = 1;
  std::vector<int> channels;
  MergeKind merge = MergeKind::Production;
  bool use_shortcuts = false;
  // Forces the representation branch to emit all-ones, which under the
  // production merge collapses the cell to a plain gated-conv recurrence.
  bool constant_bridge = false;
  int kernel = 3;

  int num_layers() const { return static_cast<int>(channels.size()); }
  int in_channels(int layer) const { return layer == 0 ? input_channels : channels[layer - 1]; }
  void validate() const;
};

// Per-layer parameters. psi drives the representation branch
// (relu(conv(input))), phi the temporal branch operating on the channel
// concatenation [memory, gated input].
struct CbmLayerParams {
  ad::Tensor psi_kernel;  // [C_out, C_in, k, k]
  ad::Tensor psi_bias;    // [C_out]
  ad::Tensor phi_kernel;  // [C_out, C_out + C_in, k, k]
  ad::Tensor phi_bias;    // [C_out]
};

// Memory tensors c, one per layer.
struct CbmState {
  std::vector<ad::Tensor> c;
};

CbmState zero_state(ad::Tape& tape, const StackConfig& cfg, int h, int w);

struct CellStepResult {
  ad::Tensor output;  // merged o
  ad::Tensor memory;  // c
  ad::Tensor repr;    // representation branch o' (all-ones under constant_bridge)
};

// One cell update:
//   repr    = relu(conv_psi(input))               (or all-ones)
//   memory  = act(conv_phi([memory_prev, gated(input)]))
//   output  = repr * memory   (production)  |  repr + memory  (addition)
// where act is sigmoid for production and relu for addition, and the gate
// blocks only the backward pass of the cross-layer input to the temporal
// branch. omit_gate_node builds the same graph without the gate op (used to
// verify that a fully open gate is exactly neutral).
CellStepResult cbm_cell_step(const ad::Tensor& input, const ad::Tensor& memory_prev, const CbmLayerParams& params,
                             const StackConfig& cfg, ad::Gate td_gate, bool omit_gate_node = false);

struct StackStepResult {
  ad::Tensor top;                 // merged output of the last layer
  CbmState state;                 // memories after this step
  std::vector<ad::Tensor> reprs;  // per-layer o'
  std::vector<ad::Tensor> outputs;  // per-layer merged o (after shortcuts)
};

StackStepResult stack_step(const ad::Tensor& frame, const CbmState& prev, const std::vector<CbmLayerParams>& layers,
                           const StackConfig& cfg, const std::vector<ad::Gate>& gates);

struct UnrollResult {
  std::vector<ad::Tensor> outputs;              // top output per step
  std::vector<CbmState> states;                 // memory state after each step
  std::vector<std::vector<ad::Tensor>> reprs;   // per step, per layer
  CbmState final_state;
};

// Unrolls a clip over one tape; per (layer, step) an independent Bernoulli
// draw from gate_rng decides whether that step's cross-layer temporal edge is
// blocked in the backward pass (probability td_rate). Forward values never
// depend on the draws.
UnrollResult unroll_clip(ad::Tape& tape, const std::vector<ad::Tensor>& frames, const CbmState& init,
                         const std::vector<CbmLayerParams>& layers, const StackConfig& cfg, double td_rate,
                         RngStream& gate_rng, bool omit_gate_nodes = false);

// Piecewise-constant temporal-dropout rate by epoch; rates must be
// non-increasing and start at epoch 0.
struct TdSchedule {
  std::vector<std::pair<int, double>> stages;  // (first epoch, rate)

  double rate_at(int epoch) const;
  void validate() const;
  std::string format() const;
  static TdSchedule parse(const std::string& text);
  // 1.0 for two epochs, 0.8 for two more, then final_rate (stages collapse
  // when final_rate is higher).
  static TdSchedule standard(double final_rate);
};

}  // namespace cbm::nn
