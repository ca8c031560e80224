#include "cbm/cell.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace cbm::nn {

MergeKind parse_merge(const std::string& s) {
  if (s == "production") return MergeKind::Production;
  if (s == "addition") return MergeKind::Addition;
  throw std::invalid_argument("unknown merge kind '" + s + "' (expected production|addition)");
}

std::string merge_name(MergeKind m) { return m == MergeKind::Production ? "production" : "addition"; }

void StackConfig::validate() const {
  if (channels.empty()) throw std::invalid_argument("stack: needs at least one layer");
  if (input_channels < 1) throw std::invalid_argument("stack: input_channels must be >= 1");
  for (int c : channels)
    if (c < 1) throw std::invalid_argument("stack: channel counts must be >= 1");
  if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("stack: kernel must be odd and positive");
}

CbmState zero_state(ad::Tape& tape, const StackConfig& cfg, int h, int w) {
  CbmState s;
  for (int i = 0; i < cfg.num_layers(); ++i) s.c.push_back(tape.zeros({cfg.channels[i], h, w}));
  return s;
}

CellStepResult cbm_cell_step(const ad::Tensor& input, const ad::Tensor& memory_prev, const CbmLayerParams& params,
                             const StackConfig& cfg, ad::Gate td_gate, bool omit_gate_node) {
  const int pad = (cfg.kernel - 1) / 2;
  ad::Tensor t_in = omit_gate_node ? input : ad::gated_edge(input, td_gate);
  ad::Tensor t_cat = ad::concat_channels(memory_prev, t_in);
  ad::Tensor t_pre = ad::conv2d(t_cat, params.phi_kernel, params.phi_bias, pad);
  ad::Tensor memory = cfg.merge == MergeKind::Production ? ad::sigmoid(t_pre) : ad::relu(t_pre);

  ad::Tensor repr;
  if (cfg.constant_bridge) {
    repr = input.tape()->constant(memory.shape(), std::vector<double>(static_cast<std::size_t>(memory.size()), 1.0));
  } else {
    repr = ad::relu(ad::conv2d(input, params.psi_kernel, params.psi_bias, pad));
  }

  ad::Tensor out = cfg.merge == MergeKind::Production ? ad::mul(repr, memory) : ad::add(repr, memory);
  return CellStepResult{out, memory, repr};
}

StackStepResult stack_step(const ad::Tensor& frame, const CbmState& prev, const std::vector<CbmLayerParams>& layers,
                           const StackConfig& cfg, const std::vector<ad::Gate>& gates) {
  cfg.validate();
  const int n = cfg.num_layers();
  if (static_cast<int>(layers.size()) != n)
    throw std::invalid_argument("stack_step: expected " + std::to_string(n) + " layer params, got " +
                                std::to_string(layers.size()));
  if (static_cast<int>(prev.c.size()) != n)
    throw std::invalid_argument("stack_step: state has " + std::to_string(prev.c.size()) + " layers, expected " +
                                std::to_string(n));
  if (static_cast<int>(gates.size()) != n)
    throw std::invalid_argument("stack_step: expected one gate per layer");

  StackStepResult res;
  ad::Tensor below = frame;
  for (int i = 0; i < n; ++i) {
    CellStepResult cell = cbm_cell_step(below, prev.c[i], layers[i], cfg, gates[i]);
    ad::Tensor out = cell.output;
    if (cfg.use_shortcuts && i >= 2 && i % 2 == 0 && res.outputs[i - 2].shape() == out.shape())
      out = ad::add(out, res.outputs[i - 2]);
    res.state.c.push_back(cell.memory);
    res.reprs.push_back(cell.repr);
    res.outputs.push_back(out);
    below = out;
  }
  res.top = below;
  return res;
}

UnrollResult unroll_clip(ad::Tape& tape, const std::vector<ad::Tensor>& frames, const CbmState& init,
                         const std::vector<CbmLayerParams>& layers, const StackConfig& cfg, double td_rate,
                         RngStream& gate_rng, bool omit_gate_nodes) {
  if (frames.empty()) throw std::invalid_argument("unroll_clip: empty frame sequence");
  if (td_rate < 0.0 || td_rate > 1.0)
    throw std::invalid_argument("unroll_clip: td_rate must lie in [0,1], got " + std::to_string(td_rate));

  UnrollResult res;
  CbmState state = init;
  const int n = cfg.num_layers();
  for (const ad::Tensor& frame : frames) {
    std::vector<ad::Gate> gates(static_cast<std::size_t>(n), ad::Gate::Pass);
    for (int i = 0; i < n; ++i)
      if (gate_rng.bernoulli(td_rate)) gates[i] = ad::Gate::Block;
    StackStepResult step =
        omit_gate_nodes
            ? [&] {
                // same graph without gate ops; used for exactness checks
                StackStepResult r;
                ad::Tensor below = frame;
                for (int i = 0; i < n; ++i) {
                  CellStepResult cell = cbm_cell_step(below, state.c[i], layers[i], cfg, ad::Gate::Pass, true);
                  ad::Tensor out = cell.output;
                  if (cfg.use_shortcuts && i >= 2 && i % 2 == 0 && r.outputs[i - 2].shape() == out.shape())
                    out = ad::add(out, r.outputs[i - 2]);
                  r.state.c.push_back(cell.memory);
                  r.reprs.push_back(cell.repr);
                  r.outputs.push_back(out);
                  below = out;
                }
                r.top = below;
                return r;
              }()
            : stack_step(frame, state, layers, cfg, gates);
    state = step.state;
    res.outputs.push_back(step.top);
    res.reprs.push_back(step.reprs);
    res.states.push_back(step.state);
  }
  res.final_state = state;
  tape.note_chain_steps(static_cast<int>(frames.size()));
  return res;
}

double TdSchedule::rate_at(int epoch) const {
  validate();
  double rate = stages.front().second;
  for (const auto& [start, r] : stages)
    if (epoch >= start) rate = r;
  return rate;
}

void TdSchedule::validate() const {
  if (stages.empty()) throw std::invalid_argument("td schedule: empty");
  if (stages.front().first != 0) throw std::invalid_argument("td schedule: first stage must start at epoch 0");
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const auto& [ep, r] = stages[i];
    if (r < 0.0 || r > 1.0) throw std::invalid_argument("td schedule: rate out of [0,1]");
    if (i > 0) {
      if (ep <= stages[i - 1].first) throw std::invalid_argument("td schedule: epochs must increase");
      if (r > stages[i - 1].second) throw std::invalid_argument("td schedule: rates must be non-increasing");
    }
  }
}

std::string TdSchedule::format() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    if (i) os << ",";
    os << stages[i].first << ":" << stages[i].second;
  }
  return os.str();
}

TdSchedule TdSchedule::parse(const std::string& text) {
  TdSchedule sched;
  std::istringstream is(text);
  std::string item;
  while (std::getline(is, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw std::invalid_argument("td schedule: expected epoch:rate, got '" + item + "'");
    sched.stages.emplace_back(std::stoi(item.substr(0, colon)), std::stod(item.substr(colon + 1)));
  }
  sched.validate();
  return sched;
}

TdSchedule TdSchedule::standard(double final_rate) {
  TdSchedule sched;
  sched.stages.emplace_back(0, 1.0);
  if (final_rate < 1.0) sched.stages.emplace_back(2, std::max(0.8, final_rate));
  if (final_rate < 0.8) sched.stages.emplace_back(4, final_rate);
  sched.validate();
  return sched;
}

}  // namespace cbm::nn
