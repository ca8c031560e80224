#pragma once

#include <cstdint>
#include <string>

#include "cbm/clip_scheme.hpp"
#include "cbm/optim.hpp"

namespace cbm::harness {

// Everything needed to resume a run exactly: the resolved config text, the
// RNG master seed + epoch counter (per-epoch streams are derived, never
// consumed statefully), parameters, optimizer moments, plateau-schedule state
// and the memory snapshots the next epoch's waves will read.
struct Checkpoint {
  std::string config_text;
  std::uint64_t seed = 0;
  std::int64_t next_epoch = 0;
  double lr = 0.0;
  double plateau_best = 0.0;
  std::int64_t plateau_stall = 0;
  std::int64_t adam_step = 0;
  ParamStore params;
  opt::AdamState adam;
  train::StateStore store;
};

// Versioned binary container: magic, version, scalar state, the config echo,
// length-prefixed named tensors, then the state store (little-endian doubles
// throughout). Round-trips byte-identically.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace cbm::harness
