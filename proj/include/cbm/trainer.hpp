#pragma once

#include <cstdint>
#include <vector>

#include "cbm/clip_scheme.hpp"
#include "cbm/data.hpp"
#include "cbm/model.hpp"
#include "cbm/optim.hpp"

namespace cbm::train {

// Per-step top-layer outputs of one clip that is live in the current wave.
struct WaveClipOutputs {
  int clip_index = 0;
  int start = 0;
  const std::vector<ad::Tensor>* outputs = nullptr;
};

// Mean squared distance between aligned outputs over the registered pairs,
// as one scalar on the tape (so gradients reach both sides of every pair).
// Every pair must reference clips present in `clips`; an empty pair list
// yields an exact zero.
ad::Tensor coherence_loss(ad::Tape& tape, const std::vector<OverlapPair>& pairs,
                          const std::vector<WaveClipOutputs>& clips);

// sum(task_losses) + lambda * coherence
ad::Tensor total_objective(ad::Tape& tape, const std::vector<ad::Tensor>& task_losses, const ad::Tensor& coherence,
                           double lambda);

struct TrainOptions {
  CoherenceConfig coherence;
  toys::TaskKind task = toys::TaskKind::MovingShapes;
};

struct EpochStats {
  double task_loss = 0.0;   // mean task loss per clip
  double coherence = 0.0;   // mean coherence over waves that had pairs
  double grad_norm = 0.0;   // max L2 gradient norm over waves
  int peak_tape_depth = 0;  // longest unrolled chain seen on any tape
  int max_clip_len = 0;     // longest clip the sampler produced
  std::int64_t clips = 0;
  std::int64_t waves = 0;
  std::int64_t pairs = 0;
};

// One pass over the dataset. Per sequence: sample clips, then process them in
// waves -- a wave is every still-pending clip whose initial timestamp is
// already covered by the StateStore (clips starting at 0 are always ready).
// All clips of a wave share one tape; the wave objective is the sum of their
// task losses plus lambda times the coherence over pairs fully inside the
// wave; one optimizer step per wave. Afterwards each covered (layer,
// timestamp) memory is published to the store, so from the second epoch on
// every clip of a sequence is ready at once and the full overlap registry
// becomes active. The store is never cleared between epochs.
EpochStats train_epoch(const toys::Dataset& data, ParamStore& params, const ModelSpec& spec,
                       const TrainOptions& opts, opt::AdamState& adam, const opt::AdamConfig& adam_cfg, double lr,
                       double td_rate, int epoch, std::uint64_t seed, StateStore& store);

// Post-hoc stitching quality: run every clip in isolation from a zeroed
// memory (no state hand-off -- hand-off would make overlapping recomputations
// trivially identical) and average the mean squared discrepancy between
// aligned outputs over the full registry. A frame covered by two clips is
// seen once with deep history and once with shallow history; coherence
// training targets exactly this gap. Returns 0 when no pairs exist.
double measure_overlap_discrepancy(const toys::Dataset& data, const ParamStore& params, const ModelSpec& spec,
                                   const CoherenceConfig& cfg, std::uint64_t seed);

// Task loss of one clip: classification attaches cross-entropy at the clip's
// last step; distance regression averages per-step squared error against the
// frame labels.
ad::Tensor clip_task_loss(ad::Tape& tape, const nn::UnrollResult& unrolled, const Clip& clip,
                          const toys::Sequence& seq, const TapeModel& model, toys::TaskKind task);

}  // namespace cbm::train
