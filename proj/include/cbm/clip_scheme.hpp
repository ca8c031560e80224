#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <tuple>
#include <vector>

#include "cbm/cell.hpp"
#include "cbm/rng.hpp"
#include "cbm/tensor.hpp"

namespace cbm::train {

// Half-open window [start, start+length) of one sequence.
struct Clip {
  int sequence_id = 0;
  int start = 0;
  int length = 0;

  int end() const { return start + length; }
};

struct CoherenceConfig {
  double lambda = 0.8;
  double overlap_rate = 0.25;
  int clip_len_min = 4;
  int clip_len_max = 10;

  void validate() const;
};

// Samples clips left to right until the sequence is covered. Lengths are
// uniform in [clip_len_min, clip_len_max]; each clip overlaps its predecessor
// by round(overlap_rate * predecessor_length) frames, jittered by +-1. The
// union always covers [0, sequence_length) and, when overlap_rate > 0,
// adjacent clips share at least one timestamp. A sequence shorter than
// clip_len_min yields a single full-length clip.
std::vector<Clip> sample_clips(int sequence_length, const CoherenceConfig& cfg, RngStream& rng, int sequence_id = 0);

// Unordered pair of clips sharing the timestamp; a < b (indices into the
// clip list). Each shared timestamp is registered exactly once.
struct OverlapPair {
  int clip_a = 0;
  int clip_b = 0;
  int timestamp = 0;
};

struct OverlapRegistry {
  std::vector<OverlapPair> pairs;
};

OverlapRegistry build_overlap_registry(const std::vector<Clip>& clips);

// Detached per-(sequence, layer, timestamp) memory snapshots; the most recent
// write wins. Entries carry values only -- no graph links, so reading one
// never lets gradients cross clip boundaries.
class StateStore {
 public:
  struct Entry {
    std::vector<int> shape;
    std::vector<double> value;
  };

  const Entry* lookup(int sequence_id, int layer, int timestamp) const;
  bool has_all_layers(int sequence_id, int num_layers, int timestamp) const;
  void publish(int sequence_id, int layer, int timestamp, std::vector<int> shape, std::vector<double> value);
  void clear();
  std::size_t size() const { return map_.size(); }
  const std::map<std::tuple<int, int, int>, Entry>& entries() const { return map_; }

 private:
  std::map<std::tuple<int, int, int>, Entry> map_;
};

// Initial memory for a clip: the stored state at (clip.start - 1) per layer
// when present, zeros otherwise. Always detached constants on the tape.
nn::CbmState init_clip_state(ad::Tape& tape, const Clip& clip, const StateStore& store, const nn::StackConfig& cfg,
                             int h, int w);

}  // namespace cbm::train
