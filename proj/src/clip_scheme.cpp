#include "cbm/clip_scheme.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace cbm::train {

void CoherenceConfig::validate() const {
  if (lambda < 0.0) throw std::invalid_argument("coherence: lambda must be >= 0");
  if (overlap_rate < 0.0 || overlap_rate >= 1.0)
    throw std::invalid_argument("coherence: overlap_rate must lie in [0,1)");
  if (clip_len_min < 2) throw std::invalid_argument("coherence: clip_len_min must be >= 2");
  if (clip_len_max < clip_len_min) throw std::invalid_argument("coherence: clip_len_max < clip_len_min");
}

std::vector<Clip> sample_clips(int sequence_length, const CoherenceConfig& cfg, RngStream& rng, int sequence_id) {
  cfg.validate();
  if (sequence_length < 2)
    throw std::invalid_argument("sample_clips: sequence of length " + std::to_string(sequence_length) +
                                " cannot be clipped");
  std::vector<Clip> clips;
  if (sequence_length <= cfg.clip_len_min) {
    clips.push_back({sequence_id, 0, sequence_length});
    return clips;
  }

  int start = 0;
  while (true) {
    int len = static_cast<int>(rng.uniform_int(cfg.clip_len_min, cfg.clip_len_max));
    if (start + len >= sequence_length) {
      // final clip snaps to the sequence end; moving start left only deepens
      // the overlap, so coverage is preserved
      len = sequence_length - start;
      if (len < 2) {
        start = sequence_length - 2;
        len = 2;
      }
      clips.push_back({sequence_id, start, len});
      break;
    }
    clips.push_back({sequence_id, start, len});
    int overlap = 0;
    if (cfg.overlap_rate > 0.0) {
      overlap = static_cast<int>(std::lround(cfg.overlap_rate * len));
      overlap += static_cast<int>(rng.uniform_int(-1, 1));
      overlap = std::clamp(overlap, 1, len - 1);
    }
    start = start + len - overlap;
  }
  return clips;
}

OverlapRegistry build_overlap_registry(const std::vector<Clip>& clips) {
  for (std::size_t i = 1; i < clips.size(); ++i)
    if (clips[i].start < clips[i - 1].start) throw std::invalid_argument("build_overlap_registry: clips must be ordered by start");
  OverlapRegistry reg;
  for (std::size_t a = 0; a < clips.size(); ++a) {
    for (std::size_t b = a + 1; b < clips.size(); ++b) {
      if (clips[b].start >= clips[a].end()) break;  // starts are sorted, so no later clip intersects either
      const int lo = std::max(clips[a].start, clips[b].start);
      const int hi = std::min(clips[a].end(), clips[b].end());
      for (int t = lo; t < hi; ++t) reg.pairs.push_back({static_cast<int>(a), static_cast<int>(b), t});
    }
  }
  return reg;
}

const StateStore::Entry* StateStore::lookup(int sequence_id, int layer, int timestamp) const {
  auto it = map_.find({sequence_id, layer, timestamp});
  return it == map_.end() ? nullptr : &it->second;
}

bool StateStore::has_all_layers(int sequence_id, int num_layers, int timestamp) const {
  for (int i = 0; i < num_layers; ++i)
    if (!lookup(sequence_id, i, timestamp)) return false;
  return true;
}

void StateStore::publish(int sequence_id, int layer, int timestamp, std::vector<int> shape,
                         std::vector<double> value) {
  map_[{sequence_id, layer, timestamp}] = Entry{std::move(shape), std::move(value)};
}

void StateStore::clear() { map_.clear(); }

nn::CbmState init_clip_state(ad::Tape& tape, const Clip& clip, const StateStore& store, const nn::StackConfig& cfg,
                             int h, int w) {
  nn::CbmState state;
  for (int i = 0; i < cfg.num_layers(); ++i) {
    const StateStore::Entry* e = clip.start > 0 ? store.lookup(clip.sequence_id, i, clip.start - 1) : nullptr;
    if (e) {
      state.c.push_back(tape.constant(e->shape, e->value));
    } else {
      state.c.push_back(tape.zeros({cfg.channels[i], h, w}));
    }
  }
  return state;
}

}  // namespace cbm::train
