#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cbm/data.hpp"
#include "cbm/model.hpp"
#include "cbm/rng.hpp"

namespace cbm::toys {

// Moving shapes: a triangle or a circle glyph drifting horizontally at
// `speed` px/frame with wrap-around; four joint classes
// (0 triangle-left, 1 triangle-right, 2 circle-left, 3 circle-right),
// assigned round-robin so counts stay balanced. Pixels are {0,1} plus
// optional additive noise in [0, noise).
Dataset gen_moving_shapes(int n, int seq_len, int h, int w, int speed, double noise, RngStream& rng);

// Cat & Dog: every frame shows the dog glyph except one cat frame at
// cat_position ~ uniform{0 .. seq_len-1-max_gap}, so every sequence contains
// distances up to max_gap. Frame labels: -1 before the cat, 0 at the cat,
// k at the k-th frame after it.
Dataset gen_catdog(int n, int seq_len, int h, int w, int max_gap, double noise, RngStream& rng);

// Analytic label recovery for moving shapes from two consecutive noise-free
// frames: the glyph is identified by pixel mass and the direction by the
// circular-mean x displacement. Used to cross-check the generator.
int recover_moving_shape_class(const Image& a, const Image& b, int speed);

struct TaskMetrics {
  double accuracy = 0.0;     // classification
  double exact_match = 0.0;  // rounded distance == label, over all frames
  double mae = 0.0;          // |pred - label| over frames at or after the cat
  double task_loss = 0.0;    // mean eval-time task loss
};

// Full-sequence inference (no clipping): zero initial state, memories carried
// across the entire sequence. Returns the head output per frame.
std::vector<std::vector<double>> run_full_sequence(const Sequence& seq, const ParamStore& params,
                                                   const ModelSpec& spec);

TaskMetrics evaluate_classification(const Dataset& data, const ParamStore& params, const ModelSpec& spec);
TaskMetrics evaluate_distance(const Dataset& data, const ParamStore& params, const ModelSpec& spec);
TaskMetrics evaluate(const Dataset& data, const ParamStore& params, const ModelSpec& spec);

// Binary dataset container: magic, version, task id, then per sequence the
// labels and raw frame doubles (little-endian).
void save_dataset(const std::string& path, const Dataset& data);
Dataset load_dataset(const std::string& path);

}  // namespace cbm::toys
