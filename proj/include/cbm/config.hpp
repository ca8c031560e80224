#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cbm/cell.hpp"
#include "cbm/clip_scheme.hpp"
#include "cbm/data.hpp"
#include "cbm/model.hpp"
#include "cbm/optim.hpp"

namespace cbm::harness {

// Everything a run needs, serializable as flat "key = value" lines grouped
// into [sections]. Defaults follow the reference training recipe; toy configs
// under configs/ override the desk-scale knobs.
struct RunConfig {
  struct Run {
    std::string task = "moving-shapes";
    std::uint64_t seed = 42;
    int epochs = 10;
  } run;

  struct Data {
    int train_sequences = 80;
    int test_sequences = 40;
    int seq_len = 8;
    int image_h = 16;
    int image_w = 16;
    int speed = 1;     // moving shapes
    int max_gap = 50;  // catdog
    double noise = 0.0;
  } data;

  struct Stack {
    std::vector<int> channels = {3, 3, 3};
    std::string merge = "production";
    bool shortcuts = false;
    bool constant_bridge = false;
    int kernel = 3;
  } stack;

  struct Coherence {
    double lambda = 0.8;
    double overlap_rate = 0.25;
    int clip_len_min = 4;
    int clip_len_max = 10;
  } coherence;

  struct Td {
    std::string schedule = "0:1.0,2:0.8,4:0.5";
  } td;

  struct Optim {
    double lr = 1e-4;
    double weight_decay = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int plateau_patience = 3;
    double lr_decay_factor = 0.5;
  } optim;

  toys::TaskKind task_kind() const { return toys::parse_task(run.task); }
  nn::TdSchedule td_schedule() const { return nn::TdSchedule::parse(td.schedule); }
  train::CoherenceConfig coherence_config() const;
  ModelSpec model_spec() const;
  opt::AdamConfig adam_config() const;
  void validate() const;
};

// Parse from INI-style text; unknown sections/keys and malformed lines are
// rejected with their line number. Parsing starts from the defaults.
RunConfig parse_config(const std::string& text);
RunConfig load_config_file(const std::string& path);

// Canonical serialization; parse(format(c)) == c.
std::string format_config(const RunConfig& cfg);

// Apply one "section.key=value" override.
void apply_override(RunConfig& cfg, const std::string& assignment);

}  // namespace cbm::harness
