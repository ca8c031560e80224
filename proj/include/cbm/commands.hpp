#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "cbm/checkpoint.hpp"
#include "cbm/config.hpp"
#include "cbm/metrics.hpp"
#include "cbm/tasks.hpp"

namespace cbm::harness {

struct CliOptions {
  std::string config_path;               // empty = defaults
  std::optional<std::uint64_t> seed;     // overrides run.seed
  std::vector<std::string> overrides;    // section.key=value assignments
  std::string out_dir = "out";
  std::string resume;                    // checkpoint to continue from (train)
  std::string checkpoint;                // checkpoint to evaluate (eval)
  std::string data_spec;                 // eval: "", "train", "test" or a container path
  int instances = 20;                    // gradcheck instances per op
  bool inject_fault = false;             // gradcheck negative control
};

// Deterministic dataset construction shared by train/eval/ablate: the split
// tag keeps train and test streams independent of each other.
toys::Dataset build_dataset(const RunConfig& cfg, const std::string& split);

struct TrainResult {
  ParamStore params;
  std::vector<MetricsRow> rows;
  toys::TaskMetrics final_eval;
};

// Runs the full training loop. When out_dir is non-empty, writes
// config.ini, metrics.csv and checkpoint.bin there after every epoch. When
// resume_from is given, picks up parameters, optimizer and store state and
// continues at the recorded epoch.
TrainResult run_training(const RunConfig& cfg, const std::string& out_dir, std::ostream* log,
                         const Checkpoint* resume_from);

// Per-primitive and full-cell gradient verification against central finite
// differences; prints one line per check. Returns true when everything stays
// below the tolerance. inject_fault adds a graph whose backward is
// deliberately wrong and must be caught.
bool run_gradcheck_suite(int instances_per_op, std::uint64_t seed, bool inject_fault, std::ostream& os);

int cmd_train(const CliOptions& opts, std::ostream& os);
int cmd_eval(const CliOptions& opts, std::ostream& os);
int cmd_gradcheck(const CliOptions& opts, std::ostream& os);
int cmd_ablate(const CliOptions& opts, std::ostream& os);

}  // namespace cbm::harness
