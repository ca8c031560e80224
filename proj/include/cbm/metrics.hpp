#pragma once

#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cbm::harness {

// One epoch of training metrics. Only deterministic quantities belong here;
// the CSV must be byte-identical across reruns of the same config + seed
// (wall-clock timing goes to the run log instead).
struct MetricsRow {
  int epoch = 0;
  double task_loss = 0.0;
  double coherence = 0.0;
  double accuracy = 0.0;
  double exact_match = 0.0;
  double mae = 0.0;
  double lr = 0.0;
  double td_rate = 0.0;
};

inline std::string metrics_header() {
  return "epoch,task_loss,coherence_loss,accuracy,exact_match,mae,learning_rate,td_rate";
}

inline std::string format_metrics_row(const MetricsRow& r) {
  char buf[320];
  std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", r.epoch, r.task_loss, r.coherence,
                r.accuracy, r.exact_match, r.mae, r.lr, r.td_rate);
  return buf;
}

inline void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
  std::ofstream os(path, std::ios::binary);  // binary: no platform newline translation
  if (!os) throw std::runtime_error("cannot open metrics file '" + path + "'");
  os << metrics_header() << "\n";
  for (const auto& r : rows) os << format_metrics_row(r) << "\n";
  if (!os) throw std::runtime_error("write failed for metrics file '" + path + "'");
}

}  // namespace cbm::harness
