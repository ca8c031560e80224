#include "cbm/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace cbm::harness {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("expected true|false, got '" + v + "'");
}

std::vector<int> parse_int_list(const std::string& v) {
  std::vector<int> out;
  std::istringstream is(v);
  std::string item;
  while (std::getline(is, item, ',')) out.push_back(std::stoi(trim(item)));
  if (out.empty()) throw std::invalid_argument("expected a comma-separated integer list");
  return out;
}

std::string format_int_list(const std::vector<int>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

using Setter = std::function<void(RunConfig&, const std::string&)>;
using Getter = std::function<std::string(const RunConfig&)>;

struct Field {
  Setter set;
  Getter get;
};

// one table drives parsing, overrides and canonical formatting
const std::vector<std::pair<std::string, Field>>& field_table() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"run.task", {[](RunConfig& c, const std::string& v) { toys::parse_task(v); c.run.task = v; },
                    [](const RunConfig& c) { return c.run.task; }}},
      {"run.seed", {[](RunConfig& c, const std::string& v) { c.run.seed = std::stoull(v); },
                    [](const RunConfig& c) { return std::to_string(c.run.seed); }}},
      {"run.epochs", {[](RunConfig& c, const std::string& v) { c.run.epochs = std::stoi(v); },
                      [](const RunConfig& c) { return std::to_string(c.run.epochs); }}},
      {"data.train_sequences", {[](RunConfig& c, const std::string& v) { c.data.train_sequences = std::stoi(v); },
                                [](const RunConfig& c) { return std::to_string(c.data.train_sequences); }}},
      {"data.test_sequences", {[](RunConfig& c, const std::string& v) { c.data.test_sequences = std::stoi(v); },
                               [](const RunConfig& c) { return std::to_string(c.data.test_sequences); }}},
      {"data.seq_len", {[](RunConfig& c, const std::string& v) { c.data.seq_len = std::stoi(v); },
                        [](const RunConfig& c) { return std::to_string(c.data.seq_len); }}},
      {"data.image_h", {[](RunConfig& c, const std::string& v) { c.data.image_h = std::stoi(v); },
                        [](const RunConfig& c) { return std::to_string(c.data.image_h); }}},
      {"data.image_w", {[](RunConfig& c, const std::string& v) { c.data.image_w = std::stoi(v); },
                        [](const RunConfig& c) { return std::to_string(c.data.image_w); }}},
      {"data.speed", {[](RunConfig& c, const std::string& v) { c.data.speed = std::stoi(v); },
                      [](const RunConfig& c) { return std::to_string(c.data.speed); }}},
      {"data.max_gap", {[](RunConfig& c, const std::string& v) { c.data.max_gap = std::stoi(v); },
                        [](const RunConfig& c) { return std::to_string(c.data.max_gap); }}},
      {"data.noise", {[](RunConfig& c, const std::string& v) { c.data.noise = std::stod(v); },
                      [](const RunConfig& c) { return fmt_double(c.data.noise); }}},
      {"stack.channels", {[](RunConfig& c, const std::string& v) { c.stack.channels = parse_int_list(v); },
                          [](const RunConfig& c) { return format_int_list(c.stack.channels); }}},
      {"stack.merge", {[](RunConfig& c, const std::string& v) { nn::parse_merge(v); c.stack.merge = v; },
                       [](const RunConfig& c) { return c.stack.merge; }}},
      {"stack.shortcuts", {[](RunConfig& c, const std::string& v) { c.stack.shortcuts = parse_bool(v); },
                           [](const RunConfig& c) { return c.stack.shortcuts ? "true" : "false"; }}},
      {"stack.constant_bridge", {[](RunConfig& c, const std::string& v) { c.stack.constant_bridge = parse_bool(v); },
                                 [](const RunConfig& c) { return c.stack.constant_bridge ? "true" : "false"; }}},
      {"stack.kernel", {[](RunConfig& c, const std::string& v) { c.stack.kernel = std::stoi(v); },
                        [](const RunConfig& c) { return std::to_string(c.stack.kernel); }}},
      {"coherence.lambda", {[](RunConfig& c, const std::string& v) { c.coherence.lambda = std::stod(v); },
                            [](const RunConfig& c) { return fmt_double(c.coherence.lambda); }}},
      {"coherence.overlap_rate", {[](RunConfig& c, const std::string& v) { c.coherence.overlap_rate = std::stod(v); },
                                  [](const RunConfig& c) { return fmt_double(c.coherence.overlap_rate); }}},
      {"coherence.clip_len_min", {[](RunConfig& c, const std::string& v) { c.coherence.clip_len_min = std::stoi(v); },
                                  [](const RunConfig& c) { return std::to_string(c.coherence.clip_len_min); }}},
      {"coherence.clip_len_max", {[](RunConfig& c, const std::string& v) { c.coherence.clip_len_max = std::stoi(v); },
                                  [](const RunConfig& c) { return std::to_string(c.coherence.clip_len_max); }}},
      {"td.schedule", {[](RunConfig& c, const std::string& v) { nn::TdSchedule::parse(v); c.td.schedule = v; },
                       [](const RunConfig& c) { return c.td.schedule; }}},
      {"optim.lr", {[](RunConfig& c, const std::string& v) { c.optim.lr = std::stod(v); },
                    [](const RunConfig& c) { return fmt_double(c.optim.lr); }}},
      {"optim.weight_decay", {[](RunConfig& c, const std::string& v) { c.optim.weight_decay = std::stod(v); },
                              [](const RunConfig& c) { return fmt_double(c.optim.weight_decay); }}},
      {"optim.beta1", {[](RunConfig& c, const std::string& v) { c.optim.beta1 = std::stod(v); },
                       [](const RunConfig& c) { return fmt_double(c.optim.beta1); }}},
      {"optim.beta2", {[](RunConfig& c, const std::string& v) { c.optim.beta2 = std::stod(v); },
                       [](const RunConfig& c) { return fmt_double(c.optim.beta2); }}},
      {"optim.eps", {[](RunConfig& c, const std::string& v) { c.optim.eps = std::stod(v); },
                     [](const RunConfig& c) { return fmt_double(c.optim.eps); }}},
      {"optim.plateau_patience", {[](RunConfig& c, const std::string& v) { c.optim.plateau_patience = std::stoi(v); },
                                  [](const RunConfig& c) { return std::to_string(c.optim.plateau_patience); }}},
      {"optim.lr_decay_factor", {[](RunConfig& c, const std::string& v) { c.optim.lr_decay_factor = std::stod(v); },
                                 [](const RunConfig& c) { return fmt_double(c.optim.lr_decay_factor); }}},
  };
  return table;
}

const Field* find_field(const std::string& key) {
  for (const auto& [name, field] : field_table())
    if (name == key) return &field;
  return nullptr;
}

}  // namespace

train::CoherenceConfig RunConfig::coherence_config() const {
  train::CoherenceConfig c;
  c.lambda = coherence.lambda;
  c.overlap_rate = coherence.overlap_rate;
  c.clip_len_min = coherence.clip_len_min;
  c.clip_len_max = coherence.clip_len_max;
  return c;
}

ModelSpec RunConfig::model_spec() const {
  ModelSpec spec;
  spec.stack.input_channels = 1;
  spec.stack.channels = stack.channels;
  spec.stack.merge = nn::parse_merge(stack.merge);
  spec.stack.use_shortcuts = stack.shortcuts;
  spec.stack.constant_bridge = stack.constant_bridge;
  spec.stack.kernel = stack.kernel;
  spec.image_h = data.image_h;
  spec.image_w = data.image_w;
  spec.head_outputs = task_kind() == toys::TaskKind::MovingShapes ? 4 : 1;
  return spec;
}

opt::AdamConfig RunConfig::adam_config() const {
  opt::AdamConfig a;
  a.lr = optim.lr;
  a.beta1 = optim.beta1;
  a.beta2 = optim.beta2;
  a.eps = optim.eps;
  a.weight_decay = optim.weight_decay;
  return a;
}

void RunConfig::validate() const {
  task_kind();
  td_schedule();
  coherence_config().validate();
  model_spec().validate();
  if (run.epochs < 0) throw std::invalid_argument("config: run.epochs must be >= 0");
  if (data.train_sequences < 1 || data.test_sequences < 1)
    throw std::invalid_argument("config: dataset sizes must be >= 1");
  if (data.seq_len < 2) throw std::invalid_argument("config: data.seq_len must be >= 2");
  if (optim.lr <= 0.0) throw std::invalid_argument("config: optim.lr must be > 0");
}

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw std::invalid_argument("config line " + std::to_string(lineno) + ": malformed section header '" + t + "'");
      section = t.substr(1, t.size() - 2);
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value, got '" + t + "'");
    const std::string key = section + "." + trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    const Field* field = find_field(key);
    if (!field) throw std::invalid_argument("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    try {
      field->set(cfg, value);
    } catch (const std::exception& e) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + " (" + key + "): " + e.what());
    }
  }
  return cfg;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config file '" + path + "'");
  std::ostringstream os;
  os << is.rdbuf();
  return parse_config(os.str());
}

std::string format_config(const RunConfig& cfg) {
  std::ostringstream os;
  std::string section;
  for (const auto& [name, field] : field_table()) {
    const auto dot = name.find('.');
    const std::string sec = name.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) os << "\n";
      os << "[" << sec << "]\n";
      section = sec;
    }
    os << name.substr(dot + 1) << " = " << field.get(cfg) << "\n";
  }
  return os.str();
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw std::invalid_argument("override '" + assignment + "' must look like section.key=value");
  const std::string key = trim(assignment.substr(0, eq));
  const std::string value = trim(assignment.substr(eq + 1));
  const Field* field = find_field(key);
  if (!field) throw std::invalid_argument("override: unknown key '" + key + "'");
  field->set(cfg, value);
}

}  // namespace cbm::harness
