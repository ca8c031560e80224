#include "cbm/commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "cbm/grad_check.hpp"
#include "cbm/trainer.hpp"

namespace cbm::harness {

namespace {

RunConfig resolve_config(const CliOptions& opts) {
  RunConfig cfg = opts.config_path.empty() ? RunConfig{} : load_config_file(opts.config_path);
  for (const std::string& o : opts.overrides) apply_override(cfg, o);
  if (opts.seed) cfg.run.seed = *opts.seed;
  cfg.validate();
  return cfg;
}

double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

}  // namespace

toys::Dataset build_dataset(const RunConfig& cfg, const std::string& split) {
  const int n = split == "train" ? cfg.data.train_sequences : cfg.data.test_sequences;
  RngStream rng = derive_stream(cfg.run.seed, "data-" + std::string(split == "train" ? "train" : "test"));
  if (cfg.task_kind() == toys::TaskKind::MovingShapes)
    return toys::gen_moving_shapes(n, cfg.data.seq_len, cfg.data.image_h, cfg.data.image_w, cfg.data.speed,
                                   cfg.data.noise, rng);
  return toys::gen_catdog(n, cfg.data.seq_len, cfg.data.image_h, cfg.data.image_w, cfg.data.max_gap, cfg.data.noise,
                          rng);
}

TrainResult run_training(const RunConfig& cfg, const std::string& out_dir, std::ostream* log,
                         const Checkpoint* resume_from) {
  cfg.validate();
  const ModelSpec spec = cfg.model_spec();
  const nn::TdSchedule schedule = cfg.td_schedule();
  const opt::AdamConfig adam_cfg = cfg.adam_config();
  const toys::Dataset train_data = build_dataset(cfg, "train");
  const toys::Dataset test_data = build_dataset(cfg, "test");

  train::TrainOptions topts;
  topts.coherence = cfg.coherence_config();
  topts.task = cfg.task_kind();

  TrainResult result;
  opt::AdamState adam;
  train::StateStore store;
  opt::PlateauSchedule plateau;
  plateau.lr = cfg.optim.lr;
  plateau.factor = cfg.optim.lr_decay_factor;
  plateau.patience = cfg.optim.plateau_patience;
  int start_epoch = 0;

  if (resume_from) {
    result.params = resume_from->params;
    adam = resume_from->adam;
    store = resume_from->store;
    plateau.lr = resume_from->lr;
    plateau.best = resume_from->plateau_best;
    plateau.stall = static_cast<int>(resume_from->plateau_stall);
    start_epoch = static_cast<int>(resume_from->next_epoch);
  } else {
    result.params = init_params(spec, cfg.run.seed);
    adam = opt::make_adam_state(result.params);
  }

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    std::ofstream cf(out_dir + "/config.ini", std::ios::binary);
    cf << format_config(cfg);
  }

  auto save = [&](int next_epoch) {
    if (out_dir.empty()) return;
    Checkpoint ckpt;
    ckpt.config_text = format_config(cfg);
    ckpt.seed = cfg.run.seed;
    ckpt.next_epoch = next_epoch;
    ckpt.lr = plateau.lr;
    ckpt.plateau_best = plateau.best;
    ckpt.plateau_stall = plateau.stall;
    ckpt.adam_step = adam.step;
    ckpt.params = result.params;
    ckpt.adam = adam;
    ckpt.store = store;
    save_checkpoint(out_dir + "/checkpoint.bin", ckpt);
  };

  save(start_epoch);  // an untrained (or just-resumed) model is already a valid checkpoint
  for (int epoch = start_epoch; epoch < cfg.run.epochs; ++epoch) {
    const double t0 = now_seconds();
    const double lr = plateau.lr;
    const double td_rate = schedule.rate_at(epoch);
    const train::EpochStats stats = train::train_epoch(train_data, result.params, spec, topts, adam, adam_cfg, lr,
                                                       td_rate, epoch, cfg.run.seed, store);
    const toys::TaskMetrics eval = toys::evaluate(test_data, result.params, spec);
    plateau.observe(stats.task_loss);

    MetricsRow row;
    row.epoch = epoch;
    row.task_loss = stats.task_loss;
    row.coherence = stats.coherence;
    row.accuracy = eval.accuracy;
    row.exact_match = eval.exact_match;
    row.mae = eval.mae;
    row.lr = lr;
    row.td_rate = td_rate;
    result.rows.push_back(row);
    result.final_eval = eval;

    if (!out_dir.empty()) write_metrics_csv(out_dir + "/metrics.csv", result.rows);
    save(epoch + 1);
    if (log) {
      char line[256];
      std::snprintf(line, sizeof line,
                    "epoch %3d | task_loss %.5f | coherence %.5f | acc %.3f | exact %.3f | mae %.3f | lr %.2e | td "
                    "%.2f | %.1fs",
                    epoch, stats.task_loss, stats.coherence, eval.accuracy, eval.exact_match, eval.mae, lr, td_rate,
                    now_seconds() - t0);
      (*log) << line << "\n" << std::flush;
    }
  }
  if (result.rows.empty()) result.final_eval = toys::evaluate(test_data, result.params, spec);
  return result;
}

int cmd_train(const CliOptions& opts, std::ostream& os) {
  RunConfig cfg;
  Checkpoint ckpt;
  const Checkpoint* resume = nullptr;
  if (!opts.resume.empty()) {
    ckpt = load_checkpoint(opts.resume);
    cfg = parse_config(ckpt.config_text);
    for (const std::string& o : opts.overrides) apply_override(cfg, o);
    cfg.validate();
    resume = &ckpt;
    os << "resuming from " << opts.resume << " at epoch " << ckpt.next_epoch << "\n";
  } else {
    cfg = resolve_config(opts);
  }
  run_training(cfg, opts.out_dir, &os, resume);
  os << "done; artifacts in " << opts.out_dir << "\n";
  return 0;
}

int cmd_eval(const CliOptions& opts, std::ostream& os) {
  if (opts.checkpoint.empty()) throw std::invalid_argument("eval: missing checkpoint path");
  const Checkpoint ckpt = load_checkpoint(opts.checkpoint);
  RunConfig cfg = parse_config(ckpt.config_text);
  for (const std::string& o : opts.overrides) apply_override(cfg, o);

  toys::Dataset data;
  if (opts.data_spec.empty() || opts.data_spec == "test" || opts.data_spec == "train") {
    data = build_dataset(cfg, opts.data_spec == "train" ? "train" : "test");
  } else {
    data = toys::load_dataset(opts.data_spec);
  }
  const toys::TaskMetrics m = toys::evaluate(data, ckpt.params, cfg.model_spec());
  char line[256];
  std::snprintf(line, sizeof line, "task=%s sequences=%zu accuracy=%.6f exact_match=%.6f mae=%.6f task_loss=%.6f",
                cfg.run.task.c_str(), data.sequences.size(), m.accuracy, m.exact_match, m.mae, m.task_loss);
  os << line << "\n";
  return 0;
}

namespace {

using ad::GraphBuilder;
using ad::ParamSpec;

std::vector<double> random_values(std::size_t n, RngStream& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

// values bounded away from zero, so finite differences never straddle the
// relu kink
std::vector<double> kink_free_values(std::size_t n, RngStream& rng) {
  std::vector<double> v(n);
  for (double& x : v) {
    const double m = rng.uniform(0.1, 1.0);
    x = rng.bernoulli(0.5) ? m : -m;
  }
  return v;
}

struct SuiteCase {
  std::string name;
  std::vector<ParamSpec> params;
  GraphBuilder builder;
};

SuiteCase make_primitive_case(const std::string& op, RngStream& rng) {
  SuiteCase c;
  c.name = op;
  if (op == "relu" || op == "sigmoid" || op == "flatten" || op == "scale" || op == "sum" || op == "gated_edge") {
    const int n = static_cast<int>(rng.uniform_int(3, 12));
    c.params.push_back({"x", {n}, op == "relu" ? kink_free_values(static_cast<std::size_t>(n), rng)
                                               : random_values(static_cast<std::size_t>(n), rng)});
    auto target = random_values(static_cast<std::size_t>(n), rng);
    c.builder = [op, n, target](ad::Tape& t, const std::vector<ad::Tensor>& p) {
      ad::Tensor y;
      if (op == "relu") y = ad::relu(p[0]);
      else if (op == "sigmoid") y = ad::sigmoid(p[0]);
      else if (op == "flatten") y = ad::flatten(p[0]);
      else if (op == "scale") y = ad::scale(p[0], 1.7);
      else if (op == "gated_edge") y = ad::gated_edge(p[0], ad::Gate::Pass);
      else return ad::sum(p[0]);
      return ad::mse(y, t.constant({n}, target));
    };
  } else if (op == "add" || op == "mul" || op == "mse") {
    const int n = static_cast<int>(rng.uniform_int(3, 12));
    c.params.push_back({"a", {n}, random_values(static_cast<std::size_t>(n), rng)});
    c.params.push_back({"b", {n}, random_values(static_cast<std::size_t>(n), rng)});
    auto target = random_values(static_cast<std::size_t>(n), rng);
    c.builder = [op, n, target](ad::Tape& t, const std::vector<ad::Tensor>& p) {
      if (op == "mse") return ad::mse(p[0], p[1]);
      ad::Tensor y = op == "add" ? ad::add(p[0], p[1]) : ad::mul(p[0], p[1]);
      return ad::mse(y, t.constant({n}, target));
    };
  } else if (op == "affine") {
    const int din = static_cast<int>(rng.uniform_int(2, 8));
    const int dout = static_cast<int>(rng.uniform_int(1, 5));
    c.params.push_back({"x", {din}, random_values(static_cast<std::size_t>(din), rng)});
    c.params.push_back({"w", {dout, din}, random_values(static_cast<std::size_t>(dout) * din, rng)});
    c.params.push_back({"b", {dout}, random_values(static_cast<std::size_t>(dout), rng)});
    auto target = random_values(static_cast<std::size_t>(dout), rng);
    c.builder = [dout, target](ad::Tape& t, const std::vector<ad::Tensor>& p) {
      return ad::mse(ad::affine(p[0], p[1], p[2]), t.constant({dout}, target));
    };
  } else if (op == "conv2d") {
    const int ci = static_cast<int>(rng.uniform_int(1, 3));
    const int co = static_cast<int>(rng.uniform_int(1, 3));
    const int h = static_cast<int>(rng.uniform_int(3, 6));
    const int w = static_cast<int>(rng.uniform_int(3, 6));
    const int k = rng.bernoulli(0.5) ? 1 : 3;
    const int pad = static_cast<int>(rng.uniform_int(0, (k - 1) / 2));
    const int oh = h + 2 * pad - k + 1, ow = w + 2 * pad - k + 1;
    c.params.push_back({"x", {ci, h, w}, random_values(static_cast<std::size_t>(ci) * h * w, rng)});
    c.params.push_back({"k", {co, ci, k, k}, random_values(static_cast<std::size_t>(co) * ci * k * k, rng)});
    c.params.push_back({"b", {co}, random_values(static_cast<std::size_t>(co), rng)});
    auto target = random_values(static_cast<std::size_t>(co) * oh * ow, rng);
    c.builder = [=](ad::Tape& t, const std::vector<ad::Tensor>& p) {
      return ad::mse(ad::conv2d(p[0], p[1], p[2], pad), t.constant({co, oh, ow}, target));
    };
  } else if (op == "concat_channels") {
    const int h = static_cast<int>(rng.uniform_int(2, 4));
    const int w = static_cast<int>(rng.uniform_int(2, 4));
    const int ca = static_cast<int>(rng.uniform_int(1, 3));
    const int cb = static_cast<int>(rng.uniform_int(1, 3));
    c.params.push_back({"a", {ca, h, w}, random_values(static_cast<std::size_t>(ca) * h * w, rng)});
    c.params.push_back({"b", {cb, h, w}, random_values(static_cast<std::size_t>(cb) * h * w, rng)});
    auto target = random_values(static_cast<std::size_t>(ca + cb) * h * w, rng);
    c.builder = [=](ad::Tape& t, const std::vector<ad::Tensor>& p) {
      return ad::mse(ad::concat_channels(p[0], p[1]), t.constant({ca + cb, h, w}, target));
    };
  } else if (op == "softmax_xent") {
    const int k = static_cast<int>(rng.uniform_int(2, 6));
    const int label = static_cast<int>(rng.uniform_int(0, k - 1));
    c.params.push_back({"logits", {k}, random_values(static_cast<std::size_t>(k), rng, -3.0, 3.0)});
    c.builder = [label](ad::Tape&, const std::vector<ad::Tensor>& p) { return ad::softmax_xent(p[0], label); };
  } else {
    throw std::logic_error("unknown suite op " + op);
  }
  return c;
}

SuiteCase make_cell_case(RngStream& rng, int instance) {
  SuiteCase c;
  nn::StackConfig cfg;
  cfg.input_channels = static_cast<int>(rng.uniform_int(1, 2));
  cfg.channels = {static_cast<int>(rng.uniform_int(1, 3))};
  cfg.merge = rng.bernoulli(0.5) ? nn::MergeKind::Production : nn::MergeKind::Addition;
  cfg.constant_bridge = instance % 5 == 4;
  cfg.kernel = 3;
  const int h = static_cast<int>(rng.uniform_int(3, 5));
  const int w = static_cast<int>(rng.uniform_int(3, 5));
  const int ci = cfg.input_channels, co = cfg.channels[0];
  c.name = std::string("cbm_cell/") + nn::merge_name(cfg.merge) + (cfg.constant_bridge ? "+constant_bridge" : "");
  c.params.push_back({"input", {ci, h, w}, random_values(static_cast<std::size_t>(ci) * h * w, rng)});
  c.params.push_back({"memory", {co, h, w}, random_values(static_cast<std::size_t>(co) * h * w, rng, 0.05, 0.95)});
  c.params.push_back({"psi.kernel", {co, ci, 3, 3}, random_values(static_cast<std::size_t>(co) * ci * 9, rng)});
  c.params.push_back({"psi.bias", {co}, kink_free_values(static_cast<std::size_t>(co), rng)});
  c.params.push_back({"phi.kernel", {co, co + ci, 3, 3}, random_values(static_cast<std::size_t>(co) * (co + ci) * 9, rng)});
  c.params.push_back({"phi.bias", {co}, random_values(static_cast<std::size_t>(co), rng)});
  auto target = random_values(static_cast<std::size_t>(co) * h * w, rng);
  c.builder = [cfg, co, h, w, target](ad::Tape& t, const std::vector<ad::Tensor>& p) {
    nn::CbmLayerParams lp{p[2], p[3], p[4], p[5]};
    nn::CellStepResult r = nn::cbm_cell_step(p[0], p[1], lp, cfg, ad::Gate::Pass);
    return ad::mse(r.output, t.constant({co, h, w}, target));
  };
  return c;
}

}  // namespace

bool run_gradcheck_suite(int instances_per_op, std::uint64_t seed, bool inject_fault, std::ostream& os) {
  const std::vector<std::string> ops = {"relu",   "sigmoid",      "add",           "mul",          "scale",
                                        "flatten", "sum",          "gated_edge",    "concat_channels", "affine",
                                        "conv2d", "softmax_xent", "mse"};
  bool all_ok = true;
  for (const std::string& op : ops) {
    double worst = 0.0;
    for (int i = 0; i < instances_per_op; ++i) {
      RngStream rng = derive_stream(seed, "gradcheck-" + op, {static_cast<std::uint64_t>(i)});
      SuiteCase c = make_primitive_case(op, rng);
      const ad::GradCheckReport rep = ad::grad_check(c.builder, c.params, 1e-5, 1e-4, 32, seed + static_cast<std::uint64_t>(i));
      worst = std::max(worst, rep.max_rel_err);
      all_ok = all_ok && rep.passed;
    }
    char line[128];
    std::snprintf(line, sizeof line, "%-18s %3d instances  max_rel_err %.3e", op.c_str(), instances_per_op, worst);
    os << line << "\n";
  }
  {
    double worst = 0.0;
    for (int i = 0; i < instances_per_op; ++i) {
      RngStream rng = derive_stream(seed, "gradcheck-cell", {static_cast<std::uint64_t>(i)});
      SuiteCase c = make_cell_case(rng, i);
      const ad::GradCheckReport rep = ad::grad_check(c.builder, c.params, 1e-5, 1e-4, 32, seed + static_cast<std::uint64_t>(i));
      worst = std::max(worst, rep.max_rel_err);
      all_ok = all_ok && rep.passed;
    }
    char line[128];
    std::snprintf(line, sizeof line, "%-18s %3d instances  max_rel_err %.3e", "cbm_cell", instances_per_op, worst);
    os << line << "\n";
  }
  if (inject_fault) {
    // value is 2x but the blocked edge reports a gradient of 1; the checker
    // has to flag it
    std::vector<ParamSpec> params = {{"x", {4}, {0.3, -0.7, 1.2, 0.4}}};
    GraphBuilder builder = [](ad::Tape&, const std::vector<ad::Tensor>& p) {
      return ad::sum(ad::add(ad::gated_edge(p[0], ad::Gate::Block), p[0]));
    };
    const ad::GradCheckReport rep = ad::grad_check(builder, params, 1e-5, 1e-4, 32, seed);
    os << "injected_fault      caught=" << (rep.passed ? "no" : "yes") << "\n";
    all_ok = all_ok && !rep.passed;
  }
  os << (all_ok ? "gradcheck suite: PASS" : "gradcheck suite: FAIL") << "\n";
  return all_ok;
}

int cmd_gradcheck(const CliOptions& opts, std::ostream& os) {
  const RunConfig cfg = resolve_config(opts);
  return run_gradcheck_suite(opts.instances, cfg.run.seed, opts.inject_fault, os) ? 0 : 1;
}

int cmd_ablate(const CliOptions& opts, std::ostream& os) {
  const RunConfig base = resolve_config(opts);
  struct Variant {
    std::string label;
    RunConfig cfg;
  };
  std::vector<Variant> variants;
  for (const char* merge : {"production", "addition"}) {
    RunConfig c = base;
    c.stack.merge = merge;
    variants.push_back({std::string("merge=") + merge, c});
  }
  for (double rate : {0.0, 0.2, 0.5, 0.8, 1.0}) {
    RunConfig c = base;
    c.td.schedule = nn::TdSchedule::standard(rate).format();
    char label[32];
    std::snprintf(label, sizeof label, "td_final=%.1f", rate);
    variants.push_back({label, c});
  }
  for (double lambda : {0.0, 0.8}) {
    RunConfig c = base;
    c.coherence.lambda = lambda;
    char label[32];
    std::snprintf(label, sizeof label, "lambda=%.1f", lambda);
    variants.push_back({label, c});
  }

  std::vector<std::string> lines;
  lines.push_back("variant,merge,td_schedule,lambda,train_task_loss,accuracy,exact_match,mae,overlap_discrepancy");
  for (const Variant& v : variants) {
    const TrainResult res = run_training(v.cfg, "", nullptr, nullptr);
    const toys::Dataset test_data = build_dataset(v.cfg, "test");
    const double disc = train::measure_overlap_discrepancy(test_data, res.params, v.cfg.model_spec(),
                                                           v.cfg.coherence_config(), v.cfg.run.seed);
    const double train_loss = res.rows.empty() ? NAN : res.rows.back().task_loss;
    char line[320];
    std::snprintf(line, sizeof line, "%s,%s,%s,%.17g,%.6f,%.6f,%.6f,%.6f,%.17g", v.label.c_str(),
                  v.cfg.stack.merge.c_str(), v.cfg.td.schedule.c_str(), v.cfg.coherence.lambda, train_loss,
                  res.final_eval.accuracy, res.final_eval.exact_match, res.final_eval.mae, disc);
    lines.push_back(line);
    os << v.label << ": task_loss=" << train_loss << " acc=" << res.final_eval.accuracy
       << " exact=" << res.final_eval.exact_match << " discrepancy=" << disc << "\n"
       << std::flush;
  }
  if (!opts.out_dir.empty()) {
    std::filesystem::create_directories(opts.out_dir);
    std::ofstream f(opts.out_dir + "/ablation.csv", std::ios::binary);
    for (const std::string& l : lines) f << l << "\n";
    os << "wrote " << opts.out_dir << "/ablation.csv\n";
  }
  return 0;
}

}  // namespace cbm::harness
