#include "cbm/tasks.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "cbm/binio.hpp"
#include "cbm/ops.hpp"

namespace cbm::toys {

namespace {

// 5x5 glyphs for the moving-shapes task; distinct pixel masses (17 vs 21)
// make the shape identity recoverable from a single frame.
const char* kTriangle[5] = {"..#..", ".###.", ".###.", "#####", "#####"};
const char* kCircle[5] = {".###.", "#####", "#####", "#####", ".###."};

// 7x7 glyphs for the distance task.
const char* kCat[7] = {"#.....#", ".#...#.", "..#.#..", "...#...", "..#.#..", ".#...#.", "#.....#"};
const char* kDog[7] = {"#######", "#.....#", "#.....#", "#.....#", "#.....#", "#.....#", "#######"};

void stamp_wrapped(Image& img, const char* const* raster, int rows, int cols, int y0, int x0) {
  for (int ry = 0; ry < rows; ++ry)
    for (int rx = 0; rx < cols; ++rx)
      if (raster[ry][rx] == '#') img.at(0, y0 + ry, ((x0 + rx) % img.w + img.w) % img.w) = 1.0;
}

void stamp(Image& img, const char* const* raster, int rows, int cols, int y0, int x0) {
  for (int ry = 0; ry < rows; ++ry)
    for (int rx = 0; rx < cols; ++rx)
      if (raster[ry][rx] == '#') img.at(0, y0 + ry, x0 + rx) = 1.0;
}

void add_noise(Image& img, double noise, RngStream& rng) {
  if (noise <= 0.0) return;
  for (double& p : img.pix) p += noise * rng.uniform01();
}

double glyph_mass(const char* const* raster, int rows, int cols) {
  double m = 0.0;
  for (int ry = 0; ry < rows; ++ry)
    for (int rx = 0; rx < cols; ++rx)
      if (raster[ry][rx] == '#') m += 1.0;
  return m;
}

// circular mean of the pixel mass along x, in pixels
double circular_mean_x(const Image& img) {
  double cx = 0.0, sx = 0.0;
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x) {
      const double m = img.at(0, y, x);
      const double th = 2.0 * std::numbers::pi * x / img.w;
      cx += m * std::cos(th);
      sx += m * std::sin(th);
    }
  }
  double pos = std::atan2(sx, cx) * img.w / (2.0 * std::numbers::pi);
  if (pos < 0.0) pos += img.w;
  return pos;
}

}  // namespace

TaskKind parse_task(const std::string& s) {
  if (s == "moving-shapes") return TaskKind::MovingShapes;
  if (s == "catdog") return TaskKind::CatDog;
  throw std::invalid_argument("unknown task '" + s + "' (expected moving-shapes|catdog)");
}

std::string task_name(TaskKind t) { return t == TaskKind::MovingShapes ? "moving-shapes" : "catdog"; }

Dataset gen_moving_shapes(int n, int seq_len, int h, int w, int speed, double noise, RngStream& rng) {
  if (n < 1 || seq_len < 2) throw std::invalid_argument("gen_moving_shapes: need n >= 1 and seq_len >= 2");
  if (speed < 1) throw std::invalid_argument("gen_moving_shapes: speed must be >= 1 (0 leaves the class undefined)");
  if (h < 5 || w < 5) throw std::invalid_argument("gen_moving_shapes: image must be at least 5x5");
  Dataset data;
  data.task = TaskKind::MovingShapes;
  for (int i = 0; i < n; ++i) {
    Sequence seq;
    seq.id = i;
    seq.class_label = i % 4;  // round-robin keeps the classes balanced
    const bool circle = seq.class_label / 2 == 1;
    const int dir = seq.class_label % 2 == 0 ? -1 : +1;
    const int y0 = static_cast<int>(rng.uniform_int(0, h - 5));
    const int x0 = static_cast<int>(rng.uniform_int(0, w - 1));
    for (int t = 0; t < seq_len; ++t) {
      Image img{1, h, w, std::vector<double>(static_cast<std::size_t>(h) * w, 0.0)};
      stamp_wrapped(img, circle ? kCircle : kTriangle, 5, 5, y0, x0 + dir * speed * t);
      add_noise(img, noise, rng);
      seq.frames.push_back(std::move(img));
    }
    data.sequences.push_back(std::move(seq));
  }
  return data;
}

int recover_moving_shape_class(const Image& a, const Image& b, int speed) {
  double mass = 0.0;
  for (double p : a.pix) mass += p;
  const double dt = std::abs(mass - glyph_mass(kTriangle, 5, 5));
  const double dc = std::abs(mass - glyph_mass(kCircle, 5, 5));
  const int shape = dc < dt ? 1 : 0;

  double shift = circular_mean_x(b) - circular_mean_x(a);
  shift -= a.w * std::round(shift / a.w);  // wrap to (-w/2, w/2]
  if (std::abs(std::abs(shift) - speed) > 1e-6)
    throw std::runtime_error("recover_moving_shape_class: displacement " + std::to_string(shift) +
                             " does not match speed " + std::to_string(speed));
  const int dir = shift > 0.0 ? 1 : 0;
  return shape * 2 + dir;
}

Dataset gen_catdog(int n, int seq_len, int h, int w, int max_gap, double noise, RngStream& rng) {
  if (n < 1 || seq_len < 2) throw std::invalid_argument("gen_catdog: need n >= 1 and seq_len >= 2");
  if (max_gap < 0 || max_gap >= seq_len)
    throw std::invalid_argument("gen_catdog: max_gap must lie in [0, seq_len)");
  if (h < 7 || w < 7) throw std::invalid_argument("gen_catdog: image must be at least 7x7");
  Dataset data;
  data.task = TaskKind::CatDog;
  const int y0 = (h - 7) / 2, x0 = (w - 7) / 2;
  for (int i = 0; i < n; ++i) {
    Sequence seq;
    seq.id = i;
    seq.cat_position = static_cast<int>(rng.uniform_int(0, seq_len - 1 - max_gap));
    for (int t = 0; t < seq_len; ++t) {
      Image img{1, h, w, std::vector<double>(static_cast<std::size_t>(h) * w, 0.0)};
      stamp(img, t == seq.cat_position ? kCat : kDog, 7, 7, y0, x0);
      add_noise(img, noise, rng);
      seq.frames.push_back(std::move(img));
      seq.step_labels.push_back(t < seq.cat_position ? -1 : t - seq.cat_position);
    }
    data.sequences.push_back(std::move(seq));
  }
  return data;
}

std::vector<std::vector<double>> run_full_sequence(const Sequence& seq, const ParamStore& params,
                                                   const ModelSpec& spec) {
  ad::Tape tape;
  tape.set_recording(false);
  TapeModel model = mount_params(tape, params, spec, false);
  nn::CbmState state = nn::zero_state(tape, spec.stack, spec.image_h, spec.image_w);
  const std::vector<ad::Gate> gates(static_cast<std::size_t>(spec.stack.num_layers()), ad::Gate::Pass);
  std::vector<std::vector<double>> preds;
  for (const Image& frame : seq.frames) {
    ad::Tensor f = tape.constant({frame.channels, frame.h, frame.w}, frame.pix);
    nn::StackStepResult step = nn::stack_step(f, state, model.layers, spec.stack, gates);
    state = step.state;
    ad::Tensor out = ad::affine(ad::flatten(step.top), model.head_w, model.head_b);
    preds.push_back(out.value());
  }
  return preds;
}

TaskMetrics evaluate_classification(const Dataset& data, const ParamStore& params, const ModelSpec& spec) {
  if (data.sequences.empty()) throw std::invalid_argument("evaluate_classification: empty dataset");
  TaskMetrics m;
  std::int64_t correct = 0;
  double loss = 0.0;
  for (const Sequence& seq : data.sequences) {
    const std::vector<double> logits = run_full_sequence(seq, params, spec).back();
    int argmax = 0;
    for (std::size_t k = 1; k < logits.size(); ++k)
      if (logits[k] > logits[static_cast<std::size_t>(argmax)]) argmax = static_cast<int>(k);
    if (argmax == seq.class_label) ++correct;
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double z = 0.0;
    for (double v : logits) z += std::exp(v - mx);
    loss += std::log(z) - (logits[static_cast<std::size_t>(seq.class_label)] - mx);
  }
  m.accuracy = static_cast<double>(correct) / static_cast<double>(data.sequences.size());
  m.task_loss = loss / static_cast<double>(data.sequences.size());
  return m;
}

TaskMetrics evaluate_distance(const Dataset& data, const ParamStore& params, const ModelSpec& spec) {
  if (data.sequences.empty()) throw std::invalid_argument("evaluate_distance: empty dataset");
  TaskMetrics m;
  std::int64_t frames = 0, matches = 0, post = 0;
  double abs_err = 0.0, loss = 0.0;
  for (const Sequence& seq : data.sequences) {
    const auto preds = run_full_sequence(seq, params, spec);
    for (int t = 0; t < seq.length(); ++t) {
      const double pred = preds[static_cast<std::size_t>(t)][0];
      const double label = static_cast<double>(seq.step_labels[static_cast<std::size_t>(t)]);
      ++frames;
      if (std::lround(pred) == seq.step_labels[static_cast<std::size_t>(t)]) ++matches;
      loss += (pred - label) * (pred - label);
      if (t >= seq.cat_position) {
        abs_err += std::abs(pred - label);
        ++post;
      }
    }
  }
  m.exact_match = static_cast<double>(matches) / static_cast<double>(frames);
  m.mae = post > 0 ? abs_err / static_cast<double>(post) : 0.0;
  m.task_loss = loss / static_cast<double>(frames);
  return m;
}

TaskMetrics evaluate(const Dataset& data, const ParamStore& params, const ModelSpec& spec) {
  return data.task == TaskKind::MovingShapes ? evaluate_classification(data, params, spec)
                                             : evaluate_distance(data, params, spec);
}

// ---- binary container ----

namespace {

using namespace cbm::binio;

constexpr char kMagic[8] = {'C', 'B', 'M', 'D', 'A', 'T', 'A', '\0'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

void save_dataset(const std::string& path, const Dataset& data) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_dataset: cannot open '" + path + "'");
  os.write(kMagic, 8);
  put_u32(os, kVersion);
  put_u32(os, data.task == TaskKind::MovingShapes ? 0u : 1u);
  put_u64(os, data.sequences.size());
  for (const Sequence& seq : data.sequences) {
    put_i64(os, seq.id);
    put_i64(os, seq.class_label);
    put_i64(os, seq.cat_position);
    put_u64(os, seq.frames.size());
    put_u64(os, seq.step_labels.size());
    for (std::int64_t l : seq.step_labels) put_i64(os, l);
    const Image& first = seq.frames.front();
    put_u32(os, static_cast<std::uint32_t>(first.channels));
    put_u32(os, static_cast<std::uint32_t>(first.h));
    put_u32(os, static_cast<std::uint32_t>(first.w));
    for (const Image& f : seq.frames) {
      if (f.channels != first.channels || f.h != first.h || f.w != first.w)
        throw std::invalid_argument("save_dataset: frames within a sequence must share one shape");
      for (double p : f.pix) put_f64(os, p);
    }
  }
  if (!os) throw std::runtime_error("save_dataset: write failed for '" + path + "'");
}

Dataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_dataset: cannot open '" + path + "'");
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("load_dataset: '" + path + "' is not a dataset container");
  if (get_u32(is) != kVersion) throw std::runtime_error("load_dataset: unsupported container version");
  Dataset data;
  data.task = get_u32(is) == 0 ? TaskKind::MovingShapes : TaskKind::CatDog;
  const std::uint64_t n = get_u64(is);
  for (std::uint64_t i = 0; i < n; ++i) {
    Sequence seq;
    seq.id = static_cast<int>(get_i64(is));
    seq.class_label = static_cast<int>(get_i64(is));
    seq.cat_position = static_cast<int>(get_i64(is));
    const std::uint64_t frames = get_u64(is);
    const std::uint64_t labels = get_u64(is);
    for (std::uint64_t l = 0; l < labels; ++l) seq.step_labels.push_back(get_i64(is));
    const int c = static_cast<int>(get_u32(is));
    const int h = static_cast<int>(get_u32(is));
    const int w = static_cast<int>(get_u32(is));
    for (std::uint64_t f = 0; f < frames; ++f) {
      Image img{c, h, w, std::vector<double>(static_cast<std::size_t>(c) * h * w)};
      for (double& p : img.pix) p = get_f64(is);
      seq.frames.push_back(std::move(img));
    }
    data.sequences.push_back(std::move(seq));
  }
  return data;
}

}  // namespace cbm::toys
