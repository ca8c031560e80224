#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cbm/checkpoint.hpp"
#include "cbm/commands.hpp"
#include "cbm/config.hpp"
#include "doctest.h"

using namespace cbm;
using namespace cbm::harness;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is);
  return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

Checkpoint sample_checkpoint() {
  Checkpoint c;
  c.config_text = format_config(RunConfig{});
  c.seed = 987654321;
  c.next_epoch = 5;
  c.lr = 0.000125;
  c.plateau_best = 0.731;
  c.plateau_stall = 2;
  c.params.items.push_back({"layer0.psi.kernel", {1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9}});
  c.params.items.push_back({"head.bias", {2}, {-0.25, 0.75}});
  c.adam.m = {{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9}, {0.01, 0.02}};
  c.adam.v = {{1e-4, 2e-4, 3e-4, 4e-4, 5e-4, 6e-4, 7e-4, 8e-4, 9e-4}, {1e-5, 2e-5}};
  c.adam.step = 17;
  c.adam_step = 17;
  c.store.publish(0, 0, 3, {1, 2, 2}, {0.5, 0.25, 0.125, 0.0625});
  c.store.publish(1, 1, 9, {2, 1, 1}, {-1.5, 2.5});
  return c;
}

}  // namespace

TEST_CASE("checkpoint round-trips every field") {
  const std::string path = temp_path("cbm_test_ckpt.bin");
  Checkpoint c = sample_checkpoint();
  save_checkpoint(path, c);
  Checkpoint r = load_checkpoint(path);

  CHECK(r.config_text == c.config_text);
  CHECK(r.seed == c.seed);
  CHECK(r.next_epoch == c.next_epoch);
  CHECK(r.lr == c.lr);
  CHECK(r.plateau_best == c.plateau_best);
  CHECK(r.plateau_stall == c.plateau_stall);
  CHECK(r.adam_step == 17);
  CHECK(r.adam.step == 17);
  REQUIRE(r.params.items.size() == 2);
  CHECK(r.params.items[0].name == "layer0.psi.kernel");
  CHECK(r.params.items[0].shape == std::vector<int>{1, 1, 3, 3});
  CHECK(r.params.items[0].value == c.params.items[0].value);
  CHECK(r.params.items[1].value == c.params.items[1].value);
  CHECK(r.adam.m == c.adam.m);
  CHECK(r.adam.v == c.adam.v);
  REQUIRE(r.store.size() == 2);
  CHECK(r.store.lookup(0, 0, 3)->value == std::vector<double>{0.5, 0.25, 0.125, 0.0625});
  CHECK(r.store.lookup(1, 1, 9)->shape == std::vector<int>{2, 1, 1});
  std::remove(path.c_str());
}

TEST_CASE("save -> load -> save is byte-identical") {
  const std::string p1 = temp_path("cbm_test_ckpt_a.bin");
  const std::string p2 = temp_path("cbm_test_ckpt_b.bin");
  Checkpoint c = sample_checkpoint();
  save_checkpoint(p1, c);
  save_checkpoint(p2, load_checkpoint(p1));
  CHECK(slurp(p1) == slurp(p2));
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("the loader rejects foreign and truncated files") {
  const std::string path = temp_path("cbm_test_ckpt_bad.bin");
  {
    std::ofstream os(path, std::ios::binary);
    os << "junk that is definitely not a checkpoint";
  }
  CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);

  Checkpoint c = sample_checkpoint();
  save_checkpoint(path, c);
  const std::string full = slurp(path);
  {
    std::ofstream os(path, std::ios::binary);
    os.write(full.data(), static_cast<std::streamsize>(full.size() / 2));
  }
  CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/nowhere.ckpt"), std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("a resumed run reproduces the uninterrupted run exactly") {
  RunConfig cfg;
  cfg.run.epochs = 3;
  cfg.data.train_sequences = 6;
  cfg.data.test_sequences = 3;
  cfg.data.seq_len = 16;
  cfg.stack.channels = {2, 2};
  cfg.data.image_h = 8;
  cfg.data.image_w = 8;

  // uninterrupted reference
  TrainResult full = run_training(cfg, "", nullptr, nullptr);

  // two epochs, checkpoint, then resume for the third
  RunConfig head = cfg;
  head.run.epochs = 2;
  const std::string dir = temp_path("cbm_test_resume");
  std::filesystem::remove_all(dir);
  run_training(head, dir, nullptr, nullptr);
  Checkpoint ckpt = load_checkpoint(dir + "/checkpoint.bin");
  CHECK(ckpt.next_epoch == 2);

  RunConfig tail = parse_config(ckpt.config_text);
  tail.run.epochs = 3;
  TrainResult resumed = run_training(tail, "", nullptr, &ckpt);

  REQUIRE(full.rows.size() == 3);
  REQUIRE(resumed.rows.size() == 1);
  const MetricsRow& a = full.rows[2];
  const MetricsRow& b = resumed.rows[0];
  CHECK(b.epoch == 2);
  CHECK(a.task_loss == b.task_loss);  // bit-identical, not approximate
  CHECK(a.coherence == b.coherence);
  CHECK(a.accuracy == b.accuracy);
  CHECK(a.lr == b.lr);

  // the parameters after resuming match the uninterrupted ones exactly
  REQUIRE(full.params.items.size() == resumed.params.items.size());
  for (std::size_t i = 0; i < full.params.items.size(); ++i)
    CHECK(full.params.items[i].value == resumed.params.items[i].value);
  std::filesystem::remove_all(dir);
}
