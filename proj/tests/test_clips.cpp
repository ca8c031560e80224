#include <algorithm>
#include <map>
#include <stdexcept>
#include <vector>

#include "cbm/clip_scheme.hpp"
#include "cbm/rng.hpp"
#include "doctest.h"

using namespace cbm;
using namespace cbm::train;

namespace {

// Reference registry: full O(n^2 * t) enumeration without any early exit.
std::vector<OverlapPair> brute_force_pairs(const std::vector<Clip>& clips) {
  std::vector<OverlapPair> out;
  for (std::size_t a = 0; a < clips.size(); ++a)
    for (std::size_t b = a + 1; b < clips.size(); ++b)
      for (int t = 0; t < 1000; ++t)
        if (t >= clips[a].start && t < clips[a].end() && t >= clips[b].start && t < clips[b].end())
          out.push_back({static_cast<int>(a), static_cast<int>(b), t});
  return out;
}

bool same_pairs(const std::vector<OverlapPair>& x, const std::vector<OverlapPair>& y) {
  if (x.size() != y.size()) return false;
  auto key = [](const OverlapPair& p) { return std::tuple{p.clip_a, p.clip_b, p.timestamp}; };
  std::vector<std::tuple<int, int, int>> kx, ky;
  for (const auto& p : x) kx.push_back(key(p));
  for (const auto& p : y) ky.push_back(key(p));
  std::sort(kx.begin(), kx.end());
  std::sort(ky.begin(), ky.end());
  return kx == ky;
}

}  // namespace

TEST_CASE("sampled clips always cover the sequence exactly") {
  CoherenceConfig cfg;
  for (int seq_len : {2, 3, 4, 5, 9, 10, 11, 37, 100}) {
    for (std::uint64_t s = 0; s < 50; ++s) {
      RngStream rng = derive_stream(s, "clip-cover", {static_cast<std::uint64_t>(seq_len)});
      std::vector<Clip> clips = sample_clips(seq_len, cfg, rng);
      REQUIRE_FALSE(clips.empty());
      std::vector<bool> covered(static_cast<std::size_t>(seq_len), false);
      for (const Clip& c : clips) {
        CHECK(c.start >= 0);
        CHECK(c.end() <= seq_len);
        CHECK(c.length >= 2);
        CHECK(c.length <= cfg.clip_len_max);  // the tail snap can only shorten a clip
        for (int t = c.start; t < c.end(); ++t) covered[static_cast<std::size_t>(t)] = true;
      }
      for (bool b : covered) CHECK(b);
      for (std::size_t i = 1; i < clips.size(); ++i) CHECK(clips[i].start >= clips[i - 1].start);
    }
  }
}

TEST_CASE("adjacent clips share at least one frame when the overlap rate is positive") {
  CoherenceConfig cfg;
  cfg.overlap_rate = 0.25;
  for (std::uint64_t s = 0; s < 50; ++s) {
    RngStream rng = derive_stream(s, "clip-overlap");
    std::vector<Clip> clips = sample_clips(60, cfg, rng);
    for (std::size_t i = 1; i < clips.size(); ++i) {
      const int shared = clips[i - 1].end() - clips[i].start;
      CHECK(shared >= 1);
      CHECK(shared < clips[i - 1].length);  // never swallows the predecessor
    }
  }
}

TEST_CASE("zero overlap rate partitions the sequence except a possibly snapped tail") {
  CoherenceConfig cfg;
  cfg.overlap_rate = 0.0;
  for (std::uint64_t s = 0; s < 80; ++s) {
    RngStream rng = derive_stream(s, "clip-partition");
    std::vector<Clip> clips = sample_clips(53, cfg, rng);
    for (std::size_t i = 1; i + 1 < clips.size(); ++i) CHECK(clips[i].start == clips[i - 1].end());
    if (clips.size() >= 2) {
      const int tail_overlap = clips[clips.size() - 2].end() - clips.back().start;
      CHECK(tail_overlap >= 0);
      CHECK(tail_overlap <= 1);  // only the final two-frame snap may intrude
    }
  }
}

TEST_CASE("short sequences yield one full clip") {
  CoherenceConfig cfg;  // clip_len_min = 4
  RngStream rng = derive_stream(3, "clip-short");
  for (int seq_len : {2, 3, 4}) {
    std::vector<Clip> clips = sample_clips(seq_len, cfg, rng);
    REQUIRE(clips.size() == 1);
    CHECK(clips[0].start == 0);
    CHECK(clips[0].length == seq_len);
  }
  CHECK_THROWS_AS(sample_clips(1, cfg, rng), std::invalid_argument);
  CHECK_THROWS_AS(sample_clips(0, cfg, rng), std::invalid_argument);
}

TEST_CASE("clip sampling is a pure function of the stream") {
  CoherenceConfig cfg;
  RngStream r1 = derive_stream(17, "clip-det");
  RngStream r2 = derive_stream(17, "clip-det");
  std::vector<Clip> a = sample_clips(80, cfg, r1, 5);
  std::vector<Clip> b = sample_clips(80, cfg, r2, 5);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].sequence_id == 5);
    CHECK(a[i].start == b[i].start);
    CHECK(a[i].length == b[i].length);
  }
}

TEST_CASE("coherence config validation") {
  CoherenceConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.overlap_rate = 1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.overlap_rate = 0.25;
  cfg.clip_len_min = 1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.clip_len_min = 6;
  cfg.clip_len_max = 5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.clip_len_max = 6;
  cfg.lambda = -0.1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("registry lists each shared timestamp of each clip pair exactly once") {
  std::vector<Clip> clips = {{0, 0, 10}, {0, 8, 8}};  // [0,10) and [8,16)
  OverlapRegistry reg = build_overlap_registry(clips);
  REQUIRE(reg.pairs.size() == 2);
  CHECK(reg.pairs[0].clip_a == 0);
  CHECK(reg.pairs[0].clip_b == 1);
  CHECK(reg.pairs[0].timestamp == 8);
  CHECK(reg.pairs[1].timestamp == 9);
}

TEST_CASE("registry handles triple overlaps and matches brute force") {
  // three clips all sharing t=5
  std::vector<Clip> tri = {{0, 0, 6}, {0, 3, 4}, {0, 5, 4}};
  OverlapRegistry reg = build_overlap_registry(tri);
  CHECK(same_pairs(reg.pairs, brute_force_pairs(tri)));
  // (0,1): t=3,4,5; (0,2): t=5; (1,2): t=5,6
  CHECK(reg.pairs.size() == 6);
}

TEST_CASE("registry equals brute force on sampled clip lists") {
  CoherenceConfig cfg;
  for (std::uint64_t s = 0; s < 30; ++s) {
    RngStream rng = derive_stream(s, "registry-prop");
    std::vector<Clip> clips = sample_clips(90, cfg, rng);
    CHECK(same_pairs(build_overlap_registry(clips).pairs, brute_force_pairs(clips)));
  }
}

TEST_CASE("registry rejects unsorted clip lists") {
  std::vector<Clip> bad = {{0, 5, 4}, {0, 0, 6}};
  CHECK_THROWS_AS(build_overlap_registry(bad), std::invalid_argument);
}

TEST_CASE("disjoint clips produce an empty registry") {
  std::vector<Clip> clips = {{0, 0, 4}, {0, 4, 4}, {0, 8, 4}};
  CHECK(build_overlap_registry(clips).pairs.empty());
}
