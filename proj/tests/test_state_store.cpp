#include <vector>

#include "cbm/clip_scheme.hpp"
#include "cbm/tensor.hpp"
#include "doctest.h"

using namespace cbm;
using namespace cbm::train;

TEST_CASE("lookup returns null until a state is published") {
  StateStore store;
  CHECK(store.lookup(0, 0, 7) == nullptr);
  store.publish(0, 0, 7, {1, 2, 2}, {1, 2, 3, 4});
  const StateStore::Entry* e = store.lookup(0, 0, 7);
  REQUIRE(e != nullptr);
  CHECK(e->shape == std::vector<int>{1, 2, 2});
  CHECK(e->value == std::vector<double>{1, 2, 3, 4});
  CHECK(store.lookup(1, 0, 7) == nullptr);  // other sequence
  CHECK(store.lookup(0, 1, 7) == nullptr);  // other layer
  CHECK(store.lookup(0, 0, 6) == nullptr);  // other timestamp
}

TEST_CASE("publishing the same key twice keeps the most recent value") {
  StateStore store;
  store.publish(3, 1, 4, {2}, {1.0, 2.0});
  store.publish(3, 1, 4, {2}, {9.0, 8.0});
  CHECK(store.lookup(3, 1, 4)->value == std::vector<double>{9.0, 8.0});
  CHECK(store.size() == 1);
}

TEST_CASE("has_all_layers requires every layer at the timestamp") {
  StateStore store;
  store.publish(0, 0, 5, {1}, {0.1});
  CHECK_FALSE(store.has_all_layers(0, 2, 5));
  store.publish(0, 1, 5, {1}, {0.2});
  CHECK(store.has_all_layers(0, 2, 5));
  CHECK_FALSE(store.has_all_layers(0, 2, 4));
}

TEST_CASE("clear empties the store") {
  StateStore store;
  store.publish(0, 0, 0, {1}, {1.0});
  store.clear();
  CHECK(store.size() == 0);
  CHECK(store.lookup(0, 0, 0) == nullptr);
}

TEST_CASE("clip handoff: a clip starting at t reads the stored state of t-1") {
  StateStore store;
  nn::StackConfig cfg;
  cfg.input_channels = 1;
  cfg.channels = {2, 1};

  // publish layer states for timestamp 7 of sequence 4
  store.publish(4, 0, 7, {2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  store.publish(4, 1, 7, {1, 2, 2}, {9, 10, 11, 12});

  ad::Tape tape;
  Clip clip{4, 8, 5};  // starts right after the stored step
  nn::CbmState st = init_clip_state(tape, clip, store, cfg, 2, 2);
  REQUIRE(st.c.size() == 2);
  CHECK(st.c[0].value() == std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8});
  CHECK(st.c[1].value() == std::vector<double>{9, 10, 11, 12});
}

TEST_CASE("stored states enter the tape as detached constants") {
  StateStore store;
  nn::StackConfig cfg;
  cfg.input_channels = 1;
  cfg.channels = {1};
  store.publish(0, 0, 2, {1, 2, 2}, {0.5, 0.5, 0.5, 0.5});
  ad::Tape tape;
  nn::CbmState st = init_clip_state(tape, Clip{0, 3, 4}, store, cfg, 2, 2);
  CHECK_FALSE(st.c[0].requires_grad());
}

TEST_CASE("missing or irrelevant states fall back to zeros") {
  StateStore store;
  nn::StackConfig cfg;
  cfg.input_channels = 1;
  cfg.channels = {1};
  store.publish(0, 0, 5, {1, 2, 2}, {7, 7, 7, 7});

  ad::Tape tape;
  // clip at the sequence start never reads the store
  nn::CbmState first = init_clip_state(tape, Clip{0, 0, 4}, store, cfg, 2, 2);
  CHECK(first.c[0].value() == std::vector<double>{0, 0, 0, 0});
  // a clip whose predecessor timestamp is absent gets zeros too
  nn::CbmState cold = init_clip_state(tape, Clip{0, 3, 4}, store, cfg, 2, 2);
  CHECK(cold.c[0].value() == std::vector<double>{0, 0, 0, 0});
  // and the matching timestamp is honored
  nn::CbmState warm = init_clip_state(tape, Clip{0, 6, 4}, store, cfg, 2, 2);
  CHECK(warm.c[0].value() == std::vector<double>{7, 7, 7, 7});
}
