#include <cmath>
#include <stdexcept>
#include <vector>

#include "cbm/ops.hpp"
#include "cbm/rng.hpp"
#include "cbm/tensor.hpp"
#include "doctest.h"

using namespace cbm;
using namespace cbm::ad;

TEST_CASE("leaf, constant and zeros construction") {
  Tape t;
  Tensor a = t.leaf({2, 2}, {1, 2, 3, 4}, true);
  CHECK(a.shape() == std::vector<int>{2, 2});
  CHECK(a.size() == 4);
  CHECK(a.requires_grad());
  CHECK(a.value()[3] == 4.0);

  Tensor c = t.constant({3}, {5, 6, 7});
  CHECK_FALSE(c.requires_grad());

  Tensor z = t.zeros({2, 3});
  CHECK(z.size() == 6);
  CHECK(z.value()[5] == 0.0);
  CHECK_FALSE(z.requires_grad());

  CHECK_THROWS_AS(t.leaf({2}, {1, 2, 3}, true), std::invalid_argument);  // size mismatch
  CHECK_FALSE(Tensor{}.defined());
}

TEST_CASE("scalar() requires a single element") {
  Tape t;
  CHECK(t.leaf({1}, {3.5}, false).scalar() == 3.5);
  CHECK_THROWS_AS(t.leaf({2}, {1, 2}, false).scalar(), std::runtime_error);
}

TEST_CASE("grad() of a non-differentiable tensor is rejected") {
  Tape t;
  CHECK_THROWS_AS(t.constant({1}, {1.0}).grad(), std::runtime_error);
}

TEST_CASE("backward seeds the loss with one and accumulates into shared inputs") {
  Tape t;
  Tensor x = t.leaf({1}, {3.0}, true);
  Tensor y = mul(x, x);  // x^2: both mul inputs alias x, so grads must accumulate
  t.backward(y);
  CHECK(y.grad()[0] == doctest::Approx(1.0));
  CHECK(x.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("backward demands a scalar that requires grad") {
  Tape t;
  Tensor v = t.leaf({2}, {1, 2}, true);
  CHECK_THROWS_AS(t.backward(v), std::invalid_argument);  // not scalar
  Tensor c = t.constant({1}, {1.0});
  CHECK_THROWS_AS(t.backward(c), std::runtime_error);  // no grad path
}

TEST_CASE("double backward is an error until reset_grads") {
  Tape t;
  Tensor x = t.leaf({1}, {2.0}, true);
  Tensor y = mul(x, x);
  t.backward(y);
  CHECK(t.backward_done());
  CHECK_THROWS_AS(t.backward(y), std::runtime_error);
  t.reset_grads();
  CHECK_FALSE(t.backward_done());
  CHECK(x.grad()[0] == 0.0);
  t.backward(y);
  CHECK(x.grad()[0] == doctest::Approx(4.0));
}

TEST_CASE("recording off computes values but records nothing") {
  Tape t;
  t.set_recording(false);
  Tensor x = t.leaf({2}, {1.0, -2.0}, true);
  Tensor y = relu(x);
  CHECK(y.value() == std::vector<double>{1.0, 0.0});
  CHECK_FALSE(y.requires_grad());
  CHECK(t.num_records() == 0);
}

TEST_CASE("requires_grad propagates only from grad-requiring inputs while recording") {
  Tape t;
  Tensor a = t.leaf({2}, {1, 2}, true);
  Tensor c = t.constant({2}, {3, 4});
  CHECK(add(a, c).requires_grad());
  CHECK_FALSE(add(c, c).requires_grad());
}

TEST_CASE("ops on different tapes are rejected") {
  Tape t1, t2;
  Tensor a = t1.leaf({1}, {1}, true);
  Tensor b = t2.leaf({1}, {1}, true);
  CHECK_THROWS_AS(add(a, b), std::invalid_argument);
}

TEST_CASE("note_chain_steps keeps the maximum") {
  Tape t;
  t.note_chain_steps(3);
  t.note_chain_steps(7);
  t.note_chain_steps(5);
  CHECK(t.max_chain_steps() == 7);
}

namespace {

// Brute-force differentiation oracle: a tiny scalar expression evaluated as a
// plain function of its inputs, differentiated by central differences, and
// compared against the tape's reverse pass on the same composite graph.
double reference_expr(const std::vector<double>& v) {
  const double a = v[0], b = v[1], c = v[2];
  const double s = 1.0 / (1.0 + std::exp(-(a * b)));
  const double r = std::max(0.0, b + c);
  return s * r + 2.5 * (a + r) * (a + r);
}

}  // namespace

TEST_CASE("composite scalar graph matches a finite-difference oracle") {
  std::vector<double> v = {0.7, -0.4, 1.3};

  Tape t;
  Tensor a = t.leaf({1}, {v[0]}, true);
  Tensor b = t.leaf({1}, {v[1]}, true);
  Tensor c = t.leaf({1}, {v[2]}, true);
  Tensor s = sigmoid(mul(a, b));
  Tensor r = relu(add(b, c));
  Tensor lhs = mul(s, r);
  Tensor apr = add(a, r);
  Tensor rhs = scale(mul(apr, apr), 2.5);
  Tensor y = add(lhs, rhs);
  CHECK(y.value()[0] == doctest::Approx(reference_expr(v)).epsilon(1e-12));
  t.backward(y);

  const double eps = 1e-6;
  std::vector<Tensor> leaves = {a, b, c};
  for (int i = 0; i < 3; ++i) {
    std::vector<double> hi = v, lo = v;
    hi[i] += eps;
    lo[i] -= eps;
    const double numeric = (reference_expr(hi) - reference_expr(lo)) / (2 * eps);
    CHECK(leaves[i].grad()[0] == doctest::Approx(numeric).epsilon(1e-6));
  }
}

TEST_CASE("gradients of a deep chain stay finite and exact in shape") {
  Tape t;
  RngStream rng = derive_stream(99, "deep-chain");
  Tensor x = t.leaf({4}, {0.1, -0.2, 0.3, -0.4}, true);
  Tensor h = x;
  for (int i = 0; i < 50; ++i) h = sigmoid(add(h, t.constant({4}, {rng.uniform(-0.1, 0.1), 0, 0, 0})));
  Tensor loss = sum(h);
  t.backward(loss);
  CHECK(x.grad().size() == 4);
  for (double g : x.grad()) CHECK(std::isfinite(g));
}
