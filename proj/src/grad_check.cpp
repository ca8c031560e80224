#include "cbm/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "cbm/rng.hpp"

namespace cbm::ad {

namespace {

double eval_loss(const GraphBuilder& f, const std::vector<ParamSpec>& params) {
  Tape tape;
  std::vector<Tensor> leaves;
  leaves.reserve(params.size());
  for (const auto& p : params) leaves.push_back(tape.leaf(p.shape, p.value, true));
  Tensor loss = f(tape, leaves);
  if (loss.size() != 1) throw std::invalid_argument("grad_check: builder must return a scalar loss");
  return loss.scalar();
}

}  // namespace

GradCheckReport grad_check(const GraphBuilder& f, std::vector<ParamSpec> params, double epsilon, double tolerance,
                           int min_coords, std::uint64_t sample_seed) {
  if (epsilon <= 0.0) throw std::invalid_argument("grad_check: epsilon must be positive");
  if (params.empty()) throw std::invalid_argument("grad_check: no parameters to check");

  // The builder must be a pure function of the leaf values; two evaluations
  // at the base point have to agree bit for bit.
  const double base0 = eval_loss(f, params);
  const double base1 = eval_loss(f, params);
  if (!std::isfinite(base0)) throw std::runtime_error("grad_check: loss is not finite at the base point");
  if (base0 != base1)
    throw std::runtime_error("grad_check: builder is not deterministic (loss " + std::to_string(base0) + " vs " +
                             std::to_string(base1) + " at the same point)");

  // One analytic pass at the base point.
  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    std::vector<Tensor> leaves;
    for (const auto& p : params) leaves.push_back(tape.leaf(p.shape, p.value, true));
    Tensor loss = f(tape, leaves);
    tape.backward(loss);
    for (const auto& leaf : leaves) analytic.push_back(leaf.grad());
  }

  GradCheckReport report;
  report.epsilon = epsilon;
  report.tolerance = tolerance;

  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    const std::size_t n = params[pi].value.size();
    std::vector<std::size_t> coords(n);
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (n > static_cast<std::size_t>(min_coords)) {
      // sample min_coords distinct coordinates
      RngStream rng = derive_stream(sample_seed, "grad_check_coords", {static_cast<std::uint64_t>(pi)});
      for (std::size_t i = 0; i < static_cast<std::size_t>(min_coords); ++i) {
        std::size_t j = i + static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n - i - 1)));
        std::swap(coords[i], coords[j]);
      }
      coords.resize(static_cast<std::size_t>(min_coords));
    }

    GradCheckReport::Entry entry;
    entry.name = params[pi].name;
    entry.coords_checked = static_cast<int>(coords.size());
    for (std::size_t c : coords) {
      const double saved = params[pi].value[c];
      params[pi].value[c] = saved + epsilon;
      const double fp = eval_loss(f, params);
      params[pi].value[c] = saved - epsilon;
      const double fm = eval_loss(f, params);
      params[pi].value[c] = saved;
      const double numeric = (fp - fm) / (2.0 * epsilon);
      const double a = analytic[pi][c];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      entry.max_rel_err = std::max(entry.max_rel_err, rel);
    }
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.entries.push_back(std::move(entry));
  }
  report.passed = report.max_rel_err < tolerance;
  return report;
}

std::string format_report(const GradCheckReport& report) {
  std::ostringstream os;
  for (const auto& e : report.entries) {
    os << "  " << e.name << ": max_rel_err=" << e.max_rel_err << " (" << e.coords_checked << " coords)\n";
  }
  os << (report.passed ? "PASS" : "FAIL") << " max_rel_err=" << report.max_rel_err << " tolerance=" << report.tolerance
     << " epsilon=" << report.epsilon << "\n";
  return os.str();
}

}  // namespace cbm::ad
