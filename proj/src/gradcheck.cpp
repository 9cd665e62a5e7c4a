#include "exnorm/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace exnorm {

namespace {

double evaluate(const LossBuilder& loss) {
  Tape<double> tape;
  const Var<double> out = loss(tape);
  if (out.value().numel() != 1) {
    throw ShapeError("gradient_check: loss must be scalar, got " + out.shape().str());
  }
  const double v = out.value()[0];
  if (!std::isfinite(v)) throw NumericError("gradient_check: non-finite loss value");
  return v;
}

}  // namespace

GradCheckReport gradient_check(const LossBuilder& loss, std::span<Parameter<double>* const> params,
                               double eps, std::size_t max_coords, std::uint64_t seed) {
  {
    Tape<double> tape;
    const Var<double> out = loss(tape);
    if (!out.value().all_finite()) throw NumericError("gradient_check: non-finite loss value");
    tape.backward(out);
  }

  std::mt19937_64 rng(seed);
  GradCheckReport report;
  for (Parameter<double>* p : params) {
    const Tensor<double> analytic = p->grad;
    if (!analytic.all_finite()) {
      throw NumericError("gradient_check: non-finite analytic gradient for " + p->name);
    }
    std::vector<std::size_t> coords(p->value.numel());
    std::iota(coords.begin(), coords.end(), 0);
    if (coords.size() > max_coords) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(max_coords);
    }

    GradCheckEntry entry{p->name, 0.0, coords.size()};
    for (std::size_t i : coords) {
      const double saved = p->value[i];
      p->value[i] = saved + eps;
      const double up = evaluate(loss);
      p->value[i] = saved - eps;
      const double down = evaluate(loss);
      p->value[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      entry.max_rel_error = std::max(entry.max_rel_error, std::abs(a - numeric) / denom);
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace exnorm
