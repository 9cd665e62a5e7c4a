#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "exnorm/autodiff.hpp"
#include "exnorm/ops.hpp"
#include "exnorm/tensor.hpp"

namespace exnorm::testing {

template <typename T = double>
Tensor<T> random_tensor(Shape shape, std::uint64_t seed, double scale = 1.0, double offset = 0.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  Tensor<T> t(shape);
  for (T& v : t.data()) v = static_cast<T>(offset + scale * dist(rng));
  return t;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (!(a.shape() == b.shape())) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

/// Adds N(0, scale^2) noise to every parameter so that no gradient is
/// structurally zero (e.g. the zero-initialized final FC of EN).
template <typename T>
void perturb(const std::vector<Parameter<T>*>& params, std::uint64_t seed, double scale = 0.3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, scale);
  for (Parameter<T>* p : params)
    for (T& v : p->value.data()) v += static_cast<T>(dist(rng));
}

/// sum(w * out) for a fixed random projection w; avoids the degenerate
/// gradients that a plain sum has for normalized outputs.
template <typename T>
Var<T> projected_loss(Var<T> out, std::uint64_t seed) {
  return sum(mul(out, out.tape().constant(random_tensor<T>(out.shape(), seed), "projection")));
}

}  // namespace exnorm::testing
