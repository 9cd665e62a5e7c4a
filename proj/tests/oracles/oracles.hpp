#pragma once

// Naive reference implementations used only by tests. They share containers
// with the library (Tensor, ENParams) but none of its arithmetic.

#include <cstddef>
#include <vector>

#include "exnorm/exemplar_norm.hpp"
#include "exnorm/normalizers.hpp"
#include "exnorm/tensor.hpp"

namespace exnorm::oracle {

Tensor<double> matmul(const Tensor<double>& a, const Tensor<double>& b);

Tensor<double> conv2d(const Tensor<double>& x, const Tensor<double>& w, std::size_t stride,
                      std::size_t padding, std::size_t groups);

struct Moments {
  std::vector<double> mean;
  std::vector<double> var;
};

/// Two-pass population moments, laid out like the library's moment tensors.
Moments moments(const Tensor<double>& x, NormalizerKind kind);

/// Mean/variance seen by element (n, c) under the given kind.
double mean_at(const Moments& m, NormalizerKind kind, std::size_t n, std::size_t c, std::size_t channels);
double var_at(const Moments& m, NormalizerKind kind, std::size_t n, std::size_t c, std::size_t channels);

/// Single normalizer: gamma * (x - mu) / sqrt(var + eps) + beta.
Tensor<double> normalize(const Tensor<double>& x, NormalizerKind kind, const std::vector<double>& gamma,
                         const std::vector<double>& beta, double eps);

/// Switchable normalization evaluated term by term.
Tensor<double> switchable(const Tensor<double>& x, const std::vector<NormalizerKind>& pool,
                          const std::vector<double>& gamma, const std::vector<double>& beta,
                          const std::vector<double>& mean_logits, const std::vector<double>& var_logits,
                          double eps);

std::vector<double> softmax(const std::vector<double>& logits);

struct ENStages {
  std::vector<double> pooled;   // N*C
  std::vector<double> reduced;  // N*K*D (D = C/r, or C without conv)
  std::vector<double> gram;     // N*K*K
  std::vector<double> ratios;   // N*K
  Tensor<double> out;
};

/// EN pipeline composed stage by stage with plain loops (training-mode stats).
ENStages exemplar(const Tensor<double>& x, const ENParams<double>& p, const ENConfig& cfg);

}  // namespace exnorm::oracle
