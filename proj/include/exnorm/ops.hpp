#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "exnorm/autodiff.hpp"

namespace exnorm {

// Differentiable operations. Binary elementwise ops accept a right operand of
// the same shape, a single-element scalar, or a rank-1 vector broadcast along
// axis 1 (the channel axis). Any other pairing is a ShapeError.

template <typename T> Var<T> add(Var<T> a, Var<T> b);
template <typename T> Var<T> sub(Var<T> a, Var<T> b);
template <typename T> Var<T> mul(Var<T> a, Var<T> b);
template <typename T> Var<T> div(Var<T> a, Var<T> b);

template <typename T> Var<T> add_scalar(Var<T> a, double s);
template <typename T> Var<T> mul_scalar(Var<T> a, double s);

template <typename T> Var<T> sqrt(Var<T> a);
template <typename T> Var<T> tanh(Var<T> a);
template <typename T> Var<T> relu(Var<T> a);

/// Sum of all elements, shape [1].
template <typename T> Var<T> sum(Var<T> a);
template <typename T> Var<T> mean(Var<T> a);

template <typename T> Var<T> reshape(Var<T> a, Shape shape);

/// [M,P] x [P,Q] -> [M,Q].
template <typename T> Var<T> matmul(Var<T> a, Var<T> b);

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;
};

/// Direct grouped cross-correlation. x: [N,Cin,H,W], w: [Cout,Cin/g,kh,kw].
template <typename T> Var<T> conv2d(Var<T> x, Var<T> w, Conv2dOptions opt = {});

/// [N,C,H,W] -> [N,C], mean over the spatial extent.
template <typename T> Var<T> global_avg_pool(Var<T> x);

/// Row-wise softmax of [N,K] with max subtraction. NaN input is rejected.
template <typename T> Var<T> softmax_rows(Var<T> x);

/// Column k of [N,K] as a length-N vector.
template <typename T> Var<T> column(Var<T> x, std::size_t k);

/// Element k of a tensor as a single-element scalar.
template <typename T> Var<T> element(Var<T> x, std::size_t k);

/// out[n, ...] = x[n, ...] * w[n] for w of length N.
template <typename T> Var<T> scale_samples(Var<T> x, Var<T> w);

/// K tensors of shape [N,D] -> [N,K,D].
template <typename T> Var<T> stack_slices(std::span<const Var<T>> slices);

/// Per-sample Gram matrix: z [N,K,D] -> v [N,K*K] with v[n,k*K+l] = <z[n,k,:], z[n,l,:]>.
template <typename T> Var<T> pairwise_gram(Var<T> z);

/// Mean softmax cross-entropy over rows of logits [N,K], shape [1].
template <typename T> Var<T> softmax_cross_entropy(Var<T> logits, std::span<const int> labels);

}  // namespace exnorm
