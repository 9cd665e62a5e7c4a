#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "exnorm/autodiff.hpp"
#include "exnorm/layer.hpp"

namespace exnorm {

enum class NormTag { kBN, kIN, kLN, kGN };

/// Which axes a normalizer reduces over. GN carries its group count.
struct NormalizerKind {
  NormTag tag = NormTag::kBN;
  std::size_t groups = 1;

  static NormalizerKind bn() { return {NormTag::kBN, 1}; }
  static NormalizerKind in() { return {NormTag::kIN, 1}; }
  static NormalizerKind ln() { return {NormTag::kLN, 1}; }
  static NormalizerKind gn(std::size_t g) { return {NormTag::kGN, g}; }

  /// "bn", "in", "ln", "gn" (2 groups) or "gn:G".
  static NormalizerKind parse(const std::string& text);

  std::string name() const;
  /// Reduced axes, e.g. "N,H,W" for BN.
  std::string reduced_axes() const;
  /// Moment tensor shape for an N x C input: BN [C], IN [N,C], LN [N], GN [N,g].
  Shape moment_shape(std::size_t n, std::size_t c) const;
  /// Flat index into the moment tensor for sample n, channel c.
  std::size_t moment_index(std::size_t n, std::size_t c, std::size_t channels) const;
  void validate(std::size_t channels) const;

  bool operator==(const NormalizerKind&) const = default;
};

/// Mean and (population) variance of one normalizer. Variance is stored rather
/// than the standard deviation so that d/dx stays finite for constant inputs.
template <typename T>
struct MomentPair {
  NormalizerKind kind;
  Var<T> mean;
  Var<T> var;

  Tensor<T> std() const;
};

/// One MomentPair per pool member, in pool order.
template <typename T>
using StatsBundle = std::vector<MomentPair<T>>;

/// Statistics of x [N,C,H,W] for one normalizer. Accumulates in double.
template <typename T>
MomentPair<T> compute_moments(Var<T> x, NormalizerKind kind);

/// Broadcasts a moment tensor to target [N,C] or [N,C,H,W]; backward sums.
template <typename T>
Var<T> expand_moment(Var<T> moment, NormalizerKind kind, const Shape& target);

/// (x - mean) / sqrt(var + eps), broadcast per the pair's kind.
template <typename T>
Var<T> standardize(Var<T> x, const MomentPair<T>& m, double eps = 1e-5);

/// gamma[c] * xhat + beta[c].
template <typename T>
Var<T> affine_transform(Var<T> xhat, Var<T> gamma, Var<T> beta);

/// Exponential moving averages of BN moments for inference.
template <typename T>
struct RunningStats {
  Tensor<T> mean;
  Tensor<T> var;
  double momentum = 0.1;

  static RunningStats init(std::size_t channels, double momentum = 0.1);
  /// Constant MomentPair on the given tape.
  MomentPair<T> as_moments(Tape<T>& tape) const;
};

/// running <- (1 - m) * running + m * batch, for mean and variance.
template <typename T>
RunningStats<T> update_running(const RunningStats<T>& rs, const MomentPair<T>& batch);

/// Moments for every pool member. In eval mode the BN member reads running
/// stats; in training it uses batch moments and optionally updates `running`.
template <typename T>
StatsBundle<T> gather_stats(Var<T> x, std::span<const NormalizerKind> pool,
                            RunningStats<T>* running, const ForwardMode& mode);

/// Plain BN, IN, LN or GN with a per-channel affine.
template <typename T>
class SingleNorm final : public NormLayer<T> {
 public:
  SingleNorm(NormalizerKind kind, std::size_t channels, std::string name, double eps = 1e-5,
             double momentum = 0.1);

  Var<T> forward(Var<T> x, const ForwardMode& mode, const RatioSink<T>* sink = nullptr) override;
  std::vector<Parameter<T>*> parameters() override { return {&gamma_, &beta_}; }
  std::vector<Buffer<T>> buffers() override;
  std::size_t channels() const override { return channels_; }
  std::string kind_name() const override { return kind_.name(); }

  NormalizerKind kind() const { return kind_; }
  Parameter<T>& gamma() { return gamma_; }
  Parameter<T>& beta() { return beta_; }
  const RunningStats<T>& running() const { return running_; }
  RunningStats<T>& running() { return running_; }

 private:
  NormalizerKind kind_;
  std::size_t channels_;
  std::string name_;
  double eps_;
  Parameter<T> gamma_;
  Parameter<T> beta_;
  RunningStats<T> running_;
};

extern template class SingleNorm<float>;
extern template class SingleNorm<double>;

}  // namespace exnorm
