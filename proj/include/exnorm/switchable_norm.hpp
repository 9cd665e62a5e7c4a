#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "exnorm/normalizers.hpp"

namespace exnorm {

/// Learnable state of an SN layer: per-channel affine plus one logit per pool
/// member for the mean mixture and one for the variance mixture.
template <typename T>
struct SNParams {
  Parameter<T> gamma;
  Parameter<T> beta;
  Parameter<T> mean_logits;
  Parameter<T> var_logits;
  bool tied = false;  // var_logits unused; the mean ratios serve both

  static SNParams init(std::size_t channels, std::size_t pool_size, bool tied, const std::string& name);
  std::vector<Parameter<T>*> parameters();
};

/// Tape view of SNParams.
template <typename T>
struct SNVars {
  Var<T> gamma;
  Var<T> beta;
  Var<T> mean_logits;
  Var<T> var_logits;
};

template <typename T>
SNVars<T> bind(Tape<T>& tape, SNParams<T>& p);

/// (mean ratios, variance ratios) as plain vectors.
template <typename T>
std::pair<std::vector<double>, std::vector<double>> sn_ratios(const SNParams<T>& p);

/// gamma * (x - sum_k lm_k mu_k) / sqrt(sum_k lv_k var_k + eps) + beta, with the
/// mixed statistics formed at per-sample-per-channel granularity.
template <typename T>
Var<T> sn_forward(Var<T> x, const SNVars<T>& p, const StatsBundle<T>& stats, double eps = 1e-5);

template <typename T>
class SwitchableNorm final : public NormLayer<T> {
 public:
  SwitchableNorm(std::size_t channels, std::vector<NormalizerKind> pool, std::string name,
                 bool tied = false, double eps = 1e-5, double momentum = 0.1);

  Var<T> forward(Var<T> x, const ForwardMode& mode, const RatioSink<T>* sink = nullptr) override;
  std::vector<Parameter<T>*> parameters() override { return params_.parameters(); }
  std::vector<Buffer<T>> buffers() override;
  std::size_t channels() const override { return channels_; }
  std::string kind_name() const override { return "sn"; }

  SNParams<T>& params() { return params_; }
  const std::vector<NormalizerKind>& pool() const { return pool_; }
  RunningStats<T>& running() { return running_; }

 private:
  std::size_t channels_;
  std::vector<NormalizerKind> pool_;
  std::string name_;
  double eps_;
  SNParams<T> params_;
  RunningStats<T> running_;
};

extern template class SwitchableNorm<float>;
extern template class SwitchableNorm<double>;

}  // namespace exnorm
