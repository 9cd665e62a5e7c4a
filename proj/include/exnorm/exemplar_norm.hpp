#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "exnorm/normalizers.hpp"

namespace exnorm {

/// Ablations of the ratio subnet and affine layout. At most one is active.
enum class ENVariant {
  kNone,
  kMlp,           // (a) pooled features -> FC(C/32) -> ReLU -> FC(K)
  kNoConv,        // (b) correlate pre-standardized pooled features directly
  kReluHead,      // (c) ReLU instead of tanh after the first FC
  kSingleAffine,  // (d) one shared gamma/beta after the ratio-weighted sum
};

std::string variant_name(ENVariant v);  // "none", "a", "b", "c", "d"
ENVariant parse_variant(const std::string& text);

struct ENConfig {
  std::vector<NormalizerKind> pool{NormalizerKind::in(), NormalizerKind::ln(), NormalizerKind::bn()};
  std::size_t reduction = 8;   // r: grouped conv maps C -> C/r with C/r groups
  std::size_t expansion = 50;  // pi: first FC widens K^2 -> pi*K
  double eps = 1e-5;
  bool mlp_2layer = false;
  bool no_conv = false;
  bool relu_head = false;
  bool single_affine = false;

  std::size_t pool_size() const { return pool.size(); }
  /// The active variant; throws std::invalid_argument when several flags are set.
  ENVariant variant() const;
  void set_variant(ENVariant v);
  bool uses_conv() const;
  /// Hidden width of the first FC layer for C channels.
  std::size_t hidden_width(std::size_t channels) const;
  /// Checks K >= 2, distinct pool, flag exclusivity and C divisible by r.
  void validate(std::size_t channels) const;
};

/// All learnable state of one EN layer.
template <typename T>
struct ENParams {
  std::vector<Parameter<T>> gammas;  // K entries, or 1 with single_affine
  std::vector<Parameter<T>> betas;
  std::optional<Parameter<T>> conv_w;  // [C/r, r, 1, 1]: exactly C values, no bias
  Parameter<T> fc1_w;                  // [in, hidden]
  Parameter<T> fc1_b;                  // [hidden]
  Parameter<T> fc2_w;                  // [hidden, K]
  Parameter<T> fc2_b;                  // [K]

  std::vector<Parameter<T>*> parameters();
  /// Number of scalar parameters, by enumeration of the records above.
  std::size_t count() const;
};

/// gammas = 1, betas = 0, fc2 = 0, conv/fc1 uniform in +-1/sqrt(fan_in).
/// The zero final layer makes every ratio row exactly 1/K until fc2 moves.
template <typename T>
ENParams<T> en_init(std::size_t channels, const ENConfig& cfg, std::uint64_t seed,
                    const std::string& name = "en");

template <typename T>
struct ENVars {
  std::vector<Var<T>> gammas;
  std::vector<Var<T>> betas;
  std::optional<Var<T>> conv_w;
  Var<T> fc1_w, fc1_b, fc2_w, fc2_b;
};

template <typename T>
ENVars<T> bind(Tape<T>& tape, ENParams<T>& p);

struct ENParamCount {
  std::size_t affines = 0;  // 2KC (2C for single_affine)
  std::size_t conv = 0;     // C
  std::size_t head = 0;     // Psi(K) = K^2 * piK + piK + piK * K + K
  std::size_t total = 0;
};

/// Closed-form parameter count per layer for C channels.
ENParamCount en_param_count(std::size_t channels, const ENConfig& cfg);

/// Per-sample ratios Lambda [N,K] from x [N,C,H,W] and the pool statistics.
template <typename T>
Var<T> ratio_subnet(Var<T> x, const StatsBundle<T>& stats, const ENVars<T>& p, const ENConfig& cfg);

template <typename T>
struct ENOutput {
  Var<T> out;
  Var<T> ratios;
};

/// out_n = sum_k [gamma_k * (lambda_nk * standardize_k(x_n)) + beta_k]. Every
/// beta_k is added regardless of its ratio. `ratio_override` replaces the
/// subnet output; its rows must lie on the simplex.
template <typename T>
ENOutput<T> en_forward(Var<T> x, const ENVars<T>& p, const StatsBundle<T>& stats, const ENConfig& cfg,
                       const std::optional<Tensor<T>>& ratio_override = std::nullopt);

/// Pluggable EN normalization site.
template <typename T>
class ExemplarNorm final : public NormLayer<T> {
 public:
  ExemplarNorm(std::size_t channels, ENConfig cfg, std::uint64_t seed, std::string name,
               std::size_t layer_index = 0, double momentum = 0.1);

  Var<T> forward(Var<T> x, const ForwardMode& mode, const RatioSink<T>* sink = nullptr) override;
  std::vector<Parameter<T>*> parameters() override { return params_.parameters(); }
  std::vector<Buffer<T>> buffers() override;
  std::size_t channels() const override { return channels_; }
  std::string kind_name() const override;

  const ENConfig& config() const { return cfg_; }
  ENParams<T>& params() { return params_; }
  RunningStats<T>& running() { return running_; }
  std::size_t layer_index() const { return layer_index_; }
  /// Forces the ratio matrix for subsequent forwards (testing hook).
  void set_ratio_override(std::optional<Tensor<T>> ratios) { override_ = std::move(ratios); }
  /// Ratio matrix of the most recent forward.
  const Tensor<T>& last_ratios() const { return last_ratios_; }

 private:
  std::size_t channels_;
  ENConfig cfg_;
  std::string name_;
  std::size_t layer_index_;
  ENParams<T> params_;
  RunningStats<T> running_;
  std::optional<Tensor<T>> override_;
  Tensor<T> last_ratios_;
};

extern template class ExemplarNorm<float>;
extern template class ExemplarNorm<double>;

}  // namespace exnorm
