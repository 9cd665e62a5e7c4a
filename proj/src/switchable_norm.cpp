#include "exnorm/switchable_norm.hpp"

#include <cmath>
#include <stdexcept>

#include "exnorm/ops.hpp"

namespace exnorm {

template <typename T>
SNParams<T> SNParams<T>::init(std::size_t channels, std::size_t pool_size, bool tied,
                              const std::string& name) {
  return {Parameter<T>(name + ".gamma", Tensor<T>(Shape{channels}, T{1})),
          Parameter<T>(name + ".beta", Tensor<T>(Shape{channels}, T{0})),
          Parameter<T>(name + ".mean_logits", Tensor<T>(Shape{pool_size}, T{0})),
          Parameter<T>(name + ".var_logits", Tensor<T>(Shape{pool_size}, T{0})), tied};
}

template <typename T>
std::vector<Parameter<T>*> SNParams<T>::parameters() {
  if (tied) return {&gamma, &beta, &mean_logits};
  return {&gamma, &beta, &mean_logits, &var_logits};
}

template <typename T>
SNVars<T> bind(Tape<T>& tape, SNParams<T>& p) {
  SNVars<T> v{tape.parameter(p.gamma), tape.parameter(p.beta), tape.parameter(p.mean_logits), {}};
  v.var_logits = p.tied ? v.mean_logits : tape.parameter(p.var_logits);
  return v;
}

namespace {

std::vector<double> softmax(const std::span<const double> logits) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) total += out[i] = std::exp(logits[i] - mx);
  for (double& v : out) v /= total;
  return out;
}

template <typename T>
Var<T> mix(const StatsBundle<T>& stats, Var<T> ratios, bool use_var, const Shape& nc) {
  Var<T> acc;
  for (std::size_t k = 0; k < stats.size(); ++k) {
    const MomentPair<T>& m = stats[k];
    Var<T> term = mul(expand_moment(use_var ? m.var : m.mean, m.kind, nc), element(ratios, k));
    acc = acc.valid() ? add(acc, term) : term;
  }
  return acc;
}

}  // namespace

template <typename T>
std::pair<std::vector<double>, std::vector<double>> sn_ratios(const SNParams<T>& p) {
  const auto as_double = [](const Tensor<T>& t) { return std::vector<double>(t.data().begin(), t.data().end()); };
  auto mean = softmax(as_double(p.mean_logits.value));
  auto var = p.tied ? mean : softmax(as_double(p.var_logits.value));
  return {std::move(mean), std::move(var)};
}

template <typename T>
Var<T> sn_forward(Var<T> x, const SNVars<T>& p, const StatsBundle<T>& stats, double eps) {
  const std::size_t k = stats.size();
  if (p.mean_logits.shape() != Shape{k} || p.var_logits.shape() != Shape{k}) {
    throw std::invalid_argument("sn_forward: " + std::to_string(k) + " pool members but logits " +
                                p.mean_logits.shape().str() + " / " + p.var_logits.shape().str());
  }
  const Shape& s = x.shape();
  const Shape nc{s[0], s[1]};
  Var<T> lm = softmax_rows(reshape(p.mean_logits, Shape{1, k}));
  Var<T> lv = p.var_logits.id() == p.mean_logits.id() ? lm : softmax_rows(reshape(p.var_logits, Shape{1, k}));

  Var<T> mixed_mean = mix(stats, lm, false, nc);
  Var<T> mixed_var = mix(stats, lv, true, nc);
  // [N,C] statistics broadcast to [N,C,H,W] with the per-(n,c) layout.
  const NormalizerKind per_nc = NormalizerKind::in();
  Var<T> centered = sub(x, expand_moment(mixed_mean, per_nc, s));
  Var<T> denom = sqrt(add_scalar(expand_moment(mixed_var, per_nc, s), eps));
  return affine_transform(div(centered, denom), p.gamma, p.beta);
}

template <typename T>
SwitchableNorm<T>::SwitchableNorm(std::size_t channels, std::vector<NormalizerKind> pool,
                                  std::string name, bool tied, double eps, double momentum)
    : channels_(channels),
      pool_(std::move(pool)),
      name_(std::move(name)),
      eps_(eps),
      params_(SNParams<T>::init(channels, pool_.size(), tied, name_)),
      running_(RunningStats<T>::init(channels, momentum)) {
  if (pool_.size() < 2) throw std::invalid_argument("SN needs at least two normalizers");
  for (const auto& kind : pool_) kind.validate(channels);
}

template <typename T>
Var<T> SwitchableNorm<T>::forward(Var<T> x, const ForwardMode& mode, const RatioSink<T>*) {
  const StatsBundle<T> stats = gather_stats<T>(x, pool_, &running_, mode);
  return sn_forward(x, bind(x.tape(), params_), stats, eps_);
}

template <typename T>
std::vector<Buffer<T>> SwitchableNorm<T>::buffers() {
  for (const auto& kind : pool_) {
    if (kind.tag == NormTag::kBN) {
      return {{name_ + ".running_mean", &running_.mean}, {name_ + ".running_var", &running_.var}};
    }
  }
  return {};
}

#define EXNORM_INSTANTIATE_SN(T)                                                          \
  template struct SNParams<T>;                                                            \
  template SNVars<T> bind(Tape<T>&, SNParams<T>&);                                        \
  template std::pair<std::vector<double>, std::vector<double>> sn_ratios(const SNParams<T>&); \
  template Var<T> sn_forward(Var<T>, const SNVars<T>&, const StatsBundle<T>&, double);    \
  template class SwitchableNorm<T>;

EXNORM_INSTANTIATE_SN(float)
EXNORM_INSTANTIATE_SN(double)

}  // namespace exnorm
