#include "exnorm/exemplar_norm.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "exnorm/ops.hpp"

namespace exnorm {

std::string variant_name(ENVariant v) {
  switch (v) {
    case ENVariant::kNone: return "none";
    case ENVariant::kMlp: return "a";
    case ENVariant::kNoConv: return "b";
    case ENVariant::kReluHead: return "c";
    case ENVariant::kSingleAffine: return "d";
  }
  return "?";
}

ENVariant parse_variant(const std::string& text) {
  if (text == "none") return ENVariant::kNone;
  if (text == "a") return ENVariant::kMlp;
  if (text == "b") return ENVariant::kNoConv;
  if (text == "c") return ENVariant::kReluHead;
  if (text == "d") return ENVariant::kSingleAffine;
  throw std::invalid_argument("unknown EN variant '" + text + "' (expected none, a, b, c, d)");
}

ENVariant ENConfig::variant() const {
  const int active = int(mlp_2layer) + int(no_conv) + int(relu_head) + int(single_affine);
  if (active > 1) throw std::invalid_argument("EN variants are mutually exclusive; " + std::to_string(active) + " set");
  if (mlp_2layer) return ENVariant::kMlp;
  if (no_conv) return ENVariant::kNoConv;
  if (relu_head) return ENVariant::kReluHead;
  if (single_affine) return ENVariant::kSingleAffine;
  return ENVariant::kNone;
}

void ENConfig::set_variant(ENVariant v) {
  mlp_2layer = v == ENVariant::kMlp;
  no_conv = v == ENVariant::kNoConv;
  relu_head = v == ENVariant::kReluHead;
  single_affine = v == ENVariant::kSingleAffine;
}

bool ENConfig::uses_conv() const {
  const ENVariant v = variant();
  return v != ENVariant::kMlp && v != ENVariant::kNoConv;
}

std::size_t ENConfig::hidden_width(std::size_t channels) const {
  if (variant() == ENVariant::kMlp) return std::max<std::size_t>(1, channels / 32);
  return expansion * pool.size();
}

void ENConfig::validate(std::size_t channels) const {
  variant();
  if (pool.size() < 2) throw std::invalid_argument("EN pool needs at least two normalizers");
  for (std::size_t i = 0; i < pool.size(); ++i) {
    pool[i].validate(channels);
    for (std::size_t j = 0; j < i; ++j)
      if (pool[i] == pool[j]) throw std::invalid_argument("EN pool repeats " + pool[i].name());
  }
  if (reduction == 0 || channels % reduction != 0) {
    throw std::invalid_argument("EN: channels C=" + std::to_string(channels) +
                                " not divisible by reduction rate r=" + std::to_string(reduction));
  }
  if (expansion == 0) throw std::invalid_argument("EN: expansion factor must be positive");
  if (!(eps > 0.0)) throw std::invalid_argument("EN: eps must be positive");
}

template <typename T>
std::vector<Parameter<T>*> ENParams<T>::parameters() {
  std::vector<Parameter<T>*> out;
  for (auto& g : gammas) out.push_back(&g);
  for (auto& b : betas) out.push_back(&b);
  if (conv_w) out.push_back(&*conv_w);
  for (Parameter<T>* p : {&fc1_w, &fc1_b, &fc2_w, &fc2_b}) out.push_back(p);
  return out;
}

template <typename T>
std::size_t ENParams<T>::count() const {
  std::size_t n = 0;
  for (const auto& g : gammas) n += g.value.numel();
  for (const auto& b : betas) n += b.value.numel();
  if (conv_w) n += conv_w->value.numel();
  for (const Parameter<T>* p : {&fc1_w, &fc1_b, &fc2_w, &fc2_b}) n += p->value.numel();
  return n;
}

ENParamCount en_param_count(std::size_t channels, const ENConfig& cfg) {
  const std::size_t k = cfg.pool_size();
  const std::size_t c = channels;
  ENParamCount out;
  out.affines = (cfg.variant() == ENVariant::kSingleAffine ? 2 : 2 * k) * c;
  out.conv = cfg.uses_conv() ? c : 0;
  const std::size_t hidden = cfg.hidden_width(c);
  const std::size_t in = cfg.variant() == ENVariant::kMlp ? c : k * k;
  out.head = in * hidden + hidden + hidden * k + k;
  out.total = out.affines + out.conv + out.head;
  return out;
}

template <typename T>
ENParams<T> en_init(std::size_t channels, const ENConfig& cfg, std::uint64_t seed, const std::string& name) {
  cfg.validate(channels);
  const std::size_t k = cfg.pool_size();
  const std::size_t c = channels;
  std::mt19937_64 rng(seed);
  const auto uniform = [&rng](Shape shape, double fan_in) {
    const double bound = 1.0 / std::sqrt(fan_in);
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor<T> t(shape);
    for (T& v : t.data()) v = static_cast<T>(dist(rng));
    return t;
  };

  ENParams<T> p;
  const std::size_t affine_count = cfg.variant() == ENVariant::kSingleAffine ? 1 : k;
  p.gammas.reserve(affine_count);
  p.betas.reserve(affine_count);
  for (std::size_t i = 0; i < affine_count; ++i) {
    const std::string suffix = affine_count == 1 ? "" : "." + std::to_string(i);
    p.gammas.emplace_back(name + ".gamma" + suffix, Tensor<T>(Shape{c}, T{1}));
    p.betas.emplace_back(name + ".beta" + suffix, Tensor<T>(Shape{c}, T{0}));
  }
  if (cfg.uses_conv()) {
    const std::size_t r = cfg.reduction;
    p.conv_w.emplace(name + ".conv", uniform(Shape{c / r, r, 1, 1}, static_cast<double>(r)));
  }
  const std::size_t in = cfg.variant() == ENVariant::kMlp ? c : k * k;
  const std::size_t hidden = cfg.hidden_width(c);
  p.fc1_w = Parameter<T>(name + ".fc1.weight", uniform(Shape{in, hidden}, static_cast<double>(in)));
  p.fc1_b = Parameter<T>(name + ".fc1.bias", uniform(Shape{hidden}, static_cast<double>(in)));
  p.fc2_w = Parameter<T>(name + ".fc2.weight", Tensor<T>(Shape{hidden, k}));
  p.fc2_b = Parameter<T>(name + ".fc2.bias", Tensor<T>(Shape{k}));
  return p;
}

template <typename T>
ENVars<T> bind(Tape<T>& tape, ENParams<T>& p) {
  ENVars<T> v;
  for (auto& g : p.gammas) v.gammas.push_back(tape.parameter(g));
  for (auto& b : p.betas) v.betas.push_back(tape.parameter(b));
  if (p.conv_w) v.conv_w = tape.parameter(*p.conv_w);
  v.fc1_w = tape.parameter(p.fc1_w);
  v.fc1_b = tape.parameter(p.fc1_b);
  v.fc2_w = tape.parameter(p.fc2_w);
  v.fc2_b = tape.parameter(p.fc2_b);
  return v;
}

namespace {

template <typename T>
void check_pool(const StatsBundle<T>& stats, const ENConfig& cfg) {
  if (stats.size() != cfg.pool_size()) {
    throw std::invalid_argument("EN: " + std::to_string(stats.size()) + " statistics for a pool of " +
                                std::to_string(cfg.pool_size()));
  }
  for (std::size_t k = 0; k < stats.size(); ++k) {
    if (!(stats[k].kind == cfg.pool[k])) {
      throw std::invalid_argument("EN: statistics slot " + std::to_string(k) + " holds " +
                                  stats[k].kind.name() + ", pool expects " + cfg.pool[k].name());
    }
  }
}

template <typename T>
void require_finite(const Var<T>& v, const char* stage) {
  if (!v.value().all_finite()) throw NumericError(std::string("EN ratio subnet: non-finite ") + stage);
}

}  // namespace

template <typename T>
Var<T> ratio_subnet(Var<T> x, const StatsBundle<T>& stats, const ENVars<T>& p, const ENConfig& cfg) {
  check_pool(stats, cfg);
  const ENVariant variant = cfg.variant();
  const Shape& s = x.shape();
  const std::size_t n = s[0], c = s[1];

  Var<T> pooled = global_avg_pool(x);  // [N,C]
  Var<T> head_in;
  if (variant == ENVariant::kMlp) {
    head_in = pooled;
  } else {
    const Shape nc{n, c};
    std::vector<Var<T>> slices;
    slices.reserve(stats.size());
    for (const auto& m : stats) {
      Var<T> centered = sub(pooled, expand_moment(m.mean, m.kind, nc));
      Var<T> xhat = div(centered, sqrt(add_scalar(expand_moment(m.var, m.kind, nc), cfg.eps)));
      if (p.conv_w) {
        const std::size_t groups = c / cfg.reduction;
        Var<T> z = conv2d(reshape(xhat, Shape{n, c, 1, 1}), *p.conv_w, Conv2dOptions{1, 0, groups});
        slices.push_back(reshape(z, Shape{n, groups}));
      } else {
        slices.push_back(xhat);
      }
    }
    head_in = pairwise_gram(stack_slices<T>(slices));  // [N, K*K]
  }
  require_finite(head_in, "head input");

  Var<T> hidden = add(matmul(head_in, p.fc1_w), p.fc1_b);
  hidden = (variant == ENVariant::kMlp || variant == ENVariant::kReluHead) ? relu(hidden) : tanh(hidden);
  Var<T> logits = add(matmul(hidden, p.fc2_w), p.fc2_b);
  require_finite(logits, "logits");
  return softmax_rows(logits);
}

template <typename T>
ENOutput<T> en_forward(Var<T> x, const ENVars<T>& p, const StatsBundle<T>& stats, const ENConfig& cfg,
                       const std::optional<Tensor<T>>& ratio_override) {
  check_pool(stats, cfg);
  const std::size_t k = cfg.pool_size();
  const bool single = cfg.variant() == ENVariant::kSingleAffine;
  if (p.gammas.size() != (single ? 1 : k) || p.betas.size() != p.gammas.size()) {
    throw std::invalid_argument("EN: " + std::to_string(p.gammas.size()) + " affine pairs for a pool of " +
                                std::to_string(k));
  }
  const std::size_t n = x.shape()[0];

  Var<T> ratios;
  if (ratio_override) {
    const Tensor<T>& r = *ratio_override;
    if (!(r.shape() == Shape{n, k})) {
      throw ShapeError("EN ratio override " + r.shape().str() + " must be " + Shape{n, k}.str());
    }
    for (std::size_t i = 0; i < n; ++i) {
      double total = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        const double v = r[i * k + j];
        if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("EN ratio override entry outside [0,1]");
        total += v;
      }
      if (std::abs(total - 1.0) > 1e-6) throw std::invalid_argument("EN ratio override row does not sum to 1");
    }
    ratios = x.tape().constant(r, "ratio_override");
  } else {
    ratios = ratio_subnet(x, stats, p, cfg);
  }

  Var<T> out;
  for (std::size_t j = 0; j < k; ++j) {
    Var<T> weighted = scale_samples(standardize(x, stats[j], cfg.eps), column(ratios, j));
    Var<T> term = single ? weighted : affine_transform(weighted, p.gammas[j], p.betas[j]);
    out = out.valid() ? add(out, term) : term;
  }
  if (single) out = affine_transform(out, p.gammas[0], p.betas[0]);
  return {out, ratios};
}

template <typename T>
ExemplarNorm<T>::ExemplarNorm(std::size_t channels, ENConfig cfg, std::uint64_t seed, std::string name,
                              std::size_t layer_index, double momentum)
    : channels_(channels),
      cfg_(std::move(cfg)),
      name_(std::move(name)),
      layer_index_(layer_index),
      params_(en_init<T>(channels, cfg_, seed, name_)),
      running_(RunningStats<T>::init(channels, momentum)) {}

template <typename T>
std::string ExemplarNorm<T>::kind_name() const {
  const ENVariant v = cfg_.variant();
  return v == ENVariant::kNone ? "en" : "en-" + variant_name(v);
}

template <typename T>
Var<T> ExemplarNorm<T>::forward(Var<T> x, const ForwardMode& mode, const RatioSink<T>* sink) {
  const StatsBundle<T> stats = gather_stats<T>(x, cfg_.pool, &running_, mode);
  const ENOutput<T> result = en_forward(x, bind(x.tape(), params_), stats, cfg_, override_);
  last_ratios_ = result.ratios.value();
  if (sink && *sink) (*sink)(layer_index_, last_ratios_);
  return result.out;
}

template <typename T>
std::vector<Buffer<T>> ExemplarNorm<T>::buffers() {
  for (const auto& kind : cfg_.pool) {
    if (kind.tag == NormTag::kBN) {
      return {{name_ + ".running_mean", &running_.mean}, {name_ + ".running_var", &running_.var}};
    }
  }
  return {};
}

#define EXNORM_INSTANTIATE_EN(T)                                                                    \
  template struct ENParams<T>;                                                                      \
  template ENParams<T> en_init(std::size_t, const ENConfig&, std::uint64_t, const std::string&);   \
  template ENVars<T> bind(Tape<T>&, ENParams<T>&);                                                  \
  template Var<T> ratio_subnet(Var<T>, const StatsBundle<T>&, const ENVars<T>&, const ENConfig&);   \
  template ENOutput<T> en_forward(Var<T>, const ENVars<T>&, const StatsBundle<T>&, const ENConfig&, \
                                  const std::optional<Tensor<T>>&);                                 \
  template class ExemplarNorm<T>;

EXNORM_INSTANTIATE_EN(float)
EXNORM_INSTANTIATE_EN(double)

}  // namespace exnorm
