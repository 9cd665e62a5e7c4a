#include "exnorm/normalizers.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

#include "exnorm/ops.hpp"

namespace exnorm {

NormalizerKind NormalizerKind::parse(const std::string& text) {
  if (text == "bn") return bn();
  if (text == "in") return in();
  if (text == "ln") return ln();
  if (text == "gn") return gn(2);
  if (text.rfind("gn:", 0) == 0) {
    const long g = std::stol(text.substr(3));
    if (g <= 0) throw std::invalid_argument("group count must be positive: " + text);
    return gn(static_cast<std::size_t>(g));
  }
  throw std::invalid_argument("unknown normalizer '" + text + "' (expected bn, in, ln, gn[:G])");
}

std::string NormalizerKind::name() const {
  switch (tag) {
    case NormTag::kBN: return "bn";
    case NormTag::kIN: return "in";
    case NormTag::kLN: return "ln";
    case NormTag::kGN: return "gn:" + std::to_string(groups);
  }
  return "?";
}

std::string NormalizerKind::reduced_axes() const {
  switch (tag) {
    case NormTag::kBN: return "N,H,W";
    case NormTag::kIN: return "H,W";
    case NormTag::kLN: return "C,H,W";
    case NormTag::kGN: return "C/g,H,W";
  }
  return "?";
}

void NormalizerKind::validate(std::size_t channels) const {
  if (tag == NormTag::kGN && (groups == 0 || channels % groups != 0)) {
    throw ShapeError("GN: " + std::to_string(channels) + " channels not divisible by " +
                     std::to_string(groups) + " groups");
  }
}

Shape NormalizerKind::moment_shape(std::size_t n, std::size_t c) const {
  switch (tag) {
    case NormTag::kBN: return Shape{c};
    case NormTag::kIN: return Shape{n, c};
    case NormTag::kLN: return Shape{n};
    case NormTag::kGN: return Shape{n, groups};
  }
  return Shape{1};
}

std::size_t NormalizerKind::moment_index(std::size_t n, std::size_t c, std::size_t channels) const {
  switch (tag) {
    case NormTag::kBN: return c;
    case NormTag::kIN: return n * channels + c;
    case NormTag::kLN: return n;
    case NormTag::kGN: return n * groups + c / (channels / groups);
  }
  return 0;
}

template <typename T>
Tensor<T> MomentPair<T>::std() const {
  Tensor<T> out(var.value().shape());
  const auto& v = var.value();
  for (std::size_t i = 0; i < v.numel(); ++i) out[i] = std::sqrt(std::max(v[i], T{0}));
  return out;
}

namespace {

struct MomentLayout {
  std::size_t n, c, hw, count, moments;
  std::vector<std::size_t> plane_index;  // moment index of each (n, c) plane
};

MomentLayout layout_for(const Shape& s, NormalizerKind kind) {
  if (s.rank() != 4) throw ShapeError("moments need an N x C x H x W input, got " + s.str());
  kind.validate(s[1]);
  MomentLayout l{s[0], s[1], s[2] * s[3], 0, 0, {}};
  l.moments = kind.moment_shape(l.n, l.c).numel();
  l.count = s.numel() / l.moments;
  l.plane_index.resize(l.n * l.c);
  for (std::size_t n = 0; n < l.n; ++n)
    for (std::size_t c = 0; c < l.c; ++c) l.plane_index[n * l.c + c] = kind.moment_index(n, c, l.c);
  return l;
}

}  // namespace

template <typename T>
MomentPair<T> compute_moments(Var<T> x, NormalizerKind kind) {
  const Tensor<T>& xv = x.value();
  auto l = std::make_shared<MomentLayout>(layout_for(xv.shape(), kind));
  const Shape mshape = kind.moment_shape(l->n, l->c);

  // Two passes with double accumulators regardless of T.
  auto mu = std::make_shared<std::vector<double>>(l->moments, 0.0);
  std::vector<double> sq(l->moments, 0.0);
  for (std::size_t p = 0; p < l->n * l->c; ++p) {
    double acc = 0.0;
    for (std::size_t i = 0; i < l->hw; ++i) acc += xv[p * l->hw + i];
    (*mu)[l->plane_index[p]] += acc;
  }
  for (double& m : *mu) m /= static_cast<double>(l->count);
  for (std::size_t p = 0; p < l->n * l->c; ++p) {
    const double m = (*mu)[l->plane_index[p]];
    double acc = 0.0;
    for (std::size_t i = 0; i < l->hw; ++i) {
      const double d = xv[p * l->hw + i] - m;
      acc += d * d;
    }
    sq[l->plane_index[p]] += acc;
  }

  Tensor<T> mean_t(mshape), var_t(mshape);
  for (std::size_t i = 0; i < l->moments; ++i) {
    mean_t[i] = static_cast<T>((*mu)[i]);
    var_t[i] = static_cast<T>(sq[i] / static_cast<double>(l->count));
  }

  Tape<T>& tape = x.tape();
  Var<T> mean_v = tape.record(
      std::move(mean_t), {x},
      [l](const Tensor<T>& g, typename Tape<T>::GradRefs grads) {
        Tensor<T>& gx = *grads[0];
        const T inv = T{1} / static_cast<T>(l->count);
        for (std::size_t p = 0; p < l->n * l->c; ++p) {
          const T gp = g[l->plane_index[p]] * inv;
          for (std::size_t i = 0; i < l->hw; ++i) gx[p * l->hw + i] += gp;
        }
      },
      kind.name() + ".mean");
  Var<T> var_v = tape.record(
      std::move(var_t), {x},
      [l, mu, &xv](const Tensor<T>& g, typename Tape<T>::GradRefs grads) {
        Tensor<T>& gx = *grads[0];
        const double scale = 2.0 / static_cast<double>(l->count);
        for (std::size_t p = 0; p < l->n * l->c; ++p) {
          const std::size_t mi = l->plane_index[p];
          const double gp = g[mi] * scale;
          const double m = (*mu)[mi];
          for (std::size_t i = 0; i < l->hw; ++i)
            gx[p * l->hw + i] += static_cast<T>(gp * (xv[p * l->hw + i] - m));
        }
      },
      kind.name() + ".var");
  return {kind, mean_v, var_v};
}

template <typename T>
Var<T> expand_moment(Var<T> moment, NormalizerKind kind, const Shape& target) {
  if (target.rank() != 2 && target.rank() != 4) {
    throw ShapeError("expand_moment: target must be [N,C] or [N,C,H,W], got " + target.str());
  }
  const std::size_t n = target[0], c = target[1];
  kind.validate(c);
  const Shape expected = kind.moment_shape(n, c);
  if (!(moment.shape() == expected)) {
    throw ShapeError("expand_moment: " + kind.name() + " moments " + moment.shape().str() +
                     " do not fit target " + target.str() + " (expected " + expected.str() + ")");
  }
  const std::size_t inner = target.numel() / (n * c);
  std::vector<std::size_t> plane(n * c);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t ch = 0; ch < c; ++ch) plane[s * c + ch] = kind.moment_index(s, ch, c);

  const Tensor<T>& mv = moment.value();
  Tensor<T> out(target);
  for (std::size_t p = 0; p < n * c; ++p)
    for (std::size_t i = 0; i < inner; ++i) out[p * inner + i] = mv[plane[p]];
  return moment.tape().record(
      std::move(out), {moment},
      [plane = std::move(plane), inner](const Tensor<T>& g, typename Tape<T>::GradRefs grads) {
        Tensor<T>& gm = *grads[0];
        for (std::size_t p = 0; p < plane.size(); ++p) {
          T acc{0};
          for (std::size_t i = 0; i < inner; ++i) acc += g[p * inner + i];
          gm[plane[p]] += acc;
        }
      },
      "expand." + kind.name());
}

template <typename T>
Var<T> standardize(Var<T> x, const MomentPair<T>& m, double eps) {
  const Shape& s = x.shape();
  Var<T> centered = sub(x, expand_moment(m.mean, m.kind, s));
  Var<T> denom = sqrt(add_scalar(expand_moment(m.var, m.kind, s), eps));
  return div(centered, denom);
}

template <typename T>
Var<T> affine_transform(Var<T> xhat, Var<T> gamma, Var<T> beta) {
  const Shape& s = xhat.shape();
  if (s.rank() < 2) throw ShapeError("affine_transform: input needs a channel axis, got " + s.str());
  const std::size_t c = s[1];
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c}) {
    throw ShapeError("affine_transform: gamma " + gamma.shape().str() + " / beta " +
                     beta.shape().str() + " must have length C=" + std::to_string(c));
  }
  return add(mul(xhat, gamma), beta);
}

template <typename T>
RunningStats<T> RunningStats<T>::init(std::size_t channels, double momentum) {
  if (!(momentum > 0.0 && momentum < 1.0)) {
    throw std::invalid_argument("running-stat momentum must lie in (0,1)");
  }
  return {Tensor<T>(Shape{channels}, T{0}), Tensor<T>(Shape{channels}, T{1}), momentum};
}

template <typename T>
MomentPair<T> RunningStats<T>::as_moments(Tape<T>& tape) const {
  return {NormalizerKind::bn(), tape.constant(mean, "running.mean"), tape.constant(var, "running.var")};
}

template <typename T>
RunningStats<T> update_running(const RunningStats<T>& rs, const MomentPair<T>& batch) {
  if (batch.kind.tag != NormTag::kBN) {
    throw std::invalid_argument("update_running: expected BN moments, got " + batch.kind.name());
  }
  const Tensor<T>& bm = batch.mean.value();
  const Tensor<T>& bv = batch.var.value();
  if (!(bm.shape() == rs.mean.shape())) {
    throw ShapeError("update_running: batch moments " + bm.shape().str() + " vs running " +
                     rs.mean.shape().str());
  }
  RunningStats<T> out = rs;
  const T m = static_cast<T>(rs.momentum);
  for (std::size_t i = 0; i < bm.numel(); ++i) {
    out.mean[i] = (T{1} - m) * rs.mean[i] + m * bm[i];
    out.var[i] = (T{1} - m) * rs.var[i] + m * bv[i];
  }
  return out;
}

template <typename T>
StatsBundle<T> gather_stats(Var<T> x, std::span<const NormalizerKind> pool, RunningStats<T>* running,
                            const ForwardMode& mode) {
  StatsBundle<T> bundle;
  bundle.reserve(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (pool[i] == pool[j]) throw std::invalid_argument("normalizer pool repeats " + pool[i].name());
    }
    const NormalizerKind kind = pool[i];
    if (kind.tag == NormTag::kBN && !mode.training) {
      if (!running) throw std::logic_error("BN inference needs running statistics");
      bundle.push_back(running->as_moments(x.tape()));
      continue;
    }
    MomentPair<T> m = compute_moments(x, kind);
    if (kind.tag == NormTag::kBN && mode.update_running && running) {
      *running = update_running(*running, m);
    }
    bundle.push_back(m);
  }
  return bundle;
}

template <typename T>
SingleNorm<T>::SingleNorm(NormalizerKind kind, std::size_t channels, std::string name, double eps,
                          double momentum)
    : kind_(kind),
      channels_(channels),
      name_(name),
      eps_(eps),
      gamma_(name + ".gamma", Tensor<T>(Shape{channels}, T{1})),
      beta_(name + ".beta", Tensor<T>(Shape{channels}, T{0})),
      running_(RunningStats<T>::init(channels, momentum)) {
  kind_.validate(channels);
}

template <typename T>
Var<T> SingleNorm<T>::forward(Var<T> x, const ForwardMode& mode, const RatioSink<T>*) {
  const NormalizerKind pool[] = {kind_};
  const StatsBundle<T> stats = gather_stats<T>(x, pool, &running_, mode);
  Tape<T>& tape = x.tape();
  return affine_transform(standardize(x, stats[0], eps_), tape.parameter(gamma_), tape.parameter(beta_));
}

template <typename T>
std::vector<Buffer<T>> SingleNorm<T>::buffers() {
  if (kind_.tag != NormTag::kBN) return {};
  return {{name_ + ".running_mean", &running_.mean}, {name_ + ".running_var", &running_.var}};
}

#define EXNORM_INSTANTIATE_NORM(T)                                                          \
  template struct MomentPair<T>;                                                            \
  template struct RunningStats<T>;                                                          \
  template MomentPair<T> compute_moments(Var<T>, NormalizerKind);                           \
  template Var<T> expand_moment(Var<T>, NormalizerKind, const Shape&);                      \
  template Var<T> standardize(Var<T>, const MomentPair<T>&, double);                        \
  template Var<T> affine_transform(Var<T>, Var<T>, Var<T>);                                 \
  template RunningStats<T> update_running(const RunningStats<T>&, const MomentPair<T>&);   \
  template StatsBundle<T> gather_stats(Var<T>, std::span<const NormalizerKind>,            \
                                       RunningStats<T>*, const ForwardMode&);               \
  template class SingleNorm<T>;

EXNORM_INSTANTIATE_NORM(float)
EXNORM_INSTANTIATE_NORM(double)

}  // namespace exnorm
