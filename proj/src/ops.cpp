#include "exnorm/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace exnorm {

namespace {

enum class Broadcast { kSame, kScalar, kChannel };

Broadcast classify(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return Broadcast::kSame;
  if (b.numel() == 1) return Broadcast::kScalar;
  if (b.rank() == 1 && a.rank() >= 2 && b[0] == a[1]) return Broadcast::kChannel;
  throw ShapeError(std::string(op) + ": cannot combine " + a.str() + " with " + b.str() +
                   " (only equal shapes, scalars and per-channel vectors broadcast)");
}

// Maps a flat index of the left operand to the matching index of the right one.
struct BroadcastIndex {
  Broadcast mode;
  std::size_t inner = 1;
  std::size_t channels = 1;

  BroadcastIndex(Broadcast m, const Shape& a) : mode(m) {
    if (mode == Broadcast::kChannel) {
      channels = a[1];
      for (std::size_t i = 2; i < a.rank(); ++i) inner *= a[i];
    }
  }
  std::size_t operator()(std::size_t i) const {
    switch (mode) {
      case Broadcast::kSame: return i;
      case Broadcast::kScalar: return 0;
      case Broadcast::kChannel: return (i / inner) % channels;
    }
    return 0;
  }
};

// f(a, b) -> value; da(a, b) and db(a, b) are the partial derivatives.
template <typename T, typename F, typename DA, typename DB>
Var<T> binary(Var<T> a, Var<T> b, const char* name, F f, DA da, DB db) {
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  const BroadcastIndex bi(classify(av.shape(), bv.shape(), name), av.shape());
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = f(av[i], bv[bi(i)]);
  return a.tape().record(
      std::move(out), {a, b},
      [&av, &bv, bi, da, db](const Tensor<T>& g, typename Tape<T>::GradRefs grads) {
        if (grads[0]) {
          Tensor<T>& ga = *grads[0];
          for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * da(av[i], bv[bi(i)]);
        }
        if (grads[1]) {
          Tensor<T>& gb = *grads[1];
          for (std::size_t i = 0; i < g.numel(); ++i) gb[bi(i)] += g[i] * db(av[i], bv[bi(i)]);
        }
      },
      name);
}

template <typename T, typename F, typename D>
Var<T> unary(Var<T> a, const char* name, F f, D d) {
  const Tensor<T>& av = a.value();
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = f(av[i]);
  // d receives (input, output) so saturating functions can reuse the output.
  return a.tape().record(
      std::move(out), {a},
      [&av, d, &tape = a.tape(), id = a.tape().size()](const Tensor<T>& g,
                                                        typename Tape<T>::GradRefs grads) {
        const Tensor<T>& ov = tape.value(id);
        Tensor<T>& ga = *grads[0];
        for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * d(av[i], ov[i]);
      },
      name);
}

void require_rank(const Shape& s, std::size_t rank, const char* op) {
  if (s.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     s.str());
  }
}

}  // namespace

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  return binary(
      a, b, "add", [](T x, T y) { return x + y; }, [](T, T) { return T{1}; },
      [](T, T) { return T{1}; });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  return binary(
      a, b, "sub", [](T x, T y) { return x - y; }, [](T, T) { return T{1}; },
      [](T, T) { return T{-1}; });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  return binary(
      a, b, "mul", [](T x, T y) { return x * y; }, [](T, T y) { return y; },
      [](T x, T) { return x; });
}

template <typename T>
Var<T> div(Var<T> a, Var<T> b) {
  return binary(
      a, b, "div", [](T x, T y) { return x / y; }, [](T, T y) { return T{1} / y; },
      [](T x, T y) { return -x / (y * y); });
}

template <typename T>
Var<T> add_scalar(Var<T> a, double s) {
  const T c = static_cast<T>(s);
  return unary(
      a, "add_scalar", [c](T x) { return x + c; }, [](T, T) { return T{1}; });
}

template <typename T>
Var<T> mul_scalar(Var<T> a, double s) {
  const T c = static_cast<T>(s);
  return unary(
      a, "mul_scalar", [c](T x) { return x * c; }, [c](T, T) { return c; });
}

template <typename T>
Var<T> sqrt(Var<T> a) {
  return unary(
      a, "sqrt", [](T x) { return std::sqrt(x); }, [](T, T y) { return T{0.5} / y; });
}

template <typename T>
Var<T> tanh(Var<T> a) {
  return unary(
      a, "tanh", [](T x) { return std::tanh(x); }, [](T, T y) { return T{1} - y * y; });
}

template <typename T>
Var<T> relu(Var<T> a) {
  return unary(
      a, "relu", [](T x) { return x > T{0} ? x : T{0}; },
      [](T x, T) { return x > T{0} ? T{1} : T{0}; });
}

template <typename T>
Var<T> sum(Var<T> a) {
  const Tensor<T>& av = a.value();
  double acc = 0.0;
  for (T v : av.data()) acc += v;
  return a.tape().record(
      Tensor<T>::scalar(static_cast<T>(acc)), {a},
      [](const Tensor<T>& g, typename Tape<T>::GradRefs grads) {
        for (T& v : grads[0]->data()) v += g[0];
      },
      "sum");
}

template <typename T>
Var<T> mean(Var<T> a) {
  return mul_scalar(sum(a), 1.0 / static_cast<double>(a.value().numel()));
}

template <typename T>
Var<T> reshape(Var<T> a, Shape shape) {
  return a.tape().record(
      a.value().reshaped(shape), {a},
      [](const Tensor<T>& g, typename Tape<T>::GradRefs grads) {
        Tensor<T>& ga = *grads[0];
        for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
      },
      "reshape");
}

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  require_rank(av.shape(), 2, "matmul");
  require_rank(bv.shape(), 2, "matmul");
  const std::size_t m = av.dim(0), p = av.dim(1), q = bv.dim(1);
  if (bv.dim(0) != p) {
    throw ShapeError("matmul: inner extents disagree, " + av.shape().str() + " x " +
                     bv.shape().str());
  }
  Tensor<T> out(Shape{m, q});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < p; ++k) {
      const T aik = av[i * p + k];
      for (std::size_t j = 0; j < q; ++j) out[i * q + j] += aik * bv[k * q + j];
    }
  }
  return a.tape().record(
      std::move(out), {a, b},
      [&av, &bv, m, p, q](const Tensor<T>& g, typename Tape<T>::GradRefs grads) {
        if (grads[0]) {  // g · bᵀ
          Tensor<T>& ga = *grads[0];
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t k = 0; k < p; ++k) {
              T acc{0};
              for (std::size_t j = 0; j < q; ++j) acc += g[i * q + j] * bv[k * q + j];
              ga[i * p + k] += acc;
            }
        }
        if (grads[1]) {  // aᵀ · g
          Tensor<T>& gb = *grads[1];
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t k = 0; k < p; ++k) {
              const T aik = av[i * p + k];
              for (std::size_t j = 0; j < q; ++j) gb[k * q + j] += aik * g[i * q + j];
            }
        }
      },
      "matmul");
}

namespace {

struct ConvGeometry {
  std::size_t n, cin, h, w, cout, kh, kw, oh, ow, cin_g, cout_g;
  Conv2dOptions opt;

  // Output columns [lo, hi) whose input column ox*stride - pad + kx is in range.
  std::pair<std::size_t, std::size_t> valid_range(std::size_t k, std::size_t extent,
                                                  std::size_t out_extent) const {
    const long s = static_cast<long>(opt.stride);
    const long p = static_cast<long>(opt.padding);
    const long kk = static_cast<long>(k);
    long lo = p - kk > 0 ? (p - kk + s - 1) / s : 0;
    long hi = (static_cast<long>(extent) - 1 + p - kk);
    hi = hi < 0 ? 0 : hi / s + 1;
    hi = std::min<long>(hi, static_cast<long>(out_extent));
    if (lo > hi) lo = hi;
    return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
  }
};

ConvGeometry conv_geometry(const Shape& xs, const Shape& ws, Conv2dOptions opt) {
  require_rank(xs, 4, "conv2d input");
  require_rank(ws, 4, "conv2d weight");
  ConvGeometry g{};
  g.opt = opt;
  g.n = xs[0], g.cin = xs[1], g.h = xs[2], g.w = xs[3];
  g.cout = ws[0], g.kh = ws[2], g.kw = ws[3];
  if (opt.groups == 0 || opt.stride == 0) throw ShapeError("conv2d: stride and groups must be positive");
  if (g.cin % opt.groups != 0 || g.cout % opt.groups != 0) {
    throw ShapeError("conv2d: channels in=" + std::to_string(g.cin) + " out=" +
                     std::to_string(g.cout) + " not divisible by groups=" +
                     std::to_string(opt.groups));
  }
  g.cin_g = g.cin / opt.groups;
  g.cout_g = g.cout / opt.groups;
  if (ws[1] != g.cin_g) {
    throw ShapeError("conv2d: weight " + ws.str() + " expects " + std::to_string(ws[1]) +
                     " input channels per group, input " + xs.str() + " provides " +
                     std::to_string(g.cin_g));
  }
  if (g.kh > g.h + 2 * opt.padding || g.kw > g.w + 2 * opt.padding) {
    throw ShapeError("conv2d: kernel " + ws.str() + " larger than padded input " + xs.str());
  }
  g.oh = (g.h + 2 * opt.padding - g.kh) / opt.stride + 1;
  g.ow = (g.w + 2 * opt.padding - g.kw) / opt.stride + 1;
  return g;
}

// Visits every (input, weight, output) triple of the convolution. The callback
// receives flat indices into x, w and out for one output row segment.
template <typename F>
void for_each_tap(const ConvGeometry& g, F&& f) {
  const std::size_t s = g.opt.stride, p = g.opt.padding;
  for (std::size_t n = 0; n < g.n; ++n)
    for (std::size_t grp = 0; grp < g.opt.groups; ++grp)
      for (std::size_t ocg = 0; ocg < g.cout_g; ++ocg) {
        const std::size_t oc = grp * g.cout_g + ocg;
        const std::size_t out_base = (n * g.cout + oc) * g.oh * g.ow;
        for (std::size_t icg = 0; icg < g.cin_g; ++icg) {
          const std::size_t ic = grp * g.cin_g + icg;
          const std::size_t in_base = (n * g.cin + ic) * g.h * g.w;
          for (std::size_t ky = 0; ky < g.kh; ++ky) {
            const auto [oy0, oy1] = g.valid_range(ky, g.h, g.oh);
            for (std::size_t kx = 0; kx < g.kw; ++kx) {
              const auto [ox0, ox1] = g.valid_range(kx, g.w, g.ow);
              const std::size_t widx = ((oc * g.cin_g + icg) * g.kh + ky) * g.kw + kx;
              for (std::size_t oy = oy0; oy < oy1; ++oy) {
                const std::size_t iy = oy * s + ky - p;
                const std::size_t out_row = out_base + oy * g.ow;
                const std::size_t in_row = in_base + iy * g.w;
                f(widx, out_row, in_row, ox0, ox1, kx);
              }
            }
          }
        }
      }
}

}  // namespace

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, Conv2dOptions opt) {
  const Tensor<T>& xv = x.value();
  const Tensor<T>& wv = w.value();
  const ConvGeometry g = conv_geometry(xv.shape(), wv.shape(), opt);
  Tensor<T> out(Shape{g.n, g.cout, g.oh, g.ow});
  const std::size_t s = opt.stride, p = opt.padding;
  for_each_tap(g, [&](std::size_t widx, std::size_t out_row, std::size_t in_row, std::size_t ox0,
                      std::size_t ox1, std::size_t kx) {
    const T wk = wv[widx];
    T* o = &out[out_row];
    const T* in = &xv[in_row];
    for (std::size_t ox = ox0; ox < ox1; ++ox) o[ox] += wk * in[ox * s + kx - p];
  });
  return x.tape().record(
      std::move(out), {x, w},
      [&xv, &wv, g](const Tensor<T>& gout, typename Tape<T>::GradRefs grads) {
        Tensor<T>* gx = grads[0];
        Tensor<T>* gw = grads[1];
        const std::size_t s = g.opt.stride, p = g.opt.padding;
        for_each_tap(g, [&](std::size_t widx, std::size_t out_row, std::size_t in_row,
                            std::size_t ox0, std::size_t ox1, std::size_t kx) {
          const T* go = &gout[out_row];
          if (gx) {
            const T wk = wv[widx];
            T* gi = &(*gx)[in_row];
            for (std::size_t ox = ox0; ox < ox1; ++ox) gi[ox * s + kx - p] += wk * go[ox];
          }
          if (gw) {
            const T* in = &xv[in_row];
            T acc{0};
            for (std::size_t ox = ox0; ox < ox1; ++ox) acc += in[ox * s + kx - p] * go[ox];
            (*gw)[widx] += acc;
          }
        });
      },
      "conv2d");
}

template <typename T>
Var<T> global_avg_pool(Var<T> x) {
  const Tensor<T>& xv = x.value();
  require_rank(xv.shape(), 4, "global_avg_pool");
  const std::size_t n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  Tensor<T> out(Shape{n, c});
  for (std::size_t i = 0; i < n * c; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < hw; ++j) acc += xv[i * hw + j];
    out[i] = static_cast<T>(acc / static_cast<double>(hw));
  }
  return x.tape().record(
      std::move(out), {x},
      [n, c, hw](const Tensor<T>& g, typename Tape<T>::GradRefs grads) {
        Tensor<T>& gx = *grads[0];
        const T inv = T{1} / static_cast<T>(hw);
        for (std::size_t i = 0; i < n * c; ++i)
          for (std::size_t j = 0; j < hw; ++j) gx[i * hw + j] += g[i] * inv;
      },
      "global_avg_pool");
}

template <typename T>
Var<T> softmax_rows(Var<T> x) {
  const Tensor<T>& xv = x.value();
  require_rank(xv.shape(), 2, "softmax_rows");
  const std::size_t n = xv.dim(0), k = xv.dim(1);
  Tensor<T> out(xv.shape());
  for (std::size_t r = 0; r < n; ++r) {
    const T* row = &xv[r * k];
    T mx = row[0];
    for (std::size_t j = 0; j < k; ++j) {
      if (std::isnan(row[j])) throw NumericError("softmax_rows: NaN logit in row " + std::to_string(r));
      mx = std::max(mx, row[j]);
    }
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) total += std::exp(static_cast<double>(row[j] - mx));
    for (std::size_t j = 0; j < k; ++j)
      out[r * k + j] = static_cast<T>(std::exp(static_cast<double>(row[j] - mx)) / total);
  }
  const std::size_t id = x.tape().size();
  return x.tape().record(
      std::move(out), {x},
      [&tape = x.tape(), id, n, k](const Tensor<T>& g, typename Tape<T>::GradRefs grads) {
        const Tensor<T>& y = tape.value(id);
        Tensor<T>& gx = *grads[0];
        for (std::size_t r = 0; r < n; ++r) {
          T dot{0};
          for (std::size_t j = 0; j < k; ++j) dot += g[r * k + j] * y[r * k + j];
          for (std::size_t j = 0; j < k; ++j) gx[r * k + j] += y[r * k + j] * (g[r * k + j] - dot);
        }
      },
      "softmax_rows");
}

template <typename T>
Var<T> column(Var<T> x, std::size_t k) {
  const Tensor<T>& xv = x.value();
  require_rank(xv.shape(), 2, "column");
  const std::size_t n = xv.dim(0), cols = xv.dim(1);
  if (k >= cols) throw ShapeError("column: index " + std::to_string(k) + " out of range for " + xv.shape().str());
  Tensor<T> out(Shape{n});
  for (std::size_t r = 0; r < n; ++r) out[r] = xv[r * cols + k];
  return x.tape().record(
      std::move(out), {x},
      [n, cols, k](const Tensor<T>& g, typename Tape<T>::GradRefs grads) {
        for (std::size_t r = 0; r < n; ++r) (*grads[0])[r * cols + k] += g[r];
      },
      "column");
}

template <typename T>
Var<T> element(Var<T> x, std::size_t k) {
  const Tensor<T>& xv = x.value();
  if (k >= xv.numel()) throw ShapeError("element: index " + std::to_string(k) + " out of range for " + xv.shape().str());
  return x.tape().record(
      Tensor<T>::scalar(xv[k]), {x},
      [k](const Tensor<T>& g, typename Tape<T>::GradRefs grads) { (*grads[0])[k] += g[0]; },
      "element");
}

template <typename T>
Var<T> scale_samples(Var<T> x, Var<T> w) {
  const Tensor<T>& xv = x.value();
  const Tensor<T>& wv = w.value();
  if (wv.rank() != 1 || wv.dim(0) != xv.dim(0)) {
    throw ShapeError("scale_samples: weights " + wv.shape().str() + " do not match samples of " +
                     xv.shape().str());
  }
  const std::size_t n = xv.dim(0), per = xv.numel() / n;
  Tensor<T> out(xv.shape());
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t i = 0; i < per; ++i) out[s * per + i] = xv[s * per + i] * wv[s];
  return x.tape().record(
      std::move(out), {x, w},
      [&xv, &wv, n, per](const Tensor<T>& g, typename Tape<T>::GradRefs grads) {
        for (std::size_t s = 0; s < n; ++s) {
          if (grads[0])
            for (std::size_t i = 0; i < per; ++i) (*grads[0])[s * per + i] += g[s * per + i] * wv[s];
          if (grads[1]) {
            T acc{0};
            for (std::size_t i = 0; i < per; ++i) acc += g[s * per + i] * xv[s * per + i];
            (*grads[1])[s] += acc;
          }
        }
      },
      "scale_samples");
}

template <typename T>
Var<T> stack_slices(std::span<const Var<T>> slices) {
  if (slices.empty()) throw ShapeError("stack_slices: no slices");
  const Shape first = slices[0].shape();
  require_rank(first, 2, "stack_slices");
  const std::size_t n = first[0], d = first[1], k = slices.size();
  for (const auto& s : slices) {
    if (!(s.shape() == first)) {
      throw ShapeError("stack_slices: slice " + s.shape().str() + " differs from " + first.str());
    }
  }
  Tensor<T> out(Shape{n, k, d});
  for (std::size_t j = 0; j < k; ++j) {
    const Tensor<T>& sv = slices[j].value();
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t i = 0; i < d; ++i) out[(r * k + j) * d + i] = sv[r * d + i];
  }
  return slices[0].tape().record(
      std::move(out), std::vector<Var<T>>(slices.begin(), slices.end()),
      [n, k, d](const Tensor<T>& g, typename Tape<T>::GradRefs grads) {
        for (std::size_t j = 0; j < k; ++j) {
          if (!grads[j]) continue;
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t i = 0; i < d; ++i) (*grads[j])[r * d + i] += g[(r * k + j) * d + i];
        }
      },
      "stack_slices");
}

template <typename T>
Var<T> pairwise_gram(Var<T> z) {
  const Tensor<T>& zv = z.value();
  require_rank(zv.shape(), 3, "pairwise_gram");
  const std::size_t n = zv.dim(0), k = zv.dim(1), d = zv.dim(2);
  Tensor<T> out(Shape{n, k * k});
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = 0; b < k; ++b) {
        T acc{0};
        for (std::size_t i = 0; i < d; ++i) acc += zv[(r * k + a) * d + i] * zv[(r * k + b) * d + i];
        out[r * k * k + a * k + b] = acc;
      }
  return z.tape().record(
      std::move(out), {z},
      [&zv, n, k, d](const Tensor<T>& g, typename Tape<T>::GradRefs grads) {
        Tensor<T>& gz = *grads[0];
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t a = 0; a < k; ++a)
            for (std::size_t b = 0; b < k; ++b) {
              const T gab = g[r * k * k + a * k + b];
              for (std::size_t i = 0; i < d; ++i) {
                gz[(r * k + a) * d + i] += gab * zv[(r * k + b) * d + i];
                gz[(r * k + b) * d + i] += gab * zv[(r * k + a) * d + i];
              }
            }
      },
      "pairwise_gram");
}

template <typename T>
Var<T> softmax_cross_entropy(Var<T> logits, std::span<const int> labels) {
  const Tensor<T>& lv = logits.value();
  require_rank(lv.shape(), 2, "softmax_cross_entropy");
  const std::size_t n = lv.dim(0), k = lv.dim(1);
  if (labels.size() != n) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                     " labels for logits " + lv.shape().str());
  }
  Tensor<T> probs(lv.shape());
  double loss = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= k) {
      throw std::out_of_range("softmax_cross_entropy: label " + std::to_string(labels[r]) +
                              " outside [0," + std::to_string(k) + ")");
    }
    double mx = lv[r * k];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, static_cast<double>(lv[r * k + j]));
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) total += std::exp(lv[r * k + j] - mx);
    for (std::size_t j = 0; j < k; ++j) probs[r * k + j] = static_cast<T>(std::exp(lv[r * k + j] - mx) / total);
    loss += std::log(total) + mx - lv[r * k + labels[r]];
  }
  std::vector<int> y(labels.begin(), labels.end());
  return logits.tape().record(
      Tensor<T>::scalar(static_cast<T>(loss / static_cast<double>(n))), {logits},
      [probs = std::move(probs), y = std::move(y), n, k](const Tensor<T>& g,
                                                         typename Tape<T>::GradRefs grads) {
        Tensor<T>& gl = *grads[0];
        const T scale = g[0] / static_cast<T>(n);
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t j = 0; j < k; ++j) {
            const T target = static_cast<std::size_t>(y[r]) == j ? T{1} : T{0};
            gl[r * k + j] += scale * (probs[r * k + j] - target);
          }
      },
      "softmax_cross_entropy");
}

#define EXNORM_INSTANTIATE_OPS(T)                                                   \
  template Var<T> add(Var<T>, Var<T>);                                              \
  template Var<T> sub(Var<T>, Var<T>);                                              \
  template Var<T> mul(Var<T>, Var<T>);                                              \
  template Var<T> div(Var<T>, Var<T>);                                              \
  template Var<T> add_scalar(Var<T>, double);                                       \
  template Var<T> mul_scalar(Var<T>, double);                                       \
  template Var<T> sqrt(Var<T>);                                                     \
  template Var<T> tanh(Var<T>);                                                     \
  template Var<T> relu(Var<T>);                                                     \
  template Var<T> sum(Var<T>);                                                      \
  template Var<T> mean(Var<T>);                                                     \
  template Var<T> reshape(Var<T>, Shape);                                           \
  template Var<T> matmul(Var<T>, Var<T>);                                           \
  template Var<T> conv2d(Var<T>, Var<T>, Conv2dOptions);                            \
  template Var<T> global_avg_pool(Var<T>);                                          \
  template Var<T> softmax_rows(Var<T>);                                             \
  template Var<T> column(Var<T>, std::size_t);                                      \
  template Var<T> element(Var<T>, std::size_t);                                     \
  template Var<T> scale_samples(Var<T>, Var<T>);                                    \
  template Var<T> stack_slices(std::span<const Var<T>>);                            \
  template Var<T> pairwise_gram(Var<T>);                                            \
  template Var<T> softmax_cross_entropy(Var<T>, std::span<const int>);

EXNORM_INSTANTIATE_OPS(float)
EXNORM_INSTANTIATE_OPS(double)

}  // namespace exnorm
