#include "exnorm/model.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <utility>

#include "exnorm/ops.hpp"
#include "json.hpp"

namespace exnorm {

const char* const kFlopConvention =
    "1 multiply-accumulate = 1 FLOP; batch of one. Elementwise ops (ReLU, residual add, bias) cost 1 per "
    "element, max pooling k*k per output, global pooling 1 per input element. Each normalizer used at a "
    "site costs a statistics pass, a standardize pass and an affine pass (3*C*H*W); SN shares one "
    "standardize and one affine pass across its K statistics passes; EN adds its ratio subnet (pooling, "
    "K pre-standardizations, shared grouped conv, K x K correlation, two FC layers, softmax).";

const char* const kPsiNote =
    "EN sites count 2KC (affines) + C (grouped conv shared across the K slices, no bias) + Psi(K) with "
    "Psi(K) = K^2*piK + piK + piK*K + K (FC weights and biases). The published ResNet-50 delta is larger "
    "than this accounting; the gap is unexplained and absorbed by the acceptance range.";

NormSpec NormSpec::parse(const std::string& text) {
  NormSpec spec;
  if (text == "sn") {
    spec.family = NormFamily::kSwitchable;
  } else if (text == "en") {
    spec.family = NormFamily::kExemplar;
  } else {
    spec.family = NormFamily::kSingle;
    spec.single = NormalizerKind::parse(text);
  }
  return spec;
}

std::string NormSpec::name() const {
  switch (family) {
    case NormFamily::kSingle: return single.name();
    case NormFamily::kSwitchable: return "sn";
    case NormFamily::kExemplar: {
      const ENVariant v = en.variant();
      return v == ENVariant::kNone ? "en" : "en-" + variant_name(v);
    }
  }
  return "?";
}

std::size_t NormSpec::site_params(std::size_t channels) const {
  switch (family) {
    case NormFamily::kSingle: return 2 * channels;
    case NormFamily::kSwitchable: return 2 * channels + (sn_tied ? 1 : 2) * en.pool_size();
    case NormFamily::kExemplar: return en_param_count(channels, en).total;
  }
  return 0;
}

void NormSpec::validate(std::size_t channels) const {
  switch (family) {
    case NormFamily::kSingle: single.validate(channels); break;
    case NormFamily::kSwitchable:
      if (en.pool.empty()) throw std::invalid_argument("SN pool is empty");
      for (const auto& k : en.pool) k.validate(channels);
      break;
    case NormFamily::kExemplar: en.validate(channels); break;
  }
}

template <typename T>
std::unique_ptr<NormLayer<T>> make_norm(const NormSpec& spec, std::size_t channels, const std::string& name,
                                        std::uint64_t seed, std::size_t layer_index) {
  spec.validate(channels);
  switch (spec.family) {
    case NormFamily::kSingle:
      return std::make_unique<SingleNorm<T>>(spec.single, channels, name, spec.en.eps, spec.momentum);
    case NormFamily::kSwitchable:
      return std::make_unique<SwitchableNorm<T>>(channels, spec.en.pool, name, spec.sn_tied, spec.en.eps,
                                                 spec.momentum);
    case NormFamily::kExemplar:
      return std::make_unique<ExemplarNorm<T>>(channels, spec.en, seed, name, layer_index, spec.momentum);
  }
  throw std::logic_error("unknown norm family");
}

std::string layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::kConv: return "conv";
    case LayerKind::kNorm: return "norm";
    case LayerKind::kActivation: return "activation";
    case LayerKind::kMaxPool: return "pool";
    case LayerKind::kGlobalPool: return "pool";
    case LayerKind::kFc: return "fc";
    case LayerKind::kAdd: return "residual-add";
  }
  return "?";
}

std::size_t ArchSpec::norm_sites() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.kind == LayerKind::kNorm;
  return n;
}

std::size_t ArchSpec::classes() const {
  for (auto it = layers.rbegin(); it != layers.rend(); ++it)
    if (it->kind == LayerKind::kFc) return it->out_channels;
  throw std::invalid_argument("architecture " + name + " has no FC classifier");
}

namespace {

std::vector<int> resolve_inputs(const LayerSpec& l, std::size_t index) {
  if (!l.inputs.empty()) {
    for (int i : l.inputs)
      if (i < -1 || i >= static_cast<int>(index))
        throw std::invalid_argument("layer " + l.name + " reads from invalid index " + std::to_string(i));
    return l.inputs;
  }
  return {static_cast<int>(index) - 1};
}

std::size_t conv_out(std::size_t in, std::size_t k, std::size_t s, std::size_t p, const std::string& name) {
  if (in + 2 * p < k) throw std::invalid_argument("layer " + name + ": kernel larger than padded input");
  return (in + 2 * p - k) / s + 1;
}

std::string shape_str(const FeatureShape& s) {
  return "[" + std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" + std::to_string(s.width) + "]";
}

}  // namespace

std::vector<FeatureShape> infer_shapes(const ArchSpec& arch, std::size_t height, std::size_t width) {
  const FeatureShape input{arch.in_channels, height, width};
  std::vector<FeatureShape> out;
  out.reserve(arch.layers.size());
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const LayerSpec& l = arch.layers[i];
    const auto inputs = resolve_inputs(l, i);
    const auto at = [&](int j) { return j < 0 ? input : out[static_cast<std::size_t>(j)]; };
    const FeatureShape in = at(inputs[0]);
    const bool spatial = in.height > 0;
    FeatureShape s = in;
    switch (l.kind) {
      case LayerKind::kConv:
        if (!spatial || in.channels != l.in_channels || l.groups == 0 || l.in_channels % l.groups ||
            l.out_channels % l.groups) {
          throw std::invalid_argument("layer " + l.name + " expects " + std::to_string(l.in_channels) +
                                      " channels (groups " + std::to_string(l.groups) + "), got " + shape_str(in));
        }
        s = {l.out_channels, conv_out(in.height, l.kernel, l.stride, l.padding, l.name),
             conv_out(in.width, l.kernel, l.stride, l.padding, l.name)};
        break;
      case LayerKind::kMaxPool:
        if (!spatial) throw std::invalid_argument("layer " + l.name + " needs a spatial input");
        s.height = conv_out(in.height, l.kernel, l.stride, l.padding, l.name);
        s.width = conv_out(in.width, l.kernel, l.stride, l.padding, l.name);
        break;
      case LayerKind::kNorm:
        if (!spatial) throw std::invalid_argument("layer " + l.name + " needs a spatial input");
        break;
      case LayerKind::kActivation: break;
      case LayerKind::kGlobalPool: s = {in.channels, 0, 0}; break;
      case LayerKind::kFc:
        if (spatial || in.channels != l.in_channels) {
          throw std::invalid_argument("layer " + l.name + " expects a pooled " + std::to_string(l.in_channels) +
                                      "-vector, got " + shape_str(in));
        }
        s = {l.out_channels, 0, 0};
        break;
      case LayerKind::kAdd: {
        if (inputs.size() != 2) throw std::invalid_argument("layer " + l.name + " adds exactly two inputs");
        const FeatureShape other = at(inputs[1]);
        if (other.channels != in.channels || other.height != in.height || other.width != in.width) {
          throw std::invalid_argument("layer " + l.name + " adds " + shape_str(in) + " and " + shape_str(other));
        }
        break;
      }
    }
    out.push_back(s);
  }
  return out;
}

namespace {

struct SpecBuilder {
  ArchSpec arch;

  int last() const { return static_cast<int>(arch.layers.size()) - 1; }

  int conv(const std::string& name, std::size_t cin, std::size_t cout, std::size_t k, std::size_t s,
           std::size_t p, std::vector<int> inputs = {}, bool bias = false) {
    LayerSpec l;
    l.name = name;
    l.kind = LayerKind::kConv;
    l.in_channels = cin;
    l.out_channels = cout;
    l.kernel = k;
    l.stride = s;
    l.padding = p;
    l.bias = bias;
    l.inputs = std::move(inputs);
    arch.layers.push_back(l);
    return last();
  }

  int simple(const std::string& name, LayerKind kind, std::vector<int> inputs = {}) {
    LayerSpec l;
    l.name = name;
    l.kind = kind;
    l.inputs = std::move(inputs);
    arch.layers.push_back(l);
    return last();
  }

  int max_pool(const std::string& name, std::size_t k, std::size_t s, std::size_t p) {
    LayerSpec l;
    l.name = name;
    l.kind = LayerKind::kMaxPool;
    l.kernel = k;
    l.stride = s;
    l.padding = p;
    arch.layers.push_back(l);
    return last();
  }

  int fc(const std::string& name, std::size_t in, std::size_t out) {
    LayerSpec l;
    l.name = name;
    l.kind = LayerKind::kFc;
    l.in_channels = in;
    l.out_channels = out;
    l.bias = true;
    arch.layers.push_back(l);
    return last();
  }
};

}  // namespace

ArchSpec micro_cnn_spec(const MicroConfig& cfg) {
  const auto [c1, c2, c3] = cfg.channels;
  SpecBuilder b;
  b.arch.name = "micro";
  b.arch.in_channels = cfg.in_channels;
  b.arch.height = b.arch.width = cfg.image_size;
  b.conv("block1.conv", cfg.in_channels, c1, 3, 1, 1);
  b.simple("block1.norm", LayerKind::kNorm);
  b.simple("block1.relu", LayerKind::kActivation);
  b.conv("block2.conv", c1, c2, 3, 2, 1);
  b.simple("block2.norm", LayerKind::kNorm);
  const int skip = b.simple("block2.relu", LayerKind::kActivation);
  b.conv("block3.conv", c2, c3, 3, 2, 1);
  const int main = b.simple("block3.norm", LayerKind::kNorm);
  const int proj = b.conv("block3.shortcut", c2, c3, 1, 2, 0, {skip});
  b.simple("block3.add", LayerKind::kAdd, {main, proj});
  b.simple("block3.relu", LayerKind::kActivation);
  b.simple("pool", LayerKind::kGlobalPool);
  b.fc("fc", c3, cfg.classes);
  return b.arch;
}

ArchSpec resnet50_spec() {
  SpecBuilder b;
  b.arch.name = "resnet50";
  b.arch.in_channels = 3;
  b.arch.height = b.arch.width = 224;
  b.conv("conv1", 3, 64, 7, 2, 3);
  b.simple("bn1", LayerKind::kNorm);
  b.simple("relu", LayerKind::kActivation);
  b.max_pool("maxpool", 3, 2, 1);

  struct Stage {
    std::size_t blocks, width, stride;
  };
  const Stage stages[] = {{3, 64, 1}, {4, 128, 2}, {6, 256, 2}, {3, 512, 2}};
  std::size_t in = 64;
  for (std::size_t si = 0; si < 4; ++si) {
    const Stage& st = stages[si];
    const std::size_t out = st.width * 4;
    for (std::size_t bi = 0; bi < st.blocks; ++bi) {
      const std::string p = "layer" + std::to_string(si + 1) + "." + std::to_string(bi) + ".";
      const std::size_t stride = bi == 0 ? st.stride : 1;
      const int block_in = b.last();
      b.conv(p + "conv1", in, st.width, 1, 1, 0);
      b.simple(p + "bn1", LayerKind::kNorm);
      b.simple(p + "relu1", LayerKind::kActivation);
      b.conv(p + "conv2", st.width, st.width, 3, stride, 1);
      b.simple(p + "bn2", LayerKind::kNorm);
      b.simple(p + "relu2", LayerKind::kActivation);
      b.conv(p + "conv3", st.width, out, 1, 1, 0);
      const int main = b.simple(p + "bn3", LayerKind::kNorm);
      int shortcut = block_in;
      if (bi == 0) {
        b.conv(p + "downsample.conv", in, out, 1, stride, 0, {block_in});
        shortcut = b.simple(p + "downsample.bn", LayerKind::kNorm);
      }
      b.simple(p + "add", LayerKind::kAdd, {main, shortcut});
      b.simple(p + "relu3", LayerKind::kActivation);
      in = out;
    }
  }
  b.simple("avgpool", LayerKind::kGlobalPool);
  b.fc("fc", 2048, 1000);
  return b.arch;
}

std::size_t norm_site_flops(const NormSpec& norm, std::size_t channels, std::size_t height, std::size_t width) {
  const std::size_t c = channels;
  const std::size_t e = c * height * width;
  switch (norm.family) {
    case NormFamily::kSingle: return 3 * e;
    case NormFamily::kSwitchable: {
      const std::size_t k = norm.en.pool_size();
      // K statistics passes, one standardize, one affine, plus mixing K moments per channel.
      return k * e + 2 * e + 4 * k * c;
    }
    case NormFamily::kExemplar: {
      const ENConfig& cfg = norm.en;
      const std::size_t k = cfg.pool_size();
      const std::size_t hidden = cfg.hidden_width(c);
      std::size_t subnet = e;  // spatial pooling
      if (cfg.variant() == ENVariant::kMlp) {
        subnet += c * hidden + 2 * hidden;  // FC + bias + ReLU
      } else {
        subnet += 2 * k * c;  // pre-standardize each slice
        const std::size_t d = cfg.uses_conv() ? c / cfg.reduction : c;
        if (cfg.uses_conv()) subnet += k * c;  // shared grouped conv, r MACs per output
        subnet += k * k * d;                   // correlation
        subnet += k * k * hidden + 2 * hidden; // FC1 + bias + activation
      }
      subnet += hidden * k + k;  // FC2 + bias
      subnet += 3 * k;           // softmax
      return 3 * k * e + subnet;
    }
  }
  return 0;
}

ArchReport count_flops(const ArchSpec& arch, const NormSpec& norm, std::size_t height, std::size_t width) {
  const auto shapes = infer_shapes(arch, height, width);
  ArchReport report;
  report.arch = arch.name;
  report.norm = norm.name();
  report.height = height;
  report.width = width;
  const FeatureShape input{arch.in_channels, height, width};
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const LayerSpec& l = arch.layers[i];
    const auto inputs = resolve_inputs(l, i);
    const FeatureShape in = inputs[0] < 0 ? input : shapes[static_cast<std::size_t>(inputs[0])];
    const FeatureShape& out = shapes[i];
    const std::size_t out_elems = out.channels * std::max<std::size_t>(out.height, 1) * std::max<std::size_t>(out.width, 1);
    LayerReport row{l.name, layer_kind_name(l.kind), out.channels, 0, 0};
    switch (l.kind) {
      case LayerKind::kConv: {
        const std::size_t per_out = l.in_channels / l.groups * l.kernel * l.kernel;
        row.params = l.out_channels * per_out + (l.bias ? l.out_channels : 0);
        row.flops = out_elems * per_out + (l.bias ? out_elems : 0);
        break;
      }
      case LayerKind::kNorm:
        norm.validate(in.channels);
        row.params = norm.site_params(in.channels);
        row.flops = norm_site_flops(norm, in.channels, in.height, in.width);
        break;
      case LayerKind::kActivation:
      case LayerKind::kAdd: row.flops = out_elems; break;
      case LayerKind::kMaxPool: row.flops = out_elems * l.kernel * l.kernel; break;
      case LayerKind::kGlobalPool: row.flops = in.channels * in.height * in.width; break;
      case LayerKind::kFc:
        row.params = l.in_channels * l.out_channels + (l.bias ? l.out_channels : 0);
        row.flops = row.params;
        break;
    }
    report.total_params += row.params;
    report.total_flops += row.flops;
    report.layers.push_back(std::move(row));
  }
  return report;
}

ArchReport count_params(const ArchSpec& arch, const NormSpec& norm) {
  return count_flops(arch, norm, arch.height, arch.width);
}

std::string ArchReport::to_json() const {
  nlohmann::ordered_json j;
  j["arch"] = arch;
  j["norm"] = norm;
  j["input"] = {height, width};
  j["layers"] = nlohmann::ordered_json::array();
  for (const auto& l : layers) {
    j["layers"].push_back({{"name", l.name}, {"kind", l.kind}, {"C", l.channels}, {"params", l.params},
                           {"flops", l.flops}});
  }
  j["totals"] = {{"params", total_params}, {"flops", total_flops}, {"gflops", double(total_flops) / 1e9},
                 {"mparams", double(total_params) / 1e6}};
  j["flop_convention"] = kFlopConvention;
  j["psi_note"] = kPsiNote;
  return j.dump(2);
}

template <typename T>
Network<T>::Network(ArchSpec arch, NormSpec norm, std::uint64_t seed) : arch_(std::move(arch)), norm_(std::move(norm)) {
  const auto shapes = infer_shapes(arch_, arch_.height, arch_.width);
  std::mt19937_64 rng(seed);
  slots_.resize(arch_.layers.size());
  std::size_t site = 0;
  for (std::size_t i = 0; i < arch_.layers.size(); ++i) {
    const LayerSpec& l = arch_.layers[i];
    Slot& slot = slots_[i];
    switch (l.kind) {
      case LayerKind::kConv: {
        const std::size_t fan_in = l.in_channels / l.groups * l.kernel * l.kernel;
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / double(fan_in)));
        Tensor<T> w(Shape{l.out_channels, l.in_channels / l.groups, l.kernel, l.kernel});
        for (T& v : w.data()) v = static_cast<T>(dist(rng));
        slot.weight.emplace(l.name + ".weight", std::move(w));
        if (l.bias) slot.bias.emplace(l.name + ".bias", Tensor<T>(Shape{l.out_channels}));
        break;
      }
      case LayerKind::kFc: {
        const double bound = 1.0 / std::sqrt(double(l.in_channels));
        std::uniform_real_distribution<double> dist(-bound, bound);
        Tensor<T> w(Shape{l.in_channels, l.out_channels});
        for (T& v : w.data()) v = static_cast<T>(dist(rng));
        slot.weight.emplace(l.name + ".weight", std::move(w));
        if (l.bias) {
          Tensor<T> b(Shape{l.out_channels});
          for (T& v : b.data()) v = static_cast<T>(dist(rng));
          slot.bias.emplace(l.name + ".bias", std::move(b));
        }
        break;
      }
      case LayerKind::kNorm: {
        const std::size_t channels = shapes[i].channels;
        slot.norm = make_norm<T>(norm_, channels, l.name, rng(), site++);
        break;
      }
      case LayerKind::kMaxPool:
        throw std::invalid_argument("layer " + l.name + ": max pooling is supported for counting only");
      default: break;
    }
  }
}

template <typename T>
Var<T> Network<T>::forward(Var<T> x, const ForwardMode& mode, const RatioSink<T>* sink) {
  if (x.shape().rank() != 4 || x.shape()[1] != arch_.in_channels) {
    throw ShapeError(arch_.name + " expects [N x " + std::to_string(arch_.in_channels) + " x H x W] input, got " +
                     x.shape().str());
  }
  std::vector<Var<T>> outs;
  outs.reserve(arch_.layers.size());
  for (std::size_t i = 0; i < arch_.layers.size(); ++i) {
    const LayerSpec& l = arch_.layers[i];
    Slot& slot = slots_[i];
    const auto inputs = resolve_inputs(l, i);
    const auto at = [&](int j) { return j < 0 ? x : outs[static_cast<std::size_t>(j)]; };
    Var<T> in = at(inputs[0]);
    Var<T> y;
    Tape<T>& tape = x.tape();
    switch (l.kind) {
      case LayerKind::kConv:
        y = conv2d(in, tape.parameter(*slot.weight), Conv2dOptions{l.stride, l.padding, l.groups});
        if (slot.bias) y = add(y, tape.parameter(*slot.bias));
        break;
      case LayerKind::kNorm: y = slot.norm->forward(in, mode, sink); break;
      case LayerKind::kActivation: y = relu(in); break;
      case LayerKind::kAdd: y = add(in, at(inputs[1])); break;
      case LayerKind::kGlobalPool: y = global_avg_pool(in); break;
      case LayerKind::kFc:
        y = matmul(in, tape.parameter(*slot.weight));
        if (slot.bias) y = add(y, tape.parameter(*slot.bias));
        break;
      case LayerKind::kMaxPool: throw std::logic_error("max pooling is count-only");
    }
    outs.push_back(y);
  }
  return outs.back();
}

template <typename T>
std::vector<Parameter<T>*> Network<T>::parameters() {
  std::vector<Parameter<T>*> out;
  for (Slot& s : slots_) {
    if (s.weight) out.push_back(&*s.weight);
    if (s.bias) out.push_back(&*s.bias);
    if (s.norm)
      for (Parameter<T>* p : s.norm->parameters()) out.push_back(p);
  }
  return out;
}

template <typename T>
std::vector<Buffer<T>> Network<T>::buffers() {
  std::vector<Buffer<T>> out;
  for (Slot& s : slots_)
    if (s.norm)
      for (const Buffer<T>& b : s.norm->buffers()) out.push_back(b);
  return out;
}

template <typename T>
std::vector<NormLayer<T>*> Network<T>::norm_layers() {
  std::vector<NormLayer<T>*> out;
  for (Slot& s : slots_)
    if (s.norm) out.push_back(s.norm.get());
  return out;
}

template <typename T>
std::vector<ExemplarNorm<T>*> Network<T>::exemplar_layers() {
  std::vector<ExemplarNorm<T>*> out;
  for (Slot& s : slots_)
    if (auto* en = dynamic_cast<ExemplarNorm<T>*>(s.norm.get())) out.push_back(en);
  return out;
}

template std::unique_ptr<NormLayer<float>> make_norm(const NormSpec&, std::size_t, const std::string&,
                                                     std::uint64_t, std::size_t);
template std::unique_ptr<NormLayer<double>> make_norm(const NormSpec&, std::size_t, const std::string&,
                                                      std::uint64_t, std::size_t);
template class Network<float>;
template class Network<double>;

}  // namespace exnorm
