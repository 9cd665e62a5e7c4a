#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "exnorm/exemplar_norm.hpp"
#include "exnorm/layer.hpp"
#include "exnorm/normalizers.hpp"
#include "exnorm/switchable_norm.hpp"

namespace exnorm {

enum class NormFamily { kSingle, kSwitchable, kExemplar };

/// What to place at every normalization site of a network.
struct NormSpec {
  NormFamily family = NormFamily::kSingle;
  NormalizerKind single = NormalizerKind::bn();
  ENConfig en;  // EN settings; en.pool is also the SN pool
  bool sn_tied = false;
  double momentum = 0.1;

  /// "bn", "in", "ln", "gn", "gn:G", "sn" or "en".
  static NormSpec parse(const std::string& text);
  /// "bn", "gn:2", "sn", "en", "en-a", ...
  std::string name() const;
  /// Learnable scalars of one site with C channels.
  std::size_t site_params(std::size_t channels) const;
  void validate(std::size_t channels) const;
};

template <typename T>
std::unique_ptr<NormLayer<T>> make_norm(const NormSpec& spec, std::size_t channels, const std::string& name,
                                        std::uint64_t seed, std::size_t layer_index);

enum class LayerKind { kConv, kNorm, kActivation, kMaxPool, kGlobalPool, kFc, kAdd };

std::string layer_kind_name(LayerKind kind);

struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::kConv;
  std::size_t in_channels = 0;  // conv / fc
  std::size_t out_channels = 0;
  std::size_t kernel = 1;  // conv / max pool
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;
  bool bias = false;
  /// Producers of this layer's input(s); -1 is the network input. Empty means
  /// the previous layer.
  std::vector<int> inputs;
};

struct ArchSpec {
  std::string name;
  std::size_t in_channels = 3;
  std::size_t height = 224;  // declared input resolution
  std::size_t width = 224;
  std::vector<LayerSpec> layers;

  std::size_t norm_sites() const;
  /// Output classes of the final FC layer.
  std::size_t classes() const;
};

struct FeatureShape {
  std::size_t channels = 0;
  std::size_t height = 0;  // 0 after global pooling
  std::size_t width = 0;
};

/// Output shape of every layer for an input of the given resolution.
/// Throws std::invalid_argument on incompatible consecutive shapes.
std::vector<FeatureShape> infer_shapes(const ArchSpec& arch, std::size_t height, std::size_t width);

struct MicroConfig {
  std::size_t in_channels = 3;
  std::size_t image_size = 16;
  std::array<std::size_t, 3> channels{16, 32, 64};
  std::size_t classes = 3;
};

/// conv-norm-relu x3 (strides 1, 2, 2) with a projected residual around the
/// third block, global pooling and a linear classifier.
ArchSpec micro_cnn_spec(const MicroConfig& cfg);

/// Bottleneck ResNet-50 (stride on the 3x3 conv), 224x224 input, 1000 classes.
ArchSpec resnet50_spec();

struct LayerReport {
  std::string name;
  std::string kind;
  std::size_t channels = 0;
  std::size_t params = 0;
  std::size_t flops = 0;
};

struct ArchReport {
  std::string arch;
  std::string norm;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<LayerReport> layers;
  std::size_t total_params = 0;
  std::size_t total_flops = 0;

  std::string to_json() const;
};

/// Per-layer parameter and FLOP table at the architecture's declared input.
ArchReport count_params(const ArchSpec& arch, const NormSpec& norm);
/// Same table at an explicit input resolution.
ArchReport count_flops(const ArchSpec& arch, const NormSpec& norm, std::size_t height, std::size_t width);

/// FLOPs of one normalization site on a C x H x W map (batch of one).
std::size_t norm_site_flops(const NormSpec& norm, std::size_t channels, std::size_t height, std::size_t width);

extern const char* const kFlopConvention;
extern const char* const kPsiNote;

/// Trainable network executing an ArchSpec. Max pooling is count-only.
template <typename T>
class Network {
 public:
  Network(ArchSpec arch, NormSpec norm, std::uint64_t seed);
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  /// x: [N, C, H, W] -> logits [N, classes].
  Var<T> forward(Var<T> x, const ForwardMode& mode, const RatioSink<T>* sink = nullptr);

  std::vector<Parameter<T>*> parameters();
  std::vector<Buffer<T>> buffers();
  std::vector<NormLayer<T>*> norm_layers();
  std::vector<ExemplarNorm<T>*> exemplar_layers();

  const ArchSpec& arch() const { return arch_; }
  const NormSpec& norm() const { return norm_; }
  std::size_t classes() const { return arch_.classes(); }

 private:
  struct Slot {
    std::optional<Parameter<T>> weight;
    std::optional<Parameter<T>> bias;
    std::unique_ptr<NormLayer<T>> norm;
  };

  ArchSpec arch_;
  NormSpec norm_;
  std::vector<Slot> slots_;
};

extern template class Network<float>;
extern template class Network<double>;

template <typename T>
Network<T> build_micro_cnn(const NormSpec& norm, const MicroConfig& cfg, std::uint64_t seed) {
  return Network<T>(micro_cnn_spec(cfg), norm, seed);
}

}  // namespace exnorm
