#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "exnorm/autodiff.hpp"

namespace exnorm {

struct ForwardMode {
  bool training = true;
  /// Only meaningful in training: fold batch BN moments into running stats.
  bool update_running = true;

  static ForwardMode train() { return {true, true}; }
  static ForwardMode train_frozen() { return {true, false}; }
  static ForwardMode eval() { return {false, false}; }
};

/// Receives each EN layer's ratio matrix (N x K) as it is computed.
template <typename T>
using RatioSink = std::function<void(std::size_t layer, const Tensor<T>& ratios)>;

/// Non-learnable persistent state (running statistics), saved in checkpoints.
template <typename T>
struct Buffer {
  std::string name;
  Tensor<T>* value;
};

/// A normalization site: BN/IN/LN/GN, SN or EN.
template <typename T>
class NormLayer {
 public:
  virtual ~NormLayer() = default;

  virtual Var<T> forward(Var<T> x, const ForwardMode& mode, const RatioSink<T>* sink = nullptr) = 0;
  virtual std::vector<Parameter<T>*> parameters() = 0;
  virtual std::vector<Buffer<T>> buffers() { return {}; }
  virtual std::size_t channels() const = 0;
  virtual std::string kind_name() const = 0;
};

}  // namespace exnorm
