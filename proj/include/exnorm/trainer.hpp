#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "exnorm/model.hpp"

namespace exnorm {

/// Labeled images, kept at 64-bit and cast per batch.
struct Dataset {
  Tensor<double> images;  // [N, C, H, W]
  std::vector<int> labels;
  std::size_t classes = 0;

  std::size_t size() const { return labels.size(); }
  template <typename T>
  Tensor<T> gather(std::span<const std::size_t> indices) const;
  std::vector<int> gather_labels(std::span<const std::size_t> indices) const;
};

/// Standardizes every channel to zero mean and unit variance over the whole
/// set. Returns the (mean, std) used per channel.
std::vector<std::pair<double, double>> standardize_channels(Tensor<double>& images);

struct SyntheticConfig {
  std::size_t classes = 3;
  std::size_t per_class = 100;
  std::size_t image_size = 16;
  std::uint64_t seed = 0;
  double noise = 0.6;
};

/// Class-conditional images: an oriented grating with a class-specific angle
/// and random phase, plus a Gaussian blob at a random position in channel
/// (class mod 3), plus pixel noise. Samples are interleaved by class.
Dataset gen_synthetic(const SyntheticConfig& cfg);

/// CIFAR-10 binary batches: 3073-byte records (label, then 32x32 R, G, B
/// planes). `path` is one file or a directory holding data_batch_*.bin /
/// test_batch.bin. `subset` > 0 keeps the first that many records.
Dataset load_cifar10(const std::string& path, std::size_t subset = 0);

/// Parses CIFAR-10 records from memory; pixels scaled to [0,1], not standardized.
Dataset parse_cifar10(std::span<const unsigned char> bytes, const std::string& origin);

/// v <- momentum * v + g (+ weight_decay * p); p <- p - lr * v. Gradients are
/// read from Parameter::grad. Any non-finite gradient aborts the whole step
/// before an update, naming the parameter.
template <typename T>
void sgd_step(std::span<Parameter<T>* const> params, std::vector<Tensor<T>>& velocity, double lr,
              double momentum, double weight_decay = 0.0);

struct LrSchedule {
  double initial = 0.1;
  std::vector<std::size_t> decay_epochs;  // 0-based epochs at which lr is multiplied by factor
  double factor = 0.1;
  std::size_t warmup_epochs = 0;  // linear ramp from 0 to `initial`

  double at(std::size_t epoch, std::size_t step_in_epoch, std::size_t steps_per_epoch) const;
};

struct TrainConfig {
  LrSchedule lr;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::size_t batch = 32;
  std::size_t epochs = 30;
  std::uint64_t seed = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 0 = before the first update
  std::string split;      // "train" or "val"
  double loss = 0.0;
  double top1 = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> records;
  std::vector<double> step_lrs;
  std::size_t steps = 0;

  double initial_loss() const;
  /// Last record of a split; throws if absent.
  const EpochRecord& last(const std::string& split) const;
  /// CSV with header epoch,split,loss,top1.
  std::string to_csv() const;
  void write_csv(const std::string& path) const;
};

struct EvalResult {
  double loss = 0.0;
  double top1 = 0.0;
};

/// Inference-mode loss and top-1 accuracy (ties resolve to the lowest class).
template <typename T>
EvalResult evaluate(Network<T>& model, const Dataset& data, std::size_t batch = 100);

/// Called after each epoch (and with epoch 0 before training).
template <typename T>
using EpochCallback = std::function<void(std::size_t epoch, Network<T>& model)>;

/// Minibatch SGD with a seeded shuffle per epoch. Batches smaller than two
/// samples are dropped. Epoch 0 records the loss of a training-mode pass with
/// frozen running statistics. Throws NumericError on a non-finite loss with
/// the step index.
template <typename T>
TrainHistory train(Network<T>& model, const Dataset& data, const TrainConfig& cfg, const Dataset* val = nullptr,
                   const EpochCallback<T>& on_epoch = nullptr);

}  // namespace exnorm
