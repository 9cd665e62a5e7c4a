#include "exnorm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "exnorm/ops.hpp"

namespace exnorm {

template <typename T>
Tensor<T> Dataset::gather(std::span<const std::size_t> indices) const {
  const Shape& s = images.shape();
  const std::size_t per = images.numel() / s[0];
  Tensor<T> out(Shape{indices.size(), s[1], s[2], s[3]});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t src = indices[i];
    if (src >= s[0]) throw std::out_of_range("dataset index " + std::to_string(src) + " out of range");
    for (std::size_t j = 0; j < per; ++j) out[i * per + j] = static_cast<T>(images[src * per + j]);
  }
  return out;
}

std::vector<int> Dataset::gather_labels(std::span<const std::size_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(labels.at(i));
  return out;
}

template Tensor<float> Dataset::gather(std::span<const std::size_t>) const;
template Tensor<double> Dataset::gather(std::span<const std::size_t>) const;

std::vector<std::pair<double, double>> standardize_channels(Tensor<double>& images) {
  const Shape& s = images.shape();
  if (s.rank() != 4) throw ShapeError("standardize_channels expects [N x C x H x W], got " + s.str());
  const std::size_t n = s[0], c = s[1], hw = s[2] * s[3];
  std::vector<std::pair<double, double>> stats;
  for (std::size_t ch = 0; ch < c; ++ch) {
    double mean = 0.0;
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t i = 0; i < hw; ++i) mean += images[(b * c + ch) * hw + i];
    mean /= double(n * hw);
    double var = 0.0;
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t i = 0; i < hw; ++i) {
        const double d = images[(b * c + ch) * hw + i] - mean;
        var += d * d;
      }
    var /= double(n * hw);
    const double sd = var > 0.0 ? std::sqrt(var) : 1.0;
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t i = 0; i < hw; ++i) {
        double& v = images[(b * c + ch) * hw + i];
        v = (v - mean) / sd;
      }
    stats.emplace_back(mean, sd);
  }
  return stats;
}

Dataset gen_synthetic(const SyntheticConfig& cfg) {
  if (cfg.classes < 2) throw std::invalid_argument("synthetic data needs at least 2 classes");
  if (cfg.per_class == 0 || cfg.image_size < 4) throw std::invalid_argument("synthetic data: empty configuration");
  const std::size_t n = cfg.classes * cfg.per_class, s = cfg.image_size;
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> pos(0.2 * double(s), 0.8 * double(s));
  std::normal_distribution<double> noise(0.0, cfg.noise);

  Dataset d;
  d.classes = cfg.classes;
  d.images = Tensor<double>(Shape{n, 3, s, s});
  d.labels.resize(n);
  const double freq = 2.0 * std::numbers::pi * 2.0 / double(s);  // two cycles across the image
  for (std::size_t b = 0; b < n; ++b) {
    const std::size_t cls = b % cfg.classes;
    d.labels[b] = static_cast<int>(cls);
    const double angle = std::numbers::pi * double(cls) / double(cfg.classes);
    const double ca = std::cos(angle), sa = std::sin(angle);
    const double ph = phase(rng);
    const double by = pos(rng), bx = pos(rng);
    const std::size_t blob_channel = cls % 3;
    for (std::size_t ch = 0; ch < 3; ++ch)
      for (std::size_t i = 0; i < s; ++i)
        for (std::size_t j = 0; j < s; ++j) {
          double v = std::sin(freq * (double(i) * ca + double(j) * sa) + ph);
          if (ch == blob_channel) {
            const double dy = double(i) - by, dx = double(j) - bx;
            v += 1.5 * std::exp(-(dy * dy + dx * dx) / 8.0);
          }
          d.images.at(b, ch, i, j) = v + noise(rng);
        }
  }
  standardize_channels(d.images);
  return d;
}

namespace {

constexpr std::size_t kCifarRecord = 3073;
constexpr std::size_t kCifarPixels = 3072;

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

Dataset parse_cifar10(std::span<const unsigned char> bytes, const std::string& origin) {
  if (bytes.empty() || bytes.size() % kCifarRecord != 0) {
    throw std::runtime_error(origin + ": truncated CIFAR-10 file (" + std::to_string(bytes.size()) +
                             " bytes is not a positive multiple of 3073)");
  }
  const std::size_t n = bytes.size() / kCifarRecord;
  Dataset d;
  d.classes = 10;
  d.images = Tensor<double>(Shape{n, 3, 32, 32});
  d.labels.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    const unsigned char* rec = bytes.data() + r * kCifarRecord;
    if (rec[0] > 9) {
      throw std::runtime_error(origin + ": record " + std::to_string(r) + " has label byte " +
                               std::to_string(int(rec[0])) + " > 9");
    }
    d.labels[r] = rec[0];
    for (std::size_t i = 0; i < kCifarPixels; ++i) d.images[r * kCifarPixels + i] = rec[1 + i] / 255.0;
  }
  return d;
}

Dataset load_cifar10(const std::string& path, std::size_t subset) {
  namespace fs = std::filesystem;
  std::vector<fs::path> files;
  if (fs::is_directory(path)) {
    for (int i = 1; i <= 5; ++i) {
      const fs::path f = fs::path(path) / ("data_batch_" + std::to_string(i) + ".bin");
      if (fs::exists(f)) files.push_back(f);
    }
    if (files.empty() && fs::exists(fs::path(path) / "test_batch.bin")) files.push_back(fs::path(path) / "test_batch.bin");
    if (files.empty()) throw std::runtime_error(path + ": no CIFAR-10 batch files found");
  } else {
    files.push_back(path);
  }

  std::vector<unsigned char> bytes;
  for (const auto& f : files) {
    auto chunk = read_file(f);
    if (chunk.size() % kCifarRecord != 0) {
      parse_cifar10(chunk, f.string());  // throws with the file name
    }
    bytes.insert(bytes.end(), chunk.begin(), chunk.end());
    if (subset > 0 && bytes.size() >= subset * kCifarRecord) break;
  }
  if (subset > 0 && bytes.size() > subset * kCifarRecord) bytes.resize(subset * kCifarRecord);
  Dataset d = parse_cifar10(bytes, path);
  standardize_channels(d.images);
  return d;
}

template <typename T>
void sgd_step(std::span<Parameter<T>* const> params, std::vector<Tensor<T>>& velocity, double lr, double momentum,
              double weight_decay) {
  for (const Parameter<T>* p : params) {
    if (!(p->grad.shape() == p->value.shape())) {
      throw ShapeError("sgd_step: gradient " + p->grad.shape().str() + " for parameter '" + p->name + "' " +
                       p->value.shape().str());
    }
    if (!p->grad.all_finite()) throw NumericError("sgd_step: non-finite gradient for parameter '" + p->name + "'");
  }
  if (velocity.empty()) {
    for (const Parameter<T>* p : params) velocity.emplace_back(p->value.shape());
  }
  if (velocity.size() != params.size()) throw std::invalid_argument("sgd_step: velocity/parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter<T>& p = *params[i];
    Tensor<T>& v = velocity[i];
    for (std::size_t j = 0; j < p.value.numel(); ++j) {
      const double g = double(p.grad[j]) + weight_decay * double(p.value[j]);
      v[j] = static_cast<T>(momentum * double(v[j]) + g);
      p.value[j] = static_cast<T>(double(p.value[j]) - lr * double(v[j]));
    }
  }
}

template void sgd_step(std::span<Parameter<float>* const>, std::vector<Tensor<float>>&, double, double, double);
template void sgd_step(std::span<Parameter<double>* const>, std::vector<Tensor<double>>&, double, double, double);

double LrSchedule::at(std::size_t epoch, std::size_t step_in_epoch, std::size_t steps_per_epoch) const {
  if (epoch < warmup_epochs) {
    const double total = double(warmup_epochs * steps_per_epoch);
    const double i = double(epoch * steps_per_epoch + step_in_epoch);
    return initial * (i + 1.0) / total;
  }
  double lr = initial;
  for (std::size_t d : decay_epochs)
    if (epoch >= d) lr *= factor;
  return lr;
}

double TrainHistory::initial_loss() const {
  for (const auto& r : records)
    if (r.epoch == 0 && r.split == "train") return r.loss;
  throw std::logic_error("history has no initial training loss");
}

const EpochRecord& TrainHistory::last(const std::string& split) const {
  for (auto it = records.rbegin(); it != records.rend(); ++it)
    if (it->split == split) return *it;
  throw std::logic_error("history has no '" + split + "' records");
}

std::string TrainHistory::to_csv() const {
  std::ostringstream out;
  out << "epoch,split,loss,top1\n";
  out.precision(17);
  for (const auto& r : records) out << r.epoch << ',' << r.split << ',' << r.loss << ',' << r.top1 << '\n';
  return out.str();
}

void TrainHistory::write_csv(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write history to " + path);
  f << to_csv();
  if (!f) throw std::runtime_error("failed writing history to " + path);
}

namespace {

template <typename T>
std::size_t count_correct(const Tensor<T>& logits, const std::vector<int>& labels) {
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  std::size_t correct = 0;
  for (std::size_t r = 0; r < n; ++r) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j)
      if (logits[r * k + j] > logits[r * k + best]) best = j;
    correct += static_cast<int>(best) == labels[r];
  }
  return correct;
}

/// Splits [0, n) into batches of `batch`, dropping a trailing batch of one.
std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, std::size_t batch) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch) {
    const std::size_t len = std::min(batch, n - start);
    if (len >= 2) out.emplace_back(start, len);
  }
  return out;
}

}  // namespace

template <typename T>
EvalResult evaluate(Network<T>& model, const Dataset& data, std::size_t batch) {
  if (data.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
  if (batch == 0) throw std::invalid_argument("evaluate: batch must be positive");
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < idx.size(); start += batch) {
    const std::span<const std::size_t> ids(idx.data() + start, std::min(batch, idx.size() - start));
    Tape<T> tape;
    const auto labels = data.gather_labels(ids);
    auto logits = model.forward(tape.constant(data.gather<T>(ids)), ForwardMode::eval());
    auto l = softmax_cross_entropy(logits, std::span<const int>(labels));
    loss += double(l.value()[0]) * double(ids.size());
    correct += count_correct(logits.value(), labels);
  }
  return {loss / double(data.size()), double(correct) / double(data.size())};
}

template <typename T>
TrainHistory train(Network<T>& model, const Dataset& data, const TrainConfig& cfg, const Dataset* val,
                   const EpochCallback<T>& on_epoch) {
  if (!(cfg.lr.initial >= 0.0) || !std::isfinite(cfg.lr.initial)) throw std::invalid_argument("train: invalid lr");
  if (cfg.batch < 2) throw std::invalid_argument("train: batch must be at least 2");
  if (data.size() < 2) throw std::invalid_argument("train: need at least 2 samples");
  if (data.classes != model.classes()) {
    throw std::invalid_argument("train: dataset has " + std::to_string(data.classes) + " classes, model " +
                                std::to_string(model.classes()));
  }

  TrainHistory history;
  const auto params = model.parameters();
  std::vector<Tensor<T>> velocity;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  const auto ranges = batch_ranges(data.size(), cfg.batch);

  const auto record_val = [&](std::size_t epoch) {
    if (!val) return;
    const EvalResult r = evaluate(model, *val);
    history.records.push_back({epoch, "val", r.loss, r.top1});
  };

  {
    double loss = 0.0;
    std::size_t seen = 0, correct = 0;
    for (const auto& [start, len] : ranges) {
      const std::span<const std::size_t> ids(order.data() + start, len);
      Tape<T> tape;
      const auto labels = data.gather_labels(ids);
      auto logits = model.forward(tape.constant(data.gather<T>(ids)), ForwardMode::train_frozen());
      loss += double(softmax_cross_entropy(logits, std::span<const int>(labels)).value()[0]) * double(len);
      correct += count_correct(logits.value(), labels);
      seen += len;
    }
    history.records.push_back({0, "train", loss / double(seen), double(correct) / double(seen)});
    record_val(0);
    if (on_epoch) on_epoch(0, model);
  }

  std::mt19937_64 rng(cfg.seed);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t seen = 0, correct = 0;
    for (std::size_t step = 0; step < ranges.size(); ++step) {
      const auto [start, len] = ranges[step];
      const std::span<const std::size_t> ids(order.data() + start, len);
      Tape<T> tape;
      const auto labels = data.gather_labels(ids);
      auto logits = model.forward(tape.constant(data.gather<T>(ids)), ForwardMode::train());
      auto loss = softmax_cross_entropy(logits, std::span<const int>(labels));
      const double lv = double(loss.value()[0]);
      if (!std::isfinite(lv)) {
        throw NumericError("non-finite loss at step " + std::to_string(history.steps) + " (epoch " +
                           std::to_string(epoch + 1) + ")");
      }
      tape.backward(loss);
      const double lr = cfg.lr.at(epoch, step, ranges.size());
      sgd_step<T>(params, velocity, lr, cfg.momentum, cfg.weight_decay);
      history.step_lrs.push_back(lr);
      ++history.steps;
      loss_sum += lv * double(len);
      correct += count_correct(logits.value(), labels);
      seen += len;
    }
    history.records.push_back({epoch + 1, "train", loss_sum / double(seen), double(correct) / double(seen)});
    record_val(epoch + 1);
    if (on_epoch) on_epoch(epoch + 1, model);
  }
  return history;
}

template EvalResult evaluate(Network<float>&, const Dataset&, std::size_t);
template EvalResult evaluate(Network<double>&, const Dataset&, std::size_t);
template TrainHistory train(Network<float>&, const Dataset&, const TrainConfig&, const Dataset*,
                            const EpochCallback<float>&);
template TrainHistory train(Network<double>&, const Dataset&, const TrainConfig&, const Dataset*,
                            const EpochCallback<double>&);

}  // namespace exnorm
