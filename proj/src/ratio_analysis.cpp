#include "exnorm/ratio_analysis.hpp"

#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "json.hpp"

namespace exnorm {

std::string grouping_name(Grouping g) {
  switch (g) {
    case Grouping::kLayer: return "layer";
    case Grouping::kClassLayer: return "class";
    case Grouping::kDatasetLayer: return "dataset";
    case Grouping::kEpochLayer: return "epoch";
  }
  return "?";
}

Grouping parse_grouping(const std::string& text) {
  if (text == "layer") return Grouping::kLayer;
  if (text == "class") return Grouping::kClassLayer;
  if (text == "dataset") return Grouping::kDatasetLayer;
  if (text == "epoch") return Grouping::kEpochLayer;
  throw std::invalid_argument("unknown grouping '" + text + "' (expected layer, class, dataset, epoch)");
}

template <typename T>
std::vector<RatioRecord> record_ratios(Network<T>& model, const Dataset& data, std::size_t epoch,
                                       const ForwardMode& mode, std::span<const std::size_t> samples,
                                       std::size_t batch) {
  if (model.exemplar_layers().empty()) {
    throw std::invalid_argument("record_ratios: model (" + model.norm().name() + ") has no EN layers");
  }
  if (batch == 0) throw std::invalid_argument("record_ratios: batch must be positive");
  std::vector<std::size_t> ids(samples.begin(), samples.end());
  if (ids.empty()) {
    ids.resize(data.size());
    std::iota(ids.begin(), ids.end(), 0);
  }
  std::vector<RatioRecord> out;
  for (std::size_t start = 0; start < ids.size(); start += batch) {
    const std::span<const std::size_t> chunk(ids.data() + start, std::min(batch, ids.size() - start));
    const RatioSink<T> sink = [&](std::size_t layer, const Tensor<T>& ratios) {
      const std::size_t k = ratios.dim(1);
      for (std::size_t i = 0; i < chunk.size(); ++i) {
        RatioRecord r;
        r.epoch = epoch;
        r.layer = layer;
        r.sample = chunk[i];
        r.class_id = data.labels.at(chunk[i]);
        r.lambda.resize(k);
        for (std::size_t j = 0; j < k; ++j) r.lambda[j] = double(ratios[i * k + j]);
        out.push_back(std::move(r));
      }
    };
    Tape<T> tape;
    model.forward(tape.constant(data.gather<T>(chunk)), mode, &sink);
  }
  return out;
}

std::vector<RatioAggregate> aggregate(std::span<const RatioRecord> records, Grouping grouping,
                                      const std::string& dataset) {
  if (records.empty()) throw std::invalid_argument("aggregate: no records");
  std::map<std::pair<long long, std::size_t>, RatioAggregate> groups;
  for (const auto& r : records) {
    long long key = -1;
    if (grouping == Grouping::kClassLayer) key = r.class_id;
    if (grouping == Grouping::kEpochLayer) key = static_cast<long long>(r.epoch);
    auto [it, fresh] = groups.try_emplace({key, r.layer});
    RatioAggregate& g = it->second;
    if (fresh) {
      g.grouping = grouping;
      g.layer = r.layer;
      g.key = key;
      if (grouping == Grouping::kDatasetLayer) g.dataset = dataset;
      g.mean.assign(r.lambda.size(), 0.0);
    }
    if (g.mean.size() != r.lambda.size()) throw std::invalid_argument("aggregate: records disagree on K");
    for (std::size_t j = 0; j < r.lambda.size(); ++j) g.mean[j] += r.lambda[j];
    ++g.count;
  }
  std::vector<RatioAggregate> out;
  for (auto& [key, g] : groups) {
    for (double& v : g.mean) v /= double(g.count);
    out.push_back(std::move(g));
  }
  return out;
}

std::vector<double> concat_vectors(std::span<const RatioRecord> records, std::size_t layers) {
  if (records.empty()) throw std::invalid_argument("concat_vectors: no records");
  const std::size_t sample = records.front().sample;
  std::vector<const RatioRecord*> by_layer(layers, nullptr);
  for (const auto& r : records) {
    if (r.sample != sample) throw std::invalid_argument("concat_vectors: records mix samples");
    if (r.layer >= layers) {
      throw std::invalid_argument("concat_vectors: layer " + std::to_string(r.layer) + " outside [0," +
                                  std::to_string(layers) + ")");
    }
    if (by_layer[r.layer]) {
      throw std::invalid_argument("concat_vectors: duplicate layer " + std::to_string(r.layer) + " for sample " +
                                  std::to_string(sample));
    }
    by_layer[r.layer] = &r;
  }
  std::vector<double> out;
  for (std::size_t l = 0; l < layers; ++l) {
    if (!by_layer[l]) {
      throw std::invalid_argument("concat_vectors: missing layer " + std::to_string(l) + " for sample " +
                                  std::to_string(sample));
    }
    out.insert(out.end(), by_layer[l]->lambda.begin(), by_layer[l]->lambda.end());
  }
  return out;
}

std::map<std::size_t, std::vector<double>> concat_all(std::span<const RatioRecord> records, std::size_t layers) {
  std::map<std::size_t, std::vector<RatioRecord>> per_sample;
  for (const auto& r : records) per_sample[r.sample].push_back(r);
  std::map<std::size_t, std::vector<double>> out;
  for (const auto& [sample, recs] : per_sample) out[sample] = concat_vectors(recs, layers);
  return out;
}

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  return f;
}

void finish(std::ofstream& f, const std::string& path) {
  f.flush();
  if (!f) throw std::runtime_error("write failed for " + path);
}

std::string g12(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

}  // namespace

void write_records_csv(const std::string& path, std::span<const RatioRecord> records) {
  const std::size_t k = records.empty() ? 0 : records.front().lambda.size();
  auto f = open_out(path);
  f << "epoch,layer,sample,class";
  for (std::size_t j = 1; j <= k; ++j) f << ",lambda_" << j;
  f << '\n';
  for (const auto& r : records) {
    if (r.lambda.size() != k) throw std::invalid_argument("write_records_csv: records disagree on K");
    f << r.epoch << ',' << r.layer << ',' << r.sample << ',' << r.class_id;
    for (double v : r.lambda) f << ',' << g12(v);
    f << '\n';
  }
  finish(f, path);
}

std::vector<RatioRecord> read_records_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(f, line) || line.rfind("epoch,layer,sample,class", 0) != 0) {
    throw std::runtime_error(path + ": not a ratio records file");
  }
  std::vector<RatioRecord> out;
  std::size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (cells.size() < 5) throw std::runtime_error(path + ":" + std::to_string(lineno) + ": too few columns");
    try {
      RatioRecord r;
      r.epoch = std::stoull(cells[0]);
      r.layer = std::stoull(cells[1]);
      r.sample = std::stoull(cells[2]);
      r.class_id = std::stoi(cells[3]);
      for (std::size_t j = 4; j < cells.size(); ++j) r.lambda.push_back(std::stod(cells[j]));
      out.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": malformed number");
    }
  }
  return out;
}

std::string aggregates_json(std::span<const RatioAggregate> aggregates) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& a : aggregates) {
    nlohmann::ordered_json j;
    j["grouping"] = grouping_name(a.grouping);
    j["layer"] = a.layer;
    if (a.grouping == Grouping::kClassLayer) j["class"] = a.key;
    if (a.grouping == Grouping::kEpochLayer) j["epoch"] = a.key;
    if (a.grouping == Grouping::kDatasetLayer) j["dataset"] = a.dataset;
    j["mean"] = a.mean;
    j["count"] = a.count;
    arr.push_back(std::move(j));
  }
  return arr.dump(2);
}

void write_aggregates_json(const std::string& path, std::span<const RatioAggregate> aggregates) {
  auto f = open_out(path);
  f << aggregates_json(aggregates) << '\n';
  finish(f, path);
}

void write_vectors_csv(const std::string& path, const std::map<std::size_t, std::vector<double>>& vectors) {
  const std::size_t width = vectors.empty() ? 0 : vectors.begin()->second.size();
  auto f = open_out(path);
  f << "sample";
  for (std::size_t j = 1; j <= width; ++j) f << ",v_" << j;
  f << '\n';
  for (const auto& [sample, v] : vectors) {
    f << sample;
    for (double x : v) f << ',' << g12(x);
    f << '\n';
  }
  finish(f, path);
}

template std::vector<RatioRecord> record_ratios(Network<float>&, const Dataset&, std::size_t, const ForwardMode&,
                                                std::span<const std::size_t>, std::size_t);
template std::vector<RatioRecord> record_ratios(Network<double>&, const Dataset&, std::size_t, const ForwardMode&,
                                                std::span<const std::size_t>, std::size_t);

}  // namespace exnorm
