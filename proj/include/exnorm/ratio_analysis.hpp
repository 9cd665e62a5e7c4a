#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "exnorm/trainer.hpp"

namespace exnorm {

struct RatioRecord {
  std::size_t epoch = 0;
  std::size_t layer = 0;
  std::size_t sample = 0;
  int class_id = -1;
  std::vector<double> lambda;
};

enum class Grouping { kLayer, kClassLayer, kDatasetLayer, kEpochLayer };

std::string grouping_name(Grouping g);  // "layer", "class", "dataset", "epoch"
Grouping parse_grouping(const std::string& text);

struct RatioAggregate {
  Grouping grouping = Grouping::kLayer;
  std::size_t layer = 0;
  long long key = -1;   // class id or epoch; -1 when the grouping has none
  std::string dataset;  // set for dataset x layer
  std::vector<double> mean;
  std::size_t count = 0;
};

/// Ratios of every EN layer for every sample of `data` (or the listed
/// samples), one record per (layer, sample). Read-only: the forward pass is
/// the model's own. Throws std::invalid_argument for a model without EN.
template <typename T>
std::vector<RatioRecord> record_ratios(Network<T>& model, const Dataset& data, std::size_t epoch,
                                       const ForwardMode& mode = ForwardMode::eval(),
                                       std::span<const std::size_t> samples = {}, std::size_t batch = 100);

/// Arithmetic mean of lambda per group, ordered by (key, layer).
std::vector<RatioAggregate> aggregate(std::span<const RatioRecord> records, Grouping grouping,
                                      const std::string& dataset = "");

/// Layer-major concatenation of one sample's records over layers 0..layers-1.
/// Throws on a missing or repeated layer, or records of different samples.
std::vector<double> concat_vectors(std::span<const RatioRecord> records, std::size_t layers);

/// concat_vectors for every sample present (one epoch), keyed by sample id.
std::map<std::size_t, std::vector<double>> concat_all(std::span<const RatioRecord> records, std::size_t layers);

/// Header epoch,layer,sample,class,lambda_1..lambda_K; values at 12 significant digits.
void write_records_csv(const std::string& path, std::span<const RatioRecord> records);
std::vector<RatioRecord> read_records_csv(const std::string& path);
std::string aggregates_json(std::span<const RatioAggregate> aggregates);
void write_aggregates_json(const std::string& path, std::span<const RatioAggregate> aggregates);
/// Header sample,v_1..v_{LK}.
void write_vectors_csv(const std::string& path, const std::map<std::size_t, std::vector<double>>& vectors);

}  // namespace exnorm
