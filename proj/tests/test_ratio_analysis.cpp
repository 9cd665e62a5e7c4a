#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "exnorm/ratio_analysis.hpp"
#include "json.hpp"
#include "test_util.hpp"

using namespace exnorm;
namespace fs = std::filesystem;

namespace {

MicroConfig tiny_micro() {
  MicroConfig m;
  m.channels = {8, 8, 16};
  m.image_size = 8;
  return m;
}

NormSpec tiny_en() {
  NormSpec s = NormSpec::parse("en");
  s.en.reduction = 4;
  s.en.expansion = 4;
  return s;
}

Dataset tiny_data() {
  SyntheticConfig s;
  s.per_class = 4;
  s.image_size = 8;
  return gen_synthetic(s);
}

Network<double> perturbed_model() {
  auto net = build_micro_cnn<double>(tiny_en(), tiny_micro(), 3);
  for (auto* en : net.exemplar_layers()) exnorm::testing::perturb(en->parameters(), 17 + en->layer_index(), 1.0);
  return net;
}

RatioRecord rec(std::size_t layer, std::size_t sample, int cls, std::vector<double> lambda, std::size_t epoch = 0) {
  return {epoch, layer, sample, cls, std::move(lambda)};
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "exnorm_ratio_test";
  fs::create_directories(dir);
  return dir / name;
}

std::string first_line(const fs::path& p) {
  std::ifstream f(p);
  std::string line;
  std::getline(f, line);
  return line;
}

}  // namespace

TEST(RecordRatios, FreshModelIsUniform) {
  const auto data = tiny_data();
  auto net = build_micro_cnn<double>(tiny_en(), tiny_micro(), 3);
  const auto records = record_ratios(net, data, 0);
  EXPECT_EQ(records.size(), data.size() * 3);
  for (const auto& r : records)
    for (double v : r.lambda) EXPECT_EQ(v, 1.0 / 3.0);
  const auto vectors = concat_all(records, 3);
  EXPECT_EQ(vectors.size(), data.size());
  for (const auto& [sample, v] : vectors) {
    EXPECT_EQ(v.size(), 9u);
    for (double x : v) EXPECT_EQ(x, 1.0 / 3.0);
  }
}

TEST(RecordRatios, MatchesLayerOutputExactly) {
  const auto data = tiny_data();
  auto net = perturbed_model();
  const std::vector<std::size_t> ids{0, 3, 5, 7, 10};
  const auto records = record_ratios<double>(net, data, 4, ForwardMode::eval(), ids);
  ASSERT_EQ(records.size(), ids.size() * 3);
  // The last forward was over exactly these samples, so each layer still holds its matrix.
  for (auto* en : net.exemplar_layers()) {
    const Tensor<double>& lam = en->last_ratios();
    std::size_t matched = 0;
    for (const auto& r : records) {
      if (r.layer != en->layer_index()) continue;
      const std::size_t row = static_cast<std::size_t>(std::find(ids.begin(), ids.end(), r.sample) - ids.begin());
      for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(r.lambda[k], lam[row * 3 + k]);
      EXPECT_EQ(r.class_id, data.labels[r.sample]);
      EXPECT_EQ(r.epoch, 4u);
      ++matched;
    }
    EXPECT_EQ(matched, ids.size());
  }
  bool non_uniform = false;
  for (const auto& r : records) non_uniform = non_uniform || std::abs(r.lambda[0] - 1.0 / 3.0) > 1e-3;
  EXPECT_TRUE(non_uniform);
}

TEST(RecordRatios, TapDoesNotPerturbForward) {
  const auto data = tiny_data();
  auto net = perturbed_model();
  const std::vector<std::size_t> ids{0, 1, 2, 3};
  const auto x = data.gather<double>(ids);
  Tape<double> tape;
  const auto plain = net.forward(tape.constant(x), ForwardMode::eval()).value();
  std::size_t calls = 0;
  const RatioSink<double> sink = [&](std::size_t, const Tensor<double>&) { ++calls; };
  const auto tapped = net.forward(tape.constant(x), ForwardMode::eval(), &sink).value();
  EXPECT_EQ(calls, 3u);
  for (std::size_t i = 0; i < plain.numel(); ++i) ASSERT_EQ(plain[i], tapped[i]);
}

TEST(RecordRatios, RequiresExemplarLayers) {
  auto net = build_micro_cnn<double>(NormSpec::parse("bn"), tiny_micro(), 3);
  EXPECT_THROW(record_ratios(net, tiny_data(), 0), std::invalid_argument);
}

TEST(Aggregate, Examples) {
  const std::vector<RatioRecord> one{rec(0, 0, 1, {0.2, 0.3, 0.5})};
  const auto a = aggregate(one, Grouping::kLayer);
  ASSERT_EQ(a.size(), 1u);
  EXPECT_EQ(a[0].mean, one[0].lambda);
  EXPECT_EQ(a[0].count, 1u);

  const std::vector<RatioRecord> two{rec(0, 0, 0, {1, 0, 0}), rec(0, 1, 0, {0, 1, 0})};
  EXPECT_EQ(aggregate(two, Grouping::kLayer)[0].mean, (std::vector<double>{0.5, 0.5, 0.0}));

  EXPECT_THROW(aggregate(std::vector<RatioRecord>{}, Grouping::kLayer), std::invalid_argument);
  EXPECT_EQ(aggregate(two, Grouping::kDatasetLayer, "synthetic")[0].dataset, "synthetic");
}

TEST(Aggregate, PerClassMatchesHandLoop) {
  const auto data = tiny_data();
  auto net = perturbed_model();
  const auto records = record_ratios(net, data, 0);
  const auto aggs = aggregate(records, Grouping::kClassLayer);
  EXPECT_EQ(aggs.size(), 3u * 3u);
  for (const auto& g : aggs) {
    std::vector<double> sum(3, 0.0);
    std::size_t count = 0;
    for (const auto& r : records) {
      if (r.layer != g.layer || r.class_id != g.key) continue;
      for (std::size_t k = 0; k < 3; ++k) sum[k] += r.lambda[k];
      ++count;
    }
    ASSERT_EQ(count, g.count);
    double total = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
      EXPECT_EQ(g.mean[k], sum[k] / double(count));
      total += g.mean[k];
    }
    EXPECT_NEAR(total, 1.0, 1e-6);
  }
}

TEST(Aggregate, EpochGrouping) {
  const std::vector<RatioRecord> recs{rec(0, 0, 0, {1, 0}, 1), rec(0, 0, 0, {0, 1}, 2), rec(1, 0, 0, {0.5, 0.5}, 1)};
  const auto a = aggregate(recs, Grouping::kEpochLayer);
  ASSERT_EQ(a.size(), 3u);
  EXPECT_EQ(a[0].key, 1);
  EXPECT_EQ(a[0].layer, 0u);
  EXPECT_EQ(a[1].layer, 1u);
  EXPECT_EQ(a[2].key, 2);
}

TEST(ConcatVectors, LayerMajor) {
  std::vector<RatioRecord> recs;
  for (std::size_t l = 53; l-- > 0;) recs.push_back(rec(l, 7, 0, {double(l), 0.5, 1.0}));
  const auto v = concat_vectors(recs, 53);
  EXPECT_EQ(v.size(), 159u);
  EXPECT_EQ(v[0], 0.0);
  EXPECT_EQ(v[3], 1.0);
  EXPECT_EQ(v[156], 52.0);

  recs.pop_back();
  EXPECT_THROW(concat_vectors(recs, 53), std::invalid_argument);
  recs.push_back(rec(3, 7, 0, {0, 0, 1}));
  EXPECT_THROW(concat_vectors(recs, 53), std::invalid_argument);
  EXPECT_THROW(concat_vectors(std::vector<RatioRecord>{rec(0, 1, 0, {1}), rec(1, 2, 0, {1})}, 2),
               std::invalid_argument);
}

TEST(Export, RecordsCsvRoundTrip) {
  const auto data = tiny_data();
  auto net = perturbed_model();
  const auto records = record_ratios(net, data, 2);
  const auto path = scratch("records.csv");
  write_records_csv(path.string(), records);
  EXPECT_EQ(first_line(path), "epoch,layer,sample,class,lambda_1,lambda_2,lambda_3");
  const auto back = read_records_csv(path.string());
  ASSERT_EQ(back.size(), records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    EXPECT_EQ(back[i].layer, records[i].layer);
    EXPECT_EQ(back[i].sample, records[i].sample);
    EXPECT_EQ(back[i].class_id, records[i].class_id);
    EXPECT_EQ(back[i].epoch, 2u);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(back[i].lambda[k], records[i].lambda[k], 1e-9);
  }
}

TEST(Export, VectorsAndAggregates) {
  std::map<std::size_t, std::vector<double>> vectors{{4, {0.1, 0.2, 0.7, 0.3, 0.3, 0.4}}, {9, std::vector<double>(6, 0.5)}};
  const auto vpath = scratch("vectors.csv");
  write_vectors_csv(vpath.string(), vectors);
  EXPECT_EQ(first_line(vpath), "sample,v_1,v_2,v_3,v_4,v_5,v_6");

  const std::vector<RatioRecord> recs{rec(0, 0, 2, {0.2, 0.8}), rec(0, 1, 2, {0.4, 0.6})};
  const auto aggs = aggregate(recs, Grouping::kClassLayer);
  const auto j = nlohmann::json::parse(aggregates_json(aggs));
  ASSERT_EQ(j.size(), 1u);
  EXPECT_EQ(j[0]["grouping"], "class");
  EXPECT_EQ(j[0]["class"], 2);
  EXPECT_EQ(j[0]["count"], 2);
  EXPECT_NEAR(j[0]["mean"][0].get<double>(), 0.3, 1e-15);
}

TEST(Export, IoErrorsNamePath) {
  const std::string bad = "/nonexistent-dir/records.csv";
  try {
    write_records_csv(bad, std::vector<RatioRecord>{rec(0, 0, 0, {1.0})});
    FAIL() << "expected failure";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find(bad), std::string::npos);
  }
  EXPECT_THROW(read_records_csv(bad), std::runtime_error);
}
