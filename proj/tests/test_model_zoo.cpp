#include <gtest/gtest.h>

#include "exnorm/gradcheck.hpp"
#include "exnorm/model.hpp"
#include "exnorm/ops.hpp"
#include "json.hpp"
#include "test_util.hpp"

using namespace exnorm;
using exnorm::testing::random_tensor;

namespace {

NormSpec en_spec(std::size_t r, std::size_t pi = 50) {
  NormSpec s = NormSpec::parse("en");
  s.en.reduction = r;
  s.en.expansion = pi;
  return s;
}

template <typename T>
std::size_t enumerate(Network<T>& net) {
  std::size_t n = 0;
  for (Parameter<T>* p : net.parameters()) n += p->value.numel();
  return n;
}

std::size_t norm_channel_sum(const ArchSpec& arch) {
  const auto shapes = infer_shapes(arch, arch.height, arch.width);
  std::size_t sum = 0;
  for (std::size_t i = 0; i < arch.layers.size(); ++i)
    if (arch.layers[i].kind == LayerKind::kNorm) sum += shapes[i].channels;
  return sum;
}

}  // namespace

TEST(Resnet50Spec, Layout) {
  const ArchSpec arch = resnet50_spec();
  EXPECT_EQ(arch.norm_sites(), 53u);
  EXPECT_EQ(norm_channel_sum(arch), 26560u);
  EXPECT_EQ(arch.height, 224u);
  EXPECT_EQ(arch.width, 224u);
  EXPECT_EQ(arch.classes(), 1000u);

  const auto shapes = infer_shapes(arch, 224, 224);
  std::size_t projections = 0;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const auto& l = arch.layers[i];
    if (l.name.find("downsample.conv") != std::string::npos) ++projections;
    if (l.name == "layer1.0.conv3") {
      EXPECT_EQ(shapes[i].channels, 256u);
    }
    if (l.name == "layer2.0.conv2") {
      EXPECT_EQ(shapes[i].height, 28u);
    }
    if (l.name == "layer3.5.conv1") {
      EXPECT_EQ(shapes[i].channels, 256u);
    }
    if (l.name == "layer4.2.conv3") {
      EXPECT_EQ(shapes[i].channels, 2048u);
      EXPECT_EQ(shapes[i].height, 7u);
    }
  }
  EXPECT_EQ(projections, 4u);
}

TEST(CountParams, Resnet50BatchNorm) {
  const auto report = count_params(resnet50_spec(), NormSpec::parse("bn"));
  EXPECT_EQ(report.total_params, 25557032u);
  EXPECT_NEAR(double(report.total_params), 25.56e6, 25.56e6 * 0.002);
}

TEST(CountParams, Resnet50Exemplar) {
  const auto bn = count_params(resnet50_spec(), NormSpec::parse("bn"));
  const auto en = count_params(resnet50_spec(), en_spec(32));
  EXPECT_GE(en.total_params, 25750000u);
  EXPECT_LE(en.total_params, 26000000u);
  // Per site: 2KC + C + Psi(3) replaces BN's 2C.
  EXPECT_EQ(en.total_params - bn.total_params, 5u * 26560u + 53u * 1953u);
}

TEST(CountFlops, Resnet50) {
  const auto bn = count_flops(resnet50_spec(), NormSpec::parse("bn"), 224, 224);
  const auto en = count_flops(resnet50_spec(), en_spec(32), 224, 224);
  EXPECT_NEAR(double(bn.total_flops), 4.136e9, 0.1 * 4.136e9);
  EXPECT_NEAR(double(en.total_flops), 4.325e9, 0.1 * 4.325e9);
  ASSERT_EQ(bn.layers.size(), en.layers.size());
  for (std::size_t i = 0; i < bn.layers.size(); ++i) {
    if (bn.layers[i].kind == "norm") EXPECT_GT(en.layers[i].flops, bn.layers[i].flops) << bn.layers[i].name;
    else EXPECT_EQ(en.layers[i].flops, bn.layers[i].flops);
  }
}

TEST(CountFlops, MonotoneInResolutionAndPoolSize) {
  const ArchSpec arch = resnet50_spec();
  std::size_t prev = 0;
  for (std::size_t hw : {64, 128, 224, 320}) {
    const auto r = count_flops(arch, en_spec(32), hw, hw);
    EXPECT_GT(r.total_flops, prev);
    prev = r.total_flops;
  }
  NormSpec two = en_spec(32);
  two.en.pool = {NormalizerKind::in(), NormalizerKind::bn()};
  NormSpec four = en_spec(32);
  four.en.pool.push_back(NormalizerKind::gn(32));
  const auto f2 = count_flops(arch, two, 224, 224).total_flops;
  const auto f3 = count_flops(arch, en_spec(32), 224, 224).total_flops;
  const auto f4 = count_flops(arch, four, 224, 224).total_flops;
  EXPECT_LT(f2, f3);
  EXPECT_LT(f3, f4);
}

TEST(CountParams, ReportJson) {
  const auto report = count_params(resnet50_spec(), en_spec(32));
  const auto j = nlohmann::json::parse(report.to_json());
  EXPECT_EQ(j["layers"].size(), resnet50_spec().layers.size());
  EXPECT_EQ(j["totals"]["params"].get<std::size_t>(), report.total_params);
  EXPECT_NE(j["flop_convention"].get<std::string>().find("multiply-accumulate = 1 FLOP"), std::string::npos);
  EXPECT_NE(j["psi_note"].get<std::string>().find("Psi(K)"), std::string::npos);
  const auto& first_norm = j["layers"][1];
  EXPECT_EQ(first_norm["kind"], "norm");
  EXPECT_EQ(first_norm["C"], 64);
  EXPECT_EQ(first_norm["params"], 2 * 3 * 64 + 64 + 1953);
}

TEST(MicroCnn, CountsMatchEnumeration) {
  const MicroConfig cfg;
  std::vector<NormSpec> specs{NormSpec::parse("bn"), NormSpec::parse("gn:4"), NormSpec::parse("sn"), en_spec(8)};
  for (ENVariant v : {ENVariant::kMlp, ENVariant::kNoConv, ENVariant::kReluHead, ENVariant::kSingleAffine}) {
    specs.push_back(en_spec(8));
    specs.back().en.set_variant(v);
  }
  for (const auto& spec : specs) {
    auto net = build_micro_cnn<double>(spec, cfg, 3);
    EXPECT_EQ(count_params(micro_cnn_spec(cfg), spec).total_params, enumerate(net)) << spec.name();
  }
}

TEST(MicroCnn, ExemplarDeltaOverBatchNorm) {
  const MicroConfig cfg;
  auto bn = build_micro_cnn<double>(NormSpec::parse("bn"), cfg, 1);
  auto en = build_micro_cnn<double>(en_spec(8), cfg, 1);
  std::size_t delta = 0;
  for (std::size_t c : cfg.channels) delta += en_param_count(c, en_spec(8).en).total - 2 * c;
  EXPECT_EQ(enumerate(en), enumerate(bn) + delta);
  EXPECT_EQ(en.exemplar_layers().size(), 3u);
  EXPECT_EQ(bn.exemplar_layers().size(), 0u);
}

TEST(MicroCnn, ForwardShapes) {
  auto net = build_micro_cnn<float>(en_spec(8), MicroConfig{}, 2);
  Tape<float> tape;
  const auto logits = net.forward(tape.constant(random_tensor<float>(Shape{4, 3, 32, 32}, 1)), ForwardMode::train());
  EXPECT_EQ(logits.shape(), (Shape{4, 3}));
  EXPECT_TRUE(logits.value().all_finite());
  EXPECT_THROW(net.forward(tape.constant(random_tensor<float>(Shape{4, 2, 8, 8}, 1)), ForwardMode::train()),
               ShapeError);
}

TEST(MicroCnn, RejectsIndivisibleReduction) {
  MicroConfig cfg;
  cfg.channels = {12, 32, 64};
  EXPECT_THROW(build_micro_cnn<double>(en_spec(8), cfg, 0), std::invalid_argument);
  EXPECT_THROW(count_params(micro_cnn_spec(cfg), en_spec(8)), std::invalid_argument);
}

TEST(MicroCnn, SameSeedSameWeights) {
  auto a = build_micro_cnn<double>(en_spec(8), MicroConfig{}, 9);
  auto b = build_micro_cnn<double>(en_spec(8), MicroConfig{}, 9);
  auto pa = a.parameters(), pb = b.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i]->name, pb[i]->name);
    for (std::size_t j = 0; j < pa[i]->value.numel(); ++j) ASSERT_EQ(pa[i]->value[j], pb[i]->value[j]);
  }
}

TEST(Network, MaxPoolIsCountOnly) {
  EXPECT_THROW(Network<double>(resnet50_spec(), NormSpec::parse("bn"), 0), std::invalid_argument);
}

TEST(InferShapes, RejectsChannelMismatch) {
  ArchSpec arch = micro_cnn_spec(MicroConfig{});
  arch.layers[3].in_channels = 8;
  EXPECT_THROW(infer_shapes(arch, 16, 16), std::invalid_argument);
}

TEST(Gradients, TinyExemplarNetwork) {
  MicroConfig cfg;
  cfg.channels = {4, 4, 8};
  cfg.image_size = 5;
  auto net = build_micro_cnn<double>(en_spec(2, 3), cfg, 4);
  for (auto* en : net.exemplar_layers()) exnorm::testing::perturb(en->parameters(), 5);
  const auto x = random_tensor(Shape{3, 3, 5, 5}, 6);
  const std::vector<int> labels{0, 2, 1};
  const auto report = gradient_check(
      [&](Tape<double>& t) {
        return softmax_cross_entropy(net.forward(t.constant(x), ForwardMode::train_frozen()),
                                     std::span<const int>(labels));
      },
      net.parameters(), 1e-5, 16);
  EXPECT_LT(report.max_rel_error, 1e-4);
}
