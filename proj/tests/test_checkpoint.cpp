#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "exnorm/checkpoint.hpp"
#include "exnorm/trainer.hpp"
#include "test_util.hpp"

using namespace exnorm;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "exnorm_checkpoint_test";
  fs::create_directories(dir);
  return dir / name;
}

ModelDescriptor tiny_descriptor(const std::string& norm) {
  ModelDescriptor d;
  d.micro.channels = {8, 8, 16};
  d.micro.image_size = 8;
  d.norm = NormSpec::parse(norm);
  d.norm.en.reduction = 4;
  d.norm.en.expansion = 5;
  d.seed = 21;
  d.epoch = 2;
  return d;
}

std::vector<char> slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void dump(const fs::path& p, const std::vector<char>& bytes) {
  std::ofstream f(p, std::ios::binary);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST(Checkpoint, RoundTripRestoresParametersAndBuffers) {
  for (const std::string norm : {"bn", "sn", "en"}) {
    ModelDescriptor d = tiny_descriptor(norm);
    if (norm == "en") d.norm.en.set_variant(ENVariant::kReluHead);
    auto net = build_micro_cnn<double>(d.norm, d.micro, d.seed);
    SyntheticConfig sc;
    sc.per_class = 4;
    sc.image_size = 8;
    const auto data = gen_synthetic(sc);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch = 4;
    cfg.lr.initial = 0.05;
    train(net, data, cfg);

    const auto path = scratch("model_" + norm + ".ckpt");
    save_checkpoint(path.string(), net, d);
    ModelDescriptor back;
    auto loaded = load_checkpoint<double>(path.string(), &back);
    EXPECT_EQ(back.norm.name(), d.norm.name());
    EXPECT_EQ(back.epoch, 2u);
    EXPECT_EQ(back.micro.channels, d.micro.channels);
    EXPECT_EQ(read_checkpoint_descriptor(path.string()).seed, 21u);

    auto pa = net.parameters(), pb = loaded.parameters();
    ASSERT_EQ(pa.size(), pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i)
      for (std::size_t j = 0; j < pa[i]->value.numel(); ++j) ASSERT_EQ(pa[i]->value[j], pb[i]->value[j]);
    auto ba = net.buffers(), bb = loaded.buffers();
    ASSERT_EQ(ba.size(), bb.size());
    for (std::size_t i = 0; i < ba.size(); ++i) {
      EXPECT_EQ(ba[i].name, bb[i].name);
      for (std::size_t j = 0; j < ba[i].value->numel(); ++j) ASSERT_EQ((*ba[i].value)[j], (*bb[i].value)[j]);
    }
    const auto ea = evaluate(net, data), eb = evaluate(loaded, data);
    EXPECT_EQ(ea.loss, eb.loss) << norm;
  }
}

TEST(Checkpoint, SinglePrecisionRoundTrip) {
  ModelDescriptor d = tiny_descriptor("en");
  d.precision = "f32";
  auto net = build_micro_cnn<float>(d.norm, d.micro, 4);
  exnorm::testing::perturb(net.parameters(), 1);
  const auto path = scratch("model_f32.ckpt");
  save_checkpoint(path.string(), net, d);
  auto loaded = load_checkpoint<float>(path.string());
  auto pa = net.parameters(), pb = loaded.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i)
    for (std::size_t j = 0; j < pa[i]->value.numel(); ++j) ASSERT_EQ(pa[i]->value[j], pb[i]->value[j]);
}

TEST(Checkpoint, HeaderLayout) {
  ModelDescriptor d = tiny_descriptor("bn");
  auto net = build_micro_cnn<double>(d.norm, d.micro, d.seed);
  const auto path = scratch("layout.ckpt");
  save_checkpoint(path.string(), net, d);
  const auto bytes = slurp(path);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 8), "EXNORMCK");
  EXPECT_EQ(bytes[8], 1);  // version, little-endian
  for (int i = 9; i < 16; ++i) EXPECT_EQ(bytes[i], 0);
}

TEST(Checkpoint, RejectsCorruptFiles) {
  ModelDescriptor d = tiny_descriptor("en");
  auto net = build_micro_cnn<double>(d.norm, d.micro, d.seed);
  const auto path = scratch("good.ckpt");
  save_checkpoint(path.string(), net, d);
  auto bytes = slurp(path);

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  dump(scratch("magic.ckpt"), bad_magic);
  EXPECT_THROW(load_checkpoint<double>(scratch("magic.ckpt").string()), std::runtime_error);

  auto truncated = bytes;
  truncated.resize(bytes.size() - 5);
  dump(scratch("trunc.ckpt"), truncated);
  try {
    load_checkpoint<double>(scratch("trunc.ckpt").string());
    FAIL() << "expected failure";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("trunc.ckpt"), std::string::npos);
  }

  auto trailing = bytes;
  trailing.push_back(0);
  dump(scratch("trailing.ckpt"), trailing);
  EXPECT_THROW(load_checkpoint<double>(scratch("trailing.ckpt").string()), std::runtime_error);
  EXPECT_THROW(load_checkpoint<double>(scratch("absent.ckpt").string()), std::runtime_error);
}
