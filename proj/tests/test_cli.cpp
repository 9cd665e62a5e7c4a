#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "exnorm/checkpoint.hpp"
#include "exnorm/cli.hpp"
#include "exnorm/ratio_analysis.hpp"
#include "json.hpp"

using namespace exnorm;
namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "exnorm_cli_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir.parent_path());
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

// Small enough to train in well under a second.
std::vector<std::string> tiny_train(const fs::path& out) {
  return {"train",          "--norm",     "en",  "--data",  "synthetic", "--epochs", "2",   "--per-class",
          "6",              "--image-size", "8", "--channels", "8,8,16", "--r",      "4",   "--pi",
          "5",              "--batch",    "6",   "--out",   out.string()};
}

}  // namespace

TEST(CliTrain, RepeatedRunsWriteIdenticalHistory) {
  const auto a = scratch("det_a"), b = scratch("det_b");
  auto args_a = tiny_train(a), args_b = tiny_train(b);
  for (auto* args : {&args_a, &args_b}) {
    args->insert(args->end(), {"--seed", "1"});
    const auto r = run(*args);
    ASSERT_EQ(r.code, 0) << r.err;
  }
  EXPECT_EQ(slurp(a / "history.csv"), slurp(b / "history.csv"));
  EXPECT_EQ(slurp(a / "model.ckpt"), slurp(b / "model.ckpt"));
}

TEST(CliTrain, ExclusiveVariantRejected) {
  auto args = tiny_train(scratch("variant"));
  args.insert(args.end(), {"--variant", "a", "--variant", "b"});
  const auto r = run(args);
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_FALSE(r.err.empty());
}

TEST(CliTrain, UsageErrors) {
  EXPECT_EQ(run({"train", "--norm", "xx", "--out", scratch("u1").string()}).code, kExitUsage);
  EXPECT_EQ(run({"train", "--norm", "bn", "--variant", "a", "--out", scratch("u2").string()}).code, kExitUsage);
  EXPECT_EQ(run({"train", "--data", "imagenet", "--out", scratch("u3").string()}).code, kExitUsage);
  EXPECT_EQ(run({"train"}).code, kExitUsage);  // --out is required
  EXPECT_EQ(run({}).code, kExitUsage);
  EXPECT_EQ(run({"--help"}).code, kExitOk);
}

TEST(CliTrain, DefaultManifestMaterializesConfig) {
  const auto dir = scratch("manifest");
  const auto r = run({"train", "--epochs", "1", "--per-class", "4", "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto m = Json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(m["command"], "train");
  EXPECT_EQ(m["config"]["norm"], "en");
  EXPECT_EQ(m["config"]["r"], 8);
  EXPECT_EQ(m["config"]["pi"], 50);
  EXPECT_EQ(m["config"]["variant"], "none");
  EXPECT_EQ(m["artifacts"]["checkpoint"], "model.ckpt");
  EXPECT_FALSE(m["version"].get<std::string>().empty());
  for (const auto& [key, path] : m["artifacts"].items()) EXPECT_TRUE(fs::exists(dir / path.get<std::string>())) << key;

  const auto desc = read_checkpoint_descriptor((dir / "model.ckpt").string());
  EXPECT_EQ(desc.norm.en.reduction, 8u);
  EXPECT_EQ(desc.norm.en.expansion, 50u);
}

TEST(CliTrain, ConfigFileReproducesRunAndFlagsWin) {
  const auto a = scratch("cfg_a");
  ASSERT_EQ(run(tiny_train(a)).code, 0);
  const auto b = scratch("cfg_b");
  const auto r = run({"train", "--config", (a / "config.txt").string(), "--out", b.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(a / "history.csv"), slurp(b / "history.csv"));
  EXPECT_EQ(slurp(a / "model.ckpt"), slurp(b / "model.ckpt"));

  const auto c = scratch("cfg_c");
  ASSERT_EQ(run({"train", "--config", (a / "config.txt").string(), "--epochs", "1", "--out", c.string()}).code, 0);
  EXPECT_EQ(Json::parse(slurp(c / "manifest.json"))["config"]["epochs"], 1);
}

TEST(CliConfig, MergePrecedence) {
  const auto path = scratch("merge") += ".txt";
  std::ofstream(path) << "# comment\nepochs = 7\nlr=0.2\nsn-tied = true\nrecord-ratios = false\n\n";
  const auto merged = merge_config_file({"train", "--lr", "0.01"}, path.string());
  const std::vector<std::string> expected{"train", "--lr", "0.01", "--epochs", "7", "--sn-tied"};
  EXPECT_EQ(merged, expected);
  std::ofstream(path) << "no equals sign\n";
  EXPECT_THROW(merge_config_file({}, path.string()), std::invalid_argument);
}

TEST(CliTrain, SeedFromEnvironment) {
  ::setenv("EXNORM_SEED", "42", 1);
  const auto a = scratch("env");
  const auto r = run(tiny_train(a));
  ::unsetenv("EXNORM_SEED");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(Json::parse(slurp(a / "manifest.json"))["seed"], 42);

  const auto b = scratch("env_flag");
  auto explicit_args = tiny_train(b);
  explicit_args.insert(explicit_args.end(), {"--seed", "42"});
  ASSERT_EQ(run(explicit_args).code, 0);
  EXPECT_EQ(slurp(a / "history.csv"), slurp(b / "history.csv"));

  ::setenv("EXNORM_SEED", "not-a-number", 1);
  EXPECT_EQ(run(tiny_train(scratch("env_bad"))).code, kExitUsage);
  ::unsetenv("EXNORM_SEED");
}

TEST(CliTrain, DivergenceExitsNumeric) {
  auto args = tiny_train(scratch("nan"));
  args.insert(args.end(), {"--lr", "1e300", "--warmup", "0"});
  const auto r = run(args);
  EXPECT_EQ(r.code, kExitNumeric) << r.err;
  EXPECT_NE(r.err.find("non-finite"), std::string::npos) << r.err;
}

TEST(CliGradcheck, Examples) {
  const auto en = run({"gradcheck", "--layer", "en", "--shape", "2,4,3,3", "--seed", "0"});
  EXPECT_EQ(en.code, 0) << en.out;
  EXPECT_NE(en.out.find("en.fc1.weight"), std::string::npos);
  EXPECT_NE(en.out.find("input"), std::string::npos);

  const auto bn = run({"gradcheck", "--layer", "bn", "--shape", "2,4,3,3"});
  EXPECT_EQ(bn.code, 0);
  const auto pos = bn.out.rfind("max_rel_error=");
  EXPECT_LT(std::stod(bn.out.substr(pos + 14)), 1e-6);

  const auto bad = run({"gradcheck", "--layer", "en", "--shape", "2,5,3,3", "--r", "4"});
  EXPECT_EQ(bad.code, kExitUsage);
  EXPECT_NE(bad.err.find("divisible"), std::string::npos);

  for (const std::string layer : {"in", "ln", "gn", "sn", "en-a", "en-b", "en-c", "en-d"})
    EXPECT_EQ(run({"gradcheck", "--layer", layer, "--shape", "2,4,3,3"}).code, 0) << layer;
  EXPECT_EQ(run({"gradcheck", "--shape", "2,4,3"}).code, kExitUsage);
}

TEST(CliCount, ResNet50Totals) {
  const auto bn = run({"count", "--arch", "resnet50", "--norm", "bn", "--input", "224"});
  ASSERT_EQ(bn.code, 0) << bn.err;
  const auto jb = Json::parse(bn.out);
  EXPECT_NEAR(jb["totals"]["params"].get<double>(), 25.56e6, 25.56e6 * 0.002);
  EXPECT_GT(jb["layers"].size(), 100u);

  const auto en = run({"count", "--arch", "resnet50", "--norm", "en"});
  const auto je = Json::parse(en.out);
  EXPECT_EQ(je["config"]["r"], 32);
  EXPECT_GE(je["totals"]["params"].get<double>(), 25.75e6);
  EXPECT_LE(je["totals"]["params"].get<double>(), 26.00e6);
  EXPECT_TRUE(je.contains("psi_note"));

  EXPECT_EQ(run({"count", "--arch", "vgg16"}).code, kExitUsage);
}

TEST(CliCount, MicroMatchesEnumeration) {
  for (const std::string norm : {"bn", "sn", "en"}) {
    const auto r = run({"count", "--arch", "micro", "--norm", norm});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = Json::parse(r.out);
    EXPECT_EQ(j["totals"]["params"], j["enumerated_params"]) << norm;
  }
  const auto file = scratch("count") += ".json";
  ASSERT_EQ(run({"count", "--arch", "micro", "--out", file.string()}).code, 0);
  EXPECT_TRUE(Json::parse(slurp(file)).contains("totals"));
}

TEST(CliRatios, FreshCheckpointIsUniformAndConcatIsNineWide) {
  const auto model = scratch("ratios_model");
  auto args = tiny_train(model);
  args.insert(args.end(), {"--lr", "0"});  // weights stay at their initial values
  ASSERT_EQ(run(args).code, 0);
  const auto out = scratch("ratios_out");
  const auto r = run({"ratios", "--checkpoint", (model / "model.ckpt").string(), "--per-class", "6", "--concat",
                      "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const auto& rec : read_records_csv((out / "records.csv").string()))
    for (double v : rec.lambda) EXPECT_NEAR(v, 1.0 / 3.0, 1e-12);

  std::ifstream vectors(out / "vectors.csv");
  std::string header, row;
  std::getline(vectors, header);
  std::getline(vectors, row);
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), 9);  // sample id + 9 values
  EXPECT_TRUE(fs::exists(out / "manifest.json"));
}

TEST(CliRatios, ClassGroupingMatchesHandLoop) {
  const auto model = scratch("ratios_trained");
  auto args = tiny_train(model);
  args.insert(args.end(), {"--lr", "0.2"});
  ASSERT_EQ(run(args).code, 0);
  const auto out = scratch("ratios_class");
  ASSERT_EQ(run({"ratios", "--checkpoint", (model / "model.ckpt").string(), "--per-class", "6", "--group", "class",
                 "--out", out.string()})
                .code,
            0);
  const auto records = read_records_csv((out / "records.csv").string());
  const auto aggs = Json::parse(slurp(out / "aggregates.json"));
  ASSERT_EQ(aggs.size(), 9u);
  for (const auto& g : aggs) {
    std::vector<double> sum(3, 0.0);
    std::size_t n = 0;
    for (const auto& rec : records) {
      if (rec.layer != g["layer"].get<std::size_t>() || rec.class_id != g["class"].get<int>()) continue;
      for (std::size_t k = 0; k < 3; ++k) sum[k] += rec.lambda[k];
      ++n;
    }
    ASSERT_EQ(n, g["count"].get<std::size_t>());
    // records.csv carries 12 significant digits
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(g["mean"][k].get<double>(), sum[k] / double(n), 1e-10);
  }
}

TEST(CliRatios, CheckpointWithoutExemplarLayers) {
  const auto model = scratch("ratios_bn");
  auto args = tiny_train(model);
  args[2] = "bn";
  ASSERT_EQ(run(args).code, 0);
  const auto r = run({"ratios", "--checkpoint", (model / "model.ckpt").string(), "--out", scratch("x").string()});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("no EN layers"), std::string::npos);
  EXPECT_EQ(run({"ratios", "--checkpoint", "/nonexistent.ckpt", "--out", scratch("y").string()}).code, kExitFailure);
}
