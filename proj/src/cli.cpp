#include "exnorm/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "exnorm/checkpoint.hpp"
#include "exnorm/gradcheck.hpp"
#include "exnorm/model.hpp"
#include "exnorm/ops.hpp"
#include "exnorm/ratio_analysis.hpp"
#include "exnorm/trainer.hpp"
#include "json.hpp"

#ifndef EXNORM_VERSION
#define EXNORM_VERSION "0.0.0"
#endif

namespace exnorm {

namespace {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

/// Raised for inconsistent flag values that CLI11 cannot see.
struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, sep);)
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<std::size_t> parse_sizes(const std::string& text, const std::string& what) {
  std::vector<std::size_t> out;
  for (const auto& item : split(text, ',')) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != item.size() || item.front() == '-') throw UsageError(what + ": '" + text + "' is not a list of sizes");
    out.push_back(v);
  }
  return out;
}

std::uint64_t default_seed() {
  const char* env = std::getenv("EXNORM_SEED");
  if (!env || !*env) return 0;
  try {
    std::size_t pos = 0;
    const auto v = std::stoull(env, &pos);
    if (pos == std::string(env).size()) return v;
  } catch (const std::exception&) {
  }
  throw UsageError(std::string("EXNORM_SEED='") + env + "' is not an unsigned integer");
}

struct NormOptions {
  std::string norm;
  std::size_t r = 8;
  std::size_t pi = 50;
  std::string variant = "none";
  std::string pool = "in,ln,bn";
  bool sn_tied = false;
  double eps = 1e-5;

  void add(CLI::App& app, const std::string& default_norm) {
    norm = default_norm;
    app.add_option("--norm", norm, "bn, in, ln, gn, gn:G, sn or en")->capture_default_str();
    app.add_option("--r", r, "EN reduction rate")->capture_default_str();
    app.add_option("--pi", pi, "EN expansion factor")->capture_default_str();
    app.add_option("--variant", variant, "EN ablation: none, a, b, c, d")
        ->capture_default_str()
        ->multi_option_policy(CLI::MultiOptionPolicy::Throw);
    app.add_option("--pool", pool, "normalizer pool for SN/EN, comma separated")->capture_default_str();
    app.add_flag("--sn-tied", sn_tied, "share SN mean and variance ratios");
    app.add_option("--eps", eps, "normalization epsilon")->capture_default_str();
  }

  NormSpec spec() const {
    NormSpec s;
    try {
      s = NormSpec::parse(norm);
      s.en.pool.clear();
      for (const auto& k : split(pool, ',')) s.en.pool.push_back(NormalizerKind::parse(k));
      s.en.set_variant(parse_variant(variant));
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    if (variant != "none" && s.family != NormFamily::kExemplar) throw UsageError("--variant requires --norm en");
    s.en.reduction = r;
    s.en.expansion = pi;
    s.en.eps = eps;
    s.sn_tied = sn_tied;
    return s;
  }

  void to_json(Json& j) const {
    j["norm"] = norm;
    j["r"] = r;
    j["pi"] = pi;
    j["variant"] = variant;
    j["pool"] = pool;
    j["sn_tied"] = sn_tied;
    j["eps"] = eps;
  }
};

/// Dataset selection: "synthetic" or "cifar10:PATH".
struct DataOptions {
  std::string data = "synthetic";
  std::size_t per_class = 100;
  std::size_t subset = 0;

  void add(CLI::App& app) {
    app.add_option("--data", data, "synthetic or cifar10:PATH")->capture_default_str();
    app.add_option("--per-class", per_class, "synthetic samples per class")->capture_default_str();
    app.add_option("--subset", subset, "keep the first N CIFAR-10 records (0 = all)")->capture_default_str();
  }

  Dataset load(std::size_t classes, std::size_t image_size, std::uint64_t seed) const {
    if (data == "synthetic") {
      SyntheticConfig s;
      s.classes = classes;
      s.per_class = per_class;
      s.image_size = image_size;
      s.seed = seed;
      return gen_synthetic(s);
    }
    if (data.rfind("cifar10:", 0) == 0) {
      if (classes != 10 || image_size != 32) throw UsageError("cifar10 data needs --classes 10 and --image-size 32");
      return load_cifar10(data.substr(8), subset);
    }
    throw UsageError("--data must be 'synthetic' or 'cifar10:PATH', got '" + data + "'");
  }

  void to_json(Json& j) const {
    j["data"] = data;
    j["per_class"] = per_class;
    j["subset"] = subset;
  }
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw std::runtime_error("write failed for " + path.string());
}

void prepare_out(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw std::runtime_error("cannot create output directory " + out);
}

/// key=value lines that reproduce a run through --config.
std::string config_text(const Json& config) {
  std::ostringstream s;
  for (const auto& [key, value] : config.items()) {
    if (key == "out" || key == "config") continue;
    std::string k = key;
    for (char& c : k)
      if (c == '_') c = '-';
    s << k << " = " << (value.is_string() ? value.get<std::string>() : value.dump()) << '\n';
  }
  return s.str();
}

void write_manifest(const std::string& out, const std::string& command, const Json& config, std::uint64_t seed,
                    const Json& artifacts) {
  Json m;
  m["command"] = command;
  m["version"] = EXNORM_VERSION;
  m["seed"] = seed;
  m["config"] = config;
  Json arts = artifacts;
  arts["config"] = "config.txt";
  m["artifacts"] = arts;
  write_text(fs::path(out) / "config.txt", config_text(config));
  write_text(fs::path(out) / "manifest.json", m.dump(2) + "\n");
}

// ---------------------------------------------------------------- train

struct TrainOptions {
  NormOptions norm;
  DataOptions data;
  std::size_t epochs = 30;
  std::size_t batch = 32;
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::size_t warmup = 1;
  std::string decay_epochs;
  double decay_factor = 0.1;
  std::uint64_t seed = 0;
  std::string precision = "f64";
  std::size_t classes = 3;
  std::size_t image_size = 16;
  std::string channels = "16,32,64";
  bool record_ratios = false;
  std::string out;
  std::string config;

  Json to_json() const {
    Json j;
    norm.to_json(j);
    data.to_json(j);
    j["epochs"] = epochs;
    j["batch"] = batch;
    j["lr"] = lr;
    j["momentum"] = momentum;
    j["weight_decay"] = weight_decay;
    j["warmup"] = warmup;
    j["decay_epochs"] = decay_epochs;
    j["decay_factor"] = decay_factor;
    j["seed"] = seed;
    j["precision"] = precision;
    j["classes"] = classes;
    j["image_size"] = image_size;
    j["channels"] = channels;
    j["record_ratios"] = record_ratios;
    j["out"] = out;
    return j;
  }
};

template <typename T>
int train_with(const TrainOptions& o, std::ostream& out) {
  const NormSpec norm = o.norm.spec();
  const auto ch = parse_sizes(o.channels, "--channels");
  if (ch.size() != 3) throw UsageError("--channels needs three widths");
  MicroConfig micro;
  micro.channels = {ch[0], ch[1], ch[2]};
  micro.classes = o.classes;
  micro.image_size = o.image_size;
  if (o.record_ratios && norm.family != NormFamily::kExemplar) throw UsageError("--record-ratios requires --norm en");
  if (o.batch < 2) throw UsageError("--batch must be at least 2");

  const Dataset data = o.data.load(o.classes, o.image_size, o.seed);
  Network<T> model = build_micro_cnn<T>(norm, micro, o.seed);

  TrainConfig cfg;
  cfg.lr.initial = o.lr;
  cfg.lr.warmup_epochs = o.warmup;
  cfg.lr.decay_epochs = parse_sizes(o.decay_epochs, "--decay-epochs");
  cfg.lr.factor = o.decay_factor;
  cfg.momentum = o.momentum;
  cfg.weight_decay = o.weight_decay;
  cfg.batch = o.batch;
  cfg.epochs = o.epochs;
  cfg.seed = o.seed;

  prepare_out(o.out);
  std::vector<RatioRecord> trajectory;
  EpochCallback<T> on_epoch;
  if (o.record_ratios) {
    on_epoch = [&](std::size_t epoch, Network<T>& m) {
      auto recs = record_ratios(m, data, epoch);
      trajectory.insert(trajectory.end(), recs.begin(), recs.end());
    };
  }
  const TrainHistory history = train(model, data, cfg, nullptr, on_epoch);

  const fs::path dir(o.out);
  history.write_csv((dir / "history.csv").string());
  ModelDescriptor desc;
  desc.micro = micro;
  desc.norm = norm;
  desc.precision = o.precision;
  desc.seed = o.seed;
  desc.epoch = o.epochs;
  save_checkpoint((dir / "model.ckpt").string(), model, desc);
  Json artifacts{{"history", "history.csv"}, {"checkpoint", "model.ckpt"}};
  if (o.record_ratios) {
    write_records_csv((dir / "ratio_trajectory.csv").string(), trajectory);
    artifacts["ratio_trajectory"] = "ratio_trajectory.csv";
  }
  write_manifest(o.out, "train", o.to_json(), o.seed, artifacts);

  const EpochRecord& last = history.last("train");
  out << "trained " << norm.name() << " for " << o.epochs << " epochs (" << history.steps << " steps): loss "
      << history.initial_loss() << " -> " << last.loss << ", top1 " << last.top1 << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- gradcheck

struct GradcheckOptions {
  std::string layer = "en";
  std::string shape = "2,4,3,3";
  std::uint64_t seed = 0;
  std::size_t r = 4;
  std::size_t pi = 50;
  std::string pool = "in,ln,bn";
  double step = 1e-5;
  std::size_t coords = 64;
  double tolerance = 1e-4;
};

int run_gradcheck(const GradcheckOptions& o, std::ostream& out) {
  const auto dims = parse_sizes(o.shape, "--shape");
  if (dims.size() != 4) throw UsageError("--shape needs N,C,H,W");
  for (std::size_t d : dims)
    if (d == 0) throw UsageError("--shape entries must be positive");

  NormOptions n;
  n.r = o.r;
  n.pi = o.pi;
  n.pool = o.pool;
  n.norm = o.layer;
  if (o.layer.rfind("en-", 0) == 0) {
    n.norm = "en";
    n.variant = o.layer.substr(3);
  }
  const NormSpec spec = n.spec();
  auto layer = make_norm<double>(spec, dims[1], o.layer, o.seed, 0);

  std::mt19937_64 rng(o.seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> noise(0.0, 1.0);
  const auto random = [&](Shape s, double scale) {
    Tensor<double> t(s);
    for (double& v : t.data()) v = scale * noise(rng);
    return t;
  };
  for (Parameter<double>* p : layer->parameters())
    for (double& v : p->value.data()) v += 0.3 * noise(rng);
  const Shape shape{dims[0], dims[1], dims[2], dims[3]};
  Parameter<double> input("input", random(shape, 1.0));
  const Tensor<double> projection = random(shape, 1.0);

  auto params = layer->parameters();
  params.push_back(&input);
  const GradCheckReport report = gradient_check(
      [&](Tape<double>& t) {
        Var<double> y = layer->forward(t.parameter(input), ForwardMode::train_frozen());
        return sum(mul(y, t.constant(projection)));
      },
      params, o.step, o.coords, o.seed);

  out << "gradcheck " << layer->kind_name() << " on " << shape.str() << "\n";
  for (const auto& e : report.entries) {
    out << "  " << e.name << "  max_rel_error=" << e.max_rel_error << "  coords=" << e.coords_checked << "\n";
  }
  const bool ok = report.max_rel_error < o.tolerance;
  out << "max_rel_error=" << report.max_rel_error << " tolerance=" << o.tolerance << (ok ? " PASS" : " FAIL") << "\n";
  return ok ? kExitOk : kExitNumeric;
}

// ---------------------------------------------------------------- count

struct CountOptions {
  NormOptions norm;
  std::string arch = "resnet50";
  std::size_t input = 0;
  std::size_t classes = 3;
  std::size_t image_size = 16;
  std::string channels = "16,32,64";
  std::string out;
  bool r_given = false;
};

int run_count(const CountOptions& o, std::ostream& out) {
  NormOptions n = o.norm;
  ArchSpec arch;
  MicroConfig micro;
  if (o.arch == "resnet50") {
    arch = resnet50_spec();
    if (!o.r_given) n.r = 32;
  } else if (o.arch == "micro") {
    const auto ch = parse_sizes(o.channels, "--channels");
    if (ch.size() != 3) throw UsageError("--channels needs three widths");
    micro.channels = {ch[0], ch[1], ch[2]};
    micro.classes = o.classes;
    micro.image_size = o.image_size;
    arch = micro_cnn_spec(micro);
  } else {
    throw UsageError("unknown architecture '" + o.arch + "' (expected micro or resnet50)");
  }
  const NormSpec spec = n.spec();
  const std::size_t hw = o.input ? o.input : arch.height;
  const ArchReport report = count_flops(arch, spec, hw, hw);
  Json j = Json::parse(report.to_json());
  j["config"] = {{"r", spec.en.reduction}, {"pi", spec.en.expansion}, {"K", spec.en.pool_size()}};
  if (o.arch == "micro") {
    Network<double> net = build_micro_cnn<double>(spec, micro, 0);
    std::size_t enumerated = 0;
    for (Parameter<double>* p : net.parameters()) enumerated += p->value.numel();
    j["enumerated_params"] = enumerated;
  }
  const std::string text = j.dump(2) + "\n";
  if (o.out.empty()) {
    out << text;
  } else {
    write_text(o.out, text);
    out << arch.name << " + " << spec.name() << ": " << report.total_params << " params, " << report.total_flops
        << " FLOPs -> " << o.out << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------- ratios

struct RatiosOptions {
  std::string checkpoint;
  DataOptions data;
  std::string group = "layer";
  bool concat = false;
  std::string mode = "eval";
  std::string out;
  std::uint64_t seed = 0;
  bool seed_given = false;
};

template <typename T>
int ratios_with(const RatiosOptions& o, std::ostream& out) {
  ModelDescriptor desc;
  Network<T> model = load_checkpoint<T>(o.checkpoint, &desc);
  if (model.exemplar_layers().empty()) {
    throw UsageError("checkpoint " + o.checkpoint + " (" + desc.norm.name() + ") has no EN layers");
  }
  const Grouping grouping = parse_grouping(o.group);
  if (o.mode != "eval" && o.mode != "train") throw UsageError("--mode must be eval or train");
  const std::uint64_t data_seed = o.seed_given ? o.seed : desc.seed;
  const Dataset data = o.data.load(desc.micro.classes, desc.micro.image_size, data_seed);
  const ForwardMode mode = o.mode == "eval" ? ForwardMode::eval() : ForwardMode::train_frozen();
  const auto records = record_ratios(model, data, desc.epoch, mode);

  prepare_out(o.out);
  const fs::path dir(o.out);
  write_records_csv((dir / "records.csv").string(), records);
  const std::string dataset = o.data.data.substr(0, o.data.data.find(':'));
  write_aggregates_json((dir / "aggregates.json").string(), aggregate(records, grouping, dataset));
  Json artifacts{{"records", "records.csv"}, {"aggregates", "aggregates.json"}};
  const std::size_t layers = model.exemplar_layers().size();
  if (o.concat) {
    write_vectors_csv((dir / "vectors.csv").string(), concat_all(records, layers));
    artifacts["vectors"] = "vectors.csv";
  }
  Json config;
  config["checkpoint"] = o.checkpoint;
  o.data.to_json(config);
  config["group"] = o.group;
  config["concat"] = o.concat;
  config["mode"] = o.mode;
  config["seed"] = data_seed;
  config["out"] = o.out;
  write_manifest(o.out, "ratios", config, data_seed, artifacts);
  out << records.size() << " ratio records (" << layers << " EN layers x " << data.size() << " samples) -> "
      << o.out << "\n";
  return kExitOk;
}

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Exemplar normalization laboratory", "exnorm"};
  app.require_subcommand(1);
  app.set_version_flag("--version", EXNORM_VERSION);
  const std::uint64_t seed = default_seed();
  std::string config_unused;

  TrainOptions train_o;
  train_o.seed = seed;
  CLI::App* train_cmd = app.add_subcommand("train", "train the micro-CNN and write history, checkpoint, manifest");
  train_o.norm.add(*train_cmd, "en");
  train_o.data.add(*train_cmd);
  train_cmd->add_option("--epochs", train_o.epochs)->capture_default_str();
  train_cmd->add_option("--batch", train_o.batch)->capture_default_str();
  train_cmd->add_option("--lr", train_o.lr, "initial learning rate")->capture_default_str();
  train_cmd->add_option("--momentum", train_o.momentum)->capture_default_str();
  train_cmd->add_option("--weight-decay", train_o.weight_decay)->capture_default_str();
  train_cmd->add_option("--warmup", train_o.warmup, "linear warmup epochs")->capture_default_str();
  train_cmd->add_option("--decay-epochs", train_o.decay_epochs, "comma-separated epochs that scale lr");
  train_cmd->add_option("--decay-factor", train_o.decay_factor)->capture_default_str();
  train_cmd->add_option("--seed", train_o.seed, "default from EXNORM_SEED")->capture_default_str();
  train_cmd->add_option("--precision", train_o.precision)->check(CLI::IsMember({"f32", "f64"}))->capture_default_str();
  train_cmd->add_option("--classes", train_o.classes)->capture_default_str();
  train_cmd->add_option("--image-size", train_o.image_size)->capture_default_str();
  train_cmd->add_option("--channels", train_o.channels, "three widths")->capture_default_str();
  train_cmd->add_flag("--record-ratios", train_o.record_ratios, "export per-epoch EN ratios on the training set");
  train_cmd->add_option("--out", train_o.out, "output directory")->required();
  train_cmd->add_option("--config", config_unused, "key=value file; flags take precedence");

  GradcheckOptions grad_o;
  grad_o.seed = seed;
  CLI::App* grad_cmd = app.add_subcommand("gradcheck", "central-difference check of one normalization layer");
  grad_cmd->add_option("--layer", grad_o.layer, "bn, in, ln, gn, gn:G, sn, en, en-a .. en-d")->capture_default_str();
  grad_cmd->add_option("--shape", grad_o.shape, "N,C,H,W")->capture_default_str();
  grad_cmd->add_option("--seed", grad_o.seed)->capture_default_str();
  grad_cmd->add_option("--r", grad_o.r)->capture_default_str();
  grad_cmd->add_option("--pi", grad_o.pi)->capture_default_str();
  grad_cmd->add_option("--pool", grad_o.pool)->capture_default_str();
  grad_cmd->add_option("--step", grad_o.step, "finite-difference step")->capture_default_str();
  grad_cmd->add_option("--coords", grad_o.coords, "max coordinates per parameter")->capture_default_str();
  grad_cmd->add_option("--tolerance", grad_o.tolerance)->capture_default_str();
  grad_cmd->add_option("--config", config_unused);

  CountOptions count_o;
  CLI::App* count_cmd = app.add_subcommand("count", "parameter and FLOP report as JSON");
  count_o.norm.add(*count_cmd, "bn");
  count_cmd->add_option("--arch", count_o.arch, "micro or resnet50")->capture_default_str();
  count_cmd->add_option("--input", count_o.input, "input resolution (default: declared)");
  count_cmd->add_option("--classes", count_o.classes)->capture_default_str();
  count_cmd->add_option("--image-size", count_o.image_size)->capture_default_str();
  count_cmd->add_option("--channels", count_o.channels)->capture_default_str();
  count_cmd->add_option("--out", count_o.out, "write JSON here instead of stdout");
  count_cmd->add_option("--config", config_unused);

  RatiosOptions ratios_o;
  ratios_o.seed = seed;
  CLI::App* ratios_cmd = app.add_subcommand("ratios", "record and export EN ratios from a checkpoint");
  ratios_cmd->add_option("--checkpoint", ratios_o.checkpoint)->required();
  ratios_o.data.add(*ratios_cmd);
  ratios_cmd->add_option("--group", ratios_o.group, "layer, class, dataset or epoch")->capture_default_str();
  ratios_cmd->add_flag("--concat", ratios_o.concat, "also export per-sample concatenated vectors");
  ratios_cmd->add_option("--mode", ratios_o.mode, "eval or train")->capture_default_str();
  ratios_cmd->add_option("--seed", ratios_o.seed, "synthetic data seed (default: checkpoint seed)");
  ratios_cmd->add_option("--out", ratios_o.out)->required();
  ratios_cmd->add_option("--config", config_unused);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  count_o.r_given = count_cmd->count("--r") > 0;
  ratios_o.seed_given = ratios_cmd->count("--seed") > 0;

  if (*train_cmd) return train_o.precision == "f32" ? train_with<float>(train_o, out) : train_with<double>(train_o, out);
  if (*grad_cmd) return run_gradcheck(grad_o, out);
  if (*count_cmd) return run_count(count_o, out);
  const std::string precision = read_checkpoint_descriptor(ratios_o.checkpoint).precision;
  return precision == "f32" ? ratios_with<float>(ratios_o, out) : ratios_with<double>(ratios_o, out);
}

}  // namespace

std::vector<std::string> merge_config_file(const std::vector<std::string>& args, const std::string& path) {
  std::ifstream f(path);
  if (!f) throw UsageError("cannot read config file " + path);
  const auto given = [&args](const std::string& flag) {
    for (const auto& a : args)
      if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
    return false;
  };
  const auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  std::vector<std::string> out = args;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError(path + ":" + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    const std::string flag = "--" + key;
    if (key.empty() || given(flag)) continue;
    if (value == "true") {
      out.push_back(flag);
    } else if (value != "false" && !value.empty()) {
      out.push_back(flag);
      out.push_back(value);
    }
  }
  return out;
}

int run_cli(const std::vector<std::string>& raw, std::ostream& out, std::ostream& err) {
  try {
    std::vector<std::string> args = raw;
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (raw[i] == "--config" && i + 1 < raw.size()) args = merge_config_file(args, raw[i + 1]);
      if (raw[i].rfind("--config=", 0) == 0) args = merge_config_file(args, raw[i].substr(9));
    }
    std::vector<const char*> argv{"exnorm"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\nRun with --help for usage.\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, out, err);
}

}  // namespace exnorm
