#include "exnorm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <vector>

#include "json.hpp"

namespace exnorm {

namespace {

constexpr char kMagic[8] = {'E', 'X', 'N', 'O', 'R', 'M', 'C', 'K'};
constexpr std::uint64_t kVersion = 1;

void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_f64(std::vector<unsigned char>& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

void put_bytes(std::vector<unsigned char>& out, const std::string& s) {
  put_u64(out, s.size());
  out.insert(out.end(), s.begin(), s.end());
}

class Reader {
 public:
  Reader(std::vector<unsigned char> bytes, std::string path) : bytes_(std::move(bytes)), path_(std::move(path)) {}

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint64_t n = u64();
    need(n);
    std::string s(bytes_.begin() + static_cast<long>(pos_), bytes_.begin() + static_cast<long>(pos_ + n));
    pos_ += n;
    return s;
  }
  void magic() {
    need(sizeof kMagic);
    if (std::memcmp(bytes_.data(), kMagic, sizeof kMagic) != 0) fail("not a checkpoint (bad magic)");
    pos_ += sizeof kMagic;
  }
  bool done() const { return pos_ == bytes_.size(); }
  [[noreturn]] void fail(const std::string& what) const { throw std::runtime_error(path_ + ": " + what); }

 private:
  void need(std::uint64_t n) const {
    if (n > bytes_.size() - pos_) fail("truncated checkpoint");
  }
  std::vector<unsigned char> bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

Reader open_reader(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint " + path);
  Reader r({std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()}, path);
  r.magic();
  const std::uint64_t version = r.u64();
  if (version != kVersion) r.fail("unsupported checkpoint version " + std::to_string(version));
  return r;
}

}  // namespace

std::string descriptor_json(const ModelDescriptor& d) {
  nlohmann::ordered_json j;
  j["arch"] = "micro";
  j["in_channels"] = d.micro.in_channels;
  j["image_size"] = d.micro.image_size;
  j["channels"] = d.micro.channels;
  j["classes"] = d.micro.classes;
  nlohmann::ordered_json norm;
  norm["name"] = d.norm.name();
  norm["single"] = d.norm.single.name();
  std::vector<std::string> pool;
  for (const auto& k : d.norm.en.pool) pool.push_back(k.name());
  norm["pool"] = pool;
  norm["r"] = d.norm.en.reduction;
  norm["pi"] = d.norm.en.expansion;
  norm["eps"] = d.norm.en.eps;
  norm["variant"] = variant_name(d.norm.en.variant());
  norm["sn_tied"] = d.norm.sn_tied;
  norm["momentum"] = d.norm.momentum;
  j["norm"] = norm;
  j["precision"] = d.precision;
  j["seed"] = d.seed;
  j["epoch"] = d.epoch;
  return j.dump();
}

ModelDescriptor descriptor_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  if (j.at("arch") != "micro") throw std::invalid_argument("checkpoint architecture must be micro");
  ModelDescriptor d;
  d.micro.in_channels = j.at("in_channels");
  d.micro.image_size = j.at("image_size");
  d.micro.channels = j.at("channels").get<std::array<std::size_t, 3>>();
  d.micro.classes = j.at("classes");
  const auto& n = j.at("norm");
  const std::string name = n.at("name");
  d.norm = NormSpec::parse(name.rfind("en", 0) == 0 ? "en" : name);
  d.norm.single = NormalizerKind::parse(n.at("single").get<std::string>());
  d.norm.en.pool.clear();
  for (const auto& k : n.at("pool")) d.norm.en.pool.push_back(NormalizerKind::parse(k.get<std::string>()));
  d.norm.en.reduction = n.at("r");
  d.norm.en.expansion = n.at("pi");
  d.norm.en.eps = n.at("eps");
  d.norm.en.set_variant(parse_variant(n.at("variant")));
  d.norm.sn_tied = n.at("sn_tied");
  d.norm.momentum = n.at("momentum");
  d.precision = j.at("precision");
  d.seed = j.at("seed");
  d.epoch = j.at("epoch");
  return d;
}

template <typename T>
void save_checkpoint(const std::string& path, Network<T>& model, const ModelDescriptor& descriptor) {
  std::vector<unsigned char> out(std::begin(kMagic), std::end(kMagic));
  put_u64(out, kVersion);
  put_bytes(out, descriptor_json(descriptor));
  const auto params = model.parameters();
  const auto buffers = model.buffers();
  put_u64(out, params.size() + buffers.size());
  const auto entry = [&out](const std::string& name, std::uint64_t kind, const Tensor<T>& t) {
    put_bytes(out, name);
    put_u64(out, kind);
    put_u64(out, t.rank());
    for (std::size_t d : t.shape().dims()) put_u64(out, d);
    put_u64(out, t.numel());
    for (T v : t.data()) put_f64(out, double(v));
  };
  for (const Parameter<T>* p : params) entry(p->name, 0, p->value);
  for (const Buffer<T>& b : buffers) entry(b.name, 1, *b.value);

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("write failed for " + path);
}

ModelDescriptor read_checkpoint_descriptor(const std::string& path) {
  Reader r = open_reader(path);
  try {
    return descriptor_from_json(r.str());
  } catch (const nlohmann::json::exception& e) {
    r.fail(std::string("bad descriptor: ") + e.what());
  }
}

template <typename T>
Network<T> load_checkpoint(const std::string& path, ModelDescriptor* descriptor) {
  Reader r = open_reader(path);
  ModelDescriptor d;
  try {
    d = descriptor_from_json(r.str());
  } catch (const nlohmann::json::exception& e) {
    r.fail(std::string("bad descriptor: ") + e.what());
  }
  Network<T> model = build_micro_cnn<T>(d.norm, d.micro, d.seed);
  struct Slot {
    std::string name;
    std::uint64_t kind;
    Tensor<T>* value;
  };
  std::vector<Slot> slots;
  for (Parameter<T>* p : model.parameters()) slots.push_back({p->name, 0, &p->value});
  for (const Buffer<T>& b : model.buffers()) slots.push_back({b.name, 1, b.value});

  const std::uint64_t count = r.u64();
  if (count != slots.size()) {
    r.fail("holds " + std::to_string(count) + " entries, model declares " + std::to_string(slots.size()));
  }
  for (const Slot& s : slots) {
    const std::string name = r.str();
    const std::uint64_t kind = r.u64();
    if (name != s.name || kind != s.kind) r.fail("entry '" + name + "' where '" + s.name + "' was expected");
    const std::uint64_t rank = r.u64();
    if (rank != s.value->rank()) r.fail("entry '" + name + "' has rank " + std::to_string(rank));
    for (std::size_t i = 0; i < rank; ++i)
      if (r.u64() != s.value->dim(i)) r.fail("entry '" + name + "' shape differs from " + s.value->shape().str());
    const std::uint64_t numel = r.u64();
    if (numel != s.value->numel()) r.fail("entry '" + name + "' element count mismatch");
    for (T& v : s.value->data()) v = static_cast<T>(r.f64());
  }
  if (!r.done()) r.fail("trailing bytes after last entry");
  if (descriptor) *descriptor = d;
  return model;
}

template void save_checkpoint(const std::string&, Network<float>&, const ModelDescriptor&);
template void save_checkpoint(const std::string&, Network<double>&, const ModelDescriptor&);
template Network<float> load_checkpoint(const std::string&, ModelDescriptor*);
template Network<double> load_checkpoint(const std::string&, ModelDescriptor*);

}  // namespace exnorm
