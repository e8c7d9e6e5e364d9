#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "iiao/model.hpp"

// Layout (all integers and floats little-endian):
//   "IIAOCKPT" | u32 version | i32 epoch | u64 len | config JSON (len bytes)
//   u64 count | count x { u32 name_len | name | u32 rank | rank x u64 dim |
//                         numel x f64 }

namespace iiao::model {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'I', 'I', 'A', 'O', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void u32(std::uint32_t v) { le(v); }
  void u64(std::uint64_t v) { le(v); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }

 private:
  template <typename U>
  void le(U v) {
    unsigned char buf[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
    bytes(buf, sizeof buf);
  }
  std::ostream& out_;
};

class Reader {
 public:
  Reader(std::istream& in, std::string path) : in_(in), path_(std::move(path)) {}
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw std::runtime_error(path_ + ": truncated checkpoint");
  }
  std::uint32_t u32() { return le<std::uint32_t>(); }
  std::uint64_t u64() { return le<std::uint64_t>(); }
  double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }

 private:
  template <typename U>
  U le() {
    unsigned char buf[sizeof(U)];
    bytes(buf, sizeof buf);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
    return v;
  }
  std::istream& in_;
  std::string path_;
};

}  // namespace

std::string config_to_json(const ModelConfig& cfg) {
  json j;
  j["base_channels"] = cfg.base_channels;
  j["reduction_ratio"] = cfg.reduction_ratio;
  j["iiao_stack"] = cfg.iiao_stack;
  j["encoder_widths"] = cfg.encoder_widths;
  json kernels = json::array();
  for (auto [a, b] : cfg.asp_kernels) kernels.push_back({a, b});
  j["asp_kernels"] = kernels;
  j["encoder_init"] = cfg.encoder_init == EncoderInit::he ? "he" : "gaussian";
  j["init_std"] = cfg.init_std;
  j["seed"] = cfg.seed;
  return j.dump();
}

ModelConfig config_from_json(const std::string& text) {
  const json j = json::parse(text);
  ModelConfig cfg;
  cfg.base_channels = j.at("base_channels").get<int>();
  cfg.reduction_ratio = j.at("reduction_ratio").get<int>();
  cfg.iiao_stack = j.at("iiao_stack").get<int>();
  cfg.encoder_widths = j.at("encoder_widths").get<std::vector<int>>();
  cfg.asp_kernels.clear();
  for (const auto& k : j.at("asp_kernels")) cfg.asp_kernels.emplace_back(k.at(0).get<int>(), k.at(1).get<int>());
  cfg.encoder_init = j.at("encoder_init").get<std::string>() == "he" ? EncoderInit::he : EncoderInit::gaussian;
  cfg.init_std = j.at("init_std").get<double>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  return cfg;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  // write-then-rename; an interrupted save leaves the previous file intact
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    Writer w(out);
    w.bytes(kMagic, sizeof kMagic);
    w.u32(kVersion);
    w.u32(static_cast<std::uint32_t>(ckpt.epoch));
    const std::string cfg = config_to_json(ckpt.config);
    w.u64(cfg.size());
    w.bytes(cfg.data(), cfg.size());
    w.u64(ckpt.params.size());
    for (const auto& [name, t] : ckpt.params) {
      w.u32(static_cast<std::uint32_t>(name.size()));
      w.bytes(name.data(), name.size());
      w.u32(static_cast<std::uint32_t>(t.rank()));
      for (std::size_t d : t.shape()) w.u64(d);
      for (double v : t.values()) w.f64(v);
    }
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  Reader r(in, path.string());
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw std::runtime_error(path.string() + ": not a checkpoint file");
  const std::uint32_t version = r.u32();
  if (version != kVersion)
    throw std::runtime_error(path.string() + ": unsupported checkpoint version " + std::to_string(version));

  Checkpoint ckpt;
  ckpt.epoch = static_cast<int>(r.u32());
  const std::uint64_t cfg_len = r.u64();
  if (cfg_len > (1u << 20)) throw std::runtime_error(path.string() + ": corrupt config length");
  std::string cfg(cfg_len, '\0');
  r.bytes(cfg.data(), cfg.size());
  ckpt.config = config_from_json(cfg);
  const std::uint64_t count = r.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name(std::min<std::uint32_t>(r.u32(), 257), '\0');
    r.bytes(name.data(), name.size());
    const std::uint32_t rank = r.u32();
    if (name.size() > 256 || rank > 8) throw std::runtime_error(path.string() + ": corrupt parameter header");
    Shape shape(rank);
    for (auto& d : shape) d = r.u64();
    if (shape_numel(shape) > (std::size_t{1} << 32))
      throw std::runtime_error(path.string() + ": corrupt parameter shape");
    std::vector<double> values(shape_numel(shape));
    for (double& v : values) v = r.f64();
    ckpt.params.emplace(std::move(name), Tensor(std::move(shape), std::move(values)));
  }

  const auto expected = param_shapes(ckpt.config);
  for (const auto& [name, shape] : expected) {
    const auto it = ckpt.params.find(name);
    if (it == ckpt.params.end())
      throw std::runtime_error(path.string() + ": missing parameter " + name);
    if (it->second.shape() != shape)
      throw std::runtime_error(path.string() + ": parameter " + name + " has shape " +
                               shape_str(it->second.shape()) + ", expected " + shape_str(shape));
  }
  return ckpt;
}

}  // namespace iiao::model
