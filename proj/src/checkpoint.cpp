#include "flanet/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

namespace flanet {
namespace {

constexpr char kMagic[8] = {'F', 'L', 'A', 'N', 'E', 'T', 'C', 'K'};

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot write checkpoint " + path.string());
  }
  template <typename P>
  void pod(const P& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(P));
  }
  void bytes(const void* data, size_t n) { out_.write(static_cast<const char*>(data), n); }
  void string(const std::string& s) {
    pod<uint64_t>(s.size());
    bytes(s.data(), s.size());
  }
  void floats(const Tensor<float>& t) { bytes(t.data(), sizeof(float) * t.numel()); }
  void finish(const std::filesystem::path& path) {
    out_.flush();
    if (!out_) throw IoError("failed writing checkpoint " + path.string());
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw IoError("cannot open checkpoint " + path.string());
  }
  template <typename P>
  P pod() {
    P v{};
    bytes(&v, sizeof(P));
    return v;
  }
  void bytes(void* data, size_t n) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (!in_) throw IoError("truncated checkpoint " + path_.string());
  }
  std::string string() {
    const auto n = pod<uint64_t>();
    if (n > (1u << 24)) throw IoError("corrupt string length in " + path_.string());
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  Tensor<float> floats(const Shape& shape) {
    Tensor<float> t(shape);
    bytes(t.data(), sizeof(float) * t.numel());
    return t;
  }

 private:
  std::ifstream in_;
  std::filesystem::path path_;
};

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  Writer w(path);
  w.bytes(kMagic, sizeof(kMagic));
  w.pod<uint32_t>(kCheckpointVersion);
  w.string(format_config(ckpt.config));
  w.pod<int64_t>(ckpt.epoch);
  w.pod<int64_t>(ckpt.step);
  w.pod<double>(ckpt.best_val_dice);
  w.pod<uint32_t>(static_cast<uint32_t>(ckpt.parameters.size()));
  for (const auto& p : ckpt.parameters) {
    w.pod<uint32_t>(static_cast<uint32_t>(p.name.size()));
    w.bytes(p.name.data(), p.name.size());
    w.pod<uint32_t>(static_cast<uint32_t>(p.value.rank()));
    for (int64_t d : p.value.shape()) w.pod<int64_t>(d);
    w.floats(p.value);
  }
  w.pod<uint8_t>(ckpt.optimizer ? 1 : 0);
  if (ckpt.optimizer) {
    const auto& opt = *ckpt.optimizer;
    if (opt.first_moment.size() != ckpt.parameters.size() ||
        opt.second_moment.size() != ckpt.parameters.size()) {
      throw ShapeError("optimizer state does not match the parameter list");
    }
    w.pod<int64_t>(opt.step);
    for (size_t k = 0; k < ckpt.parameters.size(); ++k) {
      w.floats(opt.first_moment[k]);
      w.floats(opt.second_moment[k]);
    }
  }
  w.finish(path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("checkpoint not found: " + path.string());
  Reader r(path);
  char magic[8];
  r.bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError("not a checkpoint file: " + path.string());
  }
  if (const auto version = r.pod<uint32_t>(); version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  try {
    ckpt.config = parse_config(r.string());
  } catch (const ConfigError& e) {
    throw IoError("checkpoint config is invalid: " + std::string(e.what()));
  }
  ckpt.epoch = r.pod<int64_t>();
  ckpt.step = r.pod<int64_t>();
  ckpt.best_val_dice = r.pod<double>();
  const auto n = r.pod<uint32_t>();
  for (uint32_t k = 0; k < n; ++k) {
    NamedTensor p;
    p.name.resize(r.pod<uint32_t>());
    r.bytes(p.name.data(), p.name.size());
    const auto rank = r.pod<uint32_t>();
    if (rank > 8) throw IoError("corrupt tensor rank in " + path.string());
    Shape shape(rank);
    for (auto& d : shape) {
      d = r.pod<int64_t>();
      if (d < 0 || d > (int64_t{1} << 32)) throw IoError("corrupt tensor shape in " + path.string());
    }
    p.value = r.floats(shape);
    ckpt.parameters.push_back(std::move(p));
  }
  if (r.pod<uint8_t>()) {
    AdamState<float> opt;
    opt.step = r.pod<int64_t>();
    for (const auto& p : ckpt.parameters) {
      opt.first_moment.push_back(r.floats(p.value.shape()));
      opt.second_moment.push_back(r.floats(p.value.shape()));
    }
    ckpt.optimizer = std::move(opt);
  }
  return ckpt;
}

std::vector<NamedTensor> snapshot_parameters(const ParamStore<float>& params) {
  std::vector<NamedTensor> out;
  for (const auto& e : params.entries()) out.push_back({e.name, e.var.value()});
  return out;
}

void restore_parameters(ParamStore<float>& params, const std::vector<NamedTensor>& values) {
  std::map<std::string, const Tensor<float>*> by_name;
  for (const auto& v : values) by_name[v.name] = &v.value;
  for (const auto& e : params.entries()) {
    auto it = by_name.find(e.name);
    if (it == by_name.end()) throw IoError("checkpoint lacks parameter " + e.name);
    require_same_shape(it->second->shape(), e.var.shape(), e.name.c_str());
    Var<float> v = e.var;
    v.mutable_value() = *it->second;
  }
}

}  // namespace flanet
