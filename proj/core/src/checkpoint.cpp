#include "facefuse/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "facefuse/error.hpp"
#include "facefuse/image_io.hpp"

namespace facefuse::checkpoint {

namespace {

constexpr char kMagic[4] = {'F', 'F', 'C', 'K'};

std::uint64_t fnv1a(std::span<const std::uint8_t> data) {
  std::uint64_t h = 1469598103934665603ULL;
  for (std::uint8_t b : data) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  return h;
}

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.insert(out_.end(), s.begin(), s.end());
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  std::vector<std::uint8_t>& bytes() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> d) : d_(d) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(d_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(d_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::size_t remaining() const { return d_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (d_.size() - pos_ < n) throw CorruptData("checkpoint is truncated");
  }
  std::span<const std::uint8_t> d_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode(const Checkpoint& ckpt) {
  Writer w;
  w.bytes().insert(w.bytes().end(), kMagic, kMagic + 4);
  w.u32(kVersion);
  w.str(ckpt.kind);
  w.str(ckpt.config_json);
  w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    w.str(name);
    const auto& s = t.shape();
    for (int d : {s.n, s.c, s.h, s.w}) w.u32(static_cast<std::uint32_t>(d));
    for (float v : t.values()) w.f32(v);
  }
  w.u64(fnv1a(w.bytes()));
  return std::move(w.bytes());
}

Checkpoint decode(std::span<const std::uint8_t> data) {
  if (data.size() < 16 || std::memcmp(data.data(), kMagic, 4) != 0) {
    throw UnsupportedFormat("missing checkpoint signature");
  }
  const auto body = data.first(data.size() - 8);
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i) stored |= static_cast<std::uint64_t>(data[body.size() + i]) << (8 * i);
  Reader r(body.subspan(4));
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw UnsupportedFormat("unsupported checkpoint version " + std::to_string(version));
  }
  if (stored != fnv1a(body)) throw CorruptData("checkpoint checksum mismatch");
  Checkpoint ckpt;
  ckpt.kind = r.str();
  ckpt.config_json = r.str();
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str();
    nn::Shape s;
    s.n = static_cast<int>(r.u32());
    s.c = static_cast<int>(r.u32());
    s.h = static_cast<int>(r.u32());
    s.w = static_cast<int>(r.u32());
    if (s.size() * 4 > r.remaining()) throw CorruptData("checkpoint tensor exceeds file size");
    nn::Tensor<float> t(s);
    for (std::size_t k = 0; k < t.size(); ++k) t[k] = r.f32();
    ckpt.tensors.emplace_back(std::move(name), std::move(t));
  }
  if (r.remaining() != 0) throw CorruptData("trailing bytes after checkpoint tensors");
  return ckpt;
}

void save(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file(path, encode(ckpt));
}

Checkpoint load(const std::filesystem::path& path) { return decode(read_file(path)); }

Checkpoint capture(std::string kind, std::string config_json,
                   const nn::ParameterSet<float>& params) {
  Checkpoint ckpt{std::move(kind), std::move(config_json), {}};
  for (const auto& [name, var] : params.entries()) ckpt.tensors.emplace_back(name, var.value());
  return ckpt;
}

void restore(const Checkpoint& ckpt, nn::ParameterSet<float>& params) {
  const auto& entries = params.entries();
  if (entries.size() != ckpt.tensors.size()) {
    throw CorruptData("checkpoint holds " + std::to_string(ckpt.tensors.size()) +
                      " tensors, network expects " + std::to_string(entries.size()));
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& [name, tensor] = ckpt.tensors[i];
    auto var = entries[i].second;
    if (name != entries[i].first || !(tensor.shape() == var.shape())) {
      throw CorruptData("checkpoint tensor '" + name + "' " + tensor.shape().str() +
                        " does not match parameter '" + entries[i].first + "' " +
                        var.shape().str());
    }
    var.mutable_value() = tensor;
  }
}

}  // namespace facefuse::checkpoint
