#include "onfire/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "onfire/errors.hpp"
#include "onfire/network.hpp"

namespace onfire {

namespace {

constexpr std::string_view kMagic = "ONFIRE01";
constexpr std::string_view kEpochTensor = "meta/epoch";
constexpr std::string_view kHashTensor = "meta/config_hash";

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_string(std::string& out, std::string_view s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.append(s);
}

void put_tensor(std::string& out, std::string_view name, const Tensor& t) {
  put_string(out, name);
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (int e : t.shape()) put_u32(out, static_cast<std::uint32_t>(e));
  for (float v : t.values()) put_u32(out, std::bit_cast<std::uint32_t>(v));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4, "u32");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }
  std::string string() {
    const std::uint32_t n = u32();
    need(n, "string");
    std::string s(bytes_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::string_view raw(std::size_t n) {
    need(n, "magic");
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("checkpoint truncated while reading ") + what + " at byte " +
                        std::to_string(pos_));
    }
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor* Checkpoint::find(std::string_view name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  std::string out(kMagic);
  put_string(out, ckpt.architecture);
  put_u32(out, static_cast<std::uint32_t>(ckpt.tensors.size() + 2));
  for (const auto& [name, t] : ckpt.tensors) {
    if (name == kEpochTensor || name == kHashTensor) {
      throw ContractError("checkpoint tensor name '" + name + "' is reserved");
    }
    put_tensor(out, name, t);
  }
  put_tensor(out, kEpochTensor, Tensor({1}, static_cast<float>(ckpt.epoch)));
  const auto lo = static_cast<std::uint32_t>(ckpt.config_hash);
  const auto hi = static_cast<std::uint32_t>(ckpt.config_hash >> 32);
  put_tensor(out, kHashTensor,
             Tensor({2}, {std::bit_cast<float>(lo), std::bit_cast<float>(hi)}));
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (bytes.size() < kMagic.size() || r.raw(kMagic.size()) != kMagic) {
    throw FormatError("not a checkpoint: magic 'ONFIRE01' missing");
  }
  Checkpoint ckpt;
  ckpt.architecture = r.string();
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.string();
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 8) {
      throw FormatError("tensor '" + name + "' has unsupported rank " + std::to_string(rank));
    }
    Shape shape;
    std::uint64_t elements = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      const std::uint32_t e = r.u32();
      if (e == 0 || e > 0x7fffffffu) {
        throw FormatError("tensor '" + name + "' has invalid extent " + std::to_string(e));
      }
      shape.push_back(static_cast<int>(e));
      elements *= e;
    }
    if (elements * 4 > r.remaining()) {
      throw FormatError("checkpoint truncated inside tensor '" + name + "'");
    }
    std::vector<float> values(static_cast<std::size_t>(elements));
    for (float& v : values) v = std::bit_cast<float>(r.u32());
    Tensor t(std::move(shape), std::move(values));
    if (name == kEpochTensor) {
      ckpt.epoch = static_cast<int>(t[0]);
    } else if (name == kHashTensor) {
      if (t.size() != 2) throw FormatError("malformed config hash tensor");
      ckpt.config_hash = static_cast<std::uint64_t>(std::bit_cast<std::uint32_t>(t[0])) |
                         (static_cast<std::uint64_t>(std::bit_cast<std::uint32_t>(t[1])) << 32);
    } else {
      ckpt.tensors.emplace_back(std::move(name), std::move(t));
    }
  }
  if (!r.done()) throw FormatError("checkpoint has trailing bytes");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing checkpoint '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint '" + path.string() + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

Checkpoint capture(const Network& network, int epoch, std::uint64_t config_hash) {
  Checkpoint ckpt;
  ckpt.architecture = network.name();
  ckpt.epoch = epoch;
  ckpt.config_hash = config_hash;
  for (const Parameter* p : network.parameters()) ckpt.tensors.emplace_back(p->name, p->value);
  return ckpt;
}

void restore(Network& network, const Checkpoint& ckpt) {
  const auto params = network.parameters();
  if (params.size() != ckpt.tensors.size()) {
    throw ContractError("checkpoint holds " + std::to_string(ckpt.tensors.size()) +
                        " tensors but network '" + network.name() + "' has " +
                        std::to_string(params.size()));
  }
  for (Parameter* p : params) {
    const Tensor* t = ckpt.find(p->name);
    if (!t) throw ContractError("checkpoint lacks tensor '" + p->name + "'");
    if (t->shape() != p->value.shape()) {
      throw ContractError("tensor '" + p->name + "' has shape " + to_string(t->shape()) +
                          " in the checkpoint but " + to_string(p->value.shape()) +
                          " in the network");
    }
  }
  for (Parameter* p : params) p->value = *ckpt.find(p->name);
}

}  // namespace onfire
