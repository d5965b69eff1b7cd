// SPDX-License-Identifier: Apache-2.0
#include "scenediff/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "scenediff/errors.hpp"

namespace scenediff {
namespace {

constexpr char kMagic[8] = {'S', 'D', 'I', 'F', 'C', 'K', 'P', 'T'};

template <typename U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(const std::string& b) : bytes_(b) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      v |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }

  std::string get_bytes(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw CheckpointError("truncated checkpoint");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  std::string out(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, ckpt.metadata.size());
  out += ckpt.metadata;
  put_le<std::uint64_t>(out, ckpt.tensors.size());
  for (const auto& [name, t] : ckpt.tensors) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    out.push_back(static_cast<char>(ckpt.dtype));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.ndim()));
    for (auto e : t.shape()) put_le<std::uint64_t>(out, static_cast<std::uint64_t>(e));
    for (double v : t.data()) {
      if (ckpt.dtype == DType::kF64)
        put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
      else
        put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
  }
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.get_bytes(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic)))
    throw CheckpointError("not a checkpoint file (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw CheckpointError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  Checkpoint ckpt;
  ckpt.metadata = r.get_bytes(r.get<std::uint64_t>());
  const auto count = r.get<std::uint64_t>();
  bool first = true;
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = r.get_bytes(r.get<std::uint32_t>());
    const auto dtype = r.get<std::uint8_t>();
    if (dtype > 1) throw CheckpointError("unknown dtype code for " + name);
    if (first) ckpt.dtype = static_cast<DType>(dtype);
    first = false;
    Shape shape(r.get<std::uint32_t>());
    for (auto& e : shape) e = static_cast<std::int64_t>(r.get<std::uint64_t>());
    std::vector<double> data(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& v : data) {
      if (dtype == 1)
        v = std::bit_cast<double>(r.get<std::uint64_t>());
      else
        v = static_cast<double>(std::bit_cast<float>(r.get<std::uint32_t>()));
    }
    ckpt.tensors.emplace(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  if (!r.done()) throw CheckpointError("trailing bytes after checkpoint entries");
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write checkpoint " + path);
  const std::string bytes = encode_checkpoint(ckpt);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return decode_checkpoint(ss.str());
}

}  // namespace scenediff
