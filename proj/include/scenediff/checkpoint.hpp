// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "scenediff/tensor.hpp"

namespace scenediff {

// Binary container mapping parameter paths to tensors.
//
//   magic     8 bytes  "SDIFCKPT"
//   version   u32      kCheckpointVersion
//   meta_len  u64      followed by meta_len bytes of UTF-8 JSON
//   count     u64      number of entries, in lexicographic path order
//   entry:
//     name_len u32, name bytes
//     dtype    u8      0 = f32, 1 = f64
//     ndim     u32, then ndim x i64 extents
//     data     numel x (4 or 8) bytes
//
// All integers and floats are little-endian. Tensors are held as f64 in
// memory; f32 entries are widened on load and narrowed on save.
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class DType : std::uint8_t { kF32 = 0, kF64 = 1 };

struct Checkpoint {
  std::map<std::string, Tensor> tensors;
  std::string metadata = "{}";
  DType dtype = DType::kF64;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace scenediff
