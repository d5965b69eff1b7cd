// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include "scenediff/tensor.hpp"

namespace scenediff {

// 8-bit RGB PNG. Values in [-1, 1] map to round(127.5 * (x + 1)), clamped.
void write_png(const std::string& path, const Tensor& image);
std::string encode_png(const Tensor& image);
// Inverse mapping v / 127.5 - 1; result is [H, W, 3].
Tensor read_png(const std::string& path);

std::uint8_t to_byte(double x);

}  // namespace scenediff
