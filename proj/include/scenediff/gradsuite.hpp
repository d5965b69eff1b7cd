// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace scenediff {

struct LayerGradCheck {
  std::string layer;
  double max_rel_error = 0;
  double tolerance = 0;
  std::string worst;  // tensor with the largest error
  bool passed() const { return max_rel_error < tolerance; }
};

// Central-difference checks of every exported layer on small random
// instances: layer_norm, gelu, cosine_attention, swin_block (plain and
// shifted), patch_merge, patch_expand, dblock, ublock, graphconv, and the
// full 8x8 UNet end to end. Per-layer tolerance 1e-4, end to end 1e-3.
std::vector<LayerGradCheck> gradient_suite(std::uint64_t seed);

}  // namespace scenediff
