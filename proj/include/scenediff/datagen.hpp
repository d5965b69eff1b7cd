// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "scenediff/rng.hpp"
#include "scenediff/scenegraph.hpp"
#include "scenediff/tensor.hpp"

namespace scenediff {

struct PlacedObject {
  std::string shape;
  std::string color;
  std::int64_t row = 0;  // cell on the 2x2 layout grid
  std::int64_t col = 0;
};

struct SceneSpec {
  std::vector<PlacedObject> objects;
  std::vector<Triple> relations;
};

// Canonical layout of a chain graph: each relation places the next object
// one cell away from the previous one ("a left of b" puts b one column to
// the right), and the result is translated to the top-left corner. Throws
// SchemaError when the chain does not fit the 2x2 grid without collisions.
SceneSpec layout_of(const SceneGraph& graph);

// Anti-aliased raster (4x4 supersampling) on a -1 background; pure RGB colors.
Tensor render(const SceneSpec& spec, std::int64_t resolution = 32);

// Every caption the generator can emit, in a fixed order.
std::vector<std::string> all_captions();

struct Sample {
  std::string caption;
  SceneGraph graph;
  SceneSpec spec;
  std::vector<Tensor> images;  // 8, 16, 32 px
};

inline constexpr std::int64_t kLadder[3] = {8, 16, 32};

// n distinct captions drawn deterministically from the seed (object count
// uniform in {1, 2, 3}), rendered at 32 px and box-downsampled to 16 and 8.
std::vector<Sample> generate(std::uint64_t seed, std::int64_t n);
Sample make_sample(const std::string& caption);

struct Dataset {
  std::uint64_t seed = 0;
  std::vector<Sample> train;
  std::vector<Sample> heldout;
};

// Writes PNGs under dir/images and dir/manifest.json; the last
// `heldout` samples form the held-out split.
void write_dataset(const std::string& dir, const std::vector<Sample>& samples, std::int64_t heldout,
                   std::uint64_t seed);
// Images come back through PNG quantization.
Dataset load_dataset(const std::string& dir);

}  // namespace scenediff
