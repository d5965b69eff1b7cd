// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace scenediff {

// Closed world of the caption grammar:
//   caption  := np (relation np)*
//   np       := "a" color shape
//   relation := "left of" | "right of" | "above" | "below"
namespace grammar {
inline constexpr std::array<std::string_view, 3> kCategories = {"circle", "square", "triangle"};
inline constexpr std::array<std::string_view, 3> kColors = {"red", "green", "blue"};
inline constexpr std::array<std::string_view, 4> kPredicates = {"left of", "right of", "above", "below"};

// -1 when absent.
int category_id(std::string_view name);
int color_id(std::string_view name);
int predicate_id(std::string_view name);
}  // namespace grammar

struct SceneObject {
  std::string category;
  std::vector<std::string> attributes;
  bool operator==(const SceneObject&) const = default;
};

struct Triple {
  std::int64_t subject = 0;
  std::string predicate;
  std::int64_t object = 0;
  bool operator==(const Triple&) const = default;
};

// Objects are identified by their index in `objects`.
struct SceneGraph {
  std::vector<SceneObject> objects;
  std::vector<Triple> edges;
  bool operator==(const SceneGraph&) const = default;
};

// Lowercased words with leading/trailing punctuation stripped; interior
// punctuation (e.g. hyphens) is kept.
std::vector<std::string> split_words(std::string_view text);

// Throws ParseError naming the first offending token.
SceneGraph parse_caption(std::string_view caption);

// Canonical caption for a chain graph (edge k links object k to k + 1).
std::string caption_of(const SceneGraph& graph);

// Throws SchemaError on an invariant violation.
void validate(const SceneGraph& graph);

// {"objects":[{"category":str,"attributes":[str]}],"edges":[{"s":int,"p":str,"o":int}]}
std::string serialize_scene_graph(const SceneGraph& graph);
SceneGraph load_scene_graph(std::string_view document);

}  // namespace scenediff
